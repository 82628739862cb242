mod commands;
mod config;
mod error;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cbchain",
    version,
    about = "Consensusless blockchain simulator and safety analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML file whose keys mirror the run's parameter names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its report.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write a line-delimited event trace.
        #[arg(long)]
        trace: bool,
        /// Also write the final main chain of the first honest node.
        #[arg(long)]
        dump_chain: bool,
    },
    /// Run independent simulation trials with consecutive seeds.
    Trials {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        /// Caps the number of worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Monte Carlo of the abstract delivery-loss model.
    MissModel {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
    },
    /// log10 misled probability over a grid of delivery ratio and m.
    Fig5 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        n_c: u32,
        #[arg(long, default_value_t = 6)]
        m_max: u32,
    },
    /// Chain-scale probabilities for the reference chains.
    Table1 {
        #[command(flatten)]
        common: Common,
    },
    /// Analytic misled probability against the loss-model Monte Carlo.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
    },
    /// Regenerate every analysis artifact and run the acceptance checklist.
    ReproducePaper {
        #[command(flatten)]
        common: Common,
        /// Protocol trials for the safety and double-spend checks.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            trace,
            dump_chain,
        } => commands::simulate(&common, trace, dump_chain),
        Command::Trials {
            common,
            trials,
            jobs,
        } => commands::trials(&common, trials, jobs),
        Command::MissModel { common, trials } => commands::miss_model(&common, trials),
        Command::Fig5 { common, n_c, m_max } => commands::fig5(&common, n_c, m_max),
        Command::Table1 { common } => commands::table1(&common),
        Command::Compare { common, trials } => commands::compare(&common, trials),
        Command::ReproducePaper {
            common,
            trials,
            jobs,
        } => reproduce::run(&common, trials, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
