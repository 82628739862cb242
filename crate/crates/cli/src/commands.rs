use std::io::Write;

use serde::Serialize;

use cbchain_core::analysis::{
    compare_analytic_empirical, fig5_dataset, table1_rows, ChainScaleRow, Comparison, Fig5Row,
    SafetyParams, FIG5_R_VALUES, REFERENCE_CHAINS,
};
use cbchain_core::ledger::io::{main_chain_summary, write_main_chain};
use cbchain_core::simnet::{
    run_miss_model, run_simulation_with_ledger, run_trials, SimConfig, SimReport,
};

use crate::config::{load, to_toml, RunManifest};
use crate::error::CliError;
use crate::output::OutDir;
use crate::Common;

/// Loss-model parameters used when no config file is given; small enough
/// to measure.
pub const MEASURABLE_PARAMS: SafetyParams = SafetyParams {
    m: 1,
    n_c: 1,
    l: 0,
    r: 0.2,
    q: 0.0,
};

/// Per-block parameters behind the chain-scale table.
pub const HEADLINE_PARAMS: SafetyParams = SafetyParams {
    m: 2,
    n_c: 2,
    l: 0,
    r: 0.9,
    q: 0.0,
};

pub fn manifest(
    command: &'static str,
    common: &Common,
    trials: Option<u64>,
    jobs: Option<usize>,
) -> RunManifest {
    RunManifest {
        command,
        config_path: common.config.clone(),
        out_dir: common.out.clone(),
        seed: common.seed,
        trials,
        jobs,
        version: env!("CARGO_PKG_VERSION"),
    }
}

fn sim_config(common: &Common) -> Result<SimConfig, CliError> {
    let mut cfg: SimConfig = load(common.config.as_deref(), SimConfig::default())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn safety_params(common: &Common, default: SafetyParams) -> Result<SafetyParams, CliError> {
    let p: SafetyParams = load(common.config.as_deref(), default)?;
    p.validate()?;
    Ok(p)
}

/// Opens the output directory and echoes the manifest and resolved config.
fn open_out<C: Serialize>(manifest: &RunManifest, resolved: &C) -> Result<OutDir, CliError> {
    let mut out = OutDir::create(&manifest.out_dir)?;
    out.json("manifest.json", manifest)?;
    out.write("config.resolved.toml", to_toml(resolved)?.as_bytes())?;
    Ok(out)
}

/// One CSV row per report: seed followed by every counter.
fn write_counters(out: &mut OutDir, reports: &[SimReport]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out.file("counters.csv")?);
    if let Some(first) = reports.first() {
        let header = std::iter::once("seed").chain(first.counters().into_iter().map(|(n, _)| n));
        w.write_record(header)?;
    }
    for r in reports {
        let row = std::iter::once(r.seed.to_string())
            .chain(r.counters().into_iter().map(|(_, v)| v.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(common: &Common, trace: bool, dump_chain: bool) -> Result<(), CliError> {
    let cfg = sim_config(common)?;
    let mut out = open_out(&manifest("simulate", common, None, None), &cfg)?;
    let (report, ledger) = if trace {
        let mut w = out.file("trace.jsonl")?;
        let res = run_simulation_with_ledger(&cfg, Some(&mut w))?;
        w.flush()?;
        res
    } else {
        run_simulation_with_ledger(&cfg, None)?
    };
    out.json("report.json", &report)?;
    write_counters(&mut out, std::slice::from_ref(&report))?;
    if dump_chain {
        let ledger = ledger.ok_or_else(|| {
            CliError::Config("--dump-chain needs at least one honest node".into())
        })?;
        write_main_chain(out.file("chain.bin")?, &ledger)?;
        out.json("chain.json", &main_chain_summary(&ledger))?;
    }
    println!("{}", report.summary_line());
    out.keep();
    Ok(())
}

pub fn trials(common: &Common, trials: u64, jobs: Option<usize>) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config(
            "trials: must be a positive integer".into(),
        ));
    }
    let cfg = sim_config(common)?;
    let mut out = open_out(&manifest("trials", common, Some(trials), jobs), &cfg)?;
    let outcome = run_trials(&cfg, trials as usize, jobs)?;
    out.json("summary.json", &outcome.summary)?;
    out.json("reports.json", &outcome.reports)?;
    write_counters(&mut out, &outcome.reports)?;
    println!("{}", outcome.summary.summary_line());
    out.keep();
    Ok(())
}

pub fn miss_model(common: &Common, trials: u64) -> Result<(), CliError> {
    let p = safety_params(common, MEASURABLE_PARAMS)?;
    let seed = common.seed.unwrap_or(0);
    let mut out = open_out(&manifest("miss-model", common, Some(trials), None), &p)?;
    let res = run_miss_model(&p, trials, seed)?;
    out.json("miss_model.json", &res)?;
    println!(
        "K={} misled {}/{} = {:.6} (95% CI {:.6}..{:.6})",
        res.k, res.misled, res.trials, res.frequency, res.ci.ci_low, res.ci.ci_high
    );
    out.keep();
    Ok(())
}

#[derive(Serialize)]
pub struct Fig5Csv {
    r: f64,
    m: u32,
    log10_pr: f64,
}

pub fn fig5_csv_rows(rows: &[Fig5Row]) -> impl Iterator<Item = Fig5Csv> + '_ {
    rows.iter().map(|r| Fig5Csv {
        r: r.r,
        m: r.m,
        log10_pr: r.log10_pr,
    })
}

#[derive(Serialize)]
pub struct Table1Csv<'a> {
    name: &'a str,
    height: u64,
    years: f64,
    chain_log10_p: f64,
    bound_ok: bool,
}

pub fn table1_csv_rows(rows: &[ChainScaleRow]) -> impl Iterator<Item = Table1Csv<'_>> {
    rows.iter().map(|r| Table1Csv {
        name: &r.name,
        height: r.height,
        years: r.years,
        chain_log10_p: r.chain_log10_p,
        bound_ok: r.bound_ok(),
    })
}

#[derive(Serialize)]
struct GridConfig {
    n_c: u32,
    m_max: u32,
    r: &'static [f64],
}

pub fn fig5(common: &Common, n_c: u32, m_max: u32) -> Result<(), CliError> {
    if n_c == 0 || m_max == 0 {
        return Err(CliError::Config(
            "n_c and m_max must be positive integers".into(),
        ));
    }
    let grid = GridConfig {
        n_c,
        m_max,
        r: &FIG5_R_VALUES,
    };
    let mut out = open_out(&manifest("fig5", common, None, None), &grid)?;
    let rows = fig5_dataset(n_c, 1..=m_max, &FIG5_R_VALUES)?;
    out.csv("fig5.csv", fig5_csv_rows(&rows))?;
    println!(
        "{} rows written to {}",
        rows.len(),
        out.path("fig5.csv").display()
    );
    out.keep();
    Ok(())
}

pub fn table1(common: &Common) -> Result<(), CliError> {
    let p = safety_params(common, HEADLINE_PARAMS)?;
    let mut out = open_out(&manifest("table1", common, None, None), &p)?;
    let rows = table1_rows(&p, &REFERENCE_CHAINS)?;
    out.csv("table1.csv", table1_csv_rows(&rows))?;
    out.json("table1.json", &rows)?;
    for r in &rows {
        println!(
            "{:<9} p=10^{:.2} (bound 10^{}) years=10^{:.2} (bound 10^{}) {}",
            r.name,
            r.chain_log10_p,
            r.bound_log10_p,
            r.expected_years_log10,
            r.bound_log10_years,
            if r.bound_ok() { "ok" } else { "VIOLATED" }
        );
    }
    out.keep();
    Ok(())
}

pub fn describe(c: &Comparison) -> String {
    match c {
        Comparison::Measured {
            analytic,
            empirical,
            z,
            agree,
            ..
        } => format!(
            "analytic {analytic:.6} empirical {empirical:.6} z={z:.2}{}",
            if *agree { "" } else { " (|z| > 3)" }
        ),
        Comparison::NotMeasurable {
            analytic_log10,
            expected_events,
            ..
        } => format!(
            "not measurable: log10 Pr = {analytic_log10:.3}, {expected_events:.3e} expected events"
        ),
    }
}

pub fn compare(common: &Common, trials: u64) -> Result<(), CliError> {
    let p = safety_params(common, MEASURABLE_PARAMS)?;
    let seed = common.seed.unwrap_or(0);
    let mut out = open_out(&manifest("compare", common, Some(trials), None), &p)?;
    let c = compare_analytic_empirical(&p, trials, seed)?;
    out.json("compare.json", &c)?;
    println!("{}", describe(&c));
    out.keep();
    Ok(())
}
