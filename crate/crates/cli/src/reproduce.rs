use std::time::Instant;

use serde::Serialize;

use cbchain_core::analysis::{
    compare_analytic_empirical, fig5_dataset, l_ratio_test, log10_pr_misled, pr_invalid_witnessed,
    table1_rows, three_sigma, Comparison, FIG5_R_VALUES, REFERENCE_CHAINS,
};
use cbchain_core::simnet::{
    run_trials, witness_monte_carlo, AdversaryStrategy, SimConfig, WitnessMcConfig,
};
use cbchain_core::TxModel;

use crate::commands::{
    describe, fig5_csv_rows, manifest, table1_csv_rows, HEADLINE_PARAMS, MEASURABLE_PARAMS,
};
use crate::config::load;
use crate::error::CliError;
use crate::output::OutDir;
use crate::Common;

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

struct Checklist {
    checks: Vec<Check>,
}

impl Checklist {
    fn record(&mut self, name: &'static str, passed: bool, detail: String) {
        println!(
            "[{}] {name}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }

    fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.to_string())
            .collect()
    }
}

pub fn run(common: &Common, trials: u64, jobs: Option<usize>) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config(
            "trials: must be a positive integer".into(),
        ));
    }
    let mut base: SimConfig = load(common.config.as_deref(), SimConfig::default())?;
    if let Some(seed) = common.seed {
        base.seed = seed;
    }
    base.check_replay = true;
    base.validate()?;
    let seed = base.seed;

    let mut out = OutDir::create(&common.out)?;
    out.json(
        "manifest.json",
        &manifest("reproduce-paper", common, Some(trials), jobs),
    )?;
    out.write(
        "config.resolved.toml",
        crate::config::to_toml(&base)?.as_bytes(),
    )?;
    let started = Instant::now();
    let mut list = Checklist { checks: Vec::new() };

    let headline = log10_pr_misled(&HEADLINE_PARAMS)?;
    list.record(
        "headline_probability",
        (headline + 54.0).abs() < 1e-9,
        format!(
            "log10 Pr_misled(m=2, n_c=2, l=0, r=0.9) = {headline:.9}, K = {}",
            HEADLINE_PARAMS.exponent()
        ),
    );

    let rows = table1_rows(&HEADLINE_PARAMS, &REFERENCE_CHAINS)?;
    out.csv("table1.csv", table1_csv_rows(&rows))?;
    out.json("table1.json", &rows)?;
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "{} 10^{:.2} < 10^{}",
                r.name, r.chain_log10_p, r.bound_log10_p
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    list.record("table1_bounds", rows.iter().all(|r| r.bound_ok()), detail);

    let grid = fig5_dataset(3, 1..=6, &FIG5_R_VALUES)?;
    out.csv("fig5.csv", fig5_csv_rows(&grid))?;
    let decreasing = grid
        .windows(2)
        .filter(|w| w[0].r == w[1].r)
        .all(|w| w[1].log10_pr < w[0].log10_pr);
    list.record(
        "fig5_decreasing_in_m",
        decreasing,
        format!("{} rows, n_c = 3", grid.len()),
    );

    let mc_cfg = WitnessMcConfig {
        seed,
        ..WitnessMcConfig::default()
    };
    let mc = witness_monte_carlo(&mc_cfg);
    out.json("witness_mc.json", &mc)?;
    let want = pr_invalid_witnessed(mc_cfg.q, mc_cfg.m)?;
    let f = &mc.fully_adversarial;
    let band = three_sigma(want, f.trials);
    list.record(
        "witness_corruption_monte_carlo",
        (f.estimate - want).abs() <= band,
        format!(
            "{}/{} = {:.5} vs q^m = {want:.5} +- {band:.5}",
            f.successes, f.trials, f.estimate
        ),
    );

    let cmp = compare_analytic_empirical(&MEASURABLE_PARAMS, 1_000_000, seed)?;
    out.json("compare.json", &cmp)?;
    let agree = matches!(cmp, Comparison::Measured { agree: true, .. });
    list.record("miss_model_agreement", agree, describe(&cmp));

    let ratio = l_ratio_test(&MEASURABLE_PARAMS, 2, 1_000_000, seed.wrapping_add(1))?;
    out.json("l_ratio.json", &ratio)?;
    list.record(
        "retransmission_ratio",
        ratio.agree,
        format!(
            "ratio {:.4} vs {:.4} (z = {:.2})",
            ratio.empirical_ratio, ratio.expected_ratio, ratio.z
        ),
    );

    let safety = run_trials(&base, trials as usize, jobs)?;
    out.json("safety_summary.json", &safety.summary)?;
    let (forks, misled, mismatches) = safety.reports.iter().fold((0, 0, 0), |acc, r| {
        (
            acc.0 + r.hard_forks,
            acc.1 + r.misled_events,
            acc.2 + r.replay_mismatches,
        )
    });
    list.record(
        "protocol_safety",
        forks == 0 && misled == 0 && mismatches == 0,
        format!(
            "{} trials at r = {}: hard_forks={forks} misled={misled} replay_mismatches={mismatches}",
            safety.reports.len(),
            base.delivery_ratio
        ),
    );

    let ds_trials = (trials / 5).max(1) as usize;
    let mut ds = Vec::new();
    let mut ds_ok = true;
    for model in [TxModel::Account, TxModel::Utxo] {
        let cfg = SimConfig {
            adversary_fraction: 0.2,
            adversary_strategy: AdversaryStrategy::DoubleSpend,
            tx_model: model,
            seed: seed.wrapping_add(7000),
            ..base.clone()
        };
        let o = run_trials(&cfg, ds_trials, jobs)?;
        let pairs: u64 = o.reports.iter().map(|r| r.double_spend_pairs).sum();
        let confirmed: u64 = o.reports.iter().map(|r| r.conflicting_confirmed).sum();
        ds_ok &= pairs > 0 && confirmed == 0;
        ds.push(format!(
            "{model:?}: {pairs} pairs sent, {confirmed} confirmed"
        ));
        out.json(
            &format!("double_spend_{}.json", format!("{model:?}").to_lowercase()),
            &o.summary,
        )?;
    }
    list.record("double_spend_prevention", ds_ok, ds.join("; "));

    out.json("checklist.json", &list.checks)?;
    let failed = list.failed();
    println!(
        "{} of {} checks passed in {:.1}s",
        list.checks.len() - failed.len(),
        list.checks.len(),
        started.elapsed().as_secs_f64()
    );
    out.keep();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Checks(failed))
    }
}
