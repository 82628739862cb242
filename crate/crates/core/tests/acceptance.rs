//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits nonzero if any failed.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cbchain_core::analysis::{
    fig5_dataset, l_ratio_test, log10_pr_misled, table1_rows, SafetyParams, FIG5_R_VALUES,
    REFERENCE_CHAINS,
};
use cbchain_core::simnet::{
    run_miss_model, run_trials, witness_monte_carlo, AdversaryStrategy, SimConfig, SimReport,
    WitnessMcConfig,
};
use cbchain_core::testkit::Fixture;
use cbchain_core::TxModel;
use common::{head_after, random_block_set};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// Binomial standard deviation of a proportion.
fn sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn headline_misled_probability() -> Outcome {
    let p = SafetyParams::new(2, 2, 0, 0.9);
    let got = log10_pr_misled(&p).unwrap();
    // Oracle: multiply (1 - r) once per required miss; K = 3 * 3 * 6.
    let k = 3 * 3 * 6;
    let linear = (0..k).fold(1.0f64, |acc, _| acc * (1.0 - 0.9));
    let oracle = linear.log10();
    let ok = (got + 54.0).abs() < 1e-9 && (oracle + 54.0).abs() < 1e-9 && p.exponent() == 54;
    outcome(
        ok,
        format!(
            "log10 Pr = {got:.12}, oracle {oracle:.12}, K = {}",
            p.exponent()
        ),
    )
}

fn chain_scale_bounds() -> Outcome {
    let rows = table1_rows(&SafetyParams::new(2, 2, 0, 0.9), &REFERENCE_CHAINS).unwrap();
    let mut ok = rows.len() == 3;
    let mut parts = Vec::new();
    for row in &rows {
        // Oracle: union bound evaluated in linear space, 1e-54 per block.
        let p_chain = row.height as f64 * 1e-54;
        let oracle_log10 = p_chain.log10();
        let oracle_years = (row.years / p_chain).log10();
        let bound_p = 10f64.powf(row.bound_log10_p);
        let agree = (row.chain_log10_p - oracle_log10).abs() < 1e-9
            && (row.expected_years_log10 - oracle_years).abs() < 1e-9;
        let holds = p_chain < bound_p && oracle_years > row.bound_log10_years && row.bound_ok();
        ok &= agree && holds;
        parts.push(format!(
            "{} p=10^{:.2} (<10^{}) years=10^{:.2} (>10^{})",
            row.name,
            row.chain_log10_p,
            row.bound_log10_p,
            row.expected_years_log10,
            row.bound_log10_years
        ));
    }
    let want = [
        ("Bitcoin", -47.0, 47.0),
        ("Ethereum", -45.0, 37.0),
        ("Solana", -44.0, 35.0),
    ];
    ok &= rows
        .iter()
        .zip(want)
        .all(|(r, (n, p, y))| r.name == n && r.bound_log10_p == p && r.bound_log10_years == y);
    outcome(ok, parts.join("; "))
}

fn misled_grid_monotone() -> Outcome {
    let rows = fig5_dataset(3, 1..=6, &FIG5_R_VALUES).unwrap();
    let at = |r: f64, m: u32| {
        rows.iter()
            .find(|x| x.r == r && x.m == m)
            .map(|x| x.log10_pr)
            .unwrap()
    };
    let mut ok = rows.len() == 24;
    for &r in &FIG5_R_VALUES {
        for m in 1..6 {
            ok &= at(r, m + 1) < at(r, m);
        }
    }
    for m in 1..=6 {
        for w in FIG5_R_VALUES.windows(2) {
            ok &= at(w[1], m) < at(w[0], m);
        }
    }
    // Oracle spot check: m = 2, n_c = 3, r = 0.9 gives K = 3 * 4 * 7.
    let spot = at(0.9, 2);
    ok &= (spot + 84.0).abs() < 1e-9;
    outcome(
        ok,
        format!(
            "{} rows, strictly decreasing in m and r; (m=2, r=0.9) = {spot:.6}",
            rows.len()
        ),
    )
}

fn witness_monte_carlo_fraction() -> Outcome {
    let t = Instant::now();
    let cfg = WitnessMcConfig {
        n_nodes: 200,
        q: 0.5,
        m: 3,
        attempts: 100_000,
        seed: 42,
        ..WitnessMcConfig::default()
    };
    let res = witness_monte_carlo(&cfg);
    let elapsed = t.elapsed();
    let p = 0.5f64.powi(3);
    let f = res.fully_adversarial;
    let band = 3.0 * sigma(p, f.trials);
    let ok = f.trials >= 100_000 && (f.estimate - p).abs() <= band && within(elapsed, 30);
    outcome(
        ok,
        format!(
            "{}/{} = {:.5} vs {p} +- {band:.5}, {:.1}s",
            f.successes,
            f.trials,
            f.estimate,
            elapsed.as_secs_f64()
        ),
    )
}

fn miss_model_fraction() -> Outcome {
    let t = Instant::now();
    let base = SafetyParams::new(1, 1, 0, 0.2);
    let n = 1_000_000;
    let res = run_miss_model(&base, n, 7).unwrap();
    let p = 0.8f64.powi(16);
    let band = 3.0 * sigma(p, n);
    let freq_ok = (res.frequency - p).abs() <= band;
    let ratio = l_ratio_test(&base, 2, n, 11).unwrap();
    let oracle_ratio = 0.8f64.powi(2);
    let ratio_ok = ratio.agree && (ratio.expected_ratio - oracle_ratio).abs() < 1e-12;
    let elapsed = t.elapsed();
    outcome(
        freq_ok && ratio_ok && within(elapsed, 60),
        format!(
            "freq {:.6} vs {p:.6} +- {band:.6}; l-ratio {:.4} vs {oracle_ratio} (z = {:.2}); {:.1}s",
            res.frequency,
            ratio.empirical_ratio,
            ratio.z,
            elapsed.as_secs_f64()
        ),
    )
}

fn safety_config() -> SimConfig {
    let mut cfg = SimConfig {
        n_nodes: 20,
        adversary_fraction: 0.0,
        delivery_ratio: 0.9,
        duration: 200,
        seed: 1_000,
        check_replay: true,
        ..SimConfig::default()
    };
    cfg.chain.witness_m = 2;
    cfg.chain.confirm_depth = 3;
    cfg
}

fn protocol_safety(reports: &[SimReport], elapsed: Duration) -> Outcome {
    let forks: u64 = reports.iter().map(|r| r.hard_forks).sum();
    let misled: u64 = reports.iter().map(|r| r.misled_events).sum();
    let identical = reports.iter().filter(|r| r.prefixes_identical).count();
    let progressed = reports.iter().all(|r| r.common_confirmed_height > 0);
    let ok = reports.len() == 1000
        && forks == 0
        && misled == 0
        && identical == reports.len()
        && progressed
        && within(elapsed, 300);
    outcome(
        ok,
        format!(
            "{} trials: hard_forks={forks} misled={misled} identical_prefixes={identical}, {:.1}s",
            reports.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn replay_equivalence(reports: &[SimReport]) -> Outcome {
    let checks: u64 = reports.iter().map(|r| r.replay_checks).sum();
    let mismatches: u64 = reports.iter().map(|r| r.replay_mismatches).sum();
    let switches: u64 = reports.iter().map(|r| r.fork_switches).sum();
    outcome(
        checks > 0 && checks >= switches && mismatches == 0,
        format!("{checks} replay checks over {switches} fork switches, {mismatches} mismatches"),
    )
}

fn double_spend_prevention() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for model in [TxModel::Account, TxModel::Utxo] {
        let cfg = SimConfig {
            adversary_fraction: 0.2,
            adversary_strategy: AdversaryStrategy::DoubleSpend,
            tx_model: model,
            seed: 7_000,
            ..SimConfig::default()
        };
        let out = run_trials(&cfg, 200, None).unwrap();
        let conflicting: u64 = out.reports.iter().map(|r| r.conflicting_confirmed).sum();
        let pairs: u64 = out.reports.iter().map(|r| r.double_spend_pairs).sum();
        ok &= out.reports.len() == 200 && conflicting == 0 && pairs > 0;
        parts.push(format!(
            "{model:?}: {pairs} conflicting pairs sent, {conflicting} confirmed"
        ));
    }
    let elapsed = t.elapsed();
    ok &= within(elapsed, 120);
    outcome(
        ok,
        format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()),
    )
}

fn fork_choice_order_independent() -> Outcome {
    let t = Instant::now();
    let f = Fixture::keyed(10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut agree, mut switched_sets) = (0, 0);
    for _ in 0..500 {
        let size = rng.random_range(5..=30);
        let set = random_block_set(&f, &mut rng, size, 0.1);
        let in_order = head_after(&f, &set);
        let mut a = set.clone();
        a.shuffle(&mut rng);
        let mut b = set.clone();
        b.shuffle(&mut rng);
        b.extend(set.iter().take(3).cloned());
        let (ha, hb) = (head_after(&f, &a), head_after(&f, &b));
        if ha == hb && ha == in_order {
            agree += 1;
        }
        if set.last().map(|b| b.block_hash()) != Some(in_order) {
            switched_sets += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        agree == 500 && within(elapsed, 60),
        format!(
            "{agree}/500 sets agree across permutations ({switched_sets} with a head other than the newest block), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn throughput_floor() -> Outcome {
    let trials = 2 * rayon::current_num_threads().max(4);
    let cfg = SimConfig::default();
    let t = Instant::now();
    let out = run_trials(&cfg, trials, None).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let blocks: u64 = out.reports.iter().map(|r| r.blocks_minted).sum();
    let rate = blocks as f64 / secs;
    outcome(
        rate >= 1e4,
        format!(
            "{blocks} blocks minted in {secs:.3}s = {rate:.0} blocks/s over {} worker threads (floor 10000)",
            rayon::current_num_threads()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        let tag = if o.ok { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {}", o.detail);
        results.push((n, name, o));
    };

    record(
        1,
        "headline misled probability",
        headline_misled_probability(),
    );
    record(2, "chain-scale bounds", chain_scale_bounds());
    record(3, "misled grid monotone", misled_grid_monotone());
    record(4, "witness Monte Carlo", witness_monte_carlo_fraction());
    record(5, "miss-model Monte Carlo", miss_model_fraction());

    let t = Instant::now();
    let safety = run_trials(&safety_config(), 1000, None).unwrap();
    let elapsed = t.elapsed();
    record(
        6,
        "protocol safety",
        protocol_safety(&safety.reports, elapsed),
    );
    record(7, "double-spend prevention", double_spend_prevention());
    record(
        8,
        "fork-choice determinism",
        fork_choice_order_independent(),
    );
    record(9, "replay equivalence", replay_equivalence(&safety.reports));
    record(10, "throughput floor", throughput_floor());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.ok).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
