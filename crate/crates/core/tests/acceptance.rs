//! Acceptance run: one PASS/FAIL line per criterion, each at its stated
//! tolerance. Runs without the libtest harness so the lines are always shown.
//!
//! Criterion 4 fails under the shipped chain reading; it is listed in
//! `EXPECTED_FAILURES` and still printed as FAIL. Any other failure, or an
//! expected failure that starts passing, fails the run.

mod common;

use std::time::{Duration, Instant};

use qdcascade::analysis::{efficiency_budget, BudgetChain, ChainReading};
use qdcascade::scenarios::{run_scenario, ScenarioConfig};
use serde_json::Value;

/// Seed fixed before the first acceptance run.
const SEED: u64 = 2024;
const EXPECTED_FAILURES: &[u32] = &[4];

fn run(name: &str, tweak: impl FnOnce(&mut ScenarioConfig)) -> Result<(Value, Duration), String> {
    let mut cfg = ScenarioConfig::new(name);
    cfg.master_seed = SEED;
    tweak(&mut cfg);
    let cfg = cfg.resolve();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let report = run_scenario(&cfg, dir.path()).map_err(|e| e.to_string())?;
    Ok((report.summary, t0.elapsed()))
}

fn f(v: &Value, path: &str) -> f64 {
    path.split('.').fold(v, |acc, k| &acc[k]).as_f64().unwrap_or(f64::NAN)
}

fn b(v: &Value, path: &str) -> bool {
    path.split('.').fold(v, |acc, k| &acc[k]).as_bool().unwrap_or(false)
}

fn verdict(ok: bool, detail: String) -> Result<String, String> {
    if ok { Ok(detail) } else { Err(detail) }
}

fn transfer_identity(s: &Value, elapsed: Duration) -> Result<String, String> {
    let inputs = s["inputs"].as_array().ok_or("no inputs")?;
    let worst_master = inputs.iter().map(|r| f(r, "fidelity_master")).fold(1.0, f64::min);
    let worst_z = inputs
        .iter()
        .map(|r| (f(r, "fidelity_trajectories") - f(r, "fidelity_master")).abs())
        .fold(0.0, f64::max);
    let ok = b(s, "identity") && b(s, "trajectories_consistent") && elapsed < Duration::from_secs(60);
    verdict(
        ok,
        format!(
            "min master fidelity {worst_master:.9}, max |trajectory - master| {worst_z:.1e}, {} inputs, {:.1} s",
            inputs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn degeneracy(s: &Value) -> Result<String, String> {
    let sweep = &s["diagonal_sweep"];
    let fids: Vec<f64> = sweep["fidelity"].as_array().ok_or("no sweep")?.iter().filter_map(Value::as_f64).collect();
    let raw: Vec<f64> =
        sweep["fidelity_uncorrected"].as_array().ok_or("no sweep")?.iter().filter_map(Value::as_f64).collect();
    let last = *fids.last().ok_or("empty sweep")?;
    let ok = b(sweep, "monotone_decreasing") && (last - 0.5).abs() < 0.01;
    verdict(ok, format!("fidelity at 0, 1, 3, 10 linewidths {fids:.4?} (before phase correction {raw:.4?})"))
}

fn correlations(s: &Value, elapsed: Duration) -> Result<String, String> {
    let n = f(s, "coincidences");
    let ratio = f(s, "correct_incorrect_ratio");
    let fid = f(s, "fidelity.value");
    let ok = (n - 120.0).abs() <= 35.0
        && (2.5..=4.5).contains(&ratio)
        && (0.60..=0.92).contains(&fid)
        && elapsed < Duration::from_secs(300);
    verdict(
        ok,
        format!(
            "{n} coincidences ({:.2}/h), correct:incorrect {ratio:.2}, F = {fid:.3} ± {:.3}, {:.1} s",
            f(s, "rate_per_hour"),
            f(s, "fidelity.sigma"),
            elapsed.as_secs_f64()
        ),
    )
}

fn budget() -> Result<String, String> {
    let chain = BudgetChain::default();
    let main = efficiency_budget(&chain, 5.5e6, 90.0, true).map_err(|e| e.to_string())?;
    let alt = efficiency_budget(&BudgetChain { reading: ChainReading::DiagonalOnly, ..chain }, 5.5e6, 90.0, true)
        .map_err(|e| e.to_string())?;
    let ok = (0.064..=0.096).contains(&main.p_abs) && (0.128..=0.192).contains(&main.quantum_efficiency);
    verdict(
        ok,
        format!(
            "p_abs {:.4}, QE {:.4} (diagonal-only reading: {:.4}, {:.4}); target 0.08, 0.16",
            main.p_abs, main.quantum_efficiency, alt.p_abs, alt.quantum_efficiency
        ),
    )
}

fn beat(s: &Value) -> Result<String, String> {
    let ok = b(s, "beat.within_one_bin") && b(s, "beat.within_3_sigma");
    verdict(
        ok,
        format!(
            "peak {:.3} GHz (bin {:.3}), visibility {:.4} ± {:.4} vs jitter prediction {:.4}",
            f(s, "beat.peak_frequency_ghz"),
            f(s, "beat.bin_ghz"),
            f(s, "beat.visibility"),
            f(s, "beat.visibility_sigma"),
            f(s, "beat.visibility_predicted")
        ),
    )
}

fn g2(s: &Value) -> Result<String, String> {
    let r = f(s, "g2.ratio");
    verdict(
        (r - 0.15).abs() <= 0.03,
        format!("center/side {r:.4} ± {:.4} at {:.3} GHz per color", f(s, "g2.sigma"), f(s, "rabi_ghz")),
    )
}

fn hom(s: &Value) -> Result<String, String> {
    let k = f(s, "factor");
    verdict(
        (k - 5.0).abs() <= 1.0 && !b(s, "lower_bound"),
        format!("reduction {k:.2} ± {:.2} (centers {} / {})", f(s, "sigma"), s["center_orthogonal"], s["center_parallel"]),
    )
}

fn off_resonance(a: &Value, b2: &Value) -> Result<String, String> {
    let ok = b(a, "off_resonance.consistent_with_background") && b(b2, "off_resonance.consistent_with_background");
    verdict(
        ok,
        format!(
            "fig2a {:.2}/s (p = {:.3}), fig2b {:.2}/s (p = {:.3}) against 2/s",
            f(a, "off_resonance.mean_rate"),
            f(a, "off_resonance.p_value"),
            f(b2, "off_resonance.mean_rate"),
            f(b2, "off_resonance.p_value")
        ),
    )
}

fn mollow(s: &Value) -> Result<String, String> {
    let grid = common::mollow_grid()?;
    let powers: Vec<String> = s["powers"]
        .as_array()
        .ok_or("no powers")?
        .iter()
        .filter(|p| b(p, "side_lobes"))
        .map(|p| format!("{}", f(p, "saturation")))
        .collect();
    verdict(
        b(s, "side_lobes_only_above_saturation"),
        format!("{grid}; side lobes at s = {}", powers.join(", ")),
    )
}

fn entanglement(s: &Value) -> Result<String, String> {
    let c = f(s, "concurrence");
    let fid = f(s, "fidelity");
    let drift = f(s, "concurrence_drift");
    let r2 = f(s, "herald_linear_fit.r_squared");
    let ok = c >= 1.0 - 1e-6 && fid >= 1.0 - 1e-6 && drift <= 1e-6 && r2 >= 0.999;
    verdict(ok, format!("C = {c:.9}, F = {fid:.9}, drift {drift:.1e}, herald R² = {r2:.6}"))
}

fn oracles() -> Result<String, String> {
    let t0 = Instant::now();
    let parts = [
        ("trajectory/master", common::trajectories_vs_master()),
        ("KS", common::ks_exponential()),
        ("Bloch", common::obe_steady_state()),
        ("Lorentzian", common::lorentzian_recovery()),
    ];
    let elapsed = t0.elapsed();
    let mut lines = Vec::new();
    let mut ok = elapsed < Duration::from_secs(600);
    for (name, r) in parts {
        match r {
            Ok(d) => lines.push(format!("{name}: {d}")),
            Err(d) => {
                ok = false;
                lines.push(format!("{name} FAILED: {d}"));
            }
        }
    }
    verdict(ok, format!("{}; {:.1} s", lines.join("; "), elapsed.as_secs_f64()))
}

fn main() {
    // `cargo test -- --list` and filters expect a quiet exit
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results: Vec<(u32, &str, Result<String, String>)> = Vec::new();
    let mut record = |n: u32, name: &'static str, r: Result<String, String>| {
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("criterion {n:>2} [{name}]: {tag}: {detail}");
        results.push((n, name, r));
    };

    match run("protocol_transfer", |_| {}) {
        Ok((s, t)) => {
            record(1, "heralded transfer identity", transfer_identity(&s, t));
            record(2, "degeneracy necessity", degeneracy(&s));
        }
        Err(e) => {
            record(1, "heralded transfer identity", Err(e.clone()));
            record(2, "degeneracy necessity", Err(e));
        }
    }
    record(3, "correlation experiment", run("fig3_correlations", |_| {}).and_then(|(s, t)| correlations(&s, t)));
    record(4, "photon budget", budget());
    match run("fig2d_timetrace", |_| {}) {
        Ok((s, _)) => {
            record(5, "beat note", beat(&s));
            record(6, "g2 of 400 ps pulses", g2(&s));
        }
        Err(e) => {
            record(5, "beat note", Err(e.clone()));
            record(6, "g2 of 400 ps pulses", Err(e));
        }
    }
    record(7, "HOM reduction", run("figS2_hom", |_| {}).and_then(|(s, _)| hom(&s)));
    record(
        8,
        "off-resonance null",
        run("fig2a_scan", |_| {}).and_then(|(a, _)| run("fig2b_scan", |_| {}).and_then(|(b2, _)| off_resonance(&a, &b2))),
    );
    record(9, "Mollow side bands", run("fig2c_power_map", |_| {}).and_then(|(s, _)| mollow(&s)));
    record(10, "entanglement robustness", run("protocol_entanglement", |_| {}).and_then(|(s, _)| entanglement(&s)));
    record(11, "oracle suite", oracles());

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    let unexpected: Vec<u32> = failed.iter().copied().filter(|n| !EXPECTED_FAILURES.contains(n)).collect();
    let recovered: Vec<u32> = EXPECTED_FAILURES.iter().copied().filter(|n| !failed.contains(n)).collect();
    println!(
        "acceptance: {} of {} criteria pass; expected failures {:?}",
        results.len() - failed.len(),
        results.len(),
        EXPECTED_FAILURES
    );
    if !unexpected.is_empty() || !recovered.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}, expected failures now passing {recovered:?}");
        std::process::exit(1);
    }
}
