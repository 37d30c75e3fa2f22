//! Transfer protocols on ideal dots and the photon budget.

use rand::RngCore;
use serde_json::json;

use super::{num, Outputs, ScenarioConfig, Summary};
use crate::analysis::{efficiency_budget, protocol_metrics, ChainReading, ProtocolKind, ProtocolParams};
use crate::cascade::{color_qubit, heralded_conditional_trajectories};
use crate::error::{Error, Result};
use crate::quantum::{substream, CMatrix, CVector, C64};

/// `(1,0), (0,1), (1,±1)/√2, (1,i)/√2` as `[re, im]` pairs.
fn inputs() -> Vec<([f64; 2], [f64; 2])> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        ([1.0, 0.0], [0.0, 0.0]),
        ([0.0, 0.0], [1.0, 0.0]),
        ([h, 0.0], [h, 0.0]),
        ([h, 0.0], [-h, 0.0]),
        ([h, 0.0], [0.0, h]),
    ]
}

/// Master-equation fidelities to this tolerance count as identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;
/// Ideal runs are pure with zero spread, so the 3σ band of the trajectory
/// mean collapses; the master value is only resolved to this tolerance.
const NUMERICAL_SLACK: f64 = IDENTITY_TOLERANCE;

/// Fidelity to `α|↑⟩ + β|↓⟩` after the best z rotation. The diagonal
/// splitting imprints a deterministic, known phase on the heralded spin on top
/// of the dephasing; only the dephasing is irreversible.
pub fn phase_corrected_fidelity(rho: &CMatrix, alpha: C64, beta: C64) -> f64 {
    alpha.norm_sqr() * rho[(0, 0)].re + beta.norm_sqr() * rho[(1, 1)].re + 2.0 * alpha.norm() * beta.norm() * rho[(0, 1)].norm()
}

pub(super) fn transfer(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    let sec = &cfg.protocol;
    let runs = cfg.shots.map_or(sec.runs, |s| s as usize);
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let plus = CVector::from_vec(vec![h, h]);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut all_identity = true;
    let mut all_consistent = true;
    for (i, (alpha, beta)) in inputs().into_iter().enumerate() {
        let params = ProtocolParams { alpha, beta, ..sec.params.clone() };
        let master = protocol_metrics(ProtocolKind::PhotonToSpin, &params)?;
        let (a, b) = params.amplitudes();
        let cascade = params.photon_cascade()?;
        let seed = substream(cfg.master_seed, i as u64).next_u64();
        let sampled =
            heralded_conditional_trajectories(&cascade, &color_qubit(a, b)?, &plus, params.herald_window, (a, b), runs, seed)?;
        let (mean, se) = sampled.mean_fidelity();
        let identity = master.fidelity >= 1.0 - IDENTITY_TOLERANCE;
        let consistent = (mean - master.fidelity).abs() <= 3.0 * se + NUMERICAL_SLACK;
        all_identity &= identity;
        all_consistent &= consistent;
        rows.push([alpha[0], alpha[1], beta[0], beta[1], master.fidelity, mean, se, master.herald_probability]);
        records.push(json!({
            "alpha": alpha, "beta": beta,
            "fidelity_master": num(master.fidelity),
            "fidelity_trajectories": num(mean), "sigma": num(se),
            "kept": sampled.kept, "runs": sampled.runs,
            "herald_probability": num(master.herald_probability),
            "within_3_sigma": consistent,
        }));
    }
    o.csv(
        "transfer.csv",
        &["alpha_re", "alpha_im", "beta_re", "beta_im", "fidelity_master", "fidelity_trajectories", "sigma", "herald_probability"],
        &rows,
    )?;

    // a which-color record in the diagonal photon dephases the transferred
    // superposition once the diagonal lines are resolved
    let linewidth_ghz = sec.params.gamma / (2.0 * std::f64::consts::PI);
    let (a, b) = sec.params.amplitudes();
    let mut sweep_rows = Vec::new();
    let mut raw = Vec::new();
    let mut fids = Vec::new();
    for &k in &sec.diagonal_sweep {
        let params = ProtocolParams { diagonal_splitting: k * linewidth_ghz, ..sec.params.clone() };
        let out = protocol_metrics(ProtocolKind::PhotonToSpin, &params)?;
        let corrected = phase_corrected_fidelity(&out.rho, a, b);
        raw.push(out.fidelity);
        fids.push(corrected);
        sweep_rows.push([k, params.diagonal_splitting, corrected, out.fidelity, out.rho[(0, 1)].arg(), out.herald_probability]);
    }
    o.csv(
        "diagonal_sweep.csv",
        &["diagonal_over_linewidth", "diagonal_ghz", "fidelity", "fidelity_uncorrected", "coherence_phase", "herald_probability"],
        &sweep_rows,
    )?;
    let monotone = fids.windows(2).all(|w| w[1] < w[0]);

    let mut s = Summary::new();
    s.insert("inputs".into(), records.into());
    s.insert("identity".into(), all_identity.into());
    s.insert("trajectories_consistent".into(), all_consistent.into());
    s.insert(
        "diagonal_sweep".into(),
        json!({
            "splitting_over_linewidth": sec.diagonal_sweep.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "fidelity": fids.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "fidelity_uncorrected": raw.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "monotone_decreasing": monotone,
            "last_minus_half": fids.last().map(|f| num(f - 0.5)),
        }),
    );
    Ok(s)
}

pub(super) fn spin_to_spin(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (alpha, beta) in inputs() {
        let params = ProtocolParams { alpha, beta, ..cfg.protocol.params.clone() };
        let out = protocol_metrics(ProtocolKind::SpinToSpin, &params)?;
        rows.push([alpha[0], alpha[1], beta[0], beta[1], out.fidelity, out.herald_probability]);
        records.push(json!({
            "alpha": alpha, "beta": beta,
            "fidelity": num(out.fidelity), "herald_probability": num(out.herald_probability),
        }));
    }
    o.csv("spin_to_spin.csv", &["alpha_re", "alpha_im", "beta_re", "beta_im", "fidelity", "herald_probability"], &rows)?;
    let min = rows.iter().map(|r| r[4]).fold(f64::INFINITY, f64::min);
    let mut s = Summary::new();
    s.insert("inputs".into(), records.into());
    s.insert("min_fidelity".into(), num(min));
    Ok(s)
}

/// Coefficient of determination of a least-squares line through `(x, y)`.
fn r_squared(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (1.0 - ss_res / ss_tot, slope, intercept)
}

pub(super) fn entanglement(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    let sec = &cfg.protocol;
    if sec.eta_sweep.len() < 3 {
        return Err(Error::Config("protocol.eta_sweep: need ≥ 3 values in (0, 1]".into()));
    }
    let mut rows = Vec::new();
    for &eta in &sec.eta_sweep {
        let params = ProtocolParams { eta_ch: eta, ..sec.params.clone() };
        let out = protocol_metrics(ProtocolKind::Entanglement, &params)?;
        rows.push([eta, out.concurrence.unwrap_or(f64::NAN), out.fidelity, out.herald_probability]);
    }
    o.csv("entanglement.csv", &["eta_ch", "concurrence", "fidelity", "herald_probability"], &rows)?;
    let reference = protocol_metrics(ProtocolKind::Entanglement, &sec.params)?;
    let c0 = reference.concurrence.unwrap_or(f64::NAN);
    let drift = rows.iter().map(|r| (r[1] - c0).abs()).fold(0.0, f64::max);
    let eta: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let p: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let (r2, slope, intercept) = r_squared(&eta, &p);
    let mut s = Summary::new();
    s.insert("concurrence".into(), num(c0));
    s.insert("fidelity".into(), num(reference.fidelity));
    s.insert("herald_probability".into(), num(reference.herald_probability));
    s.insert("concurrence_drift".into(), num(drift));
    s.insert("herald_linear_fit".into(), json!({ "r_squared": num(r2), "slope": num(slope), "intercept": num(intercept) }));
    Ok(s)
}

pub(super) fn budget(cfg: &ScenarioConfig) -> Result<Summary> {
    let b = &cfg.budget;
    let main = efficiency_budget(&b.chain, b.r_source, b.r_herald, b.spin_random)?;
    let mut readings = serde_json::Map::new();
    for (name, reading) in [("any_scatter", ChainReading::AnyScatter), ("diagonal_only", ChainReading::DiagonalOnly)] {
        let chain = crate::analysis::BudgetChain { reading, ..b.chain.clone() };
        let r = efficiency_budget(&chain, b.r_source, b.r_herald, b.spin_random)?;
        readings.insert(name.into(), serde_json::to_value(r).map_err(|e| Error::Runtime(e.to_string()))?);
    }
    let mut s = Summary::new();
    s.insert("reading".into(), serde_json::to_value(b.chain.reading).map_err(|e| Error::Runtime(e.to_string()))?);
    s.insert("p_abs".into(), num(main.p_abs));
    s.insert("qe".into(), num(main.quantum_efficiency));
    s.insert("r_incident".into(), num(main.r_incident));
    s.insert("eta_herald".into(), num(main.eta_herald));
    s.insert("readings".into(), readings.into());
    Ok(s)
}
