//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export wraps a plain function that also builds natively, so the
//! numbers can be tested without a browser.

use qdcascade::analysis::{protocol_metrics, ProtocolKind, ProtocolParams};
use qdcascade::emitters::ghz;
use qdcascade::quantum::{
    emission_spectrum, evolve_master, CMatrix, CVector, JumpChannel, LinearOp, OpenSystem, QuantumState, C64,
};
use qdcascade::scenarios::phase_corrected_fidelity;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 4096;

fn points_ok(points: usize) -> Result<(), String> {
    if (2..=MAX_POINTS).contains(&points) {
        Ok(())
    } else {
        Err(format!("points must be in 2..={MAX_POINTS}, got {points}"))
    }
}

fn gamma() -> f64 {
    ProtocolParams::default().gamma
}

/// Incoherent resonance-fluorescence spectrum of the driven transition as
/// interleaved `[Δω/2π in GHz, density]` pairs over ±(W + 4Γ).
pub fn mollow(rabi_ghz: f64, detuning_ghz: f64, points: usize) -> Result<Vec<f64>, String> {
    points_ok(points)?;
    if !(rabi_ghz.is_finite() && rabi_ghz >= 0.0 && detuning_ghz.is_finite()) {
        return Err("rabi must be ≥ 0 and detuning finite".into());
    }
    let (rabi, det, g) = (ghz(rabi_ghz), ghz(detuning_ghz), gamma());
    let mut h = CMatrix::zeros(2, 2);
    h[(0, 1)] = C64::from(rabi / 2.0);
    h[(1, 0)] = C64::from(rabi / 2.0);
    h[(1, 1)] = C64::from(-det);
    let lower = LinearOp::transition(2, 0, 1);
    let sys = OpenSystem::new(
        LinearOp::hermitian(h).map_err(|e| e.to_string())?,
        vec![JumpChannel::new(lower.clone(), g, "decay")],
    )
    .map_err(|e| e.to_string())?;
    let half = (rabi * rabi + det * det).sqrt() + 4.0 * g;
    let grid: Vec<f64> = (0..points).map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64).collect();
    let spec = emission_spectrum(&sys, &lower, &grid).map_err(|e| e.to_string())?;
    Ok(spec.omega.iter().zip(&spec.density).flat_map(|(&w, &d)| [w / ghz(1.0), d]).collect())
}

/// Heralded photon-to-spin transfer fidelity for a `|+⟩` color qubit, after
/// the known z rotation, with the diagonal splitting in linewidths.
pub fn transfer(diagonal_over_linewidth: f64) -> Result<f64, String> {
    if !(diagonal_over_linewidth.is_finite() && diagonal_over_linewidth >= 0.0) {
        return Err("diagonal splitting must be ≥ 0".into());
    }
    let base = ProtocolParams::default();
    let params = ProtocolParams { diagonal_splitting: diagonal_over_linewidth * base.gamma / ghz(1.0), ..base };
    let out = protocol_metrics(ProtocolKind::PhotonToSpin, &params).map_err(|e| e.to_string())?;
    let (a, b) = params.amplitudes();
    Ok(phase_corrected_fidelity(&out.rho, a, b))
}

/// Emission rate in one common polarization after exciting an equal
/// superposition of the two exciton colors, on `points` times over `[0, t_max]` ns.
pub fn beat(splitting_ghz: f64, t_max: f64, points: usize) -> Result<Vec<f64>, String> {
    points_ok(points)?;
    if !(splitting_ghz.is_finite() && t_max.is_finite() && t_max > 0.0) {
        return Err("splitting must be finite and t_max > 0".into());
    }
    let g = gamma();
    let mut h = CMatrix::zeros(3, 3);
    h[(2, 2)] = C64::from(ghz(splitting_ghz));
    let sys = OpenSystem::new(
        LinearOp::hermitian(h).map_err(|e| e.to_string())?,
        vec![
            JumpChannel::new(LinearOp::transition(3, 0, 1), g, "blue"),
            JumpChannel::new(LinearOp::transition(3, 0, 2), g, "red"),
        ],
    )
    .map_err(|e| e.to_string())?;
    let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let start = QuantumState::pure(CVector::from_vec(vec![C64::from(0.0), s, s])).map_err(|e| e.to_string())?;
    let times: Vec<f64> = (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect();
    let states = evolve_master(&start, &sys, &times).map_err(|e| e.to_string())?;
    Ok(states
        .iter()
        .map(|st| {
            let r = st.to_density();
            0.5 * g * (r[(1, 1)].re + r[(2, 2)].re + 2.0 * r[(1, 2)].re)
        })
        .collect())
}

#[wasm_bindgen]
pub fn mollow_spectrum(rabi_ghz: f64, detuning_ghz: f64, points: usize) -> Result<Vec<f64>, JsError> {
    mollow(rabi_ghz, detuning_ghz, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn transfer_fidelity(diagonal_over_linewidth: f64) -> Result<f64, JsError> {
    transfer(diagonal_over_linewidth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn beat_trace(splitting_ghz: f64, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    beat(splitting_ghz, t_max, points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_drive_shows_side_peaks() {
        let xy = mollow(5.0, 0.0, 801).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = xy.chunks(2).map(|p| (p[0], p[1])).unzip();
        let peak_near = |f: f64| {
            let i = (0..x.len()).min_by(|&a, &b| (x[a] - f).abs().total_cmp(&(x[b] - f).abs())).unwrap();
            y[i]
        };
        // side bands at ±Ω, a valley between center and side
        assert!(peak_near(5.0) > 2.0 * peak_near(2.5));
        assert!(peak_near(-5.0) > 2.0 * peak_near(-2.5));
    }

    #[test]
    fn degenerate_diagonal_transfers_perfectly() {
        assert!((transfer(0.0).unwrap() - 1.0).abs() < 1e-6);
        let far = transfer(10.0).unwrap();
        assert!(far < transfer(1.0).unwrap() && (far - 0.5).abs() < 0.01);
    }

    #[test]
    fn beat_matches_closed_form() {
        // (Γ/2) e^{−Γt} (1 + cos 2πft)
        let (f, g) = (4.9, gamma());
        let trace = beat(f, 2.0, 201).unwrap();
        for (k, &v) in trace.iter().enumerate() {
            let t = 2.0 * k as f64 / 200.0;
            let want = 0.5 * g * (-g * t).exp() * (1.0 + (ghz(f) * t).cos());
            assert!((v - want).abs() < 1e-6, "t={t}: {v} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(mollow(1.0, 0.0, 1).is_err());
        assert!(transfer(-1.0).is_err());
        assert!(beat(4.9, 0.0, 10).is_err());
    }
}
