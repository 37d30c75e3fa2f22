//! Oracle checks shared by the oracle tests and the acceptance run. Each
//! returns a one-line detail, `Err` when the check fails.

#![allow(dead_code)]

use qdcascade::analysis::{fit_lorentzian, lorentzian};
use qdcascade::quantum::{
    emission_spectrum, evolve_master, evolve_trajectory, evolve_trajectory_schedule, steady_state, substream, CMatrix,
    EmissionSpectrum, JumpChannel, LinearOp, OpenSystem, QuantumState, Schedule, C64,
};
use statrs::distribution::{ContinuousCDF, Exp};

pub type Check = Result<String, String>;

/// Two-level atom in the laser frame: `H = −Δ|e⟩⟨e| + (Ω/2)σ_x`, decay `Γ`.
pub fn two_level(rabi: f64, detuning: f64, gamma: f64) -> OpenSystem {
    let mut h = CMatrix::zeros(2, 2);
    h[(0, 1)] = C64::from(rabi / 2.0);
    h[(1, 0)] = C64::from(rabi / 2.0);
    h[(1, 1)] = C64::from(-detuning);
    OpenSystem::new(LinearOp::hermitian(h).unwrap(), vec![JumpChannel::new(LinearOp::transition(2, 0, 1), gamma, "decay")])
        .unwrap()
}

pub fn lowering() -> LinearOp {
    LinearOp::transition(2, 0, 1)
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

/// Local maximum of the incoherent density nearest to `near`.
pub fn nearest_peak(spec: &EmissionSpectrum, near: f64) -> f64 {
    spec.peak_indices()
        .into_iter()
        .map(|i| spec.omega[i])
        .min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs()))
        .expect("at least one peak")
}

/// First jump times of an undriven excited state against `Exp(Γ)`.
pub fn ks_exponential() -> Check {
    let gamma = 1.3;
    let sys = two_level(0.0, 0.0, gamma);
    let n = 10_000;
    let mut t: Vec<f64> = (0..n)
        .map(|k| evolve_trajectory(&QuantumState::basis(2, 1), &sys, 60.0, &mut substream(11, k)).unwrap().jumps[0].time)
        .collect();
    t.sort_by(f64::total_cmp);
    let exp = Exp::new(gamma).unwrap();
    let d = t
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = exp.cdf(x);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic Kolmogorov critical value at α = 0.01
    let crit = 1.628 / (n as f64).sqrt();
    let msg = format!("KS D = {d:.4} vs {crit:.4}");
    if d < crit { Ok(msg) } else { Err(msg) }
}

/// Excited population of 10⁴ trajectories against the master equation.
pub fn trajectories_vs_master() -> Check {
    let sys = two_level(2.0, 0.5, 1.0);
    let grid: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let master = evolve_master(&QuantumState::basis(2, 0), &sys, &grid).unwrap();
    let sched = Schedule::single(sys, 5.0);
    let runs = 10_000;
    let mut pe = vec![Vec::with_capacity(runs); grid.len()];
    for k in 0..runs {
        let out = evolve_trajectory_schedule(&QuantumState::basis(2, 0), &sched, &grid, &mut substream(12, k as u64)).unwrap();
        for (i, s) in out.snapshots.iter().enumerate() {
            pe[i].push(s[1].norm_sqr());
        }
    }
    let mut worst: f64 = 0.0;
    for (i, st) in master.iter().enumerate() {
        let (m, se) = mean_se(&pe[i]);
        let want = st.populations()[1];
        let z = if se > 0.0 { (m - want).abs() / se } else { 0.0 };
        worst = worst.max(z);
        if (m - want).abs() > 3.0 * se + 1e-9 {
            return Err(format!("t = {}: {m} ± {se} vs {want}", grid[i]));
        }
    }
    Ok(format!("largest deviation {worst:.2}σ over {} times", grid.len()))
}

/// Driven two-level steady state against `s/(2(1+s))`, `s = 2Ω²/(Γ² + 4Δ²)`.
pub fn obe_steady_state() -> Check {
    let mut worst: f64 = 0.0;
    for (rabi, det) in [(0.3, 0.0), (1.0, 0.0), (2.5, 0.0), (1.0, 0.7), (4.0, -2.0)] {
        let s = 2.0 * rabi * rabi / (1.0 + 4.0 * det * det);
        let want = s / (2.0 * (1.0 + s));
        let got = steady_state(&two_level(rabi, det, 1.0)).map_err(|e| e.to_string())?.populations()[1];
        worst = worst.max((got - want).abs());
        if (got - want).abs() >= 1e-6 {
            return Err(format!("Ω={rabi} Δ={det}: {got} vs {want}"));
        }
    }
    Ok(format!("max error {worst:.1e}"))
}

/// Mollow side peaks at `±√(Ω² + Δ²)` within one grid step on a 5×5 grid
/// in the secular regime `W ≫ Γ`, where the damping shift is `O(Γ²/W)`.
pub fn mollow_grid() -> Check {
    let step = 0.05;
    let mut worst: f64 = 0.0;
    for rabi in [20.0f64, 25.0, 30.0, 35.0, 40.0] {
        for det in [-10.0, -5.0, 0.0, 5.0, 10.0] {
            let w: f64 = (rabi * rabi + det * det).sqrt();
            let spec =
                emission_spectrum(&two_level(rabi, det, 1.0), &lowering(), &grid(-w - 4.0, w + 4.0, step)).map_err(|e| e.to_string())?;
            for side in [-w, w] {
                let p = nearest_peak(&spec, side);
                worst = worst.max((p - side).abs());
                if (p - side).abs() > step * (1.0 + 1e-9) {
                    return Err(format!("Ω={rabi} Δ={det}: peak {p} vs {side}"));
                }
            }
        }
    }
    Ok(format!("max offset {worst:.3} with grid step {step}"))
}

/// Noiseless Lorentzian recovered to 1e-6 relative.
pub fn lorentzian_recovery() -> Check {
    let truth = [0.3, 1.7, 42.0, 2.0];
    let x: Vec<f64> = (0..81).map(|k| -6.0 + 0.15 * k as f64).collect();
    let y: Vec<f64> = x.iter().map(|&v| lorentzian(v, truth[0], truth[1], truth[2], truth[3])).collect();
    let err = vec![1.0; x.len()];
    let f = fit_lorentzian(&x, &y, &err).map_err(|e| e.to_string())?;
    let got = [f.center, f.fwhm.abs(), f.amplitude, f.offset];
    let worst = got.iter().zip(&truth).map(|(g, t)| ((g - t) / t).abs()).fold(0.0, f64::max);
    let msg = format!("max relative error {worst:.1e}, converged {}", f.converged);
    if worst < 1e-6 && f.converged { Ok(msg) } else { Err(msg) }
}
