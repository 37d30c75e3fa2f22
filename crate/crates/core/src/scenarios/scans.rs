//! Continuous-wave scans: herald rate vs gate voltage of either dot, and the
//! power map that reveals Mollow side lobes.
//!
//! Rates come from the joint steady state. The absolute scale is fixed by the
//! measured peak count rate, since the chain efficiencies of the setup are not
//! modeled photon by photon here.

use rand_distr::{Distribution, Poisson};
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{num, Outputs, ScenarioConfig, Summary};
use crate::analysis::{chi_square, fit_lorentzian};
use crate::cascade::build_cascade;
use crate::emitters::{build_source_system, ghz, ColorDrive, SourceDrive, DOWN, EXCITON_RED, GROUND, TAG_HERALD, UP};
use crate::error::{Error, Result};
use crate::quantum::{emission_spectrum, steady_state, substream, CMatrix, JumpChannel, LinearOp, Liouvillian};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Swept {
    Source,
    Target,
}

/// Steady-state herald emission rate (1/ns at the dot) with the swept dot
/// `mv` millivolts from its resonance and the fixed dot detuned by `parked`.
fn herald_rate(cfg: &ScenarioConfig, swept: Swept, mv: f64, parked: f64) -> Result<f64> {
    let mut src = cfg.source.clone();
    let mut tgt = cfg.target.clone();
    match swept {
        Swept::Source => {
            src.voltage = src.v0 + mv * 1e-3;
            tgt.detuning_offset += parked;
        }
        Swept::Target => {
            tgt.voltage = tgt.v0 + mv * 1e-3;
            src.detuning_offset += parked;
        }
    }
    let c = build_cascade(&src, &tgt, &cfg.channel)?;
    // the laser stays at the nominal exciton lines
    let d = Some(ColorDrive { rabi: cfg.scan.source_rabi, detuning: 0.0 });
    let mut sys = c.joint_system(&SourceDrive { blue: d, red: d }, &[])?;
    let eye = LinearOp::new(CMatrix::identity(c.source_dim(), c.source_dim()))?;
    for (to, from) in [(DOWN, UP), (UP, DOWN)] {
        let op = eye.kron(&LinearOp::transition(4, to, from));
        sys = sys.with_extra_jump(JumpChannel::new(op, cfg.scan.spin_mixing, "spin-mixing"))?;
    }
    let rho = steady_state(&sys)?.to_density();
    let lv = Liouvillian::new(&sys);
    Ok(lv.channel_rates(&rho).iter().zip(lv.tags()).filter(|(_, t)| *t == TAG_HERALD).map(|(r, _)| r).sum())
}

/// Crossing of `f(x) = level` between `inside` (above) and `outside` (below).
fn bisect(f: impl Fn(f64) -> Result<f64>, level: f64, mut inside: f64, mut outside: f64) -> Result<f64> {
    for _ in 0..60 {
        let mid = 0.5 * (inside + outside);
        if f(mid)? >= level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(0.5 * (inside + outside))
}

/// Full width at half maximum of the noiseless model, mV.
fn model_fwhm(f: &impl Fn(f64) -> Result<f64>, peak: f64, reach: f64) -> Result<f64> {
    let half = 0.5 * peak;
    let mut edge = reach;
    while f(edge)? >= half || f(-edge)? >= half {
        edge *= 2.0;
        if edge > 1e4 {
            return Err(Error::Runtime("scan line never drops to half maximum".into()));
        }
    }
    Ok(bisect(f, half, 0.0, edge)? - bisect(f, half, 0.0, -edge)?)
}

fn scan(cfg: &ScenarioConfig, o: &mut Outputs, swept: Swept) -> Result<Summary> {
    let p = &cfg.scan;
    let bg = cfg.background();
    let floor = bg.dark_rate + bg.ambient_rate;
    let x: Vec<f64> =
        (0..p.points).map(|k| -p.half_range_mv + 2.0 * p.half_range_mv * k as f64 / (p.points - 1) as f64).collect();
    let peak = herald_rate(cfg, swept, 0.0, 0.0)?;
    if !(peak > 0.0) {
        return Err(Error::Runtime("no herald emission on resonance".into()));
    }
    // counts per second per unit herald emission rate
    let scale = (p.peak_rate - floor) / peak;
    let mut curves = Vec::new();
    for (i, parked) in [0.0, p.off_resonance_ghz].into_iter().enumerate() {
        let stream_base = if swept == Swept::Source { 0 } else { 2 };
        let mut rng = substream(cfg.master_seed, stream_base + i as u64);
        let mut rows = Vec::with_capacity(x.len());
        let mut counts = Vec::with_capacity(x.len());
        for &xv in &x {
            let model = scale * herald_rate(cfg, swept, xv, parked)? + floor;
            let n = Poisson::new(model * p.integration_s).map(|d| d.sample(&mut rng) as u64).unwrap_or(0);
            counts.push(n);
            let rate = n as f64 / p.integration_s;
            let err = (n.max(1) as f64).sqrt() / p.integration_s;
            rows.push([xv, rate, err, model]);
        }
        curves.push((rows, counts));
    }
    let header = ["x_mv", "rate", "error", "model"];
    o.csv("scan.csv", &header, &curves[0].0)?;
    o.csv("scan_off_resonance.csv", &header, &curves[1].0)?;

    let on = &curves[0].0;
    let fit = fit_lorentzian(
        &x,
        &on.iter().map(|r| r[1]).collect::<Vec<_>>(),
        &on.iter().map(|r| r[2]).collect::<Vec<_>>(),
    )?;
    // same fit on the noiseless curve separates line shape from shot noise
    let model: Vec<f64> = on.iter().map(|r| r[3]).collect();
    let model_err: Vec<f64> = model.iter().map(|m| (m / p.integration_s).sqrt()).collect();
    let fit_model = fit_lorentzian(&x, &model, &model_err)?;
    let f = |mv: f64| herald_rate(cfg, swept, mv, 0.0);
    let fwhm_model = model_fwhm(&f, peak, p.half_range_mv / 4.0)?;
    let rel = (fit.fwhm.abs() - fwhm_model) / fwhm_model;

    let (_, off_counts) = &curves[1];
    let expected = vec![floor * p.integration_s; off_counts.len()];
    let chi2 = chi_square(off_counts, &expected);
    let dof = off_counts.len() as f64;
    let p_value = 1.0 - ChiSquared::new(dof).map_err(|e| Error::Runtime(e.to_string()))?.cdf(chi2);
    let mean_off = off_counts.iter().sum::<u64>() as f64 / (dof * p.integration_s);

    let mut s = Summary::new();
    s.insert("swept_dot".into(), (if swept == Swept::Source { "source" } else { "target" }).into());
    s.insert("background_rate".into(), num(floor));
    s.insert("scale_counts_per_emission".into(), num(scale));
    s.insert(
        "fit".into(),
        json!({
            "center_mv": num(fit.center), "fwhm_mv": num(fit.fwhm.abs()), "amplitude": num(fit.amplitude),
            "offset": num(fit.offset), "errors": fit.errors.iter().map(|&e| num(e)).collect::<Vec<_>>(),
            "chi2": num(fit.chi2), "converged": fit.converged,
        }),
    );
    s.insert("fwhm_model_mv".into(), num(fwhm_model));
    s.insert("fwhm_noiseless_fit_mv".into(), num(fit_model.fwhm.abs()));
    let rel_noiseless = (fit_model.fwhm.abs() - fwhm_model) / fwhm_model;
    s.insert("fwhm_noiseless_relative_error".into(), num(rel_noiseless));
    s.insert("fwhm_noiseless_within_5_percent".into(), (rel_noiseless.abs() <= 0.05).into());
    s.insert("fwhm_model_ghz".into(), num(fwhm_model * 1e-3 * stark(cfg, swept)));
    s.insert("fwhm_relative_error".into(), num(rel));
    s.insert("fwhm_within_5_percent".into(), (rel.abs() <= 0.05).into());
    s.insert(
        "off_resonance".into(),
        json!({
            "mean_rate": num(mean_off), "chi2": num(chi2), "dof": dof as u64, "p_value": num(p_value),
            "consistent_with_background": p_value > 0.01,
        }),
    );
    Ok(s)
}

fn stark(cfg: &ScenarioConfig, swept: Swept) -> f64 {
    match swept {
        Swept::Source => cfg.source.stark_slope,
        Swept::Target => cfg.target.stark_slope,
    }
}

pub(super) fn fig2a(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    scan(cfg, o, Swept::Source)
}

pub(super) fn fig2b(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    scan(cfg, o, Swept::Target)
}

/// Target absorption profile, unit peak, FWHM `width` (rad/ns).
fn lorentz(d: f64, width: f64) -> f64 {
    1.0 / (1.0 + (2.0 * d / width).powi(2))
}

/// Herald rate vs target detuning for a single-color drive of the source:
/// the source emission spectrum (elastic line plus Mollow triplet) filtered
/// by the weakly excited target line.
pub(super) fn fig2c(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    let p = &cfg.power_map;
    let g1 = cfg.source.gamma;
    let g2 = cfg.target.gamma;
    let mut src = cfg.source.clone();
    src.voltage = src.v0;
    let laser = -ghz(src.fss) / 2.0 + ghz(src.detuning(src.voltage));
    let sigma = LinearOp::transition(3, GROUND, EXCITON_RED);
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut per_power = Vec::new();
    let mut max_rate: f64 = 0.0;
    let mut curves = Vec::new();
    for &s in &p.saturations {
        let omega = g1 * (s / 2.0).sqrt();
        let drive = SourceDrive { blue: None, red: Some(ColorDrive { rabi: omega / (2.0 * std::f64::consts::PI), detuning: 0.0 }) };
        let sys = build_source_system(&src, &drive)?;
        let reach = omega + 10.0 * g1.max(g2);
        let step = g1.min(g2) / 40.0;
        let n = (2.0 * reach / step).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| laser - reach + k as f64 * step).collect();
        let spec = emission_spectrum(&sys, &sigma, &grid)?;
        let span = omega + 4.0 * g2;
        let det: Vec<f64> =
            (0..p.detuning_points).map(|k| -span + 2.0 * span * k as f64 / (p.detuning_points - 1) as f64).collect();
        let rate: Vec<f64> = det
            .iter()
            .map(|&d| {
                let elastic = spec.coherent_weight * lorentz(spec.coherent_omega - laser - d, g2);
                let inelastic: f64 =
                    spec.omega.iter().zip(&spec.density).map(|(&w, &sd)| sd * lorentz(w - laser - d, g2)).sum::<f64>() * step;
                elastic + inelastic
            })
            .collect();
        max_rate = rate.iter().cloned().fold(max_rate, f64::max);
        curves.push((s, omega, det, rate));
    }
    for (s, omega, det, rate) in &curves {
        let lobes: Vec<f64> = (1..rate.len() - 1)
            .filter(|&i| rate[i] > rate[i - 1] && rate[i] >= rate[i + 1] && det[i].abs() > g2)
            .map(|i| det[i] / (2.0 * std::f64::consts::PI))
            .collect();
        for (d, r) in det.iter().zip(rate) {
            rows.push([*s, d / (2.0 * std::f64::consts::PI), r / max_rate]);
        }
        per_power.push(json!({
            "saturation": num(*s),
            "rabi_ghz": num(omega / (2.0 * std::f64::consts::PI)),
            "side_lobes": !lobes.is_empty(),
            "side_lobe_detunings_ghz": lobes.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        }));
    }
    o.csv("power_map.csv", &["saturation", "detuning_ghz", "rate"], &rows)?;
    let below = per_power.iter().filter(|v| v["saturation"].as_f64().unwrap_or(0.0) <= 1.0);
    let above = per_power.iter().filter(|v| v["saturation"].as_f64().unwrap_or(0.0) > 1.0);
    let none_below = below.clone().all(|v| v["side_lobes"] == false);
    let some_above = above.clone().any(|v| v["side_lobes"] == true);
    let mut out = Summary::new();
    out.insert("powers".into(), per_power.into());
    out.insert("target_linewidth_ghz".into(), num(g2 / (2.0 * std::f64::consts::PI)));
    out.insert("side_lobes_only_above_saturation".into(), (none_below && some_above).into());
    Ok(out)
}
