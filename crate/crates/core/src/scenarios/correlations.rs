//! Color/spin correlations: heralds in the herald window of one shot paired
//! with readout clicks in the next shot.
//!
//! At 20 MHz for 46 h there are ~3e12 shots and only ~1e5 heralds, so the
//! event statistics are drawn directly instead of shot by shot. The spin
//! state after a true herald comes from the joint master equation; the
//! fraction of true heralds among herald-window clicks is set by the measured
//! correct:incorrect ratio.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde_json::json;

use super::{num, Outputs, ScenarioConfig, Summary};
use crate::analysis::{coincidences, correlation_fidelity};
use crate::cascade::{build_cascade, color_qubit, heralded_conditional_state};
use crate::detection::{ns_to_ps, ClickStream, StreamMeta};
use crate::emitters::{TargetDotSpec, TargetDrive, Transition, TAG_HERALD, UP};
use crate::error::{Error, Result};
use crate::quantum::{substream, CVector, QuantumState, Schedule, C64};
use crate::sequencer::{
    expected_jumps_in_window, period_for_rate, round_robin, Color, PulseProgram, Spin, ROUND_ROBIN,
};

/// Mean diagonal photons emitted during one 4 ns readout pump of a bright
/// spin.
pub(super) fn readout_photons(target: &TargetDotSpec, rabi: f64) -> Result<f64> {
    let drive = TargetDrive { transition: Transition::VerticalBlue, rabi, detuning: 0.0 };
    let sys = crate::emitters::build_target_system(target, &[drive])?;
    let sched = Schedule::single(sys, 4.0);
    Ok(expected_jumps_in_window(&sched, &QuantumState::basis(4, UP), TAG_HERALD, (0.0, 4.0), 400)?)
}

fn pump_rabi(prog: &PulseProgram) -> f64 {
    prog.segments
        .iter()
        .find_map(|s| match s {
            crate::sequencer::Segment::SpinPump { rabi, .. } => Some(*rabi),
            _ => None,
        })
        .unwrap_or(0.5)
}

pub(super) fn fig3(cfg: &ScenarioConfig, digest: &str, o: &mut Outputs) -> Result<Summary> {
    let c = &cfg.correlations;
    let period = period_for_rate(c.rep_rate_mhz);
    let prog = PulseProgram::correlation_protocol(period, 0.0);
    let n_shots = cfg.shots.unwrap_or((c.hours * 3600.0 * c.rep_rate_mhz * 1e6).round() as u64);
    let n_shots = n_shots - n_shots % 4;
    if n_shots < 8 {
        return Err(Error::Config("shots: need at least 8 for the four-label round robin".into()));
    }
    let exposure_s = n_shots as f64 * period * 1e-9;

    // spin left by a true herald, ideal source excitation
    let cascade = build_cascade(&cfg.source, &cfg.target, &cfg.channel)?;
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let plus = QuantumState::pure(CVector::from_vec(vec![h, h]))?;
    let window = (0.0, prog.herald_window.1 - prog.herald_window.0);
    let one = C64::from(1.0);
    let zero = C64::from(0.0);
    let q_red = heralded_conditional_state(&cascade, &color_qubit(one, zero)?, &plus, window)?.rho[(0, 0)].re;
    let q_blue = heralded_conditional_state(&cascade, &color_qubit(zero, one)?, &plus, window)?.rho[(1, 1)].re;
    let q = 0.5 * (q_red + q_blue);
    let r = c.correct_ratio;
    let signal_fraction = (r - 1.0) / ((2.0 * q - 1.0) * (r + 1.0));
    if !(0.0..=1.0).contains(&signal_fraction) {
        return Err(Error::Config(format!(
            "correlations.correct_ratio = {r} needs a signal fraction {signal_fraction:.3} outside [0, 1] for spin fidelity {q:.4}"
        )));
    }

    let period_ps = ns_to_ps(period);
    let (h0, h1) = (ns_to_ps(prog.herald_window.0), ns_to_ps(prog.herald_window.1));
    let (r0, r1) = (ns_to_ps(prog.readout_window.0), ns_to_ps(prog.readout_window.1));
    let bg = cfg.background();
    let dark_per_readout = (bg.dark_rate + bg.ambient_rate) * (r1 - r0) as f64 * 1e-12;
    let per_label = c.herald_rate * exposure_s / 4.0;
    let blocks = n_shots / 4;
    let mut raw: Vec<(u32, i64)> = Vec::new();
    let mut heralds = [0u64; 4];
    for (l, label) in ROUND_ROBIN.iter().enumerate() {
        let mut rng = substream(cfg.master_seed, l as u64);
        let draw = |m: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            if m > 0.0 { Poisson::new(m).map(|d| d.sample(rng) as u64).unwrap_or(0) } else { 0 }
        };
        let n_signal = draw(per_label * signal_fraction, &mut rng);
        let n_background = draw(per_label * (1.0 - signal_fraction), &mut rng);
        heralds[l] = n_signal + n_background;
        let q_label = if label.input == Color::Red { q_red } else { q_blue };
        for k in 0..n_signal + n_background {
            // the last block has no next shot to read out in
            let shot = 4 * rng.random_range(0..blocks - 1) + l as u64;
            let t = rng.random_range(h0..h1);
            raw.push((0, shot as i64 * period_ps + t));
            let correct = if label.input == Color::Red { Spin::Up } else { Spin::Down };
            let spin = if k < n_signal {
                if rng.random::<f64>() < q_label { correct } else { flip(correct) }
            } else if rng.random::<bool>() {
                Spin::Up
            } else {
                Spin::Down
            };
            let p_click = if spin == label.readout { c.readout_probability } else { dark_per_readout };
            if rng.random::<f64>() < p_click {
                let t = rng.random_range(r0..r1);
                raw.push((0, (shot + 1) as i64 * period_ps + t));
            }
        }
    }
    let meta = StreamMeta::new(period, n_shots, cfg.master_seed, digest);
    let stream = ClickStream::from_absolute(meta, raw);
    let table = coincidences(&stream, &prog, round_robin);
    let rows: Vec<[f64; 3]> = (0..2)
        .flat_map(|ci| (0..2).map(move |si| (ci, si)))
        .map(|(ci, si)| [ci as f64, si as f64, table.counts[ci][si] as f64])
        .collect();
    o.csv("coincidences.csv", &["input_blue", "readout_down", "counts"], &rows)?;
    let written = o.stream("clicks.csv", &stream)?;

    let photons = readout_photons(&cfg.target, pump_rabi(&prog))?;
    let mut s = Summary::new();
    s.insert("shots".into(), n_shots.into());
    s.insert("exposure_hours".into(), num(exposure_s / 3600.0));
    s.insert("herald_clicks".into(), heralds.iter().sum::<u64>().into());
    s.insert("signal_fraction".into(), num(signal_fraction));
    s.insert("spin_fidelity_red".into(), num(q_red));
    s.insert("spin_fidelity_blue".into(), num(q_blue));
    s.insert(
        "table".into(),
        json!({
            "red_up": table.counts[0][0], "red_down": table.counts[0][1],
            "blue_up": table.counts[1][0], "blue_down": table.counts[1][1],
        }),
    );
    s.insert("coincidences".into(), table.total().into());
    s.insert("rate_per_hour".into(), num(table.rate_per_hour()));
    s.insert("correct".into(), table.correct().into());
    s.insert("incorrect".into(), table.incorrect().into());
    let ratio = if table.incorrect() > 0 { num(table.correct() as f64 / table.incorrect() as f64) } else { json!(null) };
    s.insert("correct_incorrect_ratio".into(), ratio);
    let fid = correlation_fidelity(&table)?;
    s.insert("fidelity".into(), json!({ "value": num(fid.value), "sigma": num(fid.sigma) }));
    s.insert("photons_per_pump".into(), num(photons));
    s.insert("readout_efficiency".into(), num(c.readout_probability / photons));
    s.insert("stream_written".into(), written.into());
    Ok(s)
}

fn flip(s: Spin) -> Spin {
    match s {
        Spin::Up => Spin::Down,
        Spin::Down => Spin::Up,
    }
}
