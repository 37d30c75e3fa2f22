//! Pulsed traces: the source beat note and g2 of 400 ps pulses, HOM
//! interference of diagonal photons, and the background time traces of the
//! spin-control sequence.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rustfft::{num_complex::Complex, FftPlanner};
use serde_json::json;

use super::correlations::readout_photons;
use super::{num, Outputs, ScenarioConfig, Summary};
use crate::analysis::{g2_pulsed, hom_ratio, pulsed_correlation, HOM_REFERENCE_PEAKS};
use crate::cascade::{background_intensity, BackgroundSpec, CascadeMode, CascadeSystem, SourceModel};
use crate::detection::{detect, histogram, DetectorSpec, StreamMeta};
use crate::emitters::{
    build_source_system, ColorDrive, SourceDotSpec, SourceDrive, EXCITON_BLUE, EXCITON_RED, GROUND, TAG_HERALD,
};
use crate::error::{Error, Result};
use crate::quantum::{
    counting_distribution, evolve_master_schedule, substream, CMatrix, Interval, JumpChannel, Liouvillian,
    OpenSystem, QuantumState, Schedule, C64,
};
use crate::sequencer::{compile, period_for_rate, Event, PulseProgram, PumpChoice, Segment, ShotContext};

const TAG_SOURCE_ANY: &str = "source-out";

/// Same system with every jump channel carrying `tag`, so that photons of
/// both colors are counted together.
fn merge_tags(sys: &OpenSystem, tag: &str) -> Result<OpenSystem> {
    let jumps: Vec<JumpChannel> = sys
        .jumps()
        .iter()
        .map(|j| {
            let mut j = j.clone();
            j.tag = tag.into();
            j
        })
        .collect();
    Ok(OpenSystem::with_frame(sys.hamiltonian().clone(), jumps, sys.frame().to_vec())?)
}

/// One period: a square two-color pulse from `t = 0`, then free decay.
fn pulse_schedule(spec: &SourceDotSpec, rabi: f64, pulse: f64, period: f64) -> Result<Schedule> {
    let c = Some(ColorDrive { rabi, detuning: 0.0 });
    let on = merge_tags(&build_source_system(spec, &SourceDrive { blue: c, red: c })?, TAG_SOURCE_ANY)?;
    let off = merge_tags(&build_source_system(spec, &SourceDrive::default())?, TAG_SOURCE_ANY)?;
    Ok(Schedule {
        intervals: vec![Interval { start: 0.0, end: pulse, system: on }, Interval { start: pulse, end: period, system: off }],
        kicks: vec![],
    })
}

const MAX_PHOTONS: usize = 6;

fn photon_numbers(sched: &Schedule) -> Result<Vec<f64>> {
    Ok(counting_distribution(&QuantumState::basis(3, GROUND), sched, TAG_SOURCE_ANY, MAX_PHOTONS)?)
}

/// `Σ n(n−1)P(n) / (Σ n P(n))²`, the pulsed center/side ratio.
fn g2_of(p: &[f64]) -> f64 {
    let m1: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
    let m2: f64 = p.iter().enumerate().map(|(n, x)| (n * n.saturating_sub(1)) as f64 * x).sum();
    m2 / (m1 * m1)
}

/// Drive amplitude whose re-excitation gives `target` (bisection; g2 rises
/// with pulse area below a π pulse).
fn calibrate_rabi(spec: &SourceDotSpec, pulse: f64, period: f64, target: f64) -> Result<f64> {
    let g2 = |r: f64| -> Result<f64> { Ok(g2_of(&photon_numbers(&pulse_schedule(spec, r, pulse, period)?)?)) };
    let (mut lo, mut hi) = (0.05, 1.2 * 0.4 / pulse);
    let (g_lo, g_hi) = (g2(lo)?, g2(hi)?);
    if !(g_lo < target && target < g_hi) {
        return Err(Error::Config(format!(
            "timetrace.g2_target = {target}: reachable range for this pulse is ({g_lo:.4}, {g_hi:.4})"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if g2(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Detected intensity of both colors through a common polarization:
/// `(Γ/2)⟨(σ_b + σ_r)†(σ_b + σ_r)⟩`, reference frame, so the coherence
/// between the excitons beats at the fine-structure splitting.
fn beat_intensity(rho: &CMatrix, gamma: f64) -> f64 {
    let b = EXCITON_BLUE;
    let r = EXCITON_RED;
    0.5 * gamma * (rho[(b, b)].re + rho[(r, r)].re + 2.0 * rho[(b, r)].re)
}

/// Inverse-CDF sampler over a uniform grid.
struct TimeSampler {
    t: Vec<f64>,
    cdf: Vec<f64>,
}

impl TimeSampler {
    fn new(t: Vec<f64>, density: &[f64]) -> Self {
        let mut cdf = vec![0.0; t.len()];
        for i in 1..t.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]).max(0.0) * (t[i] - t[i - 1]);
        }
        let total = cdf[t.len() - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { t, cdf }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.t.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.t[i - 1] + w * (self.t[i] - self.t[i - 1])
    }
}

fn dft_magnitudes(counts: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = counts.iter().map(|&c| Complex::new(c, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|z| z.norm()).collect()
}

/// Photon counts per pulse follow the counting distribution of the pulsed
/// source; emission times are drawn from the detected intensity. Photons are
/// split 50/50 onto two detectors (HBT) and the same stream, folded, gives
/// the beat-note trace.
pub(super) fn fig2d(cfg: &ScenarioConfig, digest: &str, o: &mut Outputs) -> Result<Summary> {
    let p = &cfg.timetrace;
    let det = cfg.detector();
    let mut spec = cfg.source.clone();
    spec.voltage = spec.v0;
    let period = period_for_rate(p.rep_rate_mhz);
    let rabi = match p.rabi {
        Some(r) => r,
        None => calibrate_rabi(&spec, p.pulse_ns, period, p.g2_target)?,
    };
    let sched = pulse_schedule(&spec, rabi, p.pulse_ns, period)?;
    let pn = photon_numbers(&sched)?;
    let g2_model = g2_of(&pn);
    let mean_n: f64 = pn.iter().enumerate().map(|(n, x)| n as f64 * x).sum();

    let meta = StreamMeta::new(period, cfg.shots.unwrap_or(p.pulses), cfg.master_seed, digest);
    let period_ps = meta.period_ps;
    let grid: Vec<f64> = (0..=period_ps).map(|k| k as f64 * 1e-3).filter(|&t| t <= period).collect();
    let states = evolve_master_schedule(&QuantumState::basis(3, GROUND), &sched, &grid)?;
    let intensity: Vec<f64> = states.iter().map(|s| beat_intensity(&s.to_density(), spec.gamma)).collect();
    let sampler = TimeSampler::new(grid.clone(), &intensity);

    let eff = p.efficiency * det.efficiency;
    let mut cum = Vec::with_capacity(pn.len());
    let mut acc = 0.0;
    for x in &pn {
        acc += x;
        cum.push(acc);
    }
    let mut rng = substream(cfg.master_seed, 0);
    let mut events = Vec::new();
    for shot in 0..meta.n_shots {
        let u: f64 = rng.random::<f64>() * acc;
        let n = cum.partition_point(|&c| c <= u).min(pn.len() - 1);
        for _ in 0..n {
            if rng.random::<f64>() >= eff {
                continue;
            }
            let route = u32::from(rng.random::<bool>());
            let time = sampler.sample(&mut rng);
            events.push(Event { shot, time, tag: TAG_SOURCE_ANY.into(), route: Some(route), physical: true });
        }
    }
    // efficiency already applied per photon
    let thinned = DetectorSpec { efficiency: 1.0, ..det.clone() };
    let stream = detect(&events, &thinned, meta, &mut substream(cfg.master_seed, 1));
    drop(events);

    let (edges, counts) = histogram(&stream, p.bin_ps, true)?;
    let nb = counts.len();
    let mut model = vec![0.0; nb];
    for (t, i) in grid.iter().zip(&intensity) {
        let k = (((t * 1e3).round() as i64 / p.bin_ps) as usize).min(nb - 1);
        model[k] += i;
    }
    let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
    let total: f64 = c.iter().sum();
    let model_total: f64 = model.iter().sum();
    let rows: Vec<[f64; 3]> =
        (0..nb).map(|k| [edges[k] as f64, c[k], model[k] * total / model_total]).collect();
    o.csv("timetrace.csv", &["bin_ps", "counts", "model"], &rows)?;

    let period_ns = period_ps as f64 * 1e-3;
    let mag = dft_magnitudes(&c);
    let spectrum_rows: Vec<[f64; 2]> = (0..=nb / 2).map(|k| [k as f64 / period_ns, mag[k]]).collect();
    o.csv("timetrace_spectrum.csv", &["frequency_ghz", "magnitude"], &spectrum_rows)?;
    let k_min = (period_ns.ceil() as usize).max(1);
    let k_peak = (k_min..=nb / 2).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(k_min);
    let f_peak = k_peak as f64 / period_ns;
    let k_beat = (spec.fss * period_ns).round() as usize;
    let f_beat = k_beat as f64 / period_ns;
    let visibility = 2.0 * mag[k_beat] / mag[0];
    let sigma_v = (2.0 / mag[0]).sqrt();
    let model_mag = dft_magnitudes(&model);
    let v0 = 2.0 * model_mag[k_beat] / model_mag[0];
    let sj = det.jitter_sigma * 1e-3;
    let v_pred = v0 * (-2.0 * std::f64::consts::PI.powi(2) * f_beat * f_beat * sj * sj).exp();

    let g2 = g2_pulsed(&stream, period_ps, Some((0, 1)), p.side_peaks)?;
    let stream_written = o.stream("clicks.csv", &stream)?;

    let mut s = Summary::new();
    s.insert("rabi_ghz".into(), num(rabi));
    s.insert("rabi_calibrated".into(), p.rabi.is_none().into());
    s.insert("photons_per_pulse".into(), num(mean_n));
    s.insert("g2_model".into(), num(g2_model));
    s.insert(
        "g2".into(),
        json!({ "ratio": num(g2.ratio), "sigma": num(g2.sigma), "center": g2.center, "side_mean": num(g2.side_mean) }),
    );
    s.insert(
        "beat".into(),
        json!({
            "peak_frequency_ghz": num(f_peak),
            "expected_ghz": num(spec.fss),
            "bin_ghz": num(1.0 / period_ns),
            "within_one_bin": (f_peak - spec.fss).abs() <= 1.0 / period_ns,
            "harmonic_ghz": num(f_beat),
            "visibility": num(visibility),
            "visibility_sigma": num(sigma_v),
            "visibility_no_jitter": num(v0),
            "visibility_predicted": num(v_pred),
            "within_3_sigma": (visibility - v_pred).abs() <= 3.0 * sigma_v,
        }),
    );
    s.insert("clicks".into(), (stream.len() as u64).into());
    s.insert("stream_written".into(), stream_written.into());
    Ok(s)
}

/// Unbalanced Mach-Zehnder with a delay of one pulse spacing. Photons of
/// consecutive pulses meet at the second beamsplitter when the earlier one
/// takes the long arm and the later one the short arm; with parallel
/// polarizations they leave through the same port with probability equal to
/// the wavepacket overlap.
pub(super) fn hom(cfg: &ScenarioConfig, digest: &str, o: &mut Outputs) -> Result<Summary> {
    let h = &cfg.hom;
    let det = cfg.detector();
    let n = cfg.shots.unwrap_or(h.pulses);
    let lifetime = Exp::new(cfg.target.gamma).map_err(|e| Error::Config(format!("target.gamma: {e}")))?;
    let eta = h.detection_efficiency * det.efficiency;
    let thinned = DetectorSpec { efficiency: 1.0, ..det.clone() };
    let mut streams = Vec::new();
    for (i, parallel) in [(0u64, true), (1, false)] {
        let mut rng = substream(cfg.master_seed, i);
        let mut events = Vec::new();
        let mut delayed: Option<f64> = None;
        for slot in 0..n {
            let mut arrivals: Vec<f64> = delayed.take().into_iter().collect();
            if rng.random::<f64>() < h.photon_probability {
                let t = lifetime.sample(&mut rng);
                if rng.random::<bool>() {
                    arrivals.push(t);
                } else {
                    delayed = Some(t);
                }
            }
            let ports: Vec<u32> = match arrivals.len() {
                2 if parallel && rng.random::<f64>() < h.overlap => {
                    let p = u32::from(rng.random::<bool>());
                    vec![p, p]
                }
                k => (0..k).map(|_| u32::from(rng.random::<bool>())).collect(),
            };
            for (t, port) in arrivals.into_iter().zip(ports) {
                if rng.random::<f64>() < eta {
                    events.push(Event { shot: slot, time: t, tag: TAG_HERALD.into(), route: Some(port), physical: true });
                }
            }
        }
        let meta = StreamMeta::new(h.delay_ns, n, cfg.master_seed, digest);
        streams.push(detect(&events, &thinned, meta, &mut rng));
    }
    let period_ps = streams[0].meta.period_ps;
    let ratio = hom_ratio(&streams[0], &streams[1], period_ps, (0, 1))?;
    let k = HOM_REFERENCE_PEAKS.1;
    let par = pulsed_correlation(&streams[0], period_ps, Some((0, 1)), k);
    let orth = pulsed_correlation(&streams[1], period_ps, Some((0, 1)), k);
    let rows: Vec<[f64; 3]> =
        (0..par.peaks.len()).map(|i| [i as f64 - k as f64, par.peaks[i] as f64, orth.peaks[i] as f64]).collect();
    o.csv("hom_peaks.csv", &["delay_periods", "parallel", "orthogonal"], &rows)?;
    let w1 = o.stream("clicks_parallel.csv", &streams[0])?;
    let w2 = o.stream("clicks_orthogonal.csv", &streams[1])?;
    let mut s = Summary::new();
    s.insert("factor".into(), num(ratio.factor));
    s.insert("sigma".into(), num(ratio.sigma));
    s.insert("lower_bound".into(), ratio.lower_bound.into());
    s.insert("expected_factor".into(), num(1.0 / (1.0 - h.overlap)));
    s.insert("center_parallel".into(), ratio.center_parallel.into());
    s.insert("center_orthogonal".into(), ratio.center_orthogonal.into());
    s.insert("streams_written".into(), (w1 && w2).into());
    Ok(s)
}

/// Herald-channel emission rate (1/ns) of the target on `times` within one
/// period, averaged over four consecutive shots of the periodic regime.
fn dot_trace(prog: &PulseProgram, cascade: &CascadeSystem, times: &[f64]) -> Result<Vec<f64>> {
    let mut rho = CMatrix::zeros(4, 4);
    rho[(0, 0)] = C64::from(0.5);
    rho[(1, 1)] = C64::from(0.5);
    let mut state = QuantumState::mixed(rho)?;
    let mut acc = vec![0.0; times.len()];
    let (warm, avg) = (4u64, 4u64);
    for shot in 0..warm + avg {
        let sched = compile(prog, cascade, &ShotContext::for_shot(shot))?;
        let mut grid = vec![0.0];
        grid.extend(times.iter().copied().filter(|&t| t > 0.0 && t < prog.period));
        grid.push(prog.period);
        let states = evolve_master_schedule(&state, &sched, &grid)?;
        if shot >= warm {
            let mut cache: HashMap<usize, Liouvillian> = HashMap::new();
            for (k, &t) in times.iter().enumerate() {
                let g = grid.iter().position(|&x| x == t).unwrap_or(0);
                let iv = sched.intervals.iter().position(|iv| t >= iv.start && t < iv.end).unwrap_or(0);
                let lv = cache.entry(iv).or_insert_with(|| Liouvillian::new(&sched.intervals[iv].system));
                let r: f64 = lv
                    .channel_rates(&states[g].to_density())
                    .iter()
                    .zip(lv.tags())
                    .filter(|(_, tag)| *tag == TAG_HERALD)
                    .map(|(r, _)| r)
                    .sum();
                acc[k] += r / avg as f64;
            }
        }
        state = states.last().cloned().ok_or_else(|| Error::Runtime("empty master evolution".into()))?;
    }
    Ok(acc)
}

/// Five traces of the spin-control sequence (pump then π/2 rotation), each
/// the dot fluorescence seen through the readout chain plus the detector-level
/// background of the lasers that are on.
pub(super) fn backgrounds(cfg: &ScenarioConfig, o: &mut Outputs) -> Result<Summary> {
    let b = &cfg.backgrounds;
    let period = period_for_rate(b.rep_rate_mhz);
    let n_shots = cfg.shots.unwrap_or((b.minutes * 60.0 * b.rep_rate_mhz * 1e6).round() as u64);
    let bg = cfg.background();
    let pump = Segment::SpinPump { start: 0.0, duration: 4.0, transition: PumpChoice::Readout, rabi: b.pump_rabi };
    let rotate = Segment::Rotate { at: 13.0, angle: std::f64::consts::FRAC_PI_2, axis: [0.0, 1.0, 0.0] };
    let program = |segments: Vec<Segment>| PulseProgram { segments, period, ..PulseProgram::default() };
    let photons = readout_photons(&cfg.target, b.pump_rabi)?;
    let eta = cfg.correlations.readout_probability / photons;

    let sub = 10i64;
    let nb = ((period * 1e3).round() as i64 / b.bin_ps) as usize;
    let times: Vec<f64> =
        (0..nb as i64 * sub).map(|j| (j as f64 + 0.5) * b.bin_ps as f64 / sub as f64 * 1e-3).collect();
    let dt = b.bin_ps as f64 * 1e-3 / sub as f64;

    let off_target = {
        let mut t = cfg.target.clone();
        t.detuning_offset += b.off_resonance_ghz;
        t
    };
    let no_tail = BackgroundSpec { tpe_amplitude: 0.0, ..bg.clone() };
    let traces: [(&str, Vec<Segment>, bool, &crate::emitters::TargetDotSpec, &BackgroundSpec); 5] = [
        ("grey", vec![pump.clone(), rotate.clone()], true, &cfg.target, &bg),
        ("blue", vec![pump.clone()], true, &cfg.target, &bg),
        ("green", vec![rotate.clone()], true, &cfg.target, &bg),
        ("red", vec![pump.clone(), rotate.clone()], true, &off_target, &no_tail),
        ("orange", vec![], false, &cfg.target, &bg),
    ];
    let mut expected_cols = Vec::new();
    let mut summary_traces = serde_json::Map::new();
    for (i, (name, segs, dot, target, bgs)) in traces.iter().enumerate() {
        let prog = program(segs.clone());
        let cascade = CascadeSystem {
            source: SourceModel::Neutral(cfg.source.clone()),
            target: (*target).clone(),
            channel: cfg.channel.clone(),
            mode: CascadeMode::TargetOnly,
        };
        let qd = if *dot && !segs.is_empty() { dot_trace(&prog, &cascade, &times)? } else { vec![0.0; times.len()] };
        let mut expected = vec![0.0; nb];
        for (j, (&t, q)) in times.iter().zip(&qd).enumerate() {
            expected[j / sub as usize] += (eta * q + background_intensity(bgs, &prog, t)) * dt * n_shots as f64;
        }
        let mut rng = substream(cfg.master_seed, i as u64);
        let counts: Vec<f64> = expected
            .iter()
            .map(|&m| if m > 0.0 { Poisson::new(m).map(|d| d.sample(&mut rng)).unwrap_or(0.0) } else { 0.0 })
            .collect();
        let max = expected.iter().cloned().fold(0.0, f64::max);
        let min = expected.iter().cloned().fold(f64::INFINITY, f64::min);
        summary_traces.insert(
            name.to_string(),
            json!({
                "expected_max_per_bin": num(max),
                "expected_min_per_bin": num(min),
                "max_min_ratio": num(max / min),
                "total_counts": counts.iter().sum::<f64>() as u64,
            }),
        );
        expected_cols.push(counts);
    }
    let rows: Vec<Vec<f64>> = (0..nb)
        .map(|k| {
            let mut r = vec![(k as i64 * b.bin_ps) as f64];
            r.extend(expected_cols.iter().map(|c| c[k]));
            r
        })
        .collect();
    o.csv("backgrounds.csv", &["bin_ps", "grey", "blue", "green", "red", "orange"], &rows)?;
    let mut s = Summary::new();
    s.insert("shots".into(), n_shots.into());
    s.insert("readout_efficiency".into(), num(eta));
    s.insert("traces".into(), summary_traces.into());
    Ok(s)
}
