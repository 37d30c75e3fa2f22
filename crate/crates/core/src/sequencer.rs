//! Timed pulse programs compiled to piecewise-constant schedules, and shot
//! execution.
//!
//! Shots run in consecutive blocks on one trajectory so the spin state left by
//! a shot is what the next shot's pump pulse reads out. Blocks are independent
//! and seeded by block index; the readout window of the first shot of a block
//! is taken from the tail of the previous block.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{background_intensity, BackgroundSpec, CascadeMode, CascadeSystem};
use crate::emitters::{
    self, embed_target_unitary, sample_overhauser, spin_rotation, ColorDrive, OverhauserModel, SourceDrive,
    TargetDrive, Transition, ROTATION_TRION_LIMIT,
};
use crate::quantum::{
    substream, CMatrix, CVector, Interval, Kick, KickGuard, OpenSystem, QuantumError, QuantumState,
    Result, Schedule, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    /// Vertical transition that fluoresces when the spin is in this state.
    pub fn readout_transition(self) -> Transition {
        match self {
            Spin::Up => Transition::VerticalBlue,
            Spin::Down => Transition::VerticalRed,
        }
    }
}

/// Input color and readout basis state of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShotLabel {
    pub input: Color,
    pub readout: Spin,
}

pub const ROUND_ROBIN: [ShotLabel; 4] = [
    ShotLabel { input: Color::Red, readout: Spin::Up },
    ShotLabel { input: Color::Red, readout: Spin::Down },
    ShotLabel { input: Color::Blue, readout: Spin::Up },
    ShotLabel { input: Color::Blue, readout: Spin::Down },
];

pub fn round_robin(shot: u64) -> ShotLabel {
    ROUND_ROBIN[(shot % 4) as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpChoice {
    /// Readout basis of the previous shot's label.
    Readout,
    #[serde(untagged)]
    Fixed(Transition),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colors {
    Red,
    Blue,
    Both,
    /// The shot label's input color.
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Square,
    /// Amplitude `e^{−(t − start)/tau}`, sampled in `steps` constant pieces.
    Exp { tau: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputState {
    /// Red or blue from the shot label.
    Label,
    /// `α|red⟩ + β|blue⟩` as `[re, im]` pairs.
    Amplitudes { alpha: [f64; 2], beta: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    SpinPump { start: f64, duration: f64, transition: PumpChoice, rabi: f64 },
    Rotate { at: f64, angle: f64, axis: [f64; 3] },
    SourceDrive { start: f64, duration: f64, colors: Colors, rabi: f64, shape: Shape, detuning: f64 },
    /// Ideal instantaneous excitation of the source into a color qubit.
    SourceExcite { at: f64, input: InputState },
    Wait { start: f64, duration: f64 },
}

impl Segment {
    pub fn span(&self) -> (f64, f64) {
        match *self {
            Segment::SpinPump { start, duration, .. }
            | Segment::SourceDrive { start, duration, .. }
            | Segment::Wait { start, duration } => (start, start + duration),
            Segment::Rotate { at, .. } | Segment::SourceExcite { at, .. } => (at, at),
        }
    }

    pub fn is_instant(&self) -> bool {
        matches!(self, Segment::Rotate { .. } | Segment::SourceExcite { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseProgram {
    pub segments: Vec<Segment>,
    /// ns.
    pub period: f64,
    pub n_shots: u64,
    pub herald_window: (f64, f64),
    pub readout_window: (f64, f64),
    /// Shots per independently seeded trajectory block.
    pub block: u64,
}

impl Default for PulseProgram {
    fn default() -> Self {
        Self { segments: vec![], period: 50.0, n_shots: 0, herald_window: (15.0, 19.0), readout_window: (0.0, 4.0), block: 256 }
    }
}

/// Repetition period for a rate in MHz.
pub fn period_for_rate(mhz: f64) -> f64 {
    1e3 / mhz
}

impl PulseProgram {
    /// Spin pump, π/2 rotation, single-photon pulse and readout on the next
    /// shot's pump.
    pub fn correlation_protocol(period: f64, source_rabi: f64) -> Self {
        Self {
            segments: vec![
                Segment::SpinPump { start: 0.0, duration: 4.0, transition: PumpChoice::Readout, rabi: 0.5 },
                Segment::Rotate { at: 13.0, angle: std::f64::consts::FRAC_PI_2, axis: [0.0, 1.0, 0.0] },
                Segment::SourceDrive {
                    start: 15.0,
                    duration: 0.4,
                    colors: Colors::Input,
                    rabi: source_rabi,
                    shape: Shape::Square,
                    detuning: 0.0,
                },
            ],
            period,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QuantumError::Invalid(m));
        if !(self.period > 0.0) {
            return bad("period must be positive".into());
        }
        for (name, (a, b)) in [("herald_window", self.herald_window), ("readout_window", self.readout_window)] {
            if !(a >= 0.0 && b > a && b <= self.period) {
                return bad(format!("{name} ({a}, {b}) ns must lie within the period"));
            }
        }
        if self.block == 0 {
            return bad("block must be at least 1".into());
        }
        let mut spans: Vec<(f64, f64)> = Vec::new();
        for s in &self.segments {
            let (a, b) = s.span();
            if !(a >= 0.0) || b > self.period + 1e-12 || b < a {
                return bad(format!("segment {s:?} outside [0, period]"));
            }
            match s {
                Segment::SourceDrive { rabi, .. } | Segment::SpinPump { rabi, .. } if *rabi < 0.0 => {
                    return bad("negative drive amplitude".into());
                }
                Segment::SourceDrive { shape: Shape::Exp { tau, steps }, .. } if !(*tau > 0.0) || *steps == 0 => {
                    return bad("exponential shape needs tau > 0 and steps ≥ 1".into());
                }
                _ => {}
            }
            if !s.is_instant() {
                if let Some(o) = spans.iter().find(|&&(c, d)| a < d && c < b) {
                    return bad(format!("overlapping drive segments at [{a}, {b}] and [{}, {}] ns", o.0, o.1));
                }
                spans.push((a, b));
            }
        }
        Ok(())
    }

    pub fn last_end(&self) -> f64 {
        self.segments.iter().map(|s| s.span().1).fold(0.0, f64::max)
    }
}

/// What varies from shot to shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotContext {
    pub input: Color,
    /// Pump transition for `PumpChoice::Readout` segments.
    pub pump: Transition,
}

impl ShotContext {
    pub fn for_shot(shot: u64) -> Self {
        let prev = if shot == 0 { round_robin(0) } else { round_robin(shot - 1) };
        Self { input: round_robin(shot).input, pump: prev.readout.readout_transition() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Active {
    pump: Option<TargetDrive>,
    source: SourceDrive,
}

fn active_at(prog: &PulseProgram, ctx: &ShotContext, t: f64) -> Active {
    let mut act = Active::default();
    for s in &prog.segments {
        let (a, b) = s.span();
        if !(t >= a && t < b) {
            continue;
        }
        match *s {
            Segment::SpinPump { transition, rabi, .. } => {
                let tr = match transition {
                    PumpChoice::Readout => ctx.pump,
                    PumpChoice::Fixed(x) => x,
                };
                act.pump = Some(TargetDrive { transition: tr, rabi, detuning: 0.0 });
            }
            Segment::SourceDrive { start, colors, rabi, shape, detuning, .. } => {
                let amp = match shape {
                    Shape::Square => rabi,
                    Shape::Exp { tau, .. } => rabi * (-(t - start) / tau).exp(),
                };
                let c = Some(ColorDrive { rabi: amp, detuning });
                let (blue, red) = match colors {
                    Colors::Blue => (true, false),
                    Colors::Red => (false, true),
                    Colors::Both => (true, true),
                    Colors::Input => (ctx.input == Color::Blue, ctx.input == Color::Red),
                };
                act.source = SourceDrive { blue: if blue { c } else { None }, red: if red { c } else { None } };
            }
            _ => {}
        }
    }
    act
}

/// Interval boundaries: period ends, segment edges and shape sub-steps.
fn boundaries(prog: &PulseProgram) -> Vec<f64> {
    let mut t = vec![0.0, prog.period];
    for s in &prog.segments {
        let (a, b) = s.span();
        if s.is_instant() {
            continue;
        }
        t.push(a);
        t.push(b);
        if let Segment::SourceDrive { shape: Shape::Exp { steps, .. }, .. } = s {
            for k in 1..*steps {
                t.push(a + (b - a) * k as f64 / *steps as f64);
            }
        }
    }
    t.retain(|x| *x >= 0.0 && *x <= prog.period);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    t
}

/// Piecewise-constant schedule of one shot. Drives are sampled at interval
/// midpoints; kicks are expressed on the compiled system's levels.
pub fn compile(prog: &PulseProgram, cascade: &CascadeSystem, ctx: &ShotContext) -> Result<Schedule> {
    prog.validate()?;
    let edges = boundaries(prog);
    let mut cache: HashMap<String, OpenSystem> = HashMap::new();
    let mut intervals = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let act = active_at(prog, ctx, 0.5 * (a + b));
        let key = format!("{act:?}");
        let sys = match cache.get(&key) {
            Some(s) => s.clone(),
            None => {
                let drives: Vec<TargetDrive> = act.pump.into_iter().collect();
                let s = match cascade.mode {
                    CascadeMode::Joint => cascade.joint_system(&act.source, &drives)?,
                    CascadeMode::TargetOnly => cascade.target_only_system(&drives, (C64::from(0.0), C64::from(0.0)))?,
                };
                cache.insert(key, s.clone());
                s
            }
        };
        intervals.push(Interval { start: a, end: b, system: sys });
    }
    if cascade.mode == CascadeMode::TargetOnly {
        intervals = with_mean_field_input(prog, cascade, ctx, intervals)?;
    }
    let ds = match cascade.mode {
        CascadeMode::Joint => cascade.source_dim(),
        CascadeMode::TargetOnly => 1,
    };
    let trion_levels: Vec<usize> =
        (0..ds).flat_map(|s| [s * 4 + emitters::TRION_BLUE, s * 4 + emitters::TRION_RED]).collect();
    let mut kicks = Vec::new();
    for s in &prog.segments {
        match *s {
            Segment::Rotate { at, angle, axis } => kicks.push(Kick {
                time: at,
                unitary: embed_target_unitary(&spin_rotation(angle, axis)?, ds, 1),
                label: format!("rotate {angle:.4} rad"),
                guard: Some(KickGuard { levels: trion_levels.clone(), max_population: ROTATION_TRION_LIMIT }),
            }),
            Segment::SourceExcite { at, input } => {
                if cascade.mode != CascadeMode::Joint || cascade.source_dim() != 3 {
                    return Err(QuantumError::Invalid("source_excite needs the joint neutral-source cascade".into()));
                }
                let (alpha, beta) = match input {
                    InputState::Label => match ctx.input {
                        Color::Red => (C64::from(1.0), C64::from(0.0)),
                        Color::Blue => (C64::from(0.0), C64::from(1.0)),
                    },
                    InputState::Amplitudes { alpha, beta } => {
                        (C64::new(alpha[0], alpha[1]), C64::new(beta[0], beta[1]))
                    }
                };
                let qubit = crate::cascade::color_qubit(alpha, beta)?;
                let u = excitation_unitary(&qubit);
                kicks.push(Kick {
                    time: at,
                    unitary: u.kronecker(&CMatrix::identity(4, 4)),
                    label: "source excitation".into(),
                    guard: None,
                });
            }
            _ => {}
        }
    }
    Ok(Schedule { intervals, kicks })
}

/// Unitary taking the source ground state to `target` (Householder reflection).
fn excitation_unitary(target: &CVector) -> CMatrix {
    let n = target.len();
    let mut e0 = CVector::zeros(n);
    e0[0] = C64::from(1.0);
    // phase so that ⟨e0|v⟩ is real and non-positive keeps the reflection stable
    let phase = if target[0].norm() > 0.0 { target[0] / target[0].norm() } else { C64::from(1.0) };
    let w = &e0 * phase - target;
    let wn = w.norm();
    if wn < 1e-14 {
        return CMatrix::identity(n, n);
    }
    let w = w / C64::from(wn);
    let h = CMatrix::identity(n, n) - (&w * w.adjoint()) * C64::from(2.0);
    // h maps phase·e0 → target
    h * phase
}

/// Replace source drive intervals by the classical field they radiate, for
/// the target-only representation.
fn with_mean_field_input(
    prog: &PulseProgram,
    cascade: &CascadeSystem,
    ctx: &ShotContext,
    intervals: Vec<Interval>,
) -> Result<Vec<Interval>> {
    let crate::cascade::SourceModel::Neutral(spec) = &cascade.source else {
        return Err(QuantumError::Invalid("target-only input needs a neutral source".into()));
    };
    let step = 0.05;
    let mut starts: Vec<f64> = Vec::new();
    for s in &prog.segments {
        if let Segment::SourceDrive { start, .. } = s {
            starts.push(*start);
        }
    }
    if starts.is_empty() {
        return Ok(intervals);
    }
    let tail = (10.0 / spec.gamma).min(prog.period);
    // mean field on a fine grid from the first source pulse on
    let t0 = starts[0];
    let t1 = (t0 + prog.last_end().max(t0) - t0 + tail).min(prog.period);
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
    let mut src_sched = Vec::new();
    for w in grid.windows(2) {
        let act = active_at(prog, ctx, 0.5 * (w[0] + w[1]));
        src_sched.push(Interval { start: w[0], end: w[1], system: cascade.free_source_system(&act.source)? });
    }
    let sched = Schedule { intervals: src_sched, kicks: vec![] };
    let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut times = vec![t0];
    times.extend(mids.iter().copied());
    let states = crate::quantum::evolve_master_schedule(&QuantumState::basis(3, emitters::GROUND), &sched, &times)?;
    let half = emitters::ghz(spec.fss) / 2.0;
    let mut out = Vec::new();
    for iv in intervals {
        if iv.end <= t0 || iv.start >= t1 {
            out.push(iv);
            continue;
        }
        let act = active_at(prog, ctx, 0.5 * (iv.start + iv.end));
        let drives: Vec<TargetDrive> = act.pump.into_iter().collect();
        let mut cuts: Vec<f64> = vec![iv.start.max(t0), iv.end.min(t1)];
        cuts.extend(grid.iter().copied().filter(|&g| g > iv.start && g < iv.end));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if iv.start < t0 {
            out.push(Interval { start: iv.start, end: t0, system: iv.system.clone() });
        }
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let k = mids.iter().position(|&m| (m - mid).abs() <= step).unwrap_or(0);
            let rho = states[k + 1].to_density();
            // ⟨σ⟩ in the frame of the nominal color frequency
            let sb = rho[(emitters::EXCITON_BLUE, emitters::GROUND)] * C64::from_polar(1.0, -half * mid);
            let sr = rho[(emitters::EXCITON_RED, emitters::GROUND)] * C64::from_polar(1.0, half * mid);
            let sys = cascade.target_only_system(&drives, (sb, sr))?;
            out.push(Interval { start: w[0], end: w[1], system: sys });
        }
        if iv.end > t1 {
            out.push(Interval { start: t1, end: iv.end, system: iv.system.clone() });
        }
    }
    Ok(out)
}

/// Emission or background event within a shot.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub shot: u64,
    /// ns within the shot.
    pub time: f64,
    pub tag: String,
    pub route: Option<u32>,
    /// False for background draws. Dropped by detection.
    pub physical: bool,
}

pub const TAG_BACKGROUND: &str = "background";

/// Inhomogeneous Poisson draws on `[0, period)` by thinning against `bound`.
pub fn sample_background<R: Rng + ?Sized>(
    bg: &BackgroundSpec,
    prog: &PulseProgram,
    bound: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::new();
    if !(bound > 0.0) {
        return out;
    }
    let gap = Exp::new(bound).expect("positive bound");
    let mut t = gap.sample(rng);
    while t < prog.period {
        let lam = background_intensity(bg, prog, t);
        if rng.random::<f64>() * bound < lam {
            out.push(t);
        }
        t += gap.sample(rng);
    }
    out
}

/// Upper bound of the background intensity over one period.
pub fn background_bound(bg: &BackgroundSpec, prog: &PulseProgram) -> f64 {
    let n = 20_000;
    let peak = (0..=n).map(|k| background_intensity(bg, prog, prog.period * k as f64 / n as f64)).fold(0.0, f64::max);
    1.5 * peak
}

#[derive(Debug, Clone, Default)]
pub struct ShotOptions {
    /// Start each block from this spin state (`None`: random ↑/↓).
    pub initial_spin: Option<Spin>,
    /// Label schedule; default is the four-way round robin.
    pub fixed_context: Option<ShotContext>,
}

pub fn run_shots(
    prog: &PulseProgram,
    cascade: &CascadeSystem,
    bg: &BackgroundSpec,
    overhauser: &OverhauserModel,
    master_seed: u64,
) -> Result<Vec<Event>> {
    run_shots_with(prog, cascade, bg, overhauser, master_seed, &ShotOptions::default())
}

pub fn run_shots_with(
    prog: &PulseProgram,
    cascade: &CascadeSystem,
    bg: &BackgroundSpec,
    overhauser: &OverhauserModel,
    master_seed: u64,
    opts: &ShotOptions,
) -> Result<Vec<Event>> {
    prog.validate()?;
    bg.validate()?;
    if prog.n_shots == 0 {
        return Ok(vec![]);
    }
    let bound = background_bound(bg, prog);
    let n_blocks = prog.n_shots.div_ceil(prog.block);
    let blocks: Vec<Vec<Event>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| run_block(prog, cascade, bg, overhauser, master_seed, b, bound, opts))
        .collect::<Result<_>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

#[allow(clippy::too_many_arguments)]
fn run_block(
    prog: &PulseProgram,
    cascade: &CascadeSystem,
    bg: &BackgroundSpec,
    overhauser: &OverhauserModel,
    seed: u64,
    block: u64,
    bound: f64,
    opts: &ShotOptions,
) -> Result<Vec<Event>> {
    let mut rng = substream(seed, block);
    let first = block * prog.block;
    let last = ((block + 1) * prog.block).min(prog.n_shots);
    let ds = match cascade.mode {
        CascadeMode::Joint => cascade.source_dim(),
        CascadeMode::TargetOnly => 1,
    };
    let spin = opts.initial_spin.unwrap_or(if rng.random::<bool>() { Spin::Up } else { Spin::Down });
    let t_level = match spin {
        Spin::Up => emitters::UP,
        Spin::Down => emitters::DOWN,
    };
    let mut state = CVector::zeros(ds * 4);
    state[t_level] = C64::from(1.0);
    let mut events = Vec::new();
    let mut cache: HashMap<(u64, u64), Schedule> = HashMap::new();
    // the shot after the block only contributes its readout window
    let extra = if last < prog.n_shots { 1 } else { 0 };
    for shot in first..last + extra {
        let ctx = opts.fixed_context.unwrap_or_else(|| ShotContext::for_shot(shot));
        let shift = sample_overhauser(overhauser, &mut rng);
        let sched = if shift == 0.0 {
            let key = (shot % 4, u64::from(opts.fixed_context.is_some()));
            match cache.get(&key) {
                Some(s) => s.clone(),
                None => {
                    let s = compile(prog, cascade, &ctx)?;
                    cache.insert(key, s.clone());
                    s
                }
            }
        } else {
            let mut c = cascade.clone();
            c.target.overhauser_shift += shift;
            compile(prog, &c, &ctx)?
        };
        let out = crate::quantum::evolve_trajectory_schedule(&QuantumState::Pure(state), &sched, &[], &mut rng)?;
        state = out.state;
        let tail_only = shot == last;
        let skip_readout = shot == first && block > 0;
        let in_readout = |t: f64| t >= prog.readout_window.0 && t < prog.readout_window.1;
        let keep = |t: f64| if tail_only { in_readout(t) } else { !(skip_readout && in_readout(t)) };
        for j in out.jumps {
            if keep(j.time) {
                events.push(Event { shot, time: j.time, tag: j.tag, route: j.detector_route, physical: true });
            }
        }
        for t in sample_background(bg, prog, bound, &mut rng) {
            if keep(t) {
                events.push(Event { shot, time: t, tag: TAG_BACKGROUND.into(), route: Some(0), physical: false });
            }
        }
    }
    events.sort_by(|a, b| a.shot.cmp(&b.shot).then(a.time.total_cmp(&b.time)));
    Ok(events)
}

/// Master-equation prediction of the mean number of `tag` jumps inside
/// `window` for one shot starting from `initial`.
pub fn expected_jumps_in_window(
    sched: &Schedule,
    initial: &QuantumState,
    tag: &str,
    window: (f64, f64),
    steps: usize,
) -> Result<f64> {
    let grid: Vec<f64> = (0..=steps).map(|k| window.0 + (window.1 - window.0) * k as f64 / steps as f64).collect();
    let mut full = vec![sched.start()];
    full.extend(grid.iter().copied().filter(|&t| t > sched.start()));
    let states = crate::quantum::evolve_master_schedule(initial, sched, &full)?;
    let offset = full.len() - grid.len();
    let rates: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let iv = sched.intervals.iter().find(|iv| t >= iv.start && t <= iv.end).expect("inside schedule");
            let rho = states[k + offset].to_density();
            let lv = crate::quantum::Liouvillian::new(&iv.system);
            // states are in the reference frame; channel rates are frame invariant
            // for operators whose elements share one frame offset
            lv.channel_rates(&rho).iter().zip(lv.tags()).filter(|(_, t)| *t == tag).map(|(r, _)| r).sum()
        })
        .collect();
    let h = (window.1 - window.0) / steps as f64;
    // Simpson
    let mut s = rates[0] + rates[steps];
    for (k, r) in rates.iter().enumerate().take(steps).skip(1) {
        s += if k % 2 == 1 { 4.0 * r } else { 2.0 * r };
    }
    Ok(s * h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitters::TAG_HERALD;
    use crate::cascade::{build_cascade, ChannelSpec};
    use crate::emitters::{SourceDotSpec, TargetDotSpec};

    fn cascade() -> CascadeSystem {
        build_cascade(&SourceDotSpec::default(), &TargetDotSpec::default(), &ChannelSpec::ideal()).unwrap()
    }

    #[test]
    fn empty_program_is_one_interval() {
        let p = PulseProgram::default();
        let s = compile(&p, &cascade(), &ShotContext::for_shot(0)).unwrap();
        assert_eq!(s.intervals.len(), 1);
        assert!(s.kicks.is_empty());
    }

    #[test]
    fn correlation_program_boundaries() {
        let p = PulseProgram::correlation_protocol(50.0, 1.25);
        let s = compile(&p, &cascade(), &ShotContext::for_shot(1)).unwrap();
        let starts: Vec<f64> = s.intervals.iter().map(|i| i.start).collect();
        assert_eq!(starts, vec![0.0, 4.0, 15.0, 15.4]);
        assert_eq!(s.end(), 50.0);
        assert_eq!(s.kicks.len(), 1);
        assert_eq!(s.kicks[0].time, 13.0);
    }

    #[test]
    fn pump_choice_only_changes_pump_interval() {
        let p = PulseProgram::correlation_protocol(50.0, 1.25);
        let c = cascade();
        let a = compile(&p, &c, &ShotContext { input: Color::Red, pump: Transition::VerticalBlue }).unwrap();
        let b = compile(&p, &c, &ShotContext { input: Color::Red, pump: Transition::VerticalRed }).unwrap();
        for (k, (x, y)) in a.intervals.iter().zip(&b.intervals).enumerate() {
            let same = x.system == y.system;
            assert_eq!(same, k != 0, "interval {k}");
        }
    }

    #[test]
    fn overlapping_segments_rejected() {
        let mut p = PulseProgram::correlation_protocol(50.0, 1.0);
        p.segments.push(Segment::Wait { start: 2.0, duration: 3.0 });
        assert!(p.validate().is_err());
    }

    #[test]
    fn round_robin_is_balanced() {
        let mut counts = HashMap::new();
        for s in 0..4003u64 {
            *counts.entry(round_robin(s)).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| c == 1000 || c == 1001));
    }

    #[test]
    fn excitation_unitary_maps_ground() {
        let v = crate::cascade::color_qubit(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let u = excitation_unitary(&v);
        let e0 = CVector::from_vec(vec![C64::from(1.0), C64::from(0.0), C64::from(0.0)]);
        assert!((u.clone() * e0 - &v).norm() < 1e-12);
        assert!((u.adjoint() * &u - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn zero_shots_is_empty_and_runs_are_deterministic() {
        let mut p = PulseProgram::correlation_protocol(50.0, 1.25);
        let c = cascade();
        let bg = BackgroundSpec::default();
        let oh = OverhauserModel { sigma: 0.02 };
        assert!(run_shots(&p, &c, &bg, &oh, 1).unwrap().is_empty());
        p.n_shots = 40;
        p.block = 8;
        let a = run_shots(&p, &c, &bg, &oh, 7).unwrap();
        let b = run_shots(&p, &c, &bg, &oh, 7).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn pumped_up_without_rotation_gives_no_red_readout() {
        // pump vertical-red shelves ↑; a red photon can then not be absorbed
        let mut p = PulseProgram::correlation_protocol(50.0, 1.25);
        p.segments.retain(|s| !matches!(s, Segment::Rotate { .. }));
        p.segments[0] = Segment::SpinPump { start: 0.0, duration: 4.0, transition: PumpChoice::Fixed(Transition::VerticalRed), rabi: 0.5 };
        p.n_shots = 300;
        p.block = 300;
        let c = cascade();
        let bg = BackgroundSpec::zero();
        let opts = ShotOptions { initial_spin: Some(Spin::Up), fixed_context: Some(ShotContext { input: Color::Red, pump: Transition::VerticalRed }) };
        let ev = run_shots_with(&p, &c, &bg, &OverhauserModel::default(), 3, &opts).unwrap();
        let heralds = ev.iter().filter(|e| e.tag == TAG_HERALD && e.time >= 15.0 && e.time < 40.0).count();
        assert_eq!(heralds, 0);
    }
}
