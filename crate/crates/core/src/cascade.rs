//! One-way coupling of a source emitter to the target dot.
//!
//! Each color is its own propagating mode. For a mode carrying source operator
//! `c₁` (rate `γ₁ = η_ch Γ_src`) into target operator `c₂` (rate `γ₂`), the
//! joint dynamics use the collective jump `√γ₁ c₁ + √γ₂ c₂` together with
//! `H = (i/2)√(γ₁γ₂)(c₁†c₂ − c₂†c₁)`. The untransmitted fraction of the source
//! emission leaves through `source-loss`.

use serde::{Deserialize, Serialize};

use crate::emitters::{
    self, ghz, SourceDotSpec, SourceDrive, TargetDotSpec, TargetDrive, DOWN, TAG_HERALD, TAG_LOSS_BLUE,
    TAG_LOSS_RED, TAG_SOURCE_LOSS, TRION_BLUE, TRION_RED, UP,
};
use crate::quantum::{
    herald_conditioned, partial_trace, CMatrix, CVector, JumpSpec, OpenSystem, QuantumError, QuantumState, Result,
    Schedule, SystemBuilder, C64,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    /// Source→target power transmission including spatial mode overlap.
    pub eta_ch: f64,
    /// Target emission collected by the first lens.
    pub eta_collect: f64,
    /// Polarizer transmission for target photons.
    pub eta_pol: f64,
    /// Spectral filter transmission at the diagonal frequency.
    pub eta_filter: f64,
    /// Detector quantum efficiency.
    pub eta_det: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { eta_ch: 0.20, eta_collect: 0.20, eta_pol: 0.5, eta_filter: 1.0, eta_det: 1.0 }
    }
}

impl ChannelSpec {
    pub fn ideal() -> Self {
        Self { eta_ch: 1.0, eta_collect: 1.0, eta_pol: 1.0, eta_filter: 1.0, eta_det: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_ch", self.eta_ch),
            ("eta_collect", self.eta_collect),
            ("eta_pol", self.eta_pol),
            ("eta_filter", self.eta_filter),
            ("eta_det", self.eta_det),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(QuantumError::Invalid(format!("channel.{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Probability that a herald photon leaving the target becomes a click.
    pub fn herald_efficiency(&self) -> f64 {
        self.eta_collect * self.eta_pol * self.eta_filter * self.eta_det
    }
}

/// Level scheme feeding the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceModel {
    /// Neutral dot `g, X_b, X_r` emitting a color qubit.
    Neutral(SourceDotSpec),
    /// Charged dot `↑₁, ↓₁, T_b, T_r` whose `↑₁` transitions match the target
    /// verticals; decays to `↓₁` are filtered out.
    ChargedTransfer { gamma: f64, vertical: f64, electron: f64 },
    /// Charged dot `↑₁, ↓₁, T` whose single trion decays blue to `↑₁` and
    /// red to `↓₁` with equal weight.
    ChargedEntangler { gamma: f64, vertical: f64 },
}

pub const TAG_SOURCE_FILTERED: &str = "source-filtered";

struct SourceLevels {
    builder: SystemBuilder,
    /// `(lower, upper)` emitter elements and rate feeding each color.
    blue: (Vec<(usize, usize)>, f64),
    red: (Vec<(usize, usize)>, f64),
}

impl SourceModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::Neutral(_) => 3,
            Self::ChargedTransfer { .. } => 4,
            Self::ChargedEntangler { .. } => 3,
        }
    }

    fn levels(&self, drive: &SourceDrive) -> Result<SourceLevels> {
        match self {
            Self::Neutral(spec) => {
                let mut b = emitters::source_builder(spec, drive)?;
                b.jumps.clear();
                Ok(SourceLevels {
                    builder: b,
                    blue: (vec![(emitters::GROUND, emitters::EXCITON_BLUE)], spec.gamma),
                    red: (vec![(emitters::GROUND, emitters::EXCITON_RED)], spec.gamma),
                })
            }
            &Self::ChargedTransfer { gamma, vertical, electron } => {
                let half = ghz(vertical) / 2.0;
                let b = SystemBuilder::new(4)
                    .energy(1, ghz(electron))
                    .energy(2, half)
                    .energy(3, -half)
                    .jump(JumpSpec::lowering(1, 2, gamma / 2.0, TAG_SOURCE_FILTERED))
                    .jump(JumpSpec::lowering(1, 3, gamma / 2.0, TAG_SOURCE_FILTERED));
                Ok(SourceLevels { builder: b, blue: (vec![(0, 2)], gamma / 2.0), red: (vec![(0, 3)], gamma / 2.0) })
            }
            &Self::ChargedEntangler { gamma, vertical } => {
                let half = ghz(vertical) / 2.0;
                let b = SystemBuilder::new(3).energy(0, -half).energy(1, half);
                Ok(SourceLevels { builder: b, blue: (vec![(0, 2)], gamma / 2.0), red: (vec![(1, 2)], gamma / 2.0) })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMode {
    /// Source and target evolved jointly.
    #[default]
    Joint,
    /// Target alone, driven by the mean field of the source.
    TargetOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSystem {
    pub source: SourceModel,
    pub target: TargetDotSpec,
    pub channel: ChannelSpec,
    pub mode: CascadeMode,
}

pub fn build_cascade(src: &SourceDotSpec, tgt: &TargetDotSpec, ch: &ChannelSpec) -> Result<CascadeSystem> {
    src.validate()?;
    tgt.validate()?;
    ch.validate()?;
    Ok(CascadeSystem { source: SourceModel::Neutral(src.clone()), target: tgt.clone(), channel: ch.clone(), mode: CascadeMode::Joint })
}

impl CascadeSystem {
    pub fn with_source(source: SourceModel, tgt: &TargetDotSpec, ch: &ChannelSpec) -> Result<Self> {
        tgt.validate()?;
        ch.validate()?;
        Ok(Self { source, target: tgt.clone(), channel: ch.clone(), mode: CascadeMode::Joint })
    }

    pub fn source_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            CascadeMode::Joint => self.source_dim() * 4,
            CascadeMode::TargetOnly => 4,
        }
    }

    /// Target vertical coupling rate `Γ₂ · b_v`.
    fn target_vertical_rate(&self) -> f64 {
        self.target.gamma * self.target.branching_vertical
    }

    /// Joint system on `source ⊗ target` (index `s·4 + t`).
    pub fn joint_system(&self, src_drive: &SourceDrive, tgt_drives: &[TargetDrive]) -> Result<OpenSystem> {
        let src = self.source.levels(src_drive)?;
        let mut tgt = emitters::target_builder(&self.target, tgt_drives)?;
        tgt.jumps.retain(|j| j.tag == TAG_HERALD);
        let mut joint = src.builder.tensor(&tgt);
        let nt = 4;
        let idx = |s: usize, t: usize| s * nt + t;
        let eta = self.channel.eta_ch;
        let g2 = self.target_vertical_rate();
        for ((ops, g_src), (tl, tu), tag) in [
            (&src.blue, (UP, TRION_BLUE), TAG_LOSS_BLUE),
            (&src.red, (DOWN, TRION_RED), TAG_LOSS_RED),
        ] {
            let g1 = eta * g_src;
            let mut terms = Vec::new();
            for &(sl, su) in ops {
                for t in 0..nt {
                    terms.push((idx(sl, t), idx(su, t), C64::from(g1.sqrt())));
                }
            }
            for s in 0..src.builder.dim {
                terms.push((idx(s, tl), idx(s, tu), C64::from(g2.sqrt())));
            }
            joint.jumps.push(JumpSpec { terms, rate: 1.0, tag: tag.into(), detector_route: None });
            if eta < 1.0 {
                let mut loss = Vec::new();
                for &(sl, su) in ops {
                    for t in 0..nt {
                        loss.push((idx(sl, t), idx(su, t), C64::from(1.0)));
                    }
                }
                joint.jumps.push(JumpSpec { terms: loss, rate: (1.0 - eta) * g_src, tag: TAG_SOURCE_LOSS.into(), detector_route: None });
            }
            // (i/2)√(γ₁γ₂) c₁†c₂ + h.c.
            let k = C64::new(0.0, 0.5 * (g1 * g2).sqrt());
            if k.norm() > 0.0 {
                for &(sl, su) in ops {
                    joint.couplings.push((idx(su, tl), idx(sl, tu), k));
                }
            }
        }
        joint.build()
    }

    /// Source system alone with the same channel losses, for reference.
    pub fn free_source_system(&self, src_drive: &SourceDrive) -> Result<OpenSystem> {
        let mut src = self.source.levels(src_drive)?;
        for ((ops, g), tag) in [(&src.blue, "source-out-blue"), (&src.red, "source-out-red")] {
            let terms = ops.iter().map(|&(l, u)| (l, u, C64::from(1.0))).collect();
            src.builder.jumps.push(JumpSpec { terms, rate: *g, tag: tag.into(), detector_route: None });
        }
        src.builder.build()
    }

    /// Target alone driven by a classical field on each vertical transition.
    /// `input` gives the field amplitude `⟨c₁⟩` of each color (blue, red).
    pub fn target_only_system(&self, tgt_drives: &[TargetDrive], input: (C64, C64)) -> Result<OpenSystem> {
        let mut b = emitters::target_builder(&self.target, tgt_drives)?;
        let g2 = self.target_vertical_rate();
        let half = ghz(self.target.vertical_splitting()) / 2.0;
        let g_src = match &self.source {
            SourceModel::Neutral(s) => s.gamma,
            SourceModel::ChargedTransfer { gamma, .. } | SourceModel::ChargedEntangler { gamma, .. } => gamma / 2.0,
        };
        let g1 = self.channel.eta_ch * g_src;
        for (amp, upper, lower, freq) in [(input.0, TRION_BLUE, UP, half), (input.1, TRION_RED, DOWN, -half)] {
            // field term −i√(γ₁γ₂)(⟨c₁⟩ c₂† − h.c.) = (Ω/2)e^{iφ}|u⟩⟨l| + h.c.
            let coupling = C64::new(0.0, -1.0) * amp * (g1 * g2).sqrt();
            if coupling.norm() > 0.0 {
                b = b.drive(crate::quantum::Drive {
                    upper,
                    lower,
                    rabi: 2.0 * coupling.norm(),
                    frequency: freq,
                    phase: coupling.arg(),
                });
            }
        }
        b.build()
    }

    /// Embed a target state as `source_state ⊗ target_state`.
    pub fn joint_state(&self, source: &CVector, target: &QuantumState) -> Result<QuantumState> {
        if source.len() != self.source_dim() || target.dim() != 4 {
            return Err(QuantumError::DimensionMismatch { expected: self.source_dim() * 4, found: source.len() * target.dim() });
        }
        Ok(match target {
            QuantumState::Pure(t) => QuantumState::Pure(source.kronecker(t)),
            QuantumState::Mixed(r) => {
                let s = source * source.adjoint();
                QuantumState::Mixed(s.kronecker(r))
            }
        })
    }

    /// Reduced target density matrix of a joint state.
    pub fn reduce_to_target(&self, rho: &CMatrix) -> CMatrix {
        partial_trace(rho, (self.source_dim(), 4), false)
    }

    /// Reduced source density matrix of a joint state.
    pub fn reduce_to_source(&self, rho: &CMatrix) -> CMatrix {
        partial_trace(rho, (self.source_dim(), 4), true)
    }
}

/// Embed a spin state (dimension 2) or pass a target state (dimension 4).
pub fn spin_to_target(state: &QuantumState) -> Result<QuantumState> {
    match state.dim() {
        4 => Ok(state.clone()),
        2 => Ok(match state {
            QuantumState::Pure(v) => {
                QuantumState::Pure(CVector::from_vec(vec![v[0], v[1], C64::from(0.0), C64::from(0.0)]))
            }
            QuantumState::Mixed(r) => {
                let mut m = CMatrix::zeros(4, 4);
                m.view_mut((0, 0), (2, 2)).copy_from(r);
                QuantumState::Mixed(m)
            }
        }),
        d => Err(QuantumError::DimensionMismatch { expected: 2, found: d }),
    }
}

/// Color qubit `α|red⟩ + β|blue⟩` of an ideally excited neutral source.
pub fn color_qubit(alpha: C64, beta: C64) -> Result<CVector> {
    let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(QuantumError::Invalid("input amplitudes must satisfy |α|² + |β|² = 1".into()));
    }
    let mut v = CVector::zeros(3);
    v[emitters::EXCITON_RED] = alpha;
    v[emitters::EXCITON_BLUE] = beta;
    Ok(v)
}

/// Heralded spin state: density matrix on `(↑, ↓)` in the frame of the bare
/// spin at the end time, plus the herald probability.
#[derive(Debug, Clone)]
pub struct ConditionalSpin {
    pub rho: CMatrix,
    pub probability: f64,
    /// Population left outside the ground doublet (normalized).
    pub trion_population: f64,
    pub t_end: f64,
}

impl ConditionalSpin {
    /// Fidelity to `α|↑⟩ + β|↓⟩`.
    pub fn fidelity(&self, alpha: C64, beta: C64) -> f64 {
        spin_fidelity(&self.rho, alpha, beta)
    }
}

pub fn spin_fidelity(rho: &CMatrix, alpha: C64, beta: C64) -> f64 {
    let v = CVector::from_vec(vec![alpha, beta]);
    (v.adjoint() * rho * &v)[(0, 0)].re
}

/// Remove the free spin precession accumulated over `t` (reference frame).
pub fn larmor_correct(rho: &CMatrix, target: &TargetDotSpec, t: f64) -> CMatrix {
    let e = target.energies();
    let u = CMatrix::from_diagonal(&CVector::from_vec(vec![
        C64::from_polar(1.0, e[UP] * t),
        C64::from_polar(1.0, e[DOWN] * t),
    ]));
    &u * rho * u.adjoint()
}

/// Spin block of a target density matrix, renormalized.
pub fn spin_block(target_rho: &CMatrix) -> (CMatrix, f64) {
    let block = target_rho.view((0, 0), (2, 2)).into_owned();
    let tr = block.trace().re;
    let total = target_rho.trace().re;
    (block / C64::from(tr), 1.0 - tr / total)
}

/// Condition on exactly one herald inside `window` for an ideally excited
/// source in `source_state`, evolving freely until the window end.
pub fn heralded_conditional_state(
    cascade: &CascadeSystem,
    source_state: &CVector,
    spin_prep: &QuantumState,
    window: (f64, f64),
) -> Result<ConditionalSpin> {
    let sys = cascade.joint_system(&SourceDrive::default(), &[])?;
    let init = cascade.joint_state(source_state, &spin_to_target(spin_prep)?)?;
    let sched = Schedule::single(sys, window.1);
    let out = herald_conditioned(&init, &sched, TAG_HERALD, window, window.1)?;
    let (rho, trion) = spin_block(&cascade.reduce_to_target(&out.state));
    Ok(ConditionalSpin {
        rho: larmor_correct(&rho, &cascade.target, window.1),
        probability: out.probability,
        trion_population: trion,
        t_end: window.1,
    })
}

/// Trajectory estimate of the same conditional state.
#[derive(Debug, Clone)]
pub struct SampledConditional {
    pub rho: CMatrix,
    pub kept: usize,
    pub runs: usize,
    /// Per-run fidelities of the kept runs.
    pub fidelities: Vec<f64>,
}

impl SampledConditional {
    pub fn herald_probability(&self) -> f64 {
        self.kept as f64 / self.runs as f64
    }

    pub fn mean_fidelity(&self) -> (f64, f64) {
        let n = self.fidelities.len() as f64;
        let mean = self.fidelities.iter().sum::<f64>() / n;
        let var = self.fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

pub fn heralded_conditional_trajectories(
    cascade: &CascadeSystem,
    source_state: &CVector,
    spin_prep: &CVector,
    window: (f64, f64),
    target: (C64, C64),
    runs: usize,
    seed: u64,
) -> Result<SampledConditional> {
    use rayon::prelude::*;
    let sys = cascade.joint_system(&SourceDrive::default(), &[])?;
    let init = cascade.joint_state(source_state, &spin_to_target(&QuantumState::pure(spin_prep.clone())?)?)?;
    let sched = Schedule::single(sys, window.1);
    let results: Vec<Option<CMatrix>> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = crate::quantum::substream(seed, k as u64);
            let out = crate::quantum::evolve_trajectory_schedule(&init, &sched, &[], &mut rng)?;
            let heralds = out.jumps.iter().filter(|j| j.tag == TAG_HERALD && j.time >= window.0 && j.time <= window.1).count();
            if heralds != 1 {
                return Ok(None);
            }
            let psi = &out.state;
            let rho = psi * psi.adjoint();
            let (spin, _) = spin_block(&cascade.reduce_to_target(&rho));
            Ok(Some(larmor_correct(&spin, &cascade.target, window.1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<CMatrix> = results.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(QuantumError::HeraldTooRare { probability: 0.0 });
    }
    let mut rho = CMatrix::zeros(2, 2);
    for r in &kept {
        rho += r;
    }
    rho /= C64::from(kept.len() as f64);
    let fidelities = kept.iter().map(|r| spin_fidelity(r, target.0, target.1)).collect();
    Ok(SampledConditional { rho, kept: kept.len(), runs, fidelities })
}

/// Detector-level background rates. Laser terms follow the scheduled pulses;
/// between pulses each laser leaks at its on-level divided by the extinction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundSpec {
    /// 1/s.
    pub dark_rate: f64,
    /// 1/s.
    pub ambient_rate: f64,
    pub eom_extinction: f64,
    /// Scattered pump light while the pump is on, 1/ns at `pump_ref_rabi`.
    pub pump_leak: f64,
    /// GHz.
    pub pump_ref_rabi: f64,
    /// Copies of the pump window `pump_echo_delay` ns later.
    pub pump_echo_delay: f64,
    pub pump_echo_suppression: f64,
    /// Leaked counts per rotation pulse.
    pub ps_leak_counts: f64,
    /// Gaussian width of a rotation pulse as seen by the detector, ns.
    pub ps_width: f64,
    /// Spacing of residual pulse-train replicas, ns.
    pub replica_period: f64,
    pub replica_suppression: f64,
    /// Relaxation tail after each rotation pulse, 1/ns at the pulse.
    pub tpe_amplitude: f64,
    pub tpe_short_tau: f64,
    pub tpe_long_tau: f64,
    pub tpe_short_fraction: f64,
    /// Rotation pulse power relative to the calibration point.
    pub tpe_power: f64,
    /// Rotation pulse detuning relative to the calibration point.
    pub tpe_detuning: f64,
    /// Scattered source-laser light while a source pulse is on, 1/ns.
    pub source_leak: f64,
}

/// The tail scales with the square of pulse power and of detuning.
pub const TPE_POWER_EXPONENT: i32 = 2;
pub const TPE_DETUNING_EXPONENT: i32 = 2;

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            dark_rate: 1.0,
            ambient_rate: 1.0,
            eom_extinction: 1e6,
            pump_leak: 0.0,
            pump_ref_rabi: 0.5,
            pump_echo_delay: 38.0,
            pump_echo_suppression: 1e3,
            ps_leak_counts: 0.0,
            ps_width: 0.03,
            replica_period: 13.158,
            replica_suppression: 1e2,
            tpe_amplitude: 0.0,
            tpe_short_tau: 0.6,
            tpe_long_tau: 6.0,
            tpe_short_fraction: 0.5,
            tpe_power: 1.0,
            tpe_detuning: 1.0,
            source_leak: 0.0,
        }
    }
}

impl BackgroundSpec {
    pub fn zero() -> Self {
        Self { dark_rate: 0.0, ambient_rate: 0.0, ..Self::default() }
    }

    /// Laser-related terms of the spin-control sequence. Pump leakage sits a
    /// few hundred times below the dot counts during the pump, and the
    /// relaxation tail stays below the 2 s⁻¹ floor by the herald window.
    pub fn lab() -> Self {
        Self { pump_leak: 1e-6, ps_leak_counts: 1e-5, tpe_amplitude: 2e-8, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("dark_rate", self.dark_rate),
            ("ambient_rate", self.ambient_rate),
            ("pump_leak", self.pump_leak),
            ("ps_leak_counts", self.ps_leak_counts),
            ("tpe_amplitude", self.tpe_amplitude),
            ("source_leak", self.source_leak),
        ];
        for (k, v) in rates {
            if !(v >= 0.0) {
                return Err(QuantumError::Invalid(format!("background.{k} must be ≥ 0")));
            }
        }
        for (k, v) in [
            ("eom_extinction", self.eom_extinction),
            ("pump_echo_suppression", self.pump_echo_suppression),
            ("replica_suppression", self.replica_suppression),
        ] {
            if !(v >= 1.0) {
                return Err(QuantumError::Invalid(format!("background.{k} must be ≥ 1")));
            }
        }
        for (k, v) in [("ps_width", self.ps_width), ("tpe_short_tau", self.tpe_short_tau), ("tpe_long_tau", self.tpe_long_tau), ("replica_period", self.replica_period)] {
            if !(v > 0.0) {
                return Err(QuantumError::Invalid(format!("background.{k} must be > 0")));
            }
        }
        Ok(())
    }

    fn tpe_scale(&self) -> f64 {
        self.tpe_power.powi(TPE_POWER_EXPONENT) * self.tpe_detuning.powi(TPE_DETUNING_EXPONENT)
    }
}

/// Background click intensity (1/ns) at time `t` within the period.
pub fn background_intensity(bg: &BackgroundSpec, seq: &crate::sequencer::PulseProgram, t: f64) -> f64 {
    use crate::sequencer::Segment;
    let period = seq.period;
    let mut lam = (bg.dark_rate + bg.ambient_rate) * 1e-9;
    // offset of t after an event at `at`, folded into one period
    let since = |at: f64| (t - at).rem_euclid(period);
    let inside = |a: f64, b: f64| {
        let x = since(a);
        x < b - a
    };
    let mut pump_on = false;
    let mut source_on = false;
    for s in &seq.segments {
        match *s {
            Segment::SpinPump { start, duration, rabi, .. } => {
                let level = bg.pump_leak * (rabi / bg.pump_ref_rabi).powi(2);
                if inside(start, start + duration) {
                    pump_on = true;
                    lam += level;
                }
                if inside(start + bg.pump_echo_delay, start + bg.pump_echo_delay + duration) {
                    lam += level / bg.pump_echo_suppression;
                }
            }
            Segment::Rotate { at, .. } => {
                let norm = 1.0 / (bg.ps_width * (2.0 * std::f64::consts::PI).sqrt());
                let n_rep = (period / bg.replica_period).ceil() as i32 + 1;
                for k in 0..=n_rep {
                    let amp = if k == 0 { 1.0 } else { 1.0 / bg.replica_suppression };
                    let center = at + k as f64 * bg.replica_period;
                    let mut d = since(center);
                    if d > period / 2.0 {
                        d -= period;
                    }
                    lam += bg.ps_leak_counts * amp * norm * (-0.5 * (d / bg.ps_width).powi(2)).exp();
                    // a replica with power reduced by `amp` launches a tail ∝ amp²
                    let x = since(center);
                    let tail = bg.tpe_short_fraction * (-x / bg.tpe_short_tau).exp()
                        + (1.0 - bg.tpe_short_fraction) * (-x / bg.tpe_long_tau).exp();
                    lam += bg.tpe_amplitude * bg.tpe_scale() * amp.powi(TPE_POWER_EXPONENT) * tail;
                }
            }
            Segment::SourceDrive { start, duration, .. } if inside(start, start + duration) => {
                source_on = true;
                lam += bg.source_leak;
            }
            _ => {}
        }
    }
    if !pump_on {
        let max_pump = seq
            .segments
            .iter()
            .filter_map(|s| match *s {
                Segment::SpinPump { rabi, .. } => Some(bg.pump_leak * (rabi / bg.pump_ref_rabi).powi(2)),
                _ => None,
            })
            .fold(0.0, f64::max);
        lam += max_pump / bg.eom_extinction;
    }
    if !source_on && seq.segments.iter().any(|s| matches!(s, Segment::SourceDrive { .. })) {
        lam += bg.source_leak / bg.eom_extinction;
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{evolve_master, max_abs};

    fn s2() -> C64 {
        C64::from(std::f64::consts::FRAC_1_SQRT_2)
    }

    fn plus() -> QuantumState {
        QuantumState::pure(CVector::from_vec(vec![s2(), s2()])).unwrap()
    }

    #[test]
    fn source_is_unaffected_by_target() {
        let drive = SourceDrive {
            blue: Some(emitters::ColorDrive { rabi: 0.4, detuning: 0.1 }),
            red: Some(emitters::ColorDrive { rabi: 0.3, detuning: 0.0 }),
        };
        let tgt = TargetDotSpec::with_splittings(4.9, 0.3);
        let c = build_cascade(&SourceDotSpec::default(), &tgt, &ChannelSpec { eta_ch: 0.7, ..ChannelSpec::default() }).unwrap();
        let joint = c.joint_system(&drive, &[]).unwrap();
        let free = c.free_source_system(&drive).unwrap();
        let g = CVector::from_vec(vec![C64::from(1.0), C64::from(0.0), C64::from(0.0)]);
        let init = c.joint_state(&g, &spin_to_target(&QuantumState::Mixed(plus().to_density())).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let a = evolve_master(&init, &joint, &grid).unwrap();
        let b = evolve_master(&QuantumState::Pure(g), &free, &grid).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let red = c.reduce_to_source(&x.to_density());
            assert!(max_abs(&(red - y.to_density())) < 1e-8);
        }
    }

    #[test]
    fn zero_transmission_never_heralds() {
        let c = build_cascade(&SourceDotSpec::default(), &TargetDotSpec::default(), &ChannelSpec { eta_ch: 0.0, ..ChannelSpec::ideal() }).unwrap();
        let src = color_qubit(s2(), s2()).unwrap();
        let r = heralded_conditional_state(&c, &src, &plus(), (0.0, 20.0));
        assert!(matches!(r, Err(QuantumError::HeraldTooRare { .. })));
    }

    #[test]
    fn red_photon_heralds_spin_up() {
        let c = build_cascade(&SourceDotSpec::default(), &TargetDotSpec::default(), &ChannelSpec::ideal()).unwrap();
        let src = color_qubit(C64::from(1.0), C64::from(0.0)).unwrap();
        let out = heralded_conditional_state(&c, &src, &plus(), (0.0, 25.0)).unwrap();
        assert!(out.fidelity(C64::from(1.0), C64::from(0.0)) > 1.0 - 1e-6);
        assert!(out.probability > 0.01);
    }

    #[test]
    fn superposition_is_transferred() {
        let c = build_cascade(&SourceDotSpec::default(), &TargetDotSpec::default(), &ChannelSpec::ideal()).unwrap();
        let src = color_qubit(s2(), s2()).unwrap();
        let out = heralded_conditional_state(&c, &src, &plus(), (0.0, 25.0)).unwrap();
        assert!(out.fidelity(s2(), s2()) > 1.0 - 1e-6, "{}", out.fidelity(s2(), s2()));
    }

    #[test]
    fn swapped_input_is_spin_flip_symmetric() {
        let c = build_cascade(&SourceDotSpec::default(), &TargetDotSpec::with_splittings(4.9, 0.0), &ChannelSpec::default()).unwrap();
        let (a, b) = (C64::new(0.8, 0.0), C64::new(0.0, 0.6));
        let prep = QuantumState::pure(CVector::from_vec(vec![C64::from(0.6), C64::from(0.8)])).unwrap();
        let prep_flip = QuantumState::pure(CVector::from_vec(vec![C64::from(0.8), C64::from(0.6)])).unwrap();
        let x = heralded_conditional_state(&c, &color_qubit(a, b).unwrap(), &prep, (0.0, 25.0)).unwrap();
        let y = heralded_conditional_state(&c, &color_qubit(b, a).unwrap(), &prep_flip, (0.0, 25.0)).unwrap();
        let fx = x.fidelity(a, b);
        let fy = y.fidelity(b, a);
        assert!((fx - fy).abs() < 1e-9, "{fx} {fy}");
    }

    #[test]
    fn matched_wavepacket_is_absorbed() {
        // A rising-exponential wavepacket at the target rate is the time reverse
        // of spontaneous emission and is absorbed with certainty.
        let gamma = 1.0;
        let t_end = 14.0;
        // population 1 − e^{Γ(t−T)} releases flux Γe^{Γ(t−T)}; the grid is
        // uniform and then geometric toward T, where the outflow rate diverges
        let pop = |t: f64| 1.0 - (gamma * (t - t_end)).exp();
        let mut edges: Vec<f64> = (0..=1350).map(|k| k as f64 * 0.01).collect();
        while t_end - edges[edges.len() - 1] > 1e-7 {
            let last = edges[edges.len() - 1];
            edges.push(t_end - 0.85 * (t_end - last));
        }
        let mut intervals = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let kappa = (pop(a) / pop(b)).ln() / (b - a);
            // source ⊗ target, index 2s + t
            let mut builder = SystemBuilder::new(4).jump(JumpSpec {
                terms: vec![
                    (0, 2, C64::from(kappa.sqrt())),
                    (1, 3, C64::from(kappa.sqrt())),
                    (0, 1, C64::from(gamma.sqrt())),
                    (2, 3, C64::from(gamma.sqrt())),
                ],
                rate: 1.0,
                tag: "out".into(),
                detector_route: None,
            });
            builder.couplings.push((2, 1, C64::new(0.0, 0.5 * (kappa * gamma).sqrt())));
            intervals.push(crate::quantum::Interval { start: a, end: b, system: builder.build().unwrap() });
        }
        let sched = Schedule { intervals, kicks: vec![] };
        let out = crate::quantum::evolve_master_schedule(&QuantumState::basis(4, 2), &sched, &[0.0, sched.end()]).unwrap();
        let p = out[1].populations();
        assert!(p[1] > 1.0 - 1e-3, "{p:?}");
    }

    #[test]
    fn background_limits() {
        let prog = crate::sequencer::PulseProgram::correlation_protocol(50.0, 1.0);
        let zero = BackgroundSpec::zero();
        let dark = BackgroundSpec::default();
        for k in 0..500 {
            let t = k as f64 * 0.1;
            assert_eq!(background_intensity(&zero, &prog, t), 0.0);
            // 2 s⁻¹ expressed per ns
            assert!((background_intensity(&dark, &prog, t) - 2e-9).abs() < 1e-18);
        }
    }
}
