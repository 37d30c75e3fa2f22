//! Dense finite-dimensional open-quantum-system engine.
//!
//! States and operators are stored as dense complex matrices (pure states are
//! `dim × 1` columns). Time is in ns and every frequency is in rad/ns.

mod builder;
mod integrate;
mod master;
mod spectrum;
mod steady;
mod trajectory;

pub use builder::{Drive, JumpSpec, SystemBuilder};
pub use integrate::{Dopri5, Tolerances};
pub use master::{
    counting_distribution, evolve_master, evolve_master_schedule, herald_conditioned, HeraldConditioned, Liouvillian,
};
pub use spectrum::{emission_spectrum, spectrum_total_power, EmissionSpectrum};
pub use steady::{liouvillian_matrix, steady_state};
pub use trajectory::{
    evolve_trajectory, evolve_trajectory_schedule, JumpRecord, TrajectoryOutcome,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest Hilbert-space dimension the engine accepts.
pub const MAX_DIM: usize = 64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("non-finite entry encountered {context}")]
    NonFinite { context: String },
    #[error("step size underflow at t = {time} ns")]
    StepUnderflow { time: f64 },
    #[error("trajectory norm underflow at t = {time} ns without resolving a jump")]
    NormUnderflow { time: f64 },
    #[error("time grid must start at 0 and be strictly increasing")]
    InvalidGrid,
    #[error("negative rate {rate} on channel `{tag}`")]
    NegativeRate { tag: String, rate: f64 },
    #[error("operator flagged hermitian deviates by {deviation:e}")]
    NotHermitian { deviation: f64 },
    #[error("steady state is not unique (second singular value {gap:e})")]
    NonUniqueSteadyState { gap: f64 },
    #[error("steady-state residual {residual:e} exceeds tolerance")]
    SteadyStateResidual { residual: f64 },
    #[error("expected a pure state")]
    ExpectedPure,
    #[error("no static rotating frame exists for the requested drives (residual {residual:e})")]
    NoStaticFrame { residual: f64 },
    #[error("herald probability {probability:e} too small to condition on")]
    HeraldTooRare { probability: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, QuantumError>;

/// A dense operator with an optional hermiticity hint.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOp {
    matrix: CMatrix,
    hermitian: bool,
}

impl LinearOp {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(&matrix, "in operator")?;
        Ok(Self { matrix, hermitian: false })
    }

    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(&matrix, "in operator")?;
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        if deviation > 1e-12 {
            return Err(QuantumError::NotHermitian { deviation });
        }
        Ok(Self { matrix, hermitian: true })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim), hermitian: true }
    }

    /// `|row⟩⟨col|`
    pub fn transition(dim: usize, row: usize, col: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(row, col)] = ONE;
        Self { matrix: m, hermitian: row == col }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn kron(&self, other: &LinearOp) -> Self {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }
}

/// Pure or mixed state.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(CVector),
    Mixed(CMatrix),
}

impl QuantumState {
    pub fn pure(amplitudes: CVector) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(QuantumError::BadDimension(dim));
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QuantumError::NonFinite { context: "in state amplitudes".into() });
        }
        Ok(Self::Pure(amplitudes / C64::from(norm)))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self::Pure(v)
    }

    pub fn mixed(density: CMatrix) -> Result<Self> {
        check_square(&density)?;
        check_finite(&density, "in density matrix")?;
        let tr = density.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(QuantumError::Invalid(format!("density trace {tr} is not 1")));
        }
        Ok(Self::Mixed(hermitize(&density)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(v) => v.len(),
            Self::Mixed(m) => m.nrows(),
        }
    }

    pub fn to_density(&self) -> CMatrix {
        match self {
            Self::Pure(v) => v * v.adjoint(),
            Self::Mixed(m) => m.clone(),
        }
    }

    pub fn as_pure(&self) -> Option<&CVector> {
        match self {
            Self::Pure(v) => Some(v),
            Self::Mixed(_) => None,
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        match self {
            Self::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            Self::Mixed(m) => (0..m.nrows()).map(|i| m[(i, i)].re).collect(),
        }
    }

    /// `⟨ψ|ρ|ψ⟩` against a normalized pure target.
    pub fn fidelity_to(&self, target: &CVector) -> f64 {
        let t = target / C64::from(target.norm());
        match self {
            Self::Pure(v) => t.dotc(v).norm_sqr(),
            Self::Mixed(m) => t.dotc(&(m * &t)).re,
        }
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        match self {
            Self::Pure(v) => v.dotc(&(op * v)),
            Self::Mixed(m) => (op * m).trace(),
        }
    }
}

/// A decay channel `sqrt(rate) · operator`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpChannel {
    pub operator: LinearOp,
    pub rate: f64,
    pub tag: String,
    pub detector_route: Option<u32>,
}

impl JumpChannel {
    pub fn new(operator: LinearOp, rate: f64, tag: impl Into<String>) -> Self {
        Self { operator, rate, tag: tag.into(), detector_route: None }
    }

    pub fn routed(mut self, detector: u32) -> Self {
        self.detector_route = Some(detector);
        self
    }

    /// The collapse operator with the rate folded in.
    pub fn collapse(&self) -> CMatrix {
        self.operator.matrix() * C64::from(self.rate.sqrt())
    }
}

/// Hamiltonian plus jump channels, expressed in a (possibly level-dependent)
/// rotating frame. `frame[i]` is the angular frequency subtracted from level
/// `i` relative to the common reference frame; it is all zeros unless a
/// builder had to move into a drive frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    hamiltonian: LinearOp,
    jumps: Vec<JumpChannel>,
    frame: Vec<f64>,
}

impl OpenSystem {
    pub fn new(hamiltonian: LinearOp, jumps: Vec<JumpChannel>) -> Result<Self> {
        let dim = hamiltonian.dim();
        Self::with_frame(hamiltonian, jumps, vec![0.0; dim])
    }

    pub fn with_frame(hamiltonian: LinearOp, jumps: Vec<JumpChannel>, frame: Vec<f64>) -> Result<Self> {
        let dim = hamiltonian.dim();
        if dim == 0 || dim > MAX_DIM {
            return Err(QuantumError::BadDimension(dim));
        }
        if frame.len() != dim {
            return Err(QuantumError::DimensionMismatch { expected: dim, found: frame.len() });
        }
        for j in &jumps {
            if j.operator.dim() != dim {
                return Err(QuantumError::DimensionMismatch { expected: dim, found: j.operator.dim() });
            }
            if !(j.rate >= 0.0) || !j.rate.is_finite() {
                return Err(QuantumError::NegativeRate { tag: j.tag.clone(), rate: j.rate });
            }
        }
        Ok(Self { hamiltonian, jumps, frame })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &LinearOp {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpChannel] {
        &self.jumps
    }

    pub fn frame(&self) -> &[f64] {
        &self.frame
    }

    pub fn has_reference_frame(&self) -> bool {
        self.frame.iter().all(|f| *f == 0.0)
    }

    /// Channels whose tag equals `tag`.
    pub fn channels_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = (usize, &'a JumpChannel)> + 'a {
        self.jumps.iter().enumerate().filter(move |(_, j)| j.tag == tag)
    }

    /// `Σ Γ_k J_k† J_k`
    pub fn decay_operator(&self) -> CMatrix {
        let mut k = CMatrix::zeros(self.dim(), self.dim());
        for j in &self.jumps {
            let c = j.collapse();
            k += c.adjoint() * c;
        }
        k
    }

    /// `H - i/2 Σ C†C`
    pub fn effective_hamiltonian(&self) -> CMatrix {
        self.hamiltonian.matrix() - self.decay_operator() * C64::new(0.0, 0.5)
    }

    pub fn with_extra_jump(mut self, channel: JumpChannel) -> Result<Self> {
        if channel.operator.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch { expected: self.dim(), found: channel.operator.dim() });
        }
        self.jumps.push(channel);
        Ok(self)
    }

    pub(crate) fn check_state(&self, state: &QuantumState) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(QuantumError::DimensionMismatch { expected: self.dim(), found: state.dim() });
        }
        Ok(())
    }
}

/// Piecewise-constant dynamics: contiguous intervals, each with its own
/// system, plus instantaneous unitaries applied at given times.
///
/// Kicks are expressed in the reference frame.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub intervals: Vec<Interval>,
    pub kicks: Vec<Kick>,
}

#[derive(Debug, Clone)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub system: OpenSystem,
}

#[derive(Debug, Clone)]
pub struct Kick {
    pub time: f64,
    pub unitary: CMatrix,
    pub label: String,
    /// Check applied to the state right before the kick.
    pub guard: Option<KickGuard>,
}

/// Maximum population allowed on `levels` when a kick is applied.
#[derive(Debug, Clone)]
pub struct KickGuard {
    pub levels: Vec<usize>,
    pub max_population: f64,
}

impl Schedule {
    pub fn single(system: OpenSystem, duration: f64) -> Self {
        Self { intervals: vec![Interval { start: 0.0, end: duration, system }], kicks: vec![] }
    }

    pub fn start(&self) -> f64 {
        self.intervals.first().map_or(0.0, |i| i.start)
    }

    pub fn end(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.end)
    }

    pub fn dim(&self) -> usize {
        self.intervals.first().map_or(0, |i| i.system.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.intervals.first() else {
            return Err(QuantumError::Invalid("schedule has no intervals".into()));
        };
        let dim = first.system.dim();
        let mut t = first.start;
        for iv in &self.intervals {
            if iv.system.dim() != dim {
                return Err(QuantumError::DimensionMismatch { expected: dim, found: iv.system.dim() });
            }
            if (iv.start - t).abs() > 1e-12 || !(iv.end > iv.start) {
                return Err(QuantumError::Invalid(format!(
                    "schedule intervals are not contiguous at t = {} ns",
                    iv.start
                )));
            }
            t = iv.end;
        }
        for k in &self.kicks {
            if k.unitary.nrows() != dim || k.unitary.ncols() != dim {
                return Err(QuantumError::DimensionMismatch { expected: dim, found: k.unitary.nrows() });
            }
            if k.time < self.start() || k.time > self.end() {
                return Err(QuantumError::Invalid(format!("kick `{}` outside schedule", k.label)));
            }
        }
        Ok(())
    }

    /// Kicks sorted by time (stable).
    pub(crate) fn sorted_kicks(&self) -> Vec<&Kick> {
        let mut k: Vec<&Kick> = self.kicks.iter().collect();
        k.sort_by(|a, b| a.time.total_cmp(&b.time));
        k
    }
}

/// Independent random stream for shot `index` of an ensemble seeded by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Diagonal phase `exp(-i F t)` taking frame amplitudes to reference-frame
/// amplitudes.
pub fn frame_phases(frame: &[f64], t: f64) -> Vec<C64> {
    frame.iter().map(|f| C64::from_polar(1.0, -f * t)).collect()
}

/// Re-express a frame-`from` state as a frame-`to` state at time `t`.
pub(crate) fn change_frame_vec(psi: &mut CMatrix, from: &[f64], to: &[f64], t: f64) {
    if from == to {
        return;
    }
    for i in 0..psi.nrows() {
        let ph = C64::from_polar(1.0, (to[i] - from[i]) * t);
        for j in 0..psi.ncols() {
            psi[(i, j)] *= ph;
        }
    }
}

/// Works on stacked `k·n × n` blocks as well as plain `n × n` matrices.
pub(crate) fn change_frame_density(rho: &mut CMatrix, from: &[f64], to: &[f64], t: f64) {
    if from == to {
        return;
    }
    let n = rho.ncols();
    for i in 0..rho.nrows() {
        let ii = i % n;
        for j in 0..n {
            let ph = C64::from_polar(1.0, ((to[ii] - from[ii]) - (to[j] - from[j])) * t);
            rho[(i, j)] *= ph;
        }
    }
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::from(0.5)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Partial trace of a bipartite density matrix on `dims = (d_a, d_b)`.
/// `keep_first` keeps subsystem a.
pub fn partial_trace(rho: &CMatrix, dims: (usize, usize), keep_first: bool) -> CMatrix {
    let (da, db) = dims;
    if keep_first {
        CMatrix::from_fn(da, da, |i, j| (0..db).map(|k| rho[(i * db + k, j * db + k)]).sum())
    } else {
        CMatrix::from_fn(db, db, |i, j| (0..da).map(|k| rho[(k * db + i, k * db + j)]).sum())
    }
}

/// Minimum eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let eig = hermitize(m).symmetric_eigenvalues();
    eig.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(QuantumError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    if m.nrows() == 0 || m.nrows() > MAX_DIM {
        return Err(QuantumError::BadDimension(m.nrows()));
    }
    Ok(())
}

pub(crate) fn check_finite(m: &CMatrix, context: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(QuantumError::NonFinite { context: context.to_string() })
    }
}
