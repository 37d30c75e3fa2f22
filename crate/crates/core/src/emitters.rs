//! Level schemes of the neutral source dot and the singly charged target dot.
//!
//! Frequencies are given in GHz at this boundary and converted once to rad/ns.
//! The reference frame rotates at the target's mean diagonal frequency, so the
//! target ground states sit at `∓δ_e/2` and the trions at `±δ_h/2`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::quantum::{
    CMatrix, Drive, JumpSpec, OpenSystem, QuantumError, QuantumState, Result, SystemBuilder, C64,
};

/// Bohr magneton over Planck's constant, GHz/T.
pub const BOHR_GHZ_PER_TESLA: f64 = 13.996;

/// Trion population above which an instantaneous spin rotation is refused.
pub const ROTATION_TRION_LIMIT: f64 = 1e-3;

pub fn ghz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f
}

/// Target levels.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const TRION_BLUE: usize = 2;
pub const TRION_RED: usize = 3;

/// Source levels.
pub const GROUND: usize = 0;
pub const EXCITON_BLUE: usize = 1;
pub const EXCITON_RED: usize = 2;

pub const TAG_HERALD: &str = "herald-diag";
pub const TAG_LOSS_BLUE: &str = "loss-vertical-blue";
pub const TAG_LOSS_RED: &str = "loss-vertical-red";
pub const TAG_SOURCE_BLUE: &str = "source-blue";
pub const TAG_SOURCE_RED: &str = "source-red";
pub const TAG_SOURCE_LOSS: &str = "source-loss";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeemanParams {
    pub g_e: f64,
    pub g_h: f64,
    /// Tesla.
    pub b: f64,
}

impl ZeemanParams {
    pub fn electron_splitting(&self) -> f64 {
        self.g_e.abs() * BOHR_GHZ_PER_TESLA * self.b.max(0.0)
    }

    pub fn hole_splitting(&self) -> f64 {
        self.g_h.abs() * BOHR_GHZ_PER_TESLA * self.b.max(0.0)
    }
}

/// Splitting between the two diagonal transitions, GHz.
pub fn diagonal_splitting(z: &ZeemanParams) -> f64 {
    (z.g_e.abs() - z.g_h.abs()).abs() * BOHR_GHZ_PER_TESLA * z.b.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splittings {
    Zeeman(ZeemanParams),
    /// Electron and hole splittings in GHz.
    Direct { electron: f64, hole: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceDotSpec {
    /// Fine-structure splitting `ω_blue − ω_red`, GHz.
    pub fss: f64,
    /// Radiative rate, 1/ns.
    pub gamma: f64,
    /// GHz, relative to the target verticals.
    pub detuning_offset: f64,
    /// GHz per volt.
    pub stark_slope: f64,
    pub v0: f64,
    pub voltage: f64,
}

impl Default for SourceDotSpec {
    fn default() -> Self {
        Self { fss: 4.9, gamma: 1.0 / 0.6, detuning_offset: 0.0, stark_slope: 250.0, v0: 0.0, voltage: 0.0 }
    }
}

impl SourceDotSpec {
    /// Exciton detuning at gate voltage `v`, GHz.
    pub fn detuning(&self, v: f64) -> f64 {
        self.detuning_offset + self.stark_slope * (v - self.v0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fss > 0.0) || !(self.gamma > 0.0) {
            return Err(QuantumError::Invalid("source needs fss > 0 and gamma > 0".into()));
        }
        Ok(())
    }

    /// Level energies (rad/ns) of `g, X_b, X_r`.
    pub fn energies(&self) -> [f64; 3] {
        let d = ghz(self.detuning(self.voltage));
        [0.0, ghz(self.fss) / 2.0 + d, -ghz(self.fss) / 2.0 + d]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetDotSpec {
    pub splittings: Splittings,
    /// Total trion decay rate, 1/ns.
    pub gamma: f64,
    /// Fraction of each trion's decay on its vertical transition.
    pub branching_vertical: f64,
    /// GHz, common shift of both trions.
    pub detuning_offset: f64,
    pub stark_slope: f64,
    pub v0: f64,
    pub voltage: f64,
    /// Extra electron splitting for this shot, GHz.
    pub overhauser_shift: f64,
}

impl Default for TargetDotSpec {
    fn default() -> Self {
        Self {
            splittings: Splittings::Direct { electron: 2.45, hole: 2.45 },
            gamma: 1.0 / 0.6,
            branching_vertical: 0.5,
            detuning_offset: 0.0,
            stark_slope: 250.0,
            v0: 0.0,
            voltage: 0.0,
            overhauser_shift: 0.0,
        }
    }
}

impl TargetDotSpec {
    /// Splittings with `δ_e + δ_h = vertical` and `|δ_h − δ_e| = diagonal` (GHz).
    pub fn with_splittings(vertical: f64, diagonal: f64) -> Self {
        Self {
            splittings: Splittings::Direct { electron: (vertical - diagonal) / 2.0, hole: (vertical + diagonal) / 2.0 },
            ..Self::default()
        }
    }

    /// `(δ_e, δ_h)` in GHz, Overhauser shift included.
    pub fn electron_hole(&self) -> (f64, f64) {
        let (e, h) = match self.splittings {
            Splittings::Zeeman(z) => (z.electron_splitting(), z.hole_splitting()),
            Splittings::Direct { electron, hole } => (electron, hole),
        };
        (e + self.overhauser_shift, h)
    }

    pub fn vertical_splitting(&self) -> f64 {
        let (e, h) = self.electron_hole();
        e + h
    }

    pub fn diagonal_splitting(&self) -> f64 {
        let (e, h) = self.electron_hole();
        (h - e).abs()
    }

    pub fn detuning(&self, v: f64) -> f64 {
        self.detuning_offset + self.stark_slope * (v - self.v0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(0.0..=1.0).contains(&self.branching_vertical) {
            return Err(QuantumError::Invalid("target needs gamma > 0 and branching in [0, 1]".into()));
        }
        let (e, h) = self.electron_hole();
        if e < 0.0 || h < 0.0 {
            return Err(QuantumError::Invalid("negative Zeeman splitting".into()));
        }
        Ok(())
    }

    /// Level energies (rad/ns) of `↑, ↓, T_b, T_r`.
    pub fn energies(&self) -> [f64; 4] {
        let (e, h) = self.electron_hole();
        let d = ghz(self.detuning(self.voltage));
        [-ghz(e) / 2.0, ghz(e) / 2.0, ghz(h) / 2.0 + d, -ghz(h) / 2.0 + d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// `↑ ↔ T_b`.
    VerticalBlue,
    /// `↓ ↔ T_r`.
    VerticalRed,
    /// `↓ ↔ T_b`.
    DiagonalBlueTrion,
    /// `↑ ↔ T_r`.
    DiagonalRedTrion,
    /// Both diagonals with one laser at the mean diagonal frequency.
    Diagonal,
}

impl Transition {
    pub fn parse(label: &str) -> Result<Self> {
        Ok(match label {
            "vertical-blue" => Self::VerticalBlue,
            "vertical-red" => Self::VerticalRed,
            "diagonal-blue-trion" => Self::DiagonalBlueTrion,
            "diagonal-red-trion" => Self::DiagonalRedTrion,
            "diagonal" => Self::Diagonal,
            other => return Err(QuantumError::Invalid(format!("unknown transition `{other}`"))),
        })
    }

    /// `(upper, lower)` pairs addressed by this label.
    pub fn levels(self) -> &'static [(usize, usize)] {
        match self {
            Self::VerticalBlue => &[(TRION_BLUE, UP)],
            Self::VerticalRed => &[(TRION_RED, DOWN)],
            Self::DiagonalBlueTrion => &[(TRION_BLUE, DOWN)],
            Self::DiagonalRedTrion => &[(TRION_RED, UP)],
            Self::Diagonal => &[(TRION_BLUE, DOWN), (TRION_RED, UP)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDrive {
    pub transition: Transition,
    /// GHz.
    pub rabi: f64,
    /// Laser detuning from the nominal transition frequency, GHz.
    pub detuning: f64,
}

/// Nominal transition frequency of a target label (rad/ns): the bare
/// splitting of this dot with zero Stark shift.
fn nominal_target_frequency(spec: &TargetDotSpec, t: Transition) -> f64 {
    let bare = TargetDotSpec { voltage: spec.v0, detuning_offset: 0.0, overhauser_shift: 0.0, ..spec.clone() };
    let e = bare.energies();
    match t {
        Transition::Diagonal => 0.0,
        _ => {
            let (u, l) = t.levels()[0];
            e[u] - e[l]
        }
    }
}

pub fn target_builder(spec: &TargetDotSpec, drives: &[TargetDrive]) -> Result<SystemBuilder> {
    spec.validate()?;
    let e = spec.energies();
    let mut b = SystemBuilder::new(4);
    for (i, &x) in e.iter().enumerate() {
        b = b.energy(i, x);
    }
    for d in drives {
        let freq = nominal_target_frequency(spec, d.transition) + ghz(d.detuning);
        for &(upper, lower) in d.transition.levels() {
            b = b.drive(Drive { upper, lower, rabi: ghz(d.rabi), frequency: freq, phase: 0.0 });
        }
    }
    let gv = spec.gamma * spec.branching_vertical;
    let gd = spec.gamma * (1.0 - spec.branching_vertical);
    b = b.jump(JumpSpec::lowering(UP, TRION_BLUE, gv, TAG_LOSS_BLUE));
    b = b.jump(JumpSpec::lowering(DOWN, TRION_RED, gv, TAG_LOSS_RED));
    Ok(b.jump(herald_jump(gd)))
}

/// Both diagonal decays into one detected mode: a broadband detector cannot
/// tell them apart, so they interfere.
pub fn herald_jump(rate: f64) -> JumpSpec {
    JumpSpec {
        terms: vec![(DOWN, TRION_BLUE, C64::from(1.0)), (UP, TRION_RED, C64::from(1.0))],
        rate,
        tag: TAG_HERALD.into(),
        detector_route: Some(0),
    }
}

pub fn build_target_system(spec: &TargetDotSpec, drives: &[TargetDrive]) -> Result<OpenSystem> {
    target_builder(spec, drives)?.build()
}

/// One color of the two-color source laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorDrive {
    /// GHz.
    pub rabi: f64,
    /// Laser detuning from the nominal exciton line, GHz.
    pub detuning: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDrive {
    pub blue: Option<ColorDrive>,
    pub red: Option<ColorDrive>,
}

pub fn source_builder(spec: &SourceDotSpec, drive: &SourceDrive) -> Result<SystemBuilder> {
    spec.validate()?;
    let e = spec.energies();
    let half = ghz(spec.fss) / 2.0;
    let mut b = SystemBuilder::new(3).energy(EXCITON_BLUE, e[1]).energy(EXCITON_RED, e[2]);
    for (c, upper, nominal) in [(drive.blue, EXCITON_BLUE, half), (drive.red, EXCITON_RED, -half)] {
        if let Some(c) = c {
            if c.rabi < 0.0 {
                return Err(QuantumError::Invalid("negative drive amplitude".into()));
            }
            b = b.drive(Drive { upper, lower: GROUND, rabi: ghz(c.rabi), frequency: nominal + ghz(c.detuning), phase: 0.0 });
        }
    }
    b = b.jump(JumpSpec::lowering(GROUND, EXCITON_BLUE, spec.gamma, TAG_SOURCE_BLUE));
    Ok(b.jump(JumpSpec::lowering(GROUND, EXCITON_RED, spec.gamma, TAG_SOURCE_RED)))
}

pub fn build_source_system(spec: &SourceDotSpec, drive: &SourceDrive) -> Result<OpenSystem> {
    source_builder(spec, drive)?.build()
}

/// `exp(−iθ n·σ/2)` on the basis `(↑, ↓)`.
pub fn spin_rotation(angle: f64, axis: [f64; 3]) -> Result<CMatrix> {
    let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !angle.is_finite() {
        return Err(QuantumError::Invalid("rotation axis must be nonzero".into()));
    }
    let [x, y, z] = axis.map(|a| a / norm);
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let mi = C64::new(0.0, -s);
    Ok(CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::from(c) + mi * z,
            mi * C64::new(x, -y),
            mi * C64::new(x, y),
            C64::from(c) - mi * z,
        ],
    ))
}

/// Spin rotation embedded on the target levels of a product space
/// `other ⊗ target ⊗ rest`: `before` and `after` are the dimensions around it.
pub fn embed_target_unitary(u: &CMatrix, before: usize, after: usize) -> CMatrix {
    let mut t = CMatrix::identity(4, 4);
    t.view_mut((0, 0), (2, 2)).copy_from(u);
    let left = CMatrix::identity(before, before).kronecker(&t);
    left.kronecker(&CMatrix::identity(after, after))
}

/// Rotate the electron spin of a 2-level spin state or a 4-level target state.
pub fn rotate_spin(state: &QuantumState, angle: f64, axis: [f64; 3]) -> Result<QuantumState> {
    let u = spin_rotation(angle, axis)?;
    let full = match state.dim() {
        2 => u,
        4 => {
            let p = state.populations();
            let trion = p[TRION_BLUE] + p[TRION_RED];
            if trion > ROTATION_TRION_LIMIT {
                return Err(QuantumError::Invalid(format!("spin rotation with trion population {trion:.3e}")));
            }
            embed_target_unitary(&u, 1, 1)
        }
        d => return Err(QuantumError::DimensionMismatch { expected: 4, found: d }),
    };
    Ok(match state {
        QuantumState::Pure(v) => QuantumState::Pure(&full * v),
        QuantumState::Mixed(r) => QuantumState::Mixed(&full * r * full.adjoint()),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverhauserModel {
    /// GHz.
    pub sigma: f64,
}

impl OverhauserModel {
    /// Ensemble dephasing time `√2 / (2π σ)`, ns.
    pub fn t2_star(&self) -> f64 {
        std::f64::consts::SQRT_2 / ghz(self.sigma)
    }
}

/// Per-shot electron-splitting shift, GHz.
pub fn sample_overhauser<R: Rng + ?Sized>(model: &OverhauserModel, rng: &mut R) -> f64 {
    if model.sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, model.sigma).expect("finite sigma").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{evolve_master, evolve_trajectory, steady_state, substream, CVector};

    fn spin(a: C64, b: C64) -> CVector {
        CVector::from_vec(vec![a, b])
    }

    #[test]
    fn diagonal_splitting_values() {
        assert_eq!(diagonal_splitting(&ZeemanParams { g_e: 0.55, g_h: -0.55, b: 7.0 }), 0.0);
        assert!((diagonal_splitting(&ZeemanParams { g_e: 0.5, g_h: -0.6, b: 1.0 }) - 1.3996).abs() < 1e-12);
        assert_eq!(diagonal_splitting(&ZeemanParams { g_e: 0.6, g_h: -0.6, b: 0.0 }), 0.0);
    }

    #[test]
    fn target_transition_frequencies() {
        let spec = TargetDotSpec::with_splittings(4.9, 0.4);
        let e = spec.energies();
        assert!(((e[TRION_BLUE] - e[UP]) - ghz(2.45)).abs() < 1e-12);
        assert!(((e[TRION_RED] - e[DOWN]) + ghz(2.45)).abs() < 1e-12);
        let d1 = e[TRION_BLUE] - e[DOWN];
        let d2 = e[TRION_RED] - e[UP];
        assert!(((d1 - d2).abs() - ghz(0.4)).abs() < 1e-12);
        assert!((d1 + d2).abs() < 1e-12);
    }

    #[test]
    fn undriven_target_relaxes_to_ground_doublet() {
        let sys = build_target_system(&TargetDotSpec::default(), &[]).unwrap();
        let psi = QuantumState::basis(4, TRION_BLUE);
        let out = evolve_master(&psi, &sys, &[0.0, 30.0]).unwrap();
        let p = out[1].populations();
        assert!(p[UP] + p[DOWN] > 1.0 - 1e-9);
        assert!((p[UP] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn vertical_pumping_shelves_other_spin() {
        // rate equations: pumped fraction 1 − O(Γ_v / Γ_d · (Ω/Γ)² / …) → 1 for a
        // pump much longer than the pumping time
        let spec = TargetDotSpec::default();
        let drive = TargetDrive { transition: Transition::VerticalBlue, rabi: 0.3, detuning: 0.0 };
        let sys = build_target_system(&spec, &[drive]).unwrap();
        let rho0 = QuantumState::mixed(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from(0.5),
            C64::from(0.5),
            C64::from(0.0),
            C64::from(0.0),
        ])))
        .unwrap();
        let out = evolve_master(&rho0, &sys, &[0.0, 200.0]).unwrap();
        assert!(out[1].populations()[DOWN] > 0.99);
    }

    #[test]
    fn diagonal_drive_keeps_both_spins() {
        let drive = TargetDrive { transition: Transition::Diagonal, rabi: 0.3, detuning: 0.0 };
        let sys = build_target_system(&TargetDotSpec::default(), &[drive]).unwrap();
        let p = steady_state(&sys).unwrap().populations();
        assert!(p[UP] > 0.1 && p[DOWN] > 0.1, "{p:?}");
        assert!((p[UP] - p[DOWN]).abs() < 1e-6);
    }

    #[test]
    fn herald_is_one_collective_channel() {
        let sys = build_target_system(&TargetDotSpec::default(), &[]).unwrap();
        let tags: Vec<&str> = sys.jumps().iter().map(|j| j.tag.as_str()).collect();
        assert_eq!(tags.iter().filter(|t| **t == TAG_HERALD).count(), 1);
    }

    #[test]
    fn equal_vertical_and_diagonal_emission() {
        let sys = build_target_system(&TargetDotSpec::default(), &[]).unwrap();
        let n = 10_000;
        let mut vertical = 0usize;
        for k in 0..n {
            let mut rng = substream(77, k);
            let out = evolve_trajectory(&QuantumState::basis(4, TRION_RED), &sys, 20.0, &mut rng).unwrap();
            assert_eq!(out.jumps.len(), 1);
            if out.jumps[0].tag != TAG_HERALD {
                vertical += 1;
            }
        }
        let p = vertical as f64 / n as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn source_pi_pulse_emits_one_blue_photon() {
        let spec = SourceDotSpec::default();
        let rabi = 20.0;
        let t_pi = 0.5 / rabi;
        let drive = SourceDrive { blue: Some(ColorDrive { rabi, detuning: 0.0 }), red: None };
        let on = build_source_system(&spec, &drive).unwrap();
        let off = build_source_system(&spec, &SourceDrive::default()).unwrap();
        let sched = crate::quantum::Schedule {
            intervals: vec![
                crate::quantum::Interval { start: 0.0, end: t_pi, system: on },
                crate::quantum::Interval { start: t_pi, end: 20.0, system: off },
            ],
            kicks: vec![],
        };
        let mut ok = 0;
        let n = 400;
        for k in 0..n {
            let mut rng = substream(5, k);
            let out = crate::quantum::evolve_trajectory_schedule(&QuantumState::basis(3, GROUND), &sched, &[], &mut rng).unwrap();
            if out.jumps.len() == 1 && out.jumps[0].tag == TAG_SOURCE_BLUE {
                ok += 1;
            }
        }
        assert!(ok as f64 / n as f64 >= 0.97, "{ok}");
    }

    #[test]
    fn undriven_source_is_dark() {
        let sys = build_source_system(&SourceDotSpec::default(), &SourceDrive::default()).unwrap();
        let mut rng = substream(1, 1);
        let out = evolve_trajectory(&QuantumState::basis(3, GROUND), &sys, 50.0, &mut rng).unwrap();
        assert!(out.jumps.is_empty());
    }

    #[test]
    fn rotations() {
        let up = QuantumState::basis(2, 0);
        let half = rotate_spin(&up, std::f64::consts::FRAC_PI_2, [0.0, 1.0, 0.0]).unwrap();
        let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        assert!(half.fidelity_to(&spin(s, s)) > 1.0 - 1e-12);
        let flip = rotate_spin(&up, std::f64::consts::PI, [0.0, 1.0, 0.0]).unwrap();
        assert!(flip.fidelity_to(&spin(C64::from(0.0), C64::from(1.0))) > 1.0 - 1e-12);
        let twice = rotate_spin(&half, std::f64::consts::FRAC_PI_2, [0.0, 1.0, 0.0]).unwrap();
        assert!((twice.fidelity_to(flip.as_pure().unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_refused_with_trion_population() {
        let st = QuantumState::basis(4, TRION_BLUE);
        assert!(rotate_spin(&st, 1.0, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn overhauser_statistics() {
        let mut rng = substream(9, 0);
        assert_eq!(sample_overhauser(&OverhauserModel { sigma: 0.0 }, &mut rng), 0.0);
        let m = OverhauserModel { sigma: 0.05 };
        let n = 100_000;
        let mean = (0..n).map(|_| sample_overhauser(&m, &mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * 0.05 / (n as f64).sqrt());
    }

    #[test]
    fn ensemble_free_precession_is_gaussian() {
        // ⟨e^{2πiXt}⟩ for X ~ N(0, σ²) = exp(−t²/T₂*²); the Gaussian average is
        // taken by Gauss–Hermite quadrature over the per-shot shift
        let m = OverhauserModel { sigma: 0.05 };
        let t2 = m.t2_star();
        let times = [0.0, 0.5 * t2, t2, 1.5 * t2];
        let n = 24;
        let jacobi = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut acc = vec![C64::from(0.0); times.len()];
        let plus = QuantumState::pure(CVector::from_vec(vec![C64::from(1.0), C64::from(1.0), C64::from(0.0), C64::from(0.0)])).unwrap();
        for k in 0..n {
            let node = eig.eigenvalues[k];
            let weight = eig.eigenvectors[(0, k)].powi(2);
            let shift = std::f64::consts::SQRT_2 * m.sigma * node;
            let spec = TargetDotSpec { overhauser_shift: shift, ..TargetDotSpec::default() };
            let out = evolve_master(&plus, &build_target_system(&spec, &[]).unwrap(), &times).unwrap();
            for (i, st) in out.iter().enumerate() {
                // remove the mean Larmor precession
                let phase = C64::from_polar(1.0, -ghz(2.45) * times[i]);
                acc[i] += st.to_density()[(UP, DOWN)] * 2.0 * phase * weight;
            }
        }
        for (k, &t) in times.iter().enumerate() {
            let got = acc[k].norm();
            let want = (-(t / t2).powi(2)).exp();
            assert!((got - want).abs() < 1e-6, "t={t}: {got} vs {want}");
        }
    }
}
