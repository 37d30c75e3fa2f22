use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::cascade::{
    color_qubit, heralded_conditional_state, spin_fidelity, CascadeSystem, ChannelSpec, SourceModel,
};
use crate::emitters::{ghz, SourceDotSpec, TargetDotSpec, TAG_HERALD};
use crate::error::{Error, Result};
use crate::quantum::{herald_conditioned, CMatrix, CVector, QuantumState, Schedule, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    PhotonToSpin,
    SpinToSpin,
    Entanglement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// Input amplitudes `[re, im]`; the red (photon) or up (spin) component.
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub eta_ch: f64,
    /// GHz.
    pub vertical_splitting: f64,
    /// GHz.
    pub diagonal_splitting: f64,
    /// 1/ns, shared by both dots.
    pub gamma: f64,
    /// ns.
    pub herald_window: (f64, f64),
}

impl Default for ProtocolParams {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            alpha: [h, 0.0],
            beta: [h, 0.0],
            eta_ch: 1.0,
            vertical_splitting: 4.9,
            diagonal_splitting: 0.0,
            gamma: 1.0 / 0.6,
            herald_window: (0.0, 25.0),
        }
    }
}

impl ProtocolParams {
    pub fn amplitudes(&self) -> (C64, C64) {
        (C64::new(self.alpha[0], self.alpha[1]), C64::new(self.beta[0], self.beta[1]))
    }

    pub fn target(&self) -> TargetDotSpec {
        TargetDotSpec { gamma: self.gamma, ..TargetDotSpec::with_splittings(self.vertical_splitting, self.diagonal_splitting) }
    }

    pub fn channel(&self) -> ChannelSpec {
        ChannelSpec { eta_ch: self.eta_ch, ..ChannelSpec::ideal() }
    }

    /// Neutral source and target of the photon-to-spin protocol.
    pub fn photon_cascade(&self) -> Result<CascadeSystem> {
        let src = SourceDotSpec { gamma: self.gamma, fss: self.vertical_splitting, ..SourceDotSpec::default() };
        Ok(CascadeSystem::with_source(SourceModel::Neutral(src), &self.target(), &self.channel())?)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub kind: ProtocolKind,
    /// Fidelity to the ideal output state.
    pub fidelity: f64,
    /// Two-spin entanglement, entanglement protocol only.
    pub concurrence: Option<f64>,
    pub herald_probability: f64,
    pub rho: CMatrix,
}

fn plus() -> QuantumState {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    QuantumState::Pure(CVector::from_vec(vec![h, h]))
}

/// Heralded figure of merit of one of the three transfer protocols. The
/// target spin starts in `(|↑⟩ + |↓⟩)/√2` so that both colors can be absorbed.
pub fn protocol_metrics(kind: ProtocolKind, params: &ProtocolParams) -> Result<ProtocolOutcome> {
    let (alpha, beta) = params.amplitudes();
    if ((alpha.norm_sqr() + beta.norm_sqr()) - 1.0).abs() > 1e-9 {
        return Err(Error::Config("protocol amplitudes must satisfy |α|² + |β|² = 1".into()));
    }
    let target = params.target();
    let channel = params.channel();
    let outcome = match kind {
        ProtocolKind::PhotonToSpin => {
            let c = params.photon_cascade()?;
            let out = heralded_conditional_state(&c, &color_qubit(alpha, beta)?, &plus(), params.herald_window)?;
            ProtocolOutcome { kind, fidelity: out.fidelity(alpha, beta), concurrence: None, herald_probability: out.probability, rho: out.rho }
        }
        ProtocolKind::SpinToSpin => {
            let model = SourceModel::ChargedTransfer {
                gamma: params.gamma,
                vertical: params.vertical_splitting,
                electron: params.vertical_splitting / 2.0,
            };
            let c = CascadeSystem::with_source(model, &target, &channel)?;
            // π-pulses map α|↑₁⟩ + β|↓₁⟩ onto α|T_b⟩ + β|T_r⟩
            let src = CVector::from_vec(vec![C64::from(0.0), C64::from(0.0), alpha, beta]);
            let out = heralded_conditional_state(&c, &src, &plus(), params.herald_window)?;
            // blue lands in ↓ and red in ↑, so the output is bit-flipped
            let x = CMatrix::from_row_slice(2, 2, &[C64::from(0.0), C64::from(1.0), C64::from(1.0), C64::from(0.0)]);
            let rho = &x * &out.rho * &x;
            ProtocolOutcome { kind, fidelity: spin_fidelity(&rho, alpha, beta), concurrence: None, herald_probability: out.probability, rho }
        }
        ProtocolKind::Entanglement => entanglement(params, &target, &channel)?,
    };
    Ok(outcome)
}

fn entanglement(params: &ProtocolParams, target: &TargetDotSpec, channel: &ChannelSpec) -> Result<ProtocolOutcome> {
    let model = SourceModel::ChargedEntangler { gamma: params.gamma, vertical: params.vertical_splitting };
    let c = CascadeSystem::with_source(model, target, channel)?;
    let sys = c.joint_system(&Default::default(), &[])?;
    let trion = CVector::from_vec(vec![C64::from(0.0), C64::from(0.0), C64::from(1.0)]);
    let init = c.joint_state(&trion, &crate::cascade::spin_to_target(&plus())?)?;
    let (_, t_end) = params.herald_window;
    let out = herald_conditioned(&init, &Schedule::single(sys, t_end), TAG_HERALD, params.herald_window, t_end)?;
    // spin-spin block, index 2s + t
    let mut rho = CMatrix::zeros(4, 4);
    for (i, (si, ti)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        for (j, (sj, tj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            rho[(i, j)] = out.state[(si * 4 + ti, sj * 4 + tj)];
        }
    }
    let tr = rho.trace();
    rho /= tr;
    // undo free precession of both spins
    let half = ghz(params.vertical_splitting) / 2.0;
    let e_t = target.energies();
    let phase = |es: f64, et: f64| C64::from_polar(1.0, (es + et) * t_end);
    let u = CMatrix::from_diagonal(&CVector::from_vec(vec![
        phase(-half, e_t[0]),
        phase(-half, e_t[1]),
        phase(half, e_t[0]),
        phase(half, e_t[1]),
    ]));
    let rho = &u * rho * u.adjoint();
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let psi = CVector::from_vec(vec![C64::from(0.0), h, h, C64::from(0.0)]);
    let fidelity = (psi.adjoint() * &rho * &psi)[(0, 0)].re;
    Ok(ProtocolOutcome {
        kind: ProtocolKind::Entanglement,
        fidelity,
        concurrence: Some(concurrence(&rho)),
        herald_probability: out.probability,
        rho,
    })
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &CMatrix) -> f64 {
    let z = C64::from(0.0);
    let yy = CMatrix::from_row_slice(
        4,
        4,
        &[
            z, z, z, C64::from(-1.0),
            z, z, C64::from(1.0), z,
            z, C64::from(1.0), z, z,
            C64::from(-1.0), z, z, z,
        ],
    );
    let tilde = &yy * rho.map(|c| c.conj()) * &yy;
    let eig = SymmetricEigen::new(rho.clone());
    let sqrt_rho = &eig.eigenvectors
        * CMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from(l.max(0.0).sqrt())))
        * eig.eigenvectors.adjoint();
    let r = &sqrt_rho * tilde * &sqrt_rho;
    let r = (&r + r.adjoint()) * C64::from(0.5);
    let mut l: Vec<f64> = SymmetricEigen::new(r).eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concurrence_limits() {
        let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        let bell = CVector::from_vec(vec![C64::from(0.0), h, h, C64::from(0.0)]);
        assert!((concurrence(&(&bell * bell.adjoint())) - 1.0).abs() < 1e-12);
        let prod = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from(0.0)]));
        assert!(concurrence(&prod).abs() < 1e-12);
        assert!(concurrence(&(CMatrix::identity(4, 4) * C64::from(0.25))).abs() < 1e-12);
    }

    #[test]
    fn entanglement_ideal() {
        let out = protocol_metrics(ProtocolKind::Entanglement, &ProtocolParams::default()).unwrap();
        assert!(out.concurrence.unwrap() > 1.0 - 1e-6, "{:?}", out.concurrence);
        assert!(out.fidelity > 1.0 - 1e-6, "{}", out.fidelity);
    }

    #[test]
    fn spin_to_spin_ideal() {
        for (a, b) in [([1.0, 0.0], [0.0, 0.0]), ([0.6, 0.0], [0.0, 0.8])] {
            let p = ProtocolParams { alpha: a, beta: b, ..ProtocolParams::default() };
            let out = protocol_metrics(ProtocolKind::SpinToSpin, &p).unwrap();
            assert!(out.fidelity > 1.0 - 1e-6, "{}", out.fidelity);
        }
    }
}
