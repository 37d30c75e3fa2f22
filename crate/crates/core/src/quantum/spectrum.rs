//! Steady-state emission spectra via the quantum regression theorem.
//!
//! `S(ω) = (1/π) Re ∫₀^∞ e^{-iωτ} ⟨A†(τ)A(0)⟩_inc dτ`, evaluated with the
//! resolvent `(iω − L)^{-1}` restricted to traceless operators. The coherent
//! (elastic) part `|⟨A⟩|²` is returned separately as a delta weight.

use nalgebra::DVector;

use super::{liouvillian_matrix, steady_state, CMatrix, LinearOp, OpenSystem, QuantumError, Result, C64};

#[derive(Debug, Clone)]
pub struct EmissionSpectrum {
    /// Reference-frame angular frequencies (rad/ns).
    pub omega: Vec<f64>,
    /// Incoherent spectral density (per rad/ns).
    pub density: Vec<f64>,
    /// Weight of the elastic delta line.
    pub coherent_weight: f64,
    /// Position of the elastic line.
    pub coherent_omega: f64,
    /// Steady-state `⟨A†A⟩`.
    pub total_power: f64,
}

impl EmissionSpectrum {
    /// Grid indices of interior local maxima of the incoherent density.
    pub fn peak_indices(&self) -> Vec<usize> {
        let d = &self.density;
        (1..d.len().saturating_sub(1)).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1]).collect()
    }
}

struct Resolvent {
    d: usize,
    sup: CMatrix,
    proj: CMatrix,
    x: DVector<C64>,
    a_vec: DVector<C64>,
    theta: f64,
}

impl Resolvent {
    fn new(sys: &OpenSystem, a: &LinearOp) -> Result<(Self, f64, f64, f64)> {
        let d = sys.dim();
        if a.dim() != d {
            return Err(QuantumError::DimensionMismatch { expected: d, found: a.dim() });
        }
        let theta = operator_frame_offset(sys.frame(), a.matrix())?;
        let rho = steady_state(sys)?.to_density();
        let am = a.matrix();
        let mean = (am * &rho).trace();
        let total = (am.adjoint() * am * &rho).trace().re;
        let x = am * &rho - &rho * mean;
        let vec_of = |m: &CMatrix| DVector::from_fn(d * d, |k, _| m[(k % d, k / d)]);
        let rho_v = vec_of(&rho);
        let id_v = vec_of(&CMatrix::identity(d, d));
        let proj = &rho_v * id_v.transpose();
        Ok((
            Self { d, sup: liouvillian_matrix(sys), proj, x: vec_of(&x), a_vec: vec_of(am), theta },
            mean.norm_sqr(),
            -theta,
            total,
        ))
    }

    fn density(&self, omega_ref: f64) -> f64 {
        let w = omega_ref + self.theta;
        let n = self.d * self.d;
        let mut m = &self.proj - &self.sup;
        for k in 0..n {
            m[(k, k)] += C64::new(0.0, w);
        }
        let y = m.lu().solve(&self.x).unwrap_or_else(|| DVector::zeros(n));
        self.a_vec.dotc(&y).re / std::f64::consts::PI
    }
}

/// Frequency offset `f_a − f_b` shared by every element `|a⟩⟨b|` of `op`.
fn operator_frame_offset(frame: &[f64], op: &CMatrix) -> Result<f64> {
    let mut offset: Option<f64> = None;
    for a in 0..op.nrows() {
        for b in 0..op.ncols() {
            if op[(a, b)].norm() == 0.0 {
                continue;
            }
            let o = frame[a] - frame[b];
            match offset {
                None => offset = Some(o),
                Some(prev) if (prev - o).abs() > 1e-9 * prev.abs().max(1.0) => {
                    return Err(QuantumError::Invalid("operator mixes frame frequencies".into()));
                }
                _ => {}
            }
        }
    }
    Ok(offset.unwrap_or(0.0))
}

pub fn emission_spectrum(sys: &OpenSystem, collapse: &LinearOp, omega_grid: &[f64]) -> Result<EmissionSpectrum> {
    let (res, coherent_weight, coherent_omega, total_power) = Resolvent::new(sys, collapse)?;
    let density = omega_grid.iter().map(|&w| res.density(w)).collect();
    Ok(EmissionSpectrum { omega: omega_grid.to_vec(), density, coherent_weight, coherent_omega, total_power })
}

/// `(∫ S dω + coherent weight, ⟨A†A⟩)`; the integral runs over the whole
/// real line through `ω = W tan φ`.
pub fn spectrum_total_power(sys: &OpenSystem, collapse: &LinearOp, scale: f64) -> Result<(f64, f64)> {
    let (res, coherent, _, total) = Resolvent::new(sys, collapse)?;
    let half = std::f64::consts::FRAC_PI_2 - 1e-9;
    let f = |phi: f64| {
        let c = phi.cos();
        res.density(scale * phi.tan()) * scale / (c * c)
    };
    let integral = adaptive_simpson(&f, -half, half, 1e-11 * total.max(1e-300), 40);
    Ok((integral + coherent, total))
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (delta.abs() <= 15.0 * tol && depth < 34) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
