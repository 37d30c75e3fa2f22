use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const STEP_TOL: f64 = 1e-10;

/// `offset + amplitude / (1 + (2(x − center)/fwhm)²)`
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    offset + amplitude / (1.0 + u * u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Standard errors in the order center, fwhm, amplitude, offset.
    pub errors: [f64; 4],
    pub chi2: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn jacobian_row(x: f64, p: &Vector4<f64>) -> (f64, Vector4<f64>) {
    let (c, w, a, o) = (p[0], p[1], p[2], p[3]);
    let u = 2.0 * (x - c) / w;
    let d = 1.0 + u * u;
    let f = o + a / d;
    let g = Vector4::new(4.0 * a * u / (w * d * d), 2.0 * a * u * u / (w * d * d), 1.0 / d, 1.0);
    (f, g)
}

fn chi2(x: &[f64], y: &[f64], wts: &[f64], p: &Vector4<f64>) -> f64 {
    x.iter().zip(y).zip(wts).map(|((&x, &y), &w)| w * (y - lorentzian(x, p[0], p[1], p[2], p[3])).powi(2)).sum()
}

fn initial_guess(x: &[f64], y: &[f64]) -> Vector4<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let (imin, &ymin) = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    // a dip when the bulk of the data sits near the maximum
    let (i0, offset, amp) = if ymax - median >= median - ymin { (imax, ymin, ymax - ymin) } else { (imin, ymax, ymin - ymax) };
    let above: Vec<f64> = x.iter().zip(y).filter(|(_, &v)| ((v - offset) / amp) > 0.5).map(|(&x, _)| x).collect();
    let span = above.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - above.iter().cloned().fold(f64::INFINITY, f64::min);
    let step = (x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min)) / x.len() as f64;
    let fwhm = if span > 0.0 { span } else { 2.0 * step };
    Vector4::new(x[i0], fwhm.max(1e-12), amp, offset)
}

/// Weighted least squares by damped Gauss–Newton (Levenberg–Marquardt).
/// Stops when the relative step falls below 1e−10 or after 200 iterations;
/// the last iterate is returned with `converged = false` in the latter case.
pub fn fit_lorentzian(x: &[f64], y: &[f64], y_err: &[f64]) -> Result<FitResult> {
    if x.len() < 5 || x.len() != y.len() || y.len() != y_err.len() {
        return Err(Error::Config("Lorentzian fit needs ≥ 5 points with matching x, y, y_err".into()));
    }
    if y_err.iter().any(|&e| !(e > 0.0)) || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Config("Lorentzian fit needs finite data and positive errors".into()));
    }
    let wts: Vec<f64> = y_err.iter().map(|e| 1.0 / (e * e)).collect();
    let mut p = initial_guess(x, y);
    let mut cost = chi2(x, y, &wts, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&xi, &yi), &wi) in x.iter().zip(y).zip(&wts) {
            let (f, g) = jacobian_row(xi, &p);
            jtj += wi * g * g.transpose();
            jtr += wi * (yi - f) * g;
        }
        loop {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break;
                }
                continue;
            };
            let rel = (0..4).map(|k| step[k].abs() / (p[k].abs() + 1e-300)).fold(0.0, f64::max);
            let trial = p + step;
            let trial_cost = chi2(x, y, &wts, &trial);
            if trial_cost <= cost && trial[1] != 0.0 {
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                converged = rel < STEP_TOL;
                break;
            }
            if rel < STEP_TOL {
                converged = true;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                converged = true;
                break;
            }
        }
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }
    p[1] = p[1].abs();
    let mut jtj = DMatrix::<f64>::zeros(4, 4);
    for (&xi, &wi) in x.iter().zip(&wts) {
        let (_, g) = jacobian_row(xi, &p);
        let g = DVector::from_column_slice(g.as_slice());
        jtj += wi * &g * g.transpose();
    }
    let errors = match jtj.try_inverse() {
        Some(cov) => [0, 1, 2, 3].map(|k| cov[(k, k)].max(0.0).sqrt()),
        None => [f64::INFINITY; 4],
    };
    Ok(FitResult {
        center: p[0],
        fwhm: p[1],
        amplitude: p[2],
        offset: p[3],
        errors,
        chi2: cost,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_recovery() {
        let x: Vec<f64> = (0..81).map(|k| -4.0 + 0.1 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| lorentzian(x, 0.37, 1.3, 90.0, 2.0)).collect();
        let f = fit_lorentzian(&x, &y, &vec![1.0; x.len()]).unwrap();
        assert!(f.converged);
        for (got, want) in [(f.center, 0.37), (f.fwhm, 1.3), (f.amplitude, 90.0), (f.offset, 2.0)] {
            assert!(((got - want) / want).abs() < 1e-6, "{f:?}");
        }
    }

    #[test]
    fn symmetric_data_centered() {
        // symmetric noise pattern about x = 1
        let x: Vec<f64> = (-30..=30).map(|k| 1.0 + 0.1 * k as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| lorentzian(x, 1.0, 0.8, 10.0, 1.0) + 0.3 * ((x - 1.0) * 7.0).cos())
            .collect();
        let f = fit_lorentzian(&x, &y, &vec![0.3; x.len()]).unwrap();
        assert!((f.center - 1.0).abs() <= f.errors[0].max(1e-9), "{f:?}");
    }

    #[test]
    fn dip_is_fitted() {
        let x: Vec<f64> = (0..41).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| lorentzian(x, 20.0, 6.0, -3.0, 5.0)).collect();
        let f = fit_lorentzian(&x, &y, &vec![0.1; x.len()]).unwrap();
        assert!((f.amplitude + 3.0).abs() < 1e-6 && (f.fwhm - 6.0).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn too_few_points() {
        assert!(fit_lorentzian(&[0.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }
}
