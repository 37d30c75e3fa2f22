//! Dormand–Prince 5(4) embedded Runge–Kutta on dense complex matrices.

use super::{CMatrix, QuantumError, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-9, rel: 1e-8 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive stepper. Keeps its last accepted step size between calls so a
/// long run split into many `advance` calls does not restart from scratch.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub tol: Tolerances,
    h: Option<f64>,
    k: [CMatrix; 7],
    tmp: CMatrix,
    pub max_step: f64,
}

impl Dopri5 {
    pub fn new(rows: usize, cols: usize, tol: Tolerances) -> Self {
        let z = CMatrix::zeros(rows, cols);
        Self {
            tol,
            h: None,
            k: [z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
            max_step: f64::INFINITY,
        }
    }

    pub fn reset_step(&mut self) {
        self.h = None;
    }

    pub fn suggested_step(&self) -> Option<f64> {
        self.h
    }

    /// One trial step of size `h` from `(t, y)`; writes the 5th-order
    /// solution into `out` and returns the scaled error norm.
    pub fn trial_step<F>(&mut self, rhs: &mut F, t: f64, y: &CMatrix, h: f64, out: &mut CMatrix) -> f64
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
    {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        rhs(t, y, k1);
        stage(tmp, y, h, &[(A21, &*k1)]);
        rhs(t + C2 * h, tmp, k2);
        stage(tmp, y, h, &[(A31, &*k1), (A32, &*k2)]);
        rhs(t + C3 * h, tmp, k3);
        stage(tmp, y, h, &[(A41, &*k1), (A42, &*k2), (A43, &*k3)]);
        rhs(t + C4 * h, tmp, k4);
        stage(tmp, y, h, &[(A51, &*k1), (A52, &*k2), (A53, &*k3), (A54, &*k4)]);
        rhs(t + C5 * h, tmp, k5);
        stage(tmp, y, h, &[(A61, &*k1), (A62, &*k2), (A63, &*k3), (A64, &*k4), (A65, &*k5)]);
        rhs(t + h, tmp, k6);
        stage(out, y, h, &[(B1, &*k1), (B3, &*k3), (B4, &*k4), (B5, &*k5), (B6, &*k6)]);
        rhs(t + h, out, k7);

        let mut err: f64 = 0.0;
        for idx in 0..y.len() {
            let e = (k1[idx] * E1 + k3[idx] * E3 + k4[idx] * E4 + k5[idx] * E5 + k6[idx] * E6 + k7[idx] * E7) * h;
            let scale = self.tol.abs + self.tol.rel * y[idx].norm().max(out[idx].norm());
            err = err.max(e.norm() / scale);
        }
        if err.is_finite() {
            err
        } else {
            f64::INFINITY
        }
    }

    /// Take one accepted adaptive step from `t` not past `t_end`.
    /// Returns the step actually taken; `y` is advanced in place.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, y: &mut CMatrix, t_end: f64) -> Result<f64>
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
    {
        let span = t_end - t;
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(rhs, t, y, span),
        }
        .min(span)
        .min(self.max_step);
        let mut out = y.clone();
        loop {
            let err = self.trial_step(rhs, t, y, h, &mut out);
            if err <= 1.0 {
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Don't let a short final step shrink the remembered size.
                let next = h * grow;
                self.h = Some(if h < span { next } else { next.max(self.h.unwrap_or(next)) });
                std::mem::swap(y, &mut out);
                return Ok(h);
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(QuantumError::StepUnderflow { time: t });
            }
        }
    }

    /// Integrate from `t0` to `t1` in place.
    pub fn advance<F>(&mut self, rhs: &mut F, t0: f64, t1: f64, y: &mut CMatrix) -> Result<()>
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
    {
        let mut t = t0;
        while t1 - t > 1e-15 * t1.abs().max(1.0) {
            let h = self.step(rhs, t, y, t1)?;
            t = if t1 - (t + h) <= 1e-15 * t1.abs().max(1.0) { t1 } else { t + h };
            if !y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(QuantumError::NonFinite { context: format!("at t = {t} ns") });
            }
        }
        Ok(())
    }

    fn initial_step<F>(&mut self, rhs: &mut F, t: f64, y: &CMatrix, span: f64) -> f64
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
    {
        let k = &mut self.k[0];
        rhs(t, y, k);
        let dy = k.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let yn = y.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-3);
        let h = if dy > 0.0 { 0.01 * yn / dy } else { span };
        h.min(span).max(1e-9 * span.max(1e-6))
    }
}

fn stage(out: &mut CMatrix, y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) {
    out.copy_from(y);
    for (a, k) in terms {
        let c = C64::from(a * h);
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += c * v;
        }
    }
}
