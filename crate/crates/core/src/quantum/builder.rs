//! Term-level system construction with automatic rotating-frame selection.
//!
//! Drives are given with their laser frequency in the reference frame. The
//! builder looks for per-level frame frequencies `f` such that every drive,
//! every static coupling and every jump operator is time independent; if
//! none exists the build fails rather than silently dropping a term.

use nalgebra::{DMatrix, DVector};

use super::{CMatrix, JumpChannel, LinearOp, OpenSystem, QuantumError, Result, C64, MAX_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub upper: usize,
    pub lower: usize,
    /// Rabi frequency, rad/ns.
    pub rabi: f64,
    /// Laser angular frequency in the reference frame, rad/ns.
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    /// Matrix elements `(row, col, amplitude)`.
    pub terms: Vec<(usize, usize, C64)>,
    pub rate: f64,
    pub tag: String,
    pub detector_route: Option<u32>,
}

impl JumpSpec {
    pub fn lowering(lower: usize, upper: usize, rate: f64, tag: impl Into<String>) -> Self {
        Self { terms: vec![(lower, upper, C64::from(1.0))], rate, tag: tag.into(), detector_route: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemBuilder {
    pub dim: usize,
    pub energies: Vec<f64>,
    /// Static Hermitian couplings `(i, j, g)`: adds `g|i⟩⟨j| + h.c.`.
    pub couplings: Vec<(usize, usize, C64)>,
    pub drives: Vec<Drive>,
    pub jumps: Vec<JumpSpec>,
}

impl SystemBuilder {
    pub fn new(dim: usize) -> Self {
        Self { dim, energies: vec![0.0; dim], couplings: vec![], drives: vec![], jumps: vec![] }
    }

    pub fn energy(mut self, level: usize, e: f64) -> Self {
        self.energies[level] = e;
        self
    }

    pub fn drive(mut self, d: Drive) -> Self {
        self.drives.push(d);
        self
    }

    pub fn jump(mut self, j: JumpSpec) -> Self {
        self.jumps.push(j);
        self
    }

    /// Tensor product `self ⊗ other` (index `a·d_b + b`).
    pub fn tensor(&self, other: &SystemBuilder) -> SystemBuilder {
        let (da, db) = (self.dim, other.dim);
        let idx = |a: usize, b: usize| a * db + b;
        let mut out = SystemBuilder::new(da * db);
        for a in 0..da {
            for b in 0..db {
                out.energies[idx(a, b)] = self.energies[a] + other.energies[b];
            }
        }
        for &(i, j, g) in &self.couplings {
            for b in 0..db {
                out.couplings.push((idx(i, b), idx(j, b), g));
            }
        }
        for &(i, j, g) in &other.couplings {
            for a in 0..da {
                out.couplings.push((idx(a, i), idx(a, j), g));
            }
        }
        for d in &self.drives {
            for b in 0..db {
                out.drives.push(Drive { upper: idx(d.upper, b), lower: idx(d.lower, b), ..d.clone() });
            }
        }
        for d in &other.drives {
            for a in 0..da {
                out.drives.push(Drive { upper: idx(a, d.upper), lower: idx(a, d.lower), ..d.clone() });
            }
        }
        for j in &self.jumps {
            out.jumps.push(JumpSpec { terms: lift(&j.terms, |r, c| (0..db).map(move |b| (idx(r, b), idx(c, b))).collect()), ..j.clone() });
        }
        for j in &other.jumps {
            out.jumps.push(JumpSpec { terms: lift(&j.terms, |r, c| (0..da).map(move |a| (idx(a, r), idx(a, c))).collect()), ..j.clone() });
        }
        out
    }

    /// Per-level frame frequencies making every term static (minimum norm).
    pub fn solve_frame(&self) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for d in &self.drives {
            if d.rabi != 0.0 {
                rows.push((vec![(d.upper, 1.0), (d.lower, -1.0)], d.frequency));
            }
        }
        for &(i, j, g) in &self.couplings {
            if g.norm() != 0.0 && i != j {
                rows.push((vec![(i, 1.0), (j, -1.0)], 0.0));
            }
        }
        for jmp in &self.jumps {
            let live: Vec<&(usize, usize, C64)> = jmp.terms.iter().filter(|t| t.2.norm() != 0.0).collect();
            for pair in live.windows(2) {
                let (a0, b0, _) = *pair[0];
                let (a1, b1, _) = *pair[1];
                rows.push((vec![(a0, 1.0), (b0, -1.0), (a1, -1.0), (b1, 1.0)], 0.0));
            }
        }
        if rows.is_empty() {
            return Ok(vec![0.0; n]);
        }
        let mut a = DMatrix::<f64>::zeros(rows.len(), n);
        let mut rhs = DVector::<f64>::zeros(rows.len());
        for (r, (entries, b)) in rows.iter().enumerate() {
            for &(c, v) in entries {
                a[(r, c)] += v;
            }
            rhs[r] = *b;
        }
        let svd = a.clone().svd(true, true);
        let f = svd.solve(&rhs, 1e-10).map_err(|e| QuantumError::Invalid(e.to_string()))?;
        let residual = (&a * &f - &rhs).amax();
        let scale = rhs.amax().max(1.0);
        if residual > 1e-9 * scale {
            return Err(QuantumError::NoStaticFrame { residual });
        }
        // snap roundoff so undriven builds stay exactly in the reference frame
        Ok(f.iter().map(|&x| if x.abs() < 1e-12 * scale { 0.0 } else { x }).collect())
    }

    pub fn build(&self) -> Result<OpenSystem> {
        let n = self.dim;
        if n == 0 || n > MAX_DIM {
            return Err(QuantumError::BadDimension(n));
        }
        let frame = self.solve_frame()?;
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = C64::from(self.energies[i] - frame[i]);
        }
        for &(i, j, g) in &self.couplings {
            check_index(n, i)?;
            check_index(n, j)?;
            h[(i, j)] += g;
            h[(j, i)] += g.conj();
        }
        for d in &self.drives {
            check_index(n, d.upper)?;
            check_index(n, d.lower)?;
            let g = C64::from_polar(d.rabi / 2.0, d.phase);
            h[(d.upper, d.lower)] += g;
            h[(d.lower, d.upper)] += g.conj();
        }
        let hamiltonian = LinearOp::hermitian(super::hermitize(&h))?;
        let mut jumps = Vec::with_capacity(self.jumps.len());
        for j in &self.jumps {
            let mut m = CMatrix::zeros(n, n);
            for &(r, c, v) in &j.terms {
                check_index(n, r)?;
                check_index(n, c)?;
                m[(r, c)] += v;
            }
            jumps.push(JumpChannel {
                operator: LinearOp::new(m)?,
                rate: j.rate,
                tag: j.tag.clone(),
                detector_route: j.detector_route,
            });
        }
        OpenSystem::with_frame(hamiltonian, jumps, frame)
    }
}

fn lift<F>(terms: &[(usize, usize, C64)], map: F) -> Vec<(usize, usize, C64)>
where
    F: Fn(usize, usize) -> Vec<(usize, usize)>,
{
    terms.iter().flat_map(|&(r, c, v)| map(r, c).into_iter().map(move |(a, b)| (a, b, v))).collect()
}

fn check_index(n: usize, i: usize) -> Result<()> {
    if i >= n {
        return Err(QuantumError::Invalid(format!("level index {i} out of range for dimension {n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{evolve_master, QuantumState};

    #[test]
    fn undriven_stays_in_reference_frame() {
        let sys = SystemBuilder::new(2).energy(1, 3.0).jump(JumpSpec::lowering(0, 1, 1.0, "d")).build().unwrap();
        assert!(sys.has_reference_frame());
    }

    #[test]
    fn detuned_drive_becomes_static() {
        let sys = SystemBuilder::new(2)
            .energy(1, 10.0)
            .drive(Drive { upper: 1, lower: 0, rabi: 1.0, frequency: 10.5, phase: 0.0 })
            .build()
            .unwrap();
        let h = sys.hamiltonian().matrix();
        assert!(((h[(1, 1)] - h[(0, 0)]).re - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_frame_rejected() {
        let b = SystemBuilder::new(2)
            .drive(Drive { upper: 1, lower: 0, rabi: 1.0, frequency: 1.0, phase: 0.0 })
            .drive(Drive { upper: 1, lower: 0, rabi: 1.0, frequency: 2.0, phase: 0.0 });
        assert!(matches!(b.build(), Err(QuantumError::NoStaticFrame { .. })));
    }

    #[test]
    fn tensor_of_decays_is_independent() {
        let a = SystemBuilder::new(2).jump(JumpSpec::lowering(0, 1, 1.0, "a"));
        let b = SystemBuilder::new(2).jump(JumpSpec::lowering(0, 1, 2.0, "b"));
        let sys = a.tensor(&b).build().unwrap();
        let out = evolve_master(&QuantumState::basis(4, 3), &sys, &[0.0, 0.7]).unwrap();
        let p = out[1].populations();
        let (pa, pb) = ((-0.7f64).exp(), (-1.4f64).exp());
        assert!((p[3] - pa * pb).abs() < 1e-7);
        assert!((p[0] - (1.0 - pa) * (1.0 - pb)).abs() < 1e-7);
    }
}
