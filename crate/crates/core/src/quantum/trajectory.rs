//! Monte Carlo wavefunction trajectories (waiting-time unravelling).
//!
//! The unnormalized state is propagated exactly under the constant `H_eff` of
//! each interval (matrix exponential steps); a jump fires when its squared
//! norm crosses a uniform random threshold. The crossing time is located by
//! an Illinois false-position search to 1e-10 ns.

use rand::Rng;

use super::{
    change_frame_vec, CMatrix, CVector, Kick, OpenSystem, QuantumError, QuantumState, Result, Schedule, C64,
};

const JUMP_TIME_TOL: f64 = 1e-10;
/// Longest exact propagation step, ns; also bounds `‖H_eff‖·dt ≤ 1`.
const MAX_STEP: f64 = 0.25;

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Taylor series for `e^{Gx} v` with `‖G‖x ≤ 1`.
struct Series {
    term: CMatrix,
    tmp: CMatrix,
}

impl Series {
    fn new(n: usize) -> Self {
        Self { term: CMatrix::zeros(n, 1), tmp: CMatrix::zeros(n, 1) }
    }

    fn propagate(&mut self, gen: &CMatrix, x: f64, v: &CMatrix, out: &mut CMatrix) {
        out.copy_from(v);
        self.term.copy_from(v);
        for k in 1..40 {
            self.tmp.gemm(C64::from(x / k as f64), gen, &self.term, C64::from(0.0));
            std::mem::swap(&mut self.term, &mut self.tmp);
            *out += &self.term;
            if norm_sqr(&self.term) < 1e-34 * norm_sqr(out) {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub channel: usize,
    pub tag: String,
    pub detector_route: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    /// Normalized final state in the reference frame.
    pub state: CVector,
    pub jumps: Vec<JumpRecord>,
    /// Normalized states (reference frame) at the requested record times.
    pub snapshots: Vec<CVector>,
}

impl TrajectoryOutcome {
    pub fn count_tagged(&self, tag: &str) -> usize {
        self.jumps.iter().filter(|j| j.tag == tag).count()
    }
}

pub fn evolve_trajectory<R: Rng + ?Sized>(
    state: &QuantumState,
    sys: &OpenSystem,
    duration: f64,
    rng: &mut R,
) -> Result<TrajectoryOutcome> {
    if !(duration > 0.0) {
        return Err(QuantumError::Invalid("trajectory duration must be positive".into()));
    }
    sys.check_state(state)?;
    evolve_trajectory_schedule(state, &Schedule::single(sys.clone(), duration), &[], rng)
}

fn threshold<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    u.max(1e-300)
}

fn norm_sqr(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn normalized_ref(psi: &CMatrix, frame: &[f64], t: f64) -> CVector {
    let mut c = psi.clone();
    let zero = vec![0.0; frame.len()];
    change_frame_vec(&mut c, frame, &zero, t);
    let n = norm_sqr(&c).sqrt();
    CVector::from_iterator(c.nrows(), c.iter().map(|z| z / n))
}

fn apply_kick(psi: &mut CMatrix, kick: &Kick, frame: &[f64]) -> Result<()> {
    let zero = vec![0.0; frame.len()];
    change_frame_vec(psi, frame, &zero, kick.time);
    if let Some(g) = &kick.guard {
        let total = norm_sqr(psi);
        let pop: f64 = g.levels.iter().map(|&i| psi[(i, 0)].norm_sqr()).sum::<f64>() / total;
        if pop > g.max_population {
            return Err(QuantumError::Invalid(format!(
                "kick `{}` at t = {} ns applied with population {pop:.3e} on guarded levels",
                kick.label, kick.time
            )));
        }
    }
    *psi = &kick.unitary * &*psi;
    change_frame_vec(psi, &zero, frame, kick.time);
    Ok(())
}

/// Trajectory through a piecewise-constant schedule. `record_times` must be
/// sorted and lie within the schedule.
pub fn evolve_trajectory_schedule<R: Rng + ?Sized>(
    state: &QuantumState,
    schedule: &Schedule,
    record_times: &[f64],
    rng: &mut R,
) -> Result<TrajectoryOutcome> {
    schedule.validate()?;
    let psi0 = state.as_pure().ok_or(QuantumError::ExpectedPure)?;
    let n = schedule.dim();
    if psi0.len() != n {
        return Err(QuantumError::DimensionMismatch { expected: n, found: psi0.len() });
    }
    let mut psi = CMatrix::from_column_slice(n, 1, psi0.as_slice());
    let mut jumps = Vec::new();
    let mut snapshots = Vec::with_capacity(record_times.len());
    let mut r = threshold(rng);

    let kicks = schedule.sorted_kicks();
    let mut kick_iter = kicks.iter().peekable();
    let mut rec_iter = record_times.iter().peekable();
    let mut cur_frame = vec![0.0; n];
    let mut t = schedule.start();
    let last = schedule.intervals.len() - 1;

    for (idx, iv) in schedule.intervals.iter().enumerate() {
        let frame = iv.system.frame().to_vec();
        change_frame_vec(&mut psi, &cur_frame, &frame, t);
        cur_frame = frame;
        let gen = iv.system.effective_hamiltonian() * C64::new(0.0, -1.0);
        let collapses: Vec<CMatrix> = iv.system.jumps().iter().map(|j| j.collapse()).collect();
        let scale = one_norm(&gen);
        let dt = if scale > 0.0 { (1.0 / scale).min(MAX_STEP) } else { MAX_STEP };
        let full = (&gen * C64::from(dt)).exp();
        let mut series = Series::new(n);
        loop {
            while let Some(k) = kick_iter.peek() {
                if k.time <= t + 1e-12 && (k.time < iv.end || idx == last) {
                    apply_kick(&mut psi, k, &cur_frame)?;
                    kick_iter.next();
                } else {
                    break;
                }
            }
            while let Some(&&s) = rec_iter.peek() {
                if s <= t + 1e-12 {
                    snapshots.push(normalized_ref(&psi, &cur_frame, t));
                    rec_iter.next();
                } else {
                    break;
                }
            }
            if t >= iv.end - 1e-12 {
                break;
            }
            let mut next = iv.end;
            if let Some(&&s) = rec_iter.peek() {
                next = next.min(s);
            }
            if let Some(k) = kick_iter.peek() {
                next = next.min(k.time);
            }
            let h = dt.min(next - t);
            let before = psi.clone();
            if h == dt {
                psi.gemm(C64::from(1.0), &full, &before, C64::from(0.0));
            } else {
                series.propagate(&gen, h, &before, &mut psi);
            }
            let nrm = norm_sqr(&psi);
            if !nrm.is_finite() {
                return Err(QuantumError::NonFinite { context: format!("in trajectory at t = {t} ns") });
            }
            if nrm > r {
                t = if next - (t + h) <= 1e-15 * next.abs().max(1.0) { next } else { t + h };
                continue;
            }
            // the norm decreases monotonically, so the crossing lies in (t, t + h]
            let (mut lo, mut hi) = (0.0, h);
            let (mut f_lo, mut f_hi) = (norm_sqr(&before) - r, nrm - r);
            let mut side = 0i8;
            let mut best = psi.clone();
            let mut trial = psi.clone();
            while hi - lo > JUMP_TIME_TOL {
                let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
                if !(x > lo && x < hi) {
                    x = 0.5 * (lo + hi);
                }
                series.propagate(&gen, x, &before, &mut trial);
                let fx = norm_sqr(&trial) - r;
                if fx > 0.0 {
                    lo = x;
                    f_lo = fx;
                    if side == -1 {
                        f_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = x;
                    f_hi = fx;
                    best.copy_from(&trial);
                    if side == 1 {
                        f_lo *= 0.5;
                    }
                    side = 1;
                }
                if fx.abs() < 1e-15 {
                    hi = x;
                    best.copy_from(&trial);
                    break;
                }
            }
            t += hi;
            psi = best;
            let weights: Vec<f64> = collapses.iter().map(|c| norm_sqr(&(c * &psi))).collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(QuantumError::NormUnderflow { time: t });
            }
            let mut u = rng.random::<f64>() * total;
            let mut k = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    k = i;
                    break;
                }
                u -= w;
            }
            let jumped = &collapses[k] * &psi;
            let jn = norm_sqr(&jumped).sqrt();
            psi = jumped / C64::from(jn);
            let ch = &iv.system.jumps()[k];
            jumps.push(JumpRecord { time: t, channel: k, tag: ch.tag.clone(), detector_route: ch.detector_route });
            r = threshold(rng);
        }
    }
    Ok(TrajectoryOutcome { state: normalized_ref(&psi, &cur_frame, t), jumps, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{substream, JumpChannel, LinearOp};

    fn decay(gamma: f64) -> OpenSystem {
        OpenSystem::new(LinearOp::zeros(2), vec![JumpChannel::new(LinearOp::transition(2, 0, 1), gamma, "d")]).unwrap()
    }

    #[test]
    fn single_decay_one_jump() {
        let mut rng = substream(1, 0);
        let out = evolve_trajectory(&QuantumState::basis(2, 1), &decay(1.0), 60.0, &mut rng).unwrap();
        assert_eq!(out.jumps.len(), 1);
        assert!(out.state[0].norm() > 0.999_999);
    }

    #[test]
    fn closed_system_is_unitary() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = C64::from(0.5);
        h[(1, 0)] = C64::from(0.5);
        let sys = OpenSystem::new(LinearOp::hermitian(h).unwrap(), vec![]).unwrap();
        let mut rng = substream(3, 0);
        let t = std::f64::consts::PI;
        let out = evolve_trajectory(&QuantumState::basis(2, 0), &sys, t, &mut rng).unwrap();
        assert!(out.jumps.is_empty());
        assert!((out.state[1].norm_sqr() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn mixed_state_rejected() {
        let mut rng = substream(1, 0);
        let st = QuantumState::Mixed(QuantumState::basis(2, 1).to_density());
        assert_eq!(evolve_trajectory(&st, &decay(1.0), 1.0, &mut rng).unwrap_err(), QuantumError::ExpectedPure);
    }
}
