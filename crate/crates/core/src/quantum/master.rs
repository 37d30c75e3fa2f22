//! Lindblad master-equation propagation, including photon-counting
//! (jump-resolved) variants used for heralded conditioning.

use super::{
    change_frame_density, check_finite, hermitize, CMatrix, Dopri5, Kick, OpenSystem, QuantumError,
    QuantumState, Result, Schedule, Tolerances, C64,
};

/// Tighter than the trajectory default: conditional fidelities are checked
/// to 1e−6 after tens of ns of GHz spin precession, and per-step errors add up.
pub const MASTER_TOLERANCES: Tolerances = Tolerances { abs: 1e-11, rel: 1e-10 };

type Triplets = Vec<(usize, usize, C64)>;

fn triplets(m: &CMatrix) -> Triplets {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != C64::from(0.0) {
                t.push((i, j, v));
            }
        }
    }
    t
}

/// Cached generator `ρ ↦ -i(H_eff ρ − ρ H_eff†) + Σ_k C_k ρ C_k†`. Operators
/// are stored as nonzero triplets; level schemes here are sparse.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n: usize,
    heff: Triplets,
    collapses: Vec<Triplets>,
    dense_collapses: Vec<CMatrix>,
    tags: Vec<String>,
}

impl Liouvillian {
    pub fn new(sys: &OpenSystem) -> Self {
        let dense_collapses: Vec<CMatrix> = sys.jumps().iter().map(|j| j.collapse()).collect();
        Self {
            n: sys.dim(),
            heff: triplets(&sys.effective_hamiltonian()),
            collapses: dense_collapses.iter().map(triplets).collect(),
            dense_collapses,
            tags: sys.jumps().iter().map(|j| j.tag.clone()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Channel mask selecting `tag`.
    pub fn mask(&self, tag: &str) -> Vec<bool> {
        self.tags.iter().map(|t| t == tag).collect()
    }

    fn add_jump(c: &Triplets, rho: &CMatrix, out: &mut CMatrix) {
        for &(i, a, c1) in c {
            for &(j, b, c2) in c {
                out[(i, j)] += c1 * rho[(a, b)] * c2.conj();
            }
        }
    }

    /// `out = L(ρ)` with the recycling terms of masked channels omitted
    /// (`skip[k] == true`).
    pub fn apply_masked(&self, rho: &CMatrix, out: &mut CMatrix, skip: Option<&[bool]>) {
        let n = self.n;
        out.fill(C64::from(0.0));
        for &(r, c, h) in &self.heff {
            let a = C64::new(0.0, -1.0) * h;
            let b = C64::new(0.0, 1.0) * h.conj();
            for j in 0..n {
                out[(r, j)] += a * rho[(c, j)];
            }
            // (ρ H†)_{i r} = Σ_c ρ_{i c} conj(H_{r c})
            for i in 0..n {
                out[(i, r)] += rho[(i, c)] * b;
            }
        }
        for (k, c) in self.collapses.iter().enumerate() {
            if skip.is_some_and(|s| s[k]) {
                continue;
            }
            Self::add_jump(c, rho, out);
        }
    }

    pub fn apply(&self, rho: &CMatrix, out: &mut CMatrix) {
        self.apply_masked(rho, out, None);
    }

    /// `out += Σ_{k ∈ mask} C_k ρ C_k†`
    pub fn add_jumps(&self, rho: &CMatrix, out: &mut CMatrix, mask: &[bool]) {
        for (k, c) in self.collapses.iter().enumerate() {
            if mask[k] {
                Self::add_jump(c, rho, out);
            }
        }
    }

    /// Instantaneous rate `Tr(C_k ρ C_k†)` per channel.
    pub fn channel_rates(&self, rho: &CMatrix) -> Vec<f64> {
        self.dense_collapses.iter().map(|c| (c.adjoint() * c * rho).trace().re).collect()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QuantumError::InvalidGrid);
    }
    Ok(())
}

/// Density matrices `ρ(t)` at every grid point (grid starts at 0).
pub fn evolve_master(state: &QuantumState, sys: &OpenSystem, t_grid: &[f64]) -> Result<Vec<QuantumState>> {
    sys.check_state(state)?;
    let end = *t_grid.last().ok_or(QuantumError::InvalidGrid)?;
    if end == 0.0 {
        validate_grid(t_grid)?;
        return Ok(vec![QuantumState::Mixed(state.to_density())]);
    }
    evolve_master_schedule(state, &Schedule::single(sys.clone(), end), t_grid)
}

/// Master evolution across a piecewise-constant schedule. States are
/// reported in the reference frame. A kick at a grid time is applied before
/// the state at that time is recorded (except at the final grid time when it
/// precedes the schedule end).
pub fn evolve_master_schedule(state: &QuantumState, schedule: &Schedule, t_grid: &[f64]) -> Result<Vec<QuantumState>> {
    schedule.validate()?;
    validate_grid(t_grid)?;
    if state.dim() != schedule.dim() {
        return Err(QuantumError::DimensionMismatch { expected: schedule.dim(), found: state.dim() });
    }
    if *t_grid.last().unwrap() > schedule.end() + 1e-12 {
        return Err(QuantumError::Invalid("time grid extends past the schedule".into()));
    }
    let mut rho = state.to_density();
    check_finite(&rho, "in initial state")?;
    let mut out = Vec::with_capacity(t_grid.len());
    drive(&mut rho, schedule, schedule.start(), *t_grid.last().unwrap(), t_grid, &Generator::Full, |_, y| {
        out.push(QuantumState::Mixed(hermitize(y)));
    })?;
    Ok(out)
}

/// Result of conditioning on exactly one herald jump inside a window.
#[derive(Debug, Clone)]
pub struct HeraldConditioned {
    /// Probability of exactly one herald jump in the window.
    pub probability: f64,
    /// Normalized conditional density matrix at the end time (reference frame).
    pub state: CMatrix,
    /// Probability of no herald in the window.
    pub none_probability: f64,
}

/// Jump-superoperator computation: evolve to `window.0`, then propagate the
/// zero- and one-herald branches through the window, then continue the
/// one-herald branch unconditionally to `t_end`.
pub fn herald_conditioned(
    state: &QuantumState,
    schedule: &Schedule,
    herald_tag: &str,
    window: (f64, f64),
    t_end: f64,
) -> Result<HeraldConditioned> {
    schedule.validate()?;
    let (t1, t2) = window;
    if !(t1 >= schedule.start() && t2 > t1 && t_end >= t2 && t_end <= schedule.end() + 1e-12) {
        return Err(QuantumError::Invalid("herald window outside schedule".into()));
    }
    let n = schedule.dim();
    let mut rho = state.to_density();
    if t1 > schedule.start() {
        drive(&mut rho, schedule, schedule.start(), t1, &[], &Generator::Full, |_, _| {})?;
    }
    let mut stacked = CMatrix::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&rho);
    let gen = Generator::Counting { tag: herald_tag.to_string(), blocks: 2, absorbing_last: false };
    drive(&mut stacked, schedule, t1, t2, &[], &gen, |_, _| {})?;
    let none_probability = stacked.rows(0, n).trace().re;
    let mut one = stacked.rows(n, n).into_owned();
    if t_end > t2 {
        drive(&mut one, schedule, t2, t_end, &[], &Generator::Full, |_, _| {})?;
    }
    let probability = one.trace().re;
    if !(probability > 1e-12) {
        return Err(QuantumError::HeraldTooRare { probability });
    }
    Ok(HeraldConditioned { probability, state: hermitize(&(one / C64::from(probability))), none_probability })
}

/// Probability of emitting exactly `n` photons on `tag` over the whole
/// schedule, for `n < max_n`; the last entry collects `n ≥ max_n − 1`.
pub fn counting_distribution(state: &QuantumState, schedule: &Schedule, tag: &str, max_n: usize) -> Result<Vec<f64>> {
    schedule.validate()?;
    let n = schedule.dim();
    let blocks = max_n.max(2);
    let mut stacked = CMatrix::zeros(blocks * n, n);
    stacked.rows_mut(0, n).copy_from(&state.to_density());
    let gen = Generator::Counting { tag: tag.to_string(), blocks, absorbing_last: true };
    drive(&mut stacked, schedule, schedule.start(), schedule.end(), &[], &gen, |_, _| {})?;
    Ok((0..blocks).map(|b| stacked.rows(b * n, n).trace().re).collect())
}

pub(crate) enum Generator {
    Full,
    /// Stacked blocks ρ_0..ρ_{B-1} resolved by herald count.
    Counting { tag: String, blocks: usize, absorbing_last: bool },
}

fn make_rhs<'a>(lv: &'a Liouvillian, gen: &'a Generator) -> impl FnMut(f64, &CMatrix, &mut CMatrix) + 'a {
    let n = lv.dim();
    let (mask, skip) = match gen {
        Generator::Full => (vec![false; lv.tags().len()], None),
        Generator::Counting { tag, .. } => {
            let m = lv.mask(tag);
            (m.clone(), Some(m))
        }
    };
    let mut buf = CMatrix::zeros(n, n);
    move |_t, y, dy| match gen {
        Generator::Full => lv.apply(y, dy),
        Generator::Counting { blocks, absorbing_last, .. } => {
            let skip = skip.as_deref();
            for b in 0..*blocks {
                let rho_b = y.rows(b * n, n).into_owned();
                let last_absorbs = *absorbing_last && b + 1 == *blocks;
                lv.apply_masked(&rho_b, &mut buf, if last_absorbs { None } else { skip });
                if b > 0 {
                    let prev = y.rows((b - 1) * n, n).into_owned();
                    lv.add_jumps(&prev, &mut buf, &mask);
                }
                dy.rows_mut(b * n, n).copy_from(&buf);
            }
        }
    }
}

fn apply_kick(y: &mut CMatrix, kick: &Kick, frame: &[f64]) -> Result<()> {
    let n = y.ncols();
    let zero = vec![0.0; n];
    change_frame_density(y, frame, &zero, kick.time);
    if let Some(g) = &kick.guard {
        // guard checks the first block (the physical, unconditioned state)
        let tr = y.rows(0, n).trace().re;
        let pop: f64 = g.levels.iter().map(|&i| y[(i, i)].re).sum::<f64>() / tr.max(1e-300);
        if pop > g.max_population {
            return Err(QuantumError::Invalid(format!(
                "kick `{}` at t = {} ns applied with population {pop:.3e} on guarded levels",
                kick.label, kick.time
            )));
        }
    }
    let u = &kick.unitary;
    let ud = u.adjoint();
    for b in 0..y.nrows() / n {
        let blk = y.rows(b * n, n).into_owned();
        y.rows_mut(b * n, n).copy_from(&(u * blk * &ud));
    }
    change_frame_density(y, &zero, frame, kick.time);
    Ok(())
}

/// Propagate stacked density blocks from `t_from` to `t_to` through the
/// schedule, calling `record` (reference frame) at each `stops` time.
pub(crate) fn drive<R>(
    y: &mut CMatrix,
    schedule: &Schedule,
    t_from: f64,
    t_to: f64,
    stops: &[f64],
    gen: &Generator,
    mut record: R,
) -> Result<()>
where
    R: FnMut(f64, &CMatrix),
{
    let n = y.ncols();
    let zero = vec![0.0; n];
    let kicks = schedule.sorted_kicks();
    let mut stop_iter = stops.iter().peekable();
    let at_end = t_to >= schedule.end() - 1e-12;
    let mut kick_iter = kicks
        .iter()
        .filter(|k| k.time >= t_from && (k.time < t_to || at_end))
        .peekable();
    let mut t = t_from;

    // input is in the reference frame
    let mut cur_frame: Vec<f64> = zero.clone();
    for iv in &schedule.intervals {
        if iv.end <= t_from && t_from < t_to {
            continue;
        }
        if iv.start > t_to {
            break;
        }
        let frame = iv.system.frame().to_vec();
        change_frame_density(y, &cur_frame, &frame, t);
        cur_frame = frame;
        let lv = Liouvillian::new(&iv.system);
        let mut rhs = make_rhs(&lv, gen);
        let mut stepper = Dopri5::new(y.nrows(), y.ncols(), MASTER_TOLERANCES);
        let seg_end = iv.end.min(t_to);
        loop {
            // events at the current time: kicks first, then records
            while let Some(k) = kick_iter.peek() {
                if k.time <= t + 1e-12 && (k.time < iv.end || iv.end >= t_to) {
                    apply_kick(y, k, &cur_frame)?;
                    kick_iter.next();
                } else {
                    break;
                }
            }
            while let Some(&&s) = stop_iter.peek() {
                if s <= t + 1e-12 {
                    let mut copy = y.clone();
                    change_frame_density(&mut copy, &cur_frame, &zero, t);
                    record(s, &copy);
                    stop_iter.next();
                } else {
                    break;
                }
            }
            if t >= seg_end - 1e-12 {
                break;
            }
            let mut next = seg_end;
            if let Some(&&s) = stop_iter.peek() {
                next = next.min(s);
            }
            if let Some(k) = kick_iter.peek() {
                next = next.min(k.time);
            }
            stepper.advance(&mut rhs, t, next, y)?;
            t = next;
        }
        if t >= t_to - 1e-12 {
            break;
        }
    }
    change_frame_density(y, &cur_frame, &zero, t);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{JumpChannel, LinearOp, ONE};

    fn two_level(rabi: f64, gamma: f64) -> OpenSystem {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = C64::from(rabi / 2.0);
        h[(1, 0)] = C64::from(rabi / 2.0);
        let jumps = if gamma > 0.0 { vec![JumpChannel::new(LinearOp::transition(2, 0, 1), gamma, "decay")] } else { vec![] };
        OpenSystem::new(LinearOp::hermitian(h).unwrap(), jumps).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let sys = two_level(0.0, 1.0);
        let out = evolve_master(&QuantumState::basis(2, 1), &sys, &[0.0, 0.5, 1.0]).unwrap();
        let pe = out[2].populations()[1];
        assert!((pe - (-1.0f64).exp()).abs() < 1e-6, "{pe}");
    }

    #[test]
    fn identity_without_dynamics() {
        let sys = OpenSystem::new(LinearOp::zeros(3), vec![]).unwrap();
        let mut v = crate::quantum::CVector::zeros(3);
        v[0] = ONE;
        v[2] = C64::new(0.0, 1.0);
        let s = QuantumState::pure(v).unwrap();
        let rho0 = s.to_density();
        for st in evolve_master(&s, &sys, &[0.0, 1.0, 7.0]).unwrap() {
            assert!(crate::quantum::max_abs(&(st.to_density() - &rho0)) < 1e-15);
        }
    }

    #[test]
    fn pi_pulse_inverts() {
        let omega = 3.0;
        let sys = two_level(omega, 0.0);
        let t = std::f64::consts::PI / omega;
        let out = evolve_master(&QuantumState::basis(2, 0), &sys, &[0.0, t]).unwrap();
        assert!((out[1].populations()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_validation() {
        let sys = two_level(1.0, 1.0);
        let s = QuantumState::basis(2, 0);
        assert_eq!(evolve_master(&s, &sys, &[0.1, 1.0]).unwrap_err(), QuantumError::InvalidGrid);
        assert_eq!(evolve_master(&s, &sys, &[0.0, 1.0, 1.0]).unwrap_err(), QuantumError::InvalidGrid);
        assert!(matches!(
            evolve_master(&QuantumState::basis(3, 0), &sys, &[0.0, 1.0]),
            Err(QuantumError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn counting_distribution_of_single_decay() {
        let sys = two_level(0.0, 2.0);
        let p = counting_distribution(&QuantumState::basis(2, 1), &Schedule::single(sys, 20.0), "decay", 3).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-7);
        assert!(p[0].abs() < 1e-7 && p[2].abs() < 1e-9);
    }
}
