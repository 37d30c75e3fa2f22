//! Estimators over click streams plus line fits, the photon budget and the
//! protocol figures of merit.

mod budget;
mod fit;
mod protocol;

pub use budget::{efficiency_budget, Budget, BudgetChain, ChainReading};
pub use fit::{fit_lorentzian, lorentzian, FitResult};
pub use protocol::{concurrence, protocol_metrics, ProtocolKind, ProtocolOutcome, ProtocolParams};

use serde::{Deserialize, Serialize};

use crate::detection::{ns_to_ps, ClickStream};
use crate::error::{Error, Result};
use crate::sequencer::{Color, PulseProgram, ShotLabel, Spin};

/// Two-fold coincidences: herald in one shot, readout click in the next.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoincidenceTable {
    /// `counts[color][spin]`, red/up first.
    pub counts: [[u64; 2]; 2],
    pub exposure_hours: f64,
}

fn color_index(c: Color) -> usize {
    match c {
        Color::Red => 0,
        Color::Blue => 1,
    }
}

fn spin_index(s: Spin) -> usize {
    match s {
        Spin::Up => 0,
        Spin::Down => 1,
    }
}

impl CoincidenceTable {
    pub fn get(&self, c: Color, s: Spin) -> u64 {
        self.counts[color_index(c)][spin_index(s)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Red heralds read out up, blue heralds read out down.
    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn incorrect(&self) -> u64 {
        self.counts[0][1] + self.counts[1][0]
    }

    pub fn rate_per_hour(&self) -> f64 {
        self.total() as f64 / self.exposure_hours
    }
}

/// Pair each herald-window click of shot `k` with a readout-window click of
/// shot `k + 1`. The readout pump of shot `k + 1` measures the spin named in
/// the label of shot `k`, so the pair lands in `label(k)`.
pub fn coincidences(stream: &ClickStream, prog: &PulseProgram, label: impl Fn(u64) -> ShotLabel) -> CoincidenceTable {
    let in_window = |t: i64, w: (f64, f64)| t >= ns_to_ps(w.0) && t < ns_to_ps(w.1);
    let mut heralds: Vec<u64> = Vec::new();
    let mut readouts: Vec<u64> = Vec::new();
    for c in &stream.clicks {
        if in_window(c.time, prog.herald_window) && heralds.last() != Some(&c.shot_index) {
            heralds.push(c.shot_index);
        }
        if in_window(c.time, prog.readout_window) && readouts.last() != Some(&c.shot_index) {
            readouts.push(c.shot_index);
        }
    }
    let mut table = CoincidenceTable {
        exposure_hours: stream.meta.n_shots as f64 * stream.meta.period_ps as f64 * 1e-12 / 3600.0,
        ..Default::default()
    };
    for k in heralds {
        if readouts.binary_search(&(k + 1)).is_ok() {
            let l = label(k);
            table.counts[color_index(l.input)][spin_index(l.readout)] += 1;
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    pub sigma: f64,
}

/// Binomial standard error of `k/n`. At the boundaries `k = 0` or `k = n`
/// the plug-in variance vanishes, so the variance uses `(k + ½)/(n + 1)`.
pub fn binomial_sigma(k: u64, n: u64) -> f64 {
    let n_f = n as f64;
    let p = if k == 0 || k == n { (k as f64 + 0.5) / (n_f + 1.0) } else { k as f64 / n_f };
    (p * (1.0 - p) / n_f).sqrt()
}

/// Mean of the two correct-readout conditionals, balanced over input colors.
pub fn correlation_fidelity(table: &CoincidenceTable) -> Result<FidelityEstimate> {
    let mut value = 0.0;
    let mut var = 0.0;
    for (color, correct) in [(0, 0), (1, 1)] {
        let row = table.counts[color];
        let n = row[0] + row[1];
        if n == 0 {
            let name = if color == 0 { "red" } else { "blue" };
            return Err(Error::Runtime(format!("no coincidences for {name} input: conditional undefined")));
        }
        value += 0.5 * row[correct] as f64 / n as f64;
        var += 0.25 * binomial_sigma(row[correct], n).powi(2);
    }
    Ok(FidelityEstimate { value, sigma: var.sqrt() })
}

/// Peak-integrated pulsed correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakCounts {
    /// Index `m` runs over `−k..=k`; entry `k` is the center peak.
    pub peaks: Vec<u64>,
}

impl PeakCounts {
    pub fn k(&self) -> usize {
        self.peaks.len() / 2
    }

    pub fn center(&self) -> u64 {
        self.peaks[self.k()]
    }

    pub fn at(&self, m: i64) -> u64 {
        self.peaks[(self.k() as i64 + m) as usize]
    }

    /// Sum and count of the peaks with `lo ≤ |m| ≤ hi`.
    pub fn side(&self, lo: usize, hi: usize) -> (u64, usize) {
        let k = self.k() as i64;
        let mut sum = 0;
        let mut n = 0;
        for m in -k..=k {
            let a = m.unsigned_abs() as usize;
            if a >= lo && a <= hi {
                sum += self.at(m);
                n += 1;
            }
        }
        (sum, n)
    }
}

/// Histogram delays `t_b − t_a` into peaks of width one period centered on
/// multiples of the period. With `detectors = None` all clicks are paired
/// with later clicks of any detector; the center peak is then emptied by
/// detector dead time and only side peaks are meaningful.
pub fn pulsed_correlation(stream: &ClickStream, period_ps: i64, detectors: Option<(u32, u32)>, k: usize) -> PeakCounts {
    let mut peaks = vec![0u64; 2 * k + 1];
    let reach = (k as i64) * period_ps + period_ps / 2;
    let bin = |dt: i64| -> Option<usize> {
        let m = (dt as f64 / period_ps as f64).round() as i64;
        (m.unsigned_abs() as usize <= k).then(|| (m + k as i64) as usize)
    };
    match detectors {
        Some((a, b)) => {
            let ta: Vec<i64> = stream.for_detector(a).map(|c| c.absolute_time).collect();
            let tb: Vec<i64> = stream.for_detector(b).map(|c| c.absolute_time).collect();
            let mut lo = 0;
            for &t in &ta {
                while lo < tb.len() && tb[lo] < t - reach {
                    lo += 1;
                }
                for &u in tb[lo..].iter().take_while(|&&u| u <= t + reach) {
                    if let Some(i) = bin(u - t) {
                        peaks[i] += 1;
                    }
                }
            }
        }
        None => {
            let t: Vec<i64> = stream.clicks.iter().map(|c| c.absolute_time).collect();
            for (i, &x) in t.iter().enumerate() {
                for &y in t[i + 1..].iter().take_while(|&&y| y - x <= reach) {
                    if let Some(j) = bin(y - x) {
                        peaks[j] += 1;
                        // mirror so that the histogram stays symmetric
                        peaks[2 * k - j] += (j != k) as u64;
                    }
                }
            }
        }
    }
    PeakCounts { peaks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub ratio: f64,
    pub sigma: f64,
    pub center: u64,
    pub side_mean: f64,
}

/// Center peak over mean side peak, with Poisson errors. Side peaks are
/// `1..=k` periods away.
pub fn g2_pulsed(stream: &ClickStream, period_ps: i64, detectors: Option<(u32, u32)>, k: usize) -> Result<G2Estimate> {
    if k == 0 || period_ps <= 0 {
        return Err(Error::Config("g2 needs a positive period and at least one side peak".into()));
    }
    let p = pulsed_correlation(stream, period_ps, detectors, k);
    let (side, n) = p.side(1, k);
    if side == 0 {
        return Err(Error::Runtime("no side-peak coincidences: g2 undefined".into()));
    }
    let side_mean = side as f64 / n as f64;
    let c = p.center();
    let ratio = c as f64 / side_mean;
    let sigma = if c > 0 { ratio * (1.0 / c as f64 + 1.0 / side as f64).sqrt() } else { 1.0 / side_mean };
    Ok(G2Estimate { ratio, sigma, center: c, side_mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomRatio {
    pub factor: f64,
    pub sigma: f64,
    /// Set when the parallel center peak is empty; the factor then uses one
    /// count in its place.
    pub lower_bound: bool,
    pub center_parallel: u64,
    pub center_orthogonal: u64,
}

/// Peaks at least this many periods away are uncorrelated references.
pub const HOM_REFERENCE_PEAKS: (usize, usize) = (2, 4);

/// Reduction of the normalized center peak from orthogonal to parallel
/// input polarizations. Each center peak is normalized by the far side peaks
/// of its own stream, so unequal exposures cancel.
pub fn hom_ratio(parallel: &ClickStream, orthogonal: &ClickStream, period_ps: i64, detectors: (u32, u32)) -> Result<HomRatio> {
    let (lo, hi) = HOM_REFERENCE_PEAKS;
    let norm = |s: &ClickStream| -> Result<(u64, u64, f64)> {
        let p = pulsed_correlation(s, period_ps, Some(detectors), hi);
        let (side, n) = p.side(lo, hi);
        if side == 0 {
            return Err(Error::Runtime("no reference-peak coincidences: HOM ratio undefined".into()));
        }
        Ok((p.center(), side, side as f64 / n as f64))
    };
    let (cp, sp, mp) = norm(parallel)?;
    let (co, so, mo) = norm(orthogonal)?;
    if co == 0 {
        return Err(Error::Runtime("orthogonal center peak is empty".into()));
    }
    let lower_bound = cp == 0;
    let cp_eff = cp.max(1) as f64;
    let factor = (co as f64 / mo) / (cp_eff / mp);
    let sigma = factor * (1.0 / co as f64 + 1.0 / cp_eff + 1.0 / so as f64 + 1.0 / sp as f64).sqrt();
    Ok(HomRatio { factor, sigma, lower_bound, center_parallel: cp, center_orthogonal: co })
}

/// Poisson rate and its standard error.
pub fn poisson_rate(counts: u64, exposure: f64) -> (f64, f64) {
    (counts as f64 / exposure, (counts as f64).sqrt() / exposure)
}

/// Pearson χ² of counts against expected values.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::StreamMeta;
    use crate::sequencer::round_robin;

    fn stream(raw: Vec<(u32, i64)>, period_ns: f64, n_shots: u64) -> ClickStream {
        ClickStream::from_absolute(StreamMeta::new(period_ns, n_shots, 0, ""), raw)
    }

    #[test]
    fn empty_stream_gives_zero_table() {
        let prog = PulseProgram::correlation_protocol(50.0, 1.0);
        let t = coincidences(&stream(vec![], 50.0, 100), &prog, round_robin);
        assert_eq!(t.total(), 0);
    }

    #[test]
    fn constructed_coincidence() {
        let prog = PulseProgram::correlation_protocol(50.0, 1.0);
        // shot 4 is (red, up); herald at 16 ns, readout at 1 ns of shot 5
        let raw = vec![(0, 4 * 50_000 + 16_000), (0, 5 * 50_000 + 1_000), (0, 7 * 50_000 + 2_000)];
        let t = coincidences(&stream(raw, 50.0, 10), &prog, round_robin);
        assert_eq!(t.total(), 1);
        assert_eq!(t.get(round_robin(4).input, round_robin(4).readout), 1);
        assert_eq!(t.get(Color::Red, Spin::Up), 1);
    }

    #[test]
    fn fidelity_examples() {
        let f = correlation_fidelity(&CoincidenceTable { counts: [[35, 10], [10, 35]], exposure_hours: 46.0 }).unwrap();
        assert!((f.value - 35.0 / 45.0).abs() < 1e-12);
        let u = correlation_fidelity(&CoincidenceTable { counts: [[20, 20], [20, 20]], exposure_hours: 1.0 }).unwrap();
        assert_eq!(u.value, 0.5);
        let p = correlation_fidelity(&CoincidenceTable { counts: [[30, 0], [0, 30]], exposure_hours: 1.0 }).unwrap();
        assert_eq!(p.value, 1.0);
        assert!(p.sigma > 0.0 && p.sigma < 0.05);
        assert!(correlation_fidelity(&CoincidenceTable { counts: [[0, 0], [3, 4]], exposure_hours: 1.0 }).is_err());
    }

    #[test]
    fn g2_single_photons_and_poisson() {
        // one click per period on alternating detectors
        let period = 13_158;
        let single: Vec<(u32, i64)> = (0..5000).map(|k| ((k % 2) as u32, k * period + 500)).collect();
        let g = g2_pulsed(&stream(single, 13.158, 5000), period, Some((0, 1)), 3).unwrap();
        assert_eq!(g.center, 0);
        assert_eq!(g.ratio, 0.0);

        use rand::Rng;
        let mut rng = crate::quantum::substream(3, 0);
        let mut raw = Vec::new();
        for k in 0..200_000i64 {
            for d in 0..2u32 {
                if rng.random::<f64>() < 0.05 {
                    raw.push((d, k * period + 400 + d as i64));
                }
            }
        }
        let g = g2_pulsed(&stream(raw, 13.158, 200_000), period, Some((0, 1)), 5).unwrap();
        assert!((g.ratio - 1.0).abs() < 3.0 * g.sigma, "{g:?}");
    }

    #[test]
    fn hom_orthogonal_against_itself_is_one() {
        let period = 13_158;
        let mut rng = crate::quantum::substream(5, 0);
        use rand::Rng;
        let raw: Vec<(u32, i64)> = (0..100_000i64)
            .flat_map(|k| (0..2u32).map(move |d| (d, k)))
            .filter(|_| rng.random::<f64>() < 0.1)
            .map(|(d, k)| (d, k * period + 100 + d as i64))
            .collect();
        let s = stream(raw, 13.158, 100_000);
        let h = hom_ratio(&s, &s, period, (0, 1)).unwrap();
        assert!((h.factor - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fidelity_is_scale_invariant(a in 1u64..50, b in 0u64..50, c in 0u64..50, d in 1u64..50, s in 1u64..20) {
                let t = CoincidenceTable { counts: [[a, b], [c, d]], exposure_hours: 1.0 };
                let u = CoincidenceTable { counts: [[a * s, b * s], [c * s, d * s]], exposure_hours: 1.0 };
                let f = correlation_fidelity(&t).unwrap().value;
                let g = correlation_fidelity(&u).unwrap().value;
                prop_assert!((f - g).abs() < 1e-12);
            }
        }
    }
}
