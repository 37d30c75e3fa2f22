//! Detector model and the click-stream interchange format.
//!
//! Physical events are thinned by efficiency and smeared by Gaussian jitter.
//! Background events are already detector-level rates and only get jitter.
//! Dark clicks are added as a homogeneous Poisson process, and dead time is
//! enforced last, per detector, in time order.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequencer::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// ps (standard deviation).
    pub jitter_sigma: f64,
    /// ns.
    pub dead_time: f64,
    /// 1/s.
    pub dark_rate: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { efficiency: 1.0, jitter_sigma: 0.0, dead_time: 25.0, dark_rate: 0.0 }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config(format!("detector.efficiency = {} outside [0, 1]", self.efficiency)));
        }
        if !(self.jitter_sigma >= 0.0) || !(self.dead_time >= 0.0) || !(self.dark_rate >= 0.0) {
            return Err(Error::Config("detector jitter_sigma (ps), dead_time (ns), dark_rate (1/s) must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Click {
    pub detector_id: u32,
    pub shot_index: u64,
    /// ps within the shot.
    pub time: i64,
    /// ps since the first shot.
    pub absolute_time: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StreamMeta {
    /// Shot period in ps.
    pub period_ps: i64,
    pub n_shots: u64,
    pub seed: u64,
    pub config_digest: String,
}

impl StreamMeta {
    pub fn new(period_ns: f64, n_shots: u64, seed: u64, config_digest: impl Into<String>) -> Self {
        Self { period_ps: ns_to_ps(period_ns), n_shots, seed, config_digest: config_digest.into() }
    }

    pub fn period_ns(&self) -> f64 {
        self.period_ps as f64 * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClickStream {
    pub clicks: Vec<Click>,
    pub meta: StreamMeta,
}

pub fn ns_to_ps(t: f64) -> i64 {
    (t * 1e3).round() as i64
}

impl ClickStream {
    pub fn new(meta: StreamMeta) -> Self {
        Self { clicks: vec![], meta }
    }

    /// Build from absolute times; sorts and fills shot indices.
    pub fn from_absolute(meta: StreamMeta, mut raw: Vec<(u32, i64)>) -> Self {
        raw.sort_by_key(|&(d, t)| (t, d));
        let p = meta.period_ps.max(1);
        let clicks = raw
            .into_iter()
            .map(|(d, t)| Click { detector_id: d, shot_index: t.div_euclid(p) as u64, time: t.rem_euclid(p), absolute_time: t })
            .collect();
        Self { clicks, meta }
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn for_detector(&self, id: u32) -> impl Iterator<Item = &Click> {
        self.clicks.iter().filter(move |c| c.detector_id == id)
    }

    /// Smallest spacing between consecutive clicks of one detector, ps.
    pub fn min_spacing(&self, id: u32) -> Option<i64> {
        let t: Vec<i64> = self.for_detector(id).map(|c| c.absolute_time).collect();
        t.windows(2).map(|w| w[1] - w[0]).min()
    }
}

/// Convert emission events to clicks. Events without a detector route are
/// not collected.
pub fn detect<R: Rng + ?Sized>(events: &[Event], det: &DetectorSpec, meta: StreamMeta, rng: &mut R) -> ClickStream {
    let p = meta.period_ps;
    let jitter = (det.jitter_sigma > 0.0).then(|| Normal::new(0.0, det.jitter_sigma).expect("finite jitter"));
    let mut raw: Vec<(u32, i64)> = Vec::with_capacity(events.len());
    let mut routes: Vec<u32> = Vec::new();
    for e in events {
        let Some(route) = e.route else { continue };
        if !routes.contains(&route) {
            routes.push(route);
        }
        if e.physical && det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
            continue;
        }
        let mut t = e.shot as f64 * p as f64 + e.time * 1e3;
        if let Some(j) = &jitter {
            t += j.sample(rng);
        }
        raw.push((route, t.round() as i64));
    }
    if routes.is_empty() {
        routes.push(0);
    }
    let span_s = meta.n_shots as f64 * p as f64 * 1e-12;
    if det.dark_rate > 0.0 && span_s > 0.0 {
        for &route in &routes {
            let n = Poisson::new(det.dark_rate * span_s).expect("positive mean").sample(rng) as u64;
            for _ in 0..n {
                let t = rng.random::<f64>() * meta.n_shots as f64 * p as f64;
                raw.push((route, t.floor() as i64));
            }
        }
    }
    raw.retain(|&(_, t)| t >= 0 && (meta.n_shots == 0 || t < meta.n_shots as i64 * p));
    raw.sort_by_key(|&(d, t)| (t, d));
    let dead = ns_to_ps(det.dead_time);
    let mut last: Vec<(u32, i64)> = Vec::new();
    raw.retain(|&(d, t)| match last.iter_mut().find(|(id, _)| *id == d) {
        Some((_, prev)) if t - *prev < dead => false,
        Some((_, prev)) => {
            *prev = t;
            true
        }
        None => {
            last.push((d, t));
            true
        }
    });
    ClickStream::from_absolute(meta, raw)
}

/// Integer-count histogram. Folding maps every click into one period.
pub fn histogram(stream: &ClickStream, bin_ps: i64, fold_to_period: bool) -> Result<(Vec<i64>, Vec<u64>)> {
    if bin_ps <= 0 {
        return Err(Error::Config("histogram bin must be > 0 ps".into()));
    }
    let span = if fold_to_period { stream.meta.period_ps } else { stream.meta.period_ps * stream.meta.n_shots as i64 };
    let nbins = ((span + bin_ps - 1) / bin_ps).max(1) as usize;
    let edges: Vec<i64> = (0..=nbins as i64).map(|k| k * bin_ps).collect();
    let mut counts = vec![0u64; nbins];
    for c in &stream.clicks {
        let t = if fold_to_period { c.time } else { c.absolute_time };
        let k = ((t / bin_ps) as usize).min(nbins - 1);
        counts[k] += 1;
    }
    Ok((edges, counts))
}

pub fn write_stream<W: Write>(stream: &ClickStream, mut w: W) -> std::io::Result<()> {
    let m = &stream.meta;
    let mut s = String::new();
    let _ = writeln!(s, "# period_ps={}", m.period_ps);
    let _ = writeln!(s, "# n_shots={}", m.n_shots);
    let _ = writeln!(s, "# seed={}", m.seed);
    let _ = writeln!(s, "# config_digest={}", m.config_digest);
    s.push_str("detector_id,shot_index,time_ps\n");
    w.write_all(s.as_bytes())?;
    let mut buf = String::with_capacity(32 * stream.clicks.len().min(1 << 20));
    for c in &stream.clicks {
        let _ = writeln!(buf, "{},{},{}", c.detector_id, c.shot_index, c.time);
        if buf.len() > 1 << 20 {
            w.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    w.write_all(buf.as_bytes())
}

pub fn save_stream(stream: &ClickStream, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_stream(stream, std::io::BufWriter::new(f)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_stream<R: BufRead>(reader: R, path: &Path) -> Result<ClickStream> {
    let err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut meta = StreamMeta::default();
    let mut seen_header = false;
    let mut clicks = Vec::new();
    let mut prev: Option<(i64, u32)> = None;
    for (k, line) in reader.lines().enumerate() {
        let n = k + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest.trim().split_once('=').ok_or_else(|| err(n, "metadata line without `=`".into()))?;
            let value = value.trim();
            let bad = |_| err(n, format!("bad value for {key}: `{value}`"));
            match key.trim() {
                "period_ps" => meta.period_ps = value.parse().map_err(bad)?,
                "n_shots" => meta.n_shots = value.parse().map_err(bad)?,
                "seed" => meta.seed = value.parse().map_err(bad)?,
                "config_digest" => meta.config_digest = value.to_string(),
                other => return Err(err(n, format!("unknown metadata key `{other}`"))),
            }
            continue;
        }
        if !seen_header {
            if line.trim() != "detector_id,shot_index,time_ps" {
                return Err(err(n, format!("expected column header, found `{line}`")));
            }
            seen_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(err(n, format!("expected 3 fields, found {}", f.len())));
        }
        let d: u32 = f[0].parse().map_err(|_| err(n, format!("bad detector_id `{}`", f[0])))?;
        let s: u64 = f[1].parse().map_err(|_| err(n, format!("bad shot_index `{}`", f[1])))?;
        let t: i64 = f[2].parse().map_err(|_| err(n, format!("bad time_ps `{}`", f[2])))?;
        if meta.period_ps <= 0 {
            return Err(err(n, "period_ps metadata missing before data".into()));
        }
        if t < 0 || t >= meta.period_ps {
            return Err(err(n, format!("time_ps {t} outside the shot period")));
        }
        let abs = s as i64 * meta.period_ps + t;
        if let Some(p) = prev {
            if (abs, d) < p {
                return Err(err(n, "rows out of order (must be sorted by absolute time)".into()));
            }
        }
        prev = Some((abs, d));
        clicks.push(Click { detector_id: d, shot_index: s, time: t, absolute_time: abs });
    }
    if !seen_header {
        return Err(err(0, "missing column header".into()));
    }
    Ok(ClickStream { clicks, meta })
}

pub fn load_stream(path: &Path) -> Result<ClickStream> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_stream(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::substream;

    fn ev(shot: u64, time: f64) -> Event {
        Event { shot, time, tag: "x".into(), route: Some(0), physical: true }
    }

    fn ideal() -> DetectorSpec {
        DetectorSpec { efficiency: 1.0, jitter_sigma: 0.0, dead_time: 0.0, dark_rate: 0.0 }
    }

    #[test]
    fn ideal_detector_is_identity() {
        let events = vec![ev(0, 1.5), ev(0, 30.0), ev(3, 7.25)];
        let s = detect(&events, &ideal(), StreamMeta::new(50.0, 4, 0, ""), &mut substream(0, 0));
        let got: Vec<(u64, i64)> = s.clicks.iter().map(|c| (c.shot_index, c.time)).collect();
        assert_eq!(got, vec![(0, 1500), (0, 30000), (3, 7250)]);
    }

    #[test]
    fn dark_counts_are_poissonian() {
        let det = DetectorSpec { dark_rate: 1.0, ..ideal() };
        // 10⁴ s of 50 ns shots
        let meta = StreamMeta::new(50.0, 200_000_000_000, 0, "");
        let s = detect(&[], &det, meta, &mut substream(4, 0));
        let n = s.len() as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0, "{n}");
    }

    #[test]
    fn dead_time_enforced() {
        let events: Vec<Event> = (0..50).map(|k| ev(k / 5, (k % 5) as f64 * 9.0)).collect();
        let det = DetectorSpec { dead_time: 25.0, ..ideal() };
        let s = detect(&events, &det, StreamMeta::new(50.0, 10, 0, ""), &mut substream(1, 0));
        assert!(s.min_spacing(0).unwrap() >= 25_000);
    }

    #[test]
    fn histogram_counts() {
        let s = ClickStream::new(StreamMeta::new(50.0, 10, 0, ""));
        let (_, c) = histogram(&s, 1000, true).unwrap();
        assert!(c.iter().all(|&x| x == 0));
        assert_eq!(c.len(), 50);
        let raw: Vec<(u32, i64)> = (0..500).map(|k| (0, k * 1000 + 17)).collect();
        let s = ClickStream::from_absolute(StreamMeta::new(50.0, 10, 0, ""), raw);
        let (_, c) = histogram(&s, 1000, true).unwrap();
        assert!(c.iter().all(|&x| x == 10));
        assert_eq!(c.iter().sum::<u64>(), 500);
    }

    #[test]
    fn csv_round_trip() {
        let raw = vec![(0, 5), (1, 5), (0, 49_999), (0, 123_456)];
        let s = ClickStream::from_absolute(StreamMeta::new(50.0, 3, 9, "abc"), raw);
        let mut buf = Vec::new();
        write_stream(&s, &mut buf).unwrap();
        let back = read_stream(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, s);
        let empty = ClickStream::new(StreamMeta::new(50.0, 0, 1, ""));
        let mut buf = Vec::new();
        write_stream(&empty, &mut buf).unwrap();
        assert_eq!(read_stream(&buf[..], Path::new("mem")).unwrap(), empty);
    }

    #[test]
    fn out_of_order_rows_rejected() {
        let text = "# period_ps=50000\n# n_shots=2\n# seed=0\n# config_digest=\ndetector_id,shot_index,time_ps\n0,1,10\n0,0,20\n";
        match read_stream(text.as_bytes(), Path::new("f.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn dead_time_never_violated(
                times in proptest::collection::vec((0u64..20, 0.0f64..50.0, 0u32..2), 0..200),
                dead in 0.0f64..60.0,
                jitter in 0.0f64..200.0,
                seed in any::<u64>(),
            ) {
                let events: Vec<Event> = times.iter().map(|&(s, t, r)| Event { shot: s, time: t, tag: "x".into(), route: Some(r), physical: true }).collect();
                let det = DetectorSpec { efficiency: 0.7, jitter_sigma: jitter, dead_time: dead, dark_rate: 0.0 };
                let s = detect(&events, &det, StreamMeta::new(50.0, 20, seed, ""), &mut substream(seed, 0));
                for id in 0..2 {
                    if let Some(m) = s.min_spacing(id) {
                        prop_assert!(m >= ns_to_ps(dead));
                    }
                }
                prop_assert!(s.clicks.windows(2).all(|w| (w[0].absolute_time, w[0].detector_id) <= (w[1].absolute_time, w[1].detector_id)));
            }

            #[test]
            fn folding_preserves_total(
                raw in proptest::collection::vec((0u32..3, 0i64..1_000_000), 0..300),
                bin in 1i64..5000,
            ) {
                let s = ClickStream::from_absolute(StreamMeta::new(50.0, 20, 0, ""), raw.clone());
                let (_, folded) = histogram(&s, bin, true).unwrap();
                let (_, flat) = histogram(&s, bin, false).unwrap();
                prop_assert_eq!(folded.iter().sum::<u64>(), raw.len() as u64);
                prop_assert_eq!(flat.iter().sum::<u64>(), raw.len() as u64);
            }
        }
    }
}
