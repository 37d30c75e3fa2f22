//! Named, seeded reproductions of the measured figures and of the transfer
//! protocols, driven by a strict TOML config.
//!
//! Every run writes `resolved_config.toml` (all defaults filled in) and
//! `summary.json` next to its data files. Outputs carry no timestamps, so a
//! run is byte-identical for a given resolved config.

mod correlations;
mod protocols;
mod pulsed;
mod scans;

pub use protocols::phase_corrected_fidelity;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{BudgetChain, ProtocolParams};
use crate::cascade::{BackgroundSpec, ChannelSpec};
use crate::detection::DetectorSpec;
use crate::emitters::{OverhauserModel, SourceDotSpec, TargetDotSpec};
use crate::error::{Error, Result};

/// Registered scenario names with the figure each one reproduces.
pub const SCENARIOS: [(&str, &str); 11] = [
    ("fig2a_scan", "Fig. 2a: herald rate vs source (QD1) gate voltage, target on and off resonance"),
    ("fig2b_scan", "Fig. 2b: herald rate vs target (QD2) gate voltage, source on and off resonance"),
    ("fig2c_power_map", "Fig. 2c: herald rate vs target detuning and source power, Mollow side lobes"),
    ("fig2d_timetrace", "Fig. 2d: 152 MHz pulsed source trace, 4.9 GHz beat note and g2 of 400 ps pulses"),
    ("fig3_correlations", "Fig. 3: color/spin coincidences of heralds and next-shot readout over 46 h"),
    ("figS2_hom", "Fig. S2b: Hong-Ou-Mandel dip of diagonal photons, parallel vs orthogonal"),
    ("figS3_backgrounds", "Fig. S3: background time traces for the five laser configurations"),
    ("protocol_transfer", "Fig. 1a: photon-to-spin transfer fidelity and diagonal-splitting sweep"),
    ("protocol_spin_to_spin", "Fig. S4a: spin-to-spin transfer through a charged source dot"),
    ("protocol_entanglement", "Fig. S4b: heralded spin-spin entanglement vs channel transmission"),
    ("budget", "Main-text photon budget: absorption probability and quantum efficiency"),
];

pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    SCENARIOS.to_vec()
}

/// Names within a small edit distance of `name`, closest first.
pub fn suggest(name: &str) -> Vec<&'static str> {
    let mut scored: Vec<(f64, &str)> =
        SCENARIOS.iter().map(|(n, _)| (strsim::jaro_winkler(name, n), *n)).filter(|(s, _)| *s > 0.7).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, n)| n).collect()
}

/// fig2a/fig2b gate-voltage scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanParams {
    pub points: usize,
    /// Half range of the scan, mV.
    pub half_range_mv: f64,
    /// s per point.
    pub integration_s: f64,
    /// Total on-resonance count rate (signal plus background), 1/s.
    pub peak_rate: f64,
    /// Per-color source drive, GHz. 0.19 GHz is `s = 2Ω²/Γ² ≈ 1`.
    pub source_rabi: f64,
    /// Detuning of the dot parked off resonance, GHz.
    pub off_resonance_ghz: f64,
    /// Target spin flip rate each way, 1/ns. Without it the spin populations
    /// of an off-resonant target are set by vanishing optical pumping.
    pub spin_mixing: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            points: 41,
            half_range_mv: 6.0,
            integration_s: 10.0,
            peak_rate: 90.0,
            source_rabi: 0.19,
            off_resonance_ghz: 20.0,
            spin_mixing: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerMapParams {
    /// Saturation parameters `s = 2Ω²/Γ²` of the single-color source drive.
    pub saturations: Vec<f64>,
    /// Target detunings per power.
    pub detuning_points: usize,
}

impl Default for PowerMapParams {
    fn default() -> Self {
        Self { saturations: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0], detuning_points: 241 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimetraceParams {
    /// MHz.
    pub rep_rate_mhz: f64,
    /// ns.
    pub pulse_ns: f64,
    /// Center/side ratio the pulse area is calibrated to.
    pub g2_target: f64,
    /// Per-color drive, GHz; calibrated from `g2_target` when absent.
    pub rabi: Option<f64>,
    /// Collection efficiency ahead of the 50/50 split.
    pub efficiency: f64,
    /// Histogram bin, ps. 17 ps divides the 6579 ps period.
    pub bin_ps: i64,
    /// Side peaks on each side in the g2 estimate.
    pub side_peaks: usize,
    pub pulses: u64,
}

impl Default for TimetraceParams {
    fn default() -> Self {
        Self {
            rep_rate_mhz: 152.0,
            pulse_ns: 0.4,
            g2_target: 0.15,
            rabi: None,
            efficiency: 0.02,
            bin_ps: 17,
            side_peaks: 10,
            pulses: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationParams {
    /// MHz.
    pub rep_rate_mhz: f64,
    pub hours: f64,
    /// Counts in the herald window, 1/s.
    pub herald_rate: f64,
    /// Measured correct:incorrect ratio; sets the herald-window signal fraction.
    pub correct_ratio: f64,
    /// Readout click probability for a spin in the bright state.
    pub readout_probability: f64,
}

impl Default for CorrelationParams {
    fn default() -> Self {
        Self { rep_rate_mhz: 20.0, hours: 46.0, herald_rate: 0.75, correct_ratio: 3.5, readout_probability: 1.93e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomParams {
    /// `|⟨φ₁|φ₂⟩|²` of the two diagonal wavepackets.
    pub overlap: f64,
    /// Interferometer delay and pulse spacing, ns.
    pub delay_ns: f64,
    /// Photon present at the interferometer input per pulse.
    pub photon_probability: f64,
    /// Per-photon detection probability after the interferometer.
    pub detection_efficiency: f64,
    pub pulses: u64,
}

impl Default for HomParams {
    fn default() -> Self {
        Self { overlap: 0.8, delay_ns: 13.158, photon_probability: 0.3, detection_efficiency: 0.2, pulses: 4_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundTraceParams {
    /// MHz.
    pub rep_rate_mhz: f64,
    pub minutes: f64,
    pub bin_ps: i64,
    /// Pump drive, GHz.
    pub pump_rabi: f64,
    /// Detuning of the target in the off-resonance trace, GHz.
    pub off_resonance_ghz: f64,
}

impl Default for BackgroundTraceParams {
    fn default() -> Self {
        Self { rep_rate_mhz: 20.0, minutes: 10.0, bin_ps: 100, pump_rabi: 0.5, off_resonance_ghz: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub params: ProtocolParams,
    /// Trajectories per input state.
    pub runs: usize,
    /// Diagonal splittings in units of `Γ₂/2π`.
    pub diagonal_sweep: Vec<f64>,
    pub eta_sweep: Vec<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            params: ProtocolParams::default(),
            runs: 10_000,
            diagonal_sweep: vec![0.0, 1.0, 3.0, 10.0],
            eta_sweep: vec![1.0, 0.7, 0.5, 0.3, 0.2, 0.1, 0.07, 0.05, 0.03, 0.02, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub chain: BudgetChain,
    /// Detected source rate at the first fiber output, 1/s.
    pub r_source: f64,
    /// Herald rate, 1/s.
    pub r_herald: f64,
    pub spin_random: bool,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self { chain: BudgetChain::default(), r_source: 5.5e6, r_herald: 90.0, spin_random: true }
    }
}

/// Strictly parsed scenario config. Sections left out take defaults, some
/// of them specific to the scenario (see [`ScenarioConfig::resolve`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub master_seed: u64,
    /// Overrides the main ensemble size of the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub source: SourceDotSpec,
    #[serde(default)]
    pub target: TargetDotSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub detector: Option<DetectorSpec>,
    #[serde(default)]
    pub background: Option<BackgroundSpec>,
    #[serde(default)]
    pub overhauser: OverhauserModel,
    #[serde(default)]
    pub scan: ScanParams,
    #[serde(default)]
    pub power_map: PowerMapParams,
    #[serde(default)]
    pub timetrace: TimetraceParams,
    #[serde(default)]
    pub correlations: CorrelationParams,
    #[serde(default)]
    pub hom: HomParams,
    #[serde(default)]
    pub backgrounds: BackgroundTraceParams,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub budget: BudgetSection,
}

/// Detector typical of the superconducting detectors used for the pulsed
/// traces: the jitter sets the beat-note visibility.
fn pulsed_detector() -> DetectorSpec {
    DetectorSpec { jitter_sigma: 30.0, ..DetectorSpec::default() }
}

impl ScenarioConfig {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            master_seed: 0,
            shots: None,
            output_dir: None,
            source: SourceDotSpec::default(),
            target: TargetDotSpec::default(),
            channel: ChannelSpec::default(),
            detector: None,
            background: None,
            overhauser: OverhauserModel::default(),
            scan: ScanParams::default(),
            power_map: PowerMapParams::default(),
            timetrace: TimetraceParams::default(),
            correlations: CorrelationParams::default(),
            hom: HomParams::default(),
            backgrounds: BackgroundTraceParams::default(),
            protocol: ProtocolSection::default(),
            budget: BudgetSection::default(),
        }
    }

    /// Fill scenario-dependent defaults.
    pub fn resolve(mut self) -> Self {
        let pulsed = matches!(self.scenario.as_str(), "fig2d_timetrace" | "figS2_hom");
        self.detector.get_or_insert_with(|| if pulsed { pulsed_detector() } else { DetectorSpec::default() });
        let lab = self.scenario == "figS3_backgrounds";
        self.background.get_or_insert_with(|| if lab { BackgroundSpec::lab() } else { BackgroundSpec::default() });
        self
    }

    pub fn detector(&self) -> DetectorSpec {
        self.detector.clone().unwrap_or_default()
    }

    pub fn background(&self) -> BackgroundSpec {
        self.background.clone().unwrap_or_default()
    }

    /// Range checks with key paths and units.
    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.iter().any(|(n, _)| *n == self.scenario) {
            let s = suggest(&self.scenario);
            let hint = if s.is_empty() { String::new() } else { format!("; did you mean {}?", s.join(", ")) };
            return Err(Error::Config(format!("scenario: unknown name `{}`{hint}", self.scenario)));
        }
        let wrap = |section: &str, r: std::result::Result<(), crate::quantum::QuantumError>| {
            r.map_err(|e| Error::Config(format!("{section}: {e}")))
        };
        wrap("source", self.source.validate())?;
        wrap("target", self.target.validate())?;
        wrap("channel", self.channel.validate())?;
        wrap("background", self.background().validate())?;
        self.detector().validate()?;
        if !(self.overhauser.sigma >= 0.0) {
            return Err(range("overhauser.sigma", self.overhauser.sigma, "GHz", "≥ 0"));
        }
        if self.shots == Some(0) {
            return Err(Error::Config("shots: must be ≥ 1".into()));
        }
        let s = &self.scan;
        positive("scan.half_range_mv", s.half_range_mv, "mV")?;
        positive("scan.integration_s", s.integration_s, "s")?;
        positive("scan.peak_rate", s.peak_rate, "1/s")?;
        positive("scan.source_rabi", s.source_rabi, "GHz")?;
        positive("scan.off_resonance_ghz", s.off_resonance_ghz, "GHz")?;
        positive("scan.spin_mixing", s.spin_mixing, "1/ns")?;
        if s.points < 5 {
            return Err(range("scan.points", s.points as f64, "", "≥ 5"));
        }
        let bg = self.background();
        if s.peak_rate <= (bg.dark_rate + bg.ambient_rate) {
            return Err(Error::Config(format!(
                "scan.peak_rate = {} 1/s must exceed the background {} 1/s",
                s.peak_rate,
                bg.dark_rate + bg.ambient_rate
            )));
        }
        let p = &self.power_map;
        if p.saturations.is_empty() || p.saturations.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("power_map.saturations: need at least one value, each > 0 (dimensionless)".into()));
        }
        if p.detuning_points < 5 {
            return Err(range("power_map.detuning_points", p.detuning_points as f64, "", "≥ 5"));
        }
        let t = &self.timetrace;
        positive("timetrace.rep_rate_mhz", t.rep_rate_mhz, "MHz")?;
        positive("timetrace.pulse_ns", t.pulse_ns, "ns")?;
        positive("timetrace.g2_target", t.g2_target, "")?;
        if let Some(r) = t.rabi {
            positive("timetrace.rabi", r, "GHz")?;
        }
        unit_interval("timetrace.efficiency", t.efficiency)?;
        if t.bin_ps <= 0 {
            return Err(range("timetrace.bin_ps", t.bin_ps as f64, "ps", "> 0"));
        }
        if t.side_peaks == 0 || t.pulses == 0 {
            return Err(Error::Config("timetrace.side_peaks and timetrace.pulses must be ≥ 1".into()));
        }
        if t.pulse_ns >= 1e3 / t.rep_rate_mhz {
            return Err(Error::Config("timetrace.pulse_ns must be shorter than the repetition period".into()));
        }
        let c = &self.correlations;
        positive("correlations.rep_rate_mhz", c.rep_rate_mhz, "MHz")?;
        positive("correlations.hours", c.hours, "h")?;
        positive("correlations.herald_rate", c.herald_rate, "1/s")?;
        unit_interval("correlations.readout_probability", c.readout_probability)?;
        if !(c.correct_ratio >= 1.0) {
            return Err(range("correlations.correct_ratio", c.correct_ratio, "", "≥ 1"));
        }
        let h = &self.hom;
        unit_interval("hom.overlap", h.overlap)?;
        positive("hom.delay_ns", h.delay_ns, "ns")?;
        unit_interval("hom.photon_probability", h.photon_probability)?;
        unit_interval("hom.detection_efficiency", h.detection_efficiency)?;
        let b = &self.backgrounds;
        positive("backgrounds.rep_rate_mhz", b.rep_rate_mhz, "MHz")?;
        positive("backgrounds.minutes", b.minutes, "min")?;
        positive("backgrounds.pump_rabi", b.pump_rabi, "GHz")?;
        positive("backgrounds.off_resonance_ghz", b.off_resonance_ghz, "GHz")?;
        if b.bin_ps <= 0 {
            return Err(range("backgrounds.bin_ps", b.bin_ps as f64, "ps", "> 0"));
        }
        if 1e6 / b.rep_rate_mhz < 20_000.0 {
            return Err(Error::Config("backgrounds.rep_rate_mhz: the pulse sequence needs a period ≥ 20 ns".into()));
        }
        let pr = &self.protocol;
        unit_interval("protocol.params.eta_ch", pr.params.eta_ch)?;
        positive("protocol.params.gamma", pr.params.gamma, "1/ns")?;
        if pr.runs < 2 {
            return Err(range("protocol.runs", pr.runs as f64, "", "≥ 2"));
        }
        if pr.diagonal_sweep.iter().any(|&k| !(k >= 0.0)) {
            return Err(Error::Config("protocol.diagonal_sweep: values (units of Γ₂/2π) must be ≥ 0".into()));
        }
        if pr.eta_sweep.len() < 3 || pr.eta_sweep.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::Config("protocol.eta_sweep: need ≥ 3 values in (0, 1]".into()));
        }
        let bu = &self.budget;
        positive("budget.r_source", bu.r_source, "1/s")?;
        positive("budget.r_herald", bu.r_herald, "1/s")?;
        Ok(())
    }

    /// Resolved config as TOML, without the output directory.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Runtime(format!("serializing config: {e}")))
    }

    /// SHA-256 of the resolved TOML.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

fn range(key: &str, v: f64, unit: &str, rule: &str) -> Error {
    let u = if unit.is_empty() { String::new() } else { format!(" {unit}") };
    Error::Config(format!("{key} = {v}{u}: must be {rule}"))
}

fn positive(key: &str, v: f64, unit: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() { Ok(()) } else { Err(range(key, v, unit, "> 0")) }
}

fn unit_interval(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) { Ok(()) } else { Err(range(key, v, "", "in [0, 1]")) }
}

/// Parse a TOML value from the right-hand side of `--set`; bare words fall
/// back to strings.
fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Apply `key.path=value` to a table, creating sections on the way.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}`: expected key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{assignment}`: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{assignment}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Strict deserialization with the offending key path in errors.
pub fn config_from_table(table: toml::Table) -> Result<ScenarioConfig> {
    let value = toml::Value::Table(table);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." { Error::Config(inner.to_string()) } else { Error::Config(format!("{path}: {inner}")) }
    })?;
    let cfg = cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    toml::from_str(text).map_err(|e| Error::Config(format!("TOML syntax: {e}")))
}

/// Parse and validate config text.
pub fn validate_config(text: &str) -> Result<ScenarioConfig> {
    config_from_table(parse_table(text)?)
}

/// Files and headline numbers of one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Serialized writer for one output directory.
pub(crate) struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.files.push(path);
        Ok(())
    }

    pub(crate) fn csv<R: AsRef<[f64]>>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = r.as_ref().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        self.write(name, &s)
    }

    pub(crate) fn stream(&mut self, name: &str, stream: &crate::detection::ClickStream) -> Result<bool> {
        if stream.len() > MAX_STREAM_CLICKS {
            return Ok(false);
        }
        let path = self.dir.join(name);
        crate::detection::save_stream(stream, &path)?;
        self.files.push(path);
        Ok(true)
    }
}

/// Raw click streams above this size are summarized only.
pub const MAX_STREAM_CLICKS: usize = 10_000_000;

/// Per-scenario runner result: data files already written, plus the summary.
pub(crate) type Summary = serde_json::Map<String, serde_json::Value>;

/// Run a validated config into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let digest = cfg.digest()?;
    let mut o = Outputs::new(out)?;
    o.write("resolved_config.toml", &cfg.to_toml()?)?;
    let result = match cfg.scenario.as_str() {
        "fig2a_scan" => scans::fig2a(cfg, &mut o),
        "fig2b_scan" => scans::fig2b(cfg, &mut o),
        "fig2c_power_map" => scans::fig2c(cfg, &mut o),
        "fig2d_timetrace" => pulsed::fig2d(cfg, &digest, &mut o),
        "fig3_correlations" => correlations::fig3(cfg, &digest, &mut o),
        "figS2_hom" => pulsed::hom(cfg, &digest, &mut o),
        "figS3_backgrounds" => pulsed::backgrounds(cfg, &mut o),
        "protocol_transfer" => protocols::transfer(cfg, &mut o),
        "protocol_spin_to_spin" => protocols::spin_to_spin(cfg, &mut o),
        "protocol_entanglement" => protocols::entanglement(cfg, &mut o),
        "budget" => protocols::budget(cfg),
        other => unreachable!("validated scenario `{other}`"),
    };
    let mut summary = result.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", cfg.scenario)),
        other => Error::Runtime(format!("{}: {other}", cfg.scenario)),
    })?;
    summary.insert("scenario".into(), cfg.scenario.clone().into());
    summary.insert("master_seed".into(), cfg.master_seed.into());
    summary.insert("config_digest".into(), digest.into());
    let summary = serde_json::Value::Object(summary);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Runtime(format!("serializing summary: {e}")))?;
    o.write("summary.json", &(text + "\n"))?;
    Ok(RunReport { scenario: cfg.scenario.clone(), dir: out.to_path_buf(), files: o.files, summary })
}

pub(crate) fn num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}
