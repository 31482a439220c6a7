//! Run configuration: flat dotted keys (`grid.n_pairs = 32`) in TOML syntax.
//!
//! Parsing is strict: unknown keys and ill-typed values are rejected with the
//! full dotted key in the message. Semantic checks live in [`validate`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use wigner_pdc::crystal::{CrystalParams, DEFAULT_CEILING};
use wigner_pdc::lattice::{build_mode_grid, GridSpec, ModeGrid, PhaseMatchKernel};
use wigner_pdc::Complex64;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_pairs: usize,
    pub pump_frequency: f64,
    pub bandwidth: f64,
    pub center_e: f64,
    pub center_o: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = GridSpec::default();
        GridConfig {
            n_pairs: s.n_pairs,
            pump_frequency: s.pump_frequency,
            bandwidth: s.bandwidth,
            center_e: s.center_e,
            center_o: s.center_o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Pairing,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrystalConfig {
    /// Coupling `g`.
    pub g: f64,
    pub pump_re: f64,
    pub pump_im: f64,
    pub transit_time: f64,
    pub kernel: KernelKind,
    /// Width of the Gaussian kernel; ignored for `pairing`.
    pub kernel_sigma: f64,
    pub ceiling: f64,
}

impl Default for CrystalConfig {
    fn default() -> Self {
        let p = CrystalParams::default();
        CrystalConfig {
            g: p.coupling,
            pump_re: p.pump.re,
            pump_im: p.pump.im,
            transit_time: p.transit_time,
            kernel: KernelKind::Pairing,
            kernel_sigma: 0.5,
            ceiling: DEFAULT_CEILING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// Detection window in coherence times.
    pub window: f64,
    /// Probe time step; 0 selects `1 / bandwidth`.
    pub step: f64,
    pub distance1: f64,
    pub distance2: f64,
    pub efficiency: f64,
    /// Opening delay of detector 2's window.
    pub delay: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            window: 50.0,
            step: 0.0,
            distance1: 0.0,
            distance2: 0.0,
            efficiency: 1.0,
            delay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            realizations: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateConfig {
    pub points: usize,
    pub tau_step: f64,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            points: 16,
            tau_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub polarizer1: f64,
    pub polarizer2: f64,
    /// Windows, in coherence times, for the singles sweep.
    pub window_sweep: Vec<f64>,
    /// Coincidence delays for the joint-rate sweep.
    pub delays: Vec<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            polarizer1: 0.0,
            polarizer2: FRAC_PI_2,
            window_sweep: vec![5.0, 10.0, 25.0, 50.0],
            delays: vec![0.0, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Gaussian,
    Direct,
    Clipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub engine: EngineKind,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            engine: EngineKind::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellConfig {
    pub engine: EngineKind,
    /// `[a, a', b, b']` in radians.
    pub angles: Vec<f64>,
    pub efficiencies: Vec<f64>,
}

impl Default for BellConfig {
    fn default() -> Self {
        BellConfig {
            engine: EngineKind::Clipped,
            angles: vec![0.0, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_8],
            efficiencies: vec![0.3, 0.6, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "wpdc-out".into() }
    }
}

/// Run metadata written into manifests; read back but not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInfo {
    pub version: String,
    pub command: String,
    pub workers: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub crystal: CrystalConfig,
    pub detector: DetectorSection,
    pub ensemble: EnsembleConfig,
    pub correlate: CorrelateConfig,
    pub detect: DetectConfig,
    pub scan: ScanConfig,
    pub bell: BellConfig,
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

impl RunConfig {
    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            n_pairs: g.n_pairs,
            pump_frequency: g.pump_frequency,
            bandwidth: g.bandwidth,
            center_e: g.center_e,
            center_o: g.center_o,
        }
    }

    pub fn crystal_params(&self) -> CrystalParams {
        let c = &self.crystal;
        CrystalParams {
            coupling: c.g,
            pump: Complex64::new(c.pump_re, c.pump_im),
            transit_time: c.transit_time,
            kernel: match c.kernel {
                KernelKind::Pairing => PhaseMatchKernel::Pairing,
                KernelKind::Gaussian => PhaseMatchKernel::Gaussian { sigma: c.kernel_sigma },
            },
            ceiling: c.ceiling,
        }
    }

    /// Probe step, resolving the `0 = 1/bandwidth` default.
    pub fn step(&self) -> f64 {
        if self.detector.step > 0.0 {
            self.detector.step
        } else {
            1.0 / self.grid.bandwidth
        }
    }

    /// Flat `section.key = value` text, one key per line, sorted.
    pub fn to_dotted(&self) -> String {
        let table = Table::try_from(self).expect("config always serializes");
        let mut out = String::new();
        for (section, value) in &table {
            if let Value::Table(entries) = value {
                for (key, v) in entries {
                    out.push_str(&format!("{section}.{key} = {v}\n"));
                }
            }
        }
        out
    }
}

/// Loads a config file (or the defaults) and applies `key=value` overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    parse_table(table)
}

pub fn parse_table(table: Table) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("key `{path}`: {inner}"))
        }
    })
}

/// Parses `section.key=value`; the value is read as a TOML literal when
/// possible and as a bare string otherwise.
fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cursor = table;
    for (depth, section) in sections.iter().enumerate() {
        let entry = cursor
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("key `{}` is not a section", parts[..=depth].join("."))))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} [{}]: {}", self.key, self.message)
    }
}

fn error(key: &'static str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        severity: Severity::Error,
        key,
        message: message.into(),
    }
}

/// Full semantic validation, no computation beyond building the grid.
pub fn validate(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if let Err(e) = build_mode_grid(cfg.grid_spec()) {
        let key = match &e {
            wigner_pdc::Error::FrequencyMismatch { .. } => "grid.center_e",
            wigner_pdc::Error::InvalidParameter { name, .. } => grid_key(name),
            _ => "grid",
        };
        out.push(error(key, e.to_string()));
    }

    let params = cfg.crystal_params();
    if let Err(e) = params.validate() {
        let key = match &e {
            wigner_pdc::Error::InvalidParameter { name, .. } => crystal_key(name),
            _ => "crystal",
        };
        out.push(error(key, e.to_string()));
    } else if let Some(w) = params.perturbative_warning() {
        out.push(Diagnostic {
            severity: Severity::Warning,
            key: "crystal.g",
            message: w,
        });
    }

    let d = &cfg.detector;
    if !(d.window.is_finite() && d.window > 0.0) {
        out.push(error("detector.window", format!("must be positive, got {}", d.window)));
    }
    if !(d.step.is_finite() && d.step >= 0.0) {
        out.push(error("detector.step", format!("must be non-negative, got {}", d.step)));
    }
    if d.step == 0.0 && (cfg.grid.bandwidth.is_nan() || cfg.grid.bandwidth <= 0.0) {
        out.push(error("detector.step", "a zero-bandwidth grid needs an explicit step"));
    }
    for (key, v) in [("detector.distance1", d.distance1), ("detector.distance2", d.distance2)] {
        if !(v.is_finite() && v >= 0.0) {
            out.push(error(key, format!("must be non-negative, got {v}")));
        }
    }
    if !(d.efficiency > 0.0 && d.efficiency <= 1.0) {
        out.push(error(
            "detector.efficiency",
            format!("must lie in (0, 1], got {}", d.efficiency),
        ));
    }
    if !d.delay.is_finite() {
        out.push(error("detector.delay", "must be finite"));
    }

    if cfg.ensemble.realizations < 2 {
        out.push(error(
            "ensemble.realizations",
            "need at least 2 realizations for error estimates",
        ));
    }
    if cfg.correlate.points == 0 {
        out.push(error("correlate.points", "must be at least 1"));
    }
    if !(cfg.correlate.tau_step.is_finite() && cfg.correlate.tau_step > 0.0) {
        out.push(error("correlate.tau_step", "must be positive"));
    }
    if cfg.detect.window_sweep.is_empty() || cfg.detect.window_sweep.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        out.push(error("detect.window_sweep", "needs one or more positive windows"));
    }
    if cfg.detect.delays.iter().any(|t| !t.is_finite()) {
        out.push(error("detect.delays", "delays must be finite"));
    }
    for (key, v) in [
        ("detect.polarizer1", cfg.detect.polarizer1),
        ("detect.polarizer2", cfg.detect.polarizer2),
    ] {
        if !v.is_finite() {
            out.push(error(key, "must be finite"));
        }
    }
    if cfg.bell.angles.len() != 4 || cfg.bell.angles.iter().any(|a| !a.is_finite()) {
        out.push(error("bell.angles", "expected four finite angles [a, a', b, b']"));
    }
    if cfg.bell.efficiencies.is_empty() || cfg.bell.efficiencies.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        out.push(error("bell.efficiencies", "needs one or more efficiencies in (0, 1]"));
    }
    if cfg.output.dir.is_empty() {
        out.push(error("output.dir", "must not be empty"));
    }
    out
}

fn grid_key(name: &str) -> &'static str {
    match name {
        "n_pairs" => "grid.n_pairs",
        "pump_frequency" => "grid.pump_frequency",
        "bandwidth" => "grid.bandwidth",
        "center_e" => "grid.center_e",
        "center_o" => "grid.center_o",
        _ => "grid",
    }
}

fn crystal_key(name: &str) -> &'static str {
    match name {
        "coupling" => "crystal.g",
        "pump" => "crystal.pump_re",
        "transit_time" => "crystal.transit_time",
        "kernel_sigma" => "crystal.kernel_sigma",
        "ceiling" => "crystal.ceiling",
        _ => "crystal",
    }
}

/// Validated grid, or the validation diagnostics.
pub fn build_grid(cfg: &RunConfig) -> Result<ModeGrid, CliError> {
    let diags = validate(cfg);
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(CliError::Validation(diags));
    }
    build_mode_grid(cfg.grid_spec()).map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(validate(&RunConfig::default()).is_empty());
    }

    #[test]
    fn dotted_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_dotted();
        assert!(text.contains("grid.n_pairs = 32\n"));
        let back = parse_table(text.parse().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_are_typed() {
        let t = Table::new();
        let mut t2 = t.clone();
        apply_override(&mut t2, "crystal.g=0").unwrap();
        apply_override(&mut t2, "crystal.kernel=gaussian").unwrap();
        apply_override(&mut t2, "detect.delays=[0.0, 3.0]").unwrap();
        let cfg = parse_table(t2).unwrap();
        assert_eq!(cfg.crystal.g, 0.0);
        assert_eq!(cfg.crystal.kernel, KernelKind::Gaussian);
        assert_eq!(cfg.detect.delays, vec![0.0, 3.0]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut t = Table::new();
        apply_override(&mut t, "grid.bogus=1").unwrap();
        let err = parse_table(t).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");

        let mut t = Table::new();
        apply_override(&mut t, "crystal.g=\"lots\"").unwrap();
        let err = parse_table(t).unwrap_err().to_string();
        assert!(err.contains("crystal.g"), "{err}");

        let mut t = Table::new();
        assert!(apply_override(&mut t, "no-equals").is_err());
        assert!(apply_override(&mut t, "grid..x=1").is_err());
    }

    #[test]
    fn diagnostics_examples() {
        let mut cfg = RunConfig::default();
        cfg.crystal.g = 0.5;
        let d = validate(&cfg);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert!(d[0].message.contains("ceiling"));

        let mut cfg = RunConfig::default();
        cfg.grid.center_e = 11.0;
        let d = validate(&cfg);
        assert_eq!(d[0].severity, Severity::Error);
        assert!(d[0].message.contains("frequency matching"), "{}", d[0]);
    }
}
