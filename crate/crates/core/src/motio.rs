//! File formats and configuration: the ten-field comma-separated tracking
//! record format (frame, id, box, confidence, world coordinates), TOML
//! configuration files with strict or lax unknown-key handling, and the
//! defaults < file < flag-overrides resolution chain.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::geometry::Point2;
use crate::simulator::SceneConfig;
use crate::tracker::{TrackerConfig, TrackerMode};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum MotError {
    Parse { line: usize, reason: String },
}

impl fmt::Display for MotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotError::Parse { line, reason } => write!(f, "line {line}: {reason}"),
        }
    }
}

impl std::error::Error for MotError {}

/// One line of a tracking or detection file. Two carrier styles share the
/// format: image-space records hold a bounding box and −1 world
/// coordinates; world-space records hold −1 boxes and real x, y. The box
/// fields decide which style a record uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    pub frame: i64,
    /// Track identity; −1 marks a raw (unassociated) detection.
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MotRecord {
    /// A world-space raw detection.
    pub fn detection(frame: i64, p: Point2) -> Self {
        MotRecord {
            frame,
            id: -1,
            bb_left: -1.0,
            bb_top: -1.0,
            bb_width: -1.0,
            bb_height: -1.0,
            conf: 1.0,
            x: p.x,
            y: p.y,
            z: -1.0,
        }
    }

    /// A world-space track point carrying an identity.
    pub fn track_point(frame: i64, id: u32, p: Point2) -> Self {
        MotRecord {
            id: id as i64,
            ..MotRecord::detection(frame, p)
        }
    }

    /// The record's 2-D position: box centroid when a box is present,
    /// otherwise the world coordinates.
    pub fn position(&self) -> Point2 {
        if self.bb_width >= 0.0 && self.bb_height >= 0.0 {
            Point2::new(
                self.bb_left + self.bb_width / 2.0,
                self.bb_top + self.bb_height / 2.0,
            )
        } else {
            Point2::new(self.x, self.y)
        }
    }
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    name: &str,
    line: usize,
) -> Result<T, MotError> {
    raw.trim().parse().map_err(|_| MotError::Parse {
        line,
        reason: format!("field {name} is not numeric: {raw:?}"),
    })
}

/// Parse comma-separated records, one per line, in file order. Blank lines
/// are skipped; any malformed line fails with its 1-based line number.
pub fn parse_mot(text: &str) -> Result<Vec<MotRecord>, MotError> {
    let mut records = vec![];
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 10 {
            return Err(MotError::Parse {
                line,
                reason: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let record = MotRecord {
            frame: parse_field(fields[0], "frame", line)?,
            id: parse_field(fields[1], "id", line)?,
            bb_left: parse_field(fields[2], "bb_left", line)?,
            bb_top: parse_field(fields[3], "bb_top", line)?,
            bb_width: parse_field(fields[4], "bb_width", line)?,
            bb_height: parse_field(fields[5], "bb_height", line)?,
            conf: parse_field(fields[6], "conf", line)?,
            x: parse_field(fields[7], "x", line)?,
            y: parse_field(fields[8], "y", line)?,
            z: parse_field(fields[9], "z", line)?,
        };
        if record.frame < 1 {
            return Err(MotError::Parse {
                line,
                reason: format!("frame must be >= 1, got {}", record.frame),
            });
        }
        for (name, v) in [("bb_width", record.bb_width), ("bb_height", record.bb_height)] {
            if v < 0.0 && v != -1.0 {
                return Err(MotError::Parse {
                    line,
                    reason: format!("{name} must be >= 0 or the -1 sentinel, got {v}"),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Format a value with six significant digits, integers exactly, no
/// trailing zeros. `-1` sentinels therefore survive a round-trip verbatim.
fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let decimals = (5 - v.abs().log10().floor() as i64).clamp(0, 17) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Write records as comma-separated lines ordered by (frame, id), numeric
/// fields at six significant digits.
pub fn write_mot(records: &[MotRecord]) -> String {
    let mut sorted: Vec<&MotRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::new();
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            fmt_sig(r.bb_left),
            fmt_sig(r.bb_top),
            fmt_sig(r.bb_width),
            fmt_sig(r.bb_height),
            fmt_sig(r.conf),
            fmt_sig(r.x),
            fmt_sig(r.y),
            fmt_sig(r.z),
        );
    }
    out
}

/// Group records into per-frame position lists (for detector input).
pub fn detections_by_frame(records: &[MotRecord]) -> BTreeMap<i64, Vec<Point2>> {
    let mut frames: BTreeMap<i64, Vec<Point2>> = BTreeMap::new();
    for r in records {
        frames.entry(r.frame).or_default().push(r.position());
    }
    frames
}

/// The (id, frame, position) triples of identity-carrying records; raw
/// detections (id −1) are skipped.
pub fn labeled_entries(records: &[MotRecord]) -> impl Iterator<Item = (u32, i64, Point2)> + '_ {
    records
        .iter()
        .filter(|r| r.id >= 0)
        .map(|r| (r.id as u32, r.frame, r.position()))
}

/// Training hyperparameters as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 100,
            batch_size: 32,
            seed: 1,
        }
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Matching threshold in raw scene units.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold: 0.5 }
    }
}

/// Everything a run can configure, one section per concern. Every field
/// has a default, so an empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub scene: SceneConfig,
    pub tracker: TrackerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section: &str, msg: String| {
            Err(ConfigError::Invalid(format!("{section}: {msg}")))
        };
        if let Err(e) = self.scene.validate() {
            return invalid("scene", e.to_string());
        }
        if let Err(e) = self.tracker.validate() {
            return invalid("tracker", e.to_string());
        }
        if !self.train.lr.is_finite() || self.train.lr <= 0.0 {
            return invalid("train", format!("lr must be > 0, got {}", self.train.lr));
        }
        if self.train.batch_size == 0 {
            return invalid("train", "batch_size must be >= 1".into());
        }
        if !self.eval.threshold.is_finite() || self.eval.threshold <= 0.0 {
            return invalid(
                "eval",
                format!("threshold must be > 0, got {}", self.eval.threshold),
            );
        }
        Ok(())
    }
}

/// How to treat keys the config schema does not know.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Unknown keys fail the load.
    Strict,
    /// Unknown keys are returned as warnings.
    Lax,
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Toml(toml::de::Error),
    UnknownKeys(Vec<String>),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read {}: {source}", path.display())
            }
            ConfigError::Toml(e) => write!(f, "config syntax: {e}"),
            ConfigError::UnknownKeys(keys) => {
                write!(f, "unknown config keys: {}", keys.join(", "))
            }
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Keys present in `input` but absent from `known`, as dotted paths.
/// `known` is the full schema rendered from the parsed config, so every
/// legal key exists in it.
fn collect_unknown_keys(input: &toml::Value, known: &toml::Value, path: &str, out: &mut Vec<String>) {
    match (input, known) {
        (toml::Value::Table(ti), toml::Value::Table(tk)) => {
            for (key, vi) in ti {
                let sub = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match tk.get(key) {
                    Some(vk) => collect_unknown_keys(vi, vk, &sub, out),
                    None => out.push(sub),
                }
            }
        }
        (toml::Value::Array(ai), toml::Value::Array(ak)) => {
            for (i, vi) in ai.iter().enumerate() {
                if let Some(vk) = ak.get(i) {
                    collect_unknown_keys(vi, vk, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

/// Parse a config from TOML text: defaults fill absent keys, unknown keys
/// fail (strict) or come back as warnings (lax), and the result is
/// validated. Returns the config and the warnings.
pub fn parse_config(text: &str, strictness: Strictness) -> Result<(AppConfig, Vec<String>), ConfigError> {
    let input: toml::Value = toml::from_str(text).map_err(ConfigError::Toml)?;
    let config: AppConfig = input.clone().try_into().map_err(ConfigError::Toml)?;

    // Render the parsed config back out: the result contains every key the
    // schema knows, so anything in the input that is missing from it is an
    // unknown key.
    let known = toml::Value::try_from(&config).expect("config serializes");
    let mut unknown = vec![];
    collect_unknown_keys(&input, &known, "", &mut unknown);
    let warnings = match strictness {
        Strictness::Strict if !unknown.is_empty() => {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        Strictness::Strict => vec![],
        Strictness::Lax => unknown
            .into_iter()
            .map(|k| format!("ignoring unknown config key: {k}"))
            .collect(),
    };
    config.validate()?;
    Ok((config, warnings))
}

/// Load and parse a config file; see [`parse_config`].
pub fn load_config(
    path: &Path,
    strictness: Strictness,
) -> Result<(AppConfig, Vec<String>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, strictness)
}

/// Render the effective config as TOML (the shape `load_config` accepts).
pub fn dump_config(config: &AppConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

/// Settings given on the command line; `None` means "not given". Applied
/// last, they override both defaults and file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub mode: Option<TrackerMode>,
    pub greedy_assignment: Option<bool>,
    pub tau_assoc: Option<f64>,
    pub tau_sd: Option<f64>,
    pub tau_cd: Option<f64>,
    pub termination_age: Option<u32>,
    pub hidden_dim: Option<usize>,
    pub eval_threshold: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, config: &mut AppConfig) {
        if let Some(v) = self.seed {
            config.scene.seed = v;
            config.train.seed = v;
        }
        if let Some(v) = self.mode {
            config.tracker.mode = v;
        }
        if let Some(v) = self.greedy_assignment {
            config.tracker.greedy_assignment = v;
        }
        if let Some(v) = self.tau_assoc {
            config.tracker.tau_assoc = v;
        }
        if let Some(v) = self.tau_sd {
            config.tracker.tau_sd = v;
        }
        if let Some(v) = self.tau_cd {
            config.tracker.tau_cd = v;
        }
        if let Some(v) = self.termination_age {
            config.tracker.termination_age = v;
        }
        if let Some(v) = self.hidden_dim {
            config.tracker.predictor.hidden_dim = v;
        }
        if let Some(v) = self.eval_threshold {
            config.eval.threshold = v;
        }
        if let Some(v) = self.lr {
            config.train.lr = v;
        }
        if let Some(v) = self.epochs {
            config.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.train.batch_size = v;
        }
    }
}

/// Full resolution chain: documented defaults, then the file (if given),
/// then command-line overrides, validated at the end.
pub fn resolve_config(
    path: Option<&Path>,
    strictness: Strictness,
    overrides: &ConfigOverrides,
) -> Result<(AppConfig, Vec<String>), ConfigError> {
    let (mut config, warnings) = match path {
        Some(p) => load_config(p, strictness)?,
        None => (AppConfig::default(), vec![]),
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok((config, warnings))
}
