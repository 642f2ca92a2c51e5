//! Experiment configuration: a strict TOML document with exactly one model table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mqplab_core::{Convention, CramerMethod, LeakageMode, Scheme};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

/// One problem found while validating, tagged with its dotted key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swimmer: Option<SwimmerModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal_single: Option<ThermalSingleModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal_multi: Option<ThermalMultiModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomModel>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwimmerModel {
    pub d: Option<usize>,
    pub d_coef: Option<f64>,
    pub kappa: Option<f64>,
}

/// Single zone, given either by its reduced rates `c0`, `c1` or by the
/// physical parameters from which they follow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSingleModel {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub t_bar: Option<f64>,
    pub t_o: Option<f64>,
    pub t_s: Option<f64>,
    pub c_bar_o: Option<f64>,
    pub c_s: Option<f64>,
    pub d_coef: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default)]
    pub leakage: LeakageMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalMultiModel {
    pub t_bar: Option<f64>,
    pub t_o: Option<f64>,
    pub t_s: Option<f64>,
    #[serde(default)]
    pub zones: Vec<ZoneEntry>,
    #[serde(default)]
    pub edges: Vec<EdgeEntry>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneEntry {
    pub c_bar_o: Option<f64>,
    pub c_s: Option<f64>,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub d_o: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub c_bar: Option<f64>,
    #[serde(default)]
    pub d_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub drift: Option<Vec<Vec<f64>>>,
    pub additive: Option<Vec<f64>>,
}

/// Multiplicative noise for custom models, and the convention/scale reading
/// for the built-in ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: Option<NoiseKindName>,
    pub convention: Option<Convention>,
    pub scale: Option<f64>,
    pub d_coef: Option<f64>,
    /// Row-major `d²×d²` covariance for `white_tensor`.
    pub cov: Option<Vec<Vec<f64>>>,
    pub amplitude: Option<Vec<Vec<f64>>>,
    pub corr_time: Option<f64>,
    pub plus: Option<Vec<Vec<f64>>>,
    pub switch_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    None,
    WhiteTensor,
    BatchelorKraichnan,
    ScalarWhite,
    OrnsteinUhlenbeck,
    Telegraph,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub phi: Option<f64>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub optimize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: Option<f64>,
    pub n_traj: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of the horizon discarded before sampling.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Worker threads; never echoed into reports so output does not depend on it.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default = "default_reorth")]
    pub reorth_interval: usize,
    pub lyapunov_times: Option<Vec<f64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: None,
            n_traj: None,
            seed: 0,
            burn_in: default_burn_in(),
            sample_interval: default_interval(),
            scheme: Scheme::default(),
            threads: None,
            reorth_interval: default_reorth(),
            lyapunov_times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub cramer_method: CramerMethod,
    #[serde(default)]
    pub cramer_index: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Length of the backward Riccati solve, ending at t = 0.
    #[serde(default = "default_hjb_horizon")]
    pub hjb_horizon: f64,
    /// Terminal cost coefficient (times the identity for matrix problems).
    #[serde(default)]
    pub hjb_terminal: f64,
    #[serde(default = "default_residual_points")]
    pub residual_points: usize,
    /// Also fit the tail from simulation in `mqp`.
    #[serde(default)]
    pub measure_tail: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            q: default_q(),
            beta: 1.0,
            cramer_method: CramerMethod::default(),
            cramer_index: 0,
            histogram_bins: default_bins(),
            hjb_horizon: default_hjb_horizon(),
            hjb_terminal: 0.0,
            residual_points: default_residual_points(),
            measure_tail: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.005
}
fn default_burn_in() -> f64 {
    0.5
}
fn default_interval() -> f64 {
    0.5
}
fn default_reorth() -> usize {
    10
}
fn default_q() -> Vec<f64> {
    vec![2.0]
}
fn default_bins() -> usize {
    60
}
fn default_hjb_horizon() -> f64 {
    20.0
}
fn default_residual_points() -> usize {
    100
}
fn default_out() -> PathBuf {
    PathBuf::from("mqp-lab-out")
}

/// Which model table is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Swimmer,
    ThermalSingle,
    ThermalMulti,
    Custom,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Swimmer => "swimmer",
            ModelKind::ThermalSingle => "thermal_single",
            ModelKind::ThermalMulti => "thermal_multi",
            ModelKind::Custom => "custom",
        }
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<string>"),
        message: e.to_string(),
    })?;
    let issues = cfg.issues();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn require<T>(&mut self, key: &str, v: &Option<T>) {
        if v.is_none() {
            self.push(key, "missing required key");
        }
    }

    fn positive(&mut self, key: &str, v: Option<f64>) {
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                self.push(key, format!("must be positive, got {x}"));
            }
        }
    }

    fn nonnegative(&mut self, key: &str, v: Option<f64>) {
        if let Some(x) = v {
            if !(x >= 0.0 && x.is_finite()) {
                self.push(key, format!("must be nonnegative, got {x}"));
            }
        }
    }

    fn square(&mut self, key: &str, m: &Option<Vec<Vec<f64>>>, dim: Option<usize>) {
        if let Some(rows) = m {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                self.push(key, "must be a non-empty square matrix");
            } else if let Some(d) = dim {
                if n != d {
                    self.push(key, format!("must be {d}x{d}, got {n}x{n}"));
                }
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                self.push(key, "entries must be finite");
            }
        }
    }
}

impl ExperimentConfig {
    pub fn model_kind(&self) -> Option<ModelKind> {
        let m = &self.model;
        let present: Vec<ModelKind> = [
            (m.swimmer.is_some(), ModelKind::Swimmer),
            (m.thermal_single.is_some(), ModelKind::ThermalSingle),
            (m.thermal_multi.is_some(), ModelKind::ThermalMulti),
            (m.custom.is_some(), ModelKind::Custom),
        ]
        .into_iter()
        .filter_map(|(p, k)| p.then_some(k))
        .collect();
        (present.len() == 1).then(|| present[0])
    }

    /// State dimension implied by the model table.
    pub fn dim(&self) -> Option<usize> {
        match self.model_kind()? {
            ModelKind::Swimmer => self.model.swimmer.as_ref()?.d,
            ModelKind::ThermalSingle => Some(1),
            ModelKind::ThermalMulti => Some(self.model.thermal_multi.as_ref()?.zones.len()),
            ModelKind::Custom => self.model.custom.as_ref()?.drift.as_ref().map(|m| m.len()),
        }
    }

    /// Every structural problem, collected rather than stopping at the first.
    pub fn issues(&self) -> Vec<Issue> {
        let mut is = Issues(Vec::new());
        let m = &self.model;
        let count = [m.swimmer.is_some(), m.thermal_single.is_some(), m.thermal_multi.is_some(), m.custom.is_some()]
            .iter()
            .filter(|p| **p)
            .count();
        if count != 1 {
            is.push(
                "model",
                format!("exactly one of model.swimmer, model.thermal_single, model.thermal_multi, model.custom is required, found {count}"),
            );
        }
        if let Some(s) = &m.swimmer {
            is.require("model.swimmer.d", &s.d);
            is.require("model.swimmer.d_coef", &s.d_coef);
            is.require("model.swimmer.kappa", &s.kappa);
            if let Some(d) = s.d {
                if !(2..=3).contains(&d) {
                    is.push("model.swimmer.d", format!("must be 2 or 3, got {d}"));
                }
            }
            is.positive("model.swimmer.d_coef", s.d_coef);
            is.nonnegative("model.swimmer.kappa", s.kappa);
            if let Some(k) = self.noise.kind {
                if k != NoiseKindName::BatchelorKraichnan {
                    is.push("noise.kind", "the swimmer model uses batchelor_kraichnan noise");
                }
            }
        }
        if let Some(t) = &m.thermal_single {
            let reduced = t.c0.is_some() || t.c1.is_some();
            let physical = [t.t_bar, t.t_o, t.t_s, t.c_bar_o, t.c_s].iter().any(|v| v.is_some());
            if reduced && physical {
                is.push("model.thermal_single", "give either c0/c1 or t_bar/t_o/t_s/c_bar_o/c_s, not both");
            } else if reduced {
                is.require("model.thermal_single.c0", &t.c0);
                is.require("model.thermal_single.c1", &t.c1);
            } else {
                for (k, v) in [("t_bar", t.t_bar), ("t_o", t.t_o), ("t_s", t.t_s), ("c_bar_o", t.c_bar_o), ("c_s", t.c_s)] {
                    is.require(&format!("model.thermal_single.{k}"), &v);
                }
            }
            is.require("model.thermal_single.d_coef", &t.d_coef);
            is.require("model.thermal_single.kappa", &t.kappa);
            is.nonnegative("model.thermal_single.d_coef", t.d_coef);
            is.nonnegative("model.thermal_single.kappa", t.kappa);
            if self.noise.kind.is_some() {
                is.push("noise.kind", "thermal models fix their noise structure; only convention and scale apply");
            }
        }
        if let Some(t) = &m.thermal_multi {
            is.require("model.thermal_multi.t_bar", &t.t_bar);
            is.require("model.thermal_multi.t_o", &t.t_o);
            is.require("model.thermal_multi.t_s", &t.t_s);
            if t.zones.is_empty() {
                is.push("model.thermal_multi.zones", "at least one zone is required");
            }
            for (i, z) in t.zones.iter().enumerate() {
                is.require(&format!("model.thermal_multi.zones[{i}].c_bar_o"), &z.c_bar_o);
                is.require(&format!("model.thermal_multi.zones[{i}].c_s"), &z.c_s);
                is.nonnegative(&format!("model.thermal_multi.zones[{i}].kappa"), Some(z.kappa));
                is.nonnegative(&format!("model.thermal_multi.zones[{i}].d_o"), Some(z.d_o));
                is.positive(&format!("model.thermal_multi.zones[{i}].alpha"), Some(z.alpha));
                is.nonnegative(&format!("model.thermal_multi.zones[{i}].beta"), Some(z.beta));
            }
            for (k, e) in t.edges.iter().enumerate() {
                is.require(&format!("model.thermal_multi.edges[{k}].i"), &e.i);
                is.require(&format!("model.thermal_multi.edges[{k}].j"), &e.j);
                is.require(&format!("model.thermal_multi.edges[{k}].c_bar"), &e.c_bar);
                is.nonnegative(&format!("model.thermal_multi.edges[{k}].c_bar"), e.c_bar);
                is.nonnegative(&format!("model.thermal_multi.edges[{k}].d_coef"), Some(e.d_coef));
                for (name, v) in [("i", e.i), ("j", e.j)] {
                    if let Some(v) = v {
                        if v >= t.zones.len() {
                            is.push(format!("model.thermal_multi.edges[{k}].{name}"), format!("zone {v} does not exist"));
                        }
                    }
                }
            }
            if self.noise.kind.is_some() {
                is.push("noise.kind", "thermal models fix their noise structure; only convention and scale apply");
            }
        }
        if let Some(c) = &m.custom {
            is.require("model.custom.drift", &c.drift);
            is.square("model.custom.drift", &c.drift, None);
            if let (Some(a), Some(d)) = (&c.additive, &c.drift) {
                if a.len() != d.len() {
                    is.push("model.custom.additive", format!("must have {} entries", d.len()));
                }
                if a.iter().any(|v| !(*v >= 0.0)) {
                    is.push("model.custom.additive", "entries must be nonnegative");
                }
            }
            is.require("noise.kind", &self.noise.kind);
        }
        self.noise_issues(&mut is);
        let f = &self.feedback;
        if f.phi.is_some() && f.matrix.is_some() {
            is.push("feedback", "give either phi or matrix, not both");
        }
        if let Some(phi) = f.phi {
            if !phi.is_finite() {
                is.push("feedback.phi", "must be finite");
            }
        }
        is.square("feedback.matrix", &f.matrix, self.dim());
        if let Some(s) = &f.sweep {
            if s.is_empty() || s.iter().any(|v| !v.is_finite()) {
                is.push("feedback.sweep", "must be a non-empty list of finite gains");
            }
        }
        let r = &self.run;
        is.positive("run.dt", Some(r.dt));
        is.positive("run.horizon", r.horizon);
        if let (Some(h), true) = (r.horizon, r.dt > 0.0) {
            if h < r.dt {
                is.push("run.horizon", "must be at least one time step");
            }
        }
        if r.n_traj == Some(0) {
            is.push("run.n_traj", "must be positive");
        }
        if !(r.burn_in >= 0.0 && r.burn_in < 1.0) {
            is.push("run.burn_in", format!("fraction must lie in [0, 1), got {}", r.burn_in));
        }
        is.positive("run.sample_interval", Some(r.sample_interval));
        if r.threads == Some(0) {
            is.push("run.threads", "must be positive");
        }
        if r.reorth_interval == 0 {
            is.push("run.reorth_interval", "must be positive");
        }
        if let Some(ts) = &r.lyapunov_times {
            if ts.len() < 2 || ts.windows(2).any(|w| w[0] >= w[1]) || ts[0] <= 0.0 {
                is.push("run.lyapunov_times", "need at least two increasing positive times");
            }
        }
        let a = &self.analysis;
        if a.q.is_empty() || a.q.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            is.push("analysis.q", "must be a non-empty list of positive orders");
        }
        is.nonnegative("analysis.beta", Some(a.beta));
        if a.histogram_bins < 2 {
            is.push("analysis.histogram_bins", "must be at least 2");
        }
        is.positive("analysis.hjb_horizon", Some(a.hjb_horizon));
        if !a.hjb_terminal.is_finite() {
            is.push("analysis.hjb_terminal", "must be finite");
        }
        if let Some(d) = self.dim() {
            if a.cramer_index >= d {
                is.push("analysis.cramer_index", format!("must be below the dimension {d}"));
            }
        }
        is.0
    }

    fn noise_issues(&self, is: &mut Issues) {
        let n = &self.noise;
        is.positive("noise.scale", n.scale);
        if n.scale.is_some() && !matches!(self.model_kind(), Some(ModelKind::ThermalSingle | ModelKind::ThermalMulti)) {
            is.push("noise.scale", "only applies to thermal models");
        }
        let Some(kind) = n.kind else { return };
        let d = self.dim();
        if self.model_kind() != Some(ModelKind::Custom) {
            return;
        }
        match kind {
            NoiseKindName::None => {}
            NoiseKindName::BatchelorKraichnan | NoiseKindName::ScalarWhite => {
                is.require("noise.d_coef", &n.d_coef);
                is.positive("noise.d_coef", n.d_coef);
            }
            NoiseKindName::WhiteTensor => {
                is.require("noise.cov", &n.cov);
                is.square("noise.cov", &n.cov, d.map(|d| d * d));
            }
            NoiseKindName::OrnsteinUhlenbeck => {
                is.require("noise.amplitude", &n.amplitude);
                is.square("noise.amplitude", &n.amplitude, d);
                is.require("noise.corr_time", &n.corr_time);
                is.positive("noise.corr_time", n.corr_time);
            }
            NoiseKindName::Telegraph => {
                is.require("noise.plus", &n.plus);
                is.square("noise.plus", &n.plus, d);
                is.require("noise.switch_rate", &n.switch_rate);
                is.positive("noise.switch_rate", n.switch_rate);
            }
        }
    }

    /// Keys a command needs beyond the structural minimum.
    pub fn command_issues(&self, command: &str) -> Vec<Issue> {
        let mut is = Issues(Vec::new());
        let simulates = matches!(command, "simulate" | "lyapunov" | "cramer" | "tails")
            || (command == "mqp" && (self.analysis.measure_tail || self.model_kind() == Some(ModelKind::Custom)));
        if simulates {
            is.require("run.horizon", &self.run.horizon);
            is.require("run.n_traj", &self.run.n_traj);
        }
        let needs_gain = matches!(command, "simulate" | "tails" | "mqp");
        let f = &self.feedback;
        let kind = self.model_kind();
        if needs_gain && f.phi.is_none() && f.matrix.is_none() && f.sweep.is_none() && !f.optimize {
            is.push("feedback.phi", "missing required key (or give feedback.matrix / feedback.sweep)");
        }
        if command == "css" && kind == Some(ModelKind::Custom) {
            is.push("model.custom", "css needs a swimmer or thermal model");
        }
        if command == "css" && kind == Some(ModelKind::ThermalMulti) {
            is.require("run.horizon", &self.run.horizon);
            is.require("run.n_traj", &self.run.n_traj);
            if self.feedback.phi.is_none() && self.feedback.matrix.is_none() && !self.feedback.optimize {
                is.push("feedback.matrix", "multi-zone css evaluates a given gain matrix (or set feedback.optimize)");
            }
        }
        if command == "hjb" && kind == Some(ModelKind::Custom) {
            is.push("model.custom", "hjb needs a swimmer or thermal model");
        }
        is.0
    }

    /// Echo of the resolved configuration as a TOML-compatible tree.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model.swimmer]
d = 3
d_coef = 1.0
kappa = 1.0

[feedback]
phi = 10.0

[run]
horizon = 10.0
n_traj = 100
"#;

    #[test]
    fn minimal_swimmer_resolves_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.model_kind(), Some(ModelKind::Swimmer));
        assert_eq!(cfg.run.dt, 0.005);
        assert_eq!(cfg.analysis.q, vec![2.0]);
        assert!(cfg.command_issues("simulate").is_empty());
    }

    #[test]
    fn q_list_is_kept() {
        let cfg = parse_config(&format!("{MINIMAL}\n[analysis]\nq = [1, 2, 4]\n")).unwrap();
        assert_eq!(cfg.analysis.q, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn errors_are_aggregated() {
        let text = MINIMAL.replace("horizon = 10.0", "horizon = -1.0\ndt = -0.1").replace("kappa = 1.0", "");
        let Err(ConfigError::Invalid(issues)) = parse_config(&text) else { panic!() };
        let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"run.dt") && keys.contains(&"run.horizon") && keys.contains(&"model.swimmer.kappa"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(&format!("{MINIMAL}\nbogus_key = 1\n")).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn two_models_rejected() {
        let text = format!("{MINIMAL}\n[model.thermal_single]\nc0 = 1.0\nc1 = 2.0\nd_coef = 1.0\nkappa = 1.0\n");
        let Err(ConfigError::Invalid(issues)) = parse_config(&text) else { panic!() };
        assert!(issues.iter().any(|i| i.key == "model"));
    }
}
