use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::model::Convention;

/// Time-stepping rule for one step of the linear SDE.
///
/// With `M = A·dt + ΔΣ` the one-step generator, `EulerMaruyama` applies
/// `I + M` with the Itô-form drift, `PredictorCorrector` applies the Heun
/// update `I + M + M²/2` with the Stratonovich-form drift, and `Exponential`
/// applies `exp(M)` with the Stratonovich-form drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    PredictorCorrector,
    #[default]
    Exponential,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "euler_maruyama" => Ok(Scheme::EulerMaruyama),
            "predictor_corrector" => Ok(Scheme::PredictorCorrector),
            "exponential" => Ok(Scheme::Exponential),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Overrides the convention carried by the system's noise spec.
    pub convention: Option<Convention>,
    pub reorth_interval: usize,
    pub master_seed: u64,
    pub blowup_ceiling: f64,
    /// Time discarded before stationary samples are collected.
    pub burn_in: f64,
    /// Spacing of stationary samples after burn-in; `None` collects none.
    pub sample_interval: Option<f64>,
    /// Store every `record_stride`-th state in returned trajectories.
    pub record_stride: usize,
    /// Times at which finite-time Lyapunov snapshots are taken.
    pub lyapunov_times: Vec<f64>,
    /// Worker threads for ensembles; `None` uses the global pool.
    pub threads: Option<usize>,
    pub initial_state: Option<Vec<f64>>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            scheme: Scheme::Exponential,
            convention: None,
            reorth_interval: 10,
            master_seed: 0,
            blowup_ceiling: 1e12,
            burn_in: 0.0,
            sample_interval: None,
            record_stride: 1,
            lyapunov_times: Vec::new(),
            threads: None,
            initial_state: None,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64, master_seed: u64) -> Self {
        Self {
            dt,
            horizon,
            master_seed,
            ..Self::default()
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Index of the step ending closest to time `t`.
    pub fn step_at(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dt > 0.0 && self.dt.is_finite(), "dt", format!("must be positive, got {}", self.dt))?;
        ensure(
            self.horizon.is_finite() && self.dt < self.horizon,
            "horizon",
            format!("must exceed dt = {}, got {}", self.dt, self.horizon),
        )?;
        ensure(self.reorth_interval >= 1, "reorth_interval", "must be at least 1")?;
        ensure(self.blowup_ceiling > 0.0, "blowup_ceiling", "must be positive")?;
        ensure(
            self.burn_in >= 0.0 && self.burn_in < self.horizon,
            "burn_in",
            format!("must lie in [0, horizon), got {}", self.burn_in),
        )?;
        if let Some(s) = self.sample_interval {
            ensure(s >= self.dt, "sample_interval", "must be at least dt")?;
        }
        ensure(self.record_stride >= 1, "record_stride", "must be at least 1")?;
        for &t in &self.lyapunov_times {
            ensure(
                t > 0.0 && t <= self.horizon + 0.5 * self.dt,
                "lyapunov_times",
                format!("{t} outside (0, horizon]"),
            )?;
        }
        if let Some(n) = self.threads {
            ensure(n >= 1, "threads", "must be at least 1")?;
        }
        Ok(())
    }
}
