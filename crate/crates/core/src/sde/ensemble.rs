//! Deterministic ensembles of independent trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::IntegratorConfig;
use super::engine::{run_path, snapshot_steps, PathEngine, PathRequest};
use super::propagator::PropagatorRecord;
use crate::error::{ensure, Result};
use crate::model::{FeedbackLaw, LinearSystem};

/// Pooled output of an ensemble run, ordered by trajectory index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_traj: usize,
    pub dim: usize,
    /// Terminal state per trajectory; `None` for trajectories that blew up.
    pub terminal_states: Vec<Option<Vec<f64>>>,
    /// Stationary samples taken after burn-in, flattened `dim` at a time.
    pub samples: Vec<f64>,
    /// Propagator snapshots: `snapshots[k][i]` is trajectory `i` at `snapshot_times[k]`.
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Vec<PropagatorRecord>>,
    pub blowup_count: usize,
    /// First blow-up step per trajectory (only for trajectories that blew up).
    pub blowups: Vec<(usize, usize)>,
}

impl EnsembleSummary {
    pub fn finite_count(&self) -> usize {
        self.n_traj - self.blowup_count
    }

    pub fn blowup_fraction(&self) -> f64 {
        self.blowup_count as f64 / self.n_traj as f64
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.dim
    }

    /// Euclidean norms of the pooled samples.
    pub fn sample_norms(&self) -> Vec<f64> {
        self.samples
            .chunks(self.dim)
            .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// One coordinate of the pooled samples.
    pub fn sample_component(&self, k: usize) -> Vec<f64> {
        self.samples.chunks(self.dim).map(|s| s[k]).collect()
    }
}

/// Step indices of the stationary samples requested by `cfg`.
pub fn sample_steps(cfg: &IntegratorConfig) -> Vec<usize> {
    let Some(interval) = cfg.sample_interval else {
        return Vec::new();
    };
    let every = ((interval / cfg.dt).round() as usize).max(1);
    let first = cfg.step_at(cfg.burn_in).max(1);
    (first..=cfg.steps()).step_by(every).collect()
}

/// Runs `n_traj` independent trajectories. The result depends only on the
/// inputs, not on the number of worker threads.
pub fn run_ensemble(
    system: &LinearSystem,
    feedback: &FeedbackLaw,
    cfg: &IntegratorConfig,
    n_traj: usize,
) -> Result<EnsembleSummary> {
    ensure(n_traj >= 1, "n_traj", "must be at least 1")?;
    let engine = PathEngine::new(system, feedback, cfg)?;
    let samples_at = sample_steps(cfg);
    let snaps_at = if cfg.lyapunov_times.is_empty() {
        Vec::new()
    } else {
        snapshot_steps(cfg, &cfg.lyapunov_times)?
    };
    let req = PathRequest {
        state: true,
        record_stride: None,
        sample_steps: &samples_at,
        propagator: !snaps_at.is_empty(),
        snapshot_steps: &snaps_at,
    };
    let job = |i: usize| run_path(&engine, cfg, i as u64, &req);
    let outputs: Vec<_> = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| crate::error::invalid("threads", e.to_string()))?
            .install(|| (0..n_traj).into_par_iter().map(job).collect::<Result<Vec<_>>>())?,
        None => (0..n_traj).into_par_iter().map(job).collect::<Result<Vec<_>>>()?,
    };

    let mut summary = EnsembleSummary {
        n_traj,
        dim: system.dim,
        terminal_states: Vec::with_capacity(n_traj),
        samples: Vec::new(),
        snapshot_times: snaps_at.iter().map(|s| *s as f64 * cfg.dt).collect(),
        snapshots: vec![Vec::with_capacity(n_traj); snaps_at.len()],
        blowup_count: 0,
        blowups: Vec::new(),
    };
    for (i, out) in outputs.into_iter().enumerate() {
        if let Some(step) = out.blowup_step {
            summary.blowup_count += 1;
            summary.blowups.push((i, step));
        }
        summary.terminal_states.push(out.terminal);
        summary.samples.extend(out.samples);
        for (k, rec) in out.snapshots.into_iter().enumerate() {
            summary.snapshots[k].push(rec);
        }
    }
    Ok(summary)
}
