//! Single-path integration of the state and of the propagator, sharing one
//! noise realization.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{IntegratorConfig, Scheme};
use super::noise::{NoiseProcess, NoiseTemplate};
use super::propagator::{PropagatorRecord, RunningPropagator};
use crate::error::{Error, Result};
use crate::linalg::{matmul, to_row_major, Expm};
use crate::model::{FeedbackLaw, LinearSystem, MultNoiseSpec};

/// Sampled solution path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Step index at which the state first left the ceiling or became non-finite.
    pub blowup_step: Option<usize>,
}

impl Trajectory {
    pub fn blew_up(&self) -> bool {
        self.blowup_step.is_some()
    }
}

/// Counter-based RNG for trajectory `index`: stream `2·index` drives the
/// multiplicative noise, stream `2·index+1` the additive noise.
pub fn trajectory_rngs(master_seed: u64, index: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut mult = ChaCha8Rng::seed_from_u64(master_seed);
    mult.set_stream(2 * index);
    let mut add = ChaCha8Rng::seed_from_u64(master_seed);
    add.set_stream(2 * index + 1);
    (mult, add)
}

/// Precomputed, immutable per-system step data.
#[derive(Debug, Clone)]
pub(crate) struct PathEngine {
    pub d: usize,
    /// Working dimension of the state map (`d+1` with a noise center).
    n: usize,
    scheme: Scheme,
    dt: f64,
    /// Deterministic part of the one-step generator for the state, `n×n`.
    base_x: Vec<f64>,
    /// Deterministic part of the one-step generator for the propagator, `d×d`.
    base_w: Vec<f64>,
    center: Option<Vec<f64>>,
    add_std: Vec<f64>,
    template: NoiseTemplate,
}

/// The noise spec with the configuration's convention override applied.
pub(crate) fn effective_spec(system: &LinearSystem, cfg: &IntegratorConfig) -> Option<MultNoiseSpec> {
    system.mult_noise.clone().map(|mut s| {
        if let Some(c) = cfg.convention {
            s.convention = c;
        }
        s
    })
}

impl PathEngine {
    pub fn new(system: &LinearSystem, feedback: &FeedbackLaw, cfg: &IntegratorConfig) -> Result<Self> {
        system.validate()?;
        cfg.validate()?;
        let d = system.dim;
        let spec = effective_spec(system, cfg);
        let conv_drift = match (&spec, cfg.scheme) {
            (None, _) => DMatrix::zeros(d, d),
            (Some(s), Scheme::EulerMaruyama) => s.ito_form_drift(d)?,
            (Some(s), _) => s.stratonovich_form_drift(d)?,
        };
        let a = system.closed_loop_drift(feedback)?;
        let center = system.noise_center.as_ref().map(|c| c.iter().copied().collect::<Vec<_>>());
        let n = if center.is_some() { d + 1 } else { d };
        let mut base_x = vec![0.0; n * n];
        for i in 0..d {
            for j in 0..d {
                base_x[i * n + j] = (a[(i, j)] + conv_drift[(i, j)]) * cfg.dt;
            }
            if let Some(c) = &center {
                base_x[i * n + d] = -(0..d).map(|j| conv_drift[(i, j)] * c[j]).sum::<f64>() * cfg.dt;
            }
        }
        let base_w = to_row_major(&(conv_drift * cfg.dt));
        let add_std = system
            .additive_cov
            .iter()
            .map(|k| (k * cfg.dt).sqrt() / system.friction)
            .collect();
        Ok(Self {
            d,
            n,
            scheme: cfg.scheme,
            dt: cfg.dt,
            base_x,
            base_w,
            center,
            add_std,
            template: NoiseTemplate::new(spec.as_ref(), d, cfg.dt)?,
        })
    }
}

/// What a path run should produce.
#[derive(Debug, Clone, Default)]
pub(crate) struct PathRequest<'a> {
    pub state: bool,
    pub record_stride: Option<usize>,
    pub sample_steps: &'a [usize],
    pub propagator: bool,
    pub snapshot_steps: &'a [usize],
}

#[derive(Debug, Clone, Default)]
pub(crate) struct PathOutput {
    pub trajectory: Option<Trajectory>,
    pub terminal: Option<Vec<f64>>,
    pub samples: Vec<f64>,
    pub snapshots: Vec<PropagatorRecord>,
    pub final_record: Option<PropagatorRecord>,
    pub blowup_step: Option<usize>,
}

/// Workspace to turn a one-step generator into the one-step map.
struct StepMap {
    n: usize,
    expm: Expm,
    sq: Vec<f64>,
}

impl StepMap {
    fn new(n: usize) -> Self {
        Self {
            n,
            expm: Expm::new(n),
            sq: vec![0.0; n * n],
        }
    }

    fn apply(&mut self, scheme: Scheme, m: &[f64], out: &mut [f64]) {
        let n = self.n;
        match scheme {
            Scheme::Exponential => self.expm.compute(m, out),
            Scheme::EulerMaruyama => {
                out.copy_from_slice(m);
                for i in 0..n {
                    out[i * n + i] += 1.0;
                }
            }
            Scheme::PredictorCorrector => {
                matmul(m, m, &mut self.sq, n);
                for ((o, a), b) in out.iter_mut().zip(m).zip(&self.sq) {
                    *o = a + 0.5 * b;
                }
                for i in 0..n {
                    out[i * n + i] += 1.0;
                }
            }
        }
    }
}

pub(crate) fn run_path(
    engine: &PathEngine,
    cfg: &IntegratorConfig,
    index: u64,
    req: &PathRequest<'_>,
) -> Result<PathOutput> {
    let d = engine.d;
    let n = engine.n;
    let steps = cfg.steps();
    let (mut rng_m, mut rng_a) = trajectory_rngs(cfg.master_seed, index);
    let mut noise = NoiseProcess::from_template(engine.template.clone(), d, engine.dt, &mut rng_m)?;

    let mut x = vec![0.0; n];
    if let Some(x0) = &cfg.initial_state {
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                name: "initial_state",
                expected: d.to_string(),
                got: x0.len().to_string(),
            });
        }
        x[..d].copy_from_slice(x0);
    }
    if n > d {
        x[d] = 1.0;
    }
    let mut out = PathOutput::default();
    let mut traj = req.record_stride.map(|_| Trajectory {
        dim: d,
        times: vec![0.0],
        states: vec![x[..d].to_vec()],
        blowup_step: None,
    });

    let mut ds = vec![0.0; d * d];
    let mut mx = vec![0.0; n * n];
    let mut px = vec![0.0; n * n];
    let mut mw = vec![0.0; d * d];
    let mut pw = vec![0.0; d * d];
    let mut xn = vec![0.0; n];
    let mut map_x = StepMap::new(n);
    let mut map_w = StepMap::new(d);
    let mut prop = req.propagator.then(|| RunningPropagator::new(d));
    let mut next_sample = 0usize;
    let mut next_snapshot = 0usize;
    // Without additive forcing or a noise center the origin is invariant.
    let state_static =
        engine.center.is_none() && engine.add_std.iter().all(|s| *s == 0.0) && x.iter().all(|v| *v == 0.0);
    let mut state_alive = req.state && !state_static;

    for step in 1..=steps {
        let noisy = noise.next_into(&mut rng_m, &mut ds);

        if let Some(p) = prop.as_mut() {
            if noisy || engine.base_w.iter().any(|v| *v != 0.0) {
                for (k, m) in mw.iter_mut().enumerate() {
                    *m = engine.base_w[k] + ds[k];
                }
                map_w.apply(engine.scheme, &mw, &mut pw);
                p.advance(&pw);
            }
            let at_snapshot = next_snapshot < req.snapshot_steps.len() && req.snapshot_steps[next_snapshot] == step;
            if step % cfg.reorth_interval == 0 || at_snapshot || step == steps {
                p.reorthonormalize();
            }
            while next_snapshot < req.snapshot_steps.len() && req.snapshot_steps[next_snapshot] == step {
                out.snapshots.push(p.record(step as f64 * cfg.dt));
                next_snapshot += 1;
            }
        }

        if state_alive {
            mx.copy_from_slice(&engine.base_x);
            if noisy {
                for i in 0..d {
                    for j in 0..d {
                        mx[i * n + j] += ds[i * d + j];
                    }
                }
                if let Some(c) = &engine.center {
                    for i in 0..d {
                        mx[i * n + d] -= (0..d).map(|j| ds[i * d + j] * c[j]).sum::<f64>();
                    }
                }
            }
            map_x.apply(engine.scheme, &mx, &mut px);
            for i in 0..n {
                xn[i] = (0..n).map(|j| px[i * n + j] * x[j]).sum();
            }
            for i in 0..d {
                let s = engine.add_std[i];
                if s > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng_a);
                    xn[i] += s * z;
                }
            }
            std::mem::swap(&mut x, &mut xn);
            if x[..d].iter().any(|v| !v.is_finite() || v.abs() > cfg.blowup_ceiling) {
                out.blowup_step = Some(step);
                state_alive = false;
                if let Some(t) = traj.as_mut() {
                    t.blowup_step = Some(step);
                }
            } else {
                while next_sample < req.sample_steps.len() && req.sample_steps[next_sample] == step {
                    out.samples.extend_from_slice(&x[..d]);
                    next_sample += 1;
                }
                if let (Some(t), Some(stride)) = (traj.as_mut(), req.record_stride) {
                    if step % stride == 0 || step == steps {
                        t.times.push(step as f64 * cfg.dt);
                        t.states.push(x[..d].to_vec());
                    }
                }
            }
        }
        if let (true, Some(t), Some(stride)) = (state_static, traj.as_mut(), req.record_stride) {
            if step % stride == 0 || step == steps {
                t.times.push(step as f64 * cfg.dt);
                t.states.push(x[..d].to_vec());
            }
        }
        if !state_alive && !state_static && prop.is_none() {
            break;
        }
    }
    if req.state && state_static {
        for &step in req.sample_steps {
            if step <= steps {
                out.samples.extend_from_slice(&x[..d]);
            }
        }
    }
    if req.state && out.blowup_step.is_none() {
        out.terminal = Some(x[..d].to_vec());
    }
    out.trajectory = traj;
    out.final_record = prop.map(|p| p.record(steps as f64 * cfg.dt));
    Ok(out)
}

/// Integrates one trajectory of the closed-loop system (trajectory index 0).
pub fn integrate(system: &LinearSystem, feedback: &FeedbackLaw, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_indexed(system, feedback, cfg, 0)
}

/// Integrates the trajectory with the given ensemble index.
pub fn integrate_indexed(
    system: &LinearSystem,
    feedback: &FeedbackLaw,
    cfg: &IntegratorConfig,
    index: u64,
) -> Result<Trajectory> {
    let engine = PathEngine::new(system, feedback, cfg)?;
    let req = PathRequest {
        state: true,
        record_stride: Some(cfg.record_stride),
        ..Default::default()
    };
    Ok(run_path(&engine, cfg, index, &req)?.trajectory.expect("requested"))
}

/// Evolves the propagator `dW = σW` (with the convention drift of the
/// configured reading) over the horizon on the noise path of trajectory
/// `index`; the deterministic drift, feedback and additive noise of `system`
/// play no role.
pub fn evolve_propagator(system: &LinearSystem, cfg: &IntegratorConfig, index: u64) -> Result<PropagatorRecord> {
    if system.mult_noise.is_none() {
        log::debug!("propagator requested for a system without multiplicative noise");
    }
    let engine = PathEngine::new(system, &FeedbackLaw::none(), cfg)?;
    let req = PathRequest {
        propagator: true,
        ..Default::default()
    };
    Ok(run_path(&engine, cfg, index, &req)?.final_record.expect("requested"))
}

/// Propagator snapshots at `times` on the noise path of trajectory `index`.
pub fn propagator_snapshots(
    system: &LinearSystem,
    cfg: &IntegratorConfig,
    index: u64,
    times: &[f64],
) -> Result<Vec<PropagatorRecord>> {
    let engine = PathEngine::new(system, &FeedbackLaw::none(), cfg)?;
    let steps = snapshot_steps(cfg, times)?;
    let req = PathRequest {
        propagator: true,
        snapshot_steps: &steps,
        ..Default::default()
    };
    Ok(run_path(&engine, cfg, index, &req)?.snapshots)
}

pub(crate) fn snapshot_steps(cfg: &IntegratorConfig, times: &[f64]) -> Result<Vec<usize>> {
    let mut steps: Vec<usize> = times.iter().map(|t| cfg.step_at(*t)).collect();
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.first() == Some(&0) {
        return Err(crate::error::invalid(
            "lyapunov_times",
            "must be strictly increasing, positive and at least one step apart",
        ));
    }
    steps.dedup();
    Ok(steps)
}
