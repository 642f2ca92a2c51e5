//! Subcommand pipelines.

use std::collections::BTreeMap;
use std::str::FromStr;

use mqplab_core::css::{multizone_cost_exact_q2, multizone_cost_mc, McSettings};
use mqplab_core::hjb::{closed_form_cost_to_go, RICCATI_STEPS};
use mqplab_core::lyapunov::{exponent_values, ExponentOrder};
use mqplab_core::model::thermal::scalar_thermal_system;
use mqplab_core::sde::integrate;
use mqplab_core::stats::{mean, quantile_sorted, sorted_copy, std_error, Histogram};
use mqplab_core::tails::{swimmer_mqp_threshold, thermal_mqp_threshold, HillCurve};
use mqplab_core::{
    closed_form_gain, estimate_cramer, expected_cost_at, finite_time_exponents, hill_plateau, hjb_residual,
    mqp_verdict, optimize_gain, riccati_multizone, riccati_swimmers, run_ensemble, solve_riccati, white_substitute,
    CostToGo, IntegratorConfig, LqProblem, MomentMethod, ScalarRiccati,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, ModelKind};
use crate::error::{CliError, Stage};
use crate::report::{Check, RunReport, Status, Table, REPORT_SCHEMA};
use crate::setup::{rows, Gain, Setup};
use crate::validate::validation_suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Lyapunov,
    Cramer,
    Tails,
    Css,
    Hjb,
    Mqp,
    Validate,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Lyapunov,
        Command::Cramer,
        Command::Tails,
        Command::Css,
        Command::Hjb,
        Command::Mqp,
        Command::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Lyapunov => "lyapunov",
            Command::Cramer => "cramer",
            Command::Tails => "tails",
            Command::Css => "css",
            Command::Hjb => "hjb",
            Command::Mqp => "mqp",
            Command::Validate => "validate",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Report plus the tables to write next to it.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: RunReport,
    pub tables: Vec<Table>,
}

#[derive(Default)]
struct Outcome {
    results: BTreeMap<String, Value>,
    tables: Vec<Table>,
    checks: Vec<Check>,
}

impl Outcome {
    fn put(&mut self, key: &str, v: Value) {
        self.results.insert(key.to_string(), v);
    }
}

/// Runs `command` on a validated configuration.
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<Run, CliError> {
    let issues = cfg.command_issues(command.name());
    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues).into());
    }
    let setup = Setup::new(cfg)?;
    let out = match command {
        Command::Simulate => simulate(cfg, &setup)?,
        Command::Lyapunov => lyapunov(cfg, &setup)?,
        Command::Cramer => cramer(cfg, &setup)?,
        Command::Tails => tails(cfg, &setup)?,
        Command::Css => css(cfg, &setup)?,
        Command::Hjb => hjb(cfg, &setup)?,
        Command::Mqp => mqp(cfg, &setup)?,
        Command::Validate => {
            let checks = validation_suite(cfg.run.seed, cfg.run.threads)?;
            let mut o = Outcome::default();
            o.put("passed", json!(checks.iter().filter(|c| c.passed).count()));
            o.put("total", json!(checks.len()));
            o.checks = checks;
            o
        }
    };
    let status = if out.checks.iter().all(|c| c.passed) {
        Status::Ok
    } else {
        Status::Failed
    };
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        command: command.name().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.run.seed,
        convention: setup.convention_tag.clone(),
        config: cfg.echo(),
        results: out.results,
        checks: out.checks,
        artifacts: out.tables.iter().map(|t| t.file.clone()).collect(),
        status,
    };
    Ok(Run {
        report,
        tables: out.tables,
    })
}

/// Integrator settings from the run table; horizon and burn-in in time units.
pub fn integrator(cfg: &ExperimentConfig) -> IntegratorConfig {
    let r = &cfg.run;
    let horizon = r.horizon.unwrap_or(1.0);
    let mut ic = IntegratorConfig::new(r.dt, horizon, r.seed);
    ic.scheme = r.scheme;
    ic.reorth_interval = r.reorth_interval;
    ic.burn_in = r.burn_in * horizon;
    ic.sample_interval = Some(r.sample_interval.max(r.dt));
    ic.threads = r.threads;
    ic
}

fn n_traj(cfg: &ExperimentConfig) -> usize {
    cfg.run.n_traj.expect("checked by command_issues")
}

/// Mean and standard error of `f(x)` from 32 contiguous batches; samples
/// are ordered by trajectory, so batches are nearly independent.
fn batch_mean(values: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mapped: Vec<f64> = values.iter().map(|x| f(*x)).collect();
    let m = mean(&mapped);
    let batches = 32.min(mapped.len());
    if batches < 2 {
        return (m, f64::NAN);
    }
    let size = mapped.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&mapped[b * size..(b + 1) * size])).collect();
    (m, std_error(&means))
}

/// `base.csv` for a single gain, `base_<case>.csv` for sweeps.
fn case_file(base: &str, case: usize, cases: usize) -> String {
    if cases == 1 {
        format!("{base}.csv")
    } else {
        format!("{base}_{case}.csv")
    }
}

fn q_key(q: f64) -> String {
    format!("{q}")
}

fn simulate(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let ic = integrator(cfg);
    let gains = setup.gains(cfg)?;
    let mut out = Outcome::default();
    let mut cases = Vec::new();
    for (ci, gain) in gains.iter().enumerate() {
        let mut hist = Table::new(case_file("histogram", ci, gains.len()), &["bin_left", "bin_right", "count", "density"]);
        let (sys, fb) = setup.system_at(cfg, gain)?;
        let ens = run_ensemble(&sys, &fb, &ic, n_traj(cfg)).stage("ensemble")?;
        let signed = setup.dim == 1;
        let values: Vec<f64> = if signed {
            ens.sample_component(0)
        } else {
            ens.sample_norms()
        }
        .into_iter()
        .filter(|v| v.is_finite())
        .collect();
        let mut moments = serde_json::Map::new();
        for &q in &cfg.analysis.q {
            let (m, se) = batch_mean(&values, |x| x.abs().powf(q));
            moments.insert(q_key(q), json!({ "mean": m, "stderr": se }));
        }
        let mut case = json!({
            "gain": gain.to_json(),
            "n_traj": ens.n_traj,
            "blowup_fraction": ens.blowup_fraction(),
            "samples": values.len(),
            "moments": moments,
        });
        if values.len() >= 2 {
            let sorted = sorted_copy(&values);
            let (lo, hi) = if signed {
                (quantile_sorted(&sorted, 0.005), quantile_sorted(&sorted, 0.995))
            } else {
                (0.0, quantile_sorted(&sorted, 0.99))
            };
            if hi > lo {
                let h = Histogram::new(&values, lo, hi, cfg.analysis.histogram_bins);
                for i in 0..h.counts.len() {
                    hist.push(vec![h.edges[i], h.edges[i + 1], h.counts[i] as f64, h.density(i)]);
                }
                let inside: u64 = h.counts.iter().sum();
                case["histogram_outside"] = json!(h.total - inside);
            }
        }
        if let Some((a, source)) = setup.analytic_tail(gain) {
            case["alpha_analytic"] = json!(a);
            case["alpha_source"] = json!(source);
        }
        cases.push(case);
        out.tables.push(hist);
    }
    out.put("value", json!(if setup.dim == 1 { "x" } else { "norm" }));
    out.put("cases", Value::Array(cases));

    let (sys, fb) = setup.system_at(cfg, &gains[0])?;
    let mut path_cfg = ic.clone();
    path_cfg.sample_interval = None;
    path_cfg.burn_in = 0.0;
    path_cfg.record_stride = (ic.steps() / 1000).max(1);
    let path = integrate(&sys, &fb, &path_cfg).stage("trajectory")?;
    let mut header = vec!["t".to_string()];
    header.extend((0..setup.dim).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut traj = Table::new("trajectory.csv", &header);
    for (t, x) in path.times.iter().zip(&path.states) {
        let mut row = vec![*t];
        row.extend(x);
        traj.push(row);
    }
    out.put("trajectory_blowup_step", json!(path.blowup_step));
    out.tables.push(traj);
    Ok(out)
}

/// Finite-time exponents of the noise propagator at the configured times.
fn exponent_snapshots(
    cfg: &ExperimentConfig,
    setup: &Setup,
    gain: &Gain,
) -> Result<Vec<(f64, Vec<mqplab_core::LyapunovSample>)>, CliError> {
    let mut ic = integrator(cfg);
    ic.sample_interval = None;
    ic.burn_in = 0.0;
    ic.lyapunov_times = cfg
        .run
        .lyapunov_times
        .clone()
        .unwrap_or_else(|| vec![0.5 * ic.horizon, ic.horizon]);
    let (sys, fb) = setup.system_at(cfg, gain)?;
    if sys.mult_noise.is_none() {
        return Err(CliError::Failed("the model has no multiplicative noise".into()));
    }
    let ens = run_ensemble(&sys.without_additive(), &fb, &ic, n_traj(cfg)).stage("propagator ensemble")?;
    ens.snapshot_times
        .iter()
        .zip(&ens.snapshots)
        .map(|(t, recs)| {
            let samples = recs
                .iter()
                .map(finite_time_exponents)
                .collect::<mqplab_core::Result<Vec<_>>>()
                .stage("finite-time exponents")?;
            Ok((*t, samples))
        })
        .collect()
}

fn lyapunov(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let gain = setup.gains(cfg)?.remove(0);
    let snaps = exponent_snapshots(cfg, setup, &gain)?;
    let mut out = Outcome::default();
    let mut table = Table::new("lyapunov.csv", &["t", "index", "mean", "stderr"]);
    let mut per_time = Vec::new();
    for (t, samples) in &snaps {
        let mut means = Vec::new();
        let mut ses = Vec::new();
        for i in 0..setup.dim {
            let v = exponent_values(samples, i, ExponentOrder::Sorted);
            means.push(mean(&v));
            ses.push(std_error(&v));
            table.push(vec![*t, i as f64, mean(&v), std_error(&v)]);
        }
        let sums: Vec<f64> = samples.iter().map(|s| s.sum()).collect();
        per_time.push(json!({
            "t": t,
            "mean": means,
            "stderr": ses,
            "sum_mean": mean(&sums),
            "sum_stderr": std_error(&sums),
        }));
    }
    out.put("exponents", Value::Array(per_time));
    if let Some((d, d_coef, _)) = setup.swimmer() {
        let df = d as f64;
        out.put(
            "predicted",
            json!({ "lambda_1": df * (df - 1.0) * d_coef / 2.0, "sum": 0.0, "curvature_1": 1.0 / ((df - 1.0) * d_coef) }),
        );
    }
    out.tables.push(table);
    Ok(out)
}

fn cramer(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let gain = setup.gains(cfg)?.remove(0);
    let snaps = exponent_snapshots(cfg, setup, &gain)?;
    let index = cfg.analysis.cramer_index;
    let groups: Vec<(f64, Vec<f64>)> = snaps
        .iter()
        .map(|(t, s)| (*t, exponent_values(s, index, ExponentOrder::Sorted)))
        .collect();
    let est = estimate_cramer(&groups, index, cfg.analysis.cramer_method).stage("Cramér estimate")?;
    let sub = white_substitute(&est).stage("white substitute")?;
    let mut out = Outcome::default();
    let mut table = Table::new("rate_function.csv", &["lambda", "rate", "count"]);
    for (k, (l, r)) in est.lambda_grid.iter().zip(&est.rate).enumerate() {
        table.push(vec![*l, *r, est.cell_counts.get(k).copied().unwrap_or(0) as f64]);
    }
    out.put("estimate", serde_json::to_value(&est).expect("serializable"));
    out.put(
        "white_substitute",
        json!({ "d_eff": sub.d_eff, "drift_offset": sub.drift_offset, "convention": sub.spec.convention.name() }),
    );
    if let Some(phi_eff) = setup.effective_decay(&gain) {
        out.put("phi_eff", json!(phi_eff));
        match mqplab_core::tails::predicted_tail_cramer(phi_eff, est.lambda_bar, est.curvature) {
            Ok(a) => {
                // Propagate the standard errors of λ̄ and S″ to first order.
                let se = 2.0
                    * ((est.curvature * est.lambda_bar_se).powi(2)
                        + ((phi_eff - est.lambda_bar) * est.curvature_se).powi(2))
                    .sqrt();
                out.put("alpha_predicted", json!({ "value": a, "stderr": se }));
            }
            Err(e) => out.put("alpha_predicted", json!({ "error": e.to_string() })),
        }
    }
    if let Some((d, d_coef, _)) = setup.swimmer() {
        if index == 0 {
            let df = d as f64;
            out.put(
                "analytic",
                json!({ "lambda_bar": df * (df - 1.0) * d_coef / 2.0, "curvature": 1.0 / ((df - 1.0) * d_coef) }),
            );
        }
    }
    out.tables.push(table);
    Ok(out)
}

fn tails(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let ic = integrator(cfg);
    let mut out = Outcome::default();
    let gains = setup.gains(cfg)?;
    let mut cases = Vec::new();
    for (ci, gain) in gains.iter().enumerate() {
        let mut table = Table::new(case_file("hill", ci, gains.len()), &["k", "alpha"]);
        let (sys, fb) = setup.system_at(cfg, gain)?;
        let ens = run_ensemble(&sys, &fb, &ic, n_traj(cfg)).stage("ensemble")?;
        let norms: Vec<f64> = ens.sample_norms().into_iter().filter(|v| v.is_finite() && *v > 0.0).collect();
        let mut report = hill_plateau(&norms).stage("Hill estimate")?;
        if let Some((a, source)) = setup.analytic_tail(gain) {
            report = report.with_prediction(a, source);
        }
        let curve = HillCurve::new(&norms).stage("Hill curve")?;
        let k_max = curve.n() / 2;
        let mut last = 0;
        for j in 0..=60 {
            let k = (10f64.powf(1.0 + j as f64 / 60.0 * ((k_max as f64).log10() - 1.0))).round() as usize;
            if k > last && k >= 2 && k < curve.n() {
                table.push(vec![k as f64, curve.alpha(k)]);
                last = k;
            }
        }
        let verdicts: Vec<Value> = cfg
            .analysis
            .q
            .iter()
            .map(|q| serde_json::to_value(mqp_verdict(report.alpha_hat, *q)).expect("serializable"))
            .collect();
        cases.push(json!({
            "gain": gain.to_json(),
            "blowup_fraction": ens.blowup_fraction(),
            "tail": serde_json::to_value(&report).expect("serializable"),
            "relative_error": report.relative_error(),
            "verdicts": verdicts,
        }));
        out.tables.push(table);
    }
    out.put("cases", Value::Array(cases));
    Ok(out)
}

fn css(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let beta = cfg.analysis.beta;
    if let Some(model) = setup.css_model() {
        out.put("model", serde_json::to_value(model).expect("serializable"));
        let mut per_q = Vec::new();
        for &q in &cfg.analysis.q {
            let res = optimize_gain(&model, q, beta, MomentMethod::ClosedForm).stage("gain optimization")?;
            let quad_cost = expected_cost_at(&model, res.phi_star, q, beta, MomentMethod::Quadrature)
                .stage("cost quadrature")?;
            let mut table = Table::new(format!("cost_curve_q{}.csv", q_key(q)), &["phi", "cost"]);
            for (phi, c) in &res.cost_curve {
                table.push(vec![*phi, *c]);
            }
            out.tables.push(table);
            per_q.push(json!({
                "q": q,
                "phi_star": res.phi_star,
                "cost_at_optimum": res.cost_at_optimum,
                "cost_quadrature": quad_cost,
                "phi_s": res.phi_s,
                "window_lower": res.convex_window.0,
                "iterations": res.iterations,
            }));
        }
        out.put("optima", Value::Array(per_q));
        out.put("beta", json!(beta));
        out.put(
            "closed_form_q2",
            json!(closed_form_gain(&model, beta).stage("closed-form gain")?),
        );
        return Ok(out);
    }
    let net = setup.network().expect("css models are swimmer or thermal");
    let gain = setup.gains(cfg)?.remove(0);
    let phi = gain.matrix(setup.dim);
    let settings = McSettings {
        cfg: integrator(cfg),
        n_traj: n_traj(cfg),
        pilot_n_traj: n_traj(cfg).min(64),
        pilot_horizon: cfg.run.horizon.expect("checked").min(10.0),
    };
    let mut per_q = Vec::new();
    for &q in &cfg.analysis.q {
        let mc = multizone_cost_mc(net, &phi, q, setup.reading, &settings).stage("Monte Carlo cost")?;
        per_q.push(json!({ "q": q, "mean": mc.mean, "stderr": mc.stderr, "samples_per_traj": mc.samples_per_traj }));
    }
    out.put("gain", json!(rows(&phi)));
    out.put("monte_carlo", Value::Array(per_q));
    out.put(
        "exact_q2",
        json!(multizone_cost_exact_q2(net, &phi, setup.reading).stage("second-moment cost")?),
    );
    // Steady Riccati gain for comparison.
    let problem = LqProblem::thermal_network(net, setup.reading).stage("LQ problem")?;
    let cost = riccati_multizone(net, setup.reading, 0.0, &DMatrix::zeros(setup.dim, setup.dim), -cfg.analysis.hjb_horizon)
        .stage("Riccati solve")?;
    let phi_r = -problem.feedback_gain(&cost.matrix(0));
    out.put("riccati_gain", json!(rows(&phi_r)));
    out.put(
        "riccati_gain_exact_q2",
        json!(multizone_cost_exact_q2(net, &phi_r, setup.reading).stage("second-moment cost")?),
    );
    Ok(out)
}

fn residual_samples(cfg: &ExperimentConfig, dim: usize, t0: f64, tf: f64) -> Vec<(f64, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    (0..cfg.analysis.residual_points)
        .map(|_| {
            let t = rng.random_range(t0..tf);
            (t, DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
        })
        .collect()
}

fn varsigma_table(cost: &CostToGo) -> Table {
    let times = cost.times();
    let s = cost.offsets();
    if cost.dim() == 1 || matches!(cost, CostToGo::ScalarQuadratic { .. }) {
        let mut t = Table::new("varsigma.csv", &["t", "varsigma", "s"]);
        for (k, v) in cost.varsigma_path().iter().enumerate() {
            t.push(vec![times[k], *v, s[k]]);
        }
        t
    } else {
        let n = cost.dim();
        let mut t = Table::new("varsigma.csv", &["t", "i", "j", "varsigma", "s"]);
        for k in 0..cost.len() {
            let m = cost.matrix(k);
            for i in 0..n {
                for j in 0..n {
                    t.push(vec![times[k], i as f64, j as f64, m[(i, j)], s[k]]);
                }
            }
        }
        t
    }
}

fn hjb(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let (t0, tf) = (-cfg.analysis.hjb_horizon, 0.0);
    let beta = cfg.analysis.beta;
    let p_f = cfg.analysis.hjb_terminal;
    let (problem, cost, closed) = match setup.kind {
        ModelKind::Swimmer => {
            let (d, d_coef, kappa) = setup.swimmer().expect("present");
            let problem = LqProblem::swimmers(d, d_coef, kappa, beta).stage("LQ problem")?;
            let cost = riccati_swimmers(d, d_coef, kappa, beta, p_f, tf, t0).stage("Riccati solve")?;
            let eq = ScalarRiccati::swimmers(d, d_coef, beta);
            let closed =
                closed_form_cost_to_go(&eq, d, d as f64 * kappa, p_f, 0.0, t0, tf, RICCATI_STEPS).stage("closed form")?;
            (problem, cost, Some((eq, closed)))
        }
        ModelKind::ThermalSingle => {
            let z = setup.single_zone().expect("present");
            let sys = scalar_thermal_system(z.c0, z.d_coef, z.kappa, setup.reading).stage("thermal model")?;
            let one = |v: f64| DMatrix::from_element(1, 1, v);
            let problem = LqProblem::from_system(&sys, one(-z.c1), one(1.0), one(beta)).stage("LQ problem")?;
            let cost = solve_riccati(&problem, &one(p_f), 0.0, t0, tf).stage("Riccati solve")?;
            let eq = ScalarRiccati::thermal(z.c0, z.c1, z.d_coef, 1.0, beta, setup.reading);
            let closed = closed_form_cost_to_go(&eq, 1, problem.kappa[0], p_f, 0.0, t0, tf, RICCATI_STEPS)
                .stage("closed form")?;
            (problem, cost, Some((eq, closed)))
        }
        ModelKind::ThermalMulti => {
            let net = setup.network().expect("present");
            let problem = LqProblem::thermal_network(net, setup.reading).stage("LQ problem")?;
            let p = DMatrix::identity(setup.dim, setup.dim) * p_f;
            let cost = riccati_multizone(net, setup.reading, tf, &p, t0).stage("Riccati solve")?;
            (problem, cost, None)
        }
        ModelKind::Custom => unreachable!("rejected by command_issues"),
    };
    let p0 = cost.matrix(0);
    let applied = match setup.kind {
        ModelKind::Swimmer => p0.clone(),
        _ => -problem.feedback_gain(&p0),
    };
    out.put("t0", json!(t0));
    out.put("t_f", json!(tf));
    out.put("varsigma_t0", json!(rows(&p0)));
    out.put("s_t0", json!(cost.offsets()[0]));
    out.put("gain_t0", json!(rows(&applied)));
    out.put("error_estimate", json!(cost.error_estimate()));
    out.put("max_asymmetry", json!(cost.max_asymmetry()));
    if let Some((eq, closed)) = &closed {
        let num = cost.varsigma_path();
        let cf = closed.varsigma_path();
        let sup = num.iter().zip(&cf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let s_sup = cost
            .offsets()
            .iter()
            .zip(closed.offsets())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.put(
            "closed_form",
            json!({ "steady": eq.steady(), "sup_error_varsigma": sup, "sup_error_s": s_sup }),
        );
        if let Some(model) = setup.css_model() {
            out.put("css_gain_q2", json!(closed_form_gain(&model, beta).stage("closed-form gain")?));
        }
    }
    let samples = residual_samples(cfg, setup.dim, t0, tf);
    let res = hjb_residual(&problem, &cost, &samples).stage("HJB residual")?;
    out.put(
        "residual",
        json!({
            "points": res.residuals.len(),
            "max_abs": res.max_abs_residual,
            "max_relative": res.max_relative_residual,
        }),
    );
    out.tables.push(varsigma_table(&cost));
    Ok(out)
}

fn mqp(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let gain = setup.gains(cfg)?.remove(0);
    out.put("gain", gain.to_json());
    let analytic = setup.analytic_tail(&gain);
    let measured = if cfg.analysis.measure_tail || analytic.is_none() {
        let (sys, fb) = setup.system_at(cfg, &gain)?;
        let ens = run_ensemble(&sys, &fb, &integrator(cfg), n_traj(cfg)).stage("ensemble")?;
        let norms: Vec<f64> = ens.sample_norms().into_iter().filter(|v| v.is_finite() && *v > 0.0).collect();
        let rep = hill_plateau(&norms).stage("Hill estimate")?;
        out.put("measured", serde_json::to_value(&rep).expect("serializable"));
        Some(rep.alpha_hat)
    } else {
        None
    };
    let (alpha, source) = match (analytic, measured) {
        (Some((a, s)), _) => (a, s),
        (None, Some(a)) => (a, "Hill estimate"),
        (None, None) => unreachable!("measured when no analytic exponent"),
    };
    out.put("alpha", json!(alpha));
    out.put("alpha_source", json!(source));
    let verdicts: Vec<Value> = cfg
        .analysis
        .q
        .iter()
        .map(|&q| {
            let v = mqp_verdict(alpha, q);
            let mut j = serde_json::to_value(v).expect("serializable");
            if let Some((d, d_coef, _)) = setup.swimmer() {
                j["phi_threshold"] = json!(swimmer_mqp_threshold(d, d_coef, q));
            }
            if let Some(z) = setup.single_zone() {
                if let Ok(t) = thermal_mqp_threshold(z.c0, z.c1, z.d_coef, q) {
                    j["phi_threshold"] = json!(t.moment);
                    j["phi_threshold_quoted"] = json!(t.quoted);
                }
            }
            j
        })
        .collect();
    out.put("verdicts", Value::Array(verdicts));
    Ok(out)
}
