//! Built-in cross-check suite run by `validate`. Every check uses fixed
//! parameters and the given seed, so the pass/fail vector is reproducible.

use mqplab_core::css::stationary_second_moment;
use mqplab_core::hjb::{closed_form_cost_to_go, RICCATI_STEPS};
use mqplab_core::lyapunov::{exponent_values, ExponentOrder};
use mqplab_core::model::thermal::scalar_thermal_system;
use mqplab_core::sde::{calibrate_convention, CalibrationSettings};
use mqplab_core::stats::mean;
use mqplab_core::tails::swimmer_tail_routes;
use mqplab_core::{
    closed_form_gain, finite_time_exponents, hjb_residual, optimize_gain, riccati_multizone, riccati_swimmers,
    run_ensemble, solve_riccati, swimmer_system, Convention, CssModel, FeedbackLaw, IntegratorConfig, LqProblem,
    MomentMethod, NoiseReading, ScalarRiccati, StationaryDensity, ThermalEdge, ThermalNetwork, ThermalZone,
};
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Stage};
use crate::report::Check;

pub fn validation_suite(seed: u64, threads: Option<usize>) -> Result<Vec<Check>, CliError> {
    let mut checks = vec![route_identity()];
    checks.extend(css_spots()?);
    checks.extend(swimmer_riccati()?);
    checks.push(thermal_riccati_vs_css()?);
    checks.push(multizone_residual(seed)?);
    checks.extend(density_checks()?);
    checks.push(bk_top_exponent(seed, threads)?);
    checks.push(calibration(seed, threads)?);
    Ok(checks)
}

/// Both tail routes agree exactly in rational arithmetic.
fn route_identity() -> Check {
    let mut cases = 0;
    let mut bad = Vec::new();
    for d in [2i64, 3] {
        for d_num in 1..=4i64 {
            for phi_num in 1..=12i64 {
                let phi = Ratio::new(phi_num * 7, 4);
                let dc = Ratio::new(d_num, 3);
                let (a, b) = swimmer_tail_routes(phi, Ratio::from_integer(d), dc);
                cases += 1;
                if a != b {
                    bad.push(format!("d={d} D={dc} phi={phi}"));
                }
            }
        }
    }
    Check::flag(
        "route_identity",
        bad.is_empty(),
        format!("{cases} rational cases, {} mismatches", bad.len()),
    )
}

fn css_spots() -> Result<Vec<Check>, CliError> {
    let swim = CssModel::Swimmers {
        d: 3,
        d_coef: 1.0,
        kappa: 1.0,
    };
    let thermal = CssModel::Thermal {
        c0: 1.0,
        c1: 2.0,
        d_coef: 1.0,
        kappa: 1.0,
    };
    let s = optimize_gain(&swim, 2.0, 11.0, MomentMethod::ClosedForm).stage("css swimmers")?;
    let t = optimize_gain(&thermal, 2.0, 3.0, MomentMethod::ClosedForm).stage("css thermal")?;
    let sq = optimize_gain(&swim, 2.0, 11.0, MomentMethod::Quadrature).stage("css swimmers quadrature")?;
    Ok(vec![
        Check::relative("css_swimmer_optimum", s.phi_star, 11.0, 1e-6),
        Check::relative("css_thermal_optimum", t.phi_star, 3.0, 1e-6),
        Check::relative(
            "css_swimmer_closed_form",
            s.phi_star,
            closed_form_gain(&swim, 11.0).stage("closed form")?,
            1e-6,
        ),
        Check::relative("css_quadrature_optimum", sq.phi_star, s.phi_star, 1e-6),
    ])
}

fn swimmer_riccati() -> Result<Vec<Check>, CliError> {
    let (d, dc, kappa, beta) = (3, 1.0, 1.0, 11.0);
    let t0 = -20.0;
    let cost = riccati_swimmers(d, dc, kappa, beta, 0.0, 0.0, t0).stage("swimmer Riccati")?;
    let eq = ScalarRiccati::swimmers(d, dc, beta);
    let closed =
        closed_form_cost_to_go(&eq, d, d as f64 * kappa, 0.0, 0.0, t0, 0.0, RICCATI_STEPS).stage("closed form")?;
    let sup = cost
        .varsigma_path()
        .iter()
        .zip(closed.varsigma_path())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut path_check = Check::flag("riccati_closed_form_path", sup < 1e-6, format!("sup error {sup:.3e}"));
    path_check.value = sup;
    path_check.expected = 0.0;
    path_check.tolerance = 1e-6;
    let gain = closed_form_gain(&CssModel::Swimmers { d, d_coef: dc, kappa }, beta).stage("closed form")?;
    let mut steady = Check::relative("riccati_steady_vs_css", cost.varsigma_path()[0], gain, 1e-5);
    steady.passed = (cost.varsigma_path()[0] - gain).abs() < 1e-5;
    Ok(vec![path_check, steady])
}

/// Steady single-zone Riccati gain equals the steady-state optimum at q = 2.
fn thermal_riccati_vs_css() -> Result<Check, CliError> {
    let (c0, c1, dc, kappa, beta) = (1.0, 2.0, 1.0, 1.0, 3.0);
    let reading = NoiseReading::default();
    let sys = scalar_thermal_system(c0, dc, kappa, reading).stage("thermal model")?;
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let problem = LqProblem::from_system(&sys, one(-c1), one(1.0), one(beta)).stage("LQ problem")?;
    let cost = solve_riccati(&problem, &one(0.0), 0.0, -20.0, 0.0).stage("thermal Riccati")?;
    let gain = -problem.feedback_gain(&cost.matrix(0))[(0, 0)];
    let css = closed_form_gain(&CssModel::Thermal { c0, c1, d_coef: dc, kappa }, beta).stage("closed form")?;
    Ok(Check::relative("riccati_thermal_vs_css", gain, css, 1e-5))
}

fn multizone_residual(seed: u64) -> Result<Check, CliError> {
    let zone = |c_bar_o: f64, c_s: f64, d_o: f64| ThermalZone {
        c_bar_o,
        c_s,
        kappa: 0.6,
        d_o,
        alpha: 1.0,
        beta: 2.0,
    };
    let net = ThermalNetwork {
        zones: vec![zone(1.0, 0.8, 0.3), zone(1.4, 1.1, 0.2), zone(0.9, 1.0, 0.25)],
        edges: vec![
            ThermalEdge {
                i: 0,
                j: 1,
                c_bar: 0.5,
                d_coef: 0.1,
            },
            ThermalEdge {
                i: 1,
                j: 2,
                c_bar: 0.3,
                d_coef: 0.05,
            },
        ],
        t_o: 5.0,
        t_s: 35.0,
        t_bar: 20.0,
    };
    let reading = NoiseReading::default();
    let problem = LqProblem::thermal_network(&net, reading).stage("LQ problem")?;
    let cost = riccati_multizone(&net, reading, 0.0, &DMatrix::zeros(3, 3), -10.0).stage("multi-zone Riccati")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(f64, DVector<f64>)> = (0..100)
        .map(|_| {
            let t = rng.random_range(-10.0..0.0);
            (t, DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)))
        })
        .collect();
    let rep = hjb_residual(&problem, &cost, &samples).stage("HJB residual")?;
    let mut c = Check::flag(
        "hjb_residual_multizone",
        rep.max_abs_residual < 1e-5,
        format!("max residual {:.3e} over 100 points", rep.max_abs_residual),
    );
    c.value = rep.max_abs_residual;
    c.expected = 0.0;
    c.tolerance = 1e-5;
    Ok(c)
}

fn density_checks() -> Result<Vec<Check>, CliError> {
    let swim = StationaryDensity::swimmers(3, 1.0, 1.0, 10.0).stage("swimmer density")?;
    let thermal = StationaryDensity::thermal(8.0, 1.0, 1.0).stage("thermal density")?;
    let sys = scalar_thermal_system(8.0, 1.0, 1.0, NoiseReading::default()).stage("thermal model")?;
    let second = stationary_second_moment(&sys, &FeedbackLaw::none()).stage("second moment")?[(0, 0)];
    Ok(vec![
        Check::relative("swimmer_density_mass", swim.total_mass(), 1.0, 1e-8),
        Check::relative("thermal_density_mass", thermal.total_mass(), 1.0, 1e-8),
        Check::relative(
            "thermal_second_moment_vs_density",
            second,
            thermal.moment(2.0).stage("thermal moment")?,
            1e-10,
        ),
    ])
}

/// Top exponent of the 2-d Batchelor–Kraichnan propagator, `d(d−1)D/2 = 1`.
fn bk_top_exponent(seed: u64, threads: Option<usize>) -> Result<Check, CliError> {
    let sys = swimmer_system(2, 1.0, 0.0).stage("swimmer model")?;
    let mut cfg = IntegratorConfig::new(0.005, 10.0, seed);
    cfg.lyapunov_times = vec![10.0];
    cfg.threads = threads;
    let ens = run_ensemble(&sys, &FeedbackLaw::none(), &cfg, 1000).stage("propagator ensemble")?;
    let samples = ens.snapshots[0]
        .iter()
        .map(finite_time_exponents)
        .collect::<mqplab_core::Result<Vec<_>>>()
        .stage("finite-time exponents")?;
    let top = mean(&exponent_values(&samples, 0, ExponentOrder::Sorted));
    Ok(Check::relative("bk_top_exponent", top, 1.0, 0.05))
}

/// The calibration picks the kinetic reading with doubled covariance.
fn calibration(seed: u64, threads: Option<usize>) -> Result<Check, CliError> {
    let mut s = CalibrationSettings::new(3.0, 1.0, 1.0);
    s.n_traj = 1000;
    s.dt = 5e-3;
    s.master_seed = seed;
    s.threads = threads;
    let rep = calibrate_convention(&s).stage("convention calibration")?;
    let expected = NoiseReading {
        convention: Convention::Kinetic,
        scale: 2.0,
    };
    Ok(Check::flag(
        "convention_calibration",
        rep.matched && rep.selected == Some(expected),
        rep.note,
    ))
}
