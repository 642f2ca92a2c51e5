use mqplab_core::css::{multizone_cost_exact_q2, multizone_cost_mc, McSettings};
use mqplab_core::model::thermal::scalar_thermal_system;
use mqplab_core::*;
use nalgebra::DMatrix;

fn sampling_config(dt: f64, burn_in: f64, samples: usize, interval: f64, seed: u64) -> IntegratorConfig {
    let mut cfg = IntegratorConfig::new(dt, burn_in + samples as f64 * interval, seed);
    cfg.burn_in = burn_in;
    cfg.sample_interval = Some(interval);
    cfg
}

#[test]
fn scalar_thermal_second_moment() {
    let (c, dc, kappa) = (8.0, 1.0, 1.0);
    let sys = scalar_thermal_system(c, dc, kappa, NoiseReading::default()).unwrap();
    let cfg = sampling_config(0.002, 3.0, 20, 0.5, 17);
    let ens = run_ensemble(&sys, &FeedbackLaw::none(), &cfg, 2000).unwrap();
    let sq: Vec<f64> = ens.sample_component(0).iter().map(|x| x * x).collect();
    let (m, se) = (stats::mean(&sq), stats::std_error(&sq));
    let exact = kappa / (c - 3.0 * dc);
    // Samples within one trajectory are correlated; allow a wider band than 3 SE.
    assert!((m - exact).abs() < 6.0 * se + 0.01 * exact, "{m} ± {se} vs {exact}");
}

#[test]
fn multizone_cost_matches_second_moment_oracle() {
    let z = ThermalZone { c_bar_o: 1.0, c_s: 0.1, kappa: 0.5, d_o: 0.15, alpha: 1.0, beta: 2.0 };
    let net = ThermalNetwork {
        zones: vec![z, ThermalZone { beta: 1.0, ..z }],
        edges: vec![ThermalEdge { i: 0, j: 1, c_bar: 0.5, d_coef: 0.1 }],
        t_o: 30.0,
        t_s: 12.0,
        t_bar: 22.0,
    };
    let phi = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.4]);
    let reading = NoiseReading::default();
    let exact = multizone_cost_exact_q2(&net, &phi, reading).unwrap();
    let settings = McSettings {
        cfg: sampling_config(0.002, 3.0, 40, 0.25, 3),
        n_traj: 1000,
        pilot_n_traj: 50,
        pilot_horizon: 2.0,
    };
    let mc = multizone_cost_mc(&net, &phi, 2.0, reading, &settings).unwrap();
    assert!((mc.mean - exact).abs() < 4.0 * mc.stderr + 0.01 * exact, "{} ± {} vs {exact}", mc.mean, mc.stderr);
    assert_eq!(mc.pilot_blowup_fraction, 0.0);
}

#[test]
fn unstable_gain_is_screened() {
    let z = ThermalZone { c_bar_o: 0.1, c_s: 0.1, kappa: 0.5, d_o: 3.0, alpha: 1.0, beta: 1.0 };
    let net = ThermalNetwork { zones: vec![z], edges: vec![], t_o: 20.0, t_s: 12.0, t_bar: 22.0 };
    assert!(multizone_cost_exact_q2(&net, &DMatrix::zeros(1, 1), NoiseReading::default()).is_err());
}
