//! Linear dynamical systems driven by additive and multiplicative noise:
//! ensemble simulation, Lyapunov and Cramér statistics, algebraic tails,
//! moment-stability thresholds and optimal linear feedback.

pub mod css;
pub mod error;
pub mod hjb;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod quad;
pub mod sde;
pub mod stats;
pub mod tails;

pub use error::{Error, Result};
pub use lyapunov::{
    estimate_cramer, finite_time_exponents, oseledets_basis, white_substitute, CramerEstimate, CramerMethod,
    LyapunovSample, OseledetsBasis,
};
pub use model::thermal::{
    balance_control, multi_zone_system, single_zone_reduction, LeakageMode, NoiseReading, ThermalEdge,
    ThermalNetwork, ThermalZone, ZoneParams, ZoneReduction,
};
pub use model::{bk_covariance, swimmer_system, Convention, CovTensor, FeedbackLaw, LinearSystem, MultNoiseSpec, NoiseKind};
pub use sde::{run_ensemble, EnsembleSummary, IntegratorConfig, PropagatorRecord, Scheme, Trajectory};
pub use tails::{hill_estimator, hill_plateau, mqp_verdict, TailReport};
pub use css::{closed_form_gain, expected_cost_at, optimize_gain, CssModel, CssResult, MomentMethod, StationaryDensity};
pub use hjb::{
    closed_form_varsigma, hjb_residual, optimal_control, riccati_multizone, riccati_swimmers, solve_riccati, CostToGo,
    HjbResidualReport, LqProblem, ScalarRiccati,
};
