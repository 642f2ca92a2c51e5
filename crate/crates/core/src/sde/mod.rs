//! Numerical integration of the linear SDE and of its propagator.

pub mod calibrate;
pub mod config;
pub mod engine;
pub mod ensemble;
pub mod noise;
pub mod propagator;

pub use calibrate::{calibrate_convention, CalibrationCandidate, CalibrationReport, CalibrationSettings};
pub use config::{IntegratorConfig, Scheme};
pub use engine::{evolve_propagator, integrate, integrate_indexed, propagator_snapshots, trajectory_rngs, Trajectory};
pub use ensemble::{run_ensemble, sample_steps, EnsembleSummary};
pub use noise::{sample_noise_increment, NoiseProcess};
pub use propagator::{PropagatorRecord, ORTHONORMALITY_TOL};
