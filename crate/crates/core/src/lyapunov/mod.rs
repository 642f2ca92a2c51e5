//! Finite-time Lyapunov spectra, Oseledets directions and Cramér rate functions.

pub mod cramer;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::sde::PropagatorRecord;
pub use cramer::{estimate_cramer, white_substitute, CramerEstimate, CramerMethod, WhiteSubstitute};

/// Finite-time exponents of one propagator snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    /// Sorted in decreasing order.
    pub lambdas: Vec<f64>,
    /// In the order of the re-orthonormalized frame: `frame[0]` is the growth
    /// rate of a fixed initial vector, `frame[0] + frame[1]` of an area, etc.
    pub frame: Vec<f64>,
}

impl LyapunovSample {
    pub fn sum(&self) -> f64 {
        self.frame.iter().sum()
    }
}

/// Which ordering of the exponents a statistic is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExponentOrder {
    #[default]
    Sorted,
    Frame,
}

pub fn finite_time_exponents(rec: &PropagatorRecord) -> Result<LyapunovSample> {
    ensure(rec.elapsed > 0.0, "elapsed", "propagator has not been evolved")?;
    let frame: Vec<f64> = rec.log_stretch.iter().map(|l| l / rec.elapsed).collect();
    let mut lambdas = frame.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovSample {
        t: rec.elapsed,
        lambdas,
        frame,
    })
}

/// Extracts exponent `index` from each sample.
pub fn exponent_values(samples: &[LyapunovSample], index: usize, order: ExponentOrder) -> Vec<f64> {
    samples
        .iter()
        .map(|s| match order {
            ExponentOrder::Sorted => s.lambdas[index],
            ExponentOrder::Frame => s.frame[index],
        })
        .collect()
}

/// Orthonormal directions `f_i` of `log(WᵀW)/(2t)`, ordered by decreasing
/// stretching.
#[derive(Debug, Clone, PartialEq)]
pub struct OseledetsBasis {
    pub vectors: Vec<DVector<f64>>,
    /// `1 − min_i |f_i·f_i'|` against the basis of the previous snapshot
    /// (infinite when there is none).
    pub convergence_residual: f64,
    pub converged: bool,
}

/// Residual below which successive bases count as converged.
pub const OSELEDETS_TOL: f64 = 1e-6;

fn basis_of(rec: &PropagatorRecord) -> Vec<DVector<f64>> {
    let d = rec.dim;
    let top = rec.log_stretch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u = rec.upper_matrix();
    let su = DMatrix::from_fn(d, d, |i, j| u[(i, j)] * (rec.log_stretch[i] - top).exp());
    let svd = su.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    order
        .into_iter()
        .map(|k| {
            let mut v: DVector<f64> = vt.row(k).transpose();
            // Fix the sign so the largest component is positive.
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            v
        })
        .collect()
}

/// Oseledets basis from the latest record of `history`; earlier records
/// provide the convergence residual. Non-converged bases are returned
/// with `converged = false`.
pub fn oseledets_basis(history: &[PropagatorRecord]) -> Result<OseledetsBasis> {
    let last = history
        .last()
        .ok_or_else(|| crate::error::invalid("history", "needs at least one record"))?;
    ensure(last.elapsed > 0.0, "elapsed", "propagator has not been evolved")?;
    let vectors = basis_of(last);
    let convergence_residual = match history.len() {
        1 => f64::INFINITY,
        n => {
            let prev = basis_of(&history[n - 2]);
            vectors
                .iter()
                .zip(&prev)
                .map(|(a, b)| 1.0 - a.dot(b).abs())
                .fold(0.0, f64::max)
        }
    };
    Ok(OseledetsBasis {
        vectors,
        convergence_residual,
        converged: convergence_residual < OSELEDETS_TOL,
    })
}
