//! Power-law tail estimation, analytic tail exponents and moment-stability
//! verdicts. All exponents are survival exponents: `P(|x| > X) ~ X^{−α}`, so
//! the q-th moment is finite iff `q < α`.

use nalgebra::DMatrix;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::lyapunov::OseledetsBasis;
use crate::model::Convention;

/// Minimum number of samples accepted by the Hill estimator.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub alpha_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub k_used: usize,
    pub n: usize,
    /// False when the Hill curve drifts systematically over the scanned range.
    pub power_law: bool,
    pub alpha_predicted: Option<f64>,
    pub prediction_source: Option<String>,
}

impl TailReport {
    /// Supremum of finite moment orders.
    pub fn q_max(&self) -> f64 {
        self.alpha_hat
    }

    pub fn verdict(&self, q: f64) -> bool {
        q < self.alpha_hat
    }

    pub fn with_prediction(mut self, alpha: f64, source: impl Into<String>) -> Self {
        self.alpha_predicted = Some(alpha);
        self.prediction_source = Some(source.into());
        self
    }

    /// Relative deviation of the estimate from the prediction.
    pub fn relative_error(&self) -> Option<f64> {
        self.alpha_predicted.map(|a| (self.alpha_hat - a).abs() / a.abs())
    }
}

/// Samples sorted in decreasing order with prefix sums of their logarithms.
#[derive(Debug, Clone)]
pub struct HillCurve {
    log_desc: Vec<f64>,
    prefix: Vec<f64>,
}

impl HillCurve {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.len() < MIN_SAMPLES {
            return Err(Error::InsufficientSamples(format!(
                "Hill estimator needs at least {MIN_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        ensure(
            samples.iter().all(|x| *x > 0.0 && x.is_finite()),
            "samples",
            "must be positive and finite",
        )?;
        let mut log_desc: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
        log_desc.sort_by(|a, b| b.total_cmp(a));
        if log_desc[0] == log_desc[log_desc.len() - 1] {
            return Err(Error::Degenerate("all samples are equal".into()));
        }
        let mut prefix = Vec::with_capacity(log_desc.len() + 1);
        prefix.push(0.0);
        for v in &log_desc {
            prefix.push(prefix.last().unwrap() + v);
        }
        Ok(Self { log_desc, prefix })
    }

    pub fn n(&self) -> usize {
        self.log_desc.len()
    }

    /// Hill estimate from the top `k` order statistics.
    pub fn alpha(&self, k: usize) -> f64 {
        let excess = self.prefix[k] - k as f64 * self.log_desc[k];
        k as f64 / excess
    }

    fn report(&self, k: usize, power_law: bool) -> Result<TailReport> {
        let a = self.alpha(k);
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Degenerate(format!("top {k} order statistics are tied")));
        }
        let half = 1.96 / (k as f64).sqrt();
        Ok(TailReport {
            alpha_hat: a,
            ci_low: a * (1.0 - half).max(0.0),
            ci_high: a * (1.0 + half),
            k_used: k,
            n: self.n(),
            power_law,
            alpha_predicted: None,
            prediction_source: None,
        })
    }
}

/// Hill estimator with a fixed number `k` of upper order statistics.
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<TailReport> {
    let curve = HillCurve::new(samples)?;
    ensure(
        k >= 1 && 2 * k < curve.n(),
        "k",
        format!("need 1 <= k < n/2, got k = {k}, n = {}", curve.n()),
    )?;
    curve.report(k, true)
}

/// Settings of the plateau scan over `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauScan {
    pub lo_exponent: f64,
    pub hi_exponent: f64,
    pub points: usize,
}

impl Default for PlateauScan {
    fn default() -> Self {
        Self {
            lo_exponent: 0.4,
            hi_exponent: 0.7,
            points: 40,
        }
    }
}

/// Hill estimator with `k` chosen on the flattest stretch of `α̂(k)` over
/// `k ∈ [n^0.4, n^0.7]`, scoring each grid point by the local relative slope
/// `|Δln α̂ / Δln k|` plus the relative standard error `1/√k`.
pub fn hill_plateau(samples: &[f64]) -> Result<TailReport> {
    hill_plateau_with(samples, PlateauScan::default())
}

pub fn hill_plateau_with(samples: &[f64], scan: PlateauScan) -> Result<TailReport> {
    let curve = HillCurve::new(samples)?;
    let n = curve.n() as f64;
    let k_lo = n.powf(scan.lo_exponent).ceil().max(2.0) as usize;
    let k_hi = (n.powf(scan.hi_exponent).floor() as usize).min(curve.n() / 2 - 1);
    if k_hi <= k_lo + 2 {
        return curve.report(k_lo.min(curve.n() / 2 - 1).max(1), true);
    }
    let mut ks: Vec<usize> = (0..scan.points.max(3))
        .map(|i| {
            let f = i as f64 / (scan.points.max(3) - 1) as f64;
            ((k_lo as f64).ln() * (1.0 - f) + (k_hi as f64).ln() * f).exp().round() as usize
        })
        .collect();
    ks.dedup();
    let alphas: Vec<f64> = ks.iter().map(|&k| curve.alpha(k)).collect();
    let mut best = (f64::INFINITY, ks[0]);
    for i in 0..ks.len() {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(ks.len() - 1));
        let slope = (alphas[b].ln() - alphas[a].ln()) / ((ks[b] as f64).ln() - (ks[a] as f64).ln());
        let score = slope.abs() + 1.0 / (ks[i] as f64).sqrt();
        if score < best.0 {
            best = (score, ks[i]);
        }
    }
    let a_lo = curve.alpha(ks[0]);
    let a_hi = curve.alpha(*ks.last().unwrap());
    let drift = (a_lo - a_hi).abs() / a_hi;
    curve.report(best.1, drift <= 3.0 / (ks[0] as f64).sqrt())
}

fn no_density(msg: String) -> Error {
    Error::NoStationaryDensity(msg)
}

/// Survival exponent of the swimmer separation `r`: `2φ/((d−1)D) − d`.
pub fn analytic_tail_swimmers(phi: f64, d: usize, d_coef: f64) -> Result<f64> {
    ensure(d >= 2, "d", "swimmer tails need d >= 2")?;
    ensure(d_coef > 0.0, "D", "must be positive")?;
    let df = d as f64;
    let bound = df * (df - 1.0) * d_coef / 2.0;
    if phi <= bound {
        return Err(no_density(format!("φ = {phi} does not exceed d(d−1)D/2 = {bound}")));
    }
    Ok(2.0 * phi / ((df - 1.0) * d_coef) - df)
}

/// Survival exponent `c/D − 1` of the scalar thermal deviation.
pub fn analytic_tail_thermal(c: f64, d_coef: f64) -> Result<f64> {
    ensure(d_coef > 0.0, "D", "must be positive")?;
    if c <= d_coef {
        return Err(no_density(format!("c = {c} does not exceed D = {d_coef}")));
    }
    Ok(c / d_coef - 1.0)
}

/// Exact survival exponent of `dθ = −cθdt + σθ + ξ` with white σ of variance
/// rate `v` interpreted under `convention`: `1 + 2c/v − 2a`.
pub fn convention_tail_scalar(c: f64, v: f64, convention: Convention) -> f64 {
    1.0 + 2.0 * c / v - 2.0 * convention.weight()
}

/// Tail exponent from Cramér statistics of the stretching rate:
/// `2(φ_eff − λ̄)·S″(λ̄)`.
pub fn predicted_tail_cramer(phi_eff: f64, lambda_bar: f64, curvature: f64) -> Result<f64> {
    ensure(curvature > 0.0, "curvature", "must be positive")?;
    if phi_eff <= lambda_bar {
        return Err(Error::Unstable(format!(
            "tail does not settle: φ_eff = {phi_eff} <= λ̄ = {lambda_bar}"
        )));
    }
    Ok(2.0 * (phi_eff - lambda_bar) * curvature)
}

/// Tail exponent of the projection on one Oseledets direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalTail {
    pub alpha: f64,
    pub decay_rate: f64,
    pub stable: bool,
}

/// Directional exponents `α_i = 2(f_i·(φ − m)·f_i − λ̄_i)·S″_i` for the
/// closed loop `dx = (m − φ + σ)x dt + …`.
pub fn predicted_tail_general(
    m: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    basis: &OseledetsBasis,
    lambda_bars: &[f64],
    curvatures: &[f64],
) -> Result<Vec<DirectionalTail>> {
    let d = m.nrows();
    ensure(
        phi.nrows() == d && basis.vectors.len() == d && lambda_bars.len() == d && curvatures.len() == d,
        "basis",
        "dimensions of m, φ, basis, exponents and curvatures must agree",
    )?;
    let k = phi - m;
    Ok(basis
        .vectors
        .iter()
        .zip(lambda_bars.iter().zip(curvatures))
        .map(|(f, (lb, s2))| {
            let rate = f.dot(&(&k * f));
            let alpha = 2.0 * (rate - lb) * s2;
            DirectionalTail {
                alpha,
                decay_rate: rate,
                stable: alpha > 0.0,
            }
        })
        .collect())
}

/// Moment-stability verdict for one order `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MqpVerdict {
    pub q: f64,
    pub alpha: f64,
    pub stable: bool,
    pub margin: f64,
}

pub fn mqp_verdict(alpha: f64, q: f64) -> MqpVerdict {
    MqpVerdict {
        q,
        alpha,
        stable: q < alpha,
        margin: alpha - q,
    }
}

/// Smallest swimmer gain with finite q-th moment: `(d+q)(d−1)D/2`.
pub fn swimmer_mqp_threshold(d: usize, d_coef: f64, q: f64) -> f64 {
    let df = d as f64;
    (df + q) * (df - 1.0) * d_coef / 2.0
}

/// Thermal gain thresholds for the q-th moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalThresholds {
    /// From `q < c/D − 1`: `(D(q+1) − c0)/c1`.
    pub moment: f64,
    /// `(D·max(q,2) − c0)/c1`, as commonly quoted.
    pub quoted: f64,
}

pub fn thermal_mqp_threshold(c0: f64, c1: f64, d_coef: f64, q: f64) -> Result<ThermalThresholds> {
    if c1 == 0.0 {
        return Err(Error::NoControlAuthority("c1 = 0".into()));
    }
    Ok(ThermalThresholds {
        moment: (d_coef * (q + 1.0) - c0) / c1,
        quoted: (d_coef * q.max(2.0) - c0) / c1,
    })
}

/// Running estimate of `E|x|^q` after the first `n` samples, for each `n` in `checkpoints`.
pub fn running_moments(samples: &[f64], q: f64, checkpoints: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut taken = 0;
    for &n in checkpoints {
        let n = n.min(samples.len());
        for x in &samples[taken..n] {
            acc += x.abs().powf(q);
        }
        taken = n;
        out.push(acc / n.max(1) as f64);
    }
    out
}

/// Median over independent blocks of the running q-th moment.
pub fn block_running_moments(blocks: &[Vec<f64>], q: f64, checkpoints: &[usize]) -> Vec<f64> {
    let per_block: Vec<Vec<f64>> = blocks.iter().map(|b| running_moments(b, q, checkpoints)).collect();
    (0..checkpoints.len())
        .map(|j| {
            let col: Vec<f64> = crate::stats::sorted_copy(&per_block.iter().map(|r| r[j]).collect::<Vec<_>>());
            crate::stats::quantile_sorted(&col, 0.5)
        })
        .collect()
}

/// Both tail routes for the swimmers in any numeric field; they agree
/// identically: `2(φ − d(d−1)D/2)/((d−1)D) = 2φ/((d−1)D) − d`.
pub fn swimmer_tail_routes<T: Num + Clone>(phi: T, d: T, d_coef: T) -> (T, T) {
    let two = T::one() + T::one();
    let dm1 = d.clone() - T::one();
    let lambda_bar = d.clone() * dm1.clone() * d_coef.clone() / two.clone();
    let curvature = T::one() / (dm1.clone() * d_coef.clone());
    let cramer = two.clone() * (phi.clone() - lambda_bar) * curvature;
    let density = two * phi / (dm1 * d_coef) - d;
    (cramer, density)
}
