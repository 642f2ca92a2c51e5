//! Empirical Cramér functions of finite-time exponents and their white
//! Gaussian substitutes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{Convention, MultNoiseSpec, NoiseKind};
use crate::stats::{freedman_diaconis_width, mean, sorted_copy, variance};

/// Minimum number of samples per time required by [`estimate_cramer`].
pub const MIN_SAMPLES_PER_TIME: usize = 1000;
/// Histogram cells with fewer counts at either time are not fitted.
const MIN_CELL_COUNT: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CramerMethod {
    /// `S″ = 1/(t·Var λ(t))` averaged over the times.
    #[default]
    VarianceGaussian,
    /// `−log P̂(λ|t)/t` extrapolated between the two largest times, then a
    /// weighted quadratic fit around the minimum.
    HistogramExtrapolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramerEstimate {
    pub index: usize,
    pub method: CramerMethod,
    pub lambda_grid: Vec<f64>,
    pub rate: Vec<f64>,
    /// Samples per grid cell at the largest time (zero for the Gaussian method).
    pub cell_counts: Vec<u64>,
    pub lambda_bar: f64,
    pub lambda_bar_se: f64,
    pub curvature: f64,
    pub curvature_se: f64,
    pub times: Vec<f64>,
    pub samples_per_time: Vec<usize>,
    /// RMS weighted residual of the quadratic fit (histogram method only).
    pub fit_residual: Option<f64>,
}

impl CramerEstimate {
    /// Rate function evaluated from the quadratic approximation.
    pub fn quadratic_rate(&self, lambda: f64) -> f64 {
        0.5 * self.curvature * (lambda - self.lambda_bar).powi(2)
    }
}

fn check_groups(groups: &[(f64, Vec<f64>)]) -> Result<Vec<(f64, &[f64])>> {
    let mut g: Vec<(f64, &[f64])> = groups.iter().map(|(t, v)| (*t, v.as_slice())).collect();
    g.sort_by(|a, b| a.0.total_cmp(&b.0));
    g.dedup_by(|a, b| a.0 == b.0);
    if g.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need samples at >= 2 distinct times, got {}",
            g.len()
        )));
    }
    let short: Vec<String> = g
        .iter()
        .filter(|(_, v)| v.len() < MIN_SAMPLES_PER_TIME)
        .map(|(t, v)| format!("t = {t}: {} of {MIN_SAMPLES_PER_TIME}", v.len()))
        .collect();
    if !short.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "need >= {MIN_SAMPLES_PER_TIME} samples per time ({})",
            short.join(", ")
        )));
    }
    ensure(g.iter().all(|(t, _)| *t > 0.0), "times", "must be positive")?;
    for (t, v) in &g {
        let m = mean(v);
        if variance(v) <= (1e-12 * m.abs()).powi(2) {
            return Err(Error::Degenerate(format!("zero variance of the exponent at t = {t}")));
        }
    }
    Ok(g)
}

/// Estimates the Cramér function of one exponent from its values at several
/// times, given as `(t, values)` groups.
pub fn estimate_cramer(groups: &[(f64, Vec<f64>)], index: usize, method: CramerMethod) -> Result<CramerEstimate> {
    let g = check_groups(groups)?;
    match method {
        CramerMethod::VarianceGaussian => variance_method(&g, index),
        CramerMethod::HistogramExtrapolation => histogram_method(&g, index),
    }
}

fn variance_method(g: &[(f64, &[f64])], index: usize) -> Result<CramerEstimate> {
    let per_t: Vec<(f64, f64)> = g
        .iter()
        .map(|(t, v)| {
            let s2 = 1.0 / (t * variance(v));
            (s2, s2 * (2.0 / (v.len() as f64 - 1.0)).sqrt())
        })
        .collect();
    let curvature = per_t.iter().map(|p| p.0).sum::<f64>() / per_t.len() as f64;
    let curvature_se = per_t.iter().map(|p| p.1).sum::<f64>() / per_t.len() as f64;
    let (t_last, last) = g[g.len() - 1];
    let lambda_bar = mean(last);
    let lambda_bar_se = (variance(last) / last.len() as f64).sqrt();
    let sd = 1.0 / (curvature * t_last).sqrt();
    let lambda_grid: Vec<f64> = (0..=80).map(|k| lambda_bar + sd * (k as f64 / 10.0 - 4.0)).collect();
    let rate = lambda_grid.iter().map(|l| 0.5 * curvature * (l - lambda_bar).powi(2)).collect();
    Ok(CramerEstimate {
        index,
        method: CramerMethod::VarianceGaussian,
        cell_counts: vec![0; lambda_grid.len()],
        lambda_grid,
        rate,
        lambda_bar,
        lambda_bar_se,
        curvature,
        curvature_se,
        times: g.iter().map(|p| p.0).collect(),
        samples_per_time: g.iter().map(|p| p.1.len()).collect(),
        fit_residual: None,
    })
}

fn counts_on(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<u64> {
    let mut c = vec![0u64; bins];
    for v in values {
        let b = ((v - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            c[b as usize] += 1;
        }
    }
    c
}

fn histogram_method(g: &[(f64, &[f64])], index: usize) -> Result<CramerEstimate> {
    let (t1, v1) = g[g.len() - 2];
    let (t2, v2) = g[g.len() - 1];
    let s2 = sorted_copy(v2);
    let width = freedman_diaconis_width(&s2);
    if !(width > 0.0) {
        return Err(Error::Degenerate("zero interquartile range at the largest time".into()));
    }
    let s1 = sorted_copy(v1);
    let lo = s2[0].min(s1[0]);
    let hi = s2[s2.len() - 1].max(s1[s1.len() - 1]);
    let bins = (((hi - lo) / width).ceil() as usize).max(1);
    let c1 = counts_on(v1, lo, width, bins);
    let c2 = counts_on(v2, lo, width, bins);
    let (n1, n2) = (v1.len() as f64, v2.len() as f64);
    let dt = t2 - t1;

    let centers: Vec<f64> = (0..bins).map(|b| lo + width * (b as f64 + 0.5)).collect();
    let mut rate = vec![f64::NAN; bins];
    let mut weight = vec![0.0; bins];
    for b in 0..bins {
        if c1[b] >= MIN_CELL_COUNT && c2[b] >= MIN_CELL_COUNT {
            let r1 = -(c1[b] as f64 / (n1 * width)).ln() / t1;
            let r2 = -(c2[b] as f64 / (n2 * width)).ln() / t2;
            rate[b] = (t2 * r2 - t1 * r1) / dt;
            let var = (1.0 / c1[b] as f64 + 1.0 / c2[b] as f64) / (dt * dt);
            weight[b] = 1.0 / var;
        }
    }
    let center = mean(v2);
    let spread = variance(v2).sqrt();
    let fit_cells: Vec<usize> = (0..bins)
        .filter(|&b| weight[b] > 0.0 && (centers[b] - center).abs() <= 2.0 * spread)
        .collect();
    if fit_cells.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "only {} histogram cells are populated enough to fit",
            fit_cells.len()
        )));
    }
    // Weighted least squares for S ≈ a + b·u + c·u², u = λ − center.
    let mut x = DMatrix::zeros(fit_cells.len(), 3);
    let mut y = DVector::zeros(fit_cells.len());
    for (r, &b) in fit_cells.iter().enumerate() {
        let w = weight[b].sqrt();
        let u = (centers[b] - center) / spread;
        x[(r, 0)] = w;
        x[(r, 1)] = w * u;
        x[(r, 2)] = w * u * u;
        y[r] = w * rate[b];
    }
    let xtx = x.transpose() * &x;
    let cov = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular quadratic fit".into()))?;
    let beta = &cov * (x.transpose() * &y);
    let resid = &y - &x * &beta;
    let dof = (fit_cells.len() as f64 - 3.0).max(1.0);
    let chi2 = resid.norm_squared() / dof;
    let scale2 = chi2.max(1.0);
    let c = beta[2] / (spread * spread);
    if c <= 0.0 {
        return Err(Error::Degenerate("fitted rate function is not convex".into()));
    }
    let curvature = 2.0 * c;
    let curvature_se = 2.0 * (cov[(2, 2)] * scale2).sqrt() / (spread * spread);
    let b_lin = beta[1] / spread;
    let lambda_bar = center - b_lin / (2.0 * c);
    // Delta method for −b/(2c).
    let (db, dc) = (-1.0 / (2.0 * c), b_lin / (2.0 * c * c));
    let (vb, vc, vbc) = (
        cov[(1, 1)] * scale2 / (spread * spread),
        cov[(2, 2)] * scale2 / spread.powi(4),
        cov[(1, 2)] * scale2 / spread.powi(3),
    );
    let lambda_bar_se = (db * db * vb + dc * dc * vc + 2.0 * db * dc * vbc).max(0.0).sqrt();

    let min_rate = beta[0] - b_lin * b_lin / (4.0 * c);
    let keep: Vec<usize> = (0..bins).filter(|&b| weight[b] > 0.0).collect();
    Ok(CramerEstimate {
        index,
        method: CramerMethod::HistogramExtrapolation,
        lambda_grid: keep.iter().map(|&b| centers[b]).collect(),
        rate: keep.iter().map(|&b| (rate[b] - min_rate).max(0.0)).collect(),
        cell_counts: keep.iter().map(|&b| c2[b]).collect(),
        lambda_bar,
        lambda_bar_se,
        curvature,
        curvature_se,
        times: g.iter().map(|p| p.0).collect(),
        samples_per_time: g.iter().map(|p| p.1.len()).collect(),
        fit_residual: Some(chi2.sqrt()),
    })
}

/// White Gaussian model with the same mean stretching rate and curvature as
/// an estimated Cramér function.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteSubstitute {
    /// Scalar white noise read in the Stratonovich sense, `D_eff = 1/S″(λ̄)`.
    pub spec: MultNoiseSpec,
    pub d_eff: f64,
    /// Mean stretching rate to add to the drift (`m → m + λ̄·I`).
    pub drift_offset: f64,
}

pub fn white_substitute(est: &CramerEstimate) -> Result<WhiteSubstitute> {
    ensure(
        est.curvature > 0.0 && est.curvature.is_finite(),
        "curvature",
        "must be positive",
    )?;
    let d_eff = 1.0 / est.curvature;
    Ok(WhiteSubstitute {
        spec: MultNoiseSpec::new(NoiseKind::ScalarWhite { d_coef: d_eff }, Convention::Stratonovich),
        d_eff,
        drift_offset: est.lambda_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Exact law of the scalar white exponent: λ(t) ~ N(λ̄, D/t).
    fn gaussian_groups(lambda_bar: f64, d: f64, times: &[f64], n: usize) -> Vec<(f64, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        times
            .iter()
            .map(|&t| {
                let dist = Normal::new(lambda_bar, (d / t).sqrt()).unwrap();
                (t, (0..n).map(|_| dist.sample(&mut rng)).collect())
            })
            .collect()
    }

    #[test]
    fn variance_method_recovers_curvature() {
        let g = gaussian_groups(0.0, 2.0, &[5.0, 10.0], 20_000);
        let e = estimate_cramer(&g, 0, CramerMethod::VarianceGaussian).unwrap();
        assert!((e.curvature - 0.5).abs() / 0.5 < 0.1);
        assert!(e.lambda_bar.abs() < 4.0 * e.lambda_bar_se);
        assert!(e.rate.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn histogram_method_agrees_with_variance_method() {
        let g = gaussian_groups(1.5, 1.0, &[5.0, 10.0], 50_000);
        let h = estimate_cramer(&g, 0, CramerMethod::HistogramExtrapolation).unwrap();
        let v = estimate_cramer(&g, 0, CramerMethod::VarianceGaussian).unwrap();
        assert!((h.curvature - 1.0).abs() < 0.1, "{}", h.curvature);
        let combined = (h.curvature_se.powi(2) + v.curvature_se.powi(2)).sqrt();
        assert!((h.curvature - v.curvature).abs() < 3.0 * combined);
        assert!((h.lambda_bar - 1.5).abs() < 0.05);
        assert!(h.rate.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn rejects_degenerate_and_small_inputs() {
        let flat = vec![(1.0, vec![0.3; 2000]), (2.0, vec![0.3; 2000])];
        assert!(matches!(
            estimate_cramer(&flat, 0, CramerMethod::VarianceGaussian),
            Err(Error::Degenerate(_))
        ));
        let small = gaussian_groups(0.0, 1.0, &[1.0, 2.0], 100);
        match estimate_cramer(&small, 0, CramerMethod::VarianceGaussian) {
            Err(Error::InsufficientSamples(msg)) => assert!(msg.contains("100 of 1000")),
            other => panic!("{other:?}"),
        }
        let single = gaussian_groups(0.0, 1.0, &[1.0], 2000);
        assert!(estimate_cramer(&single, 0, CramerMethod::VarianceGaussian).is_err());
    }

    #[test]
    fn substitute_round_trip() {
        let g = gaussian_groups(0.0, 2.0, &[4.0, 8.0], 20_000);
        let e = estimate_cramer(&g, 0, CramerMethod::VarianceGaussian).unwrap();
        let w = white_substitute(&e).unwrap();
        assert!((w.d_eff - 2.0).abs() / 2.0 < 0.1);
        assert!(matches!(w.spec.kind, NoiseKind::ScalarWhite { .. }));
    }
}
