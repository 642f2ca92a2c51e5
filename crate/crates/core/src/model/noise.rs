//! Multiplicative-noise specifications and white covariance tensors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Result};

/// Interpretation rule for white multiplicative noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Ito,
    Stratonovich,
    Kinetic,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::Ito, Convention::Stratonovich, Convention::Kinetic];

    /// Evaluation point of the noise inside a step: 0, ½ or 1.
    pub fn weight(self) -> f64 {
        match self {
            Convention::Ito => 0.0,
            Convention::Stratonovich => 0.5,
            Convention::Kinetic => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Ito => "ito",
            Convention::Stratonovich => "stratonovich",
            Convention::Kinetic => "kinetic",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ito" => Ok(Convention::Ito),
            "stratonovich" => Ok(Convention::Stratonovich),
            "kinetic" => Ok(Convention::Kinetic),
            other => Err(format!("unknown convention `{other}`")),
        }
    }
}

/// Rank-4 covariance rate `T(i,j,k,l)` with `E[σ_ij(t) σ_kl(t')] = T(i,j,k,l) δ(t−t')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTensor {
    d: usize,
    data: Vec<f64>,
}

impl CovTensor {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d * d * d],
        }
    }

    /// Builds a tensor from its `d²×d²` matrix form, rows indexed by `i·d+j`
    /// and columns by `k·d+l`. Rejects asymmetric or indefinite input.
    pub fn from_matrix(d: usize, m: &DMatrix<f64>) -> Result<Self> {
        let n = d * d;
        if m.nrows() != n || m.ncols() != n {
            return Err(crate::Error::DimensionMismatch {
                name: "cov",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let mut t = Self::zeros(d);
        for a in 0..n {
            for b in 0..n {
                t.data[a * n + b] = m[(a, b)];
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.d;
        self.data[((i * d + j) * d + k) * d + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let d = self.d;
        self.data[((i * d + j) * d + k) * d + l] = v;
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        let n = self.d * self.d;
        DMatrix::from_fn(n, n, |a, b| self.data[a * n + b])
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            d: self.d,
            data: self.data.iter().map(|v| v * f).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.data.iter().all(|v| v.is_finite()),
            "cov",
            "entries must be finite",
        )?;
        let m = self.as_matrix();
        let scale = m.amax().max(1e-300);
        ensure(
            (&m - m.transpose()).amax() <= 1e-12 * scale,
            "cov",
            "tensor must be symmetric under pair exchange (ij)<->(kl)",
        )?;
        ensure(
            crate::linalg::min_eigenvalue(&m) >= -1e-10 * scale,
            "cov",
            "tensor must be positive semidefinite",
        )
    }

    /// Drift correction `C_il = ½ Σ_j T(i,j,j,l)` separating the Itô and
    /// Stratonovich readings.
    pub fn stratonovich_correction(&self) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |i, l| 0.5 * (0..d).map(|j| self.get(i, j, j, l)).sum::<f64>())
    }

    /// `Σ_i T(i,i,k,l)`, the covariance of the trace with σ_kl.
    pub fn trace_contraction(&self, k: usize, l: usize) -> f64 {
        (0..self.d).map(|i| self.get(i, i, k, l)).sum()
    }
}

/// Isotropic incompressible white velocity-gradient covariance:
/// `D(d+1)(δ_ik δ_jl − (δ_ij δ_kl + δ_jk δ_il)/(d+1))`.
pub fn bk_covariance(d: usize, d_coef: f64) -> Result<CovTensor> {
    ensure(d >= 1, "d", "dimension must be positive")?;
    ensure(d_coef > 0.0 && d_coef.is_finite(), "D", format!("must be positive, got {d_coef}"))?;
    if d > 3 {
        log::warn!("Batchelor-Kraichnan covariance requested in d = {d}");
    }
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let dp1 = (d + 1) as f64;
    let mut t = CovTensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let v = d_coef
                        * dp1
                        * (delta(i, k) * delta(j, l) - (delta(i, j) * delta(k, l) + delta(j, k) * delta(i, l)) / dp1);
                    t.set(i, j, k, l, v);
                }
            }
        }
    }
    Ok(t)
}

/// Family of the random matrix σ(t).
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// White Gaussian with a general covariance tensor.
    WhiteTensor { cov: CovTensor },
    /// Isotropic incompressible white flow with intensity `D`.
    BatchelorKraichnan { d_coef: f64 },
    /// σ(t) = s(t)·I with white scalar `s` of variance rate `D`.
    ScalarWhite { d_coef: f64 },
    /// Independent Ornstein–Uhlenbeck entries with stationary standard
    /// deviations `amplitude` and correlation time `corr_time`.
    OrnsteinUhlenbeck { amplitude: DMatrix<f64>, corr_time: f64 },
    /// Dichotomous process flipping between `plus` and `minus` at `switch_rate`.
    Telegraph {
        plus: DMatrix<f64>,
        minus: DMatrix<f64>,
        switch_rate: f64,
    },
}

impl NoiseKind {
    pub fn is_white(&self) -> bool {
        matches!(
            self,
            NoiseKind::WhiteTensor { .. } | NoiseKind::BatchelorKraichnan { .. } | NoiseKind::ScalarWhite { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::WhiteTensor { .. } => "white_tensor",
            NoiseKind::BatchelorKraichnan { .. } => "batchelor_kraichnan",
            NoiseKind::ScalarWhite { .. } => "scalar_white",
            NoiseKind::OrnsteinUhlenbeck { .. } => "ornstein_uhlenbeck",
            NoiseKind::Telegraph { .. } => "telegraph",
        }
    }

    /// Covariance tensor of the white variants.
    pub fn white_tensor(&self, d: usize) -> Result<Option<CovTensor>> {
        Ok(match self {
            NoiseKind::WhiteTensor { cov } => Some(cov.clone()),
            NoiseKind::BatchelorKraichnan { d_coef } => Some(bk_covariance(d, *d_coef)?),
            NoiseKind::ScalarWhite { d_coef } => {
                let mut t = CovTensor::zeros(d);
                for i in 0..d {
                    for k in 0..d {
                        t.set(i, i, k, k, *d_coef);
                    }
                }
                Some(t)
            }
            _ => None,
        })
    }

    /// Multiplies σ by `f`.
    pub fn scaled(&self, f: f64) -> NoiseKind {
        match self {
            NoiseKind::WhiteTensor { cov } => NoiseKind::WhiteTensor { cov: cov.scaled(f * f) },
            NoiseKind::BatchelorKraichnan { d_coef } => NoiseKind::BatchelorKraichnan { d_coef: d_coef * f * f },
            NoiseKind::ScalarWhite { d_coef } => NoiseKind::ScalarWhite { d_coef: d_coef * f * f },
            NoiseKind::OrnsteinUhlenbeck { amplitude, corr_time } => NoiseKind::OrnsteinUhlenbeck {
                amplitude: amplitude * f,
                corr_time: *corr_time,
            },
            NoiseKind::Telegraph {
                plus,
                minus,
                switch_rate,
            } => NoiseKind::Telegraph {
                plus: plus * f,
                minus: minus * f,
                switch_rate: *switch_rate,
            },
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let square = |name: &'static str, m: &DMatrix<f64>| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(crate::Error::DimensionMismatch {
                    name,
                    expected: format!("{d}x{d}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            ensure(m.iter().all(|v| v.is_finite()), name, "entries must be finite")
        };
        match self {
            NoiseKind::WhiteTensor { cov } => {
                if cov.dim() != d {
                    return Err(crate::Error::DimensionMismatch {
                        name: "cov",
                        expected: d.to_string(),
                        got: cov.dim().to_string(),
                    });
                }
                cov.validate()
            }
            NoiseKind::BatchelorKraichnan { d_coef } | NoiseKind::ScalarWhite { d_coef } => {
                ensure(*d_coef > 0.0 && d_coef.is_finite(), "D", format!("must be positive, got {d_coef}"))
            }
            NoiseKind::OrnsteinUhlenbeck { amplitude, corr_time } => {
                square("amplitude", amplitude)?;
                ensure(amplitude.iter().all(|v| *v >= 0.0), "amplitude", "standard deviations must be nonnegative")?;
                ensure(*corr_time > 0.0 && corr_time.is_finite(), "corr_time", "must be positive")
            }
            NoiseKind::Telegraph {
                plus,
                minus,
                switch_rate,
            } => {
                square("plus", plus)?;
                square("minus", minus)?;
                ensure(*switch_rate > 0.0 && switch_rate.is_finite(), "switch_rate", "must be positive")?;
                let scale = plus.amax().max(minus.amax()).max(1e-300);
                if (plus + minus).amax() > 1e-12 * scale {
                    return Err(invalid("minus", "telegraph states must average to zero (minus = -plus)"));
                }
                Ok(())
            }
        }
    }
}

/// Multiplicative noise together with the convention used for white variants.
#[derive(Debug, Clone, PartialEq)]
pub struct MultNoiseSpec {
    pub kind: NoiseKind,
    pub convention: Convention,
}

impl MultNoiseSpec {
    pub fn new(kind: NoiseKind, convention: Convention) -> Self {
        Self { kind, convention }
    }

    /// Drift matrix added to the Stratonovich-form dynamics so that the
    /// integrated process follows `self.convention`: `(2a−1)·C` with `a` the
    /// convention weight and `C` the Itô–Stratonovich correction. Zero for
    /// colored noise.
    pub fn stratonovich_form_drift(&self, d: usize) -> Result<DMatrix<f64>> {
        match self.kind.white_tensor(d)? {
            Some(t) => Ok(t.stratonovich_correction() * (2.0 * self.convention.weight() - 1.0)),
            None => Ok(DMatrix::zeros(d, d)),
        }
    }

    /// Drift matrix added to the Itô-form dynamics: `2a·C`.
    pub fn ito_form_drift(&self, d: usize) -> Result<DMatrix<f64>> {
        match self.kind.white_tensor(d)? {
            Some(t) => Ok(t.stratonovich_correction() * (2.0 * self.convention.weight())),
            None => Ok(DMatrix::zeros(d, d)),
        }
    }
}
