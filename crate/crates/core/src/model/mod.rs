//! Linear stochastic systems `dx/dt = (m + σ(t))x + ξ(t) + u(t)` and the two
//! worked model families (swimmer pair, thermal zones).

pub mod noise;
pub mod thermal;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Error, Result};
pub use noise::{bk_covariance, Convention, CovTensor, MultNoiseSpec, NoiseKind};

/// A linear system with additive and multiplicative noise.
///
/// The multiplicative term acts on `x − noise_center` (the center defaults to
/// the origin). `friction` divides the control and the additive forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub dim: usize,
    pub drift: DMatrix<f64>,
    /// Variance rates κ_i of the independent additive noise components.
    pub additive_cov: DVector<f64>,
    pub mult_noise: Option<MultNoiseSpec>,
    pub friction: f64,
    pub noise_center: Option<DVector<f64>>,
}

impl LinearSystem {
    pub fn new(
        drift: DMatrix<f64>,
        additive_cov: DVector<f64>,
        mult_noise: Option<MultNoiseSpec>,
    ) -> Result<Self> {
        let sys = Self {
            dim: drift.nrows(),
            drift,
            additive_cov,
            mult_noise,
            friction: 1.0,
            noise_center: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        ensure(d >= 1, "dim", "must be at least 1")?;
        if self.drift.nrows() != d || self.drift.ncols() != d {
            return Err(Error::DimensionMismatch {
                name: "drift",
                expected: format!("{d}x{d}"),
                got: format!("{}x{}", self.drift.nrows(), self.drift.ncols()),
            });
        }
        ensure(self.drift.iter().all(|v| v.is_finite()), "drift", "entries must be finite")?;
        if self.additive_cov.len() != d {
            return Err(Error::DimensionMismatch {
                name: "additive_cov",
                expected: d.to_string(),
                got: self.additive_cov.len().to_string(),
            });
        }
        ensure(
            self.additive_cov.iter().all(|v| *v >= 0.0 && v.is_finite()),
            "additive_cov",
            "entries must be finite and nonnegative",
        )?;
        ensure(
            self.friction > 0.0 && self.friction.is_finite(),
            "friction",
            "must be positive",
        )?;
        if let Some(c) = &self.noise_center {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    name: "noise_center",
                    expected: d.to_string(),
                    got: c.len().to_string(),
                });
            }
        }
        if let Some(spec) = &self.mult_noise {
            spec.kind.validate(d)?;
        }
        Ok(())
    }

    pub fn with_friction(mut self, friction: f64) -> Result<Self> {
        self.friction = friction;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise_center(mut self, center: DVector<f64>) -> Result<Self> {
        self.noise_center = Some(center);
        self.validate()?;
        Ok(self)
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        if let Some(spec) = &mut self.mult_noise {
            spec.convention = convention;
        }
        self
    }

    /// The same system without additive noise.
    pub fn without_additive(&self) -> Self {
        let mut s = self.clone();
        s.additive_cov.fill(0.0);
        s
    }

    /// Closed-loop deterministic drift `m − φ/α`.
    pub fn closed_loop_drift(&self, feedback: &FeedbackLaw) -> Result<DMatrix<f64>> {
        Ok(&self.drift - feedback.matrix(self.dim)? / self.friction)
    }
}

/// Linear state feedback `u = −φx`; positive gains stabilize.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackLaw {
    Radial { phi: f64 },
    Matrix { phi: DMatrix<f64> },
}

impl FeedbackLaw {
    pub fn none() -> Self {
        FeedbackLaw::Radial { phi: 0.0 }
    }

    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        match self {
            FeedbackLaw::Radial { phi } => {
                ensure(*phi >= 0.0 && phi.is_finite(), "phi", format!("radial gain must be nonnegative, got {phi}"))?;
                Ok(DMatrix::identity(d, d) * *phi)
            }
            FeedbackLaw::Matrix { phi } => {
                if phi.nrows() != d || phi.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        name: "phi",
                        expected: format!("{d}x{d}"),
                        got: format!("{}x{}", phi.nrows(), phi.ncols()),
                    });
                }
                ensure(phi.iter().all(|v| v.is_finite()), "phi", "entries must be finite")?;
                Ok(phi.clone())
            }
        }
    }

    /// Control `u = −φx`.
    pub fn control(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-(self.matrix(x.len())? * x))
    }
}

/// Separation of an active and a passive swimmer in a Batchelor–Kraichnan
/// flow: zero drift, isotropic additive noise κ, unit friction.
pub fn swimmer_system(d: usize, d_coef: f64, kappa: f64) -> Result<LinearSystem> {
    ensure(d >= 1, "d", "must be positive")?;
    if !(2..=3).contains(&d) {
        log::warn!("swimmer model is intended for d = 2 or 3, got {d}");
    }
    ensure(kappa >= 0.0 && kappa.is_finite(), "kappa", format!("must be nonnegative, got {kappa}"))?;
    ensure(d_coef > 0.0 && d_coef.is_finite(), "D", format!("must be positive, got {d_coef}"))?;
    LinearSystem::new(
        DMatrix::zeros(d, d),
        DVector::from_element(d, kappa),
        Some(MultNoiseSpec::new(
            NoiseKind::BatchelorKraichnan { d_coef },
            Convention::Stratonovich,
        )),
    )
}
