//! Building thermal models: a single zone exchanging heat with the outside
//! and an air-handling unit, and a network of such zones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::noise::{Convention, CovTensor, MultNoiseSpec, NoiseKind};
use super::{FeedbackLaw, LinearSystem};
use crate::error::{ensure, Error, Result};

/// Constant control component that holds the zone at `T̄` when all noise is
/// switched off.
pub fn balance_control(t_bar: f64, t_o: f64, t_s: f64, c_bar_o: f64, c_s: f64) -> Result<f64> {
    let denom = c_s * (t_bar - t_s);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::NoControlAuthority(format!(
            "c_s·(T̄ − T_s) = {c_s}·({t_bar} − {t_s}) vanishes"
        )));
    }
    Ok(-c_bar_o * (t_bar - t_o) / denom)
}

/// Physical parameters of one zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    pub t_bar: f64,
    pub t_o: f64,
    pub t_s: f64,
    /// Mean exchange rate with the outside.
    pub c_bar_o: f64,
    /// Exchange rate with the air-handling unit at full opening.
    pub c_s: f64,
    /// Additive noise covariance κ.
    pub kappa: f64,
    /// Covariance D of the fluctuating part of the outside exchange rate.
    pub d_coef: f64,
}

/// How the outside-exchange fluctuation leaks into the additive noise of the
/// deviation `θ = T − T̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LeakageMode {
    /// Independent additive noise with covariance `κ + T_o²D`.
    #[default]
    Independent,
    /// Multiplicative noise acting on `θ − (T_o − T̄)`, fully correlated with
    /// the leaked additive part.
    Exact,
}

/// Reduced single-zone dynamics `dθ/dt = −(c0 + c1φ)θ + ξ̃ − σθ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneReduction {
    pub c0: f64,
    pub c1: f64,
    pub u_bar: f64,
    pub kappa_tilde: f64,
    /// Temperature offset multiplying σ in the leaked additive noise.
    pub leakage_offset: f64,
    pub mode: LeakageMode,
}

impl ZoneReduction {
    /// Total decay rate `c(φ) = c0 + c1φ`.
    pub fn rate(&self, phi: f64) -> f64 {
        self.c0 + self.c1 * phi
    }
}

pub fn single_zone_reduction(p: &ZoneParams, mode: LeakageMode) -> Result<ZoneReduction> {
    ensure(p.c_bar_o >= 0.0, "c_bar_o", "must be nonnegative")?;
    ensure(p.kappa >= 0.0, "kappa", "must be nonnegative")?;
    ensure(p.d_coef >= 0.0, "D", "must be nonnegative")?;
    let u_bar = balance_control(p.t_bar, p.t_o, p.t_s, p.c_bar_o, p.c_s)?;
    let leakage_offset = match mode {
        LeakageMode::Independent => p.t_o,
        LeakageMode::Exact => p.t_o - p.t_bar,
    };
    Ok(ZoneReduction {
        c0: p.c_bar_o + p.c_s * u_bar,
        c1: p.c_s * (p.t_bar - p.t_s),
        u_bar,
        kappa_tilde: p.kappa + leakage_offset * leakage_offset * p.d_coef,
        leakage_offset,
        mode,
    })
}

/// Rate of change of the zone temperature with the split control
/// `u = ū + φθ` and realized noise values σ, ξ.
pub fn zone_temperature_rate(p: &ZoneParams, u_bar: f64, phi: f64, temp: f64, sigma: f64, xi: f64) -> f64 {
    let theta = temp - p.t_bar;
    -(p.c_bar_o + sigma) * (temp - p.t_o) - p.c_s * (temp - p.t_s) * (u_bar + phi * theta) + xi
}

/// Linearized deviation dynamics with the same realized noise values; the
/// leaked additive term is `(T_o − T̄)σ`.
pub fn reduced_deviation_rate(r: &ZoneReduction, p: &ZoneParams, phi: f64, theta: f64, sigma: f64, xi: f64) -> f64 {
    -r.rate(phi) * theta - sigma * theta + (p.t_o - p.t_bar) * sigma + xi
}

/// Reading of the covariances κ and D entering the thermal models: the
/// stochastic convention and the factor relating them to variance rates of
/// the simulated noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseReading {
    pub convention: Convention,
    pub scale: f64,
}

impl Default for NoiseReading {
    fn default() -> Self {
        Self {
            convention: Convention::Kinetic,
            scale: 2.0,
        }
    }
}

/// Scalar system for the reduced zone at gain φ.
pub fn single_zone_system(
    p: &ZoneParams,
    reduction: &ZoneReduction,
    phi: f64,
    reading: NoiseReading,
) -> Result<LinearSystem> {
    ensure(reading.scale > 0.0, "scale", "must be positive")?;
    let drift = DMatrix::from_element(1, 1, -reduction.rate(phi));
    let mult = (p.d_coef > 0.0).then(|| {
        MultNoiseSpec::new(
            NoiseKind::ScalarWhite {
                d_coef: reading.scale * p.d_coef,
            },
            reading.convention,
        )
    });
    match reduction.mode {
        LeakageMode::Independent => LinearSystem::new(
            drift,
            DVector::from_element(1, reading.scale * reduction.kappa_tilde),
            mult,
        ),
        LeakageMode::Exact => LinearSystem::new(drift, DVector::from_element(1, reading.scale * p.kappa), mult)?
            .with_noise_center(DVector::from_element(1, reduction.leakage_offset)),
    }
}

/// Scalar thermal system from the decay rate directly.
pub fn scalar_thermal_system(c: f64, d_coef: f64, kappa: f64, reading: NoiseReading) -> Result<LinearSystem> {
    ensure(d_coef >= 0.0, "D", "must be nonnegative")?;
    ensure(kappa >= 0.0, "kappa", "must be nonnegative")?;
    LinearSystem::new(
        DMatrix::from_element(1, 1, -c),
        DVector::from_element(1, reading.scale * kappa),
        (d_coef > 0.0).then(|| {
            MultNoiseSpec::new(
                NoiseKind::ScalarWhite {
                    d_coef: reading.scale * d_coef,
                },
                reading.convention,
            )
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalZone {
    pub c_bar_o: f64,
    pub c_s: f64,
    pub kappa: f64,
    /// Covariance of the fluctuating outside exchange rate σ_io.
    pub d_o: f64,
    /// Control weight α_i.
    pub alpha: f64,
    /// State weight β_i.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalEdge {
    pub i: usize,
    pub j: usize,
    pub c_bar: f64,
    pub d_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalNetwork {
    pub zones: Vec<ThermalZone>,
    pub edges: Vec<ThermalEdge>,
    pub t_o: f64,
    pub t_s: f64,
    pub t_bar: f64,
}

/// One independent white channel `σ_ch(t)·B` of the network's multiplicative noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannel {
    pub matrix: DMatrix<f64>,
    pub variance: f64,
}

impl ThermalNetwork {
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.zones.len();
        ensure(n >= 1, "zones", "network needs at least one zone")?;
        for z in &self.zones {
            for (name, v) in [
                ("c_bar_o", z.c_bar_o),
                ("c_s", z.c_s),
                ("kappa", z.kappa),
                ("d_o", z.d_o),
                ("beta", z.beta),
            ] {
                ensure(v >= 0.0 && v.is_finite(), name, format!("must be finite and nonnegative, got {v}"))?;
            }
            ensure(z.alpha > 0.0 && z.alpha.is_finite(), "alpha", "control weight must be positive")?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.edges {
            ensure(e.i < n && e.j < n, "edges", format!("edge ({}, {}) references a missing zone", e.i, e.j))?;
            ensure(e.i != e.j, "edges", "self-loops are not allowed")?;
            ensure(
                seen.insert((e.i.min(e.j), e.i.max(e.j))),
                "edges",
                format!("duplicate edge ({}, {})", e.i, e.j),
            )?;
            ensure(e.c_bar >= 0.0 && e.d_coef >= 0.0, "edges", "rates must be nonnegative")?;
        }
        if self.t_bar == self.t_s {
            return Err(Error::NoControlAuthority("T̄ = T_s".into()));
        }
        for z in &self.zones {
            if z.c_s == 0.0 {
                return Err(Error::NoControlAuthority("zone with c_s = 0".into()));
            }
        }
        Ok(())
    }

    pub fn u_bar(&self, i: usize) -> Result<f64> {
        let z = &self.zones[i];
        balance_control(self.t_bar, self.t_o, self.t_s, z.c_bar_o, z.c_s)
    }

    /// Open-loop decay rate `c̄_io + c_is·ū_i`.
    pub fn c0(&self, i: usize) -> Result<f64> {
        Ok(self.zones[i].c_bar_o + self.zones[i].c_s * self.u_bar(i)?)
    }

    /// Control authority `c_is(T̄ − T_s)`.
    pub fn c1(&self, i: usize) -> f64 {
        self.zones[i].c_s * (self.t_bar - self.t_s)
    }

    pub fn input_gains(&self) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| self.c1(i))
    }

    /// Mean drift at zero feedback: Laplacian coupling plus open-loop decay.
    pub fn open_loop_drift(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = -self.c0(i)?;
        }
        for e in &self.edges {
            m[(e.i, e.i)] -= e.c_bar;
            m[(e.j, e.j)] -= e.c_bar;
            m[(e.i, e.j)] += e.c_bar;
            m[(e.j, e.i)] += e.c_bar;
        }
        Ok(m)
    }

    /// Independent multiplicative channels with variance rates multiplied by `scale`.
    pub fn channels(&self, scale: f64) -> Vec<NoiseChannel> {
        let n = self.len();
        let mut out = Vec::new();
        for (i, z) in self.zones.iter().enumerate() {
            if z.d_o > 0.0 {
                let mut b = DMatrix::zeros(n, n);
                b[(i, i)] = -1.0;
                out.push(NoiseChannel {
                    matrix: b,
                    variance: scale * z.d_o,
                });
            }
        }
        for e in &self.edges {
            if e.d_coef > 0.0 {
                let mut b = DMatrix::zeros(n, n);
                b[(e.i, e.i)] = -1.0;
                b[(e.j, e.j)] = -1.0;
                b[(e.i, e.j)] = 1.0;
                b[(e.j, e.i)] = 1.0;
                out.push(NoiseChannel {
                    matrix: b,
                    variance: scale * e.d_coef,
                });
            }
        }
        out
    }

    pub fn channel_tensor(&self, scale: f64) -> CovTensor {
        let n = self.len();
        let mut t = CovTensor::zeros(n);
        for ch in self.channels(scale) {
            for i in 0..n {
                for j in 0..n {
                    let a = ch.matrix[(i, j)];
                    if a == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        for l in 0..n {
                            let b = ch.matrix[(k, l)];
                            if b != 0.0 {
                                t.set(i, j, k, l, t.get(i, j, k, l) + ch.variance * a * b);
                            }
                        }
                    }
                }
            }
        }
        t
    }
}

/// Network dynamics with the feedback folded into the drift:
/// `m = L − diag(c0) − diag(c1)·φ`, where `L` is the mean coupling Laplacian.
pub fn multi_zone_system(net: &ThermalNetwork, phi: &FeedbackLaw, reading: NoiseReading) -> Result<LinearSystem> {
    net.validate()?;
    let n = net.len();
    let phi_m = match phi {
        FeedbackLaw::Matrix { .. } => phi.matrix(n)?,
        FeedbackLaw::Radial { .. } => phi.matrix(n)?,
    };
    let drift = net.open_loop_drift()? - DMatrix::from_diagonal(&net.input_gains()) * phi_m;
    let has_mult = !net.channels(1.0).is_empty();
    let mult = has_mult.then(|| {
        MultNoiseSpec::new(
            NoiseKind::WhiteTensor {
                cov: net.channel_tensor(reading.scale),
            },
            reading.convention,
        )
    });
    let kappa = DVector::from_fn(n, |i, _| reading.scale * net.zones[i].kappa);
    LinearSystem::new(drift, kappa, mult)
}
