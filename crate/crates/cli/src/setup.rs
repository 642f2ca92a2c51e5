//! Builds simulated systems and analysis models from a configuration.

use mqplab_core::model::thermal::{scalar_thermal_system, single_zone_system};
use mqplab_core::{
    optimize_gain, riccati_multizone, LqProblem, single_zone_reduction, swimmer_system, Convention, CovTensor, CssModel, FeedbackLaw, LinearSystem,
    MomentMethod, MultNoiseSpec, NoiseKind, NoiseReading, ThermalEdge, ThermalNetwork, ThermalZone, ZoneParams,
    ZoneReduction,
};
use nalgebra::{DMatrix, DVector};

use crate::config::{ExperimentConfig, ModelKind, NoiseKindName};
use crate::error::{CliError, Stage};

/// A feedback gain to simulate at.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Gain {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Gain::Scalar(p) => Some(*p),
            Gain::Matrix(_) => None,
        }
    }

    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Gain::Scalar(p) => DMatrix::identity(dim, dim) * *p,
            Gain::Matrix(m) => m.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Gain::Scalar(p) => serde_json::json!(p),
            Gain::Matrix(m) => serde_json::json!(rows(m)),
        }
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(r.len(), r.first().map_or(0, |x| x.len()), |i, j| r[i][j])
}

/// Single zone reduced to `dθ = −(c0 + c1φ)θ dt + …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleZone {
    pub c0: f64,
    pub c1: f64,
    pub d_coef: f64,
    /// Additive covariance of the reduced dynamics (including leakage).
    pub kappa: f64,
    pub physical: Option<(ZoneParams, ZoneReduction)>,
}

/// The configured model with its resolved noise reading.
#[derive(Debug, Clone)]
pub struct Setup {
    pub kind: ModelKind,
    pub dim: usize,
    pub reading: NoiseReading,
    /// Convention tag embedded in reports.
    pub convention_tag: String,
    swimmer: Option<(usize, f64, f64)>,
    single: Option<SingleZone>,
    network: Option<ThermalNetwork>,
    custom: Option<LinearSystem>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let kind = cfg.model_kind().expect("validated config has one model");
        let dim = cfg.dim().expect("validated config has a dimension");
        let reading = NoiseReading {
            convention: cfg.noise.convention.unwrap_or(Convention::Kinetic),
            scale: cfg.noise.scale.unwrap_or(2.0),
        };
        let mut setup = Self {
            kind,
            dim,
            reading,
            convention_tag: String::new(),
            swimmer: None,
            single: None,
            network: None,
            custom: None,
        };
        match kind {
            ModelKind::Swimmer => {
                let s = cfg.model.swimmer.as_ref().expect("present");
                setup.swimmer = Some((s.d.expect("validated"), s.d_coef.expect("validated"), s.kappa.expect("validated")));
                setup.convention_tag = cfg.noise.convention.unwrap_or(Convention::Stratonovich).name().to_string();
            }
            ModelKind::ThermalSingle => {
                let t = cfg.model.thermal_single.as_ref().expect("present");
                let d_coef = t.d_coef.expect("validated");
                let kappa = t.kappa.expect("validated");
                setup.single = Some(match (t.c0, t.c1) {
                    (Some(c0), Some(c1)) => SingleZone {
                        c0,
                        c1,
                        d_coef,
                        kappa,
                        physical: None,
                    },
                    _ => {
                        let p = ZoneParams {
                            t_bar: t.t_bar.expect("validated"),
                            t_o: t.t_o.expect("validated"),
                            t_s: t.t_s.expect("validated"),
                            c_bar_o: t.c_bar_o.expect("validated"),
                            c_s: t.c_s.expect("validated"),
                            kappa,
                            d_coef,
                        };
                        let r = single_zone_reduction(&p, t.leakage).stage("thermal reduction")?;
                        SingleZone {
                            c0: r.c0,
                            c1: r.c1,
                            d_coef,
                            kappa: r.kappa_tilde,
                            physical: Some((p, r)),
                        }
                    }
                });
                setup.convention_tag = format!("{}/{}", reading.convention.name(), reading.scale);
            }
            ModelKind::ThermalMulti => {
                let m = cfg.model.thermal_multi.as_ref().expect("present");
                let net = ThermalNetwork {
                    zones: m
                        .zones
                        .iter()
                        .map(|z| ThermalZone {
                            c_bar_o: z.c_bar_o.expect("validated"),
                            c_s: z.c_s.expect("validated"),
                            kappa: z.kappa,
                            d_o: z.d_o,
                            alpha: z.alpha,
                            beta: z.beta,
                        })
                        .collect(),
                    edges: m
                        .edges
                        .iter()
                        .map(|e| ThermalEdge {
                            i: e.i.expect("validated"),
                            j: e.j.expect("validated"),
                            c_bar: e.c_bar.expect("validated"),
                            d_coef: e.d_coef,
                        })
                        .collect(),
                    t_o: m.t_o.expect("validated"),
                    t_s: m.t_s.expect("validated"),
                    t_bar: m.t_bar.expect("validated"),
                };
                net.validate().stage("thermal network")?;
                setup.network = Some(net);
                setup.convention_tag = format!("{}/{}", reading.convention.name(), reading.scale);
            }
            ModelKind::Custom => {
                let c = cfg.model.custom.as_ref().expect("present");
                let drift = from_rows(c.drift.as_ref().expect("validated"));
                let additive = c
                    .additive
                    .as_ref()
                    .map(|a| DVector::from_column_slice(a))
                    .unwrap_or_else(|| DVector::zeros(dim));
                let conv = cfg.noise.convention.unwrap_or(Convention::Stratonovich);
                let n = &cfg.noise;
                let kind = match n.kind.expect("validated") {
                    NoiseKindName::None => None,
                    NoiseKindName::BatchelorKraichnan => Some(NoiseKind::BatchelorKraichnan {
                        d_coef: n.d_coef.expect("validated"),
                    }),
                    NoiseKindName::ScalarWhite => Some(NoiseKind::ScalarWhite {
                        d_coef: n.d_coef.expect("validated"),
                    }),
                    NoiseKindName::WhiteTensor => Some(NoiseKind::WhiteTensor {
                        cov: CovTensor::from_matrix(dim, &from_rows(n.cov.as_ref().expect("validated")))
                            .stage("noise covariance")?,
                    }),
                    NoiseKindName::OrnsteinUhlenbeck => Some(NoiseKind::OrnsteinUhlenbeck {
                        amplitude: from_rows(n.amplitude.as_ref().expect("validated")),
                        corr_time: n.corr_time.expect("validated"),
                    }),
                    NoiseKindName::Telegraph => {
                        let plus = from_rows(n.plus.as_ref().expect("validated"));
                        Some(NoiseKind::Telegraph {
                            minus: -&plus,
                            plus,
                            switch_rate: n.switch_rate.expect("validated"),
                        })
                    }
                };
                setup.convention_tag = match &kind {
                    None => "none".into(),
                    Some(k) if k.is_white() => conv.name().into(),
                    Some(_) => "colored".into(),
                };
                let mult = kind.map(|k| MultNoiseSpec::new(k, conv));
                setup.custom = Some(LinearSystem::new(drift, additive, mult).stage("custom model")?);
            }
        }
        Ok(setup)
    }

    pub fn swimmer(&self) -> Option<(usize, f64, f64)> {
        self.swimmer
    }

    pub fn single_zone(&self) -> Option<&SingleZone> {
        self.single.as_ref()
    }

    pub fn network(&self) -> Option<&ThermalNetwork> {
        self.network.as_ref()
    }

    /// Steady-state control model for the families with a closed-form density.
    pub fn css_model(&self) -> Option<CssModel> {
        if let Some((d, d_coef, kappa)) = self.swimmer {
            return Some(CssModel::Swimmers { d, d_coef, kappa });
        }
        self.single.as_ref().map(|z| CssModel::Thermal {
            c0: z.c0,
            c1: z.c1,
            d_coef: z.d_coef,
            kappa: z.kappa,
        })
    }

    /// Simulated system and feedback law at `gain`. Thermal gains are folded
    /// into the drift.
    pub fn system_at(&self, cfg: &ExperimentConfig, gain: &Gain) -> Result<(LinearSystem, FeedbackLaw), CliError> {
        match self.kind {
            ModelKind::Swimmer => {
                let (d, d_coef, kappa) = self.swimmer.expect("present");
                let mut sys = swimmer_system(d, d_coef, kappa).stage("swimmer model")?;
                if let Some(c) = cfg.noise.convention {
                    sys = sys.with_convention(c);
                }
                let fb = match gain {
                    Gain::Scalar(phi) => FeedbackLaw::Radial { phi: *phi },
                    Gain::Matrix(m) => FeedbackLaw::Matrix { phi: m.clone() },
                };
                Ok((sys, fb))
            }
            ModelKind::ThermalSingle => {
                let z = self.single.as_ref().expect("present");
                let phi = gain.matrix(1)[(0, 0)];
                let sys = match &z.physical {
                    Some((p, r)) => single_zone_system(p, r, phi, self.reading),
                    None => scalar_thermal_system(z.c0 + z.c1 * phi, z.d_coef, z.kappa, self.reading),
                }
                .stage("thermal model")?;
                Ok((sys, FeedbackLaw::none()))
            }
            ModelKind::ThermalMulti => {
                let net = self.network.as_ref().expect("present");
                let fb = FeedbackLaw::Matrix {
                    phi: gain.matrix(self.dim),
                };
                let sys = mqplab_core::multi_zone_system(net, &fb, self.reading).stage("thermal network")?;
                Ok((sys, FeedbackLaw::none()))
            }
            ModelKind::Custom => {
                let sys = self.custom.clone().expect("present");
                Ok((sys, FeedbackLaw::Matrix { phi: gain.matrix(self.dim) }))
            }
        }
    }

    /// Effective decay rate `φ_eff` when the closed-loop deterministic drift is
    /// `−φ_eff·I`.
    pub fn effective_decay(&self, gain: &Gain) -> Option<f64> {
        let phi = gain.scalar()?;
        match self.kind {
            ModelKind::Swimmer => Some(phi),
            ModelKind::ThermalSingle => self.single.as_ref().map(|z| z.c0 + z.c1 * phi),
            ModelKind::ThermalMulti => None,
            ModelKind::Custom => {
                let m = &self.custom.as_ref()?.drift;
                let diag = m[(0, 0)];
                let isotropic = (0..self.dim)
                    .all(|i| (0..self.dim).all(|j| m[(i, j)] == if i == j { diag } else { 0.0 }));
                isotropic.then_some(phi - diag)
            }
        }
    }

    /// Analytic survival exponent of the sampled norm at `gain`, when known.
    pub fn analytic_tail(&self, gain: &Gain) -> Option<(f64, &'static str)> {
        let phi = gain.scalar()?;
        if let Some((d, d_coef, _)) = self.swimmer {
            return mqplab_core::tails::analytic_tail_swimmers(phi, d, d_coef)
                .ok()
                .map(|a| (a, "stationary density"));
        }
        let z = self.single.as_ref()?;
        if z.d_coef == 0.0 {
            return None;
        }
        let c = z.c0 + z.c1 * phi;
        let a = mqplab_core::tails::convention_tail_scalar(c, self.reading.scale * z.d_coef, self.reading.convention);
        (a > 0.0).then_some((a, "exact exponent under the noise reading"))
    }

    /// Gains requested by the feedback table.
    pub fn gains(&self, cfg: &ExperimentConfig) -> Result<Vec<Gain>, CliError> {
        let f = &cfg.feedback;
        if let Some(m) = &f.matrix {
            return Ok(vec![Gain::Matrix(from_rows(m))]);
        }
        if let Some(s) = &f.sweep {
            return Ok(s.iter().map(|p| Gain::Scalar(*p)).collect());
        }
        if let Some(p) = f.phi {
            return Ok(vec![Gain::Scalar(p)]);
        }
        if f.optimize {
            if let Some(net) = &self.network {
                let problem = LqProblem::thermal_network(net, self.reading).stage("LQ problem")?;
                let zero = DMatrix::zeros(self.dim, self.dim);
                let cost = riccati_multizone(net, self.reading, 0.0, &zero, -cfg.analysis.hjb_horizon)
                    .stage("Riccati solve")?;
                return Ok(vec![Gain::Matrix(-problem.feedback_gain(&cost.matrix(0)))]);
            }
            let model = self
                .css_model()
                .ok_or_else(|| CliError::Failed("feedback.optimize needs a swimmer or single-zone model".into()))?;
            let res = optimize_gain(&model, cfg.analysis.q[0], cfg.analysis.beta, MomentMethod::ClosedForm)
                .stage("gain optimization")?;
            return Ok(vec![Gain::Scalar(res.phi_star)]);
        }
        Ok(vec![Gain::Scalar(0.0)])
    }
}
