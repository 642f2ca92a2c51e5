//! Sampling of the multiplicative noise increments `ΔΣ = ∫σ(t)dt` over one step.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{psd_factor, to_row_major};
use crate::model::{MultNoiseSpec, NoiseKind};

/// Immutable per-system noise description, prepared once for a given `dt`.
#[derive(Debug, Clone)]
pub(crate) enum NoiseTemplate {
    None,
    /// ΔΣ = √dt·L·z with `L` a `d²×rank` row-major factor.
    White { factor: Vec<f64>, rank: usize },
    /// σ = s·I with `s` white; `std = √(D·dt)`.
    Scalar { std: f64 },
    Ou { amplitude: Vec<f64>, decay: f64, innovation: f64 },
    Telegraph { plus: Vec<f64>, flip_prob: f64 },
}

impl NoiseTemplate {
    pub(crate) fn new(spec: Option<&MultNoiseSpec>, d: usize, dt: f64) -> Result<Self> {
        let Some(spec) = spec else {
            return Ok(NoiseTemplate::None);
        };
        Ok(match &spec.kind {
            NoiseKind::ScalarWhite { d_coef } => NoiseTemplate::Scalar {
                std: (d_coef * dt).sqrt(),
            },
            NoiseKind::WhiteTensor { .. } | NoiseKind::BatchelorKraichnan { .. } => {
                let t = spec.kind.white_tensor(d)?.expect("white variant");
                let l = psd_factor(&t.as_matrix(), 1e-12) * dt.sqrt();
                let rank = l.ncols();
                let mut factor = Vec::with_capacity(d * d * rank);
                for a in 0..d * d {
                    for b in 0..rank {
                        factor.push(l[(a, b)]);
                    }
                }
                NoiseTemplate::White { factor, rank }
            }
            NoiseKind::OrnsteinUhlenbeck { amplitude, corr_time } => {
                let decay = (-dt / corr_time).exp();
                NoiseTemplate::Ou {
                    amplitude: to_row_major(amplitude),
                    decay,
                    innovation: (1.0 - decay * decay).sqrt(),
                }
            }
            NoiseKind::Telegraph { plus, switch_rate, .. } => NoiseTemplate::Telegraph {
                plus: to_row_major(plus),
                flip_prob: 0.5 * (1.0 - (-2.0 * switch_rate * dt).exp()),
            },
        })
    }
}

/// Running state of the multiplicative noise along one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseProcess {
    template: NoiseTemplate,
    d: usize,
    dt: f64,
    /// Current value of σ for colored variants (row-major), or the sign of
    /// the telegraph state.
    state: Vec<f64>,
    z: Vec<f64>,
}

impl NoiseProcess {
    pub fn new<R: Rng + ?Sized>(spec: &MultNoiseSpec, d: usize, dt: f64, rng: &mut R) -> Result<Self> {
        spec.kind.validate(d)?;
        Self::from_template(NoiseTemplate::new(Some(spec), d, dt)?, d, dt, rng)
    }

    pub(crate) fn from_template<R: Rng + ?Sized>(template: NoiseTemplate, d: usize, dt: f64, rng: &mut R) -> Result<Self> {
        let (state, z) = match &template {
            NoiseTemplate::None | NoiseTemplate::Scalar { .. } => (Vec::new(), Vec::new()),
            NoiseTemplate::White { rank, .. } => (Vec::new(), vec![0.0; *rank]),
            NoiseTemplate::Ou { amplitude, .. } => (
                amplitude.iter().map(|a| a * rng.sample::<f64, _>(StandardNormal)).collect(),
                Vec::new(),
            ),
            NoiseTemplate::Telegraph { .. } => (vec![if rng.random::<bool>() { 1.0 } else { -1.0 }], Vec::new()),
        };
        Ok(Self {
            template,
            d,
            dt,
            state,
            z,
        })
    }

    /// Writes the next increment into `out` (row-major `d×d`) and advances
    /// the process. Returns `false` when there is no multiplicative noise.
    pub fn next_into<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) -> bool {
        let d = self.d;
        match &self.template {
            NoiseTemplate::None => {
                out.fill(0.0);
                false
            }
            NoiseTemplate::Scalar { std } => {
                out.fill(0.0);
                let v = std * rng.sample::<f64, _>(StandardNormal);
                for i in 0..d {
                    out[i * d + i] = v;
                }
                true
            }
            NoiseTemplate::White { factor, rank } => {
                for zi in self.z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (a, o) in out.iter_mut().enumerate() {
                    let row = &factor[a * rank..(a + 1) * rank];
                    *o = row.iter().zip(&self.z).map(|(l, z)| l * z).sum();
                }
                true
            }
            NoiseTemplate::Ou {
                amplitude,
                decay,
                innovation,
            } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.state[k] * self.dt;
                    self.state[k] = self.state[k] * decay
                        + amplitude[k] * innovation * rng.sample::<f64, _>(StandardNormal);
                }
                true
            }
            NoiseTemplate::Telegraph { plus, flip_prob } => {
                let s = self.state[0] * self.dt;
                for (o, p) in out.iter_mut().zip(plus) {
                    *o = s * p;
                }
                if rng.random::<f64>() < *flip_prob {
                    self.state[0] = -self.state[0];
                }
                true
            }
        }
    }
}

/// Draws one increment of the multiplicative noise of `spec` over `dt`,
/// advancing `process`.
pub fn sample_noise_increment<R: Rng + ?Sized>(process: &mut NoiseProcess, rng: &mut R) -> DMatrix<f64> {
    let d = process.d;
    let mut out = vec![0.0; d * d];
    process.next_into(rng, &mut out);
    DMatrix::from_row_slice(d, d, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Convention;
    use crate::quad::integrate;
    use crate::stats::{mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sums(spec: &MultNoiseSpec, d: usize, dt: f64, steps: usize, reps: usize, entry: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..reps)
            .map(|_| {
                let mut p = NoiseProcess::new(spec, d, dt, &mut rng).unwrap();
                let mut buf = vec![0.0; d * d];
                (0..steps)
                    .map(|_| {
                        p.next_into(&mut rng, &mut buf);
                        buf[entry]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn scalar_white_sum_variance() {
        let spec = MultNoiseSpec::new(NoiseKind::ScalarWhite { d_coef: 1.5 }, Convention::Ito);
        let s = sums(&spec, 1, 0.01, 200, 4000, 0);
        let v = variance(&s);
        let expected = 1.5 * 2.0;
        let se = expected * (2.0 / (s.len() as f64 - 1.0)).sqrt();
        assert!((v - expected).abs() < 3.0 * se, "{v}");
    }

    #[test]
    fn bk_increment_covariance() {
        let spec = MultNoiseSpec::new(NoiseKind::BatchelorKraichnan { d_coef: 1.0 }, Convention::Stratonovich);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = NoiseProcess::new(&spec, 2, 0.5, &mut rng).unwrap();
        let n = 40000;
        let mut acc = [0.0f64; 3];
        let mut buf = vec![0.0; 4];
        for _ in 0..n {
            p.next_into(&mut rng, &mut buf);
            acc[0] += buf[0] * buf[0];
            acc[1] += buf[1] * buf[1];
            acc[2] += buf[0] * buf[3];
        }
        // T(0,0,0,0) = D(d−1) = 1, T(0,1,0,1) = D(d+1)·1 = 3, T(0,0,1,1) = −1.
        let est: Vec<f64> = acc.iter().map(|a| a / n as f64 / 0.5).collect();
        assert!((est[0] - 1.0).abs() < 0.05, "{est:?}");
        assert!((est[1] - 3.0).abs() < 0.15, "{est:?}");
        assert!((est[2] + 1.0).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn ou_integrated_covariance_approaches_white_limit() {
        // For OU the variance of ∫_0^T σ is 2a²τ(T − τ(1 − e^{−T/τ})).
        let (a, tau, t_total, dt) = (2.0, 0.05, 2.0, 0.005);
        let spec = MultNoiseSpec::new(
            NoiseKind::OrnsteinUhlenbeck {
                amplitude: DMatrix::from_element(1, 1, a),
                corr_time: tau,
            },
            Convention::Stratonovich,
        );
        let s = sums(&spec, 1, dt, (t_total / dt) as usize, 4000, 0);
        let v = variance(&s);
        let oracle = 2.0
            * integrate(
                |u| (t_total - u) * a * a * (-u / tau).exp(),
                0.0,
                t_total,
                1e-12,
                1e-12,
            )
            .value;
        let se = oracle * (2.0 / 3999.0f64).sqrt();
        // Left-point discretization adds O((dt/τ)²) bias.
        assert!((v - oracle).abs() < 3.0 * se + 0.01 * oracle, "{v} vs {oracle}");
        let white = 2.0 * a * a * tau * t_total;
        assert!((oracle - white).abs() / white < 0.03);
    }

    #[test]
    fn telegraph_time_average_vanishes() {
        let plus = DMatrix::from_element(1, 1, 3.0);
        let spec = MultNoiseSpec::new(
            NoiseKind::Telegraph {
                minus: -&plus,
                plus,
                switch_rate: 5.0,
            },
            Convention::Stratonovich,
        );
        let s = sums(&spec, 1, 0.01, 20000, 1, 0);
        assert!((s[0] / 200.0).abs() < 0.15, "{}", s[0] / 200.0);
        let many = sums(&spec, 1, 0.01, 100, 2000, 0);
        assert!(mean(&many).abs() < 0.05);
    }
}
