//! Finite-horizon optimal control with a quadratic cost-to-go `S = xᵀς(t)x + s(t)`.
//!
//! For `dx = (Ax + Bu)dt + σx dt + ξ dt` (A in Itô form) and running cost
//! `xᵀQx + uᵀRu`, the ansatz turns the HJB equation into
//! `−ς̇ = Q + Aᵀς + ςA − ςBR⁻¹Bᵀς + 𝒯*(ς)`, `−ṡ = Σ κ_i ς_ii`,
//! where `𝒯*(ς)_jl = Σ_ik T(i,j,k,l)ς_ik` and `u* = −R⁻¹Bᵀς x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::model::thermal::{multi_zone_system, NoiseReading, ThermalNetwork};
use crate::model::{swimmer_system, CovTensor, FeedbackLaw, LinearSystem};

/// Steps of the fixed-step backward integration.
pub const RICCATI_STEPS: usize = 10_000;
/// Magnitude at which the backward solution is declared to escape.
pub const ESCAPE_CEILING: f64 = 1e12;

/// A linear-quadratic control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub dim: usize,
    /// Itô-form drift at zero control.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub tensor: Option<CovTensor>,
    /// Additive variance rates.
    pub kappa: DVector<f64>,
    r_inv: DMatrix<f64>,
}

impl LqProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        r: DMatrix<f64>,
        q: DMatrix<f64>,
        tensor: Option<CovTensor>,
        kappa: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        ensure(a.is_square() && n >= 1, "a", "must be square")?;
        ensure(b.nrows() == n, "b", "row count must match the state")?;
        let m = b.ncols();
        ensure(r.nrows() == m && r.ncols() == m, "r", "must be square with one row per control")?;
        ensure(q.nrows() == n && q.ncols() == n, "q", "must match the state")?;
        ensure(kappa.len() == n, "kappa", "must match the state")?;
        if let Some(t) = &tensor {
            ensure(t.dim() == n, "tensor", "must match the state")?;
        }
        let r_inv = r
            .clone()
            .cholesky()
            .ok_or_else(|| invalid("r", "control weight must be positive definite"))?
            .inverse();
        Ok(Self { dim: n, a, b, r, q, tensor, kappa, r_inv })
    }

    /// Problem for a simulated system with control entering as `B u / friction`.
    pub fn from_system(sys: &LinearSystem, b: DMatrix<f64>, r: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let d = sys.dim;
        let (tensor, corr) = match &sys.mult_noise {
            None => (None, DMatrix::zeros(d, d)),
            Some(spec) => {
                let t = spec
                    .kind
                    .white_tensor(d)?
                    .ok_or_else(|| invalid("mult_noise", "quadratic cost-to-go needs white noise"))?;
                (Some(t), spec.ito_form_drift(d)?)
            }
        };
        ensure(sys.noise_center.is_none(), "noise_center", "must be absent")?;
        let kappa = &sys.additive_cov / sys.friction.powi(2);
        Self::new(&sys.drift + corr, b / sys.friction, r, q, tensor, kappa)
    }

    /// Swimmer pair with unit control weight and state weight β.
    pub fn swimmers(d: usize, d_coef: f64, kappa: f64, beta: f64) -> Result<Self> {
        let sys = swimmer_system(d, d_coef, kappa)?;
        Self::from_system(
            &sys,
            DMatrix::identity(d, d),
            DMatrix::identity(d, d),
            DMatrix::identity(d, d) * beta,
        )
    }

    /// Thermal network with the opening deviation `ũ_i` as control:
    /// `B = −diag(c1)`, `R = diag(α)`, `Q = diag(β)`.
    pub fn thermal_network(net: &ThermalNetwork, reading: NoiseReading) -> Result<Self> {
        let sys = multi_zone_system(net, &FeedbackLaw::none(), reading)?;
        let b = -DMatrix::from_diagonal(&net.input_gains());
        let r = DMatrix::from_fn(net.len(), net.len(), |i, j| if i == j { net.zones[i].alpha } else { 0.0 });
        let q = DMatrix::from_fn(net.len(), net.len(), |i, j| if i == j { net.zones[i].beta } else { 0.0 });
        Self::from_system(&sys, b, r, q)
    }

    /// Quadratic sink weights `γ_i = (BR⁻¹Bᵀ)_ii / 2`.
    pub fn gamma(&self) -> DVector<f64> {
        let g = &self.b * &self.r_inv * self.b.transpose();
        DVector::from_fn(self.dim, |i, _| 0.5 * g[(i, i)])
    }

    /// `𝒯*(P)_jl = Σ_ik T(i,j,k,l) P_ik`.
    pub fn noise_adjoint(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n);
        if let Some(t) = &self.tensor {
            for i in 0..n {
                for k in 0..n {
                    let pik = p[(i, k)];
                    if pik == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        for l in 0..n {
                            out[(j, l)] += t.get(i, j, k, l) * pik;
                        }
                    }
                }
            }
        }
        out
    }

    /// Right-hand side of `−ς̇`.
    pub fn riccati_rhs(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let at_p = self.a.transpose() * p;
        let pb = p * &self.b;
        &self.q + &at_p + at_p.transpose() - &pb * &self.r_inv * pb.transpose() + self.noise_adjoint(p)
    }

    /// Right-hand side of `−ṡ`.
    pub fn offset_rate(&self, p: &DMatrix<f64>) -> f64 {
        (0..self.dim).map(|i| self.kappa[i] * p[(i, i)]).sum()
    }

    /// State feedback `K = R⁻¹Bᵀς` with `u* = −Kx`.
    pub fn feedback_gain(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.r_inv * self.b.transpose() * p
    }
}

/// Quadratic cost-to-go sampled on an increasing uniform time grid ending at `t_f`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostToGo {
    /// `S = ς(t)|x|² + s(t)` for a state of dimension `dim`.
    ScalarQuadratic {
        dim: usize,
        times: Vec<f64>,
        varsigma: Vec<f64>,
        s: Vec<f64>,
        error_estimate: f64,
    },
    /// `S = xᵀς(t)x + s(t)`.
    MatrixQuadratic {
        times: Vec<f64>,
        varsigma: Vec<DMatrix<f64>>,
        s: Vec<f64>,
        error_estimate: f64,
    },
}

impl CostToGo {
    pub fn times(&self) -> &[f64] {
        match self {
            CostToGo::ScalarQuadratic { times, .. } | CostToGo::MatrixQuadratic { times, .. } => times,
        }
    }

    pub fn offsets(&self) -> &[f64] {
        match self {
            CostToGo::ScalarQuadratic { s, .. } | CostToGo::MatrixQuadratic { s, .. } => s,
        }
    }

    pub fn len(&self) -> usize {
        self.times().len()
    }

    pub fn is_empty(&self) -> bool {
        self.times().is_empty()
    }

    pub fn dim(&self) -> usize {
        match self {
            CostToGo::ScalarQuadratic { dim, .. } => *dim,
            CostToGo::MatrixQuadratic { varsigma, .. } => varsigma[0].nrows(),
        }
    }

    /// Estimated global error of the coefficients from a step-halving comparison.
    pub fn error_estimate(&self) -> f64 {
        match self {
            CostToGo::ScalarQuadratic { error_estimate, .. } | CostToGo::MatrixQuadratic { error_estimate, .. } => {
                *error_estimate
            }
        }
    }

    /// Coefficient matrix at grid node `k`.
    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        match self {
            CostToGo::ScalarQuadratic { dim, varsigma, .. } => DMatrix::identity(*dim, *dim) * varsigma[k],
            CostToGo::MatrixQuadratic { varsigma, .. } => varsigma[k].clone(),
        }
    }

    /// Coefficient matrix at time `t`, linearly interpolated between nodes.
    pub fn matrix_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let times = self.times();
        let (t0, tf) = (times[0], times[times.len() - 1]);
        if !(t >= t0 && t <= tf) {
            return Err(invalid("t", format!("{t} outside [{t0}, {tf}]")));
        }
        let h = (tf - t0) / (times.len() - 1) as f64;
        let k = (((t - t0) / h).floor() as usize).min(times.len() - 2);
        let w = (t - times[k]) / h;
        Ok(self.matrix(k) * (1.0 - w) + self.matrix(k + 1) * w)
    }

    /// Scalar ς path, or the (0,0) entries in the matrix case.
    pub fn varsigma_path(&self) -> Vec<f64> {
        match self {
            CostToGo::ScalarQuadratic { varsigma, .. } => varsigma.clone(),
            CostToGo::MatrixQuadratic { varsigma, .. } => varsigma.iter().map(|p| p[(0, 0)]).collect(),
        }
    }

    /// Largest asymmetry `|ς − ςᵀ|` along the path.
    pub fn max_asymmetry(&self) -> f64 {
        match self {
            CostToGo::ScalarQuadratic { .. } => 0.0,
            CostToGo::MatrixQuadratic { varsigma, .. } => varsigma
                .iter()
                .map(|p| (p - p.transpose()).amax())
                .fold(0.0, f64::max),
        }
    }
}

/// Node values of a backward RK4 solve, ordered by increasing time.
struct BackwardPath {
    p: Vec<DMatrix<f64>>,
    s: Vec<f64>,
}

fn integrate_backward<F, G>(rhs: &F, rate: &G, p_f: &DMatrix<f64>, s_f: f64, t0: f64, t_f: f64, n: usize) -> Result<BackwardPath>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    G: Fn(&DMatrix<f64>) -> f64,
{
    let h = (t_f - t0) / n as f64;
    let mut p = p_f.clone();
    let mut s = s_f;
    let mut ps = Vec::with_capacity(n + 1);
    let mut ss = Vec::with_capacity(n + 1);
    ps.push(p.clone());
    ss.push(s);
    for k in 0..n {
        let k1 = rhs(&p);
        let p2 = &p + &k1 * (0.5 * h);
        let k2 = rhs(&p2);
        let p3 = &p + &k2 * (0.5 * h);
        let k3 = rhs(&p3);
        let p4 = &p + &k3 * h;
        let k4 = rhs(&p4);
        s += h / 6.0 * (rate(&p) + 2.0 * rate(&p2) + 2.0 * rate(&p3) + rate(&p4));
        p += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        p = (&p + p.transpose()) * 0.5;
        if !p.iter().all(|v| v.is_finite() && v.abs() < ESCAPE_CEILING) {
            return Err(Error::Unstable(format!(
                "cost-to-go escapes near t = {}",
                t_f - (k + 1) as f64 * h
            )));
        }
        ps.push(p.clone());
        ss.push(s);
    }
    ps.reverse();
    ss.reverse();
    Ok(BackwardPath { p: ps, s: ss })
}

fn solve_with_estimate<F, G>(rhs: F, rate: G, p_f: &DMatrix<f64>, s_f: f64, t0: f64, t_f: f64) -> Result<(Vec<f64>, BackwardPath, f64)>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    G: Fn(&DMatrix<f64>) -> f64,
{
    ensure(t0 < t_f, "t0", "must precede t_f")?;
    let n = RICCATI_STEPS;
    let fine = integrate_backward(&rhs, &rate, p_f, s_f, t0, t_f, n)?;
    let coarse = integrate_backward(&rhs, &rate, p_f, s_f, t0, t_f, n / 2)?;
    let err = coarse
        .p
        .iter()
        .enumerate()
        .map(|(k, pc)| (&fine.p[2 * k] - pc).amax())
        .fold(0.0, f64::max)
        / 15.0;
    let h = (t_f - t0) / n as f64;
    let mut times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * h).collect();
    times[n] = t_f;
    Ok((times, fine, err))
}

/// Backward solve of the general problem from `ς(t_f) = p_f`, `s(t_f) = s_f`.
pub fn solve_riccati(problem: &LqProblem, p_f: &DMatrix<f64>, s_f: f64, t0: f64, t_f: f64) -> Result<CostToGo> {
    let n = problem.dim;
    ensure(p_f.nrows() == n && p_f.ncols() == n, "S_f", "must match the state")?;
    ensure(p_f == &p_f.transpose(), "S_f", "terminal coefficients must be symmetric")?;
    let (times, path, err) = solve_with_estimate(
        |p| problem.riccati_rhs(p),
        |p| problem.offset_rate(p),
        p_f,
        s_f,
        t0,
        t_f,
    )?;
    let mut varsigma = path.p;
    let last = varsigma.len() - 1;
    varsigma[last] = p_f.clone();
    Ok(CostToGo::MatrixQuadratic { times, varsigma, s: path.s, error_estimate: err })
}

/// Coefficient `D(d+2)(d−1)` of the swimmer Riccati equation.
fn swimmer_growth(d: usize, d_coef: f64) -> f64 {
    let df = d as f64;
    d_coef * (df + 2.0) * (df - 1.0)
}

/// Swimmer cost-to-go `ς(t)r² + s(t)`: `−ς̇ = β + D(d+2)(d−1)ς − ς²`, `ṡ = −dκς`.
pub fn riccati_swimmers(d: usize, d_coef: f64, kappa: f64, beta: f64, s_f: f64, t_f: f64, t0: f64) -> Result<CostToGo> {
    ensure(d >= 1, "d", "must be positive")?;
    ensure(d_coef >= 0.0, "D", "must be nonnegative")?;
    ensure(kappa >= 0.0, "kappa", "must be nonnegative")?;
    ensure(beta >= 0.0, "beta", "must be nonnegative")?;
    let b = swimmer_growth(d, d_coef);
    let dk = d as f64 * kappa;
    let p_f = DMatrix::from_element(1, 1, s_f);
    let (times, path, err) = solve_with_estimate(
        |p| DMatrix::from_element(1, 1, beta + b * p[(0, 0)] - p[(0, 0)] * p[(0, 0)]),
        |p| dk * p[(0, 0)],
        &p_f,
        0.0,
        t0,
        t_f,
    )?;
    let mut varsigma: Vec<f64> = path.p.iter().map(|p| p[(0, 0)]).collect();
    let last = varsigma.len() - 1;
    varsigma[last] = s_f;
    Ok(CostToGo::ScalarQuadratic { dim: d, times, varsigma, s: path.s, error_estimate: err })
}

/// `ς(t) = ½(B + √(4β+B²)·tanh((t1−t)/2·√(4β+B²)))` with `B = D(d+2)(d−1)`.
pub fn closed_form_varsigma(t: f64, t1: f64, d: usize, d_coef: f64, beta: f64) -> f64 {
    let b = swimmer_growth(d, d_coef);
    let w = (4.0 * beta + b * b).sqrt();
    0.5 * (b + w * (0.5 * (t1 - t) * w).tanh())
}

/// Scalar Riccati equation `−ṗ = β + 2a·p − g·p²` with its closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarRiccati {
    pub a: f64,
    pub g: f64,
    pub beta: f64,
}

/// Which closed-form branch satisfies the terminal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiccatiBranch {
    /// `p = (a + Δ tanh(Δ(t1 − t)))/g`, terminal value between the roots.
    Tanh { t1: f64 },
    /// `p = (a + Δ coth(Δ(t1 − t)))/g`, terminal value outside the roots.
    Coth { t1: f64 },
    /// Terminal value at the upper root.
    Steady,
}

impl ScalarRiccati {
    /// Swimmer equation: `2a = D(d+2)(d−1)`, `g = 1`.
    pub fn swimmers(d: usize, d_coef: f64, beta: f64) -> Self {
        Self { a: 0.5 * swimmer_growth(d, d_coef), g: 1.0, beta }
    }

    /// Single thermal zone with decay `c0 + c1·ũ`, multiplicative covariance `D`,
    /// control weight `α` and state weight `β` under `reading`.
    pub fn thermal(c0: f64, c1: f64, d_coef: f64, alpha: f64, beta: f64, reading: NoiseReading) -> Self {
        let v = reading.scale * d_coef;
        Self {
            a: -c0 + reading.convention.weight() * v + 0.5 * v,
            g: c1 * c1 / alpha,
            beta,
        }
    }

    pub fn delta(&self) -> f64 {
        (self.a * self.a + self.g * self.beta).sqrt()
    }

    /// Stable steady value `(a + Δ)/g`.
    pub fn steady(&self) -> f64 {
        (self.a + self.delta()) / self.g
    }

    pub fn branch(&self, p_f: f64, t_f: f64) -> Result<RiccatiBranch> {
        ensure(self.g > 0.0, "g", "quadratic coefficient must be positive")?;
        let delta = self.delta();
        ensure(delta > 0.0, "delta", "degenerate equation (a = β = 0)")?;
        let z = (self.g * p_f - self.a) / delta;
        Ok(if z == 1.0 {
            RiccatiBranch::Steady
        } else if z.abs() < 1.0 {
            RiccatiBranch::Tanh { t1: t_f + z.atanh() / delta }
        } else {
            // coth(y) = z  ⇒  y = atanh(1/z)
            RiccatiBranch::Coth { t1: t_f + (1.0 / z).atanh() / delta }
        })
    }

    /// `p(t)` for the terminal value `p(t_f) = p_f`.
    pub fn value(&self, t: f64, p_f: f64, t_f: f64) -> Result<f64> {
        let delta = self.delta();
        Ok(match self.branch(p_f, t_f)? {
            RiccatiBranch::Steady => self.steady(),
            RiccatiBranch::Tanh { t1 } => (self.a + delta * (delta * (t1 - t)).tanh()) / self.g,
            RiccatiBranch::Coth { t1 } => {
                let y = delta * (t1 - t);
                if y == 0.0 || (t1 < t_f && t <= t1) {
                    return Err(Error::Unstable(format!("closed-form solution escapes at t = {t1}")));
                }
                (self.a + delta / y.tanh()) / self.g
            }
        })
    }

    /// `∫_t^{t_f} p(τ) dτ`.
    pub fn integral(&self, t: f64, p_f: f64, t_f: f64) -> Result<f64> {
        let delta = self.delta();
        let lin = self.a * (t_f - t);
        Ok(match self.branch(p_f, t_f)? {
            RiccatiBranch::Steady => self.steady() * (t_f - t),
            RiccatiBranch::Tanh { t1 } => {
                (lin + ln_cosh(delta * (t1 - t)) - ln_cosh(delta * (t1 - t_f))) / self.g
            }
            RiccatiBranch::Coth { t1 } => {
                self.value(t, p_f, t_f)?;
                (lin + ln_abs_sinh(delta * (t1 - t)) - ln_abs_sinh(delta * (t1 - t_f))) / self.g
            }
        })
    }
}

fn ln_cosh(x: f64) -> f64 {
    let y = x.abs();
    y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
}

fn ln_abs_sinh(x: f64) -> f64 {
    let y = x.abs();
    y + (-(-2.0 * y).exp()).ln_1p() - std::f64::consts::LN_2
}

/// Cost-to-go of a scalar-coefficient problem sampled from the closed form,
/// with `−ṡ = k·p`.
pub fn closed_form_cost_to_go(
    eq: &ScalarRiccati,
    dim: usize,
    offset_rate: f64,
    p_f: f64,
    s_f: f64,
    t0: f64,
    t_f: f64,
    n: usize,
) -> Result<CostToGo> {
    ensure(t0 < t_f && n >= 4, "grid", "needs t0 < t_f and at least 4 intervals")?;
    let h = (t_f - t0) / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut varsigma = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = if k == n { t_f } else { t0 + k as f64 * h };
        times.push(t);
        varsigma.push(if k == n { p_f } else { eq.value(t, p_f, t_f)? });
        s.push(s_f + offset_rate * eq.integral(t, p_f, t_f)?);
    }
    Ok(CostToGo::ScalarQuadratic { dim, times, varsigma, s, error_estimate: 0.0 })
}

/// Multi-zone thermal cost-to-go.
pub fn riccati_multizone(
    net: &ThermalNetwork,
    reading: NoiseReading,
    t_f: f64,
    s_f: &DMatrix<f64>,
    t0: f64,
) -> Result<CostToGo> {
    let problem = LqProblem::thermal_network(net, reading)?;
    solve_riccati(&problem, s_f, 0.0, t0, t_f)
}

/// Optimal control `u* = −R⁻¹Bᵀς(t)x`.
pub fn optimal_control(problem: &LqProblem, cost: &CostToGo, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    ensure(x.len() == problem.dim, "x", "must match the state")?;
    Ok(-(problem.feedback_gain(&cost.matrix_at(t)?) * x))
}

/// Pointwise HJB residuals of a quadratic cost-to-go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbResidualReport {
    /// Grid times the samples were evaluated at.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Residuals divided by `1 + Σ|terms|`.
    pub relative: Vec<f64>,
    pub max_abs_residual: f64,
    pub max_relative_residual: f64,
}

/// Substitutes the cost-to-go into `∂_tS + min_u(C + L_u S)` at each sample.
/// The time derivative is a 5-point central difference on the path, so
/// sample times snap to the nearest node at least two nodes from either end.
pub fn hjb_residual(problem: &LqProblem, cost: &CostToGo, samples: &[(f64, DVector<f64>)]) -> Result<HjbResidualReport> {
    let n = cost.len();
    ensure(n >= 5, "cost", "path needs at least 5 nodes")?;
    ensure(cost.dim() == problem.dim, "cost", "dimension differs from the problem")?;
    let times = cost.times();
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let s = cost.offsets();
    let mut rep = HjbResidualReport {
        times: Vec::new(),
        states: Vec::new(),
        residuals: Vec::new(),
        relative: Vec::new(),
        max_abs_residual: 0.0,
        max_relative_residual: 0.0,
    };
    for (t, x) in samples {
        ensure(x.len() == problem.dim, "state", "must match the problem")?;
        let k = (((t - times[0]) / h).round() as isize).clamp(2, n as isize - 3) as usize;
        let p = cost.matrix(k);
        let dp = (cost.matrix(k - 2) - cost.matrix(k - 1) * 8.0 + cost.matrix(k + 1) * 8.0 - cost.matrix(k + 2))
            / (12.0 * h);
        let ds = (s[k - 2] - 8.0 * s[k - 1] + 8.0 * s[k + 1] - s[k + 2]) / (12.0 * h);
        let quad = |m: &DMatrix<f64>| (x.transpose() * m * x)[(0, 0)];
        let at_p = problem.a.transpose() * &p;
        let pb = &p * &problem.b;
        let terms = [
            quad(&dp),
            ds,
            quad(&problem.q),
            quad(&(&at_p + at_p.transpose())),
            -quad(&(&pb * &problem.r_inv * pb.transpose())),
            quad(&problem.noise_adjoint(&p)),
            problem.offset_rate(&p),
        ];
        let res: f64 = terms.iter().sum();
        let scale = 1.0 + terms.iter().map(|v| v.abs()).sum::<f64>();
        rep.times.push(times[k]);
        rep.states.push(x.iter().copied().collect());
        rep.residuals.push(res);
        rep.relative.push(res / scale);
        rep.max_abs_residual = rep.max_abs_residual.max(res.abs());
        rep.max_relative_residual = rep.max_relative_residual.max((res / scale).abs());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::thermal::ThermalZone;

    #[test]
    fn closed_form_spot_values() {
        assert!((closed_form_varsigma(-200.0, 0.0, 3, 1.0, 11.0) - 11.0).abs() < 1e-12);
        assert!((closed_form_varsigma(-200.0, 0.0, 3, 1.0, 0.0) - 10.0).abs() < 1e-12);
        assert!((closed_form_varsigma(2.0, 2.0, 3, 1.0, 11.0) - 5.0).abs() < 1e-15);
        assert!((closed_form_varsigma(1.0, 1.0, 2, 0.5, 3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swimmer_path_matches_closed_form() {
        let (d, dc, k, beta) = (3, 1.0, 0.7, 11.0);
        let cost = riccati_swimmers(d, dc, k, beta, 0.0, 0.0, -20.0).unwrap();
        let eq = ScalarRiccati::swimmers(d, dc, beta);
        let RiccatiBranch::Tanh { t1 } = eq.branch(0.0, 0.0).unwrap() else { panic!() };
        let path = cost.varsigma_path();
        let mut worst: f64 = 0.0;
        for (t, v) in cost.times().iter().zip(&path) {
            worst = worst.max((v - closed_form_varsigma(*t, t1, d, dc, beta)).abs());
        }
        assert!(worst < 1e-7, "{worst}");
        assert!((path[0] - 11.0).abs() < 1e-8);
        assert_eq!(path[path.len() - 1].to_bits(), 0f64.to_bits());
        // s(t0) = dκ ∫ ς
        let s_exact = d as f64 * k * eq.integral(-20.0, 0.0, 0.0).unwrap();
        assert!((cost.offsets()[0] - s_exact).abs() < 1e-8 * s_exact);
        assert!(path.windows(2).all(|w| w[0] >= w[1]));
        assert!(cost.error_estimate() < 1e-7);
    }

    #[test]
    fn coth_branch_above_steady() {
        let eq = ScalarRiccati::swimmers(2, 1.0, 1.0);
        let p_f = eq.steady() + 3.0;
        let cost = riccati_swimmers(2, 1.0, 1.0, 1.0, p_f, 1.0, -4.0).unwrap();
        for (t, v) in cost.times().iter().zip(cost.varsigma_path()).step_by(97) {
            assert!((v - eq.value(*t, p_f, 1.0).unwrap()).abs() < 1e-8);
        }
        assert!(matches!(eq.branch(p_f, 1.0).unwrap(), RiccatiBranch::Coth { .. }));
    }

    #[test]
    fn negative_terminal_data_escapes() {
        let r = riccati_swimmers(2, 1.0, 1.0, 1.0, -5.0, 0.0, -10.0);
        assert!(matches!(r, Err(Error::Unstable(_))));
        let eq = ScalarRiccati::swimmers(2, 1.0, 1.0);
        assert!(eq.value(-10.0, -5.0, 0.0).is_err());
    }

    fn zone(alpha: f64, beta: f64, d_o: f64, kappa: f64) -> ThermalZone {
        ThermalZone { c_bar_o: 1.0, c_s: 0.5, kappa, d_o, alpha, beta }
    }

    fn net(zones: Vec<ThermalZone>, edges: Vec<crate::model::thermal::ThermalEdge>) -> ThermalNetwork {
        ThermalNetwork { zones, edges, t_o: 30.0, t_s: 10.0, t_bar: 22.0 }
    }

    #[test]
    fn single_zone_matches_scalar_equation() {
        let n1 = net(vec![zone(1.5, 2.0, 0.2, 0.3)], vec![]);
        let reading = NoiseReading::default();
        let cost = riccati_multizone(&n1, reading, 0.0, &DMatrix::zeros(1, 1), -15.0).unwrap();
        let eq = ScalarRiccati::thermal(n1.c0(0).unwrap(), n1.c1(0), 0.2, 1.5, 2.0, reading);
        for (t, v) in cost.times().iter().zip(cost.varsigma_path()).step_by(101) {
            assert!((v - eq.value(*t, 0.0, 0.0).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_noise_zero_weight_stays_zero() {
        let n2 = net(vec![zone(1.0, 0.0, 0.0, 0.0), zone(1.0, 0.0, 0.0, 0.0)], vec![]);
        let cost = riccati_multizone(&n2, NoiseReading::default(), 1.0, &DMatrix::zeros(2, 2), 0.0).unwrap();
        assert!((0..cost.len()).all(|k| cost.matrix(k).amax() == 0.0));
    }

    #[test]
    fn nonsymmetric_terminal_rejected() {
        let n2 = net(vec![zone(1.0, 1.0, 0.0, 0.0), zone(1.0, 1.0, 0.0, 0.0)], vec![]);
        let sf = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(riccati_multizone(&n2, NoiseReading::default(), 1.0, &sf, 0.0).is_err());
    }

    #[test]
    fn zero_cost_to_go_residual_is_source() {
        let problem = LqProblem::swimmers(3, 1.0, 0.0, 2.5).unwrap();
        let cost = CostToGo::ScalarQuadratic {
            dim: 3,
            times: (0..=10).map(|k| k as f64 * 0.1).collect(),
            varsigma: vec![0.0; 11],
            s: vec![0.0; 11],
            error_estimate: 0.0,
        };
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let rep = hjb_residual(&problem, &cost, &[(0.5, x.clone())]).unwrap();
        assert_eq!(rep.residuals[0], 2.5 * x.norm_squared());
    }

    #[test]
    fn doubling_alpha_halves_gain_at_fixed_coefficients() {
        let mk = |alpha| LqProblem::thermal_network(&net(vec![zone(alpha, 1.0, 0.1, 0.1)], vec![]), NoiseReading::default()).unwrap();
        let p = DMatrix::from_element(1, 1, 0.8);
        let (g1, g2) = (mk(1.0).feedback_gain(&p), mk(2.0).feedback_gain(&p));
        assert!((g1[(0, 0)] / g2[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((mk(1.0).gamma()[0] / mk(2.0).gamma()[0] - 2.0).abs() < 1e-14);
    }
}
