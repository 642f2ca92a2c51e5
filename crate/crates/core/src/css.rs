//! Stationary densities, steady-state expected cost and optimal feedback gains.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};
use crate::model::thermal::{multi_zone_system, NoiseReading, ThermalNetwork};
use crate::model::{FeedbackLaw, LinearSystem};
use crate::quad::integrate;
use crate::sde::{run_ensemble, IntegratorConfig};
use crate::tails::{swimmer_mqp_threshold, thermal_mqp_threshold};

/// Stationary density of one of the two solvable model families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StationaryDensity {
    /// Swimmer separation: `P(r) = C·(κ/D + (d−1)r²)^{−φ/((d−1)D)}` with
    /// `∫ Ω_r P(r) dr = 1`, `Ω_r = π^{d/2}/Γ(d/2+1)·r^{d−1}`.
    SwimmersRadial { d: usize, d_coef: f64, kappa: f64, phi: f64 },
    /// Thermal deviation: `P(θ) ∝ (1 + Dθ²/κ)^{−c/(2D)}` on the real line.
    ThermalScalar { c: f64, d_coef: f64, kappa: f64 },
}

impl StationaryDensity {
    pub fn swimmers(d: usize, d_coef: f64, kappa: f64, phi: f64) -> Result<Self> {
        ensure(d >= 2, "d", "swimmer density needs d >= 2")?;
        ensure(d_coef > 0.0, "D", "must be positive")?;
        ensure(kappa > 0.0, "kappa", "must be positive (the inner scale vanishes at κ = 0)")?;
        let df = d as f64;
        let bound = (df - 1.0) * df * d_coef / 2.0;
        if phi <= bound {
            return Err(Error::NoStationaryDensity(format!(
                "φ = {phi} must exceed d(d−1)D/2 = {bound}"
            )));
        }
        Ok(StationaryDensity::SwimmersRadial { d, d_coef, kappa, phi })
    }

    pub fn thermal(c: f64, d_coef: f64, kappa: f64) -> Result<Self> {
        ensure(d_coef > 0.0, "D", "must be positive")?;
        ensure(kappa > 0.0, "kappa", "must be positive (the inner scale vanishes at κ = 0)")?;
        if c <= d_coef {
            return Err(Error::NoStationaryDensity(format!("c = {c} must exceed D = {d_coef}")));
        }
        Ok(StationaryDensity::ThermalScalar { c, d_coef, kappa })
    }

    /// Scale `√(κ/D)`-type below which the density is flat.
    pub fn inner_scale(&self) -> f64 {
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => (kappa / (d_coef * (d as f64 - 1.0))).sqrt(),
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => (kappa / d_coef).sqrt(),
        }
    }

    /// Exponent `p` of the algebraic factor.
    fn power(&self) -> f64 {
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, phi, .. } => phi / ((d as f64 - 1.0) * d_coef),
            StationaryDensity::ThermalScalar { c, d_coef, .. } => c / (2.0 * d_coef),
        }
    }

    /// Survival exponent of `r` (or `|θ|`).
    pub fn tail_exponent(&self) -> f64 {
        match *self {
            StationaryDensity::SwimmersRadial { d, .. } => 2.0 * self.power() - d as f64,
            StationaryDensity::ThermalScalar { .. } => 2.0 * self.power() - 1.0,
        }
    }

    /// Closed-form normalization constant `C` multiplying the algebraic factor.
    pub fn normalization(&self) -> f64 {
        let p = self.power();
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => {
                let df = d as f64;
                let ln = df.ln() + 0.5 * df * ((df - 1.0) * d_coef / (kappa * PI)).ln() + p * (kappa / d_coef).ln()
                    + ln_gamma(p)
                    - ln_gamma(p - df / 2.0);
                ln.exp()
            }
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => {
                (d_coef / (PI * kappa)).sqrt() * (ln_gamma(p) - ln_gamma(p - 0.5)).exp()
            }
        }
    }

    /// `(ln K, m, a, b, p)` with `pdf(x) = K·x^m·(a + b·x²)^{−p}` for `x > 0`.
    fn log_form(&self) -> (f64, f64, f64, f64, f64) {
        let p = self.power();
        let ln_c = self.normalization().ln();
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => {
                let df = d as f64;
                let ln_omega = 0.5 * df * PI.ln() - ln_gamma(df / 2.0 + 1.0);
                (ln_omega + ln_c, df - 1.0, kappa / d_coef, df - 1.0, p)
            }
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => (ln_c, 0.0, 1.0, d_coef / kappa, p),
        }
    }

    /// Density in the family's own convention: `P(r)` for swimmers, `P(θ)` for thermal.
    pub fn density(&self, x: f64) -> f64 {
        let p = self.power();
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => {
                self.normalization() * (kappa / d_coef + (d as f64 - 1.0) * x * x).powf(-p)
            }
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => {
                self.normalization() * (1.0 + d_coef * x * x / kappa).powf(-p)
            }
        }
    }

    /// Probability density of `r` (swimmers) or of `θ` (thermal) with respect to `dr`/`dθ`.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            StationaryDensity::SwimmersRadial { d, .. } => {
                if x < 0.0 {
                    return 0.0;
                }
                let df = d as f64;
                let omega = (0.5 * df * PI.ln() - ln_gamma(df / 2.0 + 1.0)).exp() * x.powf(df - 1.0);
                omega * self.density(x)
            }
            StationaryDensity::ThermalScalar { .. } => self.density(x),
        }
    }

    /// Distribution function of `r` (swimmers) or `θ` (thermal).
    pub fn cdf(&self, x: f64) -> f64 {
        let p = self.power();
        match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let b = d as f64 - 1.0;
                let w = b * x * x / (kappa / d_coef + b * x * x);
                beta_reg(d as f64 / 2.0, p - d as f64 / 2.0, w)
            }
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => {
                let nu = 2.0 * p - 1.0;
                let t = x * (d_coef * nu / kappa).sqrt();
                StudentsT::new(0.0, 1.0, nu).expect("ν > 0").cdf(t)
            }
        }
    }

    /// `E|x|^q` in closed form; errors when the moment diverges.
    pub fn moment(&self, q: f64) -> Result<f64> {
        let alpha = self.tail_exponent();
        if q >= alpha {
            return Err(Error::MomentDivergence { q, alpha });
        }
        let p = self.power();
        Ok(match *self {
            StationaryDensity::SwimmersRadial { d, d_coef, kappa, .. } => {
                let df = d as f64;
                let a_over_b = kappa / (d_coef * (df - 1.0));
                (0.5 * q * a_over_b.ln() + ln_gamma((df + q) / 2.0) + ln_gamma(p - (df + q) / 2.0)
                    - ln_gamma(df / 2.0)
                    - ln_gamma(p - df / 2.0))
                .exp()
            }
            StationaryDensity::ThermalScalar { d_coef, kappa, .. } => {
                (0.5 * q * (kappa / d_coef).ln() + ln_gamma((q + 1.0) / 2.0) + ln_gamma(p - (q + 1.0) / 2.0)
                    - 0.5 * PI.ln()
                    - ln_gamma(p - 0.5))
                .exp()
            }
        })
    }

    /// `E|x|^q` by adaptive quadrature of [`Self::pdf`].
    pub fn moment_quadrature(&self, q: f64) -> Result<f64> {
        let alpha = self.tail_exponent();
        if q >= alpha {
            return Err(Error::MomentDivergence { q, alpha });
        }
        // x = s(eʸ − 1) turns the algebraic tail into exponential decay at
        // rate α − q; the integrand is assembled in logs to survive large y.
        let s = self.inner_scale();
        let y_max = 40.0 / (alpha - q) + 10.0;
        let (ln_k, m, a, b, p) = self.log_form();
        let f = |y: f64| {
            if y == 0.0 {
                return 0.0;
            }
            let lx = s.ln() + if y > 1.0 { y + (-(-y).exp()).ln_1p() } else { y.exp_m1().ln() };
            let ln_poly = b.ln() + 2.0 * lx + (a / b * (-2.0 * lx).exp()).ln_1p();
            (ln_k + (m + q) * lx - p * ln_poly + s.ln() + y).exp()
        };
        let half = integrate(f, 0.0, y_max, 1e-300, 1e-12).value;
        Ok(match self {
            StationaryDensity::SwimmersRadial { .. } => half,
            StationaryDensity::ThermalScalar { .. } => 2.0 * half,
        })
    }

    /// Total probability by quadrature.
    pub fn total_mass(&self) -> f64 {
        self.moment_quadrature(0.0).expect("normalizable")
    }
}

/// How moments entering the cost are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    #[default]
    ClosedForm,
    Quadrature,
}

/// Steady-state control problem for one of the solvable model families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CssModel {
    Swimmers { d: usize, d_coef: f64, kappa: f64 },
    /// Reduced single zone with decay rate `c(φ) = c0 + c1φ`.
    Thermal { c0: f64, c1: f64, d_coef: f64, kappa: f64 },
}

impl CssModel {
    pub fn density(&self, phi: f64) -> Result<StationaryDensity> {
        match *self {
            CssModel::Swimmers { d, d_coef, kappa } => StationaryDensity::swimmers(d, d_coef, kappa, phi),
            CssModel::Thermal { c0, c1, d_coef, kappa } => StationaryDensity::thermal(c0 + c1 * phi, d_coef, kappa),
        }
    }

    /// Gain above which the q-th moment is finite.
    pub fn mqp_threshold(&self, q: f64) -> Result<f64> {
        match *self {
            CssModel::Swimmers { d, d_coef, .. } => Ok(swimmer_mqp_threshold(d, d_coef, q)),
            CssModel::Thermal { c0, c1, d_coef, .. } => Ok(thermal_mqp_threshold(c0, c1, d_coef, q)?.moment),
        }
    }

    /// Lower end of the window where the cost is finite (both the control
    /// term, quadratic in the state, and the goal term of order `q`).
    pub fn window_lower(&self, q: f64) -> Result<f64> {
        if let CssModel::Thermal { c1, .. } = *self {
            if c1 <= 0.0 {
                return Err(Error::NoControlAuthority(format!("c1 = {c1} must be positive")));
            }
        }
        self.mqp_threshold(q.max(2.0))
    }
}

/// Steady expected cost `φ²E[|x|²] + βE[|x|^q]` under the stationary density.
pub fn expected_cost(density: &StationaryDensity, q: f64, beta: f64, method: MomentMethod) -> Result<f64> {
    let phi = match *density {
        StationaryDensity::SwimmersRadial { phi, .. } => phi,
        StationaryDensity::ThermalScalar { .. } => {
            return Err(crate::error::invalid(
                "density",
                "thermal cost needs the gain; use expected_cost_at",
            ))
        }
    };
    cost_terms(density, phi, q, beta, method)
}

fn cost_terms(density: &StationaryDensity, phi: f64, q: f64, beta: f64, method: MomentMethod) -> Result<f64> {
    let m = |k: f64| match method {
        MomentMethod::ClosedForm => density.moment(k),
        MomentMethod::Quadrature => density.moment_quadrature(k),
    };
    let goal = if beta == 0.0 { 0.0 } else { beta * m(q)? };
    Ok(phi * phi * m(2.0)? + goal)
}

/// Steady expected cost of `model` at gain `phi`.
pub fn expected_cost_at(model: &CssModel, phi: f64, q: f64, beta: f64, method: MomentMethod) -> Result<f64> {
    let density = model.density(phi)?;
    cost_terms(&density, phi, q, beta, method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CssResult {
    pub phi_star: f64,
    pub cost_at_optimum: f64,
    /// Sampled `(φ, C̄(φ))` across the bracket.
    pub cost_curve: Vec<(f64, f64)>,
    pub q: f64,
    pub beta: f64,
    /// Smallest gain with a finite q-th moment.
    pub phi_s: f64,
    /// Open interval of gains with finite cost (upper end infinite).
    pub convex_window: (f64, f64),
    pub iterations: usize,
}

/// Relative tolerance of the golden-section search in φ.
pub const GAIN_TOL: f64 = 1e-11;

/// Minimizes the steady expected cost over the gain by golden-section search
/// on the window where the cost is finite.
pub fn optimize_gain(model: &CssModel, q: f64, beta: f64, method: MomentMethod) -> Result<CssResult> {
    ensure(q > 0.0, "q", "must be positive")?;
    ensure(beta >= 0.0, "beta", "must be nonnegative")?;
    let lo = model.window_lower(q)?;
    let cost = |phi: f64| expected_cost_at(model, phi, q, beta, method).unwrap_or(f64::INFINITY);
    let step0 = lo.abs().max(1.0);
    let mut hi = lo + step0;
    let mut guard = 0;
    while cost(lo + 0.5 * (hi - lo)) >= cost(hi) || !cost(hi).is_finite() {
        hi = lo + 2.0 * (hi - lo);
        guard += 1;
        if guard > 200 {
            return Err(Error::EmptyWindow(format!("cost does not rise above φ = {lo}")));
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    let mut iterations = 0;
    while (b - a) > GAIN_TOL * (1.0 + x1.abs()) && iterations < 500 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2);
        }
        iterations += 1;
    }
    let phi_star = refine_stationary_point(&cost, 0.5 * (a + b), lo);
    let cost_at_optimum = cost(phi_star);
    if !cost_at_optimum.is_finite() {
        return Err(Error::EmptyWindow("no finite cost inside the window".into()));
    }
    let cost_curve = (1..=50)
        .map(|k| {
            let phi = lo + (hi - lo) * k as f64 / 50.0;
            (phi, cost(phi))
        })
        .collect();
    Ok(CssResult {
        phi_star,
        cost_at_optimum,
        cost_curve,
        q,
        beta,
        phi_s: model.mqp_threshold(q)?,
        convex_window: (lo, f64::INFINITY),
        iterations,
    })
}

/// Golden section resolves a flat minimum only to about `√ε` of the cost's
/// rounding noise. Bisecting on a Richardson-extrapolated central derivative
/// reaches `ε/h` instead. Falls back to `phi` if the derivative does not
/// change sign around it.
fn refine_stationary_point(cost: &impl Fn(f64) -> f64, phi: f64, lo: f64) -> f64 {
    let scale = 1.0 + phi.abs();
    let w = 1e-5 * scale;
    let h = (1e-3 * scale).min(0.25 * (phi - w - lo));
    if !(h > 0.0) {
        return phi;
    }
    let slope = |x: f64| {
        let d = |h: f64| (cost(x + h) - cost(x - h)) / (2.0 * h);
        (4.0 * d(0.5 * h) - d(h)) / 3.0
    };
    let (mut a, mut b) = (phi - w, phi + w);
    let (sa, sb) = (slope(a), slope(b));
    if !(sa < 0.0 && sb > 0.0) {
        return phi;
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if b - a <= 4.0 * f64::EPSILON * scale {
            break;
        }
        let sm = slope(m);
        if !sm.is_finite() {
            return phi;
        }
        if sm < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Optimal gain at `q = 2` in closed form.
pub fn closed_form_gain(model: &CssModel, beta: f64) -> Result<f64> {
    ensure(beta >= 0.0, "beta", "must be nonnegative")?;
    match *model {
        CssModel::Swimmers { d, d_coef, .. } => {
            let df = d as f64;
            let b = d_coef * (df + 2.0) * (df - 1.0);
            Ok(0.5 * (b + (4.0 * beta + b * b).sqrt()))
        }
        CssModel::Thermal { c0, c1, d_coef, .. } => {
            if c1 == 0.0 {
                return Err(Error::NoControlAuthority("c1 = 0".into()));
            }
            let a = 3.0 * d_coef - c0;
            Ok((a + (a * a + beta * c1 * c1).sqrt()) / c1)
        }
    }
}

/// Exact stationary `E[xxᵀ]` of a white-noise linear system with feedback,
/// from `A·Σ + Σ·Aᵀ + 𝒯(Σ) + diag(κ) = 0` with `A` the Itô-form drift and
/// `𝒯(Σ)_ik = Σ_jl T(i,j,k,l)Σ_jl`. Errors if the second moment grows.
pub fn stationary_second_moment(system: &LinearSystem, feedback: &FeedbackLaw) -> Result<DMatrix<f64>> {
    ensure(
        system.noise_center.is_none(),
        "noise_center",
        "second-moment equation assumes noise acting on x",
    )?;
    let d = system.dim;
    let mut a = system.closed_loop_drift(feedback)?;
    let tensor = match &system.mult_noise {
        None => None,
        Some(spec) => {
            let t = spec.kind.white_tensor(d)?.ok_or_else(|| {
                crate::error::invalid("mult_noise", "second-moment equation needs white noise")
            })?;
            a += spec.ito_form_drift(d)?;
            Some(t)
        }
    };
    let n = d * d;
    let mut op = DMatrix::zeros(n, n);
    for i in 0..d {
        for k in 0..d {
            let row = i * d + k;
            for j in 0..d {
                op[(row, j * d + k)] += a[(i, j)];
                op[(row, i * d + j)] += a[(k, j)];
            }
            if let Some(t) = &tensor {
                for j in 0..d {
                    for l in 0..d {
                        op[(row, j * d + l)] += t.get(i, j, k, l);
                    }
                }
            }
        }
    }
    let eig = op.clone().complex_eigenvalues();
    let worst = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if worst >= 0.0 {
        return Err(Error::Unstable(format!(
            "second moment is not mean-square stable (growth rate {worst})"
        )));
    }
    let rhs = DVector::from_fn(n, |r, _| {
        let (i, k) = (r / d, r % d);
        if i == k {
            -system.additive_cov[i] / system.friction.powi(2)
        } else {
            0.0
        }
    });
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular second-moment operator".into()))?;
    let s = DMatrix::from_fn(d, d, |i, k| sol[i * d + k]);
    Ok((&s + s.transpose()) * 0.5)
}

/// Monte Carlo cost estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCost {
    pub mean: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub samples_per_traj: usize,
    pub pilot_blowup_fraction: f64,
}

/// Settings of the multi-zone Monte Carlo cost estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub cfg: IntegratorConfig,
    pub n_traj: usize,
    pub pilot_n_traj: usize,
    pub pilot_horizon: f64,
}

/// Time-averaged ensemble estimate of `Σ_i (α_i u_i² + β_i|θ_i|^q)` under
/// feedback `u = −φθ`. A short pilot run screens for instability first.
pub fn multizone_cost_mc(
    net: &ThermalNetwork,
    phi: &DMatrix<f64>,
    q: f64,
    reading: NoiseReading,
    settings: &McSettings,
) -> Result<McCost> {
    let feedback = FeedbackLaw::Matrix { phi: phi.clone() };
    let system = multi_zone_system(net, &feedback, reading)?;
    ensure(settings.cfg.sample_interval.is_some(), "sample_interval", "needed for time averages")?;
    let mut pilot_cfg = settings.cfg.clone();
    pilot_cfg.horizon = settings.pilot_horizon;
    pilot_cfg.burn_in = 0.0;
    pilot_cfg.sample_interval = None;
    pilot_cfg.lyapunov_times.clear();
    let pilot = run_ensemble(&system, &FeedbackLaw::none(), &pilot_cfg, settings.pilot_n_traj.max(1))?;
    if pilot.blowup_count > 0 {
        return Err(Error::Unstable(format!(
            "pilot run: {} of {} trajectories blew up",
            pilot.blowup_count, pilot.n_traj
        )));
    }
    let run = run_ensemble(&system, &FeedbackLaw::none(), &settings.cfg, settings.n_traj)?;
    if run.blowup_count > 0 {
        return Err(Error::Unstable(format!(
            "{} of {} trajectories blew up",
            run.blowup_count, run.n_traj
        )));
    }
    let n = net.len();
    let per_traj = run.sample_count() / settings.n_traj;
    ensure(per_traj >= 1, "sample_interval", "no samples after burn-in")?;
    let mut traj_means = Vec::with_capacity(settings.n_traj);
    for chunk in run.samples.chunks(n * per_traj) {
        let mut acc = 0.0;
        for x in chunk.chunks(n) {
            let xv = DVector::from_column_slice(x);
            let u = -(phi * &xv);
            for i in 0..n {
                acc += net.zones[i].alpha * u[i] * u[i] + net.zones[i].beta * x[i].abs().powf(q);
            }
        }
        traj_means.push(acc / per_traj as f64);
    }
    Ok(McCost {
        mean: crate::stats::mean(&traj_means),
        stderr: crate::stats::std_error(&traj_means),
        n_traj: settings.n_traj,
        samples_per_traj: per_traj,
        pilot_blowup_fraction: pilot.blowup_fraction(),
    })
}

/// Exact steady cost at `q = 2` from the stationary second moment.
pub fn multizone_cost_exact_q2(net: &ThermalNetwork, phi: &DMatrix<f64>, reading: NoiseReading) -> Result<f64> {
    let system = multi_zone_system(net, &FeedbackLaw::Matrix { phi: phi.clone() }, reading)?;
    let s = stationary_second_moment(&system, &FeedbackLaw::none())?;
    let u = phi * &s * phi.transpose();
    Ok((0..net.len())
        .map(|i| net.zones[i].alpha * u[(i, i)] + net.zones[i].beta * s[(i, i)])
        .sum())
}
