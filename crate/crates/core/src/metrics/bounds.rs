//! Evaluators of the Wasserstein error bounds for the backward sampler.

use super::quad::adaptive_simpson;
use crate::error::{Error, Result};
use crate::sde::{DiffusionSpec, SdeKind, SdeParams};

const QUAD_TOL: f64 = 1e-10;
/// Largest `ln` that still exponentiates to a finite double.
const MAX_LN: f64 = 709.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Supplies `r_b(t) = b(t)` and `sigma^2(t)`.
    pub spec: DiffusionSpec,
    /// Lipschitz constant `L` of the true score.
    pub lipschitz: f64,
    pub epsilon: f64,
    /// `W2(p(T), prior)`.
    pub eta: f64,
    /// Free parameter; `None` selects a default (see each bound).
    pub h: Option<f64>,
    /// Strong log-concavity constant of the data.
    pub kappa: Option<f64>,
    /// `E|X_0|^2`.
    pub second_moment: Option<f64>,
}

impl BoundInputs {
    pub fn new(spec: DiffusionSpec, lipschitz: f64, epsilon: f64, eta: f64) -> Result<Self> {
        let me = Self { spec, lipschitz, epsilon, eta, h: None, kappa: None, second_moment: None };
        me.validate()?;
        Ok(me)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [("L", self.lipschitz), ("epsilon", self.epsilon), ("eta", self.eta)];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("h must be > 0, got {h}")));
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be > 0, got {k}")));
            }
        }
        if let Some(m) = self.second_moment {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("second moment must be >= 0, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// The bound; `+inf` when it overflows.
    pub value: f64,
    /// `ln` of the bound (finite even when `value` overflows).
    pub log_value: f64,
    /// `true` when `value` bounds `W2^2` rather than `W2`.
    pub squared: bool,
    pub h: f64,
    /// Exponent `u(T)` used (or its upper estimate).
    pub u_terminal: f64,
    pub overflow: bool,
    pub diagnostics: String,
}

/// `u(t) = int_{T-t}^T (-2 r_b + (2L + 2h) sigma^2) ds` in closed form.
pub fn u_of_t(inputs: &BoundInputs, h: f64, t: f64) -> Result<f64> {
    let spec = &inputs.spec;
    spec.check_time(t)?;
    let horizon = spec.horizon();
    let a = horizon - t;
    Ok(-2.0 * spec.drift_integral(a, horizon)
        + (2.0 * inputs.lipschitz + 2.0 * h) * spec.diffusion_sq_integral(a, horizon))
}

/// Same integral by adaptive Simpson quadrature on the pointwise coefficients.
pub fn u_of_t_quadrature(inputs: &BoundInputs, h: f64, t: f64) -> Result<f64> {
    let spec = &inputs.spec;
    spec.check_time(t)?;
    let horizon = spec.horizon();
    let c = 2.0 * inputs.lipschitz + 2.0 * h;
    Ok(adaptive_simpson(|s| -2.0 * spec.b(s) + c * spec.sigma_sq(s), horizon - t, horizon, QUAD_TOL))
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `sqrt(eta^2 e^{u(T)} + eps^2/(2h) int_0^T sigma^2(t) e^{u(T) - u(T-t)} dt)` for a fixed `h`.
pub fn sampling_error_bound_at(inputs: &BoundInputs, h: f64) -> Result<BoundReport> {
    inputs.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("h must be > 0, got {h}")));
    }
    let spec = &inputs.spec;
    let horizon = spec.horizon();
    let c = 2.0 * inputs.lipschitz + 2.0 * h;
    let u_terminal = u_of_t(inputs, h, horizon)?;
    // u(T) - u(T - t) = int_0^t k
    let big_k = |t: f64| -2.0 * spec.drift_integral(0.0, t) + c * spec.diffusion_sq_integral(0.0, t);
    let grid = 256;
    let shift = (0..=grid)
        .map(|i| {
            let t = horizon * i as f64 / grid as f64;
            big_k(t) + spec.sigma_sq(t).max(f64::MIN_POSITIVE).ln()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled = adaptive_simpson(|t| (spec.sigma_sq(t).ln() + big_k(t) - shift).exp(), 0.0, horizon, QUAD_TOL);
    let log_integral = shift + scaled.ln();

    let log_init = 2.0 * inputs.eta.ln() + u_terminal;
    let log_score = 2.0 * inputs.epsilon.ln() - (2.0 * h).ln() + log_integral;
    let log_sq = log_add(log_init, log_score);
    let log_value = 0.5 * log_sq;
    let overflow = log_value > MAX_LN;
    let diagnostics = if overflow {
        format!("bound overflows: ln bound = {log_value:.3}, u(T) = {u_terminal:.3}, ln integral = {log_integral:.3}")
    } else {
        String::new()
    };
    Ok(BoundReport {
        value: if overflow { f64::INFINITY } else { log_value.exp() },
        log_value,
        squared: false,
        h,
        u_terminal,
        overflow,
        diagnostics,
    })
}

/// The sampling-error bound with `h` from the inputs, or minimised over a
/// log grid of `h` in `[1e-4, 1e2]` followed by golden-section refinement.
pub fn sampling_error_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    if let Some(h) = inputs.h {
        return sampling_error_bound_at(inputs, h);
    }
    let (lo, hi) = (1e-4f64.ln(), 1e2f64.ln());
    let n = 120;
    let eval = |lh: f64| sampling_error_bound_at(inputs, lh.exp()).map(|r| r.log_value);
    let mut best = (f64::INFINITY, 0usize);
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    for (i, &lh) in grid.iter().enumerate() {
        let v = eval(lh)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    let (mut a, mut b) = (grid[best.1.saturating_sub(1)], grid[(best.1 + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?;
        }
    }
    let refined = if fc < fd { c } else { d };
    let h = if eval(refined)? <= best.0 { refined.exp() } else { grid[best.1].exp() };
    sampling_error_bound_at(inputs, h)
}

/// Admissible range `h < min(1/2, kappa / ((1 + kappa) beta_max T))` and the
/// default `h` (half the second cap).
pub fn cvp_h_range(inputs: &BoundInputs) -> Result<(f64, f64)> {
    let (kappa, beta_max) = cvp_params(inputs)?;
    let cap = (0.5f64).min(kappa / ((1.0 + kappa) * beta_max * inputs.spec.horizon()));
    let default = kappa / ((1.0 + kappa) * 2.0 * beta_max * inputs.spec.horizon());
    Ok((cap, default.min(0.5 * cap)))
}

fn cvp_params(inputs: &BoundInputs) -> Result<(f64, f64)> {
    if inputs.spec.kind() != SdeKind::Cvp {
        return Err(Error::Config(format!("CVP bound needs a CVP spec, got {}", inputs.spec.kind())));
    }
    let kappa = inputs.kappa.ok_or_else(|| Error::Config("CVP bound needs kappa".into()))?;
    match inputs.spec.params() {
        SdeParams::Linear { beta_max, .. } => Ok((kappa, beta_max)),
        _ => unreachable!(),
    }
}

/// Bound on `W2^2` for CVP with a `kappa`-strongly log-concave target:
/// `exp(2 beta_max h T - 2 kappa/(kappa+1) (1 - e^{-beta_min T})) E|x|^2 + eps^2 / (2h(1-2h))`.
pub fn cvp_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let (kappa, beta_max) = cvp_params(inputs)?;
    let beta_min = match inputs.spec.params() {
        SdeParams::Linear { beta_min, .. } => beta_min,
        _ => unreachable!(),
    };
    let m2 = inputs.second_moment.ok_or_else(|| Error::Config("CVP bound needs the data second moment".into()))?;
    let (cap, default) = cvp_h_range(inputs)?;
    let h = inputs.h.unwrap_or(default);
    if !(h > 0.0 && h < cap) {
        return Err(Error::Domain(format!(
            "h = {h} violates 0 < h < min(1/2, kappa/((1+kappa) beta_max T)) = {cap}"
        )));
    }
    let horizon = inputs.spec.horizon();
    let exponent = 2.0 * beta_max * h * horizon - 2.0 * kappa / (kappa + 1.0) * (-(-beta_min * horizon).exp_m1());
    let value = exponent.exp() * m2 + inputs.epsilon * inputs.epsilon / (2.0 * h * (1.0 - 2.0 * h));
    Ok(BoundReport {
        value,
        log_value: value.ln(),
        squared: true,
        h,
        u_terminal: -inputs.spec.beta_integral(horizon).unwrap() + exponent,
        overflow: false,
        diagnostics: String::new(),
    })
}

/// `inf_t (r_b(t) - L_s sigma^2(t))` on a uniform grid of `n + 1` points.
pub fn contraction_beta(spec: &DiffusionSpec, score_lipschitz: f64, n: usize) -> f64 {
    let horizon = spec.horizon();
    (0..=n)
        .map(|i| {
            let t = horizon * i as f64 / n as f64;
            spec.b(t) - score_lipschitz * spec.sigma_sq(t)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    /// Least-squares slope of `ln error` against `ln delta`.
    pub order: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// `false` when the error grows as `delta` shrinks somewhere.
    pub monotone: bool,
}

pub fn discretization_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::Usage("order fit needs at least 3 (delta, error) points".into()));
    }
    if points.iter().any(|(d, e)| !(*d > 0.0 && *e > 0.0)) {
        return Err(Error::Domain("order fit needs positive steps and errors".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let order = crate::sampler::ls_slope(&xs, &ys);
    let n = xs.len() as f64;
    let intercept = ys.iter().sum::<f64>() / n - order * xs.iter().sum::<f64>() / n;
    let residual_rms = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - order * x).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(OrderFit { order, intercept, residual_rms, monotone })
}
