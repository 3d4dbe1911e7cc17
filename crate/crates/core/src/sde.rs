//! Linear diffusion SDE families `dX = b(t)(X - mu) dt + sigma(t) dB`.
//!
//! Seven families are supported: the classical OU, VE, VP and subVP models and
//! their contractive counterparts COU, CVP and CsubVP, whose drift factor is
//! positive. All beta integrals are evaluated in closed form for the linear
//! schedule `beta(t) = beta_min + (t / T)(beta_max - beta_min)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest prior variance accepted before the model is rejected as unusable.
pub const MAX_PRIOR_VARIANCE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SdeKind {
    Ou,
    Ve,
    Vp,
    SubVp,
    Cou,
    Cvp,
    CsubVp,
}

impl SdeKind {
    pub const ALL: [SdeKind; 7] = [
        SdeKind::Ou,
        SdeKind::Ve,
        SdeKind::Vp,
        SdeKind::SubVp,
        SdeKind::Cou,
        SdeKind::Cvp,
        SdeKind::CsubVp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SdeKind::Ou => "OU",
            SdeKind::Ve => "VE",
            SdeKind::Vp => "VP",
            SdeKind::SubVp => "subVP",
            SdeKind::Cou => "COU",
            SdeKind::Cvp => "CVP",
            SdeKind::CsubVp => "CsubVP",
        }
    }

    /// Families whose drift factor is positive on the whole horizon.
    pub fn is_contractive(self) -> bool {
        matches!(self, SdeKind::Cou | SdeKind::Cvp | SdeKind::CsubVp)
    }
}

impl fmt::Display for SdeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = match s.to_ascii_lowercase().as_str() {
            "ou" => SdeKind::Ou,
            "ve" => SdeKind::Ve,
            "vp" => SdeKind::Vp,
            "subvp" | "sub_vp" | "sub-vp" => SdeKind::SubVp,
            "cou" => SdeKind::Cou,
            "cvp" => SdeKind::Cvp,
            "csubvp" | "csub_vp" | "csub-vp" => SdeKind::CsubVp,
            other => return Err(Error::Config(format!("unknown SDE kind `{other}`"))),
        };
        Ok(k)
    }
}

/// Family-specific schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdeParams {
    /// OU and COU: constant rate `theta` and constant diffusion `sigma`.
    Constant { theta: f64, sigma: f64 },
    /// VE: geometric noise scale between `sigma_min` and `sigma_max`.
    Geometric { sigma_min: f64, sigma_max: f64 },
    /// VP, subVP, CVP, CsubVP: linear `beta(t)`.
    Linear { beta_min: f64, beta_max: f64 },
}

/// A fully specified diffusion model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    kind: SdeKind,
    params: SdeParams,
    mu: Vec<f64>,
    horizon: f64,
    dim: usize,
}

/// Gaussian transition `X_t | X_0 = x ~ N(mu + f (x - mu), s^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationKernel {
    pub mean_factor: f64,
    pub cond_std: f64,
}

impl PerturbationKernel {
    pub fn cond_var(&self) -> f64 {
        self.cond_std * self.cond_std
    }
}

/// Isotropic Gaussian prior `N(mean, variance I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Monotonicity rate of the drift; for `b(t)(x - mu)` it is `b(t)` itself.
#[derive(Debug, Clone)]
pub struct ContractionProfile {
    spec: DiffusionSpec,
    /// Minimum of `r_b` over `[0, T]`.
    pub min_rate: f64,
    /// Where the minimum is attained.
    pub argmin: f64,
    /// Practical contractiveness criterion `min r_b > 0`.
    pub is_cdpm: bool,
}

impl ContractionProfile {
    pub fn rate(&self, t: f64) -> Result<f64> {
        self.spec.drift_factor(t)
    }

    /// `inf_t (r_b(t) - lipschitz(t) * sigma^2(t))` over a uniform grid of `n + 1` points.
    ///
    /// With `lipschitz = L + h` this is the margin `alpha` of the contractive
    /// condition; with the matched-score constant `L_s` it is `beta`.
    pub fn margin<F>(&self, lipschitz: F, n: usize) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let horizon = self.spec.horizon;
        (0..=n)
            .map(|i| {
                let t = horizon * i as f64 / n as f64;
                self.spec.b(t) - lipschitz(t) * self.spec.sigma_sq(t)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl DiffusionSpec {
    pub fn new(kind: SdeKind, params: SdeParams, horizon: f64, dim: usize) -> Result<Self> {
        positive("T", horizon)?;
        if dim == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        match (kind, params) {
            (SdeKind::Ou | SdeKind::Cou, SdeParams::Constant { theta, sigma }) => {
                positive("theta", theta)?;
                positive("sigma", sigma)?;
            }
            (SdeKind::Ve, SdeParams::Geometric { sigma_min, sigma_max }) => {
                positive("sigma_min", sigma_min)?;
                positive("sigma_max", sigma_max)?;
                if sigma_min >= sigma_max {
                    return Err(Error::Config(format!(
                        "sigma_min ({sigma_min}) must be < sigma_max ({sigma_max})"
                    )));
                }
            }
            (
                SdeKind::Vp | SdeKind::SubVp | SdeKind::Cvp | SdeKind::CsubVp,
                SdeParams::Linear { beta_min, beta_max },
            ) => {
                positive("beta_min", beta_min)?;
                positive("beta_max", beta_max)?;
                if beta_min >= beta_max {
                    return Err(Error::Config(format!(
                        "beta_min ({beta_min}) must be < beta_max ({beta_max})"
                    )));
                }
            }
            (k, p) => {
                return Err(Error::Config(format!("parameters {p:?} do not fit family {k}")));
            }
        }
        Ok(Self { kind, params, mu: vec![0.0; dim], horizon, dim })
    }

    pub fn ou(theta: f64, sigma: f64, horizon: f64, dim: usize) -> Result<Self> {
        Self::new(SdeKind::Ou, SdeParams::Constant { theta, sigma }, horizon, dim)
    }

    pub fn cou(theta: f64, sigma: f64, horizon: f64, dim: usize) -> Result<Self> {
        Self::new(SdeKind::Cou, SdeParams::Constant { theta, sigma }, horizon, dim)
    }

    pub fn ve(sigma_min: f64, sigma_max: f64, horizon: f64, dim: usize) -> Result<Self> {
        Self::new(SdeKind::Ve, SdeParams::Geometric { sigma_min, sigma_max }, horizon, dim)
    }

    /// One of the four linear-beta families.
    pub fn linear_beta(
        kind: SdeKind,
        beta_min: f64,
        beta_max: f64,
        horizon: f64,
        dim: usize,
    ) -> Result<Self> {
        Self::new(kind, SdeParams::Linear { beta_min, beta_max }, horizon, dim)
    }

    /// The one-dimensional benchmark parameters: theta = 0.2, sigma = 0.5,
    /// beta in [0.02, 0.2], sigma in [0.05, 0.5], T = 10.
    pub fn benchmark(kind: SdeKind, dim: usize) -> Self {
        let params = match kind {
            SdeKind::Ou | SdeKind::Cou => SdeParams::Constant { theta: 0.2, sigma: 0.5 },
            SdeKind::Ve => SdeParams::Geometric { sigma_min: 0.05, sigma_max: 0.5 },
            _ => SdeParams::Linear { beta_min: 0.02, beta_max: 0.2 },
        };
        Self::new(kind, params, 10.0, dim).expect("benchmark parameters are valid")
    }

    /// Sets the drift centre `mu` (OU and COU only).
    pub fn with_mu(mut self, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != self.dim {
            return Err(Error::Config(format!("mu has length {}, expected {}", mu.len(), self.dim)));
        }
        if !matches!(self.kind, SdeKind::Ou | SdeKind::Cou) && mu.iter().any(|&m| m != 0.0) {
            return Err(Error::Config(format!("{} has no drift centre; mu must be 0", self.kind)));
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        positive("T", horizon)?;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn kind(&self) -> SdeKind {
        self.kind
    }

    pub fn params(&self) -> SdeParams {
        self.params
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if t.is_finite() && t >= 0.0 && t <= self.horizon + slack {
            Ok(())
        } else {
            Err(Error::Domain(format!("t = {t} outside [0, {}]", self.horizon)))
        }
    }

    /// `beta(t)` of the linear schedule; `None` for OU/COU/VE.
    pub fn beta(&self, t: f64) -> Option<f64> {
        match self.params {
            SdeParams::Linear { beta_min, beta_max } => {
                Some(beta_min + t / self.horizon * (beta_max - beta_min))
            }
            _ => None,
        }
    }

    /// `int_0^t beta(s) ds` in closed form; `None` for OU/COU/VE.
    pub fn beta_integral(&self, t: f64) -> Option<f64> {
        match self.params {
            SdeParams::Linear { beta_min, beta_max } => {
                Some(beta_min * t + t * t / (2.0 * self.horizon) * (beta_max - beta_min))
            }
            _ => None,
        }
    }

    /// Drift factor without the domain check.
    #[inline]
    pub(crate) fn b(&self, t: f64) -> f64 {
        match (self.kind, self.params) {
            (SdeKind::Ou, SdeParams::Constant { theta, .. }) => -theta,
            (SdeKind::Cou, SdeParams::Constant { theta, .. }) => theta,
            (SdeKind::Ve, _) => 0.0,
            (SdeKind::Vp | SdeKind::SubVp, SdeParams::Linear { .. }) => -0.5 * self.beta(t).unwrap(),
            (SdeKind::Cvp | SdeKind::CsubVp, SdeParams::Linear { .. }) => 0.5 * self.beta(t).unwrap(),
            _ => unreachable!("validated at construction"),
        }
    }

    /// `sigma(t)^2` without the domain check.
    #[inline]
    pub(crate) fn sigma_sq(&self, t: f64) -> f64 {
        match self.params {
            SdeParams::Constant { sigma, .. } => sigma * sigma,
            SdeParams::Geometric { sigma_min, sigma_max } => {
                let ratio_ln = (sigma_max / sigma_min).ln();
                let scale = sigma_min * (ratio_ln * t / self.horizon).exp();
                scale * scale * 2.0 * ratio_ln / self.horizon
            }
            SdeParams::Linear { .. } => {
                let beta = self.beta(t).unwrap();
                let big_b = self.beta_integral(t).unwrap();
                match self.kind {
                    SdeKind::Vp | SdeKind::Cvp => beta,
                    SdeKind::SubVp => beta * -(-2.0 * big_b).exp_m1(),
                    SdeKind::CsubVp => beta * (2.0 * big_b).exp_m1(),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Scalar drift coefficient `b(t)` of `b(t, x) = b(t)(x - mu)`.
    pub fn drift_factor(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.b(t))
    }

    /// Diffusion coefficient `sigma(t) >= 0`.
    pub fn diffusion_coeff(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.sigma_sq(t).max(0.0).sqrt())
    }

    /// Closed-form perturbation kernel at time `t`.
    pub fn kernel(&self, t: f64) -> Result<PerturbationKernel> {
        self.check_time(t)?;
        Ok(self.kernel_unchecked(t))
    }

    pub(crate) fn kernel_unchecked(&self, t: f64) -> PerturbationKernel {
        let (mean_factor, cond_std) = match (self.kind, self.params) {
            (SdeKind::Ou, SdeParams::Constant { theta, sigma }) => {
                let var = sigma * sigma * -(-2.0 * theta * t).exp_m1() / (2.0 * theta);
                ((-theta * t).exp(), var.sqrt())
            }
            (SdeKind::Cou, SdeParams::Constant { theta, sigma }) => {
                let var = sigma * sigma * (2.0 * theta * t).exp_m1() / (2.0 * theta);
                ((theta * t).exp(), var.sqrt())
            }
            (SdeKind::Ve, SdeParams::Geometric { sigma_min, sigma_max }) => {
                let exponent = 2.0 * t / self.horizon * (sigma_max / sigma_min).ln();
                (1.0, (sigma_min * sigma_min * exponent.exp_m1()).sqrt())
            }
            (SdeKind::Vp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                ((-0.5 * big_b).exp(), (-(-big_b).exp_m1()).sqrt())
            }
            (SdeKind::SubVp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                ((-0.5 * big_b).exp(), -(-big_b).exp_m1())
            }
            (SdeKind::Cvp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                ((0.5 * big_b).exp(), big_b.exp_m1().sqrt())
            }
            (SdeKind::CsubVp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                ((0.5 * big_b).exp(), big_b.exp_m1())
            }
            _ => unreachable!("validated at construction"),
        };
        PerturbationKernel { mean_factor, cond_std }
    }

    /// Conditional mean `mu + f(t)(x0 - mu)` written into `out`.
    pub fn kernel_mean(&self, kernel: &PerturbationKernel, x0: &[f64], out: &mut [f64]) {
        for ((o, &x), &m) in out.iter_mut().zip(x0).zip(&self.mu) {
            *o = m + kernel.mean_factor * (x - m);
        }
    }

    /// Natural log of the prior variance, computed without overflow.
    pub fn prior_log_variance(&self) -> f64 {
        let horizon = self.horizon;
        match (self.kind, self.params) {
            (SdeKind::Ou, SdeParams::Constant { theta, sigma }) => (sigma * sigma / (2.0 * theta)).ln(),
            (SdeKind::Cou, SdeParams::Constant { theta, sigma }) => {
                // ln(sigma^2 / 2 theta) + ln(e^{2 theta T} - 1)
                (sigma * sigma / (2.0 * theta)).ln() + ln_expm1(2.0 * theta * horizon)
            }
            (SdeKind::Ve, SdeParams::Geometric { sigma_max, .. }) => 2.0 * sigma_max.ln(),
            (SdeKind::Vp | SdeKind::SubVp, _) => 0.0,
            (SdeKind::Cvp, _) => ln_expm1(self.beta_integral(horizon).unwrap()),
            (SdeKind::CsubVp, _) => 2.0 * ln_expm1(self.beta_integral(horizon).unwrap()),
            _ => unreachable!(),
        }
    }

    /// Non-informative prior used to start the backward process.
    pub fn prior(&self) -> Result<PriorSpec> {
        let log_var = self.prior_log_variance();
        if !log_var.is_finite() || log_var > MAX_PRIOR_VARIANCE.ln() {
            return Err(Error::Config(format!(
                "{} prior variance e^{log_var:.1} exceeds {MAX_PRIOR_VARIANCE:e}; reduce T or the rate parameters",
                self.kind
            )));
        }
        Ok(PriorSpec { mean: self.mu.clone(), variance: log_var.exp() })
    }

    pub fn contraction_profile(&self) -> ContractionProfile {
        // b(t) is monotone in t for every family, so the minimum sits at an endpoint.
        let (b0, b_end) = (self.b(0.0), self.b(self.horizon));
        let (min_rate, argmin) = if b0 <= b_end { (b0, 0.0) } else { (b_end, self.horizon) };
        ContractionProfile { spec: self.clone(), min_rate, argmin, is_cdpm: min_rate > 0.0 }
    }

    /// `int_a^b r_b(s) ds` in closed form.
    pub fn drift_integral(&self, a: f64, b: f64) -> f64 {
        let prim = |t: f64| match (self.kind, self.params) {
            (SdeKind::Ou, SdeParams::Constant { theta, .. }) => -theta * t,
            (SdeKind::Cou, SdeParams::Constant { theta, .. }) => theta * t,
            (SdeKind::Ve, _) => 0.0,
            (SdeKind::Vp | SdeKind::SubVp, _) => -0.5 * self.beta_integral(t).unwrap(),
            (SdeKind::Cvp | SdeKind::CsubVp, _) => 0.5 * self.beta_integral(t).unwrap(),
            _ => unreachable!(),
        };
        prim(b) - prim(a)
    }

    /// `int_a^b sigma^2(s) ds` in closed form.
    pub fn diffusion_sq_integral(&self, a: f64, b: f64) -> f64 {
        let prim = |t: f64| match (self.kind, self.params) {
            (_, SdeParams::Constant { sigma, .. }) => sigma * sigma * t,
            (_, SdeParams::Geometric { sigma_min, sigma_max }) => {
                let exponent = 2.0 * t / self.horizon * (sigma_max / sigma_min).ln();
                sigma_min * sigma_min * exponent.exp_m1()
            }
            (SdeKind::Vp | SdeKind::Cvp, _) => self.beta_integral(t).unwrap(),
            (SdeKind::SubVp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                big_b + 0.5 * (-2.0 * big_b).exp_m1()
            }
            (SdeKind::CsubVp, _) => {
                let big_b = self.beta_integral(t).unwrap();
                0.5 * (2.0 * big_b).exp_m1() - big_b
            }
            _ => unreachable!(),
        };
        prim(b) - prim(a)
    }
}

/// `ln(e^x - 1)` for `x > 0`, stable for large and small `x`.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn drift_factor_examples() {
        let ve = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        for t in [0.0, 2.5, 10.0] {
            assert_eq!(ve.drift_factor(t).unwrap(), 0.0);
        }
        let cou = DiffusionSpec::cou(0.2, 0.5, 10.0, 1).unwrap();
        assert_eq!(cou.drift_factor(3.0).unwrap(), 0.2);
        let vp = DiffusionSpec::benchmark(SdeKind::Vp, 1);
        // -(0.02 + 0.5 * 0.18) / 2
        assert!(close(vp.drift_factor(5.0).unwrap(), -0.055, 1e-15));
    }

    #[test]
    fn drift_sign_law() {
        for kind in SdeKind::ALL {
            let spec = DiffusionSpec::benchmark(kind, 1);
            for i in 0..=10 {
                let b = spec.drift_factor(i as f64).unwrap();
                match kind {
                    SdeKind::Ve => assert_eq!(b, 0.0),
                    k if k.is_contractive() => assert!(b > 0.0),
                    _ => assert!(b < 0.0),
                }
            }
        }
    }

    #[test]
    fn out_of_range_time_is_domain_error() {
        let spec = DiffusionSpec::benchmark(SdeKind::Cou, 1);
        assert!(matches!(spec.drift_factor(-0.1), Err(Error::Domain(_))));
        assert!(matches!(spec.diffusion_coeff(10.5), Err(Error::Domain(_))));
        assert!(matches!(spec.kernel(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn diffusion_examples() {
        let ou = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        assert_eq!(ou.diffusion_coeff(7.0).unwrap(), 0.5);
        let csub = DiffusionSpec::benchmark(SdeKind::CsubVp, 1);
        assert_eq!(csub.diffusion_coeff(0.0).unwrap(), 0.0);
        let ve = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        let expected = 0.5 * (0.2 * 10f64.ln()).sqrt();
        assert!(close(ve.diffusion_coeff(10.0).unwrap(), expected, 1e-14));
        assert!(close(expected, 0.33930, 1e-5));
    }

    #[test]
    fn kernel_initial_condition() {
        for kind in SdeKind::ALL {
            let k = DiffusionSpec::benchmark(kind, 1).kernel(0.0).unwrap();
            assert_eq!(k.mean_factor, 1.0, "{kind}");
            assert_eq!(k.cond_std, 0.0, "{kind}");
        }
    }

    #[test]
    fn ou_kernel_long_time_limit() {
        let ou = DiffusionSpec::ou(0.2, 0.5, 200.0, 1).unwrap();
        let k = ou.kernel(200.0).unwrap();
        assert!(close(k.cond_var(), 0.625, 1e-12));
    }

    #[test]
    fn csubvp_kernel_matches_prior_std() {
        let spec = DiffusionSpec::benchmark(SdeKind::CsubVp, 1);
        let k = spec.kernel(10.0).unwrap();
        let expected = (10.0 / 2.0 * (0.2 + 0.02f64)).exp() - 1.0;
        assert!(close(k.cond_std, expected, 1e-13));
        assert!(close(spec.prior().unwrap().variance, expected * expected, 1e-12));
    }

    #[test]
    fn csubvp_std_is_f_times_g() {
        let spec = DiffusionSpec::linear_beta(SdeKind::CsubVp, 0.01, 8.0, 1.0, 1).unwrap();
        for i in 1..=100 {
            let t = i as f64 / 100.0;
            let k = spec.kernel(t).unwrap();
            let f = k.mean_factor;
            let g = f - 1.0 / f;
            assert!(((f * g) - k.cond_std).abs() <= 1e-12 * k.cond_std);
        }
    }

    #[test]
    fn kernel_std_nondecreasing() {
        for kind in SdeKind::ALL {
            let spec = DiffusionSpec::benchmark(kind, 1);
            let mut prev = 0.0;
            for i in 0..=1000 {
                let s = spec.kernel(i as f64 / 100.0).unwrap().cond_std;
                assert!(s >= prev, "{kind} at step {i}");
                prev = s;
            }
        }
    }

    /// The closed-form variance must solve v' = 2 b v + sigma^2, v(0) = 0;
    /// checked against a centred finite difference.
    #[test]
    fn kernel_variance_solves_moment_ode() {
        for kind in SdeKind::ALL {
            let spec = DiffusionSpec::benchmark(kind, 1);
            for i in 1..100 {
                let t = i as f64 / 10.0;
                let h = 1e-5;
                let v = |t: f64| spec.kernel(t).unwrap().cond_var();
                let dv = (v(t + h) - v(t - h)) / (2.0 * h);
                let rhs = 2.0 * spec.b(t) * v(t) + spec.sigma_sq(t);
                assert!((dv - rhs).abs() < 1e-7 * rhs.abs().max(1.0), "{kind} t={t}: {dv} vs {rhs}");
                let f = |t: f64| spec.kernel(t).unwrap().mean_factor;
                let df = (f(t + h) - f(t - h)) / (2.0 * h);
                assert!((df - spec.b(t) * f(t)).abs() < 1e-8, "{kind} mean at t={t}");
            }
        }
    }

    #[test]
    fn priors() {
        let ve = DiffusionSpec::benchmark(SdeKind::Ve, 2).prior().unwrap();
        assert_eq!(ve.mean, vec![0.0, 0.0]);
        assert!(close(ve.variance, 0.25, 1e-15));
        assert_eq!(DiffusionSpec::benchmark(SdeKind::Vp, 1).prior().unwrap().variance, 1.0);
        let cou = DiffusionSpec::benchmark(SdeKind::Cou, 1).prior().unwrap();
        let expected = 0.625 * (4f64.exp() - 1.0);
        assert!(close(cou.variance, expected, 1e-13));
        assert!((cou.variance - 33.50).abs() < 0.005);
    }

    #[test]
    fn prior_matches_terminal_kernel_variance() {
        for kind in [SdeKind::Cou, SdeKind::Cvp, SdeKind::CsubVp] {
            let spec = DiffusionSpec::benchmark(kind, 1);
            let s2 = spec.kernel(10.0).unwrap().cond_var();
            let pv = spec.prior().unwrap().variance;
            assert!((s2 - pv).abs() <= 1e-10 * pv, "{kind}");
        }
        // VE: the table prior is sigma_max^2 while the kernel reaches
        // sigma_max^2 - sigma_min^2; the gap is exactly sigma_min^2.
        let ve = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        let gap = ve.prior().unwrap().variance - ve.kernel(10.0).unwrap().cond_var();
        assert!((gap - 0.05 * 0.05).abs() < 1e-15);
        for kind in [SdeKind::Vp, SdeKind::SubVp] {
            let spec = DiffusionSpec::benchmark(kind, 1);
            let s2 = spec.kernel(10.0).unwrap().cond_var();
            let decay = (-spec.beta_integral(10.0).unwrap()).exp();
            // VP: 1 - s^2 = e^{-B}; subVP: 1 - s^2 = 2e^{-B} - e^{-2B}
            assert!((s2 - 1.0).abs() <= 2.0 * decay, "{kind}");
        }
    }

    #[test]
    fn prior_overflow_guard() {
        let spec = DiffusionSpec::cou(2.0, 0.5, 10.0, 1).unwrap();
        assert!(matches!(spec.prior(), Err(Error::Config(_))));
        let spec = DiffusionSpec::linear_beta(SdeKind::CsubVp, 0.1, 20.0, 10.0, 1).unwrap();
        assert!(matches!(spec.prior(), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DiffusionSpec::ou(0.0, 0.5, 10.0, 1).is_err());
        assert!(DiffusionSpec::ve(0.5, 0.05, 10.0, 1).is_err());
        assert!(DiffusionSpec::linear_beta(SdeKind::Vp, 0.2, 0.02, 10.0, 1).is_err());
        assert!(DiffusionSpec::cou(0.2, 0.5, -1.0, 1).is_err());
        assert!(DiffusionSpec::cou(0.2, 0.5, 1.0, 0).is_err());
        assert!(DiffusionSpec::new(SdeKind::Ve, SdeParams::Constant { theta: 1.0, sigma: 1.0 }, 1.0, 1).is_err());
        assert!(DiffusionSpec::benchmark(SdeKind::Vp, 1).with_mu(vec![1.0]).is_err());
    }

    #[test]
    fn contraction_profiles() {
        let cou = DiffusionSpec::benchmark(SdeKind::Cou, 1).contraction_profile();
        assert_eq!(cou.min_rate, 0.2);
        assert!(cou.is_cdpm);
        let ve = DiffusionSpec::benchmark(SdeKind::Ve, 1).contraction_profile();
        assert_eq!(ve.min_rate, 0.0);
        assert!(!ve.is_cdpm);
        let vp = DiffusionSpec::benchmark(SdeKind::Vp, 1).contraction_profile();
        // grid-scan oracle over -beta(t)/2
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 1);
        let scanned = (0..=10_000)
            .map(|i| spec.drift_factor(i as f64 * 1e-3).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(close(vp.min_rate, scanned, 1e-14));
        assert!(!vp.is_cdpm);
        for kind in SdeKind::ALL {
            let p = DiffusionSpec::benchmark(kind, 1).contraction_profile();
            assert_eq!(p.is_cdpm, kind.is_contractive(), "{kind}");
            assert_eq!(p.rate(3.0).unwrap(), DiffusionSpec::benchmark(kind, 1).drift_factor(3.0).unwrap());
        }
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        for kind in SdeKind::ALL {
            let spec = DiffusionSpec::benchmark(kind, 1);
            let n = 20_000;
            let (a, b) = (1.5, 9.0);
            let h = (b - a) / n as f64;
            let mut qb = 0.0;
            let mut qs = 0.0;
            for i in 0..n {
                let t = a + (i as f64 + 0.5) * h;
                qb += spec.b(t) * h;
                qs += spec.sigma_sq(t) * h;
            }
            assert!((spec.drift_integral(a, b) - qb).abs() < 1e-8, "{kind}");
            assert!((spec.diffusion_sq_integral(a, b) - qs).abs() < 1e-7 * qs.max(1.0), "{kind}");
        }
    }

    #[test]
    fn kind_parsing_round_trip() {
        for kind in SdeKind::ALL {
            assert_eq!(kind.name().parse::<SdeKind>().unwrap(), kind);
        }
        assert!("nope".parse::<SdeKind>().is_err());
    }
}
