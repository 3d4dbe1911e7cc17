//! Change of variables between VE and CsubVP.
//!
//! With `f(t) = e^{B(t)/2}` and `g(t) = f - 1/f`, the CsubVP state is
//! `X_C(t) = f(t) X_VE(tau(t))` where `tau` matches the VE kernel std to `g`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::score::{EvalCtx, ScoreField};
use crate::sde::{DiffusionSpec, SdeKind, SdeParams};

#[derive(Debug, Clone)]
pub struct TransformMap {
    ve: DiffusionSpec,
    c: DiffusionSpec,
    sigma_min: f64,
    sigma_max: f64,
}

/// Outcome of the admissibility check `sigma_max^2 - sigma_min^2 > g(T)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionReport {
    pub holds: bool,
    /// `g(T)^2` on the CsubVP clock.
    pub g_terminal_sq: f64,
    /// `sigma_max^2 - sigma_min^2`.
    pub ve_range: f64,
    /// Largest CsubVP horizon for which the check holds (with the same beta range).
    pub max_horizon: f64,
}

impl TransformMap {
    pub fn new(ve: DiffusionSpec, c: DiffusionSpec) -> Result<Self> {
        let (sigma_min, sigma_max) = match (ve.kind(), ve.params()) {
            (SdeKind::Ve, SdeParams::Geometric { sigma_min, sigma_max }) => (sigma_min, sigma_max),
            _ => return Err(Error::Config(format!("transform source must be VE, got {}", ve.kind()))),
        };
        if c.kind() != SdeKind::CsubVp {
            return Err(Error::Config(format!("transform destination must be CsubVP, got {}", c.kind())));
        }
        if ve.dim() != c.dim() {
            return Err(Error::Usage("VE and CsubVP dimensions differ".into()));
        }
        if ve.mu().iter().any(|&m| m != 0.0) {
            return Err(Error::Config("VE centre must be 0 for the transform".into()));
        }
        Ok(Self { ve, c, sigma_min, sigma_max })
    }

    pub fn ve(&self) -> &DiffusionSpec {
        &self.ve
    }

    pub fn csubvp(&self) -> &DiffusionSpec {
        &self.c
    }

    /// `f(t) = e^{B(t)/2}`.
    pub fn f(&self, t: f64) -> Result<f64> {
        self.c.check_time(t)?;
        Ok((0.5 * self.c.beta_integral(t).unwrap()).exp())
    }

    /// `g(t) = f - 1/f = 2 sinh(B(t)/2)`.
    pub fn g(&self, t: f64) -> Result<f64> {
        self.c.check_time(t)?;
        Ok(2.0 * (0.5 * self.c.beta_integral(t).unwrap()).sinh())
    }

    pub fn check_precondition(&self) -> PreconditionReport {
        let horizon = self.c.horizon();
        let g = 2.0 * (0.5 * self.c.beta_integral(horizon).unwrap()).sinh();
        let ve_range = self.sigma_max * self.sigma_max - self.sigma_min * self.sigma_min;
        let (bmin, bmax) = match self.c.params() {
            SdeParams::Linear { beta_min, beta_max } => (beta_min, beta_max),
            _ => unreachable!(),
        };
        // B(T) = T (beta_min + beta_max) / 2 and g = 2 sinh(B/2)
        let max_horizon = 4.0 * (0.5 * ve_range.sqrt()).asinh() / (bmin + bmax);
        PreconditionReport { holds: ve_range > g * g, g_terminal_sq: g * g, ve_range, max_horizon }
    }

    /// VE time with `s_VE(tau)^2 = g(t)^2`.
    pub fn tau(&self, t: f64) -> Result<f64> {
        let report = self.check_precondition();
        if !report.holds {
            return Err(Error::Config(format!(
                "transform precondition fails: g(T)^2 = {} >= sigma_max^2 - sigma_min^2 = {} (largest admissible T = {})",
                report.g_terminal_sq, report.ve_range, report.max_horizon
            )));
        }
        let g = self.g(t)?;
        let ratio = g / self.sigma_min;
        Ok(0.5 * self.ve.horizon() * (ratio * ratio).ln_1p() / (self.sigma_max / self.sigma_min).ln())
    }

    /// Relative residual of `sigma_min^2 ((sigma_max/sigma_min)^{2 tau/T} - 1) = g(t)^2`.
    pub fn tau_residual(&self, t: f64) -> Result<f64> {
        let tau = self.tau(t)?;
        let g = self.g(t)?;
        let lhs = self.sigma_min.powi(2)
            * (2.0 * tau / self.ve.horizon() * (self.sigma_max / self.sigma_min).ln()).exp_m1();
        let rhs = g * g;
        Ok(if rhs == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / rhs })
    }
}

/// CsubVP score built from a VE score field.
pub struct TransportedScore {
    map: TransformMap,
    ve_score: Arc<dyn ScoreField>,
    /// Drop the `1/f` chain-rule factor, i.e. use `s_VE(tau, x/f)` as written
    /// in the approximate statement.
    pub literal: bool,
}

pub fn transport_score(map: &TransformMap, s_ve: Arc<dyn ScoreField>) -> Result<TransportedScore> {
    if s_ve.dim() != map.ve.dim() {
        return Err(Error::Usage("VE score dimension mismatch".into()));
    }
    map.tau(0.0)?;
    Ok(TransportedScore { map: map.clone(), ve_score: s_ve, literal: false })
}

impl TransportedScore {
    pub fn literal(mut self, on: bool) -> Self {
        self.literal = on;
        self
    }

    fn clock(&self, t: f64) -> Result<(f64, f64)> {
        let tau = self.map.tau(t)?;
        self.map.ve.check_time(tau)?;
        Ok((tau, self.map.f(t)?))
    }
}

impl ScoreField for TransportedScore {
    fn dim(&self) -> usize {
        self.ve_score.dim()
    }

    fn eval(&self, t: f64, x: &[f64], ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
        let (tau, f) = self.clock(t)?;
        let y: Vec<f64> = x.iter().map(|v| v / f).collect();
        self.ve_score.eval(tau, &y, ctx, out)?;
        if !self.literal {
            out.iter_mut().for_each(|o| *o /= f);
        }
        Ok(())
    }

    fn log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        if self.literal {
            return Err(Error::Capability("log-density (literal transport is not a gradient)"));
        }
        let (tau, f) = self.clock(t)?;
        let y: Vec<f64> = x.iter().map(|v| v / f).collect();
        Ok(-(x.len() as f64) * f.ln() + self.ve_score.log_density(tau, &y)?)
    }

    fn divergence(&self, t: f64, x: &[f64]) -> Result<f64> {
        let (tau, f) = self.clock(t)?;
        let y: Vec<f64> = x.iter().map(|v| v / f).collect();
        let div = self.ve_score.divergence(tau, &y)?;
        Ok(if self.literal { div / f } else { div / (f * f) })
    }
}
