//! Score fields `(t, x) -> grad log p(t, x)` and score-matching objectives.

mod affine;
mod losses;
mod mixture;
mod noisy;

pub use affine::AffineScoreFamily;
pub use losses::{dsm_loss, dsm_loss_reparam, esm_loss, ism_loss, ssm_loss, LossEstimate, LossPlan, Weighting};
pub use mixture::{
    exact_score, marginal_logdensity, score_lipschitz, ExactMixtureScore, LipschitzEstimate,
    MixtureTarget,
};
pub use noisy::{noisy_score, NoiseMode, NoiseModel, NoisyScore};

use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};

/// Per-caller evaluation context.
///
/// A context belongs to one logical caller (a trajectory, a loss shard) and
/// owns the noise streams that stochastic score fields draw from. Streams are
/// keyed by `(noise seed, stream id)` and advance with the caller's call order.
#[derive(Debug, Clone)]
pub struct EvalCtx {
    stream: u64,
    slots: Vec<(u64, NoiseStream)>,
}

impl EvalCtx {
    pub fn new(stream: u64) -> Self {
        Self { stream, slots: Vec::new() }
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// The score-noise stream for `seed`, created on first use.
    pub fn noise(&mut self, seed: u64) -> &mut NoiseStream {
        let pos = match self.slots.iter().position(|(s, _)| *s == seed) {
            Some(p) => p,
            None => {
                self.slots.push((seed, NoiseStream::new(seed, self.stream, Role::ScoreNoise)));
                self.slots.len() - 1
            }
        };
        &mut self.slots[pos].1
    }
}

/// An evaluable score field.
pub trait ScoreField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the score at `(t, x)` into `out`.
    fn eval(&self, t: f64, x: &[f64], ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()>;

    /// Exact log-density whose gradient is [`ScoreField::eval`], when known.
    fn log_density(&self, _t: f64, _x: &[f64]) -> Result<f64> {
        Err(Error::Capability("log-density"))
    }

    /// Divergence `div_x s(t, x)`, when known.
    fn divergence(&self, _t: f64, _x: &[f64]) -> Result<f64> {
        Err(Error::Capability("divergence"))
    }

    /// `v . grad_x (v . s(t, x))`. The default uses a central difference with
    /// step `1e-5 * max(1, |x|)`.
    fn directional_curvature(&self, t: f64, x: &[f64], v: &[f64], ctx: &mut EvalCtx) -> Result<f64> {
        let scale = x.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        let h = 1e-5 * scale;
        let d = x.len();
        let mut xp = vec![0.0; d];
        let mut xm = vec![0.0; d];
        for i in 0..d {
            xp[i] = x[i] + h * v[i];
            xm[i] = x[i] - h * v[i];
        }
        let mut sp = vec![0.0; d];
        let mut sm = vec![0.0; d];
        self.eval(t, &xp, ctx, &mut sp)?;
        self.eval(t, &xm, ctx, &mut sm)?;
        Ok(v.iter().zip(sp.iter().zip(&sm)).map(|(vi, (a, b))| vi * (a - b)).sum::<f64>() / (2.0 * h))
    }
}

impl<S: ScoreField + ?Sized> ScoreField for std::sync::Arc<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
        (**self).eval(t, x, ctx, out)
    }
    fn log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        (**self).log_density(t, x)
    }
    fn divergence(&self, t: f64, x: &[f64]) -> Result<f64> {
        (**self).divergence(t, x)
    }
    fn directional_curvature(&self, t: f64, x: &[f64], v: &[f64], ctx: &mut EvalCtx) -> Result<f64> {
        (**self).directional_curvature(t, x, v, ctx)
    }
}

/// Evaluates a score into a fresh vector.
pub fn eval_vec<S: ScoreField + ?Sized>(s: &S, t: f64, x: &[f64], ctx: &mut EvalCtx) -> Result<Vec<f64>> {
    let mut out = vec![0.0; s.dim()];
    s.eval(t, x, ctx, &mut out)?;
    Ok(out)
}
