use std::sync::Arc;

use super::{EvalCtx, ScoreField};
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Fresh `eps * z` on every evaluation.
    PerEvalGaussian,
    /// One fixed offset `eps * u`, `|u| = 1`, drawn at construction.
    FrozenOffset,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_eval" | "per-eval" | "gaussian" => Ok(Self::PerEvalGaussian),
            "frozen" | "frozen_offset" | "frozen-offset" => Ok(Self::FrozenOffset),
            other => Err(Error::Config(format!("unknown noise mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(mode: NoiseMode, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Config(format!("noise epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { mode, epsilon, seed })
    }
}

/// A score field with injected error.
///
/// Per-evaluation noise is drawn from the caller's [`EvalCtx`] stream for this
/// model's seed, so two callers with the same context id and call order see
/// the same perturbations regardless of threading.
pub struct NoisyScore<S: ScoreField + ?Sized = dyn ScoreField> {
    model: NoiseModel,
    frozen: Vec<f64>,
    base: Arc<S>,
}

impl<S: ScoreField + ?Sized> NoisyScore<S> {
    pub fn new(base: Arc<S>, model: NoiseModel) -> Self {
        let d = base.dim();
        let frozen = match model.mode {
            NoiseMode::FrozenOffset => {
                let mut s = NoiseStream::new(model.seed, 0, Role::ScoreNoise);
                let mut u = vec![0.0; d];
                loop {
                    s.fill_normal(&mut u);
                    let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        u.iter_mut().for_each(|a| *a /= norm);
                        break;
                    }
                }
                u
            }
            NoiseMode::PerEvalGaussian => Vec::new(),
        };
        Self { model, frozen, base }
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    /// The frozen unit direction (empty for per-evaluation noise).
    pub fn offset_direction(&self) -> &[f64] {
        &self.frozen
    }
}

pub fn noisy_score<S: ScoreField + ?Sized>(base: Arc<S>, model: NoiseModel) -> NoisyScore<S> {
    NoisyScore::new(base, model)
}

impl<S: ScoreField + ?Sized> ScoreField for NoisyScore<S> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, t: f64, x: &[f64], ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
        self.base.eval(t, x, ctx, out)?;
        let eps = self.model.epsilon;
        if eps == 0.0 {
            return Ok(());
        }
        match self.model.mode {
            NoiseMode::PerEvalGaussian => {
                let stream = ctx.noise(self.model.seed);
                for o in out.iter_mut() {
                    *o += eps * stream.normal();
                }
            }
            NoiseMode::FrozenOffset => {
                for (o, u) in out.iter_mut().zip(&self.frozen) {
                    *o += eps * u;
                }
            }
        }
        Ok(())
    }

    // The injected term does not depend on x.
    fn divergence(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.base.divergence(t, x)
    }
}
