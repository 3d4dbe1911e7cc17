//! Experiment configuration files.
//!
//! A config is a TOML document with optional sections `[sde]`, `[target]`,
//! `[sampler]`, `[noise]`, `[metric]`, `[sweep]`, `[bounds]`, `[check]` and
//! `[output]`. Every key is optional; each subcommand fills in its own
//! defaults. The grammar is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sampler::{Method, SamplerConfig, StepRule, T_EPS_FRACTION};
use crate::score::{NoiseMode, NoiseModel};
use crate::sde::{DiffusionSpec, SdeKind, SdeParams};

use super::dataset::DatasetSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub kind: Option<String>,
    pub kinds: Option<Vec<String>>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// `point_mass`, `gaussian`, `mixture` or `swiss_roll`.
    pub kind: Option<String>,
    pub x0: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub var: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub vars: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub angle_min: Option<f64>,
    pub angle_max: Option<f64>,
    pub scale: Option<f64>,
    pub jitter: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub method: Option<String>,
    pub n_steps: Option<usize>,
    pub delta: Option<f64>,
    pub snr: Option<f64>,
    pub corrector_steps: Option<usize>,
    pub n_paths: Option<usize>,
    pub step_rule: Option<String>,
    pub t_eps_fraction: Option<f64>,
    pub save_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub mode: Option<String>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub method: Option<String>,
    pub n: Option<usize>,
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilon: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub n_seeds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub lipschitz: Option<f64>,
    pub eta: Option<f64>,
    pub h: Option<f64>,
    pub kappa: Option<f64>,
    pub second_moment: Option<f64>,
    pub u_points: Option<usize>,
    /// Also run the sampler and compare the bound with measured W2.
    pub empirical: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub grid_t: Option<usize>,
    pub grid_x: Option<usize>,
    pub tolerance: Option<f64>,
    /// Two CSV files of samples for the `w2` subcommand.
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub save_every: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.output.seed = Some(s);
        }
        if let Some(d) = &o.out {
            self.output.dir = Some(d.clone());
        }
        if let Some(k) = o.save_every {
            self.sampler.save_every = Some(k);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation, hex encoded. The output
    /// directory is left out so that moving results does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        Sha256::digest(c.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn base_seed(&self) -> u64 {
        self.output.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Explicit seed list, or `n_seeds` seeds derived from the base seed.
    pub fn seeds(&self, default_n: usize) -> Vec<u64> {
        if let Some(s) = &self.sweep.seeds {
            return s.clone();
        }
        let n = self.sweep.n_seeds.unwrap_or(default_n);
        (0..n as u64).map(|i| derive_seed(self.base_seed(), i)).collect()
    }

    /// Families listed in `[sde]`, or the given defaults.
    pub fn kinds(&self, default: &[SdeKind]) -> Result<Vec<SdeKind>> {
        match (&self.sde.kinds, &self.sde.kind) {
            (Some(list), _) => list.iter().map(|k| k.parse()).collect(),
            (None, Some(k)) => Ok(vec![k.parse()?]),
            (None, None) => Ok(default.to_vec()),
        }
    }

    /// The benchmark model for `kind` with every key of `[sde]` applied.
    pub fn build_spec(&self, kind: SdeKind, default_dim: usize) -> Result<DiffusionSpec> {
        let s = &self.sde;
        let dim = s.dim.unwrap_or(default_dim);
        let base = DiffusionSpec::benchmark(kind, dim);
        let params = match base.params() {
            SdeParams::Constant { theta, sigma } => {
                SdeParams::Constant { theta: s.theta.unwrap_or(theta), sigma: s.sigma.unwrap_or(sigma) }
            }
            SdeParams::Geometric { sigma_min, sigma_max } => SdeParams::Geometric {
                sigma_min: s.sigma_min.unwrap_or(sigma_min),
                sigma_max: s.sigma_max.unwrap_or(sigma_max),
            },
            SdeParams::Linear { beta_min, beta_max } => SdeParams::Linear {
                beta_min: s.beta_min.unwrap_or(beta_min),
                beta_max: s.beta_max.unwrap_or(beta_max),
            },
        };
        let spec = DiffusionSpec::new(kind, params, s.horizon.unwrap_or(base.horizon()), dim)?;
        match (&s.mu, kind) {
            (Some(mu), SdeKind::Ou | SdeKind::Cou) => spec.with_mu(mu.clone()),
            _ => Ok(spec),
        }
    }

    /// Dataset description from `[target]`, with `default_kind` when unset.
    pub fn dataset(&self, default_kind: &str) -> Result<DatasetSpec> {
        DatasetSpec::from_section(&self.target, default_kind, self.base_seed())
    }

    pub fn noise_model(&self, epsilon: f64, seed: u64) -> Result<NoiseModel> {
        let mode: NoiseMode = self.noise.mode.as_deref().unwrap_or("per_eval").parse()?;
        NoiseModel::new(mode, epsilon, seed)
    }

    pub fn epsilons(&self, default: &[f64]) -> Vec<f64> {
        self.sweep.epsilon.clone().or_else(|| self.noise.epsilon.map(|e| vec![e])).unwrap_or_else(|| default.to_vec())
    }

    pub fn deltas(&self, default: &[f64]) -> Vec<f64> {
        self.sweep.delta.clone().or_else(|| self.sampler.delta.map(|d| vec![d])).unwrap_or_else(|| default.to_vec())
    }

    /// Sampler settings for one run. The step count is `n_steps` when given,
    /// else `round((T - t_eps) / delta)`.
    pub fn sampler_config(&self, spec: &DiffusionSpec, delta: Option<f64>, seed: u64, defaults: &SamplerSection) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let pick = |a: Option<f64>, b: Option<f64>| a.or(b);
        let method: Method = s.method.as_deref().or(defaults.method.as_deref()).unwrap_or("em").parse()?;
        let t_eps_fraction = pick(s.t_eps_fraction, defaults.t_eps_fraction).unwrap_or(T_EPS_FRACTION);
        let n_steps = match (delta, s.n_steps.or(defaults.n_steps)) {
            (Some(d), _) => steps_for(spec.horizon(), t_eps_fraction, d)?,
            (None, Some(n)) => n,
            (None, None) => steps_for(spec.horizon(), t_eps_fraction, pick(s.delta, defaults.delta).unwrap_or(0.01))?,
        };
        let step_rule = match s.step_rule.as_deref().or(defaults.step_rule.as_deref()).unwrap_or("batch_mean") {
            "batch_mean" | "batch" => StepRule::BatchMean,
            "per_path" => StepRule::PerPath,
            other => return Err(Error::Config(format!("unknown step_rule '{other}'"))),
        };
        let cfg = SamplerConfig {
            n_steps,
            method,
            snr: pick(s.snr, defaults.snr).unwrap_or(0.16),
            corrector_steps: match method {
                Method::Pc => s.corrector_steps.or(defaults.corrector_steps).unwrap_or(1),
                Method::Em => 0,
            },
            n_paths: s.n_paths.or(defaults.n_paths).unwrap_or(1000),
            seed,
            save_every: s.save_every.or(defaults.save_every).filter(|&k| k > 0),
            t_eps_fraction,
            step_rule,
            zero_noise: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Number of steps of size closest to `delta` covering `[t_eps, T]`.
pub fn steps_for(horizon: f64, t_eps_fraction: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("step size must be > 0, got {delta}")));
    }
    Ok((((1.0 - t_eps_fraction) * horizon / delta).round() as usize).max(1))
}
