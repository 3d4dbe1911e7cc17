use std::f64::consts::PI;

use super::config::TargetSection;
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};
use crate::score::MixtureTarget;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    PointMass { x0: Vec<f64> },
    GaussianMixture(MixtureTarget),
    /// `u ~ U[angle_min, angle_max]`, point `scale (u cos u, u sin u) / angle_max + jitter z`.
    SwissRoll { angle_min: f64, angle_max: f64, scale: f64, jitter: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Default sample count.
    pub n: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn point_mass(x0: Vec<f64>, n: usize, seed: u64) -> Self {
        Self { kind: DatasetKind::PointMass { x0 }, n, seed }
    }

    pub fn swiss_roll(n: usize, seed: u64) -> Self {
        let kind = DatasetKind::SwissRoll { angle_min: 1.5 * PI, angle_max: 4.5 * PI, scale: 1.0, jitter: 0.0 };
        Self { kind, n, seed }
    }

    pub(crate) fn from_section(t: &TargetSection, default_kind: &str, base_seed: u64) -> Result<Self> {
        let seed = t.seed.unwrap_or(base_seed);
        let n = t.n.unwrap_or(1000);
        let kind = match t.kind.as_deref().unwrap_or(default_kind) {
            "point_mass" => DatasetKind::PointMass { x0: t.x0.clone().unwrap_or_else(|| vec![-1.0]) },
            "gaussian" => {
                let mean = t.mean.clone().unwrap_or_else(|| vec![0.0]);
                DatasetKind::GaussianMixture(MixtureTarget::gaussian(mean, t.var.unwrap_or(1.0))?)
            }
            "mixture" => {
                let (Some(w), Some(m), Some(v)) = (&t.weights, &t.means, &t.vars) else {
                    return Err(Error::Config("a mixture target needs weights, means and vars".into()));
                };
                DatasetKind::GaussianMixture(MixtureTarget::new(w.clone(), m.clone(), v.clone())?)
            }
            "swiss_roll" => {
                let angle_min = t.angle_min.unwrap_or(1.5 * PI);
                let angle_max = t.angle_max.unwrap_or(4.5 * PI);
                if !(angle_min > 0.0 && angle_max > angle_min) {
                    return Err(Error::Config(format!("swiss roll angles need 0 < min < max, got [{angle_min}, {angle_max}]")));
                }
                let scale = t.scale.unwrap_or(1.0);
                let jitter = t.jitter.unwrap_or(0.0);
                if !(scale > 0.0 && jitter >= 0.0) {
                    return Err(Error::Config("swiss roll needs scale > 0 and jitter >= 0".into()));
                }
                DatasetKind::SwissRoll { angle_min, angle_max, scale, jitter }
            }
            other => return Err(Error::Config(format!("unknown target kind '{other}'"))),
        };
        Ok(Self { kind, n, seed })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DatasetKind::PointMass { x0 } => x0.len(),
            DatasetKind::GaussianMixture(m) => m.dim(),
            DatasetKind::SwissRoll { .. } => 2,
        }
    }

    /// The target law: exact for point masses and mixtures, the empirical
    /// measure of `generate_dataset(self)` for the swiss roll.
    pub fn target(&self) -> Result<MixtureTarget> {
        match &self.kind {
            DatasetKind::PointMass { x0 } => Ok(MixtureTarget::point_mass(x0.clone())),
            DatasetKind::GaussianMixture(m) => Ok(m.clone()),
            DatasetKind::SwissRoll { .. } => {
                let pts = generate_dataset(self);
                MixtureTarget::empirical(pts.chunks(2).map(|r| r.to_vec()).collect())
            }
        }
    }
}

/// `n` draws, row-major `n x d`, deterministic in `(seed, n)`.
pub fn generate_n(ds: &DatasetSpec, n: usize, seed: u64) -> Vec<f64> {
    match &ds.kind {
        DatasetKind::PointMass { x0 } => x0.iter().cloned().cycle().take(n * x0.len()).collect(),
        DatasetKind::GaussianMixture(m) => m.sample(n, seed),
        &DatasetKind::SwissRoll { angle_min, angle_max, scale, jitter } => {
            let mut s = NoiseStream::new(seed, 0, Role::Dataset);
            let mut out = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let u = angle_min + (angle_max - angle_min) * s.uniform();
                let (zx, zy) = (s.normal(), s.normal());
                out.push(scale * u * u.cos() / angle_max + jitter * zx);
                out.push(scale * u * u.sin() / angle_max + jitter * zy);
            }
            out
        }
    }
}

pub fn generate_dataset(ds: &DatasetSpec) -> Vec<f64> {
    generate_n(ds, ds.n, ds.seed)
}
