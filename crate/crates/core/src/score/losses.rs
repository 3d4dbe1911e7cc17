//! Monte-Carlo score-matching objectives.
//!
//! All four estimators share one sampling plan: sample `i` lives in shard
//! `i / SHARD`, and shard `k` draws its times, data points and kernel noise
//! from streams with index `k`. Two estimators called with the same plan
//! therefore see identical `(t, x0, x_t)` triples (common random numbers), and
//! the shard sums are reduced in shard order so the result does not depend on
//! the thread count.

use rayon::prelude::*;

use super::{EvalCtx, MixtureTarget, ScoreField};
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};
use crate::sde::DiffusionSpec;

const SHARD: usize = 4096;

/// Weighting `lambda(t)` of the objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unit,
    /// `lambda(t) = s(t)^2`.
    KernelVariance,
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" | "one" | "1" => Ok(Self::Unit),
            "kernel_variance" | "s2" | "variance" => Ok(Self::KernelVariance),
            other => Err(Error::Config(format!("unknown weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossPlan {
    pub spec: DiffusionSpec,
    pub target: MixtureTarget,
    pub weighting: Weighting,
    pub n: usize,
    pub seed: u64,
    /// Lower end of the uniform time draw; defaults to `1e-3 T`.
    pub t_min: f64,
}

impl LossPlan {
    pub fn new(spec: DiffusionSpec, target: MixtureTarget, weighting: Weighting, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("loss estimators need n >= 1".into()));
        }
        if spec.dim() != target.dim() {
            return Err(Error::Usage(format!(
                "SDE dimension {} does not match target dimension {}",
                spec.dim(),
                target.dim()
            )));
        }
        let t_min = 1e-3 * spec.horizon();
        Ok(Self { spec, target, weighting, n, seed, t_min })
    }

    pub fn with_t_min(mut self, t_min: f64) -> Result<Self> {
        // s(0) = 0 makes the conditional score singular
        if !(t_min > 0.0 && t_min < self.spec.horizon()) {
            return Err(Error::Domain(format!("t_min = {t_min} outside (0, T)")));
        }
        self.t_min = t_min;
        Ok(self)
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// One draw of the shared sampling plan.
struct Draw<'a> {
    t: f64,
    x: &'a [f64],
    /// Conditional mean `mu + f (x0 - mu)`.
    mean: &'a [f64],
    /// Standard-normal kernel noise, `x = mean + s z`.
    z: &'a [f64],
    s: f64,
    lambda: f64,
}

fn run<F>(plan: &LossPlan, per_sample: F) -> Result<LossEstimate>
where
    F: Fn(&Draw, &mut Shard) -> Result<f64> + Sync,
{
    let d = plan.spec.dim();
    let horizon = plan.spec.horizon();
    let shards = plan.n.div_ceil(SHARD);
    let sums: Vec<Result<(f64, f64)>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let count = SHARD.min(plan.n - k * SHARD);
            let idx = k as u64;
            let mut times = NoiseStream::new(plan.seed, idx, Role::Time);
            let mut data = NoiseStream::new(plan.seed, idx, Role::Target);
            let mut noise = NoiseStream::new(plan.seed, idx, Role::Kernel);
            let mut shard = Shard {
                ctx: EvalCtx::new(idx),
                oracle_ctx: EvalCtx::new(idx),
                projections: NoiseStream::new(plan.seed, idx, Role::Projection),
                buf: vec![0.0; d],
                buf2: vec![0.0; d],
                v: vec![0.0; d],
            };
            let (mut x0, mut x, mut mean, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..count {
                let t = plan.t_min + (horizon - plan.t_min) * times.uniform();
                plan.target.sample_into(&mut data, &mut x0);
                noise.fill_normal(&mut z);
                let k = plan.spec.kernel_unchecked(t);
                plan.spec.kernel_mean(&k, &x0, &mut mean);
                for i in 0..d {
                    x[i] = mean[i] + k.cond_std * z[i];
                }
                let lambda = match plan.weighting {
                    Weighting::Unit => 1.0,
                    Weighting::KernelVariance => k.cond_var(),
                };
                let draw = Draw { t, x: &x, mean: &mean, z: &z, s: k.cond_std, lambda };
                let v = per_sample(&draw, &mut shard)?;
                sum += v;
                sum_sq += v * v;
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for r in sums {
        let (a, b) = r?;
        sum += a;
        sum_sq += b;
    }
    let n = plan.n as f64;
    let value = sum / n;
    let stderr = if plan.n > 1 { ((sum_sq / n - value * value).max(0.0) / (n - 1.0)).sqrt() } else { f64::NAN };
    Ok(LossEstimate { value, stderr, n: plan.n })
}

struct Shard {
    ctx: EvalCtx,
    oracle_ctx: EvalCtx,
    projections: NoiseStream,
    buf: Vec<f64>,
    buf2: Vec<f64>,
    v: Vec<f64>,
}

fn check_dim<S: ScoreField + ?Sized>(s: &S, plan: &LossPlan) -> Result<()> {
    if s.dim() != plan.spec.dim() {
        return Err(Error::Usage(format!("score dimension {} != SDE dimension {}", s.dim(), plan.spec.dim())));
    }
    Ok(())
}

/// Explicit score matching against an exact oracle.
pub fn esm_loss<S, O>(s: &S, oracle: &O, plan: &LossPlan) -> Result<LossEstimate>
where
    S: ScoreField + ?Sized,
    O: ScoreField + ?Sized,
{
    check_dim(s, plan)?;
    check_dim(oracle, plan)?;
    run(plan, |draw, sh| {
        s.eval(draw.t, draw.x, &mut sh.ctx, &mut sh.buf)?;
        oracle.eval(draw.t, draw.x, &mut sh.oracle_ctx, &mut sh.buf2)?;
        let r2: f64 = sh.buf.iter().zip(&sh.buf2).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(draw.lambda * r2)
    })
}

/// Implicit score matching `E lambda (|s|^2 + 2 div s)`.
pub fn ism_loss<S: ScoreField + ?Sized>(s: &S, plan: &LossPlan) -> Result<LossEstimate> {
    check_dim(s, plan)?;
    run(plan, |draw, sh| {
        s.eval(draw.t, draw.x, &mut sh.ctx, &mut sh.buf)?;
        let div = s.divergence(draw.t, draw.x)?;
        Ok(draw.lambda * (sh.buf.iter().map(|a| a * a).sum::<f64>() + 2.0 * div))
    })
}

/// Denoising score matching against the conditional score `(mean - x) / s^2`.
pub fn dsm_loss<S: ScoreField + ?Sized>(s: &S, plan: &LossPlan) -> Result<LossEstimate> {
    check_dim(s, plan)?;
    run(plan, |draw, sh| {
        if draw.s == 0.0 {
            return Err(Error::Singular(format!("conditional score undefined at t = {} (s(t) = 0)", draw.t)));
        }
        let var = draw.s * draw.s;
        s.eval(draw.t, draw.x, &mut sh.ctx, &mut sh.buf)?;
        let r2: f64 = sh
            .buf
            .iter()
            .zip(draw.x.iter().zip(draw.mean))
            .map(|(a, (x, m))| {
                let e = a - (m - x) / var;
                e * e
            })
            .sum();
        Ok(draw.lambda * r2)
    })
}

/// Reparameterised DSM `E |s(t) s_theta(t, x) + z|^2`; equals [`dsm_loss`]
/// with [`Weighting::KernelVariance`] on the same draws.
pub fn dsm_loss_reparam<S: ScoreField + ?Sized>(s: &S, plan: &LossPlan) -> Result<LossEstimate> {
    check_dim(s, plan)?;
    run(plan, |draw, sh| {
        s.eval(draw.t, draw.x, &mut sh.ctx, &mut sh.buf)?;
        Ok(sh.buf.iter().zip(draw.z).map(|(a, z)| (draw.s * a + z).powi(2)).sum())
    })
}

/// Sliced score matching `E lambda mean_k[(v_k . s)^2 + 2 v_k . grad(v_k . s)]`
/// with standard-normal projections.
pub fn ssm_loss<S: ScoreField + ?Sized>(s: &S, plan: &LossPlan, n_projections: usize) -> Result<LossEstimate> {
    check_dim(s, plan)?;
    if n_projections == 0 {
        return Err(Error::Usage("n_projections must be >= 1".into()));
    }
    run(plan, |draw, sh| {
        s.eval(draw.t, draw.x, &mut sh.ctx, &mut sh.buf)?;
        let mut acc = 0.0;
        for _ in 0..n_projections {
            sh.projections.fill_normal(&mut sh.v);
            let vs: f64 = sh.v.iter().zip(&sh.buf).map(|(a, b)| a * b).sum();
            let curv = s.directional_curvature(draw.t, draw.x, &sh.v, &mut sh.ctx)?;
            acc += vs * vs + 2.0 * curv;
        }
        Ok(draw.lambda * acc / n_projections as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{AffineScoreFamily, ExactMixtureScore};
    use crate::sde::SdeKind;

    fn vp_standard(n: usize, seed: u64) -> LossPlan {
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 1);
        let target = MixtureTarget::gaussian(vec![0.0], 1.0).unwrap();
        LossPlan::new(spec, target, Weighting::Unit, n, seed).unwrap()
    }

    #[test]
    fn esm_self_match_is_zero() {
        let plan = vp_standard(10_000, 1);
        let oracle = ExactMixtureScore::new(plan.spec.clone(), plan.target.clone()).unwrap();
        assert_eq!(esm_loss(&oracle, &oracle, &plan).unwrap().value, 0.0);
    }

    #[test]
    fn esm_constant_offset() {
        // exact VP score of N(0,1) is -x, so A = -1, c = 0.3 is the oracle plus 0.3
        let plan = vp_standard(1000, 2);
        let oracle = ExactMixtureScore::new(plan.spec.clone(), plan.target.clone()).unwrap();
        let s = AffineScoreFamily::constant(-1.0, vec![0.3]).unwrap();
        let e = esm_loss(&s, &oracle, &plan).unwrap();
        assert!((e.value - 0.09).abs() < 1e-12);
    }

    #[test]
    fn ism_examples() {
        let plan = vp_standard(200_000, 3);
        let s = AffineScoreFamily::constant(-1.0, vec![0.0]).unwrap();
        let e = ism_loss(&s, &plan).unwrap();
        assert!((e.value + 1.0).abs() < 3.0 * e.stderr, "{e:?}");
        let zero = AffineScoreFamily::constant(0.0, vec![0.0]).unwrap();
        assert_eq!(ism_loss(&zero, &plan).unwrap().value, 0.0);
        assert_eq!(ssm_loss(&zero, &plan, 4).unwrap().value, 0.0);
    }

    #[test]
    fn ism_requires_divergence() {
        struct NoDiv;
        impl ScoreField for NoDiv {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _: f64, x: &[f64], _: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
                out[0] = -x[0];
                Ok(())
            }
        }
        let plan = vp_standard(10, 0);
        assert!(matches!(ism_loss(&NoDiv, &plan), Err(Error::Capability(_))));
    }

    #[test]
    fn dsm_self_match_point_mass() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        let target = MixtureTarget::point_mass(vec![-1.0]);
        let plan = LossPlan::new(spec.clone(), target.clone(), Weighting::Unit, 5000, 4).unwrap();
        let s = ExactMixtureScore::new(spec, target).unwrap();
        assert_eq!(dsm_loss(&s, &plan).unwrap().value, 0.0);
    }

    #[test]
    fn time_range_excludes_zero() {
        let plan = vp_standard(10, 0);
        assert!(plan.clone().with_t_min(0.0).is_err());
        assert!(plan.clone().with_t_min(10.0).is_err());
        assert!(plan.with_t_min(0.5).is_ok());
    }

    #[test]
    fn dsm_reparameterised_form() {
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 2);
        let target =
            MixtureTarget::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![-1.0, 0.5]], vec![0.2, 0.0]).unwrap();
        let plan = LossPlan::new(spec, target, Weighting::KernelVariance, 20_000, 5).unwrap();
        let s = AffineScoreFamily::constant(-0.8, vec![0.1, -0.2]).unwrap();
        let a = dsm_loss(&s, &plan).unwrap();
        let b = dsm_loss_reparam(&s, &plan).unwrap();
        assert!((a.value - b.value).abs() < 1e-9 * a.value.abs().max(1.0));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let plan = vp_standard(20_000, 6);
        let s = AffineScoreFamily::constant(-0.5, vec![0.1]).unwrap();
        let a = dsm_loss(&s, &plan).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| dsm_loss(&s, &plan).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn ssm_matches_ism_in_one_dimension() {
        let plan = vp_standard(100_000, 7);
        let s = AffineScoreFamily::constant(-0.6, vec![0.2]).unwrap();
        let i = ism_loss(&s, &plan).unwrap();
        let j = ssm_loss(&s, &plan, 1).unwrap();
        let se = (i.stderr.powi(2) + j.stderr.powi(2)).sqrt();
        assert!((i.value - j.value).abs() < 3.0 * se, "{i:?} {j:?}");
    }
}
