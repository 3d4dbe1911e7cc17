use nalgebra::DMatrix;

use super::{EvalCtx, ScoreField};
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};
use crate::sde::DiffusionSpec;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Isotropic Gaussian mixture `sum_i w_i N(mean_i, var_i I)`; `var_i = 0` is a point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTarget {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<f64>,
    cumulative: Vec<f64>,
    dim: usize,
}

impl MixtureTarget {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != vars.len() {
            return Err(Error::Config(format!(
                "mixture lists must be non-empty and equal length (weights {}, means {}, vars {})",
                weights.len(),
                means.len(),
                vars.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Config("mixture means must share a dimension >= 1".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 * (weights.len() as f64).max(1.0) {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        if vars.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("component variances must be finite and >= 0".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Config("component means must be finite".into()));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { weights, means, vars, cumulative, dim })
    }

    pub fn point_mass(x0: Vec<f64>) -> Self {
        Self::new(vec![1.0], vec![x0], vec![0.0]).expect("valid point mass")
    }

    pub fn gaussian(mean: Vec<f64>, var: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![var])
    }

    /// Equal-weight point masses on the given samples.
    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Config("empirical target needs at least one point".into()));
        }
        Self::new(vec![1.0 / n as f64; n], points, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn vars(&self) -> &[f64] {
        &self.vars
    }

    pub fn has_point_mass(&self) -> bool {
        self.vars.contains(&0.0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }

    /// `E|X|^2`.
    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.vars))
            .map(|(w, (mu, v))| w * (mu.iter().map(|a| a * a).sum::<f64>() + self.dim as f64 * v))
            .sum()
    }

    /// Draws one sample into `out`.
    pub fn sample_into(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        let i = if self.weights.len() == 1 { 0 } else { stream.categorical(&self.cumulative) };
        let sd = self.vars[i].sqrt();
        for (o, m) in out.iter_mut().zip(&self.means[i]) {
            *o = m + sd * stream.normal();
        }
    }

    /// `n` i.i.d. draws from the stream `(seed, 0, Target)`, row-major `n x d`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut stream = NoiseStream::new(seed, 0, Role::Target);
        let mut out = vec![0.0; n * self.dim];
        for row in out.chunks_mut(self.dim) {
            self.sample_into(&mut stream, row);
        }
        out
    }
}

/// Component means and variances of the time-`t` marginal.
struct Marginal {
    means: Vec<f64>,
    vars: Vec<f64>,
    log_weights: Vec<f64>,
}

fn marginal(spec: &DiffusionSpec, target: &MixtureTarget, t: f64) -> Result<Marginal> {
    spec.check_time(t)?;
    if spec.dim() != target.dim() {
        return Err(Error::Usage(format!(
            "SDE dimension {} does not match target dimension {}",
            spec.dim(),
            target.dim()
        )));
    }
    let k = spec.kernel_unchecked(t);
    let f = k.mean_factor;
    let s2 = k.cond_var();
    let d = target.dim;
    let mut means = vec![0.0; target.len() * d];
    let mut vars = Vec::with_capacity(target.len());
    for (i, (mu, v)) in target.means.iter().zip(&target.vars).enumerate() {
        spec.kernel_mean(&k, mu, &mut means[i * d..(i + 1) * d]);
        let var = f * f * v + s2;
        if var <= 0.0 {
            return Err(Error::Singular(format!(
                "component {i} is a point mass and the kernel is degenerate at t = {t}"
            )));
        }
        vars.push(var);
    }
    let log_weights = target.weights.iter().map(|w| w.ln()).collect();
    Ok(Marginal { means, vars, log_weights })
}

impl Marginal {
    /// Per-component log joint `log w_i + log N(x; m_i, v_i I)`.
    fn component_logs(&self, x: &[f64], buf: &mut Vec<f64>) {
        let d = x.len();
        buf.clear();
        for (i, (&v, &lw)) in self.vars.iter().zip(&self.log_weights).enumerate() {
            let m = &self.means[i * d..(i + 1) * d];
            let r2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            buf.push(lw - 0.5 * r2 / v - 0.5 * d as f64 * (LN_2PI + v.ln()));
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut logs = Vec::with_capacity(self.vars.len());
        self.component_logs(x, &mut logs);
        log_sum_exp(&logs)
    }

    /// Writes the score and returns responsibilities in `logs` (normalised, linear scale).
    fn score(&self, x: &[f64], logs: &mut Vec<f64>, out: &mut [f64]) {
        let d = x.len();
        self.component_logs(x, logs);
        let lse = log_sum_exp(logs);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, l) in logs.iter_mut().enumerate() {
            let g = (*l - lse).exp();
            *l = g;
            if g == 0.0 {
                continue;
            }
            let m = &self.means[i * d..(i + 1) * d];
            let c = g / self.vars[i];
            for ((o, a), b) in out.iter_mut().zip(x).zip(m) {
                *o += c * (b - a);
            }
        }
    }

    /// Score Jacobian `sum g_i (-I / v_i) + Cov_g[(m_i - x) / v_i]`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut logs = Vec::with_capacity(self.vars.len());
        let mut s = vec![0.0; d];
        self.score(x, &mut logs, &mut s);
        let mut jac = DMatrix::<f64>::zeros(d, d);
        let mut u = vec![0.0; d];
        for (i, &g) in logs.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let v = self.vars[i];
            let m = &self.means[i * d..(i + 1) * d];
            for k in 0..d {
                u[k] = (m[k] - x[k]) / v;
            }
            for r in 0..d {
                jac[(r, r)] -= g / v;
                for c in 0..d {
                    jac[(r, c)] += g * u[r] * u[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..d {
                jac[(r, c)] -= s[r] * s[c];
            }
        }
        jac
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|a| (a - max).exp()).sum::<f64>().ln()
}

/// `log p(t, x)` of the forward marginal started from `target`.
pub fn marginal_logdensity(spec: &DiffusionSpec, target: &MixtureTarget, t: f64, x: &[f64]) -> Result<f64> {
    Ok(marginal(spec, target, t)?.log_density(x))
}

/// Closed-form `grad log p(t, x)`.
pub fn exact_score(spec: &DiffusionSpec, target: &MixtureTarget, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let m = marginal(spec, target, t)?;
    let mut out = vec![0.0; x.len()];
    m.score(x, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Lipschitz constant of `x -> grad log p(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// `true` for single-component targets, where the constant is exact.
    pub exact: bool,
}

/// Number of marginal draws used for the sampled supremum.
pub const LIPSCHITZ_DRAWS: usize = 10_000;

pub fn score_lipschitz(spec: &DiffusionSpec, target: &MixtureTarget, t: f64) -> Result<LipschitzEstimate> {
    let m = marginal(spec, target, t)?;
    if target.len() == 1 {
        return Ok(LipschitzEstimate { value: 1.0 / m.vars[0], exact: true });
    }
    let d = target.dim;
    let k = spec.kernel_unchecked(t);
    let mut stream = NoiseStream::new(0, 0, Role::Target);
    let mut x0 = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut norms = Vec::with_capacity(LIPSCHITZ_DRAWS);
    for _ in 0..LIPSCHITZ_DRAWS {
        target.sample_into(&mut stream, &mut x0);
        spec.kernel_mean(&k, &x0, &mut x);
        for xi in x.iter_mut() {
            *xi += k.cond_std * stream.normal();
        }
        let eig = m.jacobian(&x).symmetric_eigenvalues();
        norms.push(eig.iter().map(|e| e.abs()).fold(0.0, f64::max));
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let sd = (norms.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    Ok(LipschitzEstimate { value: max + 3.0 * sd, exact: false })
}

/// Exact score of a mixture target pushed through a diffusion.
#[derive(Debug, Clone)]
pub struct ExactMixtureScore {
    spec: DiffusionSpec,
    target: MixtureTarget,
    /// Row-major component means.
    flat_means: Vec<f64>,
    log_weights: Vec<f64>,
    equal_vars: bool,
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

impl ExactMixtureScore {
    pub fn new(spec: DiffusionSpec, target: MixtureTarget) -> Result<Self> {
        if spec.dim() != target.dim() {
            return Err(Error::Usage(format!(
                "SDE dimension {} does not match target dimension {}",
                spec.dim(),
                target.dim()
            )));
        }
        let flat_means = target.means.concat();
        let log_weights = target.weights.iter().map(|w| w.ln()).collect();
        let equal_vars = target.vars.iter().all(|&v| v == target.vars[0]);
        Ok(Self { spec, target, flat_means, log_weights, equal_vars })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn target(&self) -> &MixtureTarget {
        &self.target
    }

    /// Fast path for single-component targets: `(f mu_0 - x) / (f^2 v + s^2)`.
    fn single(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.spec.check_time(t)?;
        let k = self.spec.kernel_unchecked(t);
        let var = k.mean_factor * k.mean_factor * self.target.vars[0] + k.cond_var();
        if var <= 0.0 {
            return Err(Error::Singular(format!("point-mass target at t = {t}")));
        }
        let mu = self.spec.mu();
        for (((o, a), m0), c) in out.iter_mut().zip(x).zip(&self.target.means[0]).zip(mu) {
            *o = (c + k.mean_factor * (m0 - c) - a) / var;
        }
        Ok(())
    }
}

impl ExactMixtureScore {
    /// Responsibility-weighted score without materialising the marginal.
    fn mixture(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.spec.check_time(t)?;
        let k = self.spec.kernel_unchecked(t);
        let (f, s2) = (k.mean_factor, k.cond_var());
        let d = x.len();
        // component mean f m_i + (1 - f) mu; fold the mu part into x
        let y: Vec<f64> = x.iter().zip(self.spec.mu()).map(|(a, c)| a - (1.0 - f) * c).collect();
        SCRATCH.with(|cell| {
            let mut logs = cell.borrow_mut();
            logs.clear();
            let mut max = f64::NEG_INFINITY;
            for (i, (&v0, &lw)) in self.target.vars.iter().zip(&self.log_weights).enumerate() {
                let v = f * f * v0 + s2;
                if v <= 0.0 {
                    return Err(Error::Singular(format!(
                        "component {i} is a point mass and the kernel is degenerate at t = {t}"
                    )));
                }
                let m = &self.flat_means[i * d..(i + 1) * d];
                let r2: f64 = y.iter().zip(m).map(|(a, b)| (a - f * b) * (a - f * b)).sum();
                let mut l = lw - 0.5 * r2 / v;
                if !self.equal_vars {
                    l -= 0.5 * d as f64 * v.ln();
                }
                max = max.max(l);
                logs.push(l);
            }
            out.iter_mut().for_each(|o| *o = 0.0);
            let mut total = 0.0;
            for (i, &l) in logs.iter().enumerate() {
                let g = (l - max).exp();
                if g == 0.0 {
                    continue;
                }
                total += g;
                let c = g / (f * f * self.target.vars[i] + s2);
                let m = &self.flat_means[i * d..(i + 1) * d];
                for ((o, a), b) in out.iter_mut().zip(&y).zip(m) {
                    *o += c * (f * b - a);
                }
            }
            out.iter_mut().for_each(|o| *o /= total);
            Ok(())
        })
    }
}

impl ScoreField for ExactMixtureScore {
    fn dim(&self) -> usize {
        self.target.dim
    }

    fn eval(&self, t: f64, x: &[f64], _ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
        if self.target.len() == 1 {
            return self.single(t, x, out);
        }
        self.mixture(t, x, out)
    }

    fn log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        marginal_logdensity(&self.spec, &self.target, t, x)
    }

    fn divergence(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(marginal(&self.spec, &self.target, t)?.jacobian(x).trace())
    }

    fn directional_curvature(&self, t: f64, x: &[f64], v: &[f64], _ctx: &mut EvalCtx) -> Result<f64> {
        let j = marginal(&self.spec, &self.target, t)?.jacobian(x);
        let mut acc = 0.0;
        for r in 0..v.len() {
            for c in 0..v.len() {
                acc += v[r] * j[(r, c)] * v[c];
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::SdeKind;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn logdensity_at_mean_cou_point_mass() {
        // pick t with f = 2: theta t = ln 2; sigma chosen so that s = 1 there
        let theta = 0.2;
        let t = 2f64.ln() / theta;
        let sigma = (2.0 * theta / (2.0 * theta * t).exp_m1()).sqrt();
        let spec = DiffusionSpec::cou(theta, sigma, 10.0, 1).unwrap();
        let k = spec.kernel(t).unwrap();
        assert!((k.mean_factor - 2.0).abs() < 1e-14 && (k.cond_std - 1.0).abs() < 1e-14);
        let target = MixtureTarget::point_mass(vec![-1.0]);
        let lp = marginal_logdensity(&spec, &target, t, &[-2.0]).unwrap();
        assert!((lp + HALF_LN_2PI).abs() < 1e-13);
    }

    #[test]
    fn logdensity_identity_kernel_at_zero() {
        for kind in SdeKind::ALL {
            let spec = DiffusionSpec::benchmark(kind, 3);
            let target = MixtureTarget::gaussian(vec![0.0; 3], 1.0).unwrap();
            let lp = marginal_logdensity(&spec, &target, 0.0, &[0.0; 3]).unwrap();
            assert!((lp + 3.0 * HALF_LN_2PI).abs() < 1e-13);
        }
    }

    #[test]
    fn point_mass_at_time_zero_is_singular() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        let target = MixtureTarget::point_mass(vec![-1.0]);
        assert!(matches!(marginal_logdensity(&spec, &target, 0.0, &[0.0]), Err(Error::Singular(_))));
        assert!(matches!(exact_score(&spec, &target, 0.0, &[0.0]), Err(Error::Singular(_))));
        assert!(matches!(score_lipschitz(&spec, &target, 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn single_gaussian_score_formula() {
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 2);
        let target = MixtureTarget::gaussian(vec![0.5, -1.0], 0.3).unwrap();
        let t = 4.0;
        let k = spec.kernel(t).unwrap();
        let var = k.mean_factor.powi(2) * 0.3 + k.cond_var();
        let x = [0.2, 0.7];
        let s = exact_score(&spec, &target, t, &x).unwrap();
        assert!((s[0] - (k.mean_factor * 0.5 - 0.2) / var).abs() < 1e-14);
        assert!((s[1] - (-k.mean_factor - 0.7) / var).abs() < 1e-14);
        let field = ExactMixtureScore::new(spec, target).unwrap();
        let fast = super::super::eval_vec(&field, t, &x, &mut EvalCtx::new(0)).unwrap();
        assert_eq!(fast.len(), 2);
        assert!((fast[0] - s[0]).abs() < 1e-14 && (fast[1] - s[1]).abs() < 1e-14);
    }

    #[test]
    fn symmetric_mixture_midpoint_has_zero_score() {
        let spec = DiffusionSpec::benchmark(SdeKind::Cou, 1);
        let target = MixtureTarget::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.1, 0.1]).unwrap();
        let s = exact_score(&spec, &target, 3.0, &[0.0]).unwrap();
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn ou_point_mass_score_matches_finite_difference() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        let target = MixtureTarget::point_mass(vec![-1.0]);
        let h = 1e-5;
        let lp = |x: f64| marginal_logdensity(&spec, &target, 1.0, &[x]).unwrap();
        let fd = (lp(h) - lp(-h)) / (2.0 * h);
        let s = exact_score(&spec, &target, 1.0, &[0.0]).unwrap()[0];
        assert!((fd - s).abs() < 1e-6, "{fd} vs {s}");
    }

    #[test]
    fn lipschitz_examples() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        let target = MixtureTarget::gaussian(vec![0.0], 1.0).unwrap();
        let l = score_lipschitz(&spec, &target, 0.0).unwrap();
        assert!(l.exact);
        assert_eq!(l.value, 1.0);

        let ou = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        let pm = MixtureTarget::point_mass(vec![-1.0]);
        for t in [0.5, 2.0, 9.0] {
            let l = score_lipschitz(&ou, &pm, t).unwrap();
            let s2 = ou.kernel(t).unwrap().cond_var();
            assert!((l.value - 1.0 / s2).abs() < 1e-12 * l.value);
        }
    }

    #[test]
    fn mixture_lipschitz_dominates_components() {
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 1);
        let target =
            MixtureTarget::new(vec![0.3, 0.7], vec![vec![-3.0], vec![3.0]], vec![0.2, 0.5]).unwrap();
        let t = 0.5;
        let est = score_lipschitz(&spec, &target, t).unwrap();
        assert!(!est.exact);
        let k = spec.kernel(t).unwrap();
        for v in target.vars() {
            let single = 1.0 / (k.mean_factor.powi(2) * v + k.cond_var());
            assert!(est.value >= single, "{} < {single}", est.value);
        }
    }

    #[test]
    fn mixture_jacobian_matches_finite_difference() {
        let spec = DiffusionSpec::benchmark(SdeKind::CsubVp, 2);
        let target = MixtureTarget::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![-1.0, 0.5], vec![1.0, 1.0], vec![0.0, -2.0]],
            vec![0.1, 0.0, 0.4],
        )
        .unwrap();
        let t = 0.7;
        let m = marginal(&spec, &target, t).unwrap();
        let x = [0.3, -0.4];
        let j = m.jacobian(&x);
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let sp = exact_score(&spec, &target, t, &xp).unwrap();
            let sm = exact_score(&spec, &target, t, &xm).unwrap();
            for r in 0..2 {
                let fd = (sp[r] - sm[r]) / (2.0 * h);
                assert!((fd - j[(r, c)]).abs() < 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn invalid_mixtures() {
        assert!(MixtureTarget::new(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(MixtureTarget::new(vec![1.0], vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(MixtureTarget::new(vec![1.0], vec![vec![0.0]], vec![]).is_err());
        assert!(MixtureTarget::new(vec![0.5, 0.5], vec![vec![0.0], vec![1.0, 2.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn second_moment_and_sampling() {
        let target =
            MixtureTarget::new(vec![0.25, 0.75], vec![vec![2.0, 0.0], vec![0.0, -1.0]], vec![0.5, 1.0]).unwrap();
        // 0.25 (4 + 1) + 0.75 (1 + 2)
        assert!((target.second_moment() - 3.5).abs() < 1e-15);
        let n = 200_000;
        let xs = target.sample(n, 3);
        let m2: f64 = xs.iter().map(|a| a * a).sum::<f64>() / n as f64;
        assert!((m2 - 3.5).abs() < 0.05);
    }
}
