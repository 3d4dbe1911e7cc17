use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SamplerSection};
use super::{num, Check, RunReport, Table};
use crate::error::{Error, Result};
use crate::metrics::{
    bootstrap_stderr, cvp_bound, sample_moments, sampling_error_bound, u_of_t, w2_assignment, w2_gaussian,
    w2_sorted_1d, BoundInputs, BoundReport,
};
use crate::rng::{derive_seed, NoiseStream, Role};
use crate::sampler::{coupled_contraction, sample, simulate_forward_em, Init, ReverseProcess};
use crate::score::{
    eval_vec, marginal_logdensity, score_lipschitz, EvalCtx, ExactMixtureScore, MixtureTarget, NoisyScore,
    ScoreField,
};
use crate::sde::{DiffusionSpec, SdeKind};
use crate::transform::{transport_score, TransformMap};

/// Forward EM against the closed-form kernel for every family.
pub fn run_kernel_check(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kinds = cfg.kinds(&SdeKind::ALL)?;
    let n = cfg.check.n_paths.unwrap_or(100_000);
    let dt = cfg.check.dt.unwrap_or(1e-3);
    let z_max = cfg.check.tolerance.unwrap_or(3.0);
    let ds = cfg.dataset("point_mass")?;
    let target = ds.target()?;
    if target.len() != 1 || !target.has_point_mass() {
        return Err(Error::Config("kernel-check needs a point-mass target (fixed x0)".into()));
    }
    let x0 = target.means()[0].clone();
    let seed = cfg.base_seed();
    let mut report = RunReport::new("kernel-check", cfg, vec![seed]);
    let mut table = Table::new(
        "kernels",
        &["family", "t", "coord", "em_mean", "kernel_mean", "mean_z", "em_var", "kernel_var", "var_z", "pass"],
    );
    for kind in kinds {
        let spec = cfg.build_spec(kind, x0.len())?;
        let horizon = spec.horizon();
        let times = [0.25 * horizon, 0.5 * horizon, horizon];
        let snaps = simulate_forward_em(&spec, &target, &times, n, dt, seed)?;
        let d = spec.dim();
        let mut worst: f64 = 0.0;
        for (&t, xs) in times.iter().zip(&snaps) {
            let k = spec.kernel(t)?;
            let mut mean = vec![0.0; d];
            spec.kernel_mean(&k, &x0, &mut mean);
            let var = k.cond_var();
            for (j, &mean_j) in mean.iter().enumerate() {
                let col: Vec<f64> = xs.iter().skip(j).step_by(d).cloned().collect();
                let (m, v) = sample_moments(&col, 1);
                let m = m[0];
                let mean_z = (m - mean_j) / (var / n as f64).sqrt();
                let var_z = (v - var) / (var * (2.0 / (n as f64 - 1.0)).sqrt());
                let ok = mean_z.abs() <= z_max && var_z.abs() <= z_max;
                worst = worst.max(mean_z.abs()).max(var_z.abs());
                table.push(vec![
                    kind.name().into(),
                    num(t),
                    j.to_string(),
                    num(m),
                    num(mean[j]),
                    num(mean_z),
                    num(v),
                    num(var),
                    num(var_z),
                    ok.to_string(),
                ]);
            }
        }
        report.checks.push(Check::new(
            format!("kernel_{}", kind.name()),
            worst <= z_max,
            format!("largest |z| = {worst:.3} over mean and variance at T/4, T/2, T ({n} paths, dt = {dt})"),
        ));
    }
    report.tables.push(table);
    Ok(report)
}

/// Density, score and clock identities of the VE to CsubVP map on a grid.
pub fn run_transform_check(cfg: &ExperimentConfig) -> Result<RunReport> {
    let s = &cfg.sde;
    let ve = DiffusionSpec::ve(s.sigma_min.unwrap_or(0.05), s.sigma_max.unwrap_or(0.5), 1.0, 1)?;
    let c = DiffusionSpec::linear_beta(
        SdeKind::CsubVp,
        s.beta_min.unwrap_or(0.01),
        s.beta_max.unwrap_or(0.2),
        s.horizon.unwrap_or(2.0),
        1,
    )?;
    let map = TransformMap::new(ve.clone(), c.clone())?;
    let pre = map.check_precondition();
    let mut report = RunReport::new("transform-check", cfg, vec![]);
    report.checks.push(Check::new(
        "precondition",
        pre.holds,
        format!(
            "g(T)^2 = {:.6e} vs sigma_max^2 - sigma_min^2 = {:.6e}; largest admissible T = {:.6}",
            pre.g_terminal_sq, pre.ve_range, pre.max_horizon
        ),
    ));
    if !pre.holds {
        return Ok(report);
    }
    let ds = cfg.dataset("gaussian")?;
    let target = ds.target()?;
    if target.dim() != 1 {
        return Err(Error::Config("transform-check runs in one dimension".into()));
    }
    let nt = cfg.check.grid_t.unwrap_or(1000);
    let nx = cfg.check.grid_x.unwrap_or(100);
    let ve_score: Arc<dyn ScoreField> = Arc::new(ExactMixtureScore::new(ve, target.clone())?);
    let transported = transport_score(&map, ve_score)?;
    let native = ExactMixtureScore::new(c.clone(), target.clone())?;
    let horizon = c.horizon();
    let m = target.mean()[0];
    let sd = target.vars()[0].sqrt().max(1.0);
    type Row = (f64, f64, f64, f64, f64);
    let rows: Vec<Result<Row>> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let t = horizon * i as f64 / (nt - 1) as f64;
            let tau = map.tau(t)?;
            let f = map.f(t)?;
            let mut ctx = EvalCtx::new(i as u64);
            let (mut dens, mut score) = (0.0f64, 0.0f64);
            for j in 0..nx {
                let x = f * (m + 4.0 * sd * (2.0 * j as f64 / (nx - 1) as f64 - 1.0));
                let a = transported.log_density(t, &[x])?;
                let b = marginal_logdensity(&c, &target, t, &[x])?;
                dens = dens.max((a - b).abs());
                let sa = eval_vec(&transported, t, &[x], &mut ctx)?[0];
                let sb = eval_vec(&native, t, &[x], &mut ctx)?[0];
                score = score.max((sa - sb).abs());
            }
            Ok((t, tau, map.tau_residual(t)?, dens, score))
        })
        .collect();
    let rows: Vec<Row> = rows.into_iter().collect::<Result<_>>()?;
    let mut table = Table::new("grid", &["t", "tau", "f", "g", "tau_residual", "max_density_residual", "max_score_residual"]);
    for r in &rows {
        table.push(vec![num(r.0), num(r.1), num(map.f(r.0)?), num(map.g(r.0)?), num(r.2), num(r.3), num(r.4)]);
    }
    let max = |f: fn(&Row) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let (tau_res, dens, score) = (max(|r| r.2), max(|r| r.3), max(|r| r.4));
    let monotone = rows.windows(2).all(|w| w[1].1 > w[0].1);
    report.checks.push(Check::new("tau_identity", tau_res <= 1e-10, format!("max relative residual {tau_res:.3e} (limit 1e-10)")));
    report.checks.push(Check::new("tau_monotone", monotone, format!("{nt} grid points")));
    report.checks.push(Check::new("density_identity", dens <= 1e-9, format!("max residual {dens:.3e} on {nt}x{nx} grid (limit 1e-9)")));
    report.checks.push(Check::new("score_transport", score <= 1e-9, format!("max residual {score:.3e} on {nt}x{nx} grid (limit 1e-9)")));
    report.tables.push(table);
    Ok(report)
}

/// `sup_t |grad^2 log p(t)|` on a uniform grid; exact for single-component targets.
pub(crate) fn lipschitz_sup(spec: &DiffusionSpec, target: &MixtureTarget, n: usize) -> Result<(f64, bool)> {
    let horizon = spec.horizon();
    let start = if target.has_point_mass() { 1e-3 * horizon } else { 0.0 };
    let mut best = (0.0f64, true);
    for i in 0..=n {
        let t = start + (horizon - start) * i as f64 / n as f64;
        let l = score_lipschitz(spec, target, t)?;
        best = (best.0.max(l.value), best.1 && l.exact);
    }
    Ok(best)
}

/// `W2(p(T), prior)` for a single-component target.
pub(crate) fn eta_exact(spec: &DiffusionSpec, target: &MixtureTarget) -> Result<f64> {
    if target.len() != 1 {
        return Err(Error::Config("eta has no closed form for mixtures; set bounds.eta".into()));
    }
    let horizon = spec.horizon();
    let k = spec.kernel(horizon)?;
    let mut m_t = vec![0.0; spec.dim()];
    spec.kernel_mean(&k, &target.means()[0], &mut m_t);
    let v_t = k.mean_factor * k.mean_factor * target.vars()[0] + k.cond_var();
    let prior = spec.prior()?;
    w2_gaussian(&m_t, v_t, &prior.mean, prior.variance)
}

/// Moment-based W2 of `xs` to a single Gaussian component.
fn gaussian_w2_to(xs: &[f64], target: &MixtureTarget) -> Result<f64> {
    let d = target.dim();
    let (m, v) = sample_moments(xs, d);
    w2_gaussian(&m, v, &target.means()[0], target.vars()[0])
}

/// Error bounds, their `u(t)` profile and, optionally, measured W2 for comparison.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kinds = cfg.kinds(&[SdeKind::Cou, SdeKind::Cvp])?;
    let eps = cfg.epsilons(&[0.0, 0.1, 0.5]);
    let seeds = cfg.seeds(20);
    let b = &cfg.bounds;
    let empirical = b.empirical.unwrap_or(true);
    let u_points = b.u_points.unwrap_or(101).max(2);
    let mut report = RunReport::new("bounds", cfg, if empirical { seeds.clone() } else { vec![] });
    let mut u_table = Table::new("u", &["family", "epsilon", "t", "u"]);
    let mut bounds = Table::new(
        "bounds",
        &["family", "epsilon", "lipschitz", "eta", "h", "bound", "log_bound", "squared", "overflow", "w2_mean", "w2_stderr", "dominates"],
    );
    let defaults = SamplerSection { n_paths: Some(2000), delta: Some(0.01), ..Default::default() };
    for kind in kinds {
        let cvp = kind == SdeKind::Cvp;
        let kappa = b.kappa.unwrap_or(1.0);
        let target = if cvp && cfg.target.kind.is_none() {
            MixtureTarget::gaussian(vec![0.0; cfg.sde.dim.unwrap_or(1)], 1.0 / kappa)?
        } else {
            cfg.dataset("gaussian")?.target()?
        };
        let spec = cfg.build_spec(kind, target.dim())?;
        let (lipschitz, exact_l) = match b.lipschitz {
            Some(l) => (l, true),
            None => lipschitz_sup(&spec, &target, 1000)?,
        };
        let eta = match b.eta {
            Some(e) => e,
            None => eta_exact(&spec, &target)?,
        };
        for &e in &eps {
            let mut inputs = BoundInputs::new(spec.clone(), lipschitz, e, eta)?;
            inputs.h = b.h;
            let rep: BoundReport = if cvp {
                inputs.kappa = Some(kappa);
                inputs.second_moment = Some(b.second_moment.unwrap_or_else(|| target.second_moment()));
                cvp_bound(&inputs)?
            } else {
                sampling_error_bound(&inputs)?
            };
            if !cvp {
                for i in 0..u_points {
                    let t = spec.horizon() * i as f64 / (u_points - 1) as f64;
                    u_table.push(vec![kind.name().into(), num(e), num(t), num(u_of_t(&inputs, rep.h, t)?)]);
                }
            }
            let (mut w2m, mut w2se, mut dominates) = (f64::NAN, f64::NAN, String::new());
            if empirical {
                if target.len() != 1 {
                    return Err(Error::Config("empirical bound comparison needs a single-Gaussian target".into()));
                }
                let vals: Vec<Result<f64>> = seeds
                    .par_iter()
                    .map(|&s| {
                        let exact = Arc::new(ExactMixtureScore::new(spec.clone(), target.clone())?);
                        let noisy = NoisyScore::new(exact, cfg.noise_model(e, derive_seed(s, 1))?);
                        let proc = ReverseProcess::new(spec.clone(), Arc::new(noisy), Init::Prior)?;
                        let scfg = cfg.sampler_config(&spec, None, s, &defaults)?;
                        let w = gaussian_w2_to(sample(&proc, &scfg)?.final_states(), &target)?;
                        Ok(if rep.squared { w * w } else { w })
                    })
                    .collect();
                let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
                let n = vals.len() as f64;
                w2m = vals.iter().sum::<f64>() / n;
                w2se = (vals.iter().map(|v| (v - w2m) * (v - w2m)).sum::<f64>() / (n - 1.0) / n).sqrt();
                let ok = rep.value >= w2m - 2.0 * w2se;
                dominates = ok.to_string();
                let what = if rep.squared { "W2^2" } else { "W2" };
                report.checks.push(Check::new(
                    format!("dominance_{}_eps_{e}", kind.name()),
                    ok,
                    format!(
                        "bound {:.4e} vs measured {what} {w2m:.4e} +- {w2se:.1e} (L = {lipschitz:.4}{}, h = {:.4})",
                        rep.value,
                        if exact_l { "" } else { " sampled" },
                        rep.h
                    ),
                ));
            }
            if e == 0.0 && eta == 0.0 {
                report.checks.push(Check::new(
                    format!("zero_bound_{}", kind.name()),
                    rep.value == 0.0,
                    format!("eps = eta = 0 gives {}", rep.value),
                ));
            }
            if rep.overflow {
                report.checks.push(Check::new(format!("finite_{}_eps_{e}", kind.name()), true, rep.diagnostics.clone()));
            }
            bounds.push(vec![
                kind.name().into(),
                num(e),
                num(lipschitz),
                num(eta),
                num(rep.h),
                num(rep.value),
                num(rep.log_value),
                rep.squared.to_string(),
                rep.overflow.to_string(),
                num(w2m),
                num(w2se),
                dominates,
            ]);
        }
    }
    report.tables.extend([bounds, u_table]);
    Ok(report)
}

/// Synchronously coupled backward runs from two independent prior draws.
pub fn run_contraction(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kinds = cfg.kinds(&[SdeKind::Ou, SdeKind::Vp, SdeKind::Cou, SdeKind::Cvp, SdeKind::CsubVp])?;
    let seed = cfg.base_seed();
    let target = if cfg.target.kind.is_none() {
        MixtureTarget::gaussian(vec![0.0; cfg.sde.dim.unwrap_or(1)], 100.0)?
    } else {
        cfg.dataset("gaussian")?.target()?
    };
    if target.len() != 1 {
        return Err(Error::Config("contraction check needs a single-Gaussian target".into()));
    }
    let defaults = SamplerSection { n_paths: Some(2000), delta: Some(0.01), save_every: Some(10), ..Default::default() };
    let mut report = RunReport::new("contraction", cfg, vec![seed]);
    let mut series = Table::new("series", &["family", "t_backward", "rms"]);
    let mut summary = Table::new("summary", &["family", "window_start", "window_end", "rate", "margin", "criterion", "pass"]);
    for kind in kinds {
        let spec = cfg.build_spec(kind, target.dim())?;
        let score = Arc::new(ExactMixtureScore::new(spec.clone(), target.clone())?);
        let proc = ReverseProcess::new(spec.clone(), score, Init::Prior)?;
        let scfg = cfg.sampler_config(&spec, None, seed, &defaults)?;
        let rec = coupled_contraction(&proc, &scfg, Init::PriorWithSeed(seed), Init::PriorWithSeed(derive_seed(seed, 3)))?;
        for (t, r) in rec.times.iter().zip(&rec.rms) {
            series.push(vec![kind.name().into(), num(*t), num(*r)]);
        }
        let end = *rec.times.last().unwrap();
        // exact score Lipschitz constant 1/V(t) of the Gaussian marginal
        let v0 = target.vars()[0];
        let lip = |t: f64| {
            let k = spec.kernel(t).unwrap();
            1.0 / (k.mean_factor * k.mean_factor * v0 + k.cond_var())
        };
        let margin = spec.contraction_profile().margin(lip, 1000);
        let (window, rate, ok, criterion) = if kind.is_contractive() {
            let rate = rec.fitted_rate(0.0, end);
            let ok = match rate {
                Some(r) if margin > 0.0 => r < 0.0 && r.abs() >= 0.5 * margin,
                Some(r) => r < 0.0,
                None => false,
            };
            ((0.0, end), rate, ok, "rate < 0 and |rate| >= margin/2")
        } else {
            let w = 0.25 * spec.horizon();
            let rate = rec.fitted_rate(0.0, w);
            ((0.0, w), rate, rate.is_some_and(|r| r >= -0.01), "rate >= -0.01 on the early window")
        };
        let rate = rate.unwrap_or(f64::NAN);
        summary.push(vec![
            kind.name().into(),
            num(window.0),
            num(window.1),
            num(rate),
            num(margin),
            criterion.into(),
            ok.to_string(),
        ]);
        report.checks.push(Check::new(
            format!("contraction_{}", kind.name()),
            ok,
            format!("fitted rate {rate:.4} on backward [{:.2}, {:.2}], margin {margin:.4}: {criterion}", window.0, window.1),
        ));
    }
    report.tables.extend([summary, series]);
    Ok(report)
}

/// Reads a numeric CSV (comments `#`, optional header). When the header has
/// `x0, x1, ...` columns only those are used. Returns the rows and the dimension.
pub fn read_samples(path: &Path) -> Result<(Vec<f64>, usize)> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(false).from_path(path).map_err(io)?;
    let mut out = Vec::new();
    let mut cols: Option<Vec<usize>> = None;
    let mut d = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let parsed: Vec<Option<f64>> = rec.iter().map(|f| f.trim().parse().ok()).collect();
        if cols.is_none() && parsed.iter().any(|p| p.is_none()) {
            let xs: Vec<usize> = rec
                .iter()
                .enumerate()
                .filter(|(_, h)| h.trim().strip_prefix('x').is_some_and(|r| r.parse::<usize>().is_ok()))
                .map(|(i, _)| i)
                .collect();
            if xs.is_empty() {
                return Err(Error::Config(format!("{}: header has no x0.. columns", path.display())));
            }
            cols = Some(xs);
            continue;
        }
        let pick: Vec<usize> = cols.clone().unwrap_or_else(|| (0..parsed.len()).collect());
        if d == 0 {
            d = pick.len();
        }
        if pick.len() != d {
            return Err(Error::Config(format!("{}: ragged rows", path.display())));
        }
        for &i in &pick {
            out.push(parsed.get(i).copied().flatten().ok_or_else(|| Error::Config(format!("{}: non-numeric value", path.display())))?);
        }
    }
    if d == 0 {
        return Err(Error::Config(format!("{}: no samples", path.display())));
    }
    Ok((out, d))
}

fn brute_force_w2(a: &[f64], b: &[f64], d: usize) -> f64 {
    let n = a.len() / d;
    let cost = |i: usize, j: usize| -> f64 { (0..d).map(|k| (a[i * d + k] - b[j * d + k]).powi(2)).sum() };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    best = best.min(perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum());
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best / n as f64).sqrt()
}

/// W2 between two sample files, or the estimator oracle checks when no files are given.
pub fn run_w2(cfg: &ExperimentConfig) -> Result<RunReport> {
    let seed = cfg.base_seed();
    let mut report = RunReport::new("w2", cfg, vec![seed]);
    if let (Some(pa), Some(pb)) = (&cfg.check.a, &cfg.check.b) {
        let (a, da) = read_samples(pa)?;
        let (b, db) = read_samples(pb)?;
        if da != db {
            return Err(Error::Usage(format!("sample dimensions differ ({da} vs {db})")));
        }
        let w = super::compare::measure_w2(cfg, &a, &b, da)?;
        let reps = cfg.metric.bootstrap.unwrap_or(0);
        let se = if reps >= 2 {
            bootstrap_stderr(&a, &b, da, reps, seed, |x, y| super::compare::measure_w2(cfg, x, y, da))?
        } else {
            f64::NAN
        };
        let mut t = Table::new("value", &["n", "dim", "method", "w2", "stderr"]);
        t.push(vec![(a.len() / da).to_string(), da.to_string(), cfg.metric.method.clone().unwrap_or("auto".into()), num(w), num(se)]);
        report.tables.push(t);
        report.checks.push(Check::new("w2_finite", w.is_finite(), format!("W2 = {w}")));
        return Ok(report);
    }

    let mut table = Table::new("oracle", &["check", "instance", "estimate", "reference", "abs_diff"]);
    let mut s = NoiseStream::new(seed, 0, Role::Target);
    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let n = 1 + s.below(6);
        let d = 1 + s.below(3);
        let a: Vec<f64> = (0..n * d).map(|_| s.normal()).collect();
        let b: Vec<f64> = (0..n * d).map(|_| s.normal() + 0.5).collect();
        let est = w2_assignment(&a, &b, d)?.value;
        let reference = brute_force_w2(&a, &b, d);
        worst = worst.max((est - reference).abs());
        table.push(vec!["assignment_vs_brute_force".into(), inst.to_string(), num(est), num(reference), num((est - reference).abs())]);
    }
    report.checks.push(Check::new("assignment_brute_force", worst <= 1e-12, format!("50 instances, n <= 6, max diff {worst:.2e}")));

    let mut worst1: f64 = 0.0;
    for inst in 0..20 {
        let n = 2 + s.below(200);
        let a: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| 2.0 * s.normal() - 1.0).collect();
        let x = w2_sorted_1d(&a, &b)?.value;
        let y = w2_assignment(&a, &b, 1)?.value;
        worst1 = worst1.max((x - y).abs());
        table.push(vec!["sorted_vs_assignment".into(), inst.to_string(), num(x), num(y), num((x - y).abs())]);
    }
    report.checks.push(Check::new("sorted_equals_assignment", worst1 <= 1e-12, format!("20 instances in d = 1, max diff {worst1:.2e}")));

    let n = cfg.metric.n.unwrap_or(4000);
    let reps = cfg.metric.bootstrap.unwrap_or(200);
    let (m1, v1, m2, v2) = (0.0, 1.0f64, 1.0, 4.0f64);
    let a: Vec<f64> = (0..n).map(|_| m1 + v1.sqrt() * s.normal()).collect();
    let b: Vec<f64> = (0..n).map(|_| m2 + v2.sqrt() * s.normal()).collect();
    let est = w2_sorted_1d(&a, &b)?.value;
    let se = bootstrap_stderr(&a, &b, 1, reps, derive_seed(seed, 4), |x, y| Ok(w2_sorted_1d(x, y)?.value))?;
    let exact = w2_gaussian(&[m1], v1, &[m2], v2)?;
    table.push(vec!["gaussian_by_sampling".into(), "0".into(), num(est), num(exact), num((est - exact).abs())]);
    report.checks.push(Check::new(
        "gaussian_closed_form",
        (est - exact).abs() <= 3.0 * se,
        format!("sampled {est:.4} vs closed form {exact:.4}, bootstrap stderr {se:.4} (n = {n}, {reps} replicates)"),
    ));
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_permutations_cover_all() {
        // three points on a line, reversed: the identity pairing is optimal
        let a = [0.0, 1.0, 2.0];
        let b = [2.0, 0.0, 1.0];
        assert_eq!(brute_force_w2(&a, &b, 1), 0.0);
        let c = [5.0, 7.0, 6.0, 9.0];
        let e = [9.0, 5.0, 7.0, 6.0];
        assert_eq!(brute_force_w2(&c, &e, 1), 0.0);
    }

    #[test]
    fn reads_trajectory_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "# comment\npath,step,t,x0,x1\n0,5,1.0,0.5,-1\n1,5,1.0,2,3\n").unwrap();
        let (xs, d) = read_samples(&p).unwrap();
        assert_eq!((xs, d), (vec![0.5, -1.0, 2.0, 3.0], 2));
        std::fs::write(&p, "1.5\n2.5\n").unwrap();
        assert_eq!(read_samples(&p).unwrap(), (vec![1.5, 2.5], 1));
    }
}
