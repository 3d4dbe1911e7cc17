use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::{ExperimentConfig, SamplerSection};
use super::dataset::generate_n;
use super::{num, Check, RunReport, Table};
use crate::error::{Error, Result};
use crate::metrics::{w2_assignment, w2_auto, w2_sinkhorn, w2_sorted_1d, SinkhornOptions, W2Method};
use crate::rng::derive_seed;
use crate::sampler::{sample, Init, ReverseProcess};
use crate::score::{ExactMixtureScore, MixtureTarget, NoisyScore};
use crate::sde::{DiffusionSpec, SdeKind};

/// Published one-dimensional W2 values `(delta, epsilon, OU, COU)`.
pub const PUBLISHED_POINT_MASS_W2: [(f64, f64, f64, f64); 12] = [
    (0.02, 0.02, 0.245, 0.22),
    (0.02, 0.05, 0.265, 0.227),
    (0.02, 0.1, 0.30, 0.23),
    (0.02, 0.2, 0.39, 0.25),
    (0.02, 0.5, 0.7, 0.42),
    (0.02, 1.0, 1.3, 0.8),
    (0.05, 0.02, 0.41, 0.35),
    (0.05, 0.05, 0.44, 0.36),
    (0.05, 0.1, 0.48, 0.36),
    (0.05, 0.2, 0.58, 0.36),
    (0.05, 0.5, 0.92, 0.43),
    (0.05, 1.0, 1.5, 0.7),
];

fn published_value(delta: f64, eps: f64, kind: SdeKind) -> Option<f64> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    PUBLISHED_POINT_MASS_W2.iter().find(|r| close(r.0, delta) && close(r.1, eps)).and_then(|r| match kind {
        SdeKind::Ou => Some(r.2),
        SdeKind::Cou => Some(r.3),
        _ => None,
    })
}

/// W2 between generated samples and fresh target draws with the configured estimator.
pub(crate) fn measure_w2(cfg: &ExperimentConfig, a: &[f64], b: &[f64], d: usize) -> Result<f64> {
    let method = match cfg.metric.method.as_deref() {
        None | Some("auto") => return Ok(w2_auto(a, b, d)?.value),
        Some(m) => m.parse::<W2Method>()?,
    };
    Ok(match method {
        W2Method::Sorted1D if d == 1 => w2_sorted_1d(a, b)?.value,
        W2Method::Sorted1D => return Err(Error::Config("sorted1d needs d = 1".into())),
        W2Method::Assignment => w2_assignment(a, b, d)?.value,
        W2Method::Sinkhorn => {
            let scale = crate::metrics::w2::sq_cost_scale(a, b, d);
            w2_sinkhorn(a, b, d, &SinkhornOptions::new(1e-3 * scale))?.report.value
        }
        W2Method::GaussianClosedForm => {
            return Err(Error::Config("the gaussian method compares moments, not samples; use it in `bounds`".into()))
        }
    })
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let ok: Vec<f64> = v.iter().cloned().filter(|x| x.is_finite()).collect();
    if ok.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = ok.len() as f64;
    let m = ok.iter().sum::<f64>() / n;
    if ok.len() < 2 {
        return (m, f64::NAN);
    }
    let var = ok.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One backward run: exact score of `target` plus injected noise, then W2
/// against `n_paths` fresh draws. `None` when the trajectory diverged.
#[allow(clippy::too_many_arguments)]
fn one_run(
    cfg: &ExperimentConfig,
    spec: &DiffusionSpec,
    target: &MixtureTarget,
    fresh: &[f64],
    eps: f64,
    delta: Option<f64>,
    seed: u64,
    defaults: &SamplerSection,
) -> Result<Option<f64>> {
    let exact = Arc::new(ExactMixtureScore::new(spec.clone(), target.clone())?);
    let noisy = NoisyScore::new(exact, cfg.noise_model(eps, derive_seed(seed, 1))?);
    let proc = ReverseProcess::new(spec.clone(), Arc::new(noisy), Init::Prior)?;
    let scfg = cfg.sampler_config(spec, delta, seed, defaults)?;
    match sample(&proc, &scfg) {
        Ok(batch) => Ok(Some(measure_w2(cfg, batch.final_states(), fresh, spec.dim())?)),
        Err(Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// OU/COU-style comparison over an (epsilon, delta, seed) sweep.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kinds = cfg.kinds(&[SdeKind::Ou, SdeKind::Cou])?;
    let eps = cfg.epsilons(&[0.02, 0.05, 0.1, 0.2, 0.5, 1.0]);
    let deltas = cfg.deltas(&[0.02, 0.05]);
    let seeds = cfg.seeds(20);
    let ds = cfg.dataset("point_mass")?;
    let target = ds.target()?;
    let defaults = SamplerSection { n_paths: Some(2000), ..Default::default() };
    let specs: Vec<DiffusionSpec> = kinds.iter().map(|&k| cfg.build_spec(k, ds.dim())).collect::<Result<_>>()?;
    eprintln!(
        "compare: {} families x {} epsilons x {} deltas x {} seeds = {} runs",
        kinds.len(),
        eps.len(),
        deltas.len(),
        seeds.len(),
        kinds.len() * eps.len() * deltas.len() * seeds.len()
    );

    let mut cells = Vec::new();
    for ki in 0..kinds.len() {
        for &e in &eps {
            for &dl in &deltas {
                for &s in &seeds {
                    cells.push((ki, e, dl, s));
                }
            }
        }
    }
    let results: Vec<Result<Option<f64>>> = cells
        .par_iter()
        .map(|&(ki, e, dl, s)| {
            let n = cfg.sampler.n_paths.unwrap_or(2000);
            let fresh = generate_n(&ds, n, derive_seed(s, 2));
            one_run(cfg, &specs[ki], &target, &fresh, e, Some(dl), s, &defaults)
        })
        .collect();
    let results: Vec<Option<f64>> = results.into_iter().collect::<Result<_>>()?;

    let mut report = RunReport::new("compare", cfg, seeds.clone());
    let mut runs = Table::new("runs", &["family", "epsilon", "delta", "seed", "w2", "diverged"]);
    for (&(ki, e, dl, s), r) in cells.iter().zip(&results) {
        runs.push(vec![
            kinds[ki].name().into(),
            num(e),
            num(dl),
            s.to_string(),
            num(r.unwrap_or(f64::NAN)),
            (r.is_none() as u8).to_string(),
        ]);
    }

    // (family index, eps index, delta index) -> (mean, stderr, diverged)
    let ns = seeds.len();
    let mut stats = vec![vec![vec![(0.0, 0.0, 0usize); deltas.len()]; eps.len()]; kinds.len()];
    let mut cell_table =
        Table::new("cells", &["family", "epsilon", "delta", "n_seeds", "n_diverged", "w2_mean", "w2_stderr", "published"]);
    for ki in 0..kinds.len() {
        for (ei, &e) in eps.iter().enumerate() {
            for (di, &dl) in deltas.iter().enumerate() {
                let base = ((ki * eps.len() + ei) * deltas.len() + di) * ns;
                let vals: Vec<f64> = results[base..base + ns].iter().map(|r| r.unwrap_or(f64::NAN)).collect();
                let div = vals.iter().filter(|v| v.is_nan()).count();
                let (m, se) = mean_stderr(&vals);
                stats[ki][ei][di] = (m, se, div);
                cell_table.push(vec![
                    kinds[ki].name().into(),
                    num(e),
                    num(dl),
                    ns.to_string(),
                    div.to_string(),
                    num(m),
                    num(se),
                    published_value(dl, e, kinds[ki]).map(num).unwrap_or_default(),
                ]);
            }
        }
    }

    // layout: one row per (delta, epsilon), one column pair per family
    let mut cols = vec!["delta".to_string(), "epsilon".to_string()];
    for k in &kinds {
        cols.push(format!("{}_mean", k.name()));
        cols.push(format!("{}_stderr", k.name()));
    }
    let mut layout = Table { name: "table".into(), columns: cols, rows: Vec::new() };
    for (di, &dl) in deltas.iter().enumerate() {
        for (ei, &e) in eps.iter().enumerate() {
            let mut row = vec![num(dl), num(e)];
            for st in stats.iter() {
                row.push(num(st[ei][di].0));
                row.push(num(st[ei][di].1));
            }
            layout.rows.push(row);
        }
    }
    report.tables.extend([layout, cell_table, runs]);

    let total_div: usize = stats.iter().flatten().flatten().map(|s| s.2).sum();
    report.checks.push(Check::new("no_divergence", total_div == 0, format!("{total_div} diverged runs")));
    let ou = kinds.iter().position(|&k| k == SdeKind::Ou);
    let cou = kinds.iter().position(|&k| k == SdeKind::Cou);
    if let (Some(o), Some(c)) = (ou, cou) {
        let mut bad = Vec::new();
        for (ei, &e) in eps.iter().enumerate() {
            for (di, &dl) in deltas.iter().enumerate() {
                let (mo, mc) = (stats[o][ei][di].0, stats[c][ei][di].0);
                if !(mc <= mo) {
                    bad.push(format!("(eps={e} delta={dl}: COU {mc:.4} > OU {mo:.4})"));
                }
            }
        }
        let n_cells = eps.len() * deltas.len();
        let detail = if bad.is_empty() {
            format!("all {n_cells} cells")
        } else {
            format!("{} of {n_cells} cells violate: {}", bad.len(), bad.join(" "))
        };
        report.checks.push(Check::new("cou_le_ou", bad.is_empty(), detail));
    }
    if let Some(o) = ou {
        let mut order: Vec<usize> = (0..eps.len()).collect();
        order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]));
        for (di, &dl) in deltas.iter().enumerate() {
            let seq: Vec<f64> = order.iter().map(|&ei| stats[o][ei][di].0).collect();
            let ok = seq.windows(2).all(|w| w[1] > w[0]);
            let shown: Vec<String> = seq.iter().map(|v| format!("{v:.4}")).collect();
            report.checks.push(Check::new(
                format!("ou_increasing_in_eps_delta_{dl}"),
                ok,
                format!("OU means by increasing eps: {}", shown.join(" ")),
            ));
        }
    }
    // factor-of-two anchors at the published cell
    for (slot, kind) in [(ou, SdeKind::Ou), (cou, SdeKind::Cou)] {
        let Some(k) = slot else { continue };
        let ei = eps.iter().position(|&e| (e - 1.0).abs() < 1e-12);
        let di = deltas.iter().position(|&d| (d - 0.02).abs() < 1e-12);
        if let (Some(ei), Some(di)) = (ei, di) {
            let reference = published_value(0.02, 1.0, kind).unwrap();
            let m = stats[k][ei][di].0;
            let ok = m >= reference / 2.0 && m <= reference * 2.0;
            report.checks.push(Check::new(
                format!("anchor_{}_eps_1_delta_0.02", kind.name()),
                ok,
                format!("measured {m:.4} vs published {reference} (factor-2 window [{}, {}])", reference / 2.0, reference * 2.0),
            ));
        }
    }
    Ok(report)
}

/// Paired one-sided t-test of `H1: mean(a - b) < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub stderr: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

impl PairedTest {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

pub fn paired_one_sided(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Usage("paired test needs two equal samples of size >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, se) = mean_stderr(&d);
    let df = d.len() - 1;
    let (t, p) = if se > 0.0 {
        let t = m / se;
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Domain(e.to_string()))?;
        (t, dist.cdf(t))
    } else if m < 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (if m > 0.0 { f64::INFINITY } else { 0.0 }, 1.0)
    };
    Ok(PairedTest { mean_diff: m, stderr: se, t, df, p_value: p })
}

/// Swiss roll models: the VP-type families use `beta in [0.01, 8]` on `[0, 1]`
/// unless `[sde]` sets beta or `T`; OU and COU keep the one-dimensional benchmark.
fn swissroll_spec(cfg: &ExperimentConfig, kind: SdeKind) -> Result<DiffusionSpec> {
    let s = &cfg.sde;
    let linear = matches!(kind, SdeKind::Vp | SdeKind::SubVp | SdeKind::Cvp | SdeKind::CsubVp);
    if linear && s.beta_min.is_none() && s.beta_max.is_none() && s.horizon.is_none() {
        return DiffusionSpec::linear_beta(kind, 0.01, 8.0, 1.0, 2);
    }
    cfg.build_spec(kind, 2)
}

/// Swiss roll study with the exact empirical-mixture score.
pub fn run_swissroll(cfg: &ExperimentConfig) -> Result<RunReport> {
    let kinds = cfg.kinds(&[SdeKind::Ou, SdeKind::Cou, SdeKind::SubVp, SdeKind::CsubVp])?;
    let eps = cfg.epsilons(&[0.1]);
    let seeds = cfg.seeds(10);
    let mut ds = cfg.dataset("swiss_roll")?;
    if cfg.target.n.is_none() {
        ds.n = 500;
    }
    if ds.dim() != 2 {
        return Err(Error::Config("swissroll needs a 2-D target".into()));
    }
    let n_steps = cfg.sampler.n_steps.unwrap_or(200);
    let defaults = SamplerSection {
        method: Some("pc".into()),
        snr: Some(0.2),
        n_paths: Some(500),
        n_steps: Some(n_steps),
        save_every: Some((n_steps / 4).max(1)),
        ..Default::default()
    };
    let specs: Vec<DiffusionSpec> = kinds.iter().map(|&k| swissroll_spec(cfg, k)).collect::<Result<_>>()?;
    // step count is shared by every family, so the delta argument stays unset
    let mut scfg0 = cfg.sampler_config(&specs[0], None, 0, &defaults)?;
    if cfg.sampler.n_steps.is_none() && cfg.sampler.delta.is_some() {
        return Err(Error::Config("swissroll uses a fixed step budget; set sampler.n_steps, not delta".into()));
    }
    scfg0.n_steps = n_steps;
    let n_paths = scfg0.n_paths;
    eprintln!("swissroll: {} families x {} epsilons x {} seeds", kinds.len(), eps.len(), seeds.len());

    let mut cells = Vec::new();
    for ki in 0..kinds.len() {
        for &e in &eps {
            for (si, &s) in seeds.iter().enumerate() {
                cells.push((ki, e, si, s));
            }
        }
    }
    struct Out {
        w2: Option<f64>,
        snapshots: Option<crate::sampler::TrajectoryBatch>,
    }
    let results: Vec<Result<Out>> = cells
        .par_iter()
        .map(|&(ki, e, si, s)| {
            let train = generate_n(&ds, ds.n, derive_seed(s, 10));
            let held = generate_n(&ds, n_paths, derive_seed(s, 11));
            let target = MixtureTarget::empirical(train.chunks(2).map(|r| r.to_vec()).collect())?;
            let spec = &specs[ki];
            let exact = Arc::new(ExactMixtureScore::new(spec.clone(), target)?);
            let noisy = NoisyScore::new(exact, cfg.noise_model(e, derive_seed(s, 1))?);
            let proc = ReverseProcess::new(spec.clone(), Arc::new(noisy), Init::Prior)?;
            let mut scfg = scfg0.clone();
            scfg.seed = s;
            match sample(&proc, &scfg) {
                Ok(batch) => {
                    let w2 = measure_w2(cfg, batch.final_states(), &held, 2)?;
                    Ok(Out { w2: Some(w2), snapshots: (si == 0).then_some(batch) })
                }
                Err(Error::Diverged { .. }) => Ok(Out { w2: None, snapshots: None }),
                Err(err) => Err(err),
            }
        })
        .collect();
    let results: Vec<Out> = results.into_iter().collect::<Result<_>>()?;

    let mut report = RunReport::new("swissroll", cfg, seeds.clone());
    let mut runs = Table::new("runs", &["family", "epsilon", "seed", "w2", "diverged"]);
    let mut snaps = Table::new("snapshots", &["family", "epsilon", "seed", "step", "t", "path", "x0", "x1"]);
    let mut snapshot_counts = Vec::new();
    for (&(ki, e, _, s), r) in cells.iter().zip(&results) {
        runs.push(vec![
            kinds[ki].name().into(),
            num(e),
            s.to_string(),
            num(r.w2.unwrap_or(f64::NAN)),
            (r.w2.is_none() as u8).to_string(),
        ]);
        if let Some(b) = &r.snapshots {
            snapshot_counts.push(b.steps.len());
            for (i, state) in b.states.iter().enumerate() {
                for (p, x) in state.chunks(2).enumerate() {
                    snaps.push(vec![
                        kinds[ki].name().into(),
                        num(e),
                        s.to_string(),
                        b.steps[i].to_string(),
                        num(b.times[i]),
                        p.to_string(),
                        num(x[0]),
                        num(x[1]),
                    ]);
                }
            }
        }
    }
    let mut summary = Table::new("summary", &["family", "epsilon", "n_seeds", "w2_mean", "w2_stderr"]);
    let per_cell = |ki: usize, ei: usize| -> Vec<f64> {
        let base = (ki * eps.len() + ei) * seeds.len();
        results[base..base + seeds.len()].iter().map(|r| r.w2.unwrap_or(f64::NAN)).collect()
    };
    for (ki, k) in kinds.iter().enumerate() {
        for (ei, &e) in eps.iter().enumerate() {
            let (m, se) = mean_stderr(&per_cell(ki, ei));
            summary.push(vec![k.name().into(), num(e), seeds.len().to_string(), num(m), num(se)]);
        }
    }
    let expected = scfg0.save_steps().len();
    report.checks.push(Check::new(
        "snapshot_count",
        snapshot_counts.iter().all(|&c| c == expected),
        format!("{expected} save points per run"),
    ));
    let mut tests = Table::new("paired_tests", &["contractive", "baseline", "epsilon", "mean_diff", "stderr", "t", "df", "p_value"]);
    for (c, base) in [(SdeKind::Cou, SdeKind::Ou), (SdeKind::CsubVp, SdeKind::SubVp), (SdeKind::Cvp, SdeKind::Vp)] {
        let (Some(ci), Some(bi)) = (kinds.iter().position(|&k| k == c), kinds.iter().position(|&k| k == base)) else {
            continue;
        };
        for (ei, &e) in eps.iter().enumerate() {
            let (a, b) = (per_cell(ci, ei), per_cell(bi, ei));
            let name = format!("{}_le_{}_eps_{e}", c.name(), base.name());
            if a.iter().chain(&b).any(|v| v.is_nan()) {
                report.checks.push(Check::new(name, false, "diverged runs"));
                continue;
            }
            let t = paired_one_sided(&a, &b)?;
            tests.push(vec![
                c.name().into(),
                base.name().into(),
                num(e),
                num(t.mean_diff),
                num(t.stderr),
                num(t.t),
                t.df.to_string(),
                num(t.p_value),
            ]);
            let (ma, _) = mean_stderr(&a);
            let (mb, _) = mean_stderr(&b);
            report.checks.push(Check::new(
                name,
                t.rejects(0.05),
                format!("{} {ma:.4} vs {} {mb:.4}; paired one-sided p = {:.3e}", c.name(), base.name(), t.p_value),
            ));
        }
    }
    report.tables.extend([summary, tests, runs, snaps]);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_test_against_reference_values() {
        // statistic and p-value from scipy.stats.ttest_rel(a, b, alternative="less")
        let a = [0.31, 0.28, 0.35, 0.30, 0.27, 0.33, 0.29, 0.26, 0.32, 0.30];
        let b = [0.33, 0.30, 0.34, 0.33, 0.30, 0.35, 0.31, 0.29, 0.31, 0.33];
        let r = paired_one_sided(&a, &b).unwrap();
        assert_eq!(r.df, 9);
        assert!((r.t + 3.674_234_614_174_768_6).abs() < 1e-9, "{r:?}");
        assert!((r.p_value - 0.002_560_536_382_136_311).abs() < 1e-9, "{r:?}");
        assert!(r.rejects(0.05));
        let back = paired_one_sided(&b, &a).unwrap();
        assert!((back.p_value - (1.0 - r.p_value)).abs() < 1e-12);
        assert!(!back.rejects(0.05));
        // t = -2 on 9 df: scipy.stats.t.cdf(-2, 9)
        let d = [-1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 0.0, -2.0, 0.0, 0.0];
        let m: f64 = d.iter().sum::<f64>() / 10.0;
        let sd = (d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 9.0).sqrt();
        let shift = -2.0 * sd / 10f64.sqrt() - m;
        let d2: Vec<f64> = d.iter().map(|x| x + shift).collect();
        let r = paired_one_sided(&d2, &[0.0; 10]).unwrap();
        assert!((r.t + 2.0).abs() < 1e-12);
        assert!((r.p_value - 0.038_276_411_885_350_47).abs() < 1e-9);
    }

    #[test]
    fn published_lookup() {
        assert_eq!(published_value(0.02, 1.0, SdeKind::Ou), Some(1.3));
        assert_eq!(published_value(0.05, 1.0, SdeKind::Cou), Some(0.7));
        assert_eq!(published_value(0.01, 1.0, SdeKind::Cou), None);
    }
}
