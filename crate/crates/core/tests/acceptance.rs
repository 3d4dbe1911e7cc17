//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p cdpm-core --test acceptance [-- N ...]` runs all criteria or
//! only the listed ones. Criteria in `KNOWN_FAILURES` are reported as FAIL but
//! do not fail the process unless `CDPM_ACCEPTANCE_STRICT` is set; any other
//! failure, or a known failure that starts passing, exits non-zero.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cdpm::harness::{self, ExperimentConfig, RunReport};
use cdpm::metrics::{discretization_order, sample_moments, w2_gaussian};
use cdpm::rng::{derive_seed, NoiseStream, Role};
use cdpm::sampler::{sample, Init, ReverseProcess, SamplerConfig};
use cdpm::score::{dsm_loss, esm_loss, ism_loss, AffineScoreFamily, ExactMixtureScore, LossPlan, MixtureTarget, Weighting};
use cdpm::sde::{DiffusionSpec, SdeKind};

/// Point-mass anchors and the Swiss roll paired tests; see the README.
const KNOWN_FAILURES: &[u32] = &[3, 9];

/// Id, name, runtime budget in seconds, runner.
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_report(r: &RunReport) -> Outcome {
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let detail = if failed.is_empty() {
        format!("{} checks", r.checks.len())
    } else {
        format!("{} of {} checks failed: {}", failed.len(), r.checks.len(), failed.join(" "))
    };
    Outcome { pass: failed.is_empty() && !r.checks.is_empty(), detail }
}

fn harness_run(f: fn(&ExperimentConfig) -> cdpm::Result<RunReport>) -> Outcome {
    match f(&ExperimentConfig::default()) {
        Ok(r) => {
            for c in r.checks.iter().filter(|c| !c.pass) {
                println!("    {}", c.line());
            }
            from_report(&r)
        }
        Err(e) => Outcome { pass: false, detail: format!("error: {e}") },
    }
}

fn kernel_fidelity() -> Outcome {
    harness_run(harness::run_kernel_check)
}

// Gradients by central differences of common-random-number MC losses.
fn score_matching_equivalence() -> Outcome {
    let spec = DiffusionSpec::benchmark(SdeKind::Vp, 1);
    let target = MixtureTarget::gaussian(vec![0.5], 2.0).unwrap();
    let oracle = ExactMixtureScore::new(spec.clone(), target.clone()).unwrap();
    let plan = LossPlan::new(spec, target, Weighting::KernelVariance, 1_000_000, 2024).unwrap();
    let base = AffineScoreFamily::constant(-0.3, vec![1.0]).unwrap();
    let h = 1e-3;
    let grad = |loss: &dyn Fn(&AffineScoreFamily) -> f64| {
        let da = (loss(&base.shift_slope(h)) - loss(&base.shift_slope(-h))) / (2.0 * h);
        let dc = (loss(&base.shift_offset(0, h)) - loss(&base.shift_offset(0, -h))) / (2.0 * h);
        [da, dc]
    };
    let esm = grad(&|s| esm_loss(s, &oracle, &plan).unwrap().value);
    let ism = grad(&|s| ism_loss(s, &plan).unwrap().value);
    let dsm = grad(&|s| dsm_loss(s, &plan).unwrap().value);
    let rel = |a: [f64; 2], b: [f64; 2]| (0..2).map(|i| ((a[i] - b[i]) / a[i]).abs()).fold(0.0, f64::max);
    let (ri, rd) = (rel(esm, ism), rel(esm, dsm));
    Outcome {
        pass: ri <= 0.01 && rd <= 0.01,
        detail: format!(
            "grad ESM {:.5} {:.5} ISM {:.5} {:.5} DSM {:.5} {:.5}; max rel diff ISM {ri:.2e} DSM {rd:.2e} (tol 1e-2)",
            esm[0], esm[1], ism[0], ism[1], dsm[0], dsm[1]
        ),
    }
}

fn point_mass_compare() -> Outcome {
    harness_run(harness::run_compare)
}

fn contraction_sign() -> Outcome {
    harness_run(harness::run_contraction)
}

// W2 between the sampler output and the exact law at t_eps, both Gaussian for
// a point-mass target, with the start drawn from the exact p(T) so that only
// the discretization error remains.
fn discretization_order_check() -> Outcome {
    let spec = DiffusionSpec::benchmark(SdeKind::Cou, 1);
    let x0 = -1.0;
    let target = MixtureTarget::point_mass(vec![x0]);
    let score = Arc::new(ExactMixtureScore::new(spec.clone(), target).unwrap());
    let horizon = spec.horizon();
    let deltas = [0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let (n_seeds, n_paths) = (20u64, 10_000usize);
    let mut points = Vec::new();
    for &delta in &deltas {
        let n_steps = harness::steps_for(horizon, 1e-3, delta).unwrap();
        let mut total = 0.0;
        for s in 0..n_seeds {
            let seed = derive_seed(5, s);
            let k = spec.kernel(horizon).unwrap();
            let mut init_stream = NoiseStream::new(seed, 0, Role::Init);
            let init: Vec<f64> = (0..n_paths).map(|_| x0 * k.mean_factor + k.cond_std * init_stream.normal()).collect();
            let proc = ReverseProcess::new(spec.clone(), score.clone(), Init::Samples(init)).unwrap();
            let batch = sample(&proc, &SamplerConfig::em(n_steps, n_paths, seed)).unwrap();
            let end = spec.kernel(batch.t_eps).unwrap();
            let (m, v) = sample_moments(batch.final_states(), 1);
            total += w2_gaussian(&m, v, &[x0 * end.mean_factor], end.cond_std.powi(2)).unwrap();
        }
        points.push((delta, total / n_seeds as f64));
    }
    let fit = discretization_order(&points).unwrap();
    let errs: Vec<String> = points.iter().map(|(d, e)| format!("{d}:{e:.5}")).collect();
    Outcome {
        pass: (0.45..=1.1).contains(&fit.order),
        detail: format!("slope {:.3} in [0.45, 1.1]; W2 by delta {}", fit.order, errs.join(" ")),
    }
}

fn bound_dominance() -> Outcome {
    harness_run(harness::run_bounds)
}

fn transform_identity() -> Outcome {
    harness_run(harness::run_transform_check)
}

fn w2_oracle() -> Outcome {
    harness_run(harness::run_w2)
}

fn swiss_roll_ordering() -> Outcome {
    harness_run(harness::run_swissroll)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "kernel fidelity", 120, kernel_fidelity),
        (2, "score-matching equivalence", 60, score_matching_equivalence),
        (3, "point-mass ordering and anchors", 600, point_mass_compare),
        (4, "contraction sign law", 120, contraction_sign),
        (5, "discretization order", 300, discretization_order_check),
        (6, "bound dominance", 300, bound_dominance),
        (7, "transform identity", 30, transform_identity),
        (8, "W2 estimator oracle", 60, w2_oracle),
        (9, "Swiss roll ordering", 600, swiss_roll_ordering),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var_os("CDPM_ACCEPTANCE_STRICT").is_some();
    let mut bad = 0;
    for (id, name, budget, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = out.pass && in_time;
        let known = KNOWN_FAILURES.contains(&id);
        println!(
            "{} criterion {id} {name}: {} [{:.1} s of {budget} s]{}",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            match (pass, known) {
                (false, true) => " (known failure)",
                (true, true) => " (listed as known failure but passed)",
                _ => "",
            }
        );
        if pass == known || (!pass && strict) {
            bad += 1;
        }
    }
    if bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
