//! Log-domain Sinkhorn for uniform point clouds under squared Euclidean cost.

use rayon::prelude::*;

use super::w2::{sq_cost, W2Method, W2Report};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Entropic regularisation (absolute, in units of squared distance).
    pub reg: f64,
    pub max_iters: usize,
    /// Stop when the L1 violation of the column marginal drops below this.
    pub tol: f64,
    /// Report the debiased Sinkhorn divergence instead of the transport cost.
    pub debias: bool,
}

impl SinkhornOptions {
    pub fn new(reg: f64) -> Self {
        Self { reg, max_iters: 10_000, tol: 1e-8, debias: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub report: W2Report,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
    /// Dual objective after each full iteration (nondecreasing).
    pub dual_trace: Vec<f64>,
    /// `<pi, C>` of the final plan.
    pub transport_cost: f64,
    /// Entropic OT value (the dual objective at the last iterate).
    pub entropic_cost: f64,
}

struct Solve {
    transport: f64,
    dual: f64,
    converged: bool,
    iterations: usize,
    err: f64,
    trace: Vec<f64>,
}

fn lse(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Iterations spent at each intermediate regularisation of the warm start.
const ANNEAL_ITERS: usize = 10;
/// The column marginal is measured every this many iterations.
const CHECK_EVERY: usize = 5;

fn solve(cost: &[f64], n: usize, opts: &SinkhornOptions) -> Solve {
    let log_w = -(n as f64).ln();
    let w = 1.0 / n as f64;
    let mut cost_t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost_t[j * n + i] = cost[i * n + j];
        }
    }
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let update = |reg: f64, f: &mut Vec<f64>, g: &mut Vec<f64>| {
        g.par_iter_mut().enumerate().for_each(|(j, gj)| {
            let col = &cost_t[j * n..(j + 1) * n];
            *gj = -reg * lse((0..n).map(|i| log_w + (f[i] - col[i]) / reg));
        });
        f.par_iter_mut().enumerate().for_each(|(i, fi)| {
            let row = &cost[i * n..(i + 1) * n];
            *fi = -reg * lse((0..n).map(|j| log_w + (g[j] - row[j]) / reg));
        });
    };
    // warm start by halving the regularisation from the largest cost
    let c_max = cost.iter().cloned().fold(0.0, f64::max);
    let mut reg = c_max;
    while reg > 2.0 * opts.reg {
        for _ in 0..ANNEAL_ITERS {
            update(reg, &mut f, &mut g);
        }
        reg *= 0.5;
    }
    let reg = opts.reg;
    let mut trace = Vec::new();
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        update(reg, &mut f, &mut g);
        trace.push(w * (f.iter().sum::<f64>() + g.iter().sum::<f64>()));
        if iterations % CHECK_EVERY != 0 && iterations != opts.max_iters {
            continue;
        }
        // rows are exact after the f update; measure the columns
        err = (0..n)
            .into_par_iter()
            .map(|j| {
                let col = &cost_t[j * n..(j + 1) * n];
                let mass: f64 = (0..n).map(|i| (2.0 * log_w + (f[i] + g[j] - col[i]) / reg).exp()).sum();
                (mass - w).abs()
            })
            .sum();
        if err < opts.tol {
            converged = true;
            break;
        }
    }
    let transport: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &cost[i * n..(i + 1) * n];
            (0..n).map(|j| (2.0 * log_w + (f[i] + g[j] - row[j]) / reg).exp() * row[j]).sum::<f64>()
        })
        .sum();
    let dual = *trace.last().unwrap_or(&0.0);
    Solve { transport, dual, converged, iterations, err, trace }
}

pub fn w2_sinkhorn(a: &[f64], b: &[f64], d: usize, opts: &SinkhornOptions) -> Result<SinkhornResult> {
    if !(opts.reg > 0.0) {
        return Err(Error::Domain(format!("Sinkhorn regularisation must be > 0, got {}", opts.reg)));
    }
    if d == 0 || a.len() != b.len() || a.is_empty() || a.len() % d != 0 {
        return Err(Error::Usage("Sinkhorn needs two non-empty n x d clouds of equal size".into()));
    }
    let n = a.len() / d;
    let ab = solve(&sq_cost(a, b, d), n, opts);
    let (value, converged, err) = if opts.debias {
        let aa = solve(&sq_cost(a, a, d), n, opts);
        let bb = solve(&sq_cost(b, b, d), n, opts);
        let s = ab.dual - 0.5 * (aa.dual + bb.dual);
        (s.max(0.0).sqrt(), ab.converged && aa.converged && bb.converged, ab.err.max(aa.err).max(bb.err))
    } else {
        (ab.transport.max(0.0).sqrt(), ab.converged, ab.err)
    };
    Ok(SinkhornResult {
        report: W2Report { value, method: W2Method::Sinkhorn, n, stderr: None },
        converged,
        iterations: ab.iterations,
        marginal_error: err,
        dual_trace: ab.trace,
        transport_cost: ab.transport,
        entropic_cost: ab.dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::w2::w2_assignment;
    use crate::rng::{NoiseStream, Role};

    fn cloud(n: usize, d: usize, seed: u64, shift: f64) -> Vec<f64> {
        let mut s = NoiseStream::new(seed, 0, Role::Target);
        (0..n * d).map(|_| s.normal() + shift).collect()
    }

    #[test]
    fn dual_trace_is_monotone() {
        let a = cloud(64, 2, 1, 0.0);
        let b = cloud(64, 2, 2, 0.5);
        let r = w2_sinkhorn(&a, &b, 2, &SinkhornOptions::new(0.2)).unwrap();
        assert!(r.converged, "{}", r.marginal_error);
        for w in r.dual_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn identical_clouds_debiased() {
        let a = cloud(50, 2, 3, 0.0);
        let opts = SinkhornOptions { debias: true, ..SinkhornOptions::new(0.1) };
        assert!(w2_sinkhorn(&a, &a, 2, &opts).unwrap().report.value <= 1e-6);
    }

    #[test]
    fn small_reg_close_to_exact() {
        let a = cloud(128, 2, 5, 0.0);
        let b = cloud(128, 2, 6, 1.0);
        let exact = w2_assignment(&a, &b, 2).unwrap().value;
        let scale = crate::metrics::w2::sq_cost_scale(&a, &b, 2);
        let r = w2_sinkhorn(&a, &b, 2, &SinkhornOptions::new(1e-3 * scale)).unwrap();
        assert!((r.report.value - exact).abs() <= 0.02 * exact, "{} vs {exact}", r.report.value);
        assert!(r.report.value >= 0.98 * exact);
    }

    #[test]
    fn rejects_bad_reg() {
        let a = cloud(4, 1, 1, 0.0);
        assert!(w2_sinkhorn(&a, &a, 1, &SinkhornOptions::new(0.0)).is_err());
    }
}
