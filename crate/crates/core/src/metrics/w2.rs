use rayon::prelude::*;

use super::{hungarian, sinkhorn};
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};

/// Largest sample count handled by the exact assignment solver.
pub const ASSIGNMENT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2Method {
    Sorted1D,
    Assignment,
    Sinkhorn,
    GaussianClosedForm,
}

impl W2Method {
    pub fn name(self) -> &'static str {
        match self {
            W2Method::Sorted1D => "sorted1d",
            W2Method::Assignment => "assignment",
            W2Method::Sinkhorn => "sinkhorn",
            W2Method::GaussianClosedForm => "gaussian",
        }
    }
}

impl std::str::FromStr for W2Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sorted1d" | "sorted" => Ok(Self::Sorted1D),
            "assignment" | "exact" => Ok(Self::Assignment),
            "sinkhorn" => Ok(Self::Sinkhorn),
            "gaussian" => Ok(Self::GaussianClosedForm),
            other => Err(Error::Config(format!("unknown W2 method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Report {
    pub value: f64,
    pub method: W2Method,
    pub n: usize,
    pub stderr: Option<f64>,
}

fn check_pair(a: &[f64], b: &[f64], d: usize) -> Result<usize> {
    if d == 0 || a.len() % d != 0 || b.len() % d != 0 {
        return Err(Error::Usage(format!("sample arrays are not n x {d}")));
    }
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "W2 estimators need equal sample counts ({} vs {})",
            a.len() / d,
            b.len() / d
        )));
    }
    if a.is_empty() {
        return Err(Error::Usage("W2 of empty samples".into()));
    }
    Ok(a.len() / d)
}

/// Exact 1-D W2 through the quantile coupling.
pub fn w2_sorted_1d(a: &[f64], b: &[f64]) -> Result<W2Report> {
    let n = check_pair(a, b, 1)?;
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let ms = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n as f64;
    Ok(W2Report { value: ms.sqrt(), method: W2Method::Sorted1D, n, stderr: None })
}

pub(crate) fn sq_cost(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let n = a.len() / d;
    let mut cost = vec![0.0; n * n];
    cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ai = &a[i * d..(i + 1) * d];
        for (j, c) in row.iter_mut().enumerate() {
            let bj = &b[j * d..(j + 1) * d];
            *c = ai.iter().zip(bj).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    });
    cost
}

/// Exact W2 between two equal-size point clouds by minimum-cost matching.
pub fn w2_assignment(a: &[f64], b: &[f64], d: usize) -> Result<W2Report> {
    let n = check_pair(a, b, d)?;
    if n > ASSIGNMENT_CAP {
        return Err(Error::Usage(format!(
            "assignment solver is capped at n = {ASSIGNMENT_CAP} (got {n}); use the Sinkhorn estimator"
        )));
    }
    let cost = sq_cost(a, b, d);
    let (_, total) = hungarian::solve(n, &cost);
    Ok(W2Report { value: (total.max(0.0) / n as f64).sqrt(), method: W2Method::Assignment, n, stderr: None })
}

/// Closed-form W2 between `N(m1, v1 I)` and `N(m2, v2 I)`.
pub fn w2_gaussian(m1: &[f64], v1: f64, m2: &[f64], v2: f64) -> Result<f64> {
    if m1.len() != m2.len() {
        return Err(Error::Usage("Gaussian means differ in dimension".into()));
    }
    if !(v1 >= 0.0 && v2 >= 0.0) {
        return Err(Error::Domain("Gaussian variances must be >= 0".into()));
    }
    let dm: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let ds = v1.sqrt() - v2.sqrt();
    Ok((dm + m1.len() as f64 * ds * ds).sqrt())
}

/// Sample mean and per-coordinate variance averaged over coordinates.
pub fn sample_moments(xs: &[f64], d: usize) -> (Vec<f64>, f64) {
    let n = xs.len() / d;
    let mut mean = vec![0.0; d];
    for row in xs.chunks(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = 0.0;
    for row in xs.chunks(d) {
        for (m, x) in mean.iter().zip(row) {
            ss += (x - m) * (x - m);
        }
    }
    (mean, ss / ((n.max(2) - 1) * d) as f64)
}

/// Exact estimator for the shape of the data: quantile coupling in 1-D,
/// assignment up to the cap, Sinkhorn (labelled) above it.
pub fn w2_auto(a: &[f64], b: &[f64], d: usize) -> Result<W2Report> {
    let n = check_pair(a, b, d)?;
    if d == 1 {
        w2_sorted_1d(a, b)
    } else if n <= ASSIGNMENT_CAP {
        w2_assignment(a, b, d)
    } else {
        let scale = sq_cost_scale(a, b, d);
        Ok(sinkhorn::w2_sinkhorn(a, b, d, &sinkhorn::SinkhornOptions::new(1e-3 * scale))?.report)
    }
}

/// Mean squared distance of the two clouds to their joint mean, a cost scale.
pub(crate) fn sq_cost_scale(a: &[f64], b: &[f64], d: usize) -> f64 {
    let all: Vec<f64> = a.iter().chain(b).cloned().collect();
    let (_, v) = sample_moments(&all, d);
    (v * d as f64).max(f64::MIN_POSITIVE)
}

/// Bootstrap standard error of an estimator: each replicate resamples both
/// clouds with replacement from the streams `(seed, r, Bootstrap)`.
pub fn bootstrap_stderr<F>(a: &[f64], b: &[f64], d: usize, reps: usize, seed: u64, estimator: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    let n = check_pair(a, b, d)?;
    if reps < 2 {
        return Err(Error::Usage("bootstrap needs at least 2 replicates".into()));
    }
    let vals: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = NoiseStream::new(seed, r as u64, Role::Bootstrap);
            let mut ra = Vec::with_capacity(a.len());
            let mut rb = Vec::with_capacity(b.len());
            for _ in 0..n {
                let i = s.below(n);
                ra.extend_from_slice(&a[i * d..(i + 1) * d]);
            }
            for _ in 0..n {
                let j = s.below(n);
                rb.extend_from_slice(&b[j * d..(j + 1) * d]);
            }
            estimator(&ra, &rb)
        })
        .collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let m = vals.iter().sum::<f64>() / reps as f64;
    Ok((vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps - 1) as f64).sqrt())
}
