//! Reverse-time SDE integration.
//!
//! Backward time `t` runs from 0 (physical time `T`) to `T - t_eps` (physical
//! time `t_eps`) in `N` equal steps. Each path `p` owns the predictor stream
//! `(seed, p, Predictor)`, the corrector stream `(seed, p, Corrector)` and the
//! score-noise context `p`; draws within a stream are consumed in step order.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Role};
use crate::score::{EvalCtx, MixtureTarget, ScoreField};
use crate::sde::DiffusionSpec;

/// Default lower cutoff as a fraction of `T`.
pub const T_EPS_FRACTION: f64 = 1e-3;

/// Corrector score evaluations use a separate context so that they never
/// consume score noise meant for the predictor.
const CORRECTOR_CTX_BIT: u64 = 1 << 55;

/// Initial law of the backward process.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `N(mu, v_T I)` from [`DiffusionSpec::prior`], drawn from `(seed, p, Init)`.
    Prior,
    /// The prior, drawn with a different seed.
    PriorWithSeed(u64),
    /// Every path starts at the same point.
    Point(Vec<f64>),
    /// Row-major `m x d` starting points; path `p` takes row `p mod m`.
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Em,
    Pc,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Self::Em),
            "pc" => Ok(Self::Pc),
            other => Err(Error::Config(format!("unknown sampler method '{other}'"))),
        }
    }
}

/// How the Langevin step size `2 (snr |z| / |s|)^2` aggregates norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Batch-mean norms, one step size per corrector sweep.
    #[default]
    BatchMean,
    /// Each path uses its own norms.
    PerPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub method: Method,
    pub snr: f64,
    pub corrector_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Snapshot every `K` steps (plus the initial and final states); `None` keeps only the final state.
    pub save_every: Option<usize>,
    pub t_eps_fraction: f64,
    pub step_rule: StepRule,
    /// Drop the Brownian increments (deterministic drift-only integration).
    pub zero_noise: bool,
}

impl SamplerConfig {
    pub fn em(n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            n_steps,
            method: Method::Em,
            snr: 0.0,
            corrector_steps: 0,
            n_paths,
            seed,
            save_every: None,
            t_eps_fraction: T_EPS_FRACTION,
            step_rule: StepRule::BatchMean,
            zero_noise: false,
        }
    }

    pub fn pc(n_steps: usize, n_paths: usize, seed: u64, snr: f64, corrector_steps: usize) -> Self {
        Self { method: Method::Pc, snr, corrector_steps, ..Self::em(n_steps, n_paths, seed) }
    }

    pub fn with_save_every(mut self, k: usize) -> Self {
        self.save_every = if k == 0 { None } else { Some(k) };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be >= 1".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be >= 1".into()));
        }
        if !(self.snr.is_finite() && self.snr >= 0.0) {
            return Err(Error::Config(format!("snr must be finite and >= 0, got {}", self.snr)));
        }
        if !(self.t_eps_fraction > 0.0 && self.t_eps_fraction < 1.0) {
            return Err(Error::Config("t_eps fraction must lie in (0, 1)".into()));
        }
        if self.method == Method::Pc && self.corrector_steps == 0 {
            return Err(Error::Config("PC sampling needs corrector_steps >= 1".into()));
        }
        Ok(())
    }

    /// Step indices (0 = initial state) that are recorded.
    pub fn save_steps(&self) -> Vec<usize> {
        match self.save_every {
            None => vec![self.n_steps],
            Some(k) => {
                let mut v: Vec<usize> = (0..self.n_steps).step_by(k).collect();
                v.push(self.n_steps);
                v
            }
        }
    }
}

pub struct ReverseProcess {
    pub spec: DiffusionSpec,
    pub score: Arc<dyn ScoreField>,
    pub init: Init,
}

impl ReverseProcess {
    pub fn new(spec: DiffusionSpec, score: Arc<dyn ScoreField>, init: Init) -> Result<Self> {
        if score.dim() != spec.dim() {
            return Err(Error::Usage(format!("score dimension {} != SDE dimension {}", score.dim(), spec.dim())));
        }
        match &init {
            Init::Point(x) if x.len() != spec.dim() => {
                return Err(Error::Usage("initial point has the wrong dimension".into()))
            }
            Init::Samples(xs) if xs.is_empty() || xs.len() % spec.dim() != 0 => {
                return Err(Error::Usage("initial samples must be a non-empty n x d array".into()))
            }
            _ => {}
        }
        Ok(Self { spec, score, init })
    }

    pub fn with_init(&self, init: Init) -> Result<Self> {
        Self::new(self.spec.clone(), self.score.clone(), init)
    }
}

/// Reverse drift `-b(T-t)(x - mu) + sigma^2(T-t) score(T-t, x)` at backward time `t`.
pub fn reverse_drift(proc: &ReverseProcess, t: f64, x: &[f64], ctx: &mut EvalCtx) -> Result<Vec<f64>> {
    let spec = &proc.spec;
    let horizon = spec.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("backward time {t} outside [0, {horizon}]")));
    }
    let phys = horizon - t;
    let mut out = vec![0.0; x.len()];
    proc.score.eval(phys, x, ctx, &mut out)?;
    let (b, s2) = (spec.b(phys), spec.sigma_sq(phys));
    for ((o, xi), m) in out.iter_mut().zip(x).zip(spec.mu()) {
        *o = -b * (xi - m) + s2 * *o;
    }
    Ok(out)
}

/// Saved states of a batch of backward trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub t_eps: f64,
    /// Step index of each snapshot.
    pub steps: Vec<usize>,
    /// Backward time of each snapshot.
    pub times: Vec<f64>,
    /// One row-major `n_paths x dim` array per snapshot.
    pub states: Vec<Vec<f64>>,
}

impl TrajectoryBatch {
    pub fn final_states(&self) -> &[f64] {
        self.states.last().expect("at least one snapshot")
    }

    pub fn physical_time(&self, i: usize) -> f64 {
        self.horizon - self.times[i]
    }

    /// CSV with header `path,step,t,x0..x{d-1}`, `t` the backward time.
    /// Only snapshots whose step is a multiple of `save_every` (and the last one) are written.
    pub fn write_csv<W: Write>(&self, w: &mut W, save_every: Option<usize>) -> Result<()> {
        let mut header = String::from("path,step,t");
        for j in 0..self.dim {
            header.push_str(&format!(",x{j}"));
        }
        writeln!(w, "{header}")?;
        let last = self.steps.len() - 1;
        for (i, (&step, state)) in self.steps.iter().zip(&self.states).enumerate() {
            if let Some(k) = save_every {
                if k > 0 && step % k != 0 && i != last {
                    continue;
                }
            }
            for (p, row) in state.chunks(self.dim).enumerate() {
                write!(w, "{p},{step},{}", self.times[i])?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Per-step coefficients at the left endpoint `T - k delta`.
struct Grid {
    delta: f64,
    b: Vec<f64>,
    sig2: Vec<f64>,
    noise: Vec<f64>,
    phys: Vec<f64>,
    t_eps: f64,
}

impl Grid {
    fn new(spec: &DiffusionSpec, cfg: &SamplerConfig) -> Self {
        let horizon = spec.horizon();
        let t_eps = cfg.t_eps_fraction * horizon;
        let delta = (horizon - t_eps) / cfg.n_steps as f64;
        let mut g = Grid { delta, b: vec![], sig2: vec![], noise: vec![], phys: vec![], t_eps };
        for k in 0..=cfg.n_steps {
            let phys = if k == cfg.n_steps { t_eps } else { horizon - k as f64 * delta };
            let s2 = spec.sigma_sq(phys);
            g.phys.push(phys);
            g.b.push(spec.b(phys));
            g.sig2.push(s2);
            g.noise.push(if cfg.zero_noise { 0.0 } else { (s2 * delta).sqrt() });
        }
        g
    }

    fn backward_time(&self, horizon: f64, k: usize) -> f64 {
        horizon - self.phys[k]
    }
}

fn init_path(proc: &ReverseProcess, cfg: &SamplerConfig, p: usize, prior: Option<(f64, &[f64])>, x: &mut [f64]) {
    let d = x.len();
    match &proc.init {
        Init::Prior | Init::PriorWithSeed(_) => {
            let seed = if let Init::PriorWithSeed(s) = proc.init { s } else { cfg.seed };
            let (sd, mean) = prior.expect("prior resolved");
            let mut s = NoiseStream::new(seed, p as u64, Role::Init);
            for (xi, m) in x.iter_mut().zip(mean) {
                *xi = m + sd * s.normal();
            }
        }
        Init::Point(x0) => x.copy_from_slice(x0),
        Init::Samples(xs) => {
            let m = xs.len() / d;
            let r = p % m;
            x.copy_from_slice(&xs[r * d..(r + 1) * d]);
        }
    }
}

/// One explicit Euler-Maruyama step from left endpoint `k`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn em_step(
    proc: &ReverseProcess,
    g: &Grid,
    k: usize,
    x: &mut [f64],
    s: &mut [f64],
    stream: &mut NoiseStream,
    ctx: &mut EvalCtx,
    p: usize,
) -> Result<()> {
    proc.score.eval(g.phys[k], x, ctx, s)?;
    let (b, s2, ns, dt) = (g.b[k], g.sig2[k], g.noise[k], g.delta);
    let mu = proc.spec.mu();
    for j in 0..x.len() {
        let drift = -b * (x[j] - mu[j]) + s2 * s[j];
        let z = stream.normal();
        x[j] += drift * dt + ns * z;
        if !x[j].is_finite() {
            return Err(Error::Diverged { step: k + 1, path: p });
        }
    }
    Ok(())
}

fn resolve_prior(proc: &ReverseProcess) -> Result<Option<(f64, Vec<f64>)>> {
    Ok(match proc.init {
        Init::Prior | Init::PriorWithSeed(_) => {
            let prior = proc.spec.prior()?;
            Some((prior.variance.sqrt(), prior.mean))
        }
        _ => None,
    })
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Euler-Maruyama integration of the backward SDE.
pub fn sample_em(proc: &ReverseProcess, cfg: &SamplerConfig) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    let d = proc.spec.dim();
    let g = Grid::new(&proc.spec, cfg);
    let saves = cfg.save_steps();
    let prior = resolve_prior(proc)?;
    let prior_ref = prior.as_ref().map(|(sd, m)| (*sd, m.as_slice()));
    let per_path: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut out = Vec::with_capacity(saves.len() * d);
            let mut x = vec![0.0; d];
            let mut s = vec![0.0; d];
            init_path(proc, cfg, p, prior_ref, &mut x);
            let mut stream = NoiseStream::new(cfg.seed, p as u64, Role::Predictor);
            let mut ctx = EvalCtx::new(p as u64);
            let mut next = 0;
            if saves[0] == 0 {
                out.extend_from_slice(&x);
                next = 1;
            }
            for k in 0..cfg.n_steps {
                em_step(proc, &g, k, &mut x, &mut s, &mut stream, &mut ctx, p)?;
                if next < saves.len() && saves[next] == k + 1 {
                    out.extend_from_slice(&x);
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect();
    let per_path = first_error(per_path)?;
    Ok(assemble(proc, cfg, &g, &saves, &per_path))
}

fn assemble(proc: &ReverseProcess, cfg: &SamplerConfig, g: &Grid, saves: &[usize], per_path: &[Vec<f64>]) -> TrajectoryBatch {
    let d = proc.spec.dim();
    let horizon = proc.spec.horizon();
    let states = (0..saves.len())
        .map(|i| {
            let mut snap = Vec::with_capacity(cfg.n_paths * d);
            for path in per_path {
                snap.extend_from_slice(&path[i * d..(i + 1) * d]);
            }
            snap
        })
        .collect();
    TrajectoryBatch {
        dim: d,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        horizon,
        t_eps: g.t_eps,
        steps: saves.to_vec(),
        times: saves.iter().map(|&k| g.backward_time(horizon, k)).collect(),
        states,
    }
}

struct PathState {
    pred: NoiseStream,
    corr: NoiseStream,
    ctx: EvalCtx,
    cctx: EvalCtx,
}

impl PathState {
    fn new(seed: u64, p: usize) -> Self {
        Self {
            pred: NoiseStream::new(seed, p as u64, Role::Predictor),
            corr: NoiseStream::new(seed, p as u64, Role::Corrector),
            ctx: EvalCtx::new(p as u64),
            cctx: EvalCtx::new(p as u64 | CORRECTOR_CTX_BIT),
        }
    }
}

/// Predictor-corrector sampling: each EM step is followed by
/// `corrector_steps` Langevin updates at the new time. A sweep whose score
/// norm is zero leaves the state unchanged.
pub fn sample_pc(proc: &ReverseProcess, cfg: &SamplerConfig) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    if cfg.method != Method::Pc {
        return Err(Error::Config("sample_pc requires method = PC".into()));
    }
    let d = proc.spec.dim();
    let n = cfg.n_paths;
    let g = Grid::new(&proc.spec, cfg);
    let saves = cfg.save_steps();
    let prior = resolve_prior(proc)?;
    let prior_ref = prior.as_ref().map(|(sd, m)| (*sd, m.as_slice()));

    let mut x = vec![0.0; n * d];
    let mut paths: Vec<PathState> = (0..n).map(|p| PathState::new(cfg.seed, p)).collect();
    x.par_chunks_mut(d).enumerate().for_each(|(p, row)| init_path(proc, cfg, p, prior_ref, row));

    let mut snaps: Vec<Vec<f64>> = Vec::with_capacity(saves.len());
    let mut next = 0;
    if saves[0] == 0 {
        snaps.push(x.clone());
        next = 1;
    }
    let mut score = vec![0.0; n * d];
    let mut corr = Corrector::new(n, d);
    for k in 0..cfg.n_steps {
        let res: Vec<Result<()>> = x
            .par_chunks_mut(d)
            .zip(score.par_chunks_mut(d))
            .zip(paths.par_iter_mut())
            .enumerate()
            .map(|(p, ((row, s), st))| em_step(proc, &g, k, row, s, &mut st.pred, &mut st.ctx, p))
            .collect();
        first_error(res)?;

        for _ in 0..cfg.corrector_steps {
            corr.sweep(&*proc.score, g.phys[k + 1], cfg.snr, cfg.step_rule, &mut x, &mut paths, k + 1)?;
        }
        if next < saves.len() && saves[next] == k + 1 {
            snaps.push(x.clone());
            next += 1;
        }
    }
    let horizon = proc.spec.horizon();
    Ok(TrajectoryBatch {
        dim: d,
        n_paths: n,
        seed: cfg.seed,
        horizon,
        t_eps: g.t_eps,
        steps: saves.clone(),
        times: saves.iter().map(|&k| g.backward_time(horizon, k)).collect(),
        states: snaps,
    })
}

struct Corrector {
    d: usize,
    score: Vec<f64>,
    noise: Vec<f64>,
    norms: Vec<(f64, f64)>,
}

impl Corrector {
    fn new(n: usize, d: usize) -> Self {
        Self { d, score: vec![0.0; n * d], noise: vec![0.0; n * d], norms: vec![(0.0, 0.0); n] }
    }

    /// One Langevin update of every path at physical time `phys`.
    #[allow(clippy::too_many_arguments)]
    fn sweep(
        &mut self,
        field: &dyn ScoreField,
        phys: f64,
        snr: f64,
        rule: StepRule,
        x: &mut [f64],
        paths: &mut [PathState],
        step: usize,
    ) -> Result<()> {
        let d = self.d;
        let n = paths.len();
        let res: Vec<Result<()>> = x
            .par_chunks(d)
            .zip(self.score.par_chunks_mut(d))
            .zip(self.noise.par_chunks_mut(d))
            .zip(paths.par_iter_mut())
            .zip(self.norms.par_iter_mut())
            .map(|((((row, s), z), st), nm)| {
                field.eval(phys, row, &mut st.cctx, s)?;
                st.corr.fill_normal(z);
                *nm = (norm(s), norm(z));
                Ok(())
            })
            .collect();
        first_error(res)?;
        let batch_eps = match rule {
            StepRule::BatchMean => {
                let (gs, zs) = self.norms.iter().fold((0.0, 0.0), |(a, b), (g, z)| (a + g, b + z));
                let (gm, zm) = (gs / n as f64, zs / n as f64);
                Some(if gm > 0.0 { 2.0 * (snr * zm / gm).powi(2) } else { 0.0 })
            }
            StepRule::PerPath => None,
        };
        let res: Vec<Result<()>> = x
            .par_chunks_mut(d)
            .zip(self.score.par_chunks(d))
            .zip(self.noise.par_chunks(d))
            .zip(self.norms.par_iter())
            .enumerate()
            .map(|(p, (((row, s), z), &(gn, zn)))| {
                let eps = batch_eps.unwrap_or(if gn > 0.0 { 2.0 * (snr * zn / gn).powi(2) } else { 0.0 });
                if eps == 0.0 {
                    return Ok(());
                }
                let amp = (2.0 * eps).sqrt();
                for j in 0..d {
                    row[j] += eps * s[j] + amp * z[j];
                    if !row[j].is_finite() {
                        return Err(Error::Diverged { step, path: p });
                    }
                }
                Ok(())
            })
            .collect();
        first_error(res)?;
        Ok(())
    }
}

/// Runs `sweeps` Langevin corrector updates at a frozen physical time on a
/// row-major `n x d` batch, with the stream layout of [`sample_pc`].
pub fn langevin_correct(
    field: &dyn ScoreField,
    phys: f64,
    x: &mut [f64],
    snr: f64,
    rule: StepRule,
    sweeps: usize,
    seed: u64,
) -> Result<()> {
    let d = field.dim();
    if x.is_empty() || x.len() % d != 0 {
        return Err(Error::Usage("batch must be a non-empty n x d array".into()));
    }
    let n = x.len() / d;
    let mut paths: Vec<PathState> = (0..n).map(|p| PathState::new(seed, p)).collect();
    let mut corr = Corrector::new(n, d);
    for i in 0..sweeps {
        corr.sweep(field, phys, snr, rule, x, &mut paths, i + 1)?;
    }
    Ok(())
}

/// Dispatches on `cfg.method`.
pub fn sample(proc: &ReverseProcess, cfg: &SamplerConfig) -> Result<TrajectoryBatch> {
    match cfg.method {
        Method::Em => sample_em(proc, cfg),
        Method::Pc => sample_pc(proc, cfg),
    }
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    ExactKernel,
    /// Forward Euler-Maruyama with step at most `dt`.
    Em { dt: f64 },
}

/// `n` draws of `X_t`, row-major `n x d`.
pub fn sample_forward(
    spec: &DiffusionSpec,
    target: &MixtureTarget,
    t: f64,
    n: usize,
    seed: u64,
    mode: ForwardMode,
) -> Result<Vec<f64>> {
    spec.check_time(t)?;
    match mode {
        ForwardMode::ExactKernel => {
            let d = spec.dim();
            let k = spec.kernel_unchecked(t);
            let mut out = vec![0.0; n * d];
            out.par_chunks_mut(d).enumerate().for_each(|(p, row)| {
                let mut data = NoiseStream::new(seed, p as u64, Role::Target);
                let mut noise = NoiseStream::new(seed, p as u64, Role::Kernel);
                let mut x0 = vec![0.0; d];
                target.sample_into(&mut data, &mut x0);
                spec.kernel_mean(&k, &x0, row);
                for r in row.iter_mut() {
                    *r += k.cond_std * noise.normal();
                }
            });
            Ok(out)
        }
        ForwardMode::Em { dt } => Ok(simulate_forward_em(spec, target, &[t], n, dt, seed)?.pop().unwrap()),
    }
}

/// Forward EM snapshots at increasing `times`; each segment between
/// consecutive times is split into `ceil(len / dt)` equal steps.
pub fn simulate_forward_em(
    spec: &DiffusionSpec,
    target: &MixtureTarget,
    times: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("forward step must be positive, got {dt}")));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("snapshot times must be non-empty and nondecreasing".into()));
    }
    for &t in times {
        spec.check_time(t)?;
    }
    let d = spec.dim();
    // (start time, step, count) per segment
    let mut segments = Vec::with_capacity(times.len());
    let mut t0 = 0.0;
    for &t in times {
        let len = t - t0;
        let count = if len > 0.0 { (len / dt - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let h = if count > 0 { len / count as f64 } else { 0.0 };
        let coeffs: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let s = t0 + i as f64 * h;
                (spec.b(s) * h, (spec.sigma_sq(s) * h).sqrt())
            })
            .collect();
        segments.push(coeffs);
        t0 = t;
    }
    let mu = spec.mu();
    let per_path: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut data = NoiseStream::new(seed, p as u64, Role::Target);
            let mut stream = NoiseStream::new(seed, p as u64, Role::Predictor);
            let mut x = vec![0.0; d];
            target.sample_into(&mut data, &mut x);
            let mut out = Vec::with_capacity(times.len() * d);
            for seg in &segments {
                for &(bh, ns) in seg {
                    for j in 0..d {
                        x[j] += bh * (x[j] - mu[j]) + ns * stream.normal();
                    }
                }
                out.extend_from_slice(&x);
            }
            out
        })
        .collect();
    Ok((0..times.len())
        .map(|i| {
            let mut snap = Vec::with_capacity(n * d);
            for path in &per_path {
                snap.extend_from_slice(&path[i * d..(i + 1) * d]);
            }
            snap
        })
        .collect())
}

/// Root-mean-square distance between two synchronously coupled batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRecord {
    /// Backward times of the snapshots.
    pub times: Vec<f64>,
    pub rms: Vec<f64>,
    /// Least-squares slope of `ln rms` against `t` over all snapshots; `None` when some `rms` is 0.
    pub rate: Option<f64>,
}

impl ContractionRecord {
    /// Least-squares slope of `ln rms` over snapshots with backward time in `[a, b]`.
    pub fn fitted_rate(&self, a: f64, b: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.rms)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(t, r)| (*t, *r))
            .collect();
        if pts.len() < 2 || pts.iter().any(|(_, r)| !(*r > 0.0)) {
            return None;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        Some(ls_slope(&xs, &ys))
    }
}

pub(crate) fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Integrates two batches that share every noise stream and differ only in
/// their initial laws. Uses EM with the snapshot schedule of `cfg`
/// (every step when `save_every` is unset).
pub fn coupled_contraction(proc: &ReverseProcess, cfg: &SamplerConfig, x_init: Init, y_init: Init) -> Result<ContractionRecord> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Em;
    if cfg.save_every.is_none() {
        cfg.save_every = Some(1);
    }
    let a = sample_em(&proc.with_init(x_init)?, &cfg)?;
    let b = sample_em(&proc.with_init(y_init)?, &cfg)?;
    let rms: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(u, v)| (u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / cfg.n_paths as f64).sqrt())
        .collect();
    let mut rec = ContractionRecord { times: a.times.clone(), rms, rate: None };
    let (lo, hi) = (rec.times[0], *rec.times.last().unwrap());
    rec.rate = rec.fitted_rate(lo, hi);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{AffineScoreFamily, ExactMixtureScore, NoiseMode, NoiseModel, NoisyScore};
    use crate::sde::SdeKind;

    fn exact(kind: SdeKind, target: MixtureTarget) -> ReverseProcess {
        let spec = DiffusionSpec::benchmark(kind, target.dim());
        let score = Arc::new(ExactMixtureScore::new(spec.clone(), target).unwrap());
        ReverseProcess::new(spec, score, Init::Prior).unwrap()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn ve_drift_is_pure_score_term() {
        let proc = exact(SdeKind::Ve, MixtureTarget::gaussian(vec![0.3], 1.0).unwrap());
        let x = [0.7];
        let mut ctx = EvalCtx::new(0);
        let d = reverse_drift(&proc, 2.0, &x, &mut ctx).unwrap();
        let mut sc = [0.0];
        proc.score.eval(8.0, &x, &mut ctx, &mut sc).unwrap();
        assert!((d[0] - proc.spec.sigma_sq(8.0) * sc[0]).abs() < 1e-15);
    }

    #[test]
    fn cou_gaussian_drift_is_affine() {
        let (theta, sigma) = (0.2, 0.5);
        let proc = exact(SdeKind::Cou, MixtureTarget::gaussian(vec![0.0], 1.0).unwrap());
        let phys: f64 = 6.0;
        let f = (theta * phys).exp();
        let var = f * f + sigma * sigma * (2.0 * theta * phys).exp_m1() / (2.0 * theta);
        let slope = -theta - sigma * sigma / var;
        let mut ctx = EvalCtx::new(0);
        for x in [-2.0, 0.5, 3.0] {
            let d = reverse_drift(&proc, 10.0 - phys, &[x], &mut ctx).unwrap()[0];
            assert!((d - slope * x).abs() < 1e-14 * x.abs().max(1.0));
        }
    }

    #[test]
    fn ou_drift_at_mode() {
        let mu = 0.4;
        let spec = DiffusionSpec::benchmark(SdeKind::Ou, 1).with_mu(vec![mu]).unwrap();
        let target = MixtureTarget::gaussian(vec![2.0], 1.0).unwrap();
        let score = Arc::new(ExactMixtureScore::new(spec.clone(), target).unwrap());
        let proc = ReverseProcess::new(spec.clone(), score, Init::Prior).unwrap();
        let phys = 3.0;
        let mode = mu + spec.kernel(phys).unwrap().mean_factor * (2.0 - mu);
        let d = reverse_drift(&proc, 10.0 - phys, &[mode], &mut EvalCtx::new(0)).unwrap()[0];
        assert!((d - 0.2 * (mode - mu)).abs() < 1e-15);
    }

    #[test]
    fn single_deterministic_step() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ou, 1);
        let score = Arc::new(AffineScoreFamily::constant(-0.5, vec![0.1]).unwrap());
        let proc = ReverseProcess::new(spec.clone(), score, Init::Point(vec![2.0])).unwrap();
        let mut cfg = SamplerConfig::em(1, 3, 0);
        cfg.zero_noise = true;
        let out = sample_em(&proc, &cfg).unwrap();
        let delta = 10.0 - 1e-2;
        let drift = -spec.b(10.0) * 2.0 + spec.sigma_sq(10.0) * (-0.5 * 2.0 + 0.1);
        for x in out.final_states() {
            assert!((x - (2.0 + drift * delta)).abs() < 1e-14);
        }
    }

    #[test]
    fn cou_point_mass_recovery() {
        let proc = exact(SdeKind::Cou, MixtureTarget::point_mass(vec![-1.0]));
        let cfg = SamplerConfig::em(500, 10_000, 1);
        let out = sample_em(&proc, &cfg).unwrap();
        let (m, v) = moments(out.final_states());
        let f = (0.2f64 * 1e-2).exp();
        let se = (v / 10_000.0).sqrt();
        assert!((m + f).abs() < 3.0 * se + 1e-3, "mean {m}, se {se}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = DiffusionSpec::benchmark(SdeKind::Cou, 1);
        let base = Arc::new(ExactMixtureScore::new(spec.clone(), MixtureTarget::point_mass(vec![-1.0])).unwrap());
        let noisy = Arc::new(NoisyScore::new(base, NoiseModel::new(NoiseMode::PerEvalGaussian, 0.5, 3).unwrap()));
        let proc = ReverseProcess::new(spec, noisy, Init::Prior).unwrap();
        let run = |threads: usize, cfg: &SamplerConfig| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| sample(&proc, cfg).unwrap())
        };
        for cfg in [SamplerConfig::em(50, 300, 4), SamplerConfig::pc(50, 300, 4, 0.1, 2)] {
            assert_eq!(run(1, &cfg), run(4, &cfg));
        }
    }

    #[test]
    fn pc_with_zero_snr_equals_em() {
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 2);
        let target = MixtureTarget::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let base = Arc::new(ExactMixtureScore::new(spec.clone(), target).unwrap());
        let noisy = Arc::new(NoisyScore::new(base, NoiseModel::new(NoiseMode::PerEvalGaussian, 0.1, 8).unwrap()));
        let proc = ReverseProcess::new(spec, noisy, Init::Prior).unwrap();
        let em = sample_em(&proc, &SamplerConfig::em(100, 64, 5).with_save_every(10)).unwrap();
        let pc = sample_pc(&proc, &SamplerConfig::pc(100, 64, 5, 0.0, 3).with_save_every(10)).unwrap();
        assert_eq!(em, pc);
    }

    #[test]
    fn langevin_stationarity() {
        // time frozen at phys = 2; batch starts 3 sd off the marginal mean and twice as wide
        let spec = DiffusionSpec::benchmark(SdeKind::Vp, 1);
        let target = MixtureTarget::gaussian(vec![0.5], 0.2).unwrap();
        let score = ExactMixtureScore::new(spec.clone(), target).unwrap();
        let phys = 2.0;
        let k = spec.kernel(phys).unwrap();
        let (m_true, v_true) = (k.mean_factor * 0.5, k.mean_factor.powi(2) * 0.2 + k.cond_var());
        let n = 4000;
        let mut start = NoiseStream::new(3, 0, Role::Init);
        let mut x: Vec<f64> =
            (0..n).map(|_| m_true + 3.0 * v_true.sqrt() + 2.0 * v_true.sqrt() * start.normal()).collect();
        langevin_correct(&score, phys, &mut x, 0.2, StepRule::BatchMean, 200, 1).unwrap();
        let (m, v) = moments(&x);
        let se_m = (v_true / n as f64).sqrt();
        let se_v = v_true * (2.0 / n as f64).sqrt();
        assert!((m - m_true).abs() < 3.0 * se_m, "{m} vs {m_true}");
        assert!((v - v_true).abs() < 3.0 * se_v, "{v} vs {v_true}");
    }

    #[test]
    fn forward_sampling() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        let target = MixtureTarget::point_mass(vec![0.0]);
        let g = MixtureTarget::gaussian(vec![1.0], 0.5).unwrap();
        let at0 = sample_forward(&spec, &g, 0.0, 10, 2, ForwardMode::ExactKernel).unwrap();
        for (p, x) in at0.iter().enumerate() {
            let mut row = [0.0];
            g.sample_into(&mut NoiseStream::new(2, p as u64, Role::Target), &mut row);
            assert_eq!(*x, row[0]);
        }
        let xs = sample_forward(&spec, &target, 10.0, 200_000, 3, ForwardMode::ExactKernel).unwrap();
        let (_, v) = moments(&xs);
        assert!((v - 0.2475).abs() < 3.0 * 0.2475 * (2.0 / 200_000f64).sqrt());
    }

    #[test]
    fn forward_em_matches_kernel() {
        let spec = DiffusionSpec::benchmark(SdeKind::Cvp, 1);
        let target = MixtureTarget::point_mass(vec![1.0]);
        let n = 20_000;
        let xs = sample_forward(&spec, &target, 5.0, n, 7, ForwardMode::Em { dt: 1e-3 }).unwrap();
        let k = spec.kernel(5.0).unwrap();
        let (m, v) = moments(&xs);
        assert!((m - k.mean_factor).abs() < 3.0 * (k.cond_var() / n as f64).sqrt());
        assert!((v - k.cond_var()).abs() < 3.0 * k.cond_var() * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn identical_inits_have_zero_distance() {
        let proc = exact(SdeKind::Cou, MixtureTarget::gaussian(vec![0.0], 1.0).unwrap());
        let rec = coupled_contraction(&proc, &SamplerConfig::em(100, 50, 1), Init::Prior, Init::Prior).unwrap();
        assert!(rec.rms.iter().all(|&r| r == 0.0));
        assert_eq!(rec.rate, None);
    }

    #[test]
    fn cou_contracts() {
        let proc = exact(SdeKind::Cou, MixtureTarget::gaussian(vec![0.0], 1.0).unwrap());
        let rec =
            coupled_contraction(&proc, &SamplerConfig::em(200, 200, 1), Init::Prior, Init::PriorWithSeed(99)).unwrap();
        assert!(rec.rate.unwrap() < 0.0);
    }

    #[test]
    fn save_schedule_and_csv() {
        let proc = exact(SdeKind::Vp, MixtureTarget::point_mass(vec![0.0, 1.0]));
        let cfg = SamplerConfig::em(10, 3, 0).with_save_every(4);
        assert_eq!(cfg.save_steps(), vec![0, 4, 8, 10]);
        let out = sample_em(&proc, &cfg).unwrap();
        assert_eq!(out.states.len(), 4);
        assert!(out.times.windows(2).all(|w| w[1] > w[0]));
        assert!((out.physical_time(3) - out.t_eps).abs() < 1e-12);
        let mut buf = Vec::new();
        out.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "path,step,t,x0,x1");
        assert_eq!(text.lines().count(), 1 + 4 * 3);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = DiffusionSpec::benchmark(SdeKind::Ve, 1);
        let score = Arc::new(AffineScoreFamily::constant(1e300, vec![0.0]).unwrap());
        let proc = ReverseProcess::new(spec, score, Init::Point(vec![1.0])).unwrap();
        match sample_em(&proc, &SamplerConfig::em(10, 2, 0)) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("{other:?}"),
        }
    }
}
