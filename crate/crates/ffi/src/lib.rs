//! C ABI over `cdpm`.
//!
//! Objects are opaque handles created by `*_new` functions and released by the
//! matching `*_free`. Every fallible function returns a [`CdpmStatus`]; on
//! failure the message is kept per thread and read with
//! [`cdpm_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use cdpm::metrics::{w2_auto, w2_gaussian};
use cdpm::sampler::{sample, Init, ReverseProcess, SamplerConfig, TrajectoryBatch};
use cdpm::score::{eval_vec, EvalCtx, ExactMixtureScore, MixtureTarget, NoiseMode, NoiseModel, NoisyScore, ScoreField};
use cdpm::sde::{DiffusionSpec, SdeKind, SdeParams};
use cdpm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdpmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Config = 4,
    Singular = 5,
    Capability = 6,
    Diverged = 7,
    Usage = 8,
    Io = 9,
    Panic = 10,
}

/// A diffusion model.
pub struct CdpmSpec(DiffusionSpec);

/// A score field bound to the model it was built for.
pub struct CdpmScore {
    spec: DiffusionSpec,
    field: Arc<dyn ScoreField>,
}

/// Final states of a sampler run.
pub struct CdpmBatch(TrajectoryBatch);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CdpmStatus {
    match e {
        Error::Domain(_) => CdpmStatus::Domain,
        Error::Config(_) => CdpmStatus::Config,
        Error::Singular(_) => CdpmStatus::Singular,
        Error::Capability(_) => CdpmStatus::Capability,
        Error::Diverged { .. } => CdpmStatus::Diverged,
        Error::Usage(_) => CdpmStatus::Usage,
        Error::Io(_) => CdpmStatus::Io,
    }
}

struct Fail(CdpmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CdpmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CdpmStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CdpmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CdpmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(CdpmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Length in bytes of the calling thread's last error message (0 if none).
#[no_mangle]
pub extern "C" fn cdpm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message, NUL terminated and truncated to `len - 1`
/// bytes, into `buf`. Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn cdpm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(len - 1);
        ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdpm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Benchmark model of family `kind` ("OU", "COU", "VE", "VP", "subVP", "CVP", "CsubVP").
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdpm_spec_benchmark(kind: *const c_char, dim: usize, out: *mut *mut CdpmSpec) -> CdpmStatus {
    guard(|| {
        let kind: SdeKind = str_arg(kind, "kind")?.parse()?;
        let out = out_arg(out, "out")?;
        if dim == 0 {
            return Err(Fail(CdpmStatus::InvalidArgument, "dim must be >= 1".into()));
        }
        *out = boxed(CdpmSpec(DiffusionSpec::benchmark(kind, dim)));
        Ok(())
    })
}

/// Model with explicit parameters: `(theta, sigma)` for OU/COU,
/// `(sigma_min, sigma_max)` for VE, `(beta_min, beta_max)` otherwise.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdpm_spec_new(
    kind: *const c_char,
    p1: f64,
    p2: f64,
    horizon: f64,
    dim: usize,
    out: *mut *mut CdpmSpec,
) -> CdpmStatus {
    guard(|| {
        let kind: SdeKind = str_arg(kind, "kind")?.parse()?;
        let out = out_arg(out, "out")?;
        let params = match kind {
            SdeKind::Ou | SdeKind::Cou => SdeParams::Constant { theta: p1, sigma: p2 },
            SdeKind::Ve => SdeParams::Geometric { sigma_min: p1, sigma_max: p2 },
            _ => SdeParams::Linear { beta_min: p1, beta_max: p2 },
        };
        *out = boxed(CdpmSpec(DiffusionSpec::new(kind, params, horizon, dim)?));
        Ok(())
    })
}

/// # Safety
/// `spec` must come from a `cdpm_spec_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdpm_spec_free(spec: *mut CdpmSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Perturbation kernel `X_t | X_0 = x ~ N(mu + f (x - mu), s^2 I)`.
///
/// # Safety
/// `spec` must be a live handle; `mean_factor` and `cond_std` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cdpm_spec_kernel(
    spec: *const CdpmSpec,
    t: f64,
    mean_factor: *mut f64,
    cond_std: *mut f64,
) -> CdpmStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        let k = spec.0.kernel(t)?;
        *out_arg(mean_factor, "mean_factor")? = k.mean_factor;
        *out_arg(cond_std, "cond_std")? = k.cond_std;
        Ok(())
    })
}

/// Prior variance (per coordinate) of the backward process.
///
/// # Safety
/// `spec` must be a live handle and `variance` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdpm_spec_prior_variance(spec: *const CdpmSpec, variance: *mut f64) -> CdpmStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        *out_arg(variance, "variance")? = spec.0.prior()?.variance;
        Ok(())
    })
}

/// Exact score of `N(mean, var I)` pushed through `spec`; `var = 0` gives a point mass.
///
/// # Safety
/// `spec` must be a live handle, `mean` must point to `dim` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdpm_score_gaussian(
    spec: *const CdpmSpec,
    mean: *const f64,
    dim: usize,
    var: f64,
    out: *mut *mut CdpmScore,
) -> CdpmStatus {
    guard(|| {
        let spec = &spec.as_ref().ok_or_else(|| null("spec"))?.0;
        let mean = slice_arg(mean, dim, "mean")?.to_vec();
        let out = out_arg(out, "out")?;
        let target = if var == 0.0 { MixtureTarget::point_mass(mean) } else { MixtureTarget::gaussian(mean, var)? };
        let field = Arc::new(ExactMixtureScore::new(spec.clone(), target)?);
        *out = boxed(CdpmScore { spec: spec.clone(), field });
        Ok(())
    })
}

/// Wraps `base` with injected error `epsilon`: mode 0 adds fresh Gaussian
/// noise per evaluation, mode 1 a fixed offset. `base` stays valid.
///
/// # Safety
/// `base` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdpm_score_noisy(
    base: *const CdpmScore,
    mode: u32,
    epsilon: f64,
    seed: u64,
    out: *mut *mut CdpmScore,
) -> CdpmStatus {
    guard(|| {
        let base = base.as_ref().ok_or_else(|| null("base"))?;
        let out = out_arg(out, "out")?;
        let mode = match mode {
            0 => NoiseMode::PerEvalGaussian,
            1 => NoiseMode::FrozenOffset,
            m => return Err(Fail(CdpmStatus::InvalidArgument, format!("unknown noise mode {m}"))),
        };
        let field = Arc::new(NoisyScore::new(base.field.clone(), NoiseModel::new(mode, epsilon, seed)?));
        *out = boxed(CdpmScore { spec: base.spec.clone(), field });
        Ok(())
    })
}

/// Evaluates the score at `(t, x)` into `out` (both of length `dim`).
/// Stochastic fields draw from stream `stream` (below 2^55), restarted on every call.
///
/// # Safety
/// `score` must be a live handle; `x` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cdpm_score_eval(
    score: *const CdpmScore,
    t: f64,
    x: *const f64,
    dim: usize,
    stream: u64,
    out: *mut f64,
) -> CdpmStatus {
    guard(|| {
        let score = score.as_ref().ok_or_else(|| null("score"))?;
        if dim != score.field.dim() {
            return Err(Fail(CdpmStatus::InvalidArgument, format!("dim {dim} != score dim {}", score.field.dim())));
        }
        if stream >= 1 << 55 {
            return Err(Fail(CdpmStatus::InvalidArgument, "stream must be below 2^55".into()));
        }
        let x = slice_arg(x, dim, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = eval_vec(&*score.field, t, x, &mut EvalCtx::new(stream))?;
        slice::from_raw_parts_mut(out, dim).copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `score` must come from a `cdpm_score_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdpm_score_free(score: *mut CdpmScore) {
    if !score.is_null() {
        drop(Box::from_raw(score));
    }
}

/// Backward sampling from the prior. `method` 0 is Euler-Maruyama, 1 is
/// predictor-corrector with one corrector step at `snr`.
///
/// # Safety
/// `score` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdpm_sample(
    score: *const CdpmScore,
    method: u32,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    snr: f64,
    out: *mut *mut CdpmBatch,
) -> CdpmStatus {
    guard(|| {
        let score = score.as_ref().ok_or_else(|| null("score"))?;
        let out = out_arg(out, "out")?;
        let cfg = match method {
            0 => SamplerConfig::em(n_steps, n_paths, seed),
            1 => SamplerConfig::pc(n_steps, n_paths, seed, snr, 1),
            m => return Err(Fail(CdpmStatus::InvalidArgument, format!("unknown method {m}"))),
        };
        let proc = ReverseProcess::new(score.spec.clone(), score.field.clone(), Init::Prior)?;
        *out = boxed(CdpmBatch(sample(&proc, &cfg)?));
        Ok(())
    })
}

/// Number of paths and dimension of a batch.
///
/// # Safety
/// `batch` must be a live handle; `n_paths` and `dim` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cdpm_batch_shape(batch: *const CdpmBatch, n_paths: *mut usize, dim: *mut usize) -> CdpmStatus {
    guard(|| {
        let b = batch.as_ref().ok_or_else(|| null("batch"))?;
        *out_arg(n_paths, "n_paths")? = b.0.n_paths;
        *out_arg(dim, "dim")? = b.0.dim;
        Ok(())
    })
}

/// Copies the final states (row-major `n_paths x dim`) into `buf` of length `len`.
///
/// # Safety
/// `batch` must be a live handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cdpm_batch_final_states(batch: *const CdpmBatch, buf: *mut f64, len: usize) -> CdpmStatus {
    guard(|| {
        let b = batch.as_ref().ok_or_else(|| null("batch"))?;
        let states = b.0.final_states();
        if len != states.len() {
            return Err(Fail(CdpmStatus::InvalidArgument, format!("buffer holds {len} values, batch has {}", states.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(states);
        Ok(())
    })
}

/// # Safety
/// `batch` must come from [`cdpm_sample`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdpm_batch_free(batch: *mut CdpmBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Exact W2 between two `n x dim` point clouds (Sinkhorn above the assignment cap).
///
/// # Safety
/// `a` and `b` must point to `n * dim` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cdpm_w2(a: *const f64, b: *const f64, n: usize, dim: usize, out: *mut f64) -> CdpmStatus {
    guard(|| {
        let len = n.checked_mul(dim).ok_or_else(|| Fail(CdpmStatus::InvalidArgument, "n * dim overflows".into()))?;
        let a = slice_arg(a, len, "a")?;
        let b = slice_arg(b, len, "b")?;
        *out_arg(out, "out")? = w2_auto(a, b, dim)?.value;
        Ok(())
    })
}

/// Closed-form W2 between `N(m1, v1 I)` and `N(m2, v2 I)`.
///
/// # Safety
/// `m1` and `m2` must point to `dim` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn cdpm_w2_gaussian(
    m1: *const f64,
    v1: f64,
    m2: *const f64,
    v2: f64,
    dim: usize,
    out: *mut f64,
) -> CdpmStatus {
    guard(|| {
        let m1 = slice_arg(m1, dim, "m1")?;
        let m2 = slice_arg(m2, dim, "m2")?;
        *out_arg(out, "out")? = w2_gaussian(m1, v1, m2, v2)?;
        Ok(())
    })
}
