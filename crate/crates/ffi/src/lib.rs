//! C ABI over `fcix-core`.
//!
//! Every fallible function returns an [`FcixStatus`] and writes results
//! through out-pointers. On failure the message is available from
//! [`fcix_last_error_message`] on the same thread until the next failure.
//! Handles are opaque; each `*_new` has a matching `*_free`. Panics are
//! caught at the boundary and reported as `FCIX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fcix_core::chaos_index::{fcix_pipeline, AlsOptions};
use fcix_core::market_data::load_price_panel;
use fcix_core::mlp::{mlp_cdf, mlp_pdf, mlp_quantile, mlp_sample, MlpParams, MlpSampler};
use fcix_core::pipeline::{run, RunConfig, RunOptions};
use fcix_core::regime_dynamics::{stationary_distribution, TransitionMatrix};
use fcix_core::regime_mixture::{classify_values, rice_bin_count, MixtureComponent, MlpMixtureModel};
use fcix_core::segmentation::{detect_changepoints, Bandwidth, SegmentationConfig, SegmentationMode};
use fcix_core::Error;

/// Result of every fallible call. Codes 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcixStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a buffer that is too small.
    InvalidArgument = 1,
    /// Invalid input data, parameters or config.
    Validation = 2,
    /// A numerical routine or fit failed.
    Numerical = 3,
    /// An upstream pipeline artifact is missing.
    MissingDependency = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn from_error(e: Error) -> FcixStatus {
    let status = match e.exit_code() {
        3 => FcixStatus::Numerical,
        4 => FcixStatus::MissingDependency,
        _ => FcixStatus::Validation,
    };
    set_error(e.to_string());
    status
}

fn invalid(msg: &str) -> FcixStatus {
    set_error(msg.to_string());
    FcixStatus::InvalidArgument
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FcixStatus>) -> FcixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcixStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FcixStatus::Panic
        }
    }
}

trait IntoStatus<T> {
    fn status(self) -> Result<T, FcixStatus>;
}

impl<T> IntoStatus<T> for fcix_core::Result<T> {
    fn status(self) -> Result<T, FcixStatus> {
        self.map_err(from_error)
    }
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, FcixStatus> {
    p.as_mut().ok_or_else(|| invalid("null output pointer"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], FcixStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid("null input array"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize) -> Result<&'a mut [T], FcixStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(invalid("null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, FcixStatus> {
    if p.is_null() {
        return Err(invalid("null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not valid UTF-8"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fcix_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fcix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Rice-rule bin count for `n` observations.
#[no_mangle]
pub extern "C" fn fcix_rice_bin_count(n: usize) -> usize {
    rice_bin_count(n)
}

/// Opaque MLP distribution.
pub struct FcixMlp {
    params: MlpParams,
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_new(mu: f64, sigma: f64, omega: f64, out: *mut *mut FcixMlp) -> FcixStatus {
    guard(|| {
        let out = out_ref(out)?;
        let params = MlpParams::new(mu, sigma, omega).status()?;
        *out = Box::into_raw(Box::new(FcixMlp { params }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from [`fcix_mlp_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_free(h: *mut FcixMlp) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

unsafe fn mlp_eval(
    h: *const FcixMlp,
    x: f64,
    out: *mut f64,
    f: fn(f64, &MlpParams) -> fcix_core::Result<f64>,
) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        *out_ref(out)? = f(x, &h.params).status()?;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_pdf(h: *const FcixMlp, psi: f64, out: *mut f64) -> FcixStatus {
    mlp_eval(h, psi, out, mlp_pdf)
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_cdf(h: *const FcixMlp, psi: f64, out: *mut f64) -> FcixStatus {
    mlp_eval(h, psi, out, mlp_cdf)
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_quantile(h: *const FcixMlp, q: f64, out: *mut f64) -> FcixStatus {
    mlp_eval(h, q, out, mlp_quantile)
}

/// Writes `n` seeded draws into `out`.
///
/// # Safety
/// `h` must be a live handle and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fcix_mlp_sample(h: *const FcixMlp, n: usize, seed: u64, out: *mut f64) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        let dst = slice_mut(out, n)?;
        let sampler = MlpSampler::new(h.params, seed).status()?;
        dst.copy_from_slice(&mlp_sample(&sampler, n, seed).status()?);
        Ok(())
    })
}

/// Opaque regime mixture.
pub struct FcixMixture {
    model: MlpMixtureModel,
}

/// Builds an `r`-component mixture from parallel parameter arrays.
///
/// # Safety
/// The four arrays must each hold `r` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_new(
    r: usize,
    mu: *const f64,
    sigma: *const f64,
    omega: *const f64,
    pi: *const f64,
    out: *mut *mut FcixMixture,
) -> FcixStatus {
    guard(|| {
        let out = out_ref(out)?;
        let (mu, sigma, omega, pi) = (slice(mu, r)?, slice(sigma, r)?, slice(omega, r)?, slice(pi, r)?);
        let components = (0..r)
            .map(|k| {
                Ok(MixtureComponent {
                    params: MlpParams::new(mu[k], sigma[k], omega[k])?,
                    pi: pi[k],
                })
            })
            .collect::<fcix_core::Result<Vec<_>>>()
            .status()?;
        let model = MlpMixtureModel::new(components).status()?;
        *out = Box::into_raw(Box::new(FcixMixture { model }));
        Ok(())
    })
}

/// Loads a mixture from its JSON form (as written by the regimes stage).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_from_json(json: *const c_char, out: *mut *mut FcixMixture) -> FcixStatus {
    guard(|| {
        let out = out_ref(out)?;
        let model = MlpMixtureModel::from_json(text(json)?).status()?;
        *out = Box::into_raw(Box::new(FcixMixture { model }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a live mixture handle.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_free(h: *mut FcixMixture) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of regimes, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live mixture handle.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_n_regimes(h: *const FcixMixture) -> usize {
    h.as_ref().map_or(0, |m| m.model.r())
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_density(h: *const FcixMixture, psi: f64, out: *mut f64) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        *out_ref(out)? = h.model.density(psi);
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_cdf(h: *const FcixMixture, psi: f64, out: *mut f64) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        *out_ref(out)? = h.model.cdf(psi);
        Ok(())
    })
}

/// Maximum-posterior regime of each value. Labels are 1-based in order of
/// increasing regime mean.
///
/// # Safety
/// `values` must hold `n` doubles and `labels` room for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn fcix_mixture_classify(
    h: *const FcixMixture,
    values: *const f64,
    n: usize,
    labels: *mut usize,
) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        let dst = slice_mut(labels, n)?;
        let post = classify_values(slice(values, n)?, &h.model).status()?;
        dst.copy_from_slice(&post.labels);
        Ok(())
    })
}

/// Opaque daily chaos-index series.
pub struct FcixSeries {
    inner: fcix_core::chaos_index::FcixSeries,
}

/// Loads a price panel CSV and computes the daily index.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fcix_series_from_prices(path: *const c_char, out: *mut *mut FcixSeries) -> FcixStatus {
    guard(|| {
        let out = out_ref(out)?;
        let report = load_price_panel(Path::new(text(path)?)).status()?;
        let run = fcix_pipeline(&report.panel, AlsOptions::default()).status()?;
        *out = Box::into_raw(Box::new(FcixSeries { inner: run.series }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a live series handle.
#[no_mangle]
pub unsafe extern "C" fn fcix_series_free(h: *mut FcixSeries) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Length of the series, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live series handle.
#[no_mangle]
pub unsafe extern "C" fn fcix_series_len(h: *const FcixSeries) -> usize {
    h.as_ref().map_or(0, |s| s.inner.len())
}

/// Copies the values into `out`, which must hold at least the series length.
///
/// # Safety
/// `h` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn fcix_series_copy_values(h: *const FcixSeries, out: *mut f64, cap: usize) -> FcixStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| invalid("null handle"))?;
        let v = &h.inner.values;
        if cap < v.len() {
            return Err(invalid("output buffer too small"));
        }
        slice_mut(out, v.len())?.copy_from_slice(v);
        Ok(())
    })
}

/// Exactly `k` change points with median-heuristic bandwidth. Writes the
/// exclusive segment ends into `breakpoints` and their count to `n_out`.
///
/// # Safety
/// `values` must hold `n` doubles, `breakpoints` room for `cap` entries and
/// `n_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fcix_detect_changepoints(
    values: *const f64,
    n: usize,
    k: usize,
    min_size: usize,
    breakpoints: *mut usize,
    cap: usize,
    n_out: *mut usize,
) -> FcixStatus {
    guard(|| {
        let n_out = out_ref(n_out)?;
        let cfg = SegmentationConfig {
            mode: SegmentationMode::FixedK(k),
            bandwidth: Bandwidth::MedianHeuristic,
            min_size,
        };
        let seg = detect_changepoints(slice(values, n)?, &cfg).status()?;
        let b = &seg.breakpoints;
        if cap < b.len() {
            return Err(invalid("breakpoint buffer too small"));
        }
        slice_mut(breakpoints, b.len())?.copy_from_slice(b);
        *n_out = b.len();
        Ok(())
    })
}

/// Stationary distribution of a row-stochastic `r x r` matrix stored row
/// major.
///
/// # Safety
/// `probs` must hold `r * r` doubles and `out` room for `r`.
#[no_mangle]
pub unsafe extern "C" fn fcix_stationary_distribution(probs: *const f64, r: usize, out: *mut f64) -> FcixStatus {
    guard(|| {
        let flat = slice(probs, r * r)?;
        let dst = slice_mut(out, r)?;
        let rows = flat.chunks(r.max(1)).map(|c| c.to_vec()).collect();
        let states = (1..=r).map(|i| format!("S{i}")).collect();
        let p = TransitionMatrix::from_probs(states, rows).status()?;
        dst.copy_from_slice(&stationary_distribution(&p).status()?.probs);
        Ok(())
    })
}

/// Runs the pipeline described by a TOML config file.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fcix_run(config_path: *const c_char, force: bool) -> FcixStatus {
    guard(|| {
        let cfg = RunConfig::load(Path::new(text(config_path)?)).status()?;
        run(&cfg, RunOptions { force }).status()?;
        Ok(())
    })
}
