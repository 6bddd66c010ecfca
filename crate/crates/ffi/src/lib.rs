//! C ABI for `bla-lab`.
//!
//! Every function returns a [`BlaStatus`]; on failure the message is
//! available from [`bla_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_from_*` functions and released with the
//! matching `*_free`. Array outputs are caller-allocated; their required
//! length is reported by the corresponding `*_len`/`*_count` accessor.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use bla_lab::bla::{self, ExperimentRecord, RecordMeta};
use bla_lab::ccd::{self, DoeRegion, Spacing};
use bla_lab::ratfit::{self, FitSpec, RationalModel};
use bla_lab::signal::{self, MultisineSpec, SignalRealization};
use bla_lab::sysmodels::ModelConfig;
use bla_lab::{Complex64, Error};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Invalid arguments, dimensions or configuration text.
    InvalidInput = 2,
    /// Numerical failure (divergence, degenerate design, ...).
    Numeric = 3,
    /// A Rust panic was caught at the boundary.
    Panic = 4,
}

/// Spacing of the designed points along the eigen-path.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlaSpacing {
    CellCenters = 0,
    Endpoints = 1,
}

/// Experiment region of the central composite design.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BlaRegion {
    pub dc_min: f64,
    pub dc_max: f64,
    pub std_min: f64,
    pub std_max: f64,
    pub dc_c: f64,
    pub std_c: f64,
    pub l_center: usize,
}

/// Realized multisine.
pub struct BlaSignal(SignalRealization);

/// Robust BLA estimate.
pub struct BlaEstimate(bla::BlaEstimate);

/// Fitted rational model.
pub struct BlaModel(RationalModel);

/// Simulatable system loaded from a TOML model description.
pub struct BlaSystem(ModelConfig);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BlaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BlaStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BlaStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            if e.is_config() {
                BlaStatus::InvalidInput
            } else {
                BlaStatus::Numeric
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BlaStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn drop_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread (empty after success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bla_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Realizes `periods` periods of a random-phase multisine.
///
/// # Safety
/// `harmonics` points to `n_harmonics` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_signal_new(
    n_samples: usize,
    fs: f64,
    harmonics: *const usize,
    n_harmonics: usize,
    dc: f64,
    std: f64,
    seed: u64,
    periods: usize,
    out: *mut *mut BlaSignal,
) -> BlaStatus {
    guard(|| {
        let spec = MultisineSpec {
            n_samples,
            fs,
            excited_harmonics: input(harmonics, n_harmonics, "harmonics")?.to_vec(),
            dc,
            std,
            seed,
        };
        put(out, BlaSignal(signal::realize_multisine(&spec, periods)?), "out")
    })
}

/// Number of samples (all periods).
///
/// # Safety
/// `sig` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bla_signal_len(sig: *const BlaSignal) -> usize {
    sig.as_ref().map_or(0, |s| s.0.samples().len())
}

/// Copies the samples into `buf` (`len` must equal [`bla_signal_len`]).
///
/// # Safety
/// `sig` is a live handle; `buf` has room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bla_signal_samples(sig: *const BlaSignal, buf: *mut f64, len: usize) -> BlaStatus {
    guard(|| {
        let s = obj(sig, "sig")?.0.samples();
        if len != s.len() {
            return Err(Error::Dimension(format!("buffer holds {len}, signal has {}", s.len())).into());
        }
        output(buf, len, "buf")?.copy_from_slice(s);
        Ok(())
    })
}

/// # Safety
/// `sig` is a handle from [`bla_signal_new`] or null; it is not used again.
#[no_mangle]
pub unsafe extern "C" fn bla_signal_free(sig: *mut BlaSignal) {
    drop_handle(sig)
}

/// Loads a system from TOML model text (same format as the CLI's model
/// files).
///
/// # Safety
/// `toml_text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_system_from_toml(toml_text: *const c_char, out: *mut *mut BlaSystem) -> BlaStatus {
    guard(|| {
        let text = CStr::from_ptr(obj(toml_text, "toml_text")?)
            .to_str()
            .map_err(|e| Error::Config(format!("model text is not UTF-8: {e}")))?;
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        put(out, BlaSystem(cfg), "out")
    })
}

/// Steady-state response to `len` samples of a periodic input with period
/// `n`. The model's transient periods are dropped, so `y` receives
/// `len - transient * n` samples; the count is written to `y_len`.
///
/// # Safety
/// `x` has `len` values; `y` has room for `y_cap` values; `y_len` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bla_system_simulate(
    sys: *const BlaSystem,
    x: *const f64,
    len: usize,
    n: usize,
    fs: f64,
    y: *mut f64,
    y_cap: usize,
    y_len: *mut usize,
) -> BlaStatus {
    guard(|| {
        let cfg = &obj(sys, "sys")?.0;
        let out = cfg.model.simulate(input(x, len, "x")?, n, fs, &cfg.sim)?;
        if y_len.is_null() {
            return Err(Fail::Null("y_len"));
        }
        *y_len = out.len();
        if y_cap < out.len() {
            return Err(Error::Dimension(format!("output buffer holds {y_cap}, need {}", out.len())).into());
        }
        output(y, out.len(), "y")?.copy_from_slice(&out);
        Ok(())
    })
}

/// # Safety
/// `sys` is a handle from [`bla_system_from_toml`] or null.
#[no_mangle]
pub unsafe extern "C" fn bla_system_free(sys: *mut BlaSystem) {
    drop_handle(sys)
}

/// Robust BLA from time records. `u` and `y` hold `m * p * n_samples`
/// values laid out realization-major, then period, then sample.
///
/// # Safety
/// `harmonics` has `n_harmonics` values; `u`, `y` have `m * p * n_samples`
/// values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_estimate_from_time(
    n_samples: usize,
    fs: f64,
    harmonics: *const usize,
    n_harmonics: usize,
    m: usize,
    p: usize,
    u: *const f64,
    y: *const f64,
    out: *mut *mut BlaEstimate,
) -> BlaStatus {
    guard(|| {
        let total = m
            .checked_mul(p)
            .and_then(|v| v.checked_mul(n_samples))
            .ok_or_else(|| Error::Dimension("record size overflows".into()))?;
        let (u, y) = (input(u, total, "u")?, input(y, total, "y")?);
        let per = p * n_samples;
        let records: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
            .map(|i| (u[i * per..(i + 1) * per].to_vec(), y[i * per..(i + 1) * per].to_vec()))
            .collect();
        let meta = RecordMeta {
            n_samples,
            fs,
            excited_harmonics: input(harmonics, n_harmonics, "harmonics")?.to_vec(),
            dc: 0.0,
            std: 0.0,
            seeds: vec![0; m],
        };
        let rec = ExperimentRecord::from_time_records(meta, &records)?;
        put(out, BlaEstimate(bla::estimate_bla(&rec)?), "out")
    })
}

/// Number of excited bins.
///
/// # Safety
/// `est` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bla_estimate_len(est: *const BlaEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.freqs.len())
}

/// Copies the per-bin results; any output pointer may be null to skip it.
/// Non-null outputs need [`bla_estimate_len`] entries.
///
/// # Safety
/// `est` is a live handle; non-null buffers have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bla_estimate_copy(
    est: *const BlaEstimate,
    len: usize,
    freqs: *mut f64,
    g_re: *mut f64,
    g_im: *mut f64,
    var_total: *mut f64,
    var_noise: *mut f64,
    var_stoch_nl: *mut f64,
) -> BlaStatus {
    guard(|| {
        let e = &obj(est, "est")?.0;
        if len != e.freqs.len() {
            return Err(Error::Dimension(format!("buffers hold {len}, estimate has {}", e.freqs.len())).into());
        }
        let g = &e.g_bla;
        let cols: [(*mut f64, Box<dyn Fn(usize) -> f64>); 6] = [
            (freqs, Box::new(|k| e.freqs[k])),
            (g_re, Box::new(|k| g[k].re)),
            (g_im, Box::new(|k| g[k].im)),
            (var_total, Box::new(|k| e.var_total[k])),
            (var_noise, Box::new(|k| e.var_noise[k])),
            (var_stoch_nl, Box::new(|k| e.var_stoch_nl[k])),
        ];
        for (buf, get) in cols {
            if !buf.is_null() {
                for (k, v) in slice::from_raw_parts_mut(buf, len).iter_mut().enumerate() {
                    *v = get(k);
                }
            }
        }
        Ok(())
    })
}

/// Band-mean total distortion.
///
/// # Safety
/// `est` is a live handle; `mse` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_estimate_mse(est: *const BlaEstimate, mse: *mut f64) -> BlaStatus {
    guard(|| {
        let v = bla::mse_of_bla(&obj(est, "est")?.0)?;
        *output(mse, 1, "mse")?.first_mut().expect("len 1") = v;
        Ok(())
    })
}

/// # Safety
/// `est` is a handle from [`bla_estimate_from_time`] or null.
#[no_mangle]
pub unsafe extern "C" fn bla_estimate_free(est: *mut BlaEstimate) {
    drop_handle(est)
}

/// Fits `G(s) = B(s)/A(s)` with `deg B = nb`, `deg A = na` to an FRF.
/// `weights` may be null for uniform weighting.
///
/// # Safety
/// `freqs`, `g_re`, `g_im` (and `weights` when non-null) have `len`
/// values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_fit_rational(
    freqs: *const f64,
    g_re: *const f64,
    g_im: *const f64,
    weights: *const f64,
    len: usize,
    nb: usize,
    na: usize,
    out: *mut *mut BlaModel,
) -> BlaStatus {
    guard(|| {
        let f = input(freqs, len, "freqs")?;
        let (re, im) = (input(g_re, len, "g_re")?, input(g_im, len, "g_im")?);
        let g: Vec<Complex64> = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let mut spec = FitSpec::new(nb, na);
        if !weights.is_null() {
            spec.weights = Some(input(weights, len, "weights")?.to_vec());
        }
        put(out, BlaModel(ratfit::fit_rational(f, &g, &spec)?), "out")
    })
}

/// Fits an estimate with inverse total-variance weights.
///
/// # Safety
/// `est` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_fit_estimate(
    est: *const BlaEstimate,
    nb: usize,
    na: usize,
    out: *mut *mut BlaModel,
) -> BlaStatus {
    guard(|| {
        let e = &obj(est, "est")?.0;
        let mut spec = FitSpec::new(nb, na);
        spec.weights = Some(ratfit::weight_from_variance(e));
        put(out, BlaModel(ratfit::fit_rational(&e.freqs, &e.g_bla, &spec)?), "out")
    })
}

/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bla_model_pole_count(model: *const BlaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.poles.len())
}

/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bla_model_zero_count(model: *const BlaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.zeros.len())
}

unsafe fn copy_roots(roots: &[Complex64], len: usize, re: *mut f64, im: *mut f64) -> Result<(), Fail> {
    if len != roots.len() {
        return Err(Error::Dimension(format!("buffers hold {len}, model has {} roots", roots.len())).into());
    }
    let (re, im) = (output(re, len, "re")?, output(im, len, "im")?);
    for (k, z) in roots.iter().enumerate() {
        re[k] = z.re;
        im[k] = z.im;
    }
    Ok(())
}

/// Copies the poles (rad/s) into `re`/`im`, `len` = [`bla_model_pole_count`].
///
/// # Safety
/// `model` is a live handle; buffers have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bla_model_poles(model: *const BlaModel, re: *mut f64, im: *mut f64, len: usize) -> BlaStatus {
    guard(|| copy_roots(&obj(model, "model")?.0.poles, len, re, im))
}

/// Copies the zeros (rad/s) into `re`/`im`, `len` = [`bla_model_zero_count`].
///
/// # Safety
/// `model` is a live handle; buffers have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bla_model_zeros(model: *const BlaModel, re: *mut f64, im: *mut f64, len: usize) -> BlaStatus {
    guard(|| copy_roots(&obj(model, "model")?.0.zeros, len, re, im))
}

/// Evaluates the model at `f_hz`.
///
/// # Safety
/// `model` is a live handle; `re`, `im` are writable.
#[no_mangle]
pub unsafe extern "C" fn bla_model_response(model: *const BlaModel, f_hz: f64, re: *mut f64, im: *mut f64) -> BlaStatus {
    guard(|| {
        let g = obj(model, "model")?.0.response_at_hz(f_hz);
        *output(re, 1, "re")?.first_mut().expect("len 1") = g.re;
        *output(im, 1, "im")?.first_mut().expect("len 1") = g.im;
        Ok(())
    })
}

/// Weighted RMS residual of the fit and its convergence flag.
///
/// # Safety
/// `model` is a live handle; non-null outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn bla_model_info(model: *const BlaModel, residual: *mut f64, converged: *mut bool) -> BlaStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        if let Some(r) = residual.as_mut() {
            *r = m.weighted_rms_residual;
        }
        if let Some(c) = converged.as_mut() {
            *c = m.converged;
        }
        Ok(())
    })
}

/// # Safety
/// `model` is a handle from a fit function or null.
#[no_mangle]
pub unsafe extern "C" fn bla_model_free(model: *mut BlaModel) {
    drop_handle(model)
}

/// Number of rows of the central composite plan for `region`.
///
/// # Safety
/// `region` is readable; `rows` is writable.
#[no_mangle]
pub unsafe extern "C" fn bla_ccd_plan_rows(region: *const BlaRegion, rows: *mut usize) -> BlaStatus {
    guard(|| {
        let plan = ccd::build_plan(&to_region(obj(region, "region")?))?;
        *output(rows, 1, "rows")?.first_mut().expect("len 1") = plan.rows.len();
        Ok(())
    })
}

/// Copies the plan settings; `dc` and `std` need [`bla_ccd_plan_rows`]
/// entries.
///
/// # Safety
/// `region` is readable; buffers have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bla_ccd_plan(region: *const BlaRegion, dc: *mut f64, std: *mut f64, len: usize) -> BlaStatus {
    guard(|| {
        let plan = ccd::build_plan(&to_region(obj(region, "region")?))?;
        if len != plan.rows.len() {
            return Err(Error::Dimension(format!("buffers hold {len}, plan has {} rows", plan.rows.len())).into());
        }
        let (dc, std) = (output(dc, len, "dc")?, output(std, len, "std")?);
        for (k, r) in plan.rows.iter().enumerate() {
            dc[k] = r.dc;
            std[k] = r.std;
        }
        Ok(())
    })
}

fn to_region(r: &BlaRegion) -> DoeRegion {
    DoeRegion {
        dc_min: r.dc_min,
        dc_max: r.dc_max,
        std_min: r.std_min,
        std_max: r.std_max,
        dc_c: r.dc_c,
        std_c: r.std_c,
        l_center: r.l_center,
    }
}

/// Fits the quadratic surface to per-row MSEs of the plan, locates its
/// extremum and writes `n_points` designed `(dc, std)` settings along the
/// least-varying eigen-direction. `x_star` and `direction` receive two
/// normalized coordinates each and may be null.
///
/// # Safety
/// `region` is readable; `mses` has `n_rows` values; `dc`, `std` have room
/// for `n_points` values; non-null `x_star`, `direction` have room for 2.
#[no_mangle]
pub unsafe extern "C" fn bla_ccd_eigen_path(
    region: *const BlaRegion,
    mses: *const f64,
    n_rows: usize,
    n_points: usize,
    spacing: BlaSpacing,
    dc: *mut f64,
    std: *mut f64,
    x_star: *mut f64,
    direction: *mut f64,
) -> BlaStatus {
    guard(|| {
        let region = to_region(obj(region, "region")?);
        let plan = ccd::build_plan(&region)?;
        let surface = ccd::fit_surface(&plan, input(mses, n_rows, "mses")?)?;
        let ex = ccd::extremum(&surface)?;
        let spacing = match spacing {
            BlaSpacing::CellCenters => Spacing::CellCenters,
            BlaSpacing::Endpoints => Spacing::Endpoints,
        };
        let path = ccd::eigen_path(&surface, ex.x_star, &region, n_points, spacing)?;
        let (dc, std) = (output(dc, n_points, "dc")?, output(std, n_points, "std")?);
        for (k, p) in path.designed_points.iter().enumerate() {
            dc[k] = p[0];
            std[k] = p[1];
        }
        if !x_star.is_null() {
            slice::from_raw_parts_mut(x_star, 2).copy_from_slice(&path.x_star);
        }
        if !direction.is_null() {
            slice::from_raw_parts_mut(direction, 2).copy_from_slice(&path.direction);
        }
        Ok(())
    })
}
