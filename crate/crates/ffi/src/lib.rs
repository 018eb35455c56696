//! C interface to trained species profiles.
//!
//! Every function returns an [`RcStatus`]; on failure the message is
//! available from [`rc_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rarecall::annotations::Detection;
use rarecall::audio::AudioClip;
use rarecall::cluster::{normalize_and_rank, ClusterReport};
use rarecall::embed::{BaselineProvider, BASELINE_ID};
use rarecall::pipeline::detect_clip;
use rarecall::profile::SpeciesProfile;
use rarecall::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    /// Bad input files or data (exit code 2 on the command line).
    Data = 3,
    /// External embedding bridge failure.
    Bridge = 4,
    Usage = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A loaded species profile.
pub struct RcProfile(SpeciesProfile);

/// Detections from one call to [`rc_detect_samples`].
pub struct RcDetections(Vec<Detection>);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RcDetection {
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
    /// 1 for the target species, 0 otherwise.
    pub positive: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> RcStatus {
    match err {
        Error::Usage(_) => RcStatus::Usage,
        Error::Bridge(_) => RcStatus::Bridge,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => RcStatus::InvalidArgument,
        _ => RcStatus::Data,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RcStatus, String)>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RcStatus::Panic
        }
    }
}

fn lib(err: Error) -> (RcStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (RcStatus, String) {
    (RcStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (RcStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `rc_` call on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a profile file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_profile_load(path: *const c_char, out: *mut *mut RcProfile) -> RcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let profile = SpeciesProfile::load(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(RcProfile(profile)));
        Ok(())
    })
}

/// Releases a profile; null is ignored.
///
/// # Safety
/// `profile` must come from [`rc_profile_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rc_profile_free(profile: *mut RcProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Decision threshold on the target score.
///
/// # Safety
/// `profile` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_profile_threshold(profile: *const RcProfile, out: *mut f64) -> RcStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.0.threshold;
        Ok(())
    })
}

/// Length of raw embeddings the profile accepts.
///
/// # Safety
/// `profile` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_profile_dimension(profile: *const RcProfile, out: *mut usize) -> RcStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.0.pca.input_dim();
        Ok(())
    })
}

/// Scores one raw embedding of the profile's provider.
///
/// # Safety
/// `values` must point to `len` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_profile_classify_embedding(
    profile: *const RcProfile,
    values: *const f64,
    len: usize,
    out_score: *mut f64,
    out_positive: *mut i32,
) -> RcStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        let v = slice_arg(values, len, "values")?;
        if out_score.is_null() || out_positive.is_null() {
            return Err(null("output"));
        }
        let (decision, score) = p.0.classify_embedding(v).map_err(lib)?;
        *out_score = score;
        *out_positive = decision.is_positive() as i32;
        Ok(())
    })
}

/// Runs event detection and classification over mono samples. Only
/// profiles trained with the built-in baseline provider are supported here.
///
/// # Safety
/// `samples` must point to `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_detect_samples(
    profile: *const RcProfile,
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut *mut RcDetections,
) -> RcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        if p.0.provider_id != BASELINE_ID {
            return Err((
                RcStatus::Usage,
                format!("provider {:?} needs its bridge; use the command line", p.0.provider_id),
            ));
        }
        let x = slice_arg(samples, len, "samples")?;
        let clip = AudioClip::new(x.iter().map(|&s| s as f64).collect(), sample_rate, "samples").map_err(lib)?;
        let rows = detect_clip(&clip, &p.0, &BaselineProvider).map_err(lib)?;
        *out = Box::into_raw(Box::new(RcDetections(rows)));
        Ok(())
    })
}

/// Number of detections; 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_detections_len(d: *const RcDetections) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Copies detection `index` into `out`.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_detections_get(d: *const RcDetections, index: usize, out: *mut RcDetection) -> RcStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("detections"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let row =
            d.0.get(index)
                .ok_or_else(|| (RcStatus::OutOfRange, format!("index {index} of {}", d.0.len())))?;
        *out = RcDetection {
            start_s: row.start_s,
            end_s: row.end_s,
            score: row.score,
            positive: row.decision.is_positive() as i32,
        };
        Ok(())
    })
}

/// # Safety
/// `d` must come from [`rc_detect_samples`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rc_detections_free(d: *mut RcDetections) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Normalizes and ranks `n` providers' clustering metrics.
///
/// Writes each provider's overall score to `out_overall[i]` (input order)
/// and the input indices from best to worst to `out_order`. An infinite
/// `dunn` marks an unbounded index.
///
/// # Safety
/// Input arrays must hold `n` values; output arrays must hold `n` slots.
#[no_mangle]
pub unsafe extern "C" fn rc_rank_metrics(
    n: usize,
    silhouette: *const f64,
    davies_bouldin: *const f64,
    dunn: *const f64,
    out_overall: *mut f64,
    out_order: *mut usize,
) -> RcStatus {
    guard(|| {
        let s = slice_arg(silhouette, n, "silhouette")?;
        let db = slice_arg(davies_bouldin, n, "davies_bouldin")?;
        let du = slice_arg(dunn, n, "dunn")?;
        if n > 0 && (out_overall.is_null() || out_order.is_null()) {
            return Err(null("output"));
        }
        let reports: Vec<ClusterReport> = (0..n)
            .map(|i| ClusterReport {
                provider_id: format!("{i:020}"),
                silhouette: s[i],
                davies_bouldin: db[i],
                dunn: if du[i].is_finite() { du[i] } else { 0.0 },
                dunn_unbounded: du[i] == f64::INFINITY,
                n_components: 0,
            })
            .collect();
        let ranked = normalize_and_rank(&reports).map_err(lib)?;
        let overall = std::slice::from_raw_parts_mut(out_overall, n);
        let order = std::slice::from_raw_parts_mut(out_order, n);
        for (rank, e) in ranked.entries.iter().enumerate() {
            let i: usize = e.report.provider_id.parse().expect("index id");
            overall[i] = e.overall_score;
            order[rank] = i;
        }
        Ok(())
    })
}
