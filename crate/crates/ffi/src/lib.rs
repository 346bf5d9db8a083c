//! C ABI for `selfstab`.
//!
//! Objects are opaque handles created by `ss_*_new`/`ss_*_from_*` functions
//! and released with the matching `ss_*_free`. Every function returns an
//! `SsStatus` code; on failure `ss_last_error_message` describes the most
//! recent error on the calling thread. Strings returned through `char **`
//! must be released with `ss_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use selfstab::cli_io::{parse_toml_str, to_toml};
use selfstab::protocol::Termination;
use selfstab::{
    cramer_rao_bound, qfi, Bloch, Error, HypothesisBank, MeasurementOp, NoiseModel, PauliAxis, PhaseGrid,
    ProtocolConfig, ProtocolResult, QubitState,
};

/// Status codes returned by every entry point.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Parse { .. } => SsStatus::Parse,
        Error::Validation { .. } => SsStatus::Validation,
        Error::InvalidArgument(_) | Error::NonPhysical { .. } | Error::InvalidOperator(_) | Error::DegenerateBound { .. } => {
            SsStatus::InvalidArgument
        }
        Error::NonPhysicalDrift { .. } | Error::AllZeroLikelihood => SsStatus::Numerical,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => SsStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SsStatus, String)>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (SsStatus, String) {
    (SsStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn vec3(p: *const f64, name: &str) -> Result<Bloch, (SsStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Bloch::new(s[0], s[1], s[2]))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (SsStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

fn into_c_string(s: String) -> Result<*mut c_char, (SsStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (SsStatus::Io, "string contains a NUL byte".to_string()))
}

/// Opaque protocol configuration.
pub struct SsConfig(ProtocolConfig);

/// Opaque protocol result.
pub struct SsResult(ProtocolResult);

/// Opaque hypothesis bank with its dynamical model.
pub struct SsBank {
    bank: HypothesisBank,
    g_axis: PauliAxis,
    noise: NoiseModel,
    dt: f64,
}

/// Message for the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Quantum Fisher information of the state with Bloch vector `bloch[3]` for
/// the generator axis `g[3]`.
///
/// # Safety
/// `bloch` and `g` must point to three doubles; `out_qfi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_qfi(bloch: *const f64, g: *const f64, out_qfi: *mut f64) -> SsStatus {
    guard(|| {
        let rho = QubitState::from_bloch(vec3(bloch, "bloch")?).map_err(lib_err)?;
        let g = PauliAxis::new(vec3(g, "g")?).map_err(lib_err)?;
        *out(out_qfi, "out_qfi")? = qfi(&rho, &g);
        Ok(())
    })
}

/// `1 / (nu * fq)`.
///
/// # Safety
/// `out_bound` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_cramer_rao_bound(fq: f64, nu: u64, out_bound: *mut f64) -> SsStatus {
    guard(|| {
        *out(out_bound, "out_bound")? = cramer_rao_bound(fq, nu).map_err(lib_err)?;
        Ok(())
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_from_toml(text: *const c_char, out_config: *mut *mut SsConfig) -> SsStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| (SsStatus::InvalidArgument, "config text is not UTF-8".to_string()))?;
        let cfg = parse_toml_str(text).map_err(lib_err)?;
        *out(out_config, "out_config")? = Box::into_raw(Box::new(SsConfig(cfg)));
        Ok(())
    })
}

/// The default configuration with the given true phase.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_default(phi_true: f64, out_config: *mut *mut SsConfig) -> SsStatus {
    guard(|| {
        let cfg = ProtocolConfig::with_phi(phi_true);
        cfg.validate().map_err(lib_err)?;
        *out(out_config, "out_config")? = Box::into_raw(Box::new(SsConfig(cfg)));
        Ok(())
    })
}

/// The configuration as TOML with every key explicit.
///
/// # Safety
/// `config` must be a live handle; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_to_toml(config: *const SsConfig, out_text: *mut *mut c_char) -> SsStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        *out(out_text, "out_text")? = into_c_string(to_toml(&cfg.0))?;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_config_free(config: *mut SsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the protocol once with the given master seed.
///
/// # Safety
/// `config` must be a live handle; `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_run(config: *const SsConfig, seed: u64, out_result: *mut *mut SsResult) -> SsStatus {
    guard(|| {
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let res = selfstab::run(&cfg.0, seed).map_err(lib_err)?;
        *out(out_result, "out_result")? = Box::into_raw(Box::new(SsResult(res)));
        Ok(())
    })
}

/// Number of blocks run.
///
/// # Safety
/// `result` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_result_num_blocks(result: *const SsResult, out_len: *mut usize) -> SsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        *out(out_len, "out_len")? = r.0.blocks.len();
        Ok(())
    })
}

/// Final posterior mean and standard deviation, and whether the tolerance
/// was reached (1) or the block budget ran out (0).
///
/// # Safety
/// `result` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_result_estimate(
    result: *const SsResult,
    out_phi_est: *mut f64,
    out_std: *mut f64,
    out_converged: *mut i32,
) -> SsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        *out(out_phi_est, "out_phi_est")? = r.0.final_estimate.phi_est;
        *out(out_std, "out_std")? = r.0.final_estimate.std();
        *out(out_converged, "out_converged")? = (r.0.termination == Termination::ToleranceReached) as i32;
        Ok(())
    })
}

/// Estimate and end-of-block purity of block `index`.
///
/// # Safety
/// `result` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_result_block(
    result: *const SsResult,
    index: usize,
    out_phi_est: *mut f64,
    out_std: *mut f64,
    out_purity: *mut f64,
) -> SsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let b = r.0.blocks.get(index).ok_or_else(|| {
            (
                SsStatus::InvalidArgument,
                format!("block {index} out of range ({} blocks)", r.0.blocks.len()),
            )
        })?;
        *out(out_phi_est, "out_phi_est")? = b.estimate.phi_est;
        *out(out_std, "out_std")? = b.estimate.std();
        *out(out_purity, "out_purity")? = b.final_purity();
        Ok(())
    })
}

/// Per-block summary as JSON.
///
/// # Safety
/// `result` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_result_to_json(result: *const SsResult, out_json: *mut *mut c_char) -> SsStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let blocks: Vec<_> = r
            .0
            .blocks
            .iter()
            .map(|b| {
                serde_json::json!({
                    "block": b.index,
                    "phi_est": b.estimate.phi_est,
                    "std": b.estimate.std(),
                    "end_purity": b.final_purity(),
                    "belief_purity": b.belief_purity,
                })
            })
            .collect();
        let doc = serde_json::json!({
            "termination": r.0.termination,
            "final_estimate": { "phi_est": r.0.final_estimate.phi_est, "std": r.0.final_estimate.std() },
            "blocks": blocks,
        });
        *out(out_json, "out_json")? = into_c_string(doc.to_string())?;
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_result_free(result: *mut SsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// A hypothesis bank on `n_points` nodes over `[phi_min, phi_max]`, every
/// node starting from the Bloch vector `bloch0[3]`, evolving under generator
/// axis `g[3]` and thermal noise `(gamma, nbar)` with step `dt`.
///
/// # Safety
/// `bloch0` and `g` must point to three doubles; `out_bank` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_new(
    phi_min: f64,
    phi_max: f64,
    n_points: usize,
    bloch0: *const f64,
    g: *const f64,
    gamma: f64,
    nbar: f64,
    dt: f64,
    out_bank: *mut *mut SsBank,
) -> SsStatus {
    guard(|| {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err((SsStatus::InvalidArgument, format!("dt must be positive, got {dt}")));
        }
        let grid = PhaseGrid::new(phi_min, phi_max, n_points).map_err(lib_err)?;
        let rho0 = QubitState::from_bloch(vec3(bloch0, "bloch0")?).map_err(lib_err)?;
        let g_axis = PauliAxis::new(vec3(g, "g")?).map_err(lib_err)?;
        let noise = NoiseModel::thermal(gamma, nbar).map_err(lib_err)?;
        let bank = HypothesisBank::new(grid, &rho0).map_err(lib_err)?;
        *out(out_bank, "out_bank")? = Box::into_raw(Box::new(SsBank { bank, g_axis, noise, dt }));
        Ok(())
    })
}

/// Folds one record increment `dy`, measured along `axis[3]` with strength
/// `kappa` and efficiency `eta`, into every hypothesis.
///
/// # Safety
/// `bank` must be a live handle; `axis` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_assimilate(bank: *mut SsBank, dy: f64, axis: *const f64, kappa: f64, eta: f64) -> SsStatus {
    guard(|| {
        let b = bank.as_mut().ok_or_else(|| null("bank"))?;
        let axis = PauliAxis::new(vec3(axis, "axis")?).map_err(lib_err)?;
        let meas = MeasurementOp::new(axis, kappa, eta).map_err(lib_err)?;
        b.bank.assimilate(dy, &meas, &b.noise, &b.g_axis, b.dt).map_err(lib_err)
    })
}

/// Posterior mean and variance.
///
/// # Safety
/// `bank` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_estimate(bank: *const SsBank, out_phi_est: *mut f64, out_variance: *mut f64) -> SsStatus {
    guard(|| {
        let b = bank.as_ref().ok_or_else(|| null("bank"))?;
        let e = b.bank.estimate().map_err(lib_err)?;
        *out(out_phi_est, "out_phi_est")? = e.phi_est;
        *out(out_variance, "out_variance")? = e.variance;
        Ok(())
    })
}

/// # Safety
/// `bank` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_bank_free(bank: *mut SsBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}
