//! C ABI for the microshift simulator.
//!
//! Conventions:
//! - Every fallible call returns an `int` status: `MSR_OK` (0) on success,
//!   `MSR_ERR_PHYSICS` (1), `MSR_ERR_CONFIG` (2), `MSR_ERR_IO` (3), or
//!   `MSR_ERR_NULL_ARG` (4). On failure, `msr_last_error()` returns a
//!   thread-local message describing what went wrong.
//! - Handles (`MsrConfig`, `MsrBundle`) are opaque; free them with their
//!   `_free` function exactly once. Freeing NULL is a no-op.
//! - Returned strings are borrowed: config strings live until the config is
//!   freed, bundle strings until the bundle is freed, and the error string
//!   until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use microshift::config::ExperimentConfig;
use microshift::error::Error;
use microshift::experiments::{run_experiment, Bundle};
use microshift::potential;

/// Success.
pub const MSR_OK: c_int = 0;
/// The model rejected the request (unstable step, non-trapping light,
/// degenerate fit, too few surviving atoms, ...).
pub const MSR_ERR_PHYSICS: c_int = 1;
/// The config is malformed or inconsistent.
pub const MSR_ERR_CONFIG: c_int = 2;
/// Reading or writing files failed.
pub const MSR_ERR_IO: c_int = 3;
/// A required pointer was NULL or a string was not valid UTF-8.
pub const MSR_ERR_NULL_ARG: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn store_error(message: String) {
    let message = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn fail(error: &Error) -> c_int {
    store_error(error.to_string());
    match error {
        Error::Io(_) => MSR_ERR_IO,
        _ => match error.exit_code() {
            2 => MSR_ERR_CONFIG,
            _ => MSR_ERR_PHYSICS,
        },
    }
}

fn fail_null(what: &str) -> c_int {
    store_error(format!("{what} must not be NULL"));
    MSR_ERR_NULL_ARG
}

/// # Safety
/// `text` must be a valid NUL-terminated string or NULL.
unsafe fn utf8_arg<'a>(text: *const c_char, what: &str) -> Result<&'a str, c_int> {
    if text.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(text).to_str().map_err(|_| {
        store_error(format!("{what} is not valid UTF-8"));
        MSR_ERR_NULL_ARG
    })
}

/// Parsed experiment config (opaque).
pub struct MsrConfig {
    inner: ExperimentConfig,
    label: CString,
    experiment: CString,
}

/// Result artifacts of one experiment run (opaque).
pub struct MsrBundle {
    names: Vec<CString>,
    contents: Vec<CString>,
    inner: Bundle,
    label: CString,
}

fn wrap_config(inner: ExperimentConfig) -> *mut MsrConfig {
    let label = CString::new(inner.label.clone()).expect("label is filesystem-safe");
    let experiment = CString::new(inner.experiment.name()).expect("static name");
    Box::into_raw(Box::new(MsrConfig {
        inner,
        label,
        experiment,
    }))
}

fn wrap_bundle(inner: Bundle, label: &str) -> *mut MsrBundle {
    let mut names = Vec::new();
    let mut contents = Vec::new();
    for name in inner.names() {
        names.push(CString::new(name).expect("artifact names are plain ASCII"));
        contents.push(
            CString::new(inner.file(name).unwrap_or_default().replace('\0', " "))
                .unwrap_or_else(|_| CString::new("").unwrap()),
        );
    }
    Box::into_raw(Box::new(MsrBundle {
        names,
        contents,
        inner,
        label: CString::new(label).expect("label is filesystem-safe"),
    }))
}

/// Library version as a static string, e.g. "0.1.0".
#[no_mangle]
pub extern "C" fn msr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, or NULL if the last
/// call succeeded. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |message| message.as_ptr())
    })
}

/// Parse and validate a TOML experiment config from text.
///
/// # Safety
/// `toml_text` must be NUL-terminated; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn msr_config_parse(
    toml_text: *const c_char,
    out: *mut *mut MsrConfig,
) -> c_int {
    if out.is_null() {
        return fail_null("out");
    }
    let text = match utf8_arg(toml_text, "toml_text") {
        Ok(text) => text,
        Err(code) => return code,
    };
    match ExperimentConfig::from_toml(text) {
        Ok(config) => {
            *out = wrap_config(config);
            MSR_OK
        }
        Err(e) => fail(&e),
    }
}

/// Load, parse, and validate a TOML experiment config from a file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn msr_config_load(path: *const c_char, out: *mut *mut MsrConfig) -> c_int {
    if out.is_null() {
        return fail_null("out");
    }
    let path = match utf8_arg(path, "path") {
        Ok(path) => path,
        Err(code) => return code,
    };
    match ExperimentConfig::load(Path::new(path)) {
        Ok(config) => {
            *out = wrap_config(config);
            MSR_OK
        }
        Err(e) => fail(&e),
    }
}

/// Free a config handle. NULL is ignored.
///
/// # Safety
/// `config` must come from `msr_config_parse`/`msr_config_load` and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msr_config_free(config: *mut MsrConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// The config's label (borrowed; valid while the config lives).
///
/// # Safety
/// `config` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn msr_config_label(config: *const MsrConfig) -> *const c_char {
    config.as_ref().map_or(ptr::null(), |c| c.label.as_ptr())
}

/// The config's experiment kind, e.g. "transport_scan" (borrowed).
///
/// # Safety
/// `config` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn msr_config_experiment(config: *const MsrConfig) -> *const c_char {
    config
        .as_ref()
        .map_or(ptr::null(), |c| c.experiment.as_ptr())
}

/// Depth of the central trap described by the config, as a positive
/// temperature-equivalent in microkelvin.
///
/// # Safety
/// `config` must be a live handle; `depth_uk` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn msr_trap_depth_uk(
    config: *const MsrConfig,
    depth_uk: *mut f64,
) -> c_int {
    let Some(config) = config.as_ref() else {
        return fail_null("config");
    };
    if depth_uk.is_null() {
        return fail_null("depth_uk");
    }
    let result = config.inner.setup(None).and_then(|setup| {
        let (rows, cols) = (config.inner.optics.rows, config.inner.optics.cols);
        setup.moving_array.depth_at(rows / 2, cols / 2)
    });
    match result {
        Ok(depth) => {
            *depth_uk = depth.abs() / microshift::constants::BOLTZMANN * 1e6;
            MSR_OK
        }
        Err(e) => fail(&e),
    }
}

/// Radial and axial oscillation frequencies of the central trap (kHz, not
/// angular). Either output pointer may be NULL to skip it.
///
/// # Safety
/// `config` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn msr_trap_frequencies_khz(
    config: *const MsrConfig,
    radial_khz: *mut f64,
    axial_khz: *mut f64,
) -> c_int {
    let Some(config) = config.as_ref() else {
        return fail_null("config");
    };
    let optics = &config.inner.optics;
    let result = config.inner.setup(None).and_then(|setup| {
        let depth = setup.moving_array.depth_at(optics.rows / 2, optics.cols / 2)?;
        potential::trap_frequencies(
            depth,
            optics.trap_waist_um * 1e-6,
            optics.wavelength_nm * 1e-9,
            &setup.species,
        )
    });
    match result {
        Ok((radial, axial)) => {
            let two_pi = 2.0 * std::f64::consts::PI;
            if !radial_khz.is_null() {
                *radial_khz = radial / two_pi / 1e3;
            }
            if !axial_khz.is_null() {
                *axial_khz = axial / two_pi / 1e3;
            }
            MSR_OK
        }
        Err(e) => fail(&e),
    }
}

/// Run the experiment a config describes. `seed_override` may be NULL to use
/// the config's own seed. The bundle already carries its provenance stamp.
///
/// # Safety
/// `config` must be a live handle; `out` must point to writable storage;
/// `seed_override` must be NULL or point to a readable u64.
#[no_mangle]
pub unsafe extern "C" fn msr_run(
    config: *const MsrConfig,
    seed_override: *const u64,
    out: *mut *mut MsrBundle,
) -> c_int {
    let Some(config) = config.as_ref() else {
        return fail_null("config");
    };
    if out.is_null() {
        return fail_null("out");
    }
    let seed = if seed_override.is_null() {
        None
    } else {
        Some(*seed_override)
    };
    match run_experiment(&config.inner, seed) {
        Ok(mut bundle) => {
            bundle.stamp(seed.unwrap_or(config.inner.dynamics.seed));
            *out = wrap_bundle(bundle, &config.inner.label);
            MSR_OK
        }
        Err(e) => fail(&e),
    }
}

/// Free a bundle handle. NULL is ignored.
///
/// # Safety
/// `bundle` must come from `msr_run` and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msr_bundle_free(bundle: *mut MsrBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Number of artifacts in the bundle.
///
/// # Safety
/// `bundle` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn msr_bundle_len(bundle: *const MsrBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.names.len())
}

/// Name of the artifact at `index` (borrowed), or NULL when out of range.
///
/// # Safety
/// `bundle` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn msr_bundle_name(bundle: *const MsrBundle, index: usize) -> *const c_char {
    bundle
        .as_ref()
        .and_then(|b| b.names.get(index))
        .map_or(ptr::null(), |name| name.as_ptr())
}

/// Content of the named artifact (borrowed), or NULL when absent.
///
/// # Safety
/// `bundle` must be a live handle or NULL; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msr_bundle_content(
    bundle: *const MsrBundle,
    name: *const c_char,
) -> *const c_char {
    let Some(bundle) = bundle.as_ref() else {
        return ptr::null();
    };
    let Ok(name) = utf8_arg(name, "name") else {
        return ptr::null();
    };
    for (candidate, content) in bundle.names.iter().zip(&bundle.contents) {
        if candidate.to_bytes() == name.as_bytes() {
            return content.as_ptr();
        }
    }
    ptr::null()
}

/// Write the bundle into `out_dir/<label>` atomically (staging directory
/// plus rename; an existing bundle is never overwritten).
///
/// # Safety
/// `bundle` must be a live handle; `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msr_bundle_write(
    bundle: *const MsrBundle,
    out_dir: *const c_char,
) -> c_int {
    let Some(bundle) = bundle.as_ref() else {
        return fail_null("bundle");
    };
    let out_dir = match utf8_arg(out_dir, "out_dir") {
        Ok(dir) => dir,
        Err(code) => return code,
    };
    let label = bundle.label.to_str().expect("label is ASCII");
    match bundle.inner.write_atomic(Path::new(out_dir), label) {
        Ok(_) => MSR_OK,
        Err(e) => fail(&e),
    }
}
