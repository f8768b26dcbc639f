//! C ABI over `fgivental`. Objects are opaque handles released with their
//! `_free` function; strings returned through `char **` are released with
//! `fgv_string_free`. Every call returns an `FgvStatus` and, on failure,
//! leaves a message readable through `fgv_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fgivental::cli::{self, CliError};
use fgivental::fflat::{self, FlatFJet};
use fgivental::ftft::AlgebraSpec;
use fgivental::givental::{self, GiventalElement};
use fgivental::oracle0::kappa_psi_integral;
use fgivental::rspin;
use fgivental::trees::{self, TreeError};

/// Status codes; the nonzero values below 5 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FgvStatus {
    Ok = 0,
    Internal = 1,
    Unstable = 2,
    Malformed = 3,
    FlatF = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// An F-TFT: algebra, structure constants and α.
pub struct FgvSpec(AlgebraSpec);

/// An element (R, T) of the F-Givental group.
pub struct FgvElement(GiventalElement);

/// A flat F-manifold 1-jet with its potential.
pub struct FgvJet(FlatFJet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: CliError) -> FgvStatus {
    let status = match e.exit_code() {
        2 => FgvStatus::Unstable,
        3 => FgvStatus::Malformed,
        4 => FgvStatus::FlatF,
        _ => FgvStatus::Internal,
    };
    set_error(e.to_string());
    status
}

/// Run `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), FgvStatus>) -> FgvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgvStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside fgivental".into());
            FgvStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, FgvStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(FgvStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        FgvStatus::InvalidUtf8
    })
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, FgvStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        FgvStatus::NullPointer
    })
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), FgvStatus> {
    if out.is_null() {
        set_error("null output pointer".into());
        return Err(FgvStatus::NullPointer);
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), FgvStatus> {
    if out.is_null() {
        set_error("null output pointer".into());
        return Err(FgvStatus::NullPointer);
    }
    *out = CString::new(s).map_err(|_| FgvStatus::Internal)?.into_raw();
    Ok(())
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize) -> Result<&'a [T], FgvStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        set_error("null array argument".into());
        return Err(FgvStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn fgv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn fgv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of stable trees of type (g, 1+n).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_tree_count(g: u32, n: u32, out: *mut usize) -> FgvStatus {
    guard(|| {
        let count = trees::enumerate_nodes(g, n).map_err(|e: TreeError| fail(e.into()))?.len();
        if out.is_null() {
            set_error("null output pointer".into());
            return Err(FgvStatus::NullPointer);
        }
        *out = count;
        Ok(())
    })
}

/// Parse an F-TFT spec from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_spec_from_toml(toml: *const c_char, out: *mut *mut FgvSpec) -> FgvStatus {
    guard(|| {
        let text = read_str(toml)?;
        let spec = AlgebraSpec::from_toml(text).map_err(|e| fail(e.into()))?;
        put(out, FgvSpec(spec))
    })
}

/// # Safety
/// `spec` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn fgv_spec_free(spec: *mut FgvSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Parse a group element from TOML with keys `dim`, `r`, `t`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_element_from_toml(toml: *const c_char, out: *mut *mut FgvElement) -> FgvStatus {
    guard(|| {
        let text = read_str(toml)?;
        let e = cli::parse_element(text).map_err(fail)?;
        put(out, FgvElement(e))
    })
}

/// The identity element of dimension `dim`, known to order `order`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_element_identity(dim: usize, order: usize, out: *mut *mut FgvElement) -> FgvStatus {
    guard(|| {
        if dim == 0 {
            set_error("dimension must be positive".into());
            return Err(FgvStatus::Malformed);
        }
        put(out, FgvElement(GiventalElement::identity(dim, order)))
    })
}

/// The product a∘b (b acts first).
///
/// # Safety
/// `a`, `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_element_compose(
    a: *const FgvElement,
    b: *const FgvElement,
    out: *mut *mut FgvElement,
) -> FgvStatus {
    guard(|| {
        let (a, b) = (borrow(a)?, borrow(b)?);
        let c = givental::compose(&a.0, &b.0).map_err(|e| fail(e.into()))?;
        put(out, FgvElement(c))
    })
}

/// 1 when the element is (Id, 0), else 0.
///
/// # Safety
/// `e` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_element_is_identity(e: *const FgvElement, out: *mut i32) -> FgvStatus {
    guard(|| {
        let e = borrow(e)?;
        if out.is_null() {
            set_error("null output pointer".into());
            return Err(FgvStatus::NullPointer);
        }
        *out = i32::from(e.0.is_identity());
        Ok(())
    })
}

/// # Safety
/// `e` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn fgv_element_free(e: *mut FgvElement) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Act on the F-TFT at type (g, 1+n) and return the classes as JSON lines.
///
/// # Safety
/// `e`, `spec` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_act(
    e: *const FgvElement,
    spec: *const FgvSpec,
    g: u32,
    n: u32,
    out: *mut *mut c_char,
) -> FgvStatus {
    guard(|| {
        let (e, spec) = (borrow(e)?, borrow(spec)?);
        let s = givental::act_on_tft(&e.0, &spec.0, g, n).map_err(|x| fail(x.into()))?;
        put_string(out, cli::slice_jsonl(&s))
    })
}

/// ∫ over M̄_{0,n} of Π ψ_i^{psi[i]} Π κ_{kappa[j]}, as "p/q", with n = `n_psi`.
///
/// # Safety
/// `psi` and `kappa` must point to arrays of the given lengths.
#[no_mangle]
pub unsafe extern "C" fn fgv_genus0_integral(
    psi: *const u32,
    n_psi: usize,
    kappa: *const u32,
    n_kappa: usize,
    out: *mut *mut c_char,
) -> FgvStatus {
    guard(|| {
        let psi = slice_arg(psi, n_psi)?;
        let kappa = slice_arg(kappa, n_kappa)?;
        if n_psi < 3 {
            return Err(fail(TreeError::Unstable { g: 0, n: n_psi.saturating_sub(1) as u32 }.into()));
        }
        put_string(out, kappa_psi_integral(psi, kappa).to_string())
    })
}

/// s_1, …, s_M for the given r, one "p/q" per line.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_rspin_s(r: u32, m: usize, out: *mut *mut c_char) -> FgvStatus {
    guard(|| {
        if r < 2 {
            return Err(fail(rspin::RspinError::BadR { r: r as i64, min: 2 }.into()));
        }
        let lines: Vec<String> = rspin::s_coeffs(r as i64, m).iter().map(|x| x.to_string()).collect();
        put_string(out, lines.join("\n"))
    })
}

/// Parse a flat F-manifold jet from TOML (keys `dim`, `basepoint`,
/// `potential`, optional `alpha`, `unit`, `[euler]`).
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_jet_from_toml(toml: *const c_char, out: *mut *mut FgvJet) -> FgvStatus {
    guard(|| {
        let text = read_str(toml)?;
        let j = FlatFJet::from_toml(text).map_err(|e| fail(e.into()))?;
        put(out, FgvJet(j))
    })
}

/// The r-spin jet at t = 1.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fgv_jet_rspin(r: u32, out: *mut *mut FgvJet) -> FgvStatus {
    guard(|| {
        let j = FlatFJet::rspin(r).map_err(|e| fail(e.into()))?;
        put(out, FgvJet(j))
    })
}

/// # Safety
/// `j` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn fgv_jet_free(j: *mut FgvJet) {
    if !j.is_null() {
        drop(Box::from_raw(j));
    }
}

/// Reconstruct (R, T) to order `order` and the F-TFT at the base point.
/// Fails with `FlatF` when WDVV or the unit equation fails, or the point is
/// not semisimple or is resonant.
///
/// # Safety
/// `j` must be a live handle; `elem` and `spec` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fgv_reconstruct(
    j: *const FgvJet,
    order: usize,
    elem: *mut *mut FgvElement,
    spec: *mut *mut FgvSpec,
) -> FgvStatus {
    guard(|| {
        let j = borrow(j)?;
        j.0.check().map_err(|e| fail(e.into()))?;
        let (s, rec) = fflat::reconstruct_at_base(&j.0, order).map_err(|e| fail(e.into()))?;
        if elem.is_null() || spec.is_null() {
            set_error("null output pointer".into());
            return Err(FgvStatus::NullPointer);
        }
        put(elem, FgvElement(rec.element))?;
        put(spec, FgvSpec(s))
    })
}
