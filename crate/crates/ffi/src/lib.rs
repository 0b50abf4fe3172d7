//! C ABI over the mgvol engine.
//!
//! Objects are opaque handles created by `mgvol_*_new`/constructor calls and
//! released with the matching `_free`. Every fallible call returns a status
//! code; on failure the message is kept per thread and read back with
//! `mgvol_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mgvol::anamorphosis::{Anamorphosis, TailBounds};
use mgvol::blocksupport;
use mgvol::conditional::{self, VolumeSpec};
use mgvol::covariance::{CovarianceModel, Point};
use mgvol::error::{Error, ErrorClass};
use mgvol::kriging::{krige_field, Grid, KrigedField, SampleSet};

pub const MGVOL_OK: i32 = 0;
/// A required pointer argument was null.
pub const MGVOL_ERR_NULL: i32 = 1;
pub const MGVOL_ERR_INPUT: i32 = 2;
pub const MGVOL_ERR_NUMERICAL: i32 = 3;
/// An internal panic was caught at the boundary.
pub const MGVOL_ERR_PANIC: i32 = 4;

/// Opaque transfer function φ.
pub struct MgvolAnamorphosis(Anamorphosis);

/// Opaque covariance model.
pub struct MgvolModel(CovarianceModel);

/// Opaque kriged grid.
pub struct MgvolField(KrigedField);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Engine(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MGVOL_OK,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MGVOL_ERR_NULL
        }
        Ok(Err(Fail::Engine(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Input => MGVOL_ERR_INPUT,
                ErrorClass::Numerical => MGVOL_ERR_NUMERICAL,
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            MGVOL_ERR_PANIC
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn array<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

fn boxed<T>(value: T, dst: &mut *mut T) {
    *dst = Box::into_raw(Box::new(value));
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mgvol_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgvol_anamorphosis_lognormal(
    mu: f64,
    sigma: f64,
    out: *mut *mut MgvolAnamorphosis,
) -> i32 {
    guard(|| {
        let dst = self::out(out, "out")?;
        boxed(MgvolAnamorphosis(Anamorphosis::lognormal(mu, sigma)?), dst);
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgvol_anamorphosis_exponential(
    lambda: f64,
    out: *mut *mut MgvolAnamorphosis,
) -> i32 {
    guard(|| {
        let dst = self::out(out, "out")?;
        boxed(MgvolAnamorphosis(Anamorphosis::exponential(lambda)?), dst);
        Ok(())
    })
}

/// Empirical φ from `n` values with equal weights and default tails.
///
/// # Safety
/// `values` must point to `n` doubles; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgvol_anamorphosis_empirical(
    values: *const f64,
    n: usize,
    out: *mut *mut MgvolAnamorphosis,
) -> i32 {
    guard(|| {
        let v = array(values, n, "values")?;
        let dst = self::out(out, "out")?;
        let a = Anamorphosis::fit_empirical(v, None, TailBounds::default())?;
        boxed(MgvolAnamorphosis(a), dst);
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a handle from a constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mgvol_anamorphosis_free(a: *mut MgvolAnamorphosis) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// z = φ(y).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgvol_backward(a: *const MgvolAnamorphosis, y: f64, z: *mut f64) -> i32 {
    guard(|| {
        *out(z, "z")? = get(a, "anamorphosis")?.0.backward(y);
        Ok(())
    })
}

/// y = φ⁻¹(z).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgvol_forward(a: *const MgvolAnamorphosis, z: f64, y: *mut f64) -> i32 {
    guard(|| {
        let ana = get(a, "anamorphosis")?;
        *out(y, "y")? = ana.0.forward(z)?;
        Ok(())
    })
}

/// Parses a model such as "0.1 nugget + 0.9 sph(100)".
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mgvol_model_parse(text: *const c_char, out: *mut *mut MgvolModel) -> i32 {
    guard(|| {
        if text.is_null() {
            return Err(Fail::Null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Error::InvalidInput("model text is not UTF-8".into()))?;
        let dst = self::out(out, "out")?;
        boxed(MgvolModel(s.parse()?), dst);
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mgvol_model_free(m: *mut MgvolModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Covariance between two points.
///
/// # Safety
/// `a` and `b` must point to three doubles each.
#[no_mangle]
pub unsafe extern "C" fn mgvol_model_cov(
    m: *const MgvolModel,
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let m = get(m, "model")?;
        let (a, b) = (array(a, 3, "a")?, array(b, 3, "b")?);
        let pa = Point::new(a[0], a[1], a[2]);
        let pb = Point::new(b[0], b[1], b[2]);
        *self::out(out, "out")? = m.0.cov(&pa, &pb);
        Ok(())
    })
}

/// Simple kriging of a regular grid from `n` samples. `xyz` holds 3·n
/// coordinates (x, y, z per sample); `values` are raw values, transformed
/// with `a`. Grid `origin`, `spacing` and `dims` hold three entries each.
///
/// # Safety
/// Array arguments must have the stated lengths; `out` a handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mgvol_field_krige(
    model: *const MgvolModel,
    a: *const MgvolAnamorphosis,
    xyz: *const f64,
    values: *const f64,
    n: usize,
    origin: *const f64,
    spacing: *const f64,
    dims: *const usize,
    out: *mut *mut MgvolField,
) -> i32 {
    guard(|| {
        let model = get(model, "model")?;
        let ana = get(a, "anamorphosis")?;
        let xyz = array(xyz, 3 * n, "xyz")?;
        let values = array(values, n, "values")?;
        let o = array(origin, 3, "origin")?;
        let s = array(spacing, 3, "spacing")?;
        let d = array(dims, 3, "dims")?;
        let dst = self::out(out, "out")?;
        let positions = xyz
            .chunks(3)
            .map(|c| Point::new(c[0], c[1], c[2]))
            .collect();
        let samples = if n == 0 {
            SampleSet::empty()
        } else {
            SampleSet::from_raw(positions, values.to_vec(), &ana.0)?
        };
        let grid = Grid::new([o[0], o[1], o[2]], [s[0], s[1], s[2]], [d[0], d[1], d[2]])?;
        boxed(MgvolField(krige_field(&samples, &model.0, &grid)?), dst);
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mgvol_field_free(f: *mut MgvolField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mgvol_field_len(f: *const MgvolField) -> usize {
    f.as_ref().map_or(0, |f| f.0.len())
}

/// Copies y*_SK and σ²_SK into arrays of `mgvol_field_len` entries. Either
/// output may be null.
///
/// # Safety
/// Non-null outputs must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mgvol_field_kriging(
    f: *const MgvolField,
    y_star: *mut f64,
    sigma2: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let f = get(f, "field")?;
        if len != f.0.len() {
            return Err(Error::InvalidInput(format!("len {len}, field has {}", f.0.len())).into());
        }
        if !y_star.is_null() {
            slice::from_raw_parts_mut(y_star, len).copy_from_slice(f.0.y_star());
        }
        if !sigma2.is_null() {
            slice::from_raw_parts_mut(sigma2, len).copy_from_slice(f.0.sigma2());
        }
        Ok(())
    })
}

/// Conditional mean and variance of the raw value at node `i`.
///
/// # Safety
/// Handles must be live; outputs valid.
#[no_mangle]
pub unsafe extern "C" fn mgvol_node_moments(
    f: *const MgvolField,
    a: *const MgvolAnamorphosis,
    i: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> i32 {
    guard(|| {
        let f = get(f, "field")?;
        let ana = get(a, "anamorphosis")?;
        if i >= f.0.len() {
            return Err(Error::InvalidInput(format!("node {i} out of range")).into());
        }
        let law = conditional::node_law(&f.0, i, &ana.0)?;
        *out(mean, "mean")? = law.mean()?;
        *out(variance, "variance")? = law.variance()?;
        Ok(())
    })
}

unsafe fn volume(f: &MgvolField, nodes: *const usize, n: usize) -> Result<VolumeSpec, Fail> {
    let nodes = array(nodes, n, "nodes")?;
    Ok(VolumeSpec::new(nodes.to_vec(), f.0.len())?)
}

/// Conditional variance of the average over `n` nodes.
///
/// # Safety
/// `nodes` must point to `n` indices; handles live.
#[no_mangle]
pub unsafe extern "C" fn mgvol_volume_variance(
    f: *const MgvolField,
    a: *const MgvolAnamorphosis,
    nodes: *const usize,
    n: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let f = get(f, "field")?;
        let ana = get(a, "anamorphosis")?;
        let vol = volume(f, nodes, n)?;
        *self::out(out, "out")? = conditional::volume_variance(&f.0, &vol, &ana.0)?;
        Ok(())
    })
}

/// Exact density and distribution function of the average over `n ≤ 4`
/// nodes at `z`. Either output may be null.
///
/// # Safety
/// `nodes` must point to `n` indices; handles live.
#[no_mangle]
pub unsafe extern "C" fn mgvol_block_exact(
    f: *const MgvolField,
    a: *const MgvolAnamorphosis,
    nodes: *const usize,
    n: usize,
    z: f64,
    pdf: *mut f64,
    cdf: *mut f64,
) -> i32 {
    guard(|| {
        let f = get(f, "field")?;
        let ana = get(a, "anamorphosis")?;
        let bl = blocksupport::make_block_law(&f.0, &volume(f, nodes, n)?)?;
        if let Some(p) = pdf.as_mut() {
            *p = blocksupport::block_pdf_exact(&bl, &ana.0, z)?;
        }
        if let Some(c) = cdf.as_mut() {
            *c = blocksupport::block_cdf_exact(&bl, &ana.0, z)?;
        }
        Ok(())
    })
}

/// Monte-Carlo density of the average at `z` with its standard error.
///
/// # Safety
/// `nodes` must point to `n` indices; handles live.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mgvol_block_pdf_mc(
    f: *const MgvolField,
    a: *const MgvolAnamorphosis,
    nodes: *const usize,
    n: usize,
    z: f64,
    draws: usize,
    seed: u64,
    density: *mut f64,
    se: *mut f64,
) -> i32 {
    guard(|| {
        let f = get(f, "field")?;
        let ana = get(a, "anamorphosis")?;
        let bl = blocksupport::make_block_law(&f.0, &volume(f, nodes, n)?)?;
        let d = blocksupport::block_pdf_mc(&bl, &ana.0, z, draws, seed)?;
        *out(density, "density")? = d.density;
        if let Some(s) = se.as_mut() {
            *s = d.se;
        }
        Ok(())
    })
}
