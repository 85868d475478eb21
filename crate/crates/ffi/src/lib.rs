//! C ABI over `ellipsum`.
//!
//! Matrices cross the boundary as row-major `double` arrays. Every fallible
//! function returns an [`EllipsumStatus`]; on failure the message is kept
//! per thread and can be read with [`ellipsum_last_error_message`]. Handles
//! are created by `*_new` / `*_from_json` and released by the matching
//! `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ellipsum::bounds::{min_trace_bound, refine_q0, tangent_bound, verify_regularizer, RefineOptions, RegularizerBase};
use ellipsum::ellipsoid::{Direction, Ellipsoid};
use ellipsum::error::Error;
use ellipsum::minkowski::{boundary_point, make_direction_grid, sum_support, DirectionGrid, EllipsoidSum};
use ellipsum::reachset::{reach_min_trace, settling_horizon, LtvSystem, ReachSpec, SystemRecord};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipsumStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    NotSymmetric = 3,
    NotPositiveDefinite = 4,
    NonFinite = 5,
    RankDeficient = 6,
    InvalidDirection = 7,
    InvalidArgument = 8,
    Parse = 9,
    Infeasible = 10,
    NotTimeInvariant = 11,
    NotSettled = 12,
    Degenerate = 13,
    Panic = 14,
}

impl From<&Error> for EllipsumStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } | Error::NotSquare { .. } => Self::DimensionMismatch,
            Error::NonSymmetric { .. } => Self::NotSymmetric,
            Error::NotPositiveDefinite => Self::NotPositiveDefinite,
            Error::NonFinite => Self::NonFinite,
            Error::RankDeficient => Self::RankDeficient,
            Error::NotUnitNorm { .. } | Error::ZeroDirection => Self::InvalidDirection,
            Error::Parse(_) => Self::Parse,
            Error::InfeasibleRegularizer { .. } | Error::KernelViolation { .. } | Error::InfeasibleBase { .. } => {
                Self::Infeasible
            }
            Error::NotTimeInvariant => Self::NotTimeInvariant,
            Error::NotSettled { .. } => Self::NotSettled,
            Error::AllDegenerate => Self::Degenerate,
            _ => Self::InvalidArgument,
        }
    }
}

/// Feasibility certificate of a regularized bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EllipsumFeasibility {
    pub pd_ok: bool,
    pub support_ok: bool,
    pub min_margin: f64,
    pub trace_change: f64,
    pub grid_count: usize,
}

/// Opaque Minkowski sum of ellipsoids.
pub struct EllipsumSum {
    inner: EllipsoidSum,
}

/// Opaque discrete-time linear system with ellipsoidal inputs.
pub struct EllipsumSystem {
    inner: LtvSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| {
        let mut bytes = msg.into_bytes();
        bytes.retain(|b| *b != 0);
        bytes.push(0);
        *e.borrow_mut() = bytes;
    });
}

fn guard(f: impl FnOnce() -> Result<(), EllipsumError>) -> EllipsumStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EllipsumStatus::Ok,
        Ok(Err(EllipsumError(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EllipsumStatus::Panic
        }
    }
}

struct EllipsumError(EllipsumStatus, String);

impl From<Error> for EllipsumError {
    fn from(e: Error) -> Self {
        EllipsumError((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> EllipsumError {
    EllipsumError(EllipsumStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], EllipsumError> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write_out(p: *mut f64, values: impl IntoIterator<Item = f64>, what: &str) -> Result<(), EllipsumError> {
    if p.is_null() {
        return Err(null(what));
    }
    for (i, v) in values.into_iter().enumerate() {
        *p.add(i) = v;
    }
    Ok(())
}

unsafe fn sum_ref<'a>(sum: *const EllipsumSum) -> Result<&'a EllipsoidSum, EllipsumError> {
    sum.as_ref().map(|s| &s.inner).ok_or_else(|| null("sum"))
}

unsafe fn direction(sum: &EllipsoidSum, ell: *const f64) -> Result<Direction, EllipsumError> {
    Ok(Direction::from_slice(read(ell, sum.dim(), "ell")?)?)
}

fn row_major(values: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, values)
}

fn matrix_out(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

fn grid_for(sum: &EllipsoidSum, grid_count: usize, seed: u64) -> Result<DirectionGrid, EllipsumError> {
    let count = if grid_count == 0 {
        DirectionGrid::default_count(sum.dim())
    } else {
        grid_count
    };
    Ok(make_direction_grid(sum.dim(), count, seed)?)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let msg_len = bytes.len().saturating_sub(1);
        if !buf.is_null() && len > 0 {
            let n = msg_len.min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg_len
    })
}

/// Builds a sum of `k` ellipsoids in dimension `n`. `shapes` holds `k`
/// row-major `n×n` matrices back to back; `centers` holds `k·n` values or
/// is null for centered ellipsoids.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_new(
    n: usize,
    k: usize,
    shapes: *const f64,
    centers: *const f64,
    out: *mut *mut EllipsumSum,
) -> EllipsumStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 || k == 0 {
            return Err(Error::EmptySum.into());
        }
        let shapes = read(shapes, k * n * n, "shapes")?;
        let centers = if centers.is_null() { None } else { Some(read(centers, k * n, "centers")?) };
        let terms = (0..k)
            .map(|i| {
                let q = row_major(&shapes[i * n * n..(i + 1) * n * n], n);
                let c = centers.map_or_else(|| DVector::zeros(n), |c| DVector::from_column_slice(&c[i * n..(i + 1) * n]));
                Ellipsoid::new(q, c)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sum = EllipsoidSum::new(terms)?;
        *out = Box::into_raw(Box::new(EllipsumSum { inner: sum }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_free(sum: *mut EllipsumSum) {
    if !sum.is_null() {
        drop(Box::from_raw(sum));
    }
}

/// State dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_dim(sum: *const EllipsumSum) -> usize {
    sum.as_ref().map_or(0, |s| s.inner.dim())
}

/// Number of terms, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_len(sum: *const EllipsumSum) -> usize {
    sum.as_ref().map_or(0, |s| s.inner.len())
}

/// Support function of the sum in direction `ell` (normalized internally).
#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_support(
    sum: *const EllipsumSum,
    ell: *const f64,
    out: *mut f64,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let l = direction(sum, ell)?;
        let v = sum_support(sum, &l)?;
        write_out(out, [v], "out")
    })
}

/// Boundary point of the sum with outward normal `ell`; writes `n` values.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_sum_boundary_point(
    sum: *const EllipsumSum,
    ell: *const f64,
    out_point: *mut f64,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let l = direction(sum, ell)?;
        let s = boundary_point(sum, &l)?;
        write_out(out_point, s.point.iter().copied(), "out_point")
    })
}

/// Minimum-trace outer bound. Writes the `n×n` shape and, when
/// `out_center` is non-null, the `n` center values.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_min_trace(
    sum: *const EllipsumSum,
    out_shape: *mut f64,
    out_center: *mut f64,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let e = min_trace_bound(sum)?;
        write_out(out_shape, matrix_out(e.shape()), "out_shape")?;
        if !out_center.is_null() {
            write_out(out_center, e.center().iter().copied(), "out_center")?;
        }
        Ok(())
    })
}

/// Tangent outer bound at `ell`. `grid_count = 0` uses the default grid.
/// `out_point` (optional) receives the tangency point.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_tangent(
    sum: *const EllipsumSum,
    ell: *const f64,
    grid_count: usize,
    out_shape: *mut f64,
    out_point: *mut f64,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let l = direction(sum, ell)?;
        let grid = grid_for(sum, grid_count, 0)?;
        let t = tangent_bound(sum, &l, None, &grid)?;
        write_out(out_shape, matrix_out(t.ellipsoid.shape()), "out_shape")?;
        if !out_point.is_null() {
            write_out(out_point, t.tangency_point.iter().copied(), "out_point")?;
        }
        Ok(())
    })
}

/// Certifies `base_shape + q0` as an outer bound of the sum on a grid.
/// An infeasible regularizer is not an error: inspect `out_report`.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_verify_regularizer(
    sum: *const EllipsumSum,
    q0: *const f64,
    base_shape: *const f64,
    grid_count: usize,
    seed: u64,
    out_report: *mut EllipsumFeasibility,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let n = sum.dim();
        let q0 = row_major(read(q0, n * n, "q0")?, n);
        let base = RegularizerBase::Shape(row_major(read(base_shape, n * n, "base_shape")?, n));
        let grid = grid_for(sum, grid_count, seed)?;
        let r = verify_regularizer(sum, &q0, &base, &grid)?;
        let out = out_report.as_mut().ok_or_else(|| null("out_report"))?;
        *out = EllipsumFeasibility {
            pd_ok: r.pd_ok,
            support_ok: r.support_ok,
            min_margin: r.min_margin,
            trace_change: r.trace_change,
            grid_count: grid.count(),
        };
        Ok(())
    })
}

/// Searches for a trace-reducing `Q₀` around `base_shape` (null: the
/// minimum-trace bound). Writes `Q₀` (`n×n`) and its certificate.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_refine_q0(
    sum: *const EllipsumSum,
    base_shape: *const f64,
    grid_count: usize,
    seed: u64,
    out_q0: *mut f64,
    out_report: *mut EllipsumFeasibility,
) -> EllipsumStatus {
    guard(|| {
        let sum = sum_ref(sum)?;
        let n = sum.dim();
        let base = if base_shape.is_null() {
            min_trace_bound(sum)?
        } else {
            Ellipsoid::new(row_major(read(base_shape, n * n, "base_shape")?, n), sum.center())?
        };
        let grid = grid_for(sum, grid_count, seed)?;
        let r = refine_q0(sum, &base, &grid, &RefineOptions::default())?;
        write_out(out_q0, matrix_out(&r.matrix), "out_q0")?;
        if let Some(out) = out_report.as_mut() {
            *out = EllipsumFeasibility {
                pd_ok: r.certificate.pd_ok,
                support_ok: r.certificate.support_ok,
                min_margin: r.certificate.min_margin,
                trace_change: r.certificate.trace_change,
                grid_count: grid.count(),
            };
        }
        Ok(())
    })
}

/// Parses a system from NUL-terminated JSON
/// (`{"A": ..., "inputs": [{"B": ..., "R": ...}], "horizon": K}`).
#[no_mangle]
pub unsafe extern "C" fn ellipsum_system_from_json(json: *const c_char, out: *mut *mut EllipsumSystem) -> EllipsumStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Error::Parse(e.to_string()))?;
        let record: SystemRecord = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let sys = LtvSystem::from_record(&record)?;
        *out = Box::into_raw(Box::new(EllipsumSystem { inner: sys }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ellipsum_system_free(sys: *mut EllipsumSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_system_dim(sys: *const EllipsumSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.inner.state_dim())
}

/// Minimum-trace bound of the states reachable at step `k`; writes `n×n`.
#[no_mangle]
pub unsafe extern "C" fn ellipsum_reach_min_trace(
    sys: *const EllipsumSystem,
    k: usize,
    out_shape: *mut f64,
) -> EllipsumStatus {
    guard(|| {
        let sys = &sys.as_ref().ok_or_else(|| null("system"))?.inner;
        let spec = ReachSpec::new(sys, k)?;
        let e = reach_min_trace(&spec)?;
        write_out(out_shape, matrix_out(e.shape()), "out_shape")
    })
}

/// Settling step of a time-invariant system (see the library docs for the
/// exact rule).
#[no_mangle]
pub unsafe extern "C" fn ellipsum_settling_horizon(
    sys: *const EllipsumSystem,
    tol: f64,
    k_max: usize,
    out: *mut usize,
) -> EllipsumStatus {
    guard(|| {
        let sys = &sys.as_ref().ok_or_else(|| null("system"))?.inner;
        let k = settling_horizon(sys, tol, k_max)?;
        *out.as_mut().ok_or_else(|| null("out"))? = k;
        Ok(())
    })
}
