//! C interface to the `lsqd` solver.
//!
//! Every function returns an [`LsqdStatus`] (or a plain value where nothing
//! can fail). After a non-zero status, [`lsqd_last_error_message`] describes
//! the failure. Solutions are opaque handles released with
//! [`lsqd_solution_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use lsqd::assembly::epsilon_from_bounds;
use lsqd::pipeline::{run_case, RunOptions, SolvedCase};
use lsqd::problems::{preset, preset_names};
use lsqd::solver::Preconditioner;
use lsqd::{Error, Point};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsqdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownPreset = 3,
    Geometry = 4,
    SingularSystem = 5,
    Divergence = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsqdPreconditioner {
    IncompleteCholesky = 0,
    Jacobi = 1,
    None = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LsqdOptions {
    /// Seed for random grids and the 1D point cloud.
    pub seed: u64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iters: u64,
    pub kappa_max: f64,
    pub preconditioner: LsqdPreconditioner,
}

/// Summary numbers of a solved case. `linf_error` is NaN when the preset has
/// no exact solution.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LsqdStats {
    pub degree: u32,
    pub splits: u32,
    pub num_points: u64,
    pub num_rows: u64,
    pub iterations: u64,
    pub converged: bool,
    pub epsilon: f64,
    pub residual_inf: f64,
    pub linf_error: f64,
    pub estimator_global: f64,
    pub wall_time: f64,
}

/// Opaque solved case.
pub struct LsqdSolution {
    inner: SolvedCase,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> LsqdStatus {
    match err {
        Error::UnknownPreset(_) => LsqdStatus::UnknownPreset,
        Error::SingularGradient | Error::NoSignChange | Error::DegenerateNormal | Error::PointOutside(_) => {
            LsqdStatus::Geometry
        }
        Error::EmptySystem | Error::ZeroRow { .. } | Error::NotSymmetric { .. } | Error::NonPositiveDiagonal(_) => {
            LsqdStatus::SingularSystem
        }
        Error::Divergence(_) => LsqdStatus::Divergence,
        _ => LsqdStatus::InvalidArgument,
    }
}

fn fail(status: LsqdStatus, msg: impl Into<String>) -> LsqdStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `LsqdStatus::Panic`.
fn guard(f: impl FnOnce() -> LsqdStatus) -> LsqdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LsqdStatus::Panic, msg)
        }
    }
}

/// Message of the last failure on the calling thread. Valid until the next
/// failing call on the same thread; never NULL.
#[no_mangle]
pub extern "C" fn lsqd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lsqd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults used by the command line tool.
#[no_mangle]
pub extern "C" fn lsqd_default_options() -> LsqdOptions {
    let run = RunOptions::default();
    LsqdOptions {
        seed: lsqd::grid::GridConfig::default().random_seed,
        rel_tol: run.solver.rel_tol,
        abs_tol: run.solver.abs_tol,
        max_iters: run.solver.max_iters as u64,
        kappa_max: run.kappa_max,
        preconditioner: LsqdPreconditioner::IncompleteCholesky,
    }
}

fn preset_table() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| {
        preset_names()
            .into_iter()
            .map(|n| CString::new(n).expect("preset names have no NUL"))
            .collect()
    })
}

#[no_mangle]
pub extern "C" fn lsqd_preset_count() -> usize {
    preset_table().len()
}

/// Name of preset `index`, or NULL when out of range. The string is static.
#[no_mangle]
pub extern "C" fn lsqd_preset_name(index: usize) -> *const c_char {
    preset_table().get(index).map_or(ptr::null(), |s| s.as_ptr())
}

/// `epsilon` for a matrix with eigenvalue bounds `[lambda_min, lambda_max]`
/// so that the stabilized condition number stays below `kappa_max`.
#[no_mangle]
pub extern "C" fn lsqd_stabilization_epsilon(lambda_max: f64, lambda_min: f64, kappa_max: f64) -> f64 {
    epsilon_from_bounds(lambda_max, lambda_min, kappa_max)
}

/// Solves preset `name` at polynomial degree `degree` after `splits`
/// refinements. `options` may be NULL for the defaults. On success `*out`
/// owns a new solution.
///
/// # Safety
/// `name` must be a valid NUL-terminated string, `options` NULL or valid,
/// and `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solve_preset(
    name: *const c_char,
    degree: u32,
    splits: u32,
    options: *const LsqdOptions,
    out: *mut *mut LsqdSolution,
) -> LsqdStatus {
    guard(|| {
        if name.is_null() || out.is_null() {
            return fail(LsqdStatus::NullPointer, "name and out must not be NULL");
        }
        *out = ptr::null_mut();
        let opts = if options.is_null() {
            lsqd_default_options()
        } else {
            *options
        };
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(LsqdStatus::InvalidArgument, "preset name is not UTF-8");
        };
        if degree == 0 {
            return fail(LsqdStatus::InvalidArgument, "degree must be at least 1");
        }
        let case = match preset(name) {
            Ok(c) => c.with_seed(opts.seed),
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        let mut run = RunOptions {
            kappa_max: opts.kappa_max,
            ..RunOptions::default()
        };
        run.solver.rel_tol = opts.rel_tol;
        run.solver.abs_tol = opts.abs_tol;
        run.solver.max_iters = usize::try_from(opts.max_iters).unwrap_or(usize::MAX);
        run.solver.preconditioner = match opts.preconditioner {
            LsqdPreconditioner::IncompleteCholesky => Preconditioner::IncompleteCholesky,
            LsqdPreconditioner::Jacobi => Preconditioner::Jacobi,
            LsqdPreconditioner::None => Preconditioner::None,
        };
        if let Err(e) = run.solver.validate() {
            return fail(status_of(&e), e.to_string());
        }
        if !(opts.kappa_max > 1.0) {
            return fail(LsqdStatus::InvalidArgument, "kappa_max must exceed 1");
        }
        match run_case(&case, degree as usize, splits, &run) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(LsqdSolution { inner }));
                LsqdStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a solution. NULL is ignored.
///
/// # Safety
/// `sol` must be NULL or a handle from [`lsqd_solve_preset`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solution_free(sol: *mut LsqdSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// # Safety
/// `sol` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solution_stats(sol: *const LsqdSolution, out: *mut LsqdStats) -> LsqdStatus {
    guard(|| {
        let (Some(sol), Some(out)) = (sol.as_ref(), out.as_mut()) else {
            return fail(LsqdStatus::NullPointer, "solution and out must not be NULL");
        };
        let r = &sol.inner.result;
        *out = LsqdStats {
            degree: r.degree as u32,
            splits: r.splits,
            num_points: r.n as u64,
            num_rows: r.m as u64,
            iterations: r.iterations as u64,
            converged: r.converged,
            epsilon: r.epsilon,
            residual_inf: r.residual_inf,
            linf_error: r.linf_error.unwrap_or(f64::NAN),
            estimator_global: r.estimator_global,
            wall_time: r.timings.total(),
        };
        LsqdStatus::Ok
    })
}

/// Number of inside points (unknown expansions). 0 for NULL.
///
/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solution_num_points(sol: *const LsqdSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.cloud.n_inside)
}

/// Copies point coordinates and the computed values at them. `xs`, `ys`
/// and `values` must each hold `len` doubles, where `len` is at least
/// [`lsqd_solution_num_points`]; any of them may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solution_points(
    sol: *const LsqdSolution,
    xs: *mut f64,
    ys: *mut f64,
    values: *mut f64,
    len: usize,
) -> LsqdStatus {
    guard(|| {
        let Some(sol) = sol.as_ref() else {
            return fail(LsqdStatus::NullPointer, "solution must not be NULL");
        };
        let s = &sol.inner;
        let n = s.cloud.n_inside;
        if len < n {
            return fail(LsqdStatus::OutOfRange, format!("buffers hold {len} values, {n} needed"));
        }
        for i in 0..n {
            let p = s.cloud.points[i];
            if !xs.is_null() {
                *xs.add(i) = p.x;
            }
            if !ys.is_null() {
                *ys.add(i) = p.y;
            }
            if !values.is_null() {
                *values.add(i) = lsqd::analysis::evaluate_solution(&s.alpha, &s.bases, p, i);
            }
        }
        LsqdStatus::Ok
    })
}

/// Evaluates the solution at `(x, y)` (`y` ignored in 1D) with the
/// expansion of the cell that contains it.
///
/// # Safety
/// `sol` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn lsqd_solution_evaluate(sol: *const LsqdSolution, x: f64, y: f64, out: *mut f64) -> LsqdStatus {
    guard(|| {
        let (Some(sol), Some(out)) = (sol.as_ref(), out.as_mut()) else {
            return fail(LsqdStatus::NullPointer, "solution and out must not be NULL");
        };
        let s = &sol.inner;
        let p = if s.cloud.dim == 1 {
            Point::on_line(x)
        } else {
            Point::new(x, y)
        };
        if !p.is_finite() || s.domain.value(p) > 0.0 {
            return fail(LsqdStatus::OutOfRange, format!("({x}, {y}) is outside the domain"));
        }
        *out = s.evaluate(p);
        LsqdStatus::Ok
    })
}
