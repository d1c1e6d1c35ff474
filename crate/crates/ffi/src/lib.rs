//! C ABI over `phasediv`.
//!
//! Objects cross the boundary as opaque handles created by `pd_*_new` /
//! `pd_*_generate` functions and released with the matching `pd_*_free`.
//! Every fallible call returns a [`PdStatus`]; the message of the last
//! failure on the calling thread is available from [`pd_last_error`].
//!
//! Complex fields are passed as interleaved `(re, im)` doubles in row-major
//! order, so an `n × n` field occupies `2 n²` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_complex::Complex64;
use phasediv::experiment::{random_start, ExperimentConfig};
use phasediv::optim::{misell_iterate, solve, Solution, StopReason};
use phasediv::problems::ProblemInstance;
use phasediv::{aligned_rms, ComplexField, Error, Method, Model, PhaseObjective, Shape, SolverConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Domain = 4,
    Config = 5,
    TooLarge = 6,
    Format = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdModel {
    Mlp = 0,
    Ls = 1,
    Lsi = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdMethod {
    Sd = 0,
    Ncg = 1,
    Lbfgs = 2,
    Tn = 3,
    Misell = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStopReason {
    MaxIters = 0,
    TolFun = 1,
    TolX = 2,
    GradZero = 3,
    LineSearchFail = 4,
}

/// Solver settings; obtain defaults from [`pd_solver_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PdSolverOptions {
    pub method: PdMethod,
    pub max_iters: usize,
    pub tol_fun: f64,
    pub tol_x: f64,
    pub c1: f64,
    pub c2: f64,
    pub ncg_c2: f64,
    pub lbfgs_memory: usize,
    /// 0 selects twice the pixel count.
    pub tn_cg_max: usize,
}

/// Synthetic problem: pupil, truth, diversity plan and data.
pub struct PdInstance(ProblemInstance);

/// Misfit functional bound to an instance's data.
pub struct PdObjective {
    inner: PhaseObjective,
    truth: ComplexField,
}

/// Outcome of a solver run.
pub struct PdSolution(Solution);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> PdStatus {
    match err {
        Error::ShapeMismatch { .. } => PdStatus::ShapeMismatch,
        Error::Domain(_) | Error::NotDescent(_) | Error::LineSearch { .. } => PdStatus::Domain,
        Error::Config(_) => PdStatus::Config,
        Error::TooLarge { .. } => PdStatus::TooLarge,
        Error::Format(_) => PdStatus::Format,
        Error::Io(_) => PdStatus::Io,
    }
}

struct Fail(PdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PdStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PdStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn field_arg(p: *const f64, len: usize, shape: Shape, what: &str) -> Result<ComplexField, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != 2 * shape.len() {
        return Err(Fail(
            PdStatus::ShapeMismatch,
            format!("{what} has {len} doubles, expected {}", 2 * shape.len()),
        ));
    }
    let raw = std::slice::from_raw_parts(p, len);
    let values = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok(ComplexField::from_vec(shape, values)?)
}

unsafe fn write_field(field: &ComplexField, out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < 2 * field.len() {
        return Err(Fail(
            PdStatus::BufferTooSmall,
            format!("buffer holds {len} doubles, need {}", 2 * field.len()),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, 2 * field.len());
    for (pair, v) in dst.chunks_exact_mut(2).zip(field.values()) {
        pair[0] = v.re;
        pair[1] = v.im;
    }
    Ok(())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// Copies `text` NUL-terminated into `buf` when it fits; returns the
/// buffer size needed including the terminator.
unsafe fn copy_string(text: &str, buf: *mut c_char, len: usize) -> usize {
    let need = text.len() + 1;
    if !buf.is_null() && len >= need {
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
    }
    need
}

fn model_of(m: PdModel) -> Model {
    match m {
        PdModel::Mlp => Model::Mlp,
        PdModel::Ls => Model::Ls,
        PdModel::Lsi => Model::Lsi,
    }
}

fn method_of(m: PdMethod) -> Method {
    match m {
        PdMethod::Sd => Method::Sd,
        PdMethod::Ncg => Method::Ncg,
        PdMethod::Lbfgs => Method::Lbfgs,
        PdMethod::Tn => Method::Tn,
        PdMethod::Misell => Method::Misell,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` and returns the
/// size needed (including the terminator); 1 when there was no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_string(&e.borrow(), buf, len))
}

#[no_mangle]
pub extern "C" fn pd_solver_options_default() -> PdSolverOptions {
    let d = SolverConfig::default();
    PdSolverOptions {
        method: PdMethod::Lbfgs,
        max_iters: d.max_iters,
        tol_fun: d.tol_fun,
        tol_x: d.tol_x,
        c1: d.c1,
        c2: d.c2,
        ncg_c2: d.ncg_c2,
        lbfgs_memory: d.lbfgs_memory,
        tn_cg_max: d.tn_cg_max,
    }
}

/// Generates an instance from experiment config text (TOML, may be empty
/// for the defaults).
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_generate(config_toml: *const c_char, out: *mut *mut PdInstance) -> PdStatus {
    guard(|| {
        let text = str_arg(config_toml, "config")?;
        let config = ExperimentConfig::from_toml(text, &[])?;
        let instance = ProblemInstance::generate(&config.problem_spec())?;
        write_out(out, Box::into_raw(Box::new(PdInstance(instance))))
    })
}

/// Loads an instance directory written by the CLI or [`pd_instance_save`].
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_load(dir: *const c_char, out: *mut *mut PdInstance) -> PdStatus {
    guard(|| {
        let dir = str_arg(dir, "directory")?;
        let instance = ProblemInstance::load(Path::new(dir))?;
        write_out(out, Box::into_raw(Box::new(PdInstance(instance))))
    })
}

/// # Safety
/// `instance` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_save(instance: *const PdInstance, dir: *const c_char) -> PdStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        let dir = str_arg(dir, "directory")?;
        Ok(instance.0.save(Path::new(dir), None)?)
    })
}

/// # Safety
/// `instance` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_free(instance: *mut PdInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Grid side `n`; 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_grid_size(instance: *const PdInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.0.grid.n())
}

/// Number of measurement planes; 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_plane_count(instance: *const PdInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.0.plan.len())
}

/// Ground truth as `2 n²` interleaved doubles.
///
/// # Safety
/// `instance` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_truth(instance: *const PdInstance, out: *mut f64, len: usize) -> PdStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        write_field(&instance.0.truth, out, len)
    })
}

/// Measured intensity of plane `plane` as `n²` doubles.
///
/// # Safety
/// `instance` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_intensity(
    instance: *const PdInstance,
    plane: usize,
    out: *mut f64,
    len: usize,
) -> PdStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        if plane >= instance.0.data.len() {
            return Err(Fail(PdStatus::InvalidArgument, format!("plane {plane} out of range")));
        }
        let values = instance.0.data.intensity(plane).values();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len < values.len() {
            return Err(Fail(PdStatus::BufferTooSmall, format!("buffer holds {len}, need {}", values.len())));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Unit-amplitude random-phase start on the pupil.
///
/// # Safety
/// `instance` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_instance_random_start(
    instance: *const PdInstance,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> PdStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        write_field(&random_start(&instance.0.grid, seed), out, len)
    })
}

/// # Safety
/// `instance` must be a live handle; `out` must be writable. The objective
/// copies what it needs and does not borrow the instance.
#[no_mangle]
pub unsafe extern "C" fn pd_objective_new(
    instance: *const PdInstance,
    model: PdModel,
    epsilon: f64,
    out: *mut *mut PdObjective,
) -> PdStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        let inner = instance.0.objective(model_of(model), epsilon)?;
        let obj = PdObjective {
            inner,
            truth: instance.0.truth.clone(),
        };
        write_out(out, Box::into_raw(Box::new(obj)))
    })
}

/// # Safety
/// `objective` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pd_objective_free(objective: *mut PdObjective) {
    if !objective.is_null() {
        drop(Box::from_raw(objective));
    }
}

/// Objective value and Wirtinger gradient `∂f/∂z̄` at `z`. `gradient` may be
/// null when only the value is wanted.
///
/// # Safety
/// `z` holds `len` doubles; `gradient`, when not null, holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_objective_evaluate(
    objective: *const PdObjective,
    z: *const f64,
    len: usize,
    value: *mut f64,
    gradient: *mut f64,
) -> PdStatus {
    guard(|| {
        let obj = objective.as_ref().ok_or_else(|| null("objective"))?;
        let z = field_arg(z, len, obj.inner.grid().shape(), "z")?;
        if gradient.is_null() {
            write_out(value, obj.inner.value(&z))
        } else {
            let (f, g) = obj.inner.value_and_gradient(&z);
            write_field(&g, gradient, len)?;
            write_out(value, f)
        }
    })
}

/// Hessian-vector product at `z` applied to `h`.
///
/// # Safety
/// `z`, `h` and `out` each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_objective_hvp(
    objective: *const PdObjective,
    z: *const f64,
    h: *const f64,
    len: usize,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let obj = objective.as_ref().ok_or_else(|| null("objective"))?;
        let shape = obj.inner.grid().shape();
        let z = field_arg(z, len, shape, "z")?;
        let h = field_arg(h, len, shape, "h")?;
        write_field(&obj.inner.hvp(&z, &h), out, len)
    })
}

/// Forward/adjoint transforms performed by this objective so far.
///
/// # Safety
/// `objective` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_objective_fft_calls(objective: *const PdObjective) -> u64 {
    objective.as_ref().map_or(0, |o| o.inner.transform_count())
}

/// Runs a solver from `z0` (`len` doubles). The trace records the aligned
/// RMS against the instance truth.
///
/// # Safety
/// `objective` and `options` must be valid; `z0` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_solve(
    objective: *const PdObjective,
    options: *const PdSolverOptions,
    z0: *const f64,
    len: usize,
    out: *mut *mut PdSolution,
) -> PdStatus {
    guard(|| {
        let obj = objective.as_ref().ok_or_else(|| null("objective"))?;
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        let z0 = field_arg(z0, len, obj.inner.grid().shape(), "z0")?;
        let config = SolverConfig {
            method: method_of(o.method),
            max_iters: o.max_iters,
            tol_fun: o.tol_fun,
            tol_x: o.tol_x,
            c1: o.c1,
            c2: o.c2,
            ncg_c2: o.ncg_c2,
            lbfgs_memory: o.lbfgs_memory,
            tn_cg_max: o.tn_cg_max,
            ..SolverConfig::default()
        };
        let private = obj.inner.with_model(obj.inner.model());
        let solution = match config.method {
            Method::Misell => misell_iterate(&private, &z0, config.max_iters, Some(&obj.truth))?,
            _ => solve(&private, &config, &z0, Some(&obj.truth))?,
        };
        write_out(out, Box::into_raw(Box::new(PdSolution(solution))))
    })
}

/// # Safety
/// `solution` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_free(solution: *mut PdSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_field(solution: *const PdSolution, out: *mut f64, len: usize) -> PdStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        write_field(&s.0.z, out, len)
    })
}

/// Iterations performed; 0 for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_iterations(solution: *const PdSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.0.trace.iterations())
}

/// FFT calls of the run; 0 for a null handle.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_fft_calls(solution: *const PdSolution) -> u64 {
    solution.as_ref().map_or(0, |s| s.0.trace.fft_calls())
}

/// Final objective value, final aligned RMS and stop reason.
///
/// # Safety
/// `solution` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_summary(
    solution: *const PdSolution,
    value: *mut f64,
    rms: *mut f64,
    stop: *mut PdStopReason,
) -> PdStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let last = s.0.trace.last().ok_or_else(|| Fail(PdStatus::Domain, "empty trace".into()))?;
        write_out(value, last.f)?;
        write_out(rms, last.rms.unwrap_or(f64::NAN))?;
        let reason = match s.0.trace.stop {
            StopReason::MaxIters => PdStopReason::MaxIters,
            StopReason::TolFun => PdStopReason::TolFun,
            StopReason::TolX => PdStopReason::TolX,
            StopReason::GradZero => PdStopReason::GradZero,
            StopReason::LineSearchFail => PdStopReason::LineSearchFail,
        };
        write_out(stop, reason)
    })
}

/// Copies the trace CSV into `buf` and returns the size needed including
/// the terminator (0 for a null handle). Call with a null `buf` to query.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pd_solution_trace_csv(solution: *const PdSolution, buf: *mut c_char, len: usize) -> usize {
    match solution.as_ref() {
        Some(s) => copy_string(&s.0.trace.to_csv(), buf, len),
        None => 0,
    }
}

/// Relative error of `estimate` against `truth` after the best global
/// phase alignment; both hold `2 n²` doubles for an `n × n` grid.
///
/// # Safety
/// `truth` and `estimate` hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_aligned_rms(
    truth: *const f64,
    estimate: *const f64,
    n: usize,
    len: usize,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let shape = Shape::square(n);
        let t = field_arg(truth, len, shape, "truth")?;
        let e = field_arg(estimate, len, shape, "estimate")?;
        write_out(out, aligned_rms(&t, &e)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const SMALL: &str = "problem.n = 8\nproblem.r_outer = 0.45\nproblem.zernike_index = 4\nplan.defocus = [-1.0, 1.0]\n";

    fn last_error() -> String {
        let need = unsafe { pd_last_error(ptr::null_mut(), 0) };
        let mut buf = vec![0 as c_char; need];
        unsafe { pd_last_error(buf.as_mut_ptr(), need) };
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    fn instance() -> *mut PdInstance {
        let text = CString::new(SMALL).unwrap();
        let mut inst = ptr::null_mut();
        assert_eq!(unsafe { pd_instance_generate(text.as_ptr(), &mut inst) }, PdStatus::Ok);
        inst
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(pd_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn generate_evaluate_and_solve() {
        let inst = instance();
        let n = unsafe { pd_instance_grid_size(inst) };
        assert_eq!(n, 8);
        assert_eq!(unsafe { pd_instance_plane_count(inst) }, 3);
        let len = 2 * n * n;
        let mut truth = vec![0.0; len];
        assert_eq!(unsafe { pd_instance_truth(inst, truth.as_mut_ptr(), len) }, PdStatus::Ok);

        let mut obj = ptr::null_mut();
        assert_eq!(unsafe { pd_objective_new(inst, PdModel::Ls, 1e-14, &mut obj) }, PdStatus::Ok);
        let (mut f, mut g) = (0.0, vec![1.0; len]);
        assert_eq!(
            unsafe { pd_objective_evaluate(obj, truth.as_ptr(), len, &mut f, g.as_mut_ptr()) },
            PdStatus::Ok
        );
        assert!(g.iter().all(|v| v.abs() < 1e-10));
        assert!(unsafe { pd_objective_fft_calls(obj) } > 0);

        let mut z0 = vec![0.0; len];
        assert_eq!(unsafe { pd_instance_random_start(inst, 3, z0.as_mut_ptr(), len) }, PdStatus::Ok);
        let opts = pd_solver_options_default();
        let mut sol = ptr::null_mut();
        assert_eq!(unsafe { pd_solve(obj, &opts, z0.as_ptr(), len, &mut sol) }, PdStatus::Ok);
        assert!(unsafe { pd_solution_iterations(sol) } > 0);
        let (mut value, mut rms, mut stop) = (0.0, 0.0, PdStopReason::MaxIters);
        assert_eq!(unsafe { pd_solution_summary(sol, &mut value, &mut rms, &mut stop) }, PdStatus::Ok);
        assert!(rms.is_finite());

        let mut z = vec![0.0; len];
        assert_eq!(unsafe { pd_solution_field(sol, z.as_mut_ptr(), len) }, PdStatus::Ok);
        let mut check = 0.0;
        assert_eq!(
            unsafe { pd_aligned_rms(truth.as_ptr(), z.as_ptr(), n, len, &mut check) },
            PdStatus::Ok
        );
        assert!((check - rms).abs() < 1e-12);

        let need = unsafe { pd_solution_trace_csv(sol, ptr::null_mut(), 0) };
        let mut buf = vec![0 as c_char; need];
        assert_eq!(unsafe { pd_solution_trace_csv(sol, buf.as_mut_ptr(), need) }, need);
        let csv = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert!(csv.starts_with("iter,f,grad_norm,alpha,rms,fft_calls,neg_curv"));

        unsafe {
            pd_solution_free(sol);
            pd_objective_free(obj);
            pd_instance_free(inst);
        }
    }

    #[test]
    fn hvp_matches_gradient_difference() {
        let inst = instance();
        let len = 2 * 64;
        let mut obj = ptr::null_mut();
        assert_eq!(unsafe { pd_objective_new(inst, PdModel::Mlp, 0.1, &mut obj) }, PdStatus::Ok);
        let z: Vec<f64> = (0..len).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let h: Vec<f64> = (0..len).map(|i| ((i * 3 % 5) as f64 - 2.0) / 3.0).collect();
        let mut hv = vec![0.0; len];
        assert_eq!(
            unsafe { pd_objective_hvp(obj, z.as_ptr(), h.as_ptr(), len, hv.as_mut_ptr()) },
            PdStatus::Ok
        );
        let t = 1e-6;
        let shifted = |s: f64| {
            let zs: Vec<f64> = z.iter().zip(&h).map(|(a, b)| a + s * b).collect();
            let (mut f, mut g) = (0.0, vec![0.0; len]);
            unsafe { pd_objective_evaluate(obj, zs.as_ptr(), len, &mut f, g.as_mut_ptr()) };
            g
        };
        let (gp, gm) = (shifted(t), shifted(-t));
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * t)).collect();
        let err = fd.iter().zip(&hv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = hv.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / scale < 1e-5, "{}", err / scale);
        unsafe {
            pd_objective_free(obj);
            pd_instance_free(inst);
        }
    }

    #[test]
    fn errors_carry_status_and_message() {
        let mut inst = ptr::null_mut();
        let bad = CString::new("problem.type = \"circle\"").unwrap();
        assert_eq!(unsafe { pd_instance_generate(bad.as_ptr(), &mut inst) }, PdStatus::Config);
        assert!(last_error().contains("circle"));
        assert!(inst.is_null());

        assert_eq!(unsafe { pd_instance_generate(ptr::null(), &mut inst) }, PdStatus::NullPointer);
        assert!(last_error().contains("null"));

        let inst = instance();
        let mut small = vec![0.0; 4];
        assert_eq!(unsafe { pd_instance_truth(inst, small.as_mut_ptr(), 4) }, PdStatus::BufferTooSmall);
        let mut obj = ptr::null_mut();
        assert_eq!(unsafe { pd_objective_new(inst, PdModel::Ls, 1e-14, &mut obj) }, PdStatus::Ok);
        let mut f = 0.0;
        assert_eq!(
            unsafe { pd_objective_evaluate(obj, small.as_ptr(), 4, &mut f, ptr::null_mut()) },
            PdStatus::ShapeMismatch
        );
        let mut opts = pd_solver_options_default();
        opts.c2 = 1e-6;
        let z = vec![0.0; 128];
        let mut sol = ptr::null_mut();
        assert_eq!(unsafe { pd_solve(obj, &opts, z.as_ptr(), 128, &mut sol) }, PdStatus::Config);
        assert!(unsafe { pd_instance_intensity(inst, 9, small.as_mut_ptr(), 4) } == PdStatus::InvalidArgument);
        assert_eq!(unsafe { pd_instance_grid_size(ptr::null()) }, 0);
        unsafe {
            pd_objective_free(obj);
            pd_instance_free(inst);
            pd_instance_free(ptr::null_mut());
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("pd_ffi_{}", std::process::id()));
        let inst = instance();
        let path = CString::new(dir.to_str().unwrap()).unwrap();
        assert_eq!(unsafe { pd_instance_save(inst, path.as_ptr()) }, PdStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(unsafe { pd_instance_load(path.as_ptr(), &mut back) }, PdStatus::Ok);
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        unsafe {
            pd_instance_intensity(inst, 1, a.as_mut_ptr(), 64);
            pd_instance_intensity(back, 1, b.as_mut_ptr(), 64);
        }
        assert_eq!(a, b);
        let missing = CString::new(dir.join("nope").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(unsafe { pd_instance_load(missing.as_ptr(), &mut none) }, PdStatus::Io);
        unsafe {
            pd_instance_free(inst);
            pd_instance_free(back);
        }
        let _ = std::fs::remove_dir_all(dir);
    }
}
