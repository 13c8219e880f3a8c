//! C interface to the interfere library.
//!
//! Objects cross the boundary as opaque handles created by `*_from_json` or
//! builder functions and released with the matching `*_free`. Every fallible
//! function returns an [`InterfereStatus`]; on failure the message is
//! available from [`interfere_last_error_message`] on the same thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`interfere_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use interfere::math::{self, InterferenceMatrix, RegionMap};
use interfere::planner::{self, CgroupPlan, PlannerConfig, TaskSet};
use interfere::platform::{PlatformModel, Transaction};
use interfere::sim::{self, Scenario, SimResult};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfereStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidInput = 4,
    NotFound = 5,
    Internal = 6,
}

/// Platform resource graph.
pub struct InterfereModel(PlatformModel);

/// Symmetric task-pair slowdown matrix.
pub struct InterfereMatrix(InterferenceMatrix);

/// cgroup v2 isolation plan.
pub struct InterferePlan(CgroupPlan);

/// Outcome of one simulation run.
pub struct InterfereSimResult(SimResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Failure = (InterfereStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> InterfereStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => InterfereStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            InterfereStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    (InterfereStatus::NullPointer, format!("`{what}` is null"))
}

fn parse_err(e: impl std::fmt::Display) -> Failure {
    (InterfereStatus::ParseError, e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    (InterfereStatus::InvalidInput, e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (InterfereStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| (InterfereStatus::Internal, "string holds a NUL byte".into()))?;
    put(out, c.into_raw(), "out")
}

unsafe fn put_box<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    put(out, Box::into_raw(Box::new(value)), "out")
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failure on this thread, or null. Release with
/// `interfere_string_free`.
#[no_mangle]
pub extern "C" fn interfere_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn interfere_model_from_json(
    json: *const c_char,
    out: *mut *mut InterfereModel,
) -> InterfereStatus {
    guard(|| {
        let m = PlatformModel::from_json(text(json, "json")?).map_err(parse_err)?;
        put_box(out, InterfereModel(m))
    })
}

/// The bundled Raspberry Pi 4 model.
#[no_mangle]
pub unsafe extern "C" fn interfere_model_rpi4(out: *mut *mut InterfereModel) -> InterfereStatus {
    guard(|| put_box(out, InterfereModel(PlatformModel::rpi4())))
}

#[no_mangle]
pub unsafe extern "C" fn interfere_model_free(model: *mut InterfereModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of diagnostics; zero means the model is well formed.
#[no_mangle]
pub unsafe extern "C" fn interfere_model_validate(
    model: *const InterfereModel,
    out_count: *mut usize,
) -> InterfereStatus {
    guard(|| {
        let m = handle(model, "model")?;
        put(out_count, m.0.validate().len(), "out_count")
    })
}

/// Pairwise verdicts as a JSON array. `initiators` is a comma-separated id
/// list or null for all; `target` is null for every target. With `cross`,
/// only pairs whose initiators differ are reported.
#[no_mangle]
pub unsafe extern "C" fn interfere_model_channels_json(
    model: *const InterfereModel,
    initiators: *const c_char,
    target: *const c_char,
    cross: bool,
    out_json: *mut *mut c_char,
) -> InterfereStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let inits: Option<Vec<String>> = opt_text(initiators, "initiators")?
            .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
        let target = opt_text(target, "target")?;
        let mut txs: Vec<Transaction> = m
            .all_transactions(inits.as_deref(), target)
            .map_err(invalid)?;
        txs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut verdicts = Vec::new();
        for (i, a) in txs.iter().enumerate() {
            for b in &txs[i + 1..] {
                if cross && a.initiator() == b.initiator() {
                    continue;
                }
                verdicts.push(m.interference_channels(&[a.clone(), b.clone()]).map_err(invalid)?);
            }
        }
        put_string(out_json, serde_json::to_string(&verdicts).map_err(invalid)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_matrix_from_json(
    json: *const c_char,
    out: *mut *mut InterfereMatrix,
) -> InterfereStatus {
    guard(|| {
        let m = InterferenceMatrix::from_json(text(json, "json")?).map_err(parse_err)?;
        put_box(out, InterfereMatrix(m))
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_matrix_free(matrix: *mut InterfereMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

#[no_mangle]
pub unsafe extern "C" fn interfere_matrix_size(
    matrix: *const InterfereMatrix,
    out_size: *mut usize,
) -> InterfereStatus {
    guard(|| put(out_size, handle(matrix, "matrix")?.0.len(), "out_size"))
}

/// Entry for the task pair `(a, b)`.
#[no_mangle]
pub unsafe extern "C" fn interfere_matrix_get(
    matrix: *const InterfereMatrix,
    a: *const c_char,
    b: *const c_char,
    out_value: *mut f64,
) -> InterfereStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.0;
        let (a, b) = (text(a, "a")?, text(b, "b")?);
        let v = m
            .get(a, b)
            .ok_or_else(|| (InterfereStatus::NotFound, format!("pair ({a}, {b}) is not in the matrix")))?;
        put(out_value, v, "out_value")
    })
}

/// Runs the planner over a task-set JSON document and `matrix`.
#[no_mangle]
pub unsafe extern "C" fn interfere_plan_build(
    tasks_json: *const c_char,
    matrix: *const InterfereMatrix,
    theta: f64,
    consolidate: bool,
    out: *mut *mut InterferePlan,
) -> InterfereStatus {
    guard(|| {
        let set = TaskSet::from_json(text(tasks_json, "tasks_json")?).map_err(parse_err)?;
        let m = &handle(matrix, "matrix")?.0;
        let p = planner::plan(&set.tasks, m, &PlannerConfig { theta, consolidate }).map_err(invalid)?;
        put_box(out, InterferePlan(p))
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_plan_from_json(
    json: *const c_char,
    out: *mut *mut InterferePlan,
) -> InterfereStatus {
    guard(|| {
        let p = CgroupPlan::from_json(text(json, "json")?).map_err(parse_err)?;
        put_box(out, InterferePlan(p))
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_plan_free(plan: *mut InterferePlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

#[no_mangle]
pub unsafe extern "C" fn interfere_plan_to_json(
    plan: *const InterferePlan,
    out_json: *mut *mut c_char,
) -> InterfereStatus {
    guard(|| put_string(out_json, handle(plan, "plan")?.0.to_json()))
}

#[no_mangle]
pub unsafe extern "C" fn interfere_plan_verify(
    plan: *const InterferePlan,
    matrix: *const InterfereMatrix,
    theta: f64,
    out_verified: *mut bool,
    out_violations: *mut usize,
) -> InterfereStatus {
    guard(|| {
        let v = planner::verify(&handle(plan, "plan")?.0, &handle(matrix, "matrix")?.0, theta)
            .map_err(invalid)?;
        put(out_verified, v.verified, "out_verified")?;
        if !out_violations.is_null() {
            out_violations.write(v.violations.len());
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_plan_emit_script(
    plan: *const InterferePlan,
    mount_point: *const c_char,
    out_script: *mut *mut c_char,
) -> InterfereStatus {
    guard(|| {
        let s = planner::emit_script(&handle(plan, "plan")?.0, text(mount_point, "mount_point")?)
            .map_err(invalid)?;
        put_string(out_script, s)
    })
}

/// Runs a scenario given as JSON. Relative file references resolve against
/// the working directory.
#[no_mangle]
pub unsafe extern "C" fn interfere_simulate_json(
    scenario_json: *const c_char,
    out: *mut *mut InterfereSimResult,
) -> InterfereStatus {
    guard(|| {
        let s = Scenario::from_json(text(scenario_json, "scenario_json")?, None).map_err(parse_err)?;
        let r = sim::run(&s).map_err(invalid)?;
        put_box(out, InterfereSimResult(r))
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_sim_result_free(result: *mut InterfereSimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub unsafe extern "C" fn interfere_sim_miss_ratio(
    result: *const InterfereSimResult,
    task: *const c_char,
    out_misses: *mut u64,
    out_jobs: *mut u64,
) -> InterfereStatus {
    guard(|| {
        let task = text(task, "task")?;
        let mr = sim::miss_ratio(&handle(result, "result")?.0, task)
            .map_err(|e| (InterfereStatus::NotFound, e.to_string()))?;
        put(out_misses, mr.misses, "out_misses")?;
        put(out_jobs, mr.jobs, "out_jobs")
    })
}

/// Per-job CSV with columns `task,job,release_ms,completion_ms,exec_ms,deadline_met`.
#[no_mangle]
pub unsafe extern "C" fn interfere_sim_export_csv(
    result: *const InterfereSimResult,
    out_csv: *mut *mut c_char,
) -> InterfereStatus {
    guard(|| put_string(out_csv, sim::export_results(&handle(result, "result")?.0)))
}

#[no_mangle]
pub unsafe extern "C" fn interfere_compute_delta(
    t_isolation: f64,
    t_interference: f64,
    out_delta: *mut f64,
) -> InterfereStatus {
    guard(|| {
        let d = math::compute_delta(t_isolation, t_interference).map_err(invalid)?;
        put(out_delta, d.value(), "out_delta")
    })
}

#[no_mangle]
pub unsafe extern "C" fn interfere_rmlse(
    predicted: *const f64,
    observed: *const f64,
    len: usize,
    out_value: *mut f64,
) -> InterfereStatus {
    guard(|| {
        let p = slice(predicted, len, "predicted")?;
        let o = slice(observed, len, "observed")?;
        put(out_value, math::rmlse(p, o).map_err(invalid)?, "out_value")
    })
}

/// Total loss. `attention` holds per-region attention sums and `l2_counts`
/// raw per-region L2 access counts; both are normalized here.
#[no_mangle]
pub unsafe extern "C" fn interfere_total_loss(
    predicted: *const f64,
    observed: *const f64,
    len: usize,
    attention: *const f64,
    l2_counts: *const f64,
    regions: usize,
    lambda: f64,
    out_value: *mut f64,
) -> InterfereStatus {
    guard(|| {
        let p = slice(predicted, len, "predicted")?;
        let o = slice(observed, len, "observed")?;
        let att = RegionMap::new(slice(attention, regions, "attention")?.to_vec()).map_err(invalid)?;
        let l2 = RegionMap::new(slice(l2_counts, regions, "l2_counts")?.to_vec()).map_err(invalid)?;
        let att = math::normalize_attention_map(&att).map_err(invalid)?;
        let l2 = math::normalize_l2_map(&l2).map_err(invalid)?;
        let v = math::total_loss(p, o, &att, &l2, lambda).map_err(invalid)?;
        put(out_value, v, "out_value")
    })
}
