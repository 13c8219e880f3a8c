use std::ffi::{c_char, CStr, CString};
use std::ptr;

use interfere_ffi::*;

const MATRIX: &str = r#"{"tasks":["victim","noise"],"entries":[[1.0,2.5],[2.5,1.0]]}"#;
const TASKS: &str = r#"{"tasks":[{"id":"victim","core_affinity":[1]},{"id":"noise","core_affinity":[2]}]}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a returned string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    interfere_string_free(p);
    s
}

unsafe fn last_error() -> Option<String> {
    let p = interfere_last_error_message();
    (!p.is_null()).then(|| take(p))
}

unsafe fn matrix() -> *mut InterfereMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(interfere_matrix_from_json(c(MATRIX).as_ptr(), &mut m), InterfereStatus::Ok);
    m
}

#[test]
fn model_round_trip() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(interfere_model_rpi4(&mut model), InterfereStatus::Ok);
        let mut count = 99;
        assert_eq!(interfere_model_validate(model, &mut count), InterfereStatus::Ok);
        assert_eq!(count, 0);

        let mut json = ptr::null_mut();
        let inits = c("core0,core1");
        let target = c("lpddr");
        assert_eq!(
            interfere_model_channels_json(model, inits.as_ptr(), target.as_ptr(), true, &mut json),
            InterfereStatus::Ok
        );
        let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        // two paths per core, only cross-core pairs
        assert_eq!(v.as_array().unwrap().len(), 4);
        for verdict in v.as_array().unwrap() {
            assert_eq!(verdict["interference_free"], false);
        }

        let mut unknown = ptr::null_mut();
        let bad = c("core9");
        assert_eq!(
            interfere_model_channels_json(model, bad.as_ptr(), ptr::null(), false, &mut unknown),
            InterfereStatus::InvalidInput
        );
        assert!(last_error().unwrap().contains("core9"));
        interfere_model_free(model);
    }
}

#[test]
fn broken_model_reports_diagnostics() {
    let json = r#"{"resources":[{"id":"a","name":"a","kind":"Initiator"}],"links":[{"from":"a","to":"ghost"}]}"#;
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(interfere_model_from_json(c(json).as_ptr(), &mut model), InterfereStatus::Ok);
        let mut count = 0;
        assert_eq!(interfere_model_validate(model, &mut count), InterfereStatus::Ok);
        assert!(count >= 2);
        interfere_model_free(model);
    }
}

#[test]
fn matrix_lookup() {
    unsafe {
        let m = matrix();
        let mut n = 0;
        assert_eq!(interfere_matrix_size(m, &mut n), InterfereStatus::Ok);
        assert_eq!(n, 2);
        let mut v = 0.0;
        assert_eq!(interfere_matrix_get(m, c("noise").as_ptr(), c("victim").as_ptr(), &mut v), InterfereStatus::Ok);
        assert_eq!(v, 2.5);
        assert_eq!(
            interfere_matrix_get(m, c("noise").as_ptr(), c("other").as_ptr(), &mut v),
            InterfereStatus::NotFound
        );
        interfere_matrix_free(m);
    }
}

#[test]
fn plan_build_verify_emit() {
    unsafe {
        let m = matrix();
        let mut plan = ptr::null_mut();
        assert_eq!(interfere_plan_build(c(TASKS).as_ptr(), m, 1.5, false, &mut plan), InterfereStatus::Ok);
        let (mut ok, mut violations) = (false, 7);
        assert_eq!(interfere_plan_verify(plan, m, 1.5, &mut ok, &mut violations), InterfereStatus::Ok);
        assert!(ok);
        assert_eq!(violations, 0);

        let mut json = ptr::null_mut();
        assert_eq!(interfere_plan_to_json(plan, &mut json), InterfereStatus::Ok);
        let text = take(json);
        let mut again = ptr::null_mut();
        assert_eq!(interfere_plan_from_json(c(&text).as_ptr(), &mut again), InterfereStatus::Ok);

        let mut script = ptr::null_mut();
        assert_eq!(interfere_plan_emit_script(again, c("/sys/fs/cgroup").as_ptr(), &mut script), InterfereStatus::Ok);
        let script = take(script);
        assert!(script.contains("mkdir \"$CGROUP_ROOT/victim\""));
        assert!(script.contains("cgroup.freeze"));

        let mut rejected = ptr::null_mut();
        assert_eq!(
            interfere_plan_emit_script(again, c("relative/path").as_ptr(), &mut rejected),
            InterfereStatus::InvalidInput
        );
        assert!(rejected.is_null());

        // the matrix's pair is not separated by a threshold-3 (root-only) plan
        let mut loose = ptr::null_mut();
        assert_eq!(interfere_plan_build(c(TASKS).as_ptr(), m, 3.0, false, &mut loose), InterfereStatus::Ok);
        assert_eq!(interfere_plan_verify(loose, m, 1.5, &mut ok, &mut violations), InterfereStatus::Ok);
        assert!(!ok);
        assert_eq!(violations, 1);

        for p in [plan, again, loose] {
            interfere_plan_free(p);
        }
        interfere_matrix_free(m);
    }
}

#[test]
fn simulate_calibration() {
    let scenario = format!(
        r#"{{
            "mode": "interference",
            "job_count": 100,
            "tasks": [
                {{"id": "victim", "role": "victim", "period_ms": 100, "relative_deadline_ms": 30,
                  "isolation_exec_ms": 20, "phase_ms": 50, "core": 1}},
                {{"id": "noise", "role": "aggressor", "period_ms": 200, "busy_fraction": 0.5, "core": 2}}
            ],
            "interference": {MATRIX}
        }}"#
    );
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(interfere_simulate_json(c(&scenario).as_ptr(), &mut r), InterfereStatus::Ok, "{:?}", last_error());
        let (mut misses, mut jobs) = (0, 0);
        assert_eq!(interfere_sim_miss_ratio(r, c("victim").as_ptr(), &mut misses, &mut jobs), InterfereStatus::Ok);
        assert_eq!((misses, jobs), (50, 100));
        assert_eq!(
            interfere_sim_miss_ratio(r, c("nobody").as_ptr(), &mut misses, &mut jobs),
            InterfereStatus::NotFound
        );
        let mut csv = ptr::null_mut();
        assert_eq!(interfere_sim_export_csv(r, &mut csv), InterfereStatus::Ok);
        let csv = take(csv);
        assert_eq!(csv.lines().filter(|l| l.starts_with("victim,")).count(), 100);
        interfere_sim_result_free(r);
    }
}

#[test]
fn loss_functions() {
    unsafe {
        let mut d = 0.0;
        assert_eq!(interfere_compute_delta(20.0, 50.0, &mut d), InterfereStatus::Ok);
        assert_eq!(d, 2.5);
        assert_eq!(interfere_compute_delta(0.0, 50.0, &mut d), InterfereStatus::InvalidInput);

        let y = [1.0, 2.0, 3.0];
        let mut v = 1.0;
        assert_eq!(interfere_rmlse(y.as_ptr(), y.as_ptr(), 3, &mut v), InterfereStatus::Ok);
        assert_eq!(v, 0.0);

        // log1p differences are +-(ln 3 - ln 2)
        let p = [2.0, 1.0];
        assert_eq!(interfere_rmlse(p.as_ptr(), y.as_ptr(), 2, &mut v), InterfereStatus::Ok);
        assert!((v - (3f64.ln() - 2f64.ln())).abs() < 1e-12);

        // attention [2, 1] -> [1, 0.5]; counts [1, 3] -> [0.25, 0.75]; C = 0.625
        let att = [2.0, 1.0];
        let l2 = [1.0, 3.0];
        assert_eq!(
            interfere_total_loss(y.as_ptr(), y.as_ptr(), 3, att.as_ptr(), l2.as_ptr(), 2, 0.5, &mut v),
            InterfereStatus::Ok
        );
        assert!((v - 0.5 * (2.0 - 0.625)).abs() < 1e-12);
    }
}

#[test]
fn bad_arguments_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(interfere_matrix_from_json(ptr::null(), &mut m), InterfereStatus::NullPointer);
        assert!(last_error().unwrap().contains("null"));
        assert_eq!(interfere_matrix_from_json(c("{").as_ptr(), &mut m), InterfereStatus::ParseError);
        assert!(m.is_null());
        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(
            interfere_matrix_from_json(bytes.as_ptr() as *const c_char, &mut m),
            InterfereStatus::InvalidUtf8
        );
        assert_eq!(interfere_matrix_from_json(c(MATRIX).as_ptr(), ptr::null_mut()), InterfereStatus::NullPointer);
        let mut n = 0;
        assert_eq!(interfere_matrix_size(ptr::null(), &mut n), InterfereStatus::NullPointer);

        // success clears the message
        let ok = matrix();
        assert!(last_error().is_none());
        interfere_matrix_free(ok);

        // freeing null is a no-op
        interfere_matrix_free(ptr::null_mut());
        interfere_model_free(ptr::null_mut());
        interfere_plan_free(ptr::null_mut());
        interfere_sim_result_free(ptr::null_mut());
        interfere_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = include_str!("../include/interfere.h");
    for name in [
        "interfere_last_error_message",
        "interfere_string_free",
        "interfere_model_from_json",
        "interfere_model_rpi4",
        "interfere_model_validate",
        "interfere_model_channels_json",
        "interfere_matrix_from_json",
        "interfere_matrix_get",
        "interfere_plan_build",
        "interfere_plan_verify",
        "interfere_plan_emit_script",
        "interfere_simulate_json",
        "interfere_sim_miss_ratio",
        "interfere_sim_export_csv",
        "interfere_compute_delta",
        "interfere_rmlse",
        "interfere_total_loss",
        "INTERFERE_STATUS_OK = 0",
        "INTERFERE_STATUS_INTERNAL = 6",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    assert!(header.contains("typedef struct InterfereModel InterfereModel;"));
}
