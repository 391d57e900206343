//! C ABI for the robust MDP library.
//!
//! Instances travel as opaque `RmdpInstance` handles created from builtin
//! names or JSON documents; every fallible call returns an [`RmdpStatus`]
//! and records a message retrievable with [`rmdp_last_error_message`].
//! Strings returned through out-parameters are owned by the caller and
//! must be released with [`rmdp_string_free`]. All entry points catch
//! panics and convert them to `InternalError`; no unwinding crosses the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use robust_mdp::bellman::{fixed_point, OperatorKind, DEFAULT_MAX_ITER};
use robust_mdp::library::{builtin_instance, check_expected, instance_to_json_string, parse_instance, NamedInstance};
use robust_mdp::mdp::{weighted_value, Policy};
use robust_mdp::oracle::worst_case_oracle;
use robust_mdp::ssp::{falsify_ssp, SspMode};
use robust_mdp::uncertainty::DEFAULT_VERTEX_CAP;
use robust_mdp::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdpStatus {
    /// The call succeeded.
    Ok = 0,
    /// The computation ran but a checked claim failed (reproduction rows).
    CheckFailed = 1,
    /// Null pointer, malformed JSON, bad shape, or unknown name.
    InvalidArgument = 2,
    /// A vertex, grid, or iteration budget was exceeded.
    BudgetExceeded = 3,
    /// Numerical failure or caught panic.
    InternalError = 4,
}

/// Evaluation modes for `rmdp_evaluate`. Pass as the `mode` argument.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdpEvalMode {
    /// Fixed point of the per-state adversary operator.
    RobustS = 0,
    /// Fixed point of the per-(state, action) adversary operator.
    RobustSa = 1,
    /// Brute-force worst case over enumerated kernels or the parameter grid.
    Oracle = 2,
}

/// Solvability check modes for `rmdp_check_ssp`. Pass as `mode`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdpSspMode {
    StrongS = 0,
    StrongSa = 1,
    WeakS = 2,
    WeakSa = 3,
}

/// Opaque instance handle: an MDP, its uncertainty set, and any expected
/// values. Create with `rmdp_instance_builtin` or `rmdp_instance_from_json`,
/// release with `rmdp_instance_free`.
pub struct RmdpInstance {
    inner: NamedInstance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn record_error(msg: &str) {
    let clean: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(err: &Error) -> RmdpStatus {
    record_error(&err.to_string());
    match err {
        Error::Invalid(_) => RmdpStatus::InvalidArgument,
        Error::Budget(_) => RmdpStatus::BudgetExceeded,
        Error::Numerical(_) => RmdpStatus::InternalError,
    }
}

fn invalid(msg: &str) -> RmdpStatus {
    record_error(msg);
    RmdpStatus::InvalidArgument
}

fn guarded(body: impl FnOnce() -> RmdpStatus) -> RmdpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            record_error("internal panic");
            RmdpStatus::InternalError
        }
    }
}

/// Message for the most recent failing call on this thread, or an empty
/// string when nothing failed yet.
///
/// The pointer stays valid until the next failing call on the same thread;
/// copy the contents before calling anything else. Never free it.
#[no_mangle]
pub extern "C" fn rmdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, RmdpStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{what} must be valid UTF-8")))
}

fn hand_out(inst: NamedInstance, out: *mut *mut RmdpInstance) -> RmdpStatus {
    let boxed = Box::new(RmdpInstance { inner: inst });
    unsafe { *out = Box::into_raw(boxed) };
    RmdpStatus::Ok
}

/// Create an instance from a builtin name ("five_state_disjoint",
/// "square_hull", ...). On success writes a fresh handle through `out`.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid location
/// to write one pointer; both must stay valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_builtin(
    name: *const c_char,
    out: *mut *mut RmdpInstance,
) -> RmdpStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let name = match read_str(name, "name") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match builtin_instance(name) {
            Ok(inst) => hand_out(inst, out),
            Err(e) => fail(&e),
        }
    })
}

/// Create an instance from a JSON document in the same format the CLI and
/// the library read and write. On success writes a fresh handle through
/// `out`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid location
/// to write one pointer; both must stay valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_from_json(
    json: *const c_char,
    out: *mut *mut RmdpInstance,
) -> RmdpStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let text = match read_str(json, "json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match parse_instance(text) {
            Ok(inst) => hand_out(inst, out),
            Err(e) => fail(&e),
        }
    })
}

/// Release a handle. Passing NULL is a no-op.
///
/// # Safety
/// `inst` must be NULL or a handle returned by one of the constructors that
/// has not been freed yet; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_free(inst: *mut RmdpInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of states, or 0 for NULL.
///
/// # Safety
/// `inst` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_num_states(inst: *const RmdpInstance) -> usize {
    if inst.is_null() {
        return 0;
    }
    (*inst).inner.mdp.num_states
}

/// Number of actions, or 0 for NULL.
///
/// # Safety
/// `inst` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_num_actions(inst: *const RmdpInstance) -> usize {
    if inst.is_null() {
        return 0;
    }
    (*inst).inner.mdp.num_actions
}

/// Serialize the instance to JSON. The returned string must be released
/// with `rmdp_string_free`.
///
/// # Safety
/// `inst` must be a live handle and `out` a valid location to write one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rmdp_instance_to_json(
    inst: *const RmdpInstance,
    out: *mut *mut c_char,
) -> RmdpStatus {
    guarded(|| {
        if inst.is_null() || out.is_null() {
            return invalid("inst and out must not be null");
        }
        let text = instance_to_json_string(&(*inst).inner);
        match CString::new(text) {
            Ok(s) => {
                *out = s.into_raw();
                RmdpStatus::Ok
            }
            Err(_) => invalid("serialized JSON contained a NUL byte"),
        }
    })
}

/// Release a string returned by this library. Passing NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn rmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_policy(
    inst: &NamedInstance,
    policy_probs: *const f64,
    policy_len: usize,
) -> Result<Policy, Error> {
    let (s_n, a_n) = (inst.mdp.num_states, inst.mdp.num_actions);
    if policy_probs.is_null() {
        return Ok(Policy::uniform(s_n, a_n));
    }
    if policy_len != s_n * a_n {
        return Err(Error::invalid(format!(
            "policy has {} entries, instance needs {} x {}",
            policy_len, s_n, a_n
        )));
    }
    let flat = std::slice::from_raw_parts(policy_probs, policy_len);
    let rows: Vec<Vec<f64>> = flat.chunks(a_n).map(|c| c.to_vec()).collect();
    Policy::new(rows)
}

/// Worst-case value of a policy from the instance's initial distribution.
///
/// `policy_probs` is row-major `num_states x num_actions` (NULL for the
/// uniform policy), `mode` one of the `RmdpEvalMode` values. Writes the
/// value through `out_value`.
///
/// # Safety
/// `inst` must be a live handle; `policy_probs` must be NULL or point to
/// `policy_len` readable doubles; `out_value` must be a valid location to
/// write one double.
#[no_mangle]
pub unsafe extern "C" fn rmdp_evaluate(
    inst: *const RmdpInstance,
    policy_probs: *const f64,
    policy_len: usize,
    mode: c_int,
    out_value: *mut f64,
) -> RmdpStatus {
    guarded(|| {
        if inst.is_null() || out_value.is_null() {
            return invalid("inst and out_value must not be null");
        }
        let inst = &(*inst).inner;
        let policy = match read_policy(inst, policy_probs, policy_len) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let result = match mode {
            m if m == RmdpEvalMode::RobustS as c_int
                || m == RmdpEvalMode::RobustSa as c_int =>
            {
                let kind = if m == RmdpEvalMode::RobustS as c_int {
                    OperatorKind::PolicyS
                } else {
                    OperatorKind::PolicySa
                };
                inst.set.as_operator_set().and_then(|set| {
                    let fp = fixed_point(kind, &inst.mdp, &set, Some(&policy), 1e-8, DEFAULT_MAX_ITER)?;
                    Ok(weighted_value(&inst.mdp.initial_dist, &fp.value.values))
                })
            }
            m if m == RmdpEvalMode::Oracle as c_int => {
                worst_case_oracle(&inst.mdp, &inst.set, &policy, None).map(|r| r.min_value)
            }
            _ => return invalid("mode must be an RmdpEvalMode value"),
        };
        match result {
            Ok(v) => {
                *out_value = v;
                RmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Optimal robust value: the fixed point of the max-min Bellman operator.
///
/// Writes the value from the initial distribution through `out_value`;
/// when `out_state_values` is non-NULL it receives all `num_states`
/// per-state values.
///
/// # Safety
/// `inst` must be a live handle; `out_value` must be a valid location to
/// write one double; `out_state_values` must be NULL or point to
/// `num_states` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rmdp_solve(
    inst: *const RmdpInstance,
    out_value: *mut f64,
    out_state_values: *mut f64,
) -> RmdpStatus {
    guarded(|| {
        if inst.is_null() || out_value.is_null() {
            return invalid("inst and out_value must not be null");
        }
        let inst = &(*inst).inner;
        let result = inst.set.as_operator_set().and_then(|set| {
            fixed_point(OperatorKind::Optimal, &inst.mdp, &set, None, 1e-8, DEFAULT_MAX_ITER)
        });
        match result {
            Ok(fp) => {
                *out_value = weighted_value(&inst.mdp.initial_dist, &fp.value.values);
                if !out_state_values.is_null() {
                    let dst =
                        std::slice::from_raw_parts_mut(out_state_values, inst.mdp.num_states);
                    dst.copy_from_slice(&fp.value.values);
                }
                RmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Search for an objective on which the per-state (or per-pair) linear
/// minimization problems have no common minimizer.
///
/// `mode` is one of the `RmdpSspMode` values; `samples` random objectives
/// are tried with the given `seed`. Writes true through `out_holds` when no
/// counterexample was found (sampling evidence, not proof) and false when
/// one was.
///
/// # Safety
/// `inst` must be a live handle and `out_holds` a valid location to write
/// one bool.
#[no_mangle]
pub unsafe extern "C" fn rmdp_check_ssp(
    inst: *const RmdpInstance,
    mode: c_int,
    samples: usize,
    seed: u64,
    out_holds: *mut bool,
) -> RmdpStatus {
    guarded(|| {
        if inst.is_null() || out_holds.is_null() {
            return invalid("inst and out_holds must not be null");
        }
        let mode = match mode {
            m if m == RmdpSspMode::StrongS as c_int => SspMode::StrongS,
            m if m == RmdpSspMode::StrongSa as c_int => SspMode::StrongSa,
            m if m == RmdpSspMode::WeakS as c_int => SspMode::WeakS,
            m if m == RmdpSspMode::WeakSa as c_int => SspMode::WeakSa,
            _ => return invalid("mode must be an RmdpSspMode value"),
        };
        let inst = &(*inst).inner;
        let result = inst
            .set
            .as_operator_set()
            .and_then(|set| falsify_ssp(&set, mode, samples, seed, DEFAULT_VERTEX_CAP));
        match result {
            Ok(verdict) => {
                *out_holds = verdict.holds;
                RmdpStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Recompute every expected value the instance declares.
///
/// Writes a JSON array of result rows (quantity, value, expected,
/// tolerance, pass) through `out_report_json`; release it with
/// `rmdp_string_free`. Returns `Ok` when every row passes and
/// `CheckFailed` when at least one fails; the report is written either way.
///
/// # Safety
/// `inst` must be a live handle and `out_report_json` a valid location to
/// write one pointer.
#[no_mangle]
pub unsafe extern "C" fn rmdp_reproduce(
    inst: *const RmdpInstance,
    out_report_json: *mut *mut c_char,
) -> RmdpStatus {
    guarded(|| {
        if inst.is_null() || out_report_json.is_null() {
            return invalid("inst and out_report_json must not be null");
        }
        let rows = match check_expected(&(*inst).inner) {
            Ok(rows) => rows,
            Err(e) => return fail(&e),
        };
        let failed = rows.iter().filter(|r| r.pass == Some(false)).count();
        let text = serde_json::to_string_pretty(&rows).unwrap_or_else(|_| "[]".to_string());
        match CString::new(text) {
            Ok(s) => {
                *out_report_json = s.into_raw();
                if failed == 0 {
                    RmdpStatus::Ok
                } else {
                    record_error(&format!("{failed} expected values failed to reproduce"));
                    RmdpStatus::CheckFailed
                }
            }
            Err(_) => invalid("report JSON contained a NUL byte"),
        }
    })
}
