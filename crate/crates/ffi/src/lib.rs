//! C ABI for the qedcomm toolkit: opaque handles, status codes, and a
//! generated header (`include/qedcomm.h`) so other languages can drive
//! task construction, protocol training, and the discovery loop.
//!
//! Conventions:
//! * Every function returns a [`QedcommStatus`]; results come back through
//!   out-pointers.
//! * Handles are created by `*_build`/`*_run` functions and released with
//!   the matching `*_free`; freeing a null pointer is a no-op.
//! * Matrix buffers are row-major `f64`; the caller supplies the buffer and
//!   its length in elements.
//! * No call unwinds across the boundary; panics surface as
//!   `InternalPanic`.

// Every dereference below is null-checked first; handle validity is the C
// caller's side of the contract, as usual for an opaque-handle API.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::panic::{catch_unwind, AssertUnwindSafe};

use qedcomm::game::{build_task, Channel, GoalKind, TaskKind, TaskSpec};
use qedcomm::policy::{accuracy, accuracy_pair, confusion, JointPolicy};
use qedcomm::qed::{qed_run, QedConfig, QedResult};
use qedcomm::symmetry::MappingSet;
use qedcomm::training::{train, TrainConfig};

/// Status code returned by every qedcomm FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QedcommStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    RuntimeError = 4,
    InternalPanic = 5,
}

/// Task kind selector for `qedcomm_task_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QedcommTaskKind {
    NoDegeneracy = 0,
    EnergyDegeneracy = 1,
}

/// Channel selector for `qedcomm_task_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QedcommChannel {
    Costly = 0,
    CheapTalk = 1,
}

/// Goal-distribution selector for `qedcomm_task_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QedcommGoalKind {
    Zipfian = 0,
    Uniform = 1,
}

/// Opaque task handle.
pub struct QedcommTask {
    task: TaskSpec,
}

/// Opaque joint-policy handle.
pub struct QedcommPolicy {
    policy: JointPolicy,
}

/// Opaque result handle for a discovery run.
pub struct QedcommQedResult {
    result: QedResult,
}

fn guard(body: impl FnOnce() -> QedcommStatus) -> QedcommStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => QedcommStatus::InternalPanic,
    }
}

fn fill(buf: *mut f64, len: usize, data: &[f64]) -> QedcommStatus {
    if buf.is_null() {
        return QedcommStatus::NullPointer;
    }
    if len < data.len() {
        return QedcommStatus::BufferTooSmall;
    }
    let out = unsafe { std::slice::from_raw_parts_mut(buf, data.len()) };
    out.copy_from_slice(data);
    QedcommStatus::Ok
}

/// Build one of the benchmark tasks. The returned handle must be released
/// with `qedcomm_task_free`.
#[no_mangle]
pub extern "C" fn qedcomm_task_build(
    kind: QedcommTaskKind,
    channel: QedcommChannel,
    goal_kind: QedcommGoalKind,
    out: *mut *mut QedcommTask,
) -> QedcommStatus {
    guard(|| {
        if out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let task = build_task(
            match kind {
                QedcommTaskKind::NoDegeneracy => TaskKind::NoDegeneracy,
                QedcommTaskKind::EnergyDegeneracy => TaskKind::EnergyDegeneracy,
            },
            match channel {
                QedcommChannel::Costly => Channel::Costly,
                QedcommChannel::CheapTalk => Channel::CheapTalk,
            },
            match goal_kind {
                QedcommGoalKind::Zipfian => GoalKind::Zipfian,
                QedcommGoalKind::Uniform => GoalKind::Uniform,
            },
        );
        unsafe { *out = Box::into_raw(Box::new(QedcommTask { task })) };
        QedcommStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn qedcomm_task_free(task: *mut QedcommTask) {
    if !task.is_null() {
        drop(unsafe { Box::from_raw(task) });
    }
}

#[no_mangle]
pub extern "C" fn qedcomm_task_num_goals(
    task: *const QedcommTask,
    out: *mut usize,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        unsafe { *out = (*task).task.num_goals() };
        QedcommStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn qedcomm_task_num_actions(
    task: *const QedcommTask,
    out: *mut usize,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        unsafe { *out = (*task).task.num_actions() };
        QedcommStatus::Ok
    })
}

/// Copy the per-action cost vector into `buf` (length in elements).
#[no_mangle]
pub extern "C" fn qedcomm_task_costs(
    task: *const QedcommTask,
    buf: *mut f64,
    len: usize,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() {
            return QedcommStatus::NullPointer;
        }
        fill(buf, len, unsafe { (*task).task.costs() })
    })
}

/// Copy the goal probability vector into `buf` (length in elements).
#[no_mangle]
pub extern "C" fn qedcomm_task_goal_probs(
    task: *const QedcommTask,
    buf: *mut f64,
    len: usize,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() {
            return QedcommStatus::NullPointer;
        }
        fill(buf, len, unsafe { (*task).task.goal_probs() })
    })
}

/// Train a self-play policy with the benchmark recipe. Pass 0 iterations
/// for the task default (5000 or 10000).
#[no_mangle]
pub extern "C" fn qedcomm_train_sp(
    task: *const QedcommTask,
    seed: u64,
    iterations: u32,
    out: *mut *mut QedcommPolicy,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let task = unsafe { &(*task).task };
        let mut cfg = TrainConfig::for_task(task, seed);
        if iterations > 0 {
            cfg.iterations = iterations as usize;
        }
        let maps = MappingSet::identity(task.num_goals(), task.num_actions());
        match train(task, &maps, &cfg) {
            Ok(result) => {
                unsafe {
                    *out = Box::into_raw(Box::new(QedcommPolicy {
                        policy: result.policy,
                    }))
                };
                QedcommStatus::Ok
            }
            Err(_) => QedcommStatus::RuntimeError,
        }
    })
}

#[no_mangle]
pub extern "C" fn qedcomm_policy_free(policy: *mut QedcommPolicy) {
    if !policy.is_null() {
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// Self-play accuracy of a policy under the task's goal distribution.
#[no_mangle]
pub extern "C" fn qedcomm_policy_accuracy(
    policy: *const QedcommPolicy,
    task: *const QedcommTask,
    out: *mut f64,
) -> QedcommStatus {
    guard(|| {
        if policy.is_null() || task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let policy = unsafe { &(*policy).policy };
        let task = unsafe { &(*task).task };
        if !policy.matches_task(task) {
            return QedcommStatus::InvalidArgument;
        }
        unsafe { *out = accuracy(policy, task.goal_dist()) };
        QedcommStatus::Ok
    })
}

/// Cross-play accuracy: sender of `sender_of` with receiver of
/// `receiver_of`.
#[no_mangle]
pub extern "C" fn qedcomm_crossplay_accuracy(
    sender_of: *const QedcommPolicy,
    receiver_of: *const QedcommPolicy,
    task: *const QedcommTask,
    out: *mut f64,
) -> QedcommStatus {
    guard(|| {
        if sender_of.is_null() || receiver_of.is_null() || task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let sender_of = unsafe { &(*sender_of).policy };
        let receiver_of = unsafe { &(*receiver_of).policy };
        let task = unsafe { &(*task).task };
        if !sender_of.matches_task(task) || !receiver_of.matches_task(task) {
            return QedcommStatus::InvalidArgument;
        }
        match accuracy_pair(sender_of, receiver_of, task.goal_dist()) {
            Ok(value) => {
                unsafe { *out = value };
                QedcommStatus::Ok
            }
            Err(_) => QedcommStatus::InvalidArgument,
        }
    })
}

/// Row-major sender probability table, goals x actions.
#[no_mangle]
pub extern "C" fn qedcomm_policy_sender_probs(
    policy: *const QedcommPolicy,
    buf: *mut f64,
    len: usize,
) -> QedcommStatus {
    guard(|| {
        if policy.is_null() {
            return QedcommStatus::NullPointer;
        }
        let probs = unsafe { (*policy).policy.sender_probs() };
        fill(buf, len, probs.data())
    })
}

/// Row-major receiver probability table, actions x goals.
#[no_mangle]
pub extern "C" fn qedcomm_policy_receiver_probs(
    policy: *const QedcommPolicy,
    buf: *mut f64,
    len: usize,
) -> QedcommStatus {
    guard(|| {
        if policy.is_null() {
            return QedcommStatus::NullPointer;
        }
        let probs = unsafe { (*policy).policy.receiver_probs() };
        fill(buf, len, probs.data())
    })
}

/// Row-major confusion matrix p(predicted | true), goals x goals.
#[no_mangle]
pub extern "C" fn qedcomm_policy_confusion(
    policy: *const QedcommPolicy,
    buf: *mut f64,
    len: usize,
) -> QedcommStatus {
    guard(|| {
        if policy.is_null() {
            return QedcommStatus::NullPointer;
        }
        let conf = confusion(unsafe { &(*policy).policy });
        fill(buf, len, conf.entries().data())
    })
}

/// Run the full discovery loop with the benchmark recipe. Pass 0 for the
/// default population of 10; populations below 2 are invalid.
#[no_mangle]
pub extern "C" fn qedcomm_qed_run(
    task: *const QedcommTask,
    base_seed: u64,
    population: u32,
    out: *mut *mut QedcommQedResult,
) -> QedcommStatus {
    guard(|| {
        if task.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let task = unsafe { &(*task).task };
        let mut cfg = QedConfig::for_task(task, base_seed);
        if population > 0 {
            cfg.population = population as usize;
        }
        if cfg.validate().is_err() {
            return QedcommStatus::InvalidArgument;
        }
        match qed_run(task, &cfg) {
            Ok(result) => {
                unsafe { *out = Box::into_raw(Box::new(QedcommQedResult { result })) };
                QedcommStatus::Ok
            }
            Err(_) => QedcommStatus::RuntimeError,
        }
    })
}

#[no_mangle]
pub extern "C" fn qedcomm_qed_result_free(result: *mut QedcommQedResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Self-play and cross-play statistics of the final generation.
#[no_mangle]
pub extern "C" fn qedcomm_qed_result_scores(
    result: *const QedcommQedResult,
    sp_mean: *mut f64,
    sp_std: *mut f64,
    xp_mean: *mut f64,
    xp_std: *mut f64,
) -> QedcommStatus {
    guard(|| {
        if result.is_null()
            || sp_mean.is_null()
            || sp_std.is_null()
            || xp_mean.is_null()
            || xp_std.is_null()
        {
            return QedcommStatus::NullPointer;
        }
        let trace = unsafe { &(*result).result.outer_trace };
        let Some(last) = trace.last() else {
            return QedcommStatus::RuntimeError;
        };
        unsafe {
            *sp_mean = last.sp_mean;
            *sp_std = last.sp_std;
            *xp_mean = last.xp_mean;
            *xp_std = last.xp_std;
        }
        QedcommStatus::Ok
    })
}

/// Whether the run met the cross-play-matches-self-play stopping rule.
#[no_mangle]
pub extern "C" fn qedcomm_qed_result_converged(
    result: *const QedcommQedResult,
    out: *mut bool,
) -> QedcommStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        unsafe { *out = (*result).result.converged };
        QedcommStatus::Ok
    })
}

/// Number of equivalence maps in the final working set (including the
/// identity).
#[no_mangle]
pub extern "C" fn qedcomm_qed_result_mapping_count(
    result: *const QedcommQedResult,
    out: *mut usize,
) -> QedcommStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        unsafe { *out = (*result).result.mapping_set.len() };
        QedcommStatus::Ok
    })
}

/// Number of completed outer iterations.
#[no_mangle]
pub extern "C" fn qedcomm_qed_result_generations(
    result: *const QedcommQedResult,
    out: *mut usize,
) -> QedcommStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        unsafe { *out = (*result).result.outer_trace.len() };
        QedcommStatus::Ok
    })
}

/// Clone the final policy out of a discovery result. The returned handle
/// must be released with `qedcomm_policy_free`.
#[no_mangle]
pub extern "C" fn qedcomm_qed_result_final_policy(
    result: *const QedcommQedResult,
    out: *mut *mut QedcommPolicy,
) -> QedcommStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return QedcommStatus::NullPointer;
        }
        let policy = unsafe { (*result).result.final_policy.clone() };
        unsafe { *out = Box::into_raw(Box::new(QedcommPolicy { policy })) };
        QedcommStatus::Ok
    })
}
