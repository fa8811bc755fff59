//! Exercises the C surface exactly as a foreign binding would: through raw
//! pointers and status codes.

use qedcomm_ffi::*;

fn build(
    kind: QedcommTaskKind,
    channel: QedcommChannel,
    goals: QedcommGoalKind,
) -> *mut QedcommTask {
    let mut task: *mut QedcommTask = std::ptr::null_mut();
    assert_eq!(
        qedcomm_task_build(kind, channel, goals, &mut task),
        QedcommStatus::Ok
    );
    assert!(!task.is_null());
    task
}

#[test]
fn task_dimensions_and_costs_round_trip() {
    let task = build(
        QedcommTaskKind::EnergyDegeneracy,
        QedcommChannel::Costly,
        QedcommGoalKind::Zipfian,
    );
    let (mut goals, mut actions) = (0usize, 0usize);
    assert_eq!(qedcomm_task_num_goals(task, &mut goals), QedcommStatus::Ok);
    assert_eq!(
        qedcomm_task_num_actions(task, &mut actions),
        QedcommStatus::Ok
    );
    assert_eq!((goals, actions), (5, 17));

    let mut costs = vec![0.0f64; actions];
    assert_eq!(
        qedcomm_task_costs(task, costs.as_mut_ptr(), costs.len()),
        QedcommStatus::Ok
    );
    assert_eq!(costs[0], 0.0);
    assert_eq!(costs[16], 4.0);

    let mut short = vec![0.0f64; 3];
    assert_eq!(
        qedcomm_task_costs(task, short.as_mut_ptr(), short.len()),
        QedcommStatus::BufferTooSmall
    );

    let mut probs = vec![0.0f64; goals];
    assert_eq!(
        qedcomm_task_goal_probs(task, probs.as_mut_ptr(), probs.len()),
        QedcommStatus::Ok
    );
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((probs[0] - 0.438).abs() < 1e-3);

    qedcomm_task_free(task);
}

#[test]
fn training_and_accuracy_through_the_c_surface() {
    let task = build(
        QedcommTaskKind::NoDegeneracy,
        QedcommChannel::Costly,
        QedcommGoalKind::Zipfian,
    );
    let mut a: *mut QedcommPolicy = std::ptr::null_mut();
    let mut b: *mut QedcommPolicy = std::ptr::null_mut();
    assert_eq!(qedcomm_train_sp(task, 0, 0, &mut a), QedcommStatus::Ok);
    assert_eq!(qedcomm_train_sp(task, 1, 0, &mut b), QedcommStatus::Ok);

    let mut sp = 0.0f64;
    assert_eq!(qedcomm_policy_accuracy(a, task, &mut sp), QedcommStatus::Ok);
    assert!(sp > 0.9, "sp accuracy {sp}");

    let mut xp = 0.0f64;
    assert_eq!(
        qedcomm_crossplay_accuracy(a, b, task, &mut xp),
        QedcommStatus::Ok
    );
    assert!(xp > 0.9, "task 1 optima are unique, xp {xp}");

    let mut sender = vec![0.0f64; 5 * 10];
    assert_eq!(
        qedcomm_policy_sender_probs(a, sender.as_mut_ptr(), sender.len()),
        QedcommStatus::Ok
    );
    for g in 0..5 {
        let row_sum: f64 = sender[g * 10..(g + 1) * 10].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
    }
    let mut conf = vec![0.0f64; 5 * 5];
    assert_eq!(
        qedcomm_policy_confusion(a, conf.as_mut_ptr(), conf.len()),
        QedcommStatus::Ok
    );
    let diag: f64 = (0..5).map(|g| conf[g * 5 + g]).sum();
    assert!(diag > 4.0, "near-identity confusion, trace {diag}");

    // Mismatched task dimensions are rejected.
    let other = build(
        QedcommTaskKind::EnergyDegeneracy,
        QedcommChannel::Costly,
        QedcommGoalKind::Zipfian,
    );
    let mut bad = 0.0f64;
    assert_eq!(
        qedcomm_policy_accuracy(a, other, &mut bad),
        QedcommStatus::InvalidArgument
    );

    qedcomm_policy_free(a);
    qedcomm_policy_free(b);
    qedcomm_task_free(task);
    qedcomm_task_free(other);
}

#[test]
fn discovery_loop_through_the_c_surface() {
    let task = build(
        QedcommTaskKind::NoDegeneracy,
        QedcommChannel::Costly,
        QedcommGoalKind::Zipfian,
    );

    // A population of one is invalid.
    let mut result: *mut QedcommQedResult = std::ptr::null_mut();
    assert_eq!(
        qedcomm_qed_run(task, 0, 1, &mut result),
        QedcommStatus::InvalidArgument
    );

    assert_eq!(qedcomm_qed_run(task, 0, 4, &mut result), QedcommStatus::Ok);
    let (mut sp_mean, mut sp_std, mut xp_mean, mut xp_std) = (0.0, 0.0, 0.0, 0.0);
    assert_eq!(
        qedcomm_qed_result_scores(result, &mut sp_mean, &mut sp_std, &mut xp_mean, &mut xp_std),
        QedcommStatus::Ok
    );
    assert!(sp_mean > 0.9 && xp_mean > 0.9, "SP {sp_mean} XP {xp_mean}");

    let mut converged = false;
    assert_eq!(
        qedcomm_qed_result_converged(result, &mut converged),
        QedcommStatus::Ok
    );
    assert!(converged);

    let mut maps = 0usize;
    assert_eq!(
        qedcomm_qed_result_mapping_count(result, &mut maps),
        QedcommStatus::Ok
    );
    assert_eq!(maps, 1, "task 1 admits only the identity");

    let mut generations = 0usize;
    assert_eq!(
        qedcomm_qed_result_generations(result, &mut generations),
        QedcommStatus::Ok
    );
    assert!(generations >= 1);

    let mut final_policy: *mut QedcommPolicy = std::ptr::null_mut();
    assert_eq!(
        qedcomm_qed_result_final_policy(result, &mut final_policy),
        QedcommStatus::Ok
    );
    let mut acc = 0.0f64;
    assert_eq!(
        qedcomm_policy_accuracy(final_policy, task, &mut acc),
        QedcommStatus::Ok
    );
    assert!(acc > 0.9);

    qedcomm_policy_free(final_policy);
    qedcomm_qed_result_free(result);
    qedcomm_task_free(task);
}

#[test]
fn generated_header_exists_and_exports_the_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qedcomm.h");
    let text = std::fs::read_to_string(&header).expect("build script generates include/qedcomm.h");
    for symbol in [
        "QedcommStatus",
        "QedcommTask",
        "qedcomm_task_build",
        "qedcomm_train_sp",
        "qedcomm_policy_confusion",
        "qedcomm_qed_run",
        "qedcomm_qed_result_scores",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
