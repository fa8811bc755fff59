//! Shared oracles and check routines used by both the acceptance suite and
//! the standalone property suite. Every expected value here is computed by
//! an independent route (finite differences, exhaustive enumeration, direct
//! construction), never by the implementation path under test.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use qedcomm::game::{build_task, Channel, GoalKind, TaskKind, TaskSpec};
use qedcomm::mat::Mat;
use qedcomm::policy::JointPolicy;
use qedcomm::rng::SeededRng;
use qedcomm::symmetry::{apply_map, learn_mapping, EquivalenceMap, MappingLearnConfig, MappingSet};
use qedcomm::training::{gradients, op_loss, train, TrainConfig};

/// Central finite differences of op_loss.total at step h, compared against
/// the analytic gradients. Returns the worst relative error over all logit
/// entries of `cases` random instances (denominator floored at 1e-5, above
/// the finite-difference noise).
pub fn finite_difference_worst_error(cases: usize) -> f64 {
    let mut rng = SeededRng::new(2024);
    let h = 1e-5;
    let mut worst = 0.0f64;

    for case in 0..cases {
        let task = random_task(&mut rng, case);
        let joint = random_joint(&task, &mut rng);
        let maps = random_maps(&task, &mut rng, case);
        let cfg = TrainConfig::default();

        let (d_sender, d_receiver) = gradients(&joint, &task, &maps, &cfg).unwrap();
        let eval = |j: &JointPolicy| op_loss(j, &task, &maps, &cfg).unwrap().total;

        for r in 0..task.num_goals() {
            for c in 0..task.num_actions() {
                let mut plus = joint.clone();
                plus.sender_logits_mut().add_at(r, c, h);
                let mut minus = joint.clone();
                minus.sender_logits_mut().add_at(r, c, -h);
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let rel = (d_sender.get(r, c) - fd).abs() / fd.abs().max(1e-5);
                worst = worst.max(rel);
            }
        }
        for r in 0..task.num_actions() {
            for c in 0..task.num_goals() {
                let mut plus = joint.clone();
                plus.receiver_logits_mut().add_at(r, c, h);
                let mut minus = joint.clone();
                minus.receiver_logits_mut().add_at(r, c, -h);
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let rel = (d_receiver.get(r, c) - fd).abs() / fd.abs().max(1e-5);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn random_task(rng: &mut SeededRng, case: usize) -> TaskSpec {
    match case % 4 {
        0 => build_task(TaskKind::NoDegeneracy, Channel::Costly, GoalKind::Zipfian),
        1 => build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        ),
        2 => build_task(
            TaskKind::EnergyDegeneracy,
            Channel::CheapTalk,
            GoalKind::Uniform,
        ),
        _ => {
            let goals = 2 + (rng.next_f64() * 4.0) as usize;
            let actions = goals + (rng.next_f64() * 5.0) as usize;
            let dist = qedcomm::game::zipf_distribution(goals, 1.0).unwrap();
            let costs: Vec<f64> = (0..actions)
                .map(|_| (rng.next_f64() * 4.0).round())
                .collect();
            TaskSpec::custom(dist, costs, Channel::Costly).unwrap()
        }
    }
}

fn random_joint(task: &TaskSpec, rng: &mut SeededRng) -> JointPolicy {
    let sender = Mat::from_fn(task.num_goals(), task.num_actions(), |_, _| {
        0.8 * rng.next_gaussian()
    });
    let receiver = Mat::from_fn(task.num_actions(), task.num_goals(), |_, _| {
        0.8 * rng.next_gaussian()
    });
    JointPolicy::from_logits(sender, receiver).unwrap()
}

fn random_maps(task: &TaskSpec, rng: &mut SeededRng, case: usize) -> MappingSet {
    let mut maps = MappingSet::identity(task.num_goals(), task.num_actions());
    if case % 2 == 1 {
        // A couple of random within-class swaps keeps the routed path under
        // test without violating op_loss preconditions.
        for class in task.cost_classes() {
            if class.len() >= 2 {
                let i = (rng.next_f64() * class.len() as f64) as usize % class.len();
                let mut j = (rng.next_f64() * class.len() as f64) as usize % class.len();
                if i == j {
                    j = (j + 1) % class.len();
                }
                let mut act: Vec<usize> = (0..task.num_actions()).collect();
                act.swap(class[i], class[j]);
                maps.insert(EquivalenceMap::new((0..task.num_goals()).collect(), act).unwrap());
            }
        }
    }
    maps
}

/// Outcome of the planted-permutation recovery oracle.
pub struct PlantedRecovery {
    pub exact: usize,
    pub kl_below_threshold: usize,
    pub cases: usize,
    pub worst_hard_loss: f64,
}

/// Train one energy-degeneracy policy with the self-play recipe, plant
/// `cases` random within-class permutations on it, and ask learn_mapping to
/// recover each one.
pub fn planted_recovery(cases: usize) -> PlantedRecovery {
    let task = build_task(
        TaskKind::EnergyDegeneracy,
        Channel::Costly,
        GoalKind::Zipfian,
    );
    let id = MappingSet::identity(task.num_goals(), task.num_actions());
    let source = train(&task, &id, &TrainConfig::for_task(&task, 3))
        .unwrap()
        .policy;
    let classes = task.cost_classes();

    let mut rng = SeededRng::new(777);
    let mut exact = 0;
    let mut kl_below_threshold = 0;
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let mut act: Vec<usize> = (0..task.num_actions()).collect();
        for class in &classes {
            let mut members = class.clone();
            for k in (1..members.len()).rev() {
                let r = (rng.next_f64() * (k + 1) as f64) as usize;
                members.swap(k, r);
            }
            for (slot, &m) in class.iter().zip(&members) {
                act[*slot] = m;
            }
        }
        let planted = EquivalenceMap::new((0..task.num_goals()).collect(), act).unwrap();
        let target = apply_map(&planted, &source).unwrap();
        let cfg = MappingLearnConfig {
            seed: 1000 + case as u64,
            ..MappingLearnConfig::default()
        };
        let learned = learn_mapping(&source, &target, &task, &cfg).unwrap();
        if learned.map == planted {
            exact += 1;
        }
        if learned.hard_loss < 1e-6 {
            kl_below_threshold += 1;
        }
        worst = worst.max(learned.hard_loss);
    }
    PlantedRecovery {
        exact,
        kl_below_threshold,
        cases,
        worst_hard_loss: worst,
    }
}

/// Exhaustive oracle over all |A|^|G| deterministic sender maps with
/// argmax best-response receivers: returns the best achievable
/// (accuracy - energy_weight * expected_cost).
pub fn brute_force_best_objective(task: &TaskSpec, energy_weight: f64) -> f64 {
    let goals = task.num_goals();
    let actions = task.num_actions();
    let p = task.goal_probs();
    let costs = task.costs();
    let mut assignment = vec![0usize; goals];
    let mut best = f64::NEG_INFINITY;
    loop {
        // Accuracy of the argmax receiver: each action decodes to the most
        // probable goal among its preimage.
        let mut top_mass = vec![0.0f64; actions];
        let mut cost = 0.0;
        for g in 0..goals {
            let a = assignment[g];
            if p[g] > top_mass[a] {
                top_mass[a] = p[g];
            }
            cost += p[g] * costs[a];
        }
        let accuracy: f64 = top_mass.iter().sum();
        let objective = accuracy - energy_weight * cost;
        if objective > best {
            best = objective;
        }

        // Next assignment in mixed-radix order.
        let mut g = 0;
        loop {
            if g == goals {
                return best;
            }
            assignment[g] += 1;
            if assignment[g] < actions {
                break;
            }
            assignment[g] = 0;
            g += 1;
        }
    }
}

/// Objective of a trained policy after hardening: argmax sender map with
/// its argmax best-response receiver.
pub fn hardened_objective(policy: &JointPolicy, task: &TaskSpec, energy_weight: f64) -> f64 {
    let sender = policy.sender_probs();
    let p = task.goal_probs();
    let costs = task.costs();
    let mut top_mass = vec![0.0f64; task.num_actions()];
    let mut cost = 0.0;
    for g in 0..task.num_goals() {
        let row = sender.row(g);
        let a = (0..task.num_actions())
            .max_by(|&x, &y| row[x].total_cmp(&row[y]))
            .unwrap();
        if p[g] > top_mass[a] {
            top_mass[a] = p[g];
        }
        cost += p[g] * costs[a];
    }
    top_mass.iter().sum::<f64>() - energy_weight * cost
}
