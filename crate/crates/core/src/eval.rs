//! Cross-play matrices, baselines, action orbits, and the
//! information-theoretic diagnostics of trained protocols.

use serde::{Deserialize, Serialize};

use crate::game::{GoalDistribution, TaskSpec};
use crate::mat::Mat;
use crate::policy::{accuracy_pair, JointPolicy};
use crate::symmetry::MappingSet;

/// entry[i, j] = accuracy of sender i paired with receiver j.
pub fn crossplay_matrix(population: &[JointPolicy], goal_dist: &GoalDistribution) -> Mat {
    let n = population.len();
    Mat::from_fn(n, n, |i, j| {
        accuracy_pair(&population[i], &population[j], goal_dist)
            .expect("population policies share a task")
    })
}

/// Accuracy of always predicting the most probable goal.
pub fn max_class_baseline(goal_dist: &GoalDistribution) -> f64 {
    goal_dist
        .probs()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Connected components of the action graph with an edge a <-> act_perm(a)
/// for every map in the set. With only the identity, every action is its own
/// orbit. Orbits are ordered by their smallest member.
pub fn orbits(maps: &MappingSet, num_actions: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..num_actions).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for map in maps.iter() {
        for (a, &to) in map.act_perm().iter().enumerate() {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, to);
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); num_actions];
    for a in 0..num_actions {
        let root = find(&mut parent, a);
        groups[root].push(a);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

/// Information-theoretic decomposition of a sender protocol with respect to
/// a mapping set's action orbits. All entropies are in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoDecomposition {
    /// I(G; orbit(A)) under the joint law p(g) pi1(a|g).
    pub mutual_info: f64,
    /// Per-goal expected cross-entropy between the uniform action
    /// distribution and the sender's conditional.
    pub sender_cross_entropy: f64,
    /// sender_cross_entropy scaled by |A|; both forms are reported because
    /// the constant-factor bookkeeping differs between derivation steps.
    pub sender_cross_entropy_scaled: f64,
    /// Expected sender action cost, energy units.
    pub expected_cost: f64,
    /// H(G) of the goal distribution.
    pub goal_entropy: f64,
}

/// Compute the decomposition of a joint policy's sender with respect to the
/// orbits induced by `maps`.
pub fn info_decomposition(
    joint: &JointPolicy,
    maps: &MappingSet,
    task: &TaskSpec,
) -> InfoDecomposition {
    let goals = task.num_goals();
    let actions = task.num_actions();
    let p = task.goal_probs();
    let sender = joint.sender_probs();

    let orbit_list = orbits(maps, actions);
    let mut orbit_of = vec![0usize; actions];
    for (k, orbit) in orbit_list.iter().enumerate() {
        for &a in orbit {
            orbit_of[a] = k;
        }
    }
    let num_orbits = orbit_list.len();

    // Joint law over (goal, orbit).
    let mut joint_law = Mat::zeros(goals, num_orbits);
    for g in 0..goals {
        let row = sender.row(g);
        for a in 0..actions {
            joint_law.add_at(g, orbit_of[a], p[g] * row[a]);
        }
    }
    let mut orbit_marginal = vec![0.0; num_orbits];
    for g in 0..goals {
        for k in 0..num_orbits {
            orbit_marginal[k] += joint_law.get(g, k);
        }
    }
    // A constant orbit label carries no information; returning the identity
    // here keeps the single-orbit case exact instead of float noise.
    let mutual_info = if num_orbits <= 1 {
        0.0
    } else {
        let mut mi = 0.0;
        for g in 0..goals {
            for k in 0..num_orbits {
                let pgk = joint_law.get(g, k);
                if pgk > 0.0 {
                    mi += pgk * (pgk / (p[g] * orbit_marginal[k])).ln();
                }
            }
        }
        mi.max(0.0)
    };

    let mut sender_cross_entropy = 0.0;
    let uniform = 1.0 / actions as f64;
    for g in 0..goals {
        let row = sender.row(g);
        let mut h_cross = 0.0;
        for a in 0..actions {
            h_cross -= uniform * row[a].max(1e-300).ln();
        }
        sender_cross_entropy += p[g] * h_cross;
    }

    let mut expected_cost = 0.0;
    for g in 0..goals {
        let row = sender.row(g);
        for a in 0..actions {
            expected_cost += p[g] * task.costs()[a] * row[a];
        }
    }

    InfoDecomposition {
        mutual_info,
        sender_cross_entropy,
        sender_cross_entropy_scaled: actions as f64 * sender_cross_entropy,
        expected_cost,
        goal_entropy: task.goal_dist().entropy(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{
        build_task, zipf_distribution, Channel, GoalDistribution, GoalKind, TaskKind, TaskSpec,
    };
    use crate::symmetry::{ground_truth_mappings, EquivalenceMap};

    fn perfect_joint(n: usize) -> JointPolicy {
        let big = 60.0;
        let sender = Mat::from_fn(n, n, |g, a| if g == a { big } else { 0.0 });
        let receiver = Mat::from_fn(n, n, |a, g| if a == g { big } else { 0.0 });
        JointPolicy::from_logits(sender, receiver).unwrap()
    }

    #[test]
    fn crossplay_of_single_perfect_protocol() {
        let dist = GoalDistribution::uniform(3).unwrap();
        let m = crossplay_matrix(&[perfect_joint(3)], &dist);
        assert_eq!(m.shape(), (1, 1));
        assert!((m.get(0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crossplay_of_identical_joints_is_constant() {
        let dist = zipf_distribution(3, 1.0).unwrap();
        let joint = perfect_joint(3);
        let m = crossplay_matrix(&[joint.clone(), joint], &dist);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.get(i, j) - m.get(0, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crossplay_off_diagonal_zero_for_shifted_codebooks() {
        let big = 60.0;
        let mk = |shift: usize| {
            let sender = Mat::from_fn(3, 3, |g, a| if (g + shift) % 3 == a { big } else { 0.0 });
            let receiver = Mat::from_fn(3, 3, |a, g| if (g + shift) % 3 == a { big } else { 0.0 });
            JointPolicy::from_logits(sender, receiver).unwrap()
        };
        let dist = GoalDistribution::uniform(3).unwrap();
        let m = crossplay_matrix(&[mk(0), mk(1)], &dist);
        assert!((m.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((m.get(1, 1) - 1.0).abs() < 1e-9);
        assert!(m.get(0, 1) < 1e-9);
        assert!(m.get(1, 0) < 1e-9);
    }

    #[test]
    fn max_class_values() {
        assert!((max_class_baseline(&zipf_distribution(5, 1.0).unwrap()) - 0.438).abs() < 5e-4);
        assert!((max_class_baseline(&GoalDistribution::uniform(5).unwrap()) - 0.2).abs() < 1e-15);
        assert!((max_class_baseline(&zipf_distribution(1, 1.0).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orbits_identity_gives_singletons() {
        let maps = MappingSet::identity(5, 10);
        let orbit_list = orbits(&maps, 10);
        assert_eq!(orbit_list.len(), 10);
        assert!(orbit_list.iter().all(|o| o.len() == 1));
    }

    #[test]
    fn orbits_of_ground_truth_class_permutations() {
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        let maps = ground_truth_mappings(&task);
        let orbit_list = orbits(&maps, 17);
        let sizes: Vec<usize> = orbit_list.iter().map(|o| o.len()).collect();
        assert_eq!(sizes, vec![1, 4, 4, 4, 4]);
        assert_eq!(orbit_list, task.cost_classes());
    }

    #[test]
    fn orbits_single_transposition() {
        let mut maps = MappingSet::identity(2, 5);
        let mut act: Vec<usize> = (0..5).collect();
        act.swap(1, 2);
        maps.insert(EquivalenceMap::new(vec![0, 1], act).unwrap());
        let orbit_list = orbits(&maps, 5);
        assert_eq!(orbit_list, vec![vec![0], vec![1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn mutual_info_zero_for_goal_independent_sender() {
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        // Same sender row for every goal.
        let mut rng = crate::rng::SeededRng::new(3);
        let row: Vec<f64> = (0..17).map(|_| rng.next_gaussian()).collect();
        let sender = Mat::from_fn(5, 17, |_, a| row[a]);
        let receiver = Mat::zeros(17, 5);
        let joint = JointPolicy::from_logits(sender, receiver).unwrap();
        let info = info_decomposition(&joint, &MappingSet::identity(5, 17), &task);
        assert!(info.mutual_info.abs() < 1e-12, "MI {}", info.mutual_info);
    }

    #[test]
    fn mutual_info_reaches_goal_entropy_for_orbit_separating_protocol() {
        // 5 goals, 5 orbits (identity maps on a 5-action task), deterministic
        // protocol: I(G; K) = H(G) = entropy of the Zipf(5, 1) vector.
        let dist = zipf_distribution(5, 1.0).unwrap();
        let task = TaskSpec::custom(dist, vec![0.0, 1.0, 2.0, 3.0, 4.0], Channel::Costly).unwrap();
        let joint = perfect_joint(5);
        let info = info_decomposition(&joint, &MappingSet::identity(5, 5), &task);
        // Oracle: H = -sum p ln p over the normalized [1, 1/2, ..., 1/5].
        let h: f64 = (1..=5).map(|k| 1.0 / k as f64).sum();
        let oracle: f64 = (1..=5)
            .map(|k| {
                let p = (1.0 / k as f64) / h;
                -p * p.ln()
            })
            .sum();
        assert!((oracle - 1.430558).abs() < 1e-6, "oracle {oracle}");
        assert!(
            (info.goal_entropy - oracle).abs() < 1e-12,
            "H(G) {}",
            info.goal_entropy
        );
        assert!((info.mutual_info - info.goal_entropy).abs() < 1e-6);
    }

    #[test]
    fn mutual_info_exactly_zero_for_single_orbit() {
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::CheapTalk,
            GoalKind::Zipfian,
        );
        let maps = ground_truth_mappings(&task);
        assert_eq!(orbits(&maps, 17).len(), 1);
        for seed in 0..3 {
            let joint = JointPolicy::init(&task, seed);
            let info = info_decomposition(&joint, &maps, &task);
            assert_eq!(info.mutual_info, 0.0);
        }
    }

    #[test]
    fn orbit_coarsening_cannot_increase_information() {
        // Data processing: I(G; orbit(A)) <= I(G; A).
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        let fine = MappingSet::identity(5, 17);
        let coarse = ground_truth_mappings(&task);
        for seed in 0..10 {
            let joint = JointPolicy::init(&task, seed);
            let fine_info = info_decomposition(&joint, &fine, &task);
            let coarse_info = info_decomposition(&joint, &coarse, &task);
            assert!(coarse_info.mutual_info <= fine_info.mutual_info + 1e-12);
        }
    }
}
