//! Tabular softmax sender/receiver policies and their derived quantities.
//!
//! The sender is a goals-by-actions logit table, the receiver an
//! actions-by-goals logit table; both are read out through a row softmax.
//! Composing the two gives the confusion matrix p(predicted goal | true
//! goal), whose expected diagonal mass is the communication accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GoalDistribution, TaskSpec};
use crate::mat::Mat;
use crate::rng::SeededRng;

/// Standard deviation of the Gaussian logit initialization: small enough to
/// keep initial policies near uniform, large enough to break symmetry.
pub const INIT_LOGIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    sender_logits: Mat,
    receiver_logits: Mat,
}

impl JointPolicy {
    /// Seeded Gaussian initialization; identical seeds give bit-identical
    /// policies.
    pub fn init(task: &TaskSpec, seed: u64) -> Self {
        Self::init_with_std(task, seed, INIT_LOGIT_STD)
    }

    /// Initialization with an explicit logit scale (sensitivity studies).
    pub fn init_with_std(task: &TaskSpec, seed: u64, std: f64) -> Self {
        let mut rng = SeededRng::new(seed);
        let (goals, actions) = (task.num_goals(), task.num_actions());
        let mut sender = Mat::zeros(goals, actions);
        let mut receiver = Mat::zeros(actions, goals);
        for g in 0..goals {
            rng.fill_gaussian(sender.row_mut(g), std);
        }
        for a in 0..actions {
            rng.fill_gaussian(receiver.row_mut(a), std);
        }
        JointPolicy {
            sender_logits: sender,
            receiver_logits: receiver,
        }
    }

    pub fn from_logits(sender_logits: Mat, receiver_logits: Mat) -> Result<Self> {
        if sender_logits.rows() != receiver_logits.cols()
            || sender_logits.cols() != receiver_logits.rows()
        {
            return Err(Error::DimensionMismatch(format!(
                "sender {:?} incompatible with receiver {:?}",
                sender_logits.shape(),
                receiver_logits.shape()
            )));
        }
        if !sender_logits.is_finite() || !receiver_logits.is_finite() {
            return Err(Error::invalid("policy logits must be finite"));
        }
        Ok(JointPolicy {
            sender_logits,
            receiver_logits,
        })
    }

    pub fn num_goals(&self) -> usize {
        self.sender_logits.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.sender_logits.cols()
    }

    pub fn sender_logits(&self) -> &Mat {
        &self.sender_logits
    }

    pub fn receiver_logits(&self) -> &Mat {
        &self.receiver_logits
    }

    pub fn sender_logits_mut(&mut self) -> &mut Mat {
        &mut self.sender_logits
    }

    pub fn receiver_logits_mut(&mut self) -> &mut Mat {
        &mut self.receiver_logits
    }

    /// Row-stochastic sender table pi1(a | g).
    pub fn sender_probs(&self) -> Mat {
        softmax_rows(&self.sender_logits).expect("finite by construction")
    }

    /// Row-stochastic receiver table pi2(g | a).
    pub fn receiver_probs(&self) -> Mat {
        softmax_rows(&self.receiver_logits).expect("finite by construction")
    }

    pub fn matches_task(&self, task: &TaskSpec) -> bool {
        self.num_goals() == task.num_goals() && self.num_actions() == task.num_actions()
    }
}

/// Numerically stable row softmax: exp(row - max(row)), normalized.
pub fn softmax_rows(logits: &Mat) -> Result<Mat> {
    if !logits.is_finite() {
        return Err(Error::invalid("softmax_rows: non-finite input"));
    }
    let mut out = Mat::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out_row = out.row_mut(r);
        let mut sum = 0.0;
        for (o, &z) in out_row.iter_mut().zip(row) {
            *o = (z - max).exp();
            sum += *o;
        }
        for o in out_row.iter_mut() {
            *o /= sum;
        }
    }
    Ok(out)
}

/// p(predicted goal | true goal) under the composed sender-receiver pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    entries: Mat,
}

impl ConfusionMatrix {
    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn get(&self, true_goal: usize, predicted: usize) -> f64 {
        self.entries.get(true_goal, predicted)
    }

    pub fn num_goals(&self) -> usize {
        self.entries.rows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.entries.rows())
            .map(|g| self.entries.get(g, g))
            .collect()
    }
}

/// entries[g, g_hat] = sum_a pi1(a | g) pi2(g_hat | a).
pub fn confusion(joint: &JointPolicy) -> ConfusionMatrix {
    let sender = joint.sender_probs();
    let receiver = joint.receiver_probs();
    ConfusionMatrix {
        entries: compose(&sender, &receiver),
    }
}

/// Confusion for a cross-play pairing: sender from one policy, receiver from
/// another trained on the same task.
pub fn confusion_pair(
    sender_of: &JointPolicy,
    receiver_of: &JointPolicy,
) -> Result<ConfusionMatrix> {
    if sender_of.num_goals() != receiver_of.num_goals()
        || sender_of.num_actions() != receiver_of.num_actions()
    {
        return Err(Error::DimensionMismatch(
            "cross-play policies differ in shape".into(),
        ));
    }
    let sender = sender_of.sender_probs();
    let receiver = receiver_of.receiver_probs();
    Ok(ConfusionMatrix {
        entries: compose(&sender, &receiver),
    })
}

fn compose(sender: &Mat, receiver: &Mat) -> Mat {
    let goals = sender.rows();
    let actions = sender.cols();
    Mat::from_fn(goals, goals, |g, ghat| {
        let mut sum = 0.0;
        for a in 0..actions {
            sum += sender.get(g, a) * receiver.get(a, ghat);
        }
        sum
    })
}

/// Expected diagonal confusion mass: sum_g p(g) p(ghat = g | g).
pub fn accuracy(joint: &JointPolicy, goal_dist: &GoalDistribution) -> f64 {
    let conf = confusion(joint);
    expected_diagonal(&conf, goal_dist)
}

/// Cross-play accuracy of sender_of's sender with receiver_of's receiver.
pub fn accuracy_pair(
    sender_of: &JointPolicy,
    receiver_of: &JointPolicy,
    goal_dist: &GoalDistribution,
) -> Result<f64> {
    let conf = confusion_pair(sender_of, receiver_of)?;
    Ok(expected_diagonal(&conf, goal_dist))
}

fn expected_diagonal(conf: &ConfusionMatrix, goal_dist: &GoalDistribution) -> f64 {
    goal_dist
        .probs()
        .iter()
        .enumerate()
        .map(|(g, &p)| p * conf.get(g, g))
        .sum()
}

/// Shannon entropy of a probability row, in nats.
pub fn row_entropy(row: &[f64]) -> f64 {
    -row.iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Backpropagate a probability-space gradient through a row softmax:
/// dL/dz[r,c] = s[r,c] * (dL/ds[r,c] - sum_j s[r,j] dL/ds[r,j]).
pub(crate) fn softmax_chain(probs: &Mat, d_probs: &Mat) -> Mat {
    let (rows, cols) = probs.shape();
    let mut out = Mat::zeros(rows, cols);
    for r in 0..rows {
        let s = probs.row(r);
        let d = d_probs.row(r);
        let mut inner = 0.0;
        for j in 0..cols {
            inner += s[j] * d[j];
        }
        let o = out.row_mut(r);
        for c in 0..cols {
            o[c] = s[c] * (d[c] - inner);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_task, zipf_distribution, Channel, GoalKind, TaskKind};

    fn deterministic_joint(n: usize) -> JointPolicy {
        // Sender g -> action g, receiver a -> goal a, via large logits.
        let big = 50.0;
        let sender = Mat::from_fn(n, n, |g, a| if g == a { big } else { 0.0 });
        let receiver = Mat::from_fn(n, n, |a, g| if a == g { big } else { 0.0 });
        JointPolicy::from_logits(sender, receiver).unwrap()
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let m = Mat::zeros(2, 2);
        let s = softmax_rows(&m).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((s.get(r, c) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_closed_form() {
        let m = Mat::from_rows(&[vec![0.0, 3f64.ln()]]);
        let s = softmax_rows(&m).unwrap();
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let m = Mat::from_rows(&[vec![f64::NAN, 0.0]]);
        assert!(softmax_rows(&m).is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let task = build_task(TaskKind::NoDegeneracy, Channel::Costly, GoalKind::Zipfian);
        let a = JointPolicy::init(&task, 7);
        let b = JointPolicy::init(&task, 7);
        let c = JointPolicy::init(&task, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_keeps_rows_near_uniform() {
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        let ln_a = (task.num_actions() as f64).ln();
        for seed in 0..20 {
            let joint = JointPolicy::init(&task, seed);
            let sender = joint.sender_probs();
            for g in 0..task.num_goals() {
                let h = row_entropy(sender.row(g));
                assert!(
                    (h - ln_a).abs() < 0.05,
                    "seed {seed} goal {g}: H={h} vs ln|A|={ln_a}"
                );
            }
        }
    }

    #[test]
    fn confusion_of_perfect_protocol_is_identity() {
        let joint = deterministic_joint(4);
        let conf = confusion(&joint);
        for g in 0..4 {
            for ghat in 0..4 {
                let expect = if g == ghat { 1.0 } else { 0.0 };
                assert!((conf.get(g, ghat) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn confusion_of_uniform_policies_is_uniform() {
        let sender = Mat::zeros(5, 7);
        let receiver = Mat::zeros(7, 5);
        let joint = JointPolicy::from_logits(sender, receiver).unwrap();
        let conf = confusion(&joint);
        for g in 0..5 {
            for ghat in 0..5 {
                assert!((conf.get(g, ghat) - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn confusion_matches_matrix_product() {
        // 2 goals, 2 actions: sender rows [[0.9,0.1],[0.2,0.8]], receiver identity.
        let sender = Mat::from_rows(&[
            vec![(0.9f64).ln(), (0.1f64).ln()],
            vec![(0.2f64).ln(), (0.8f64).ln()],
        ]);
        let receiver = Mat::from_rows(&[vec![50.0, 0.0], vec![0.0, 50.0]]);
        let joint = JointPolicy::from_logits(sender, receiver).unwrap();
        let conf = confusion(&joint);
        let expected = [[0.9, 0.1], [0.2, 0.8]];
        for g in 0..2 {
            for ghat in 0..2 {
                assert!((conf.get(g, ghat) - expected[g][ghat]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn accuracy_of_perfect_protocol() {
        let joint = deterministic_joint(5);
        let dist = zipf_distribution(5, 1.0).unwrap();
        assert!((accuracy(&joint, &dist) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn accuracy_of_constant_receiver_equals_top_mass() {
        // Receiver always predicts goal 0 regardless of action.
        let n = 5;
        let sender = Mat::zeros(n, n);
        let receiver = Mat::from_fn(n, n, |_, g| if g == 0 { 50.0 } else { 0.0 });
        let joint = JointPolicy::from_logits(sender, receiver).unwrap();
        let dist = zipf_distribution(5, 1.0).unwrap();
        let acc = accuracy(&joint, &dist);
        assert!((acc - dist.probs()[0]).abs() < 1e-9, "acc {acc}");
        assert!((acc - 0.438).abs() < 1e-3);
    }

    #[test]
    fn accuracy_of_uniform_joint_uniform_goals() {
        let sender = Mat::zeros(5, 17);
        let receiver = Mat::zeros(17, 5);
        let joint = JointPolicy::from_logits(sender, receiver).unwrap();
        let dist = GoalDistribution::uniform(5).unwrap();
        assert!((accuracy(&joint, &dist) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn confusion_rows_sum_to_one() {
        let task = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        for seed in 0..5 {
            let joint = JointPolicy::init(&task, seed);
            let conf = confusion(&joint);
            for g in 0..task.num_goals() {
                let sum: f64 = conf.entries().row(g).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }
}
