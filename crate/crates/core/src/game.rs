//! Referential-game task instances: goal distributions, action spaces, and
//! cost tables, plus the two benchmark tasks and their ablation variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability-vector normalization checks.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistKind {
    Zipfian { exponent: f64 },
    Uniform,
}

/// A fixed distribution over communicative goals. Goal identity is the rank
/// index: under a Zipfian distribution, goal 0 is the most frequent.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDistribution {
    probs: Vec<f64>,
    kind: DistKind,
}

impl GoalDistribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("goal distribution needs at least one goal"));
        }
        let p = 1.0 / n as f64;
        Ok(GoalDistribution {
            probs: vec![p; n],
            kind: DistKind::Uniform,
        })
    }

    /// Reconstruct from a serialized probability vector, re-validating the
    /// invariants for the claimed kind.
    pub fn from_probs(probs: Vec<f64>, kind: DistKind) -> Result<Self> {
        let dist = GoalDistribution { probs, kind };
        dist.validate()?;
        Ok(dist)
    }

    fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::invalid("empty goal distribution"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!(
                "goal probabilities sum to {sum}, not 1"
            )));
        }
        if self.probs.iter().any(|&p| p.is_nan() || p <= 0.0) {
            return Err(Error::invalid(
                "goal probabilities must be strictly positive",
            ));
        }
        if matches!(self.kind, DistKind::Zipfian { .. }) {
            let decreasing = self.probs.windows(2).all(|w| w[0] > w[1]);
            if !decreasing {
                return Err(Error::invalid(
                    "zipfian probabilities must strictly decrease in rank",
                ));
            }
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| p * p.ln()).sum::<f64>()
    }
}

/// probs[k] proportional to 1/(k+1)^exponent for zero-based rank k.
///
/// An exponent of zero collapses to the uniform distribution and is tagged
/// as such, since the strictly-decreasing rank invariant only applies to a
/// genuinely Zipfian vector.
pub fn zipf_distribution(n: usize, exponent: f64) -> Result<GoalDistribution> {
    if n == 0 {
        return Err(Error::invalid("zipf_distribution: n must be at least 1"));
    }
    if !exponent.is_finite() || exponent < 0.0 {
        return Err(Error::invalid(
            "zipf_distribution: exponent must be a non-negative real",
        ));
    }
    if exponent == 0.0 {
        return GoalDistribution::uniform(n);
    }
    let mut probs: Vec<f64> = (0..n)
        .map(|k| 1.0 / ((k + 1) as f64).powf(exponent))
        .collect();
    let norm: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= norm;
    }
    let dist = GoalDistribution {
        probs,
        kind: DistKind::Zipfian { exponent },
    };
    dist.validate()?;
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// 5 goals, 10 actions, every action has its own distinct cost.
    NoDegeneracy,
    /// 5 goals, 17 actions: one unique cheapest action plus four cost
    /// classes of four interchangeable actions each.
    EnergyDegeneracy,
    /// Hand-built task (tests, custom experiments).
    Custom,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::NoDegeneracy => "no_degeneracy",
            TaskKind::EnergyDegeneracy => "energy_degeneracy",
            TaskKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Costly,
    CheapTalk,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Costly => "costly",
            Channel::CheapTalk => "cheap_talk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Zipfian,
    Uniform,
}

impl GoalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GoalKind::Zipfian => "zipfian",
            GoalKind::Uniform => "uniform",
        }
    }
}

/// One referential-game instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskDoc", into = "TaskDoc")]
pub struct TaskSpec {
    kind: TaskKind,
    channel: Channel,
    goal_kind: GoalKind,
    goal_dist: GoalDistribution,
    costs: Vec<f64>,
}

impl TaskSpec {
    pub fn custom(goal_dist: GoalDistribution, costs: Vec<f64>, channel: Channel) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::invalid("task needs at least one action"));
        }
        if costs.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::invalid("costs must be finite and non-negative"));
        }
        if channel == Channel::CheapTalk && costs.iter().any(|&c| c != 0.0) {
            return Err(Error::invalid(
                "cheap_talk channel requires all costs to be zero",
            ));
        }
        let goal_kind = match goal_dist.kind() {
            DistKind::Zipfian { .. } => GoalKind::Zipfian,
            DistKind::Uniform => GoalKind::Uniform,
        };
        Ok(TaskSpec {
            kind: TaskKind::Custom,
            channel,
            goal_kind,
            goal_dist,
            costs,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn goal_kind(&self) -> GoalKind {
        self.goal_kind
    }

    pub fn goal_dist(&self) -> &GoalDistribution {
        &self.goal_dist
    }

    pub fn goal_probs(&self) -> &[f64] {
        self.goal_dist.probs()
    }

    pub fn num_goals(&self) -> usize {
        self.goal_dist.len()
    }

    pub fn num_actions(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Partition of action indices by equal cost, classes ordered by
    /// ascending cost, indices ascending within each class.
    pub fn cost_classes(&self) -> Vec<Vec<usize>> {
        let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
        for (a, &c) in self.costs.iter().enumerate() {
            match classes.iter_mut().find(|(cost, _)| *cost == c) {
                Some((_, members)) => members.push(a),
                None => classes.push((c, vec![a])),
            }
        }
        classes.sort_by(|a, b| a.0.total_cmp(&b.0));
        classes.into_iter().map(|(_, members)| members).collect()
    }

    /// Stable content hash of the serialized task, used to match policies
    /// and reports against the task they were produced on.
    pub fn fingerprint(&self) -> String {
        let doc = serde_json::to_string(self).expect("task serialization cannot fail");
        format!("{:016x}", fnv1a(doc.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Construct one of the benchmark tasks.
///
/// The no-degeneracy task assigns each of 10 actions its own cost equal to
/// its index; the energy-degeneracy task has 17 actions with cost multiset
/// {0} + {1,2,3,4} x 4. A cheap-talk channel overrides every cost to zero.
pub fn build_task(kind: TaskKind, channel: Channel, goal_kind: GoalKind) -> TaskSpec {
    let goal_dist = match goal_kind {
        GoalKind::Zipfian => zipf_distribution(5, 1.0).expect("static parameters"),
        GoalKind::Uniform => GoalDistribution::uniform(5).expect("static parameters"),
    };
    let mut costs: Vec<f64> = match kind {
        TaskKind::NoDegeneracy => (0..10).map(|a| a as f64).collect(),
        TaskKind::EnergyDegeneracy => {
            let mut v = vec![0.0];
            for level in 1..=4 {
                v.extend(std::iter::repeat_n(level as f64, 4));
            }
            v
        }
        TaskKind::Custom => panic!("build_task only constructs the benchmark tasks"),
    };
    if channel == Channel::CheapTalk {
        costs.iter_mut().for_each(|c| *c = 0.0);
    }
    TaskSpec {
        kind,
        channel,
        goal_kind,
        goal_dist,
        costs,
    }
}

/// Serialized form: flat document with explicit dimension keys.
#[derive(Serialize, Deserialize)]
struct TaskDoc {
    kind: TaskKind,
    channel: Channel,
    goal_kind: GoalKind,
    num_goals: usize,
    num_actions: usize,
    costs: Vec<f64>,
    goal_probs: Vec<f64>,
}

impl From<TaskSpec> for TaskDoc {
    fn from(t: TaskSpec) -> Self {
        TaskDoc {
            kind: t.kind,
            channel: t.channel,
            goal_kind: t.goal_kind,
            num_goals: t.num_goals(),
            num_actions: t.num_actions(),
            costs: t.costs,
            goal_probs: t.goal_dist.probs().to_vec(),
        }
    }
}

impl TryFrom<TaskDoc> for TaskSpec {
    type Error = Error;

    fn try_from(doc: TaskDoc) -> Result<Self> {
        if doc.num_goals != doc.goal_probs.len() {
            return Err(Error::invalid("num_goals does not match goal_probs length"));
        }
        if doc.num_actions != doc.costs.len() {
            return Err(Error::invalid("num_actions does not match costs length"));
        }
        let dist_kind = match doc.goal_kind {
            GoalKind::Uniform => DistKind::Uniform,
            GoalKind::Zipfian => {
                // The exponent is recoverable from adjacent ranks: p0/p1 = 2^s.
                let exponent = if doc.goal_probs.len() >= 2 {
                    (doc.goal_probs[0] / doc.goal_probs[1]).ln() / std::f64::consts::LN_2
                } else {
                    1.0
                };
                DistKind::Zipfian { exponent }
            }
        };
        let goal_dist = GoalDistribution::from_probs(doc.goal_probs, dist_kind)?;
        if doc.channel == Channel::CheapTalk && doc.costs.iter().any(|&c| c != 0.0) {
            return Err(Error::invalid(
                "cheap_talk channel requires all costs to be zero",
            ));
        }
        if doc.costs.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::invalid("costs must be finite and non-negative"));
        }
        Ok(TaskSpec {
            kind: doc.kind,
            channel: doc.channel,
            goal_kind: doc.goal_kind,
            goal_dist,
            costs: doc.costs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() < tol, "{a} vs {e}");
        }
    }

    #[test]
    fn zipf_five_goals_exponent_one() {
        // Oracle: normalize [1, 1/2, 1/3, 1/4, 1/5] by hand.
        let h: f64 = (1..=5).map(|k| 1.0 / k as f64).sum();
        let expected: Vec<f64> = (1..=5).map(|k| (1.0 / k as f64) / h).collect();
        let d = zipf_distribution(5, 1.0).unwrap();
        assert_close(d.probs(), &expected, 1e-15);
        assert_close(d.probs(), &[0.4380, 0.2190, 0.1460, 0.1095, 0.0876], 5e-5);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < PROB_SUM_TOL);
    }

    #[test]
    fn zipf_zero_exponent_is_uniform() {
        let d = zipf_distribution(5, 0.0).unwrap();
        assert_close(d.probs(), &[0.2; 5], 1e-15);
        assert_eq!(d.kind(), DistKind::Uniform);
    }

    #[test]
    fn zipf_single_goal() {
        let d = zipf_distribution(1, 1.0).unwrap();
        assert_eq!(d.probs(), &[1.0]);
    }

    #[test]
    fn zipf_rejects_zero_goals() {
        assert!(zipf_distribution(0, 1.0).is_err());
    }

    #[test]
    fn no_degeneracy_task_shape() {
        let t = build_task(TaskKind::NoDegeneracy, Channel::Costly, GoalKind::Zipfian);
        assert_eq!(t.num_goals(), 5);
        assert_eq!(t.num_actions(), 10);
        let mut distinct = t.costs().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 10);
        assert_eq!(
            t.costs(),
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );
    }

    #[test]
    fn energy_degeneracy_task_shape() {
        let t = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        assert_eq!(t.num_goals(), 5);
        assert_eq!(t.num_actions(), 17);
        let mut distinct = t.costs().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn cheap_talk_zeroes_costs() {
        let t = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::CheapTalk,
            GoalKind::Uniform,
        );
        assert_eq!(t.num_actions(), 17);
        assert!(t.costs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn cost_classes_partition() {
        let t1 = build_task(TaskKind::NoDegeneracy, Channel::Costly, GoalKind::Zipfian);
        let classes = t1.cost_classes();
        assert_eq!(classes.len(), 10);
        assert!(classes.iter().all(|c| c.len() == 1));

        let t2 = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        let classes = t2.cost_classes();
        let sizes: Vec<usize> = classes.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![1, 4, 4, 4, 4]);
        // Disjoint cover of the full index set.
        let mut all: Vec<usize> = classes.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..17).collect::<Vec<_>>());

        let tc = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::CheapTalk,
            GoalKind::Zipfian,
        );
        assert_eq!(tc.cost_classes(), vec![(0..17).collect::<Vec<_>>()]);
    }

    #[test]
    fn build_task_is_deterministic_serialized() {
        let a = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        let b = build_task(
            TaskKind::EnergyDegeneracy,
            Channel::Costly,
            GoalKind::Zipfian,
        );
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn task_roundtrip() {
        let t = build_task(TaskKind::NoDegeneracy, Channel::Costly, GoalKind::Zipfian);
        let json = serde_json::to_string(&t).unwrap();
        let back: TaskSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
        for key in [
            "kind",
            "channel",
            "goal_kind",
            "num_goals",
            "num_actions",
            "costs",
            "goal_probs",
        ] {
            assert!(json.contains(key), "missing key {key} in {json}");
        }
    }

    #[test]
    fn custom_rejects_costly_cheap_talk_mismatch() {
        let d = GoalDistribution::uniform(3).unwrap();
        assert!(TaskSpec::custom(d, vec![0.0, 1.0], Channel::CheapTalk).is_err());
    }
}
