//! Equivalence mappings between policies: representation, application,
//! the KL mapping loss, and gradient-based discovery hardened to exact
//! permutations.
//!
//! An equivalence map is a pair of permutations, one over goal indices
//! (sender observations and receiver predictions) and one over action
//! indices (sender outputs and receiver observations). A map is
//! environment-valid when it preserves action costs and goal probabilities;
//! under a Zipfian goal distribution every valid map fixes the goals.

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::game::{GoalDistribution, TaskSpec};
use crate::mat::Mat;
use crate::policy::{self, softmax_rows, JointPolicy};
use crate::rng::SeededRng;

/// Floor applied to target probabilities inside the KL logs.
pub const KL_PROB_FLOOR: f64 = 1e-12;

/// Default tolerance for the environmental validity check: benchmark costs
/// and goal masses are exact, so anything beyond float noise is a violation.
pub const DEFAULT_EQUIVALENCE_TOL: f64 = 1e-9;

/// Hard cap on [`MappingSet::closure`] growth.
pub const CLOSURE_CAP: usize = 4096;

/// Default scale of the random noise on relaxed mapping logits.
pub const DEFAULT_MAP_INIT_NOISE_STD: f64 = 0.01;

/// Default diagonal bias on relaxed mapping logits. Rows with little
/// trajectory weight receive only noise-level gradient signal, and hardening
/// them to an arbitrary column would almost always cross cost classes; the
/// bias breaks those ties toward the identity, which is always
/// cost-preserving. Rows with real signal override it, and the discrete
/// refinement pass corrects low-weight rows afterwards.
pub const DEFAULT_MAP_INIT_IDENTITY_BIAS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EquivalenceMap {
    obs_perm: Vec<usize>,
    act_perm: Vec<usize>,
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &i in perm {
        if i >= perm.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

impl EquivalenceMap {
    pub fn new(obs_perm: Vec<usize>, act_perm: Vec<usize>) -> Result<Self> {
        if !is_permutation(&obs_perm) {
            return Err(Error::invalid("obs_perm is not a bijection"));
        }
        if !is_permutation(&act_perm) {
            return Err(Error::invalid("act_perm is not a bijection"));
        }
        Ok(EquivalenceMap { obs_perm, act_perm })
    }

    pub fn identity(num_goals: usize, num_actions: usize) -> Self {
        EquivalenceMap {
            obs_perm: (0..num_goals).collect(),
            act_perm: (0..num_actions).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.obs_perm.iter().enumerate().all(|(i, &v)| i == v)
            && self.act_perm.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn num_goals(&self) -> usize {
        self.obs_perm.len()
    }

    pub fn num_actions(&self) -> usize {
        self.act_perm.len()
    }

    pub fn obs_perm(&self) -> &[usize] {
        &self.obs_perm
    }

    pub fn act_perm(&self) -> &[usize] {
        &self.act_perm
    }

    pub fn inverse(&self) -> Self {
        let mut obs = vec![0; self.obs_perm.len()];
        let mut act = vec![0; self.act_perm.len()];
        for (i, &v) in self.obs_perm.iter().enumerate() {
            obs[v] = i;
        }
        for (i, &v) in self.act_perm.iter().enumerate() {
            act[v] = i;
        }
        EquivalenceMap {
            obs_perm: obs,
            act_perm: act,
        }
    }

    /// self followed by other: (other . self)(x) = other(self(x)).
    pub fn compose(&self, other: &Self) -> Self {
        EquivalenceMap {
            obs_perm: self.obs_perm.iter().map(|&g| other.obs_perm[g]).collect(),
            act_perm: self.act_perm.iter().map(|&a| other.act_perm[a]).collect(),
        }
    }
}

/// Relabel a joint policy by an equivalence map, at the logit level:
/// sender'[obs(g), act(a)] = sender[g, a] and
/// receiver'[act(a), obs(g)] = receiver[a, g].
///
/// Goals appear on both the sender input axis and the receiver output axis,
/// and the relabeling moves both, so accuracy under the permuted goal
/// distribution is exactly preserved.
pub fn apply_map(map: &EquivalenceMap, joint: &JointPolicy) -> Result<JointPolicy> {
    if map.num_goals() != joint.num_goals() || map.num_actions() != joint.num_actions() {
        return Err(Error::DimensionMismatch(format!(
            "map ({} goals, {} actions) does not fit policy ({} goals, {} actions)",
            map.num_goals(),
            map.num_actions(),
            joint.num_goals(),
            joint.num_actions()
        )));
    }
    let goals = joint.num_goals();
    let actions = joint.num_actions();
    let mut sender = Mat::zeros(goals, actions);
    let mut receiver = Mat::zeros(actions, goals);
    for g in 0..goals {
        for a in 0..actions {
            sender.set(
                map.obs_perm[g],
                map.act_perm[a],
                joint.sender_logits().get(g, a),
            );
            receiver.set(
                map.act_perm[a],
                map.obs_perm[g],
                joint.receiver_logits().get(a, g),
            );
        }
    }
    JointPolicy::from_logits(sender, receiver)
}

/// True iff the map preserves action costs and goal probabilities within
/// `tol`.
pub fn is_equivalence(map: &EquivalenceMap, task: &TaskSpec, tol: f64) -> bool {
    if map.num_goals() != task.num_goals() || map.num_actions() != task.num_actions() {
        return false;
    }
    let costs = task.costs();
    for (a, &ma) in map.act_perm.iter().enumerate() {
        if (costs[ma] - costs[a]).abs() > tol {
            return false;
        }
    }
    let probs = task.goal_probs();
    for (g, &mg) in map.obs_perm.iter().enumerate() {
        if (probs[mg] - probs[g]).abs() > tol {
            return false;
        }
    }
    true
}

/// The working set of equivalence maps, ordered, deduplicated, and always
/// containing the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<EquivalenceMap>", into = "Vec<EquivalenceMap>")]
pub struct MappingSet {
    maps: Vec<EquivalenceMap>,
}

impl MappingSet {
    pub fn identity(num_goals: usize, num_actions: usize) -> Self {
        MappingSet {
            maps: vec![EquivalenceMap::identity(num_goals, num_actions)],
        }
    }

    pub fn from_maps(maps: Vec<EquivalenceMap>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::invalid("mapping set must contain the identity"));
        };
        let (goals, actions) = (first.num_goals(), first.num_actions());
        let mut set = MappingSet::identity(goals, actions);
        for map in maps {
            if map.num_goals() != goals || map.num_actions() != actions {
                return Err(Error::DimensionMismatch(
                    "mixed map dimensions in set".into(),
                ));
            }
            set.insert(map);
        }
        Ok(set)
    }

    /// Returns true if the map was new.
    pub fn insert(&mut self, map: EquivalenceMap) -> bool {
        if self.maps.contains(&map) {
            false
        } else {
            self.maps.push(map);
            true
        }
    }

    pub fn contains(&self, map: &EquivalenceMap) -> bool {
        self.maps.contains(map)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EquivalenceMap> {
        self.maps.iter()
    }

    pub fn maps(&self) -> &[EquivalenceMap] {
        &self.maps
    }

    /// Close the set under composition (for permutations this yields the
    /// generated group, which is also closed under inversion). Errors if the
    /// group would exceed [`CLOSURE_CAP`] elements.
    pub fn closure(&self) -> Result<MappingSet> {
        let mut closed = self.maps.clone();
        let mut frontier = self.maps.clone();
        while let Some(map) = frontier.pop() {
            for gen in &self.maps {
                let composed = map.compose(gen);
                if !closed.contains(&composed) {
                    if closed.len() >= CLOSURE_CAP {
                        return Err(Error::invalid(format!(
                            "mapping-set closure exceeds cap of {CLOSURE_CAP}"
                        )));
                    }
                    closed.push(composed.clone());
                    frontier.push(composed);
                }
            }
        }
        Ok(MappingSet { maps: closed })
    }

    #[doc(hidden)]
    pub fn empty_for_test() -> Self {
        MappingSet { maps: Vec::new() }
    }
}

impl TryFrom<Vec<EquivalenceMap>> for MappingSet {
    type Error = Error;

    fn try_from(maps: Vec<EquivalenceMap>) -> Result<Self> {
        let set = MappingSet::from_maps(maps)?;
        Ok(set)
    }
}

impl From<MappingSet> for Vec<EquivalenceMap> {
    fn from(set: MappingSet) -> Self {
        set.maps
    }
}

/// All transpositions within each cost class, plus the identity: the
/// analytic ground-truth symmetries of a task.
pub fn ground_truth_mappings(task: &TaskSpec) -> MappingSet {
    let mut set = MappingSet::identity(task.num_goals(), task.num_actions());
    let obs: Vec<usize> = (0..task.num_goals()).collect();
    for class in task.cost_classes() {
        for i in 0..class.len() {
            for j in (i + 1)..class.len() {
                let mut act: Vec<usize> = (0..task.num_actions()).collect();
                act.swap(class[i], class[j]);
                set.insert(EquivalenceMap::new(obs.clone(), act).expect("transposition"));
            }
        }
    }
    set
}

/// Expected KL divergence between a source policy and a target policy viewed
/// through an equivalence map, weighted by the source's own trajectory
/// distribution:
///
/// sum_g p(g) KL(source_sender(.|g) || target_sender(act(.) | obs(g)))
/// + sum_a q(a) KL(source_receiver(.|a) || target_receiver(obs(.) | act(a)))
///
/// where q is the source-induced action marginal. Target probabilities are
/// floored at [`KL_PROB_FLOOR`] inside the logs.
pub fn mapping_kl(
    source: &JointPolicy,
    target: &JointPolicy,
    map: &EquivalenceMap,
    goal_dist: &GoalDistribution,
) -> Result<f64> {
    if source.num_goals() != target.num_goals()
        || source.num_actions() != target.num_actions()
        || map.num_goals() != source.num_goals()
        || map.num_actions() != source.num_actions()
        || goal_dist.len() != source.num_goals()
    {
        return Err(Error::DimensionMismatch(
            "mapping_kl: inconsistent dimensions".into(),
        ));
    }
    let goals = source.num_goals();
    let actions = source.num_actions();
    let p = goal_dist.probs();
    let s_sender = source.sender_probs();
    let s_receiver = source.receiver_probs();
    let t_sender = target.sender_probs();
    let t_receiver = target.receiver_probs();

    let mut total = 0.0;
    for g in 0..goals {
        let src = s_sender.row(g);
        let tgt = t_sender.row(map.obs_perm[g]);
        let mut kl = 0.0;
        for a in 0..actions {
            if src[a] > 0.0 {
                kl += src[a] * (src[a].ln() - tgt[map.act_perm[a]].max(KL_PROB_FLOOR).ln());
            }
        }
        total += p[g] * kl;
    }

    let mut marginal = vec![0.0; actions];
    for g in 0..goals {
        let row = s_sender.row(g);
        for a in 0..actions {
            marginal[a] += p[g] * row[a];
        }
    }
    for a in 0..actions {
        let src = s_receiver.row(a);
        let tgt = t_receiver.row(map.act_perm[a]);
        let mut kl = 0.0;
        for g in 0..goals {
            if src[g] > 0.0 {
                kl += src[g] * (src[g].ln() - tgt[map.obs_perm[g]].max(KL_PROB_FLOOR).ln());
            }
        }
        total += marginal[a] * kl;
    }
    Ok(total)
}

/// Relaxed counterpart of [`mapping_kl`]: the permutations are replaced by
/// row-stochastic matrices, and the target distributions are blended
/// accordingly. Reduces to the hard loss when the matrices are exact
/// permutation matrices.
pub fn mapping_kl_relaxed(
    source: &JointPolicy,
    target: &JointPolicy,
    obs_weights: &Mat,
    act_weights: &Mat,
    goal_dist: &GoalDistribution,
) -> f64 {
    relaxed_eval(source, target, obs_weights, act_weights, goal_dist, false).0
}

/// Loss and, optionally, gradients with respect to the relaxed weight
/// matrices themselves (probability space).
fn relaxed_eval(
    source: &JointPolicy,
    target: &JointPolicy,
    obs_w: &Mat,
    act_w: &Mat,
    goal_dist: &GoalDistribution,
    want_grads: bool,
) -> (f64, Option<(Mat, Mat)>) {
    let goals = source.num_goals();
    let actions = source.num_actions();
    let p = goal_dist.probs();
    let s_sender = source.sender_probs();
    let s_receiver = source.receiver_probs();
    let t_sender = target.sender_probs();
    let t_receiver = target.receiver_probs();

    let mut marginal = vec![0.0; actions];
    for g in 0..goals {
        let row = s_sender.row(g);
        for a in 0..actions {
            marginal[a] += p[g] * row[a];
        }
    }

    // act_blend_sender[g', a] = sum_a' act_w[a, a'] t_sender[g', a'].
    let mut act_blend_sender = Mat::zeros(goals, actions);
    for gp in 0..goals {
        let t_row = t_sender.row(gp);
        for a in 0..actions {
            let w_row = act_w.row(a);
            let mut sum = 0.0;
            for ap in 0..actions {
                sum += w_row[ap] * t_row[ap];
            }
            act_blend_sender.set(gp, a, sum);
        }
    }
    // blended_sender[g, a] = sum_g' obs_w[g, g'] act_blend_sender[g', a].
    let mut blended_sender = Mat::zeros(goals, actions);
    for g in 0..goals {
        let w_row = obs_w.row(g);
        for a in 0..actions {
            let mut sum = 0.0;
            for gp in 0..goals {
                sum += w_row[gp] * act_blend_sender.get(gp, a);
            }
            blended_sender.set(g, a, sum);
        }
    }

    // act_blend_receiver[a, g'] = sum_a' act_w[a, a'] t_receiver[a', g'].
    let mut act_blend_receiver = Mat::zeros(actions, goals);
    for a in 0..actions {
        let w_row = act_w.row(a);
        for gp in 0..goals {
            let mut sum = 0.0;
            for ap in 0..actions {
                sum += w_row[ap] * t_receiver.get(ap, gp);
            }
            act_blend_receiver.set(a, gp, sum);
        }
    }
    // blended_receiver[a, g] = sum_g' obs_w[g, g'] act_blend_receiver[a, g'].
    let mut blended_receiver = Mat::zeros(actions, goals);
    for a in 0..actions {
        for g in 0..goals {
            let w_row = obs_w.row(g);
            let mut sum = 0.0;
            for gp in 0..goals {
                sum += w_row[gp] * act_blend_receiver.get(a, gp);
            }
            blended_receiver.set(a, g, sum);
        }
    }

    let mut loss = 0.0;
    for g in 0..goals {
        let src = s_sender.row(g);
        let mut kl = 0.0;
        for a in 0..actions {
            if src[a] > 0.0 {
                kl += src[a] * (src[a].ln() - blended_sender.get(g, a).max(KL_PROB_FLOOR).ln());
            }
        }
        loss += p[g] * kl;
    }
    for a in 0..actions {
        let src = s_receiver.row(a);
        let mut kl = 0.0;
        for g in 0..goals {
            if src[g] > 0.0 {
                kl += src[g] * (src[g].ln() - blended_receiver.get(a, g).max(KL_PROB_FLOOR).ln());
            }
        }
        loss += marginal[a] * kl;
    }

    if !want_grads {
        return (loss, None);
    }

    // d loss / d blended (only where the floor is inactive).
    let mut d_blend_sender = Mat::zeros(goals, actions);
    for g in 0..goals {
        let src = s_sender.row(g);
        for a in 0..actions {
            let b = blended_sender.get(g, a);
            if b >= KL_PROB_FLOOR && src[a] > 0.0 {
                d_blend_sender.set(g, a, -p[g] * src[a] / b);
            }
        }
    }
    let mut d_blend_receiver = Mat::zeros(actions, goals);
    for a in 0..actions {
        let src = s_receiver.row(a);
        for g in 0..goals {
            let b = blended_receiver.get(a, g);
            if b >= KL_PROB_FLOOR && src[g] > 0.0 {
                d_blend_receiver.set(a, g, -marginal[a] * src[g] / b);
            }
        }
    }

    // obs_blend_sender[g, a'] = sum_g' obs_w[g, g'] t_sender[g', a'].
    let mut obs_blend_sender = Mat::zeros(goals, actions);
    for g in 0..goals {
        let w_row = obs_w.row(g);
        for ap in 0..actions {
            let mut sum = 0.0;
            for gp in 0..goals {
                sum += w_row[gp] * t_sender.get(gp, ap);
            }
            obs_blend_sender.set(g, ap, sum);
        }
    }
    // obs_blend_receiver[a', g] = sum_g' obs_w[g, g'] t_receiver[a', g'].
    let mut obs_blend_receiver = Mat::zeros(actions, goals);
    for ap in 0..actions {
        for g in 0..goals {
            let w_row = obs_w.row(g);
            let mut sum = 0.0;
            for gp in 0..goals {
                sum += w_row[gp] * t_receiver.get(ap, gp);
            }
            obs_blend_receiver.set(ap, g, sum);
        }
    }

    let mut d_obs = Mat::zeros(goals, goals);
    for g in 0..goals {
        for gp in 0..goals {
            let mut sum = 0.0;
            for a in 0..actions {
                sum += d_blend_sender.get(g, a) * act_blend_sender.get(gp, a);
            }
            for a in 0..actions {
                sum += d_blend_receiver.get(a, g) * act_blend_receiver.get(a, gp);
            }
            d_obs.set(g, gp, sum);
        }
    }

    let mut d_act = Mat::zeros(actions, actions);
    for a in 0..actions {
        for ap in 0..actions {
            let mut sum = 0.0;
            for g in 0..goals {
                sum += d_blend_sender.get(g, a) * obs_blend_sender.get(g, ap);
            }
            for g in 0..goals {
                sum += d_blend_receiver.get(a, g) * obs_blend_receiver.get(ap, g);
            }
            d_act.set(a, ap, sum);
        }
    }

    (loss, Some((d_obs, d_act)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingLearnConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Acceptance threshold (nats) on the hardened KL loss.
    pub accept_threshold: f64,
    /// Initialization noise scale for the relaxed logits.
    pub init_noise_std: f64,
    /// Initialization identity bias for the relaxed logits.
    pub init_identity_bias: f64,
    pub seed: u64,
}

impl Default for MappingLearnConfig {
    fn default() -> Self {
        MappingLearnConfig {
            steps: 2000,
            learning_rate: 0.2,
            accept_threshold: 1e-2,
            init_noise_std: DEFAULT_MAP_INIT_NOISE_STD,
            init_identity_bias: DEFAULT_MAP_INIT_IDENTITY_BIAS,
            seed: 0,
        }
    }
}

impl MappingLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("mapping learning needs at least one step"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("mapping learning_rate must be positive"));
        }
        if self.accept_threshold.is_nan() || self.accept_threshold <= 0.0 {
            return Err(Error::invalid("accept_threshold must be positive"));
        }
        if self.init_noise_std < 0.0 || !self.init_noise_std.is_finite() {
            return Err(Error::invalid("init_noise_std must be non-negative"));
        }
        if !self.init_identity_bias.is_finite() {
            return Err(Error::invalid("init_identity_bias must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearnedMapping {
    pub map: EquivalenceMap,
    /// KL loss of the hardened map.
    pub hard_loss: f64,
    /// True iff hard_loss < accept_threshold and the map is environment-valid.
    pub accepted: bool,
    /// True iff the hardened map preserved costs and goal masses; a map with
    /// low KL but failed validity is an anomaly worth logging upstream.
    pub environment_valid: bool,
}

/// Learn an equivalence map aligning `target` to `source` by gradient
/// descent on the relaxed KL loss, then harden each relaxed matrix to an
/// exact permutation by maximum-weight assignment on its log-probabilities.
pub fn learn_mapping(
    source: &JointPolicy,
    target: &JointPolicy,
    task: &TaskSpec,
    cfg: &MappingLearnConfig,
) -> Result<LearnedMapping> {
    cfg.validate()?;
    if !source.matches_task(task) || !target.matches_task(task) {
        return Err(Error::DimensionMismatch(
            "policies do not match task".into(),
        ));
    }
    let goals = task.num_goals();
    let actions = task.num_actions();
    let dist = task.goal_dist();

    let mut rng = SeededRng::new(cfg.seed);
    let mut obs_logits = Mat::from_fn(goals, goals, |i, j| {
        let bias = if i == j { cfg.init_identity_bias } else { 0.0 };
        bias + cfg.init_noise_std * rng.next_gaussian()
    });
    let mut act_logits = Mat::from_fn(actions, actions, |i, j| {
        let bias = if i == j { cfg.init_identity_bias } else { 0.0 };
        bias + cfg.init_noise_std * rng.next_gaussian()
    });

    for _ in 0..cfg.steps {
        let obs_probs = softmax_rows(&obs_logits)?;
        let act_probs = softmax_rows(&act_logits)?;
        let (_, grads) = relaxed_eval(source, target, &obs_probs, &act_probs, dist, true);
        let (d_obs, d_act) = grads.expect("grads requested");
        let d_obs_logits = policy::softmax_chain(&obs_probs, &d_obs);
        let d_act_logits = policy::softmax_chain(&act_probs, &d_act);
        obs_logits.scaled_add(-cfg.learning_rate, &d_obs_logits);
        act_logits.scaled_add(-cfg.learning_rate, &d_act_logits);
    }

    let obs_perm = harden(&obs_logits)?;
    let act_perm = harden(&act_logits)?;
    let mut map = EquivalenceMap::new(obs_perm, act_perm)
        .map_err(|e| Error::Internal(format!("hardening produced a non-bijection: {e}")))?;

    let mut hard_loss = mapping_kl(source, target, &map, dist)?;
    refine_map(&mut map, &mut hard_loss, source, target, task);
    let environment_valid = is_equivalence(&map, task, DEFAULT_EQUIVALENCE_TOL);
    let accepted = hard_loss < cfg.accept_threshold && environment_valid;
    Ok(LearnedMapping {
        map,
        hard_loss,
        accepted,
        environment_valid,
    })
}

/// Discrete refinement of a hardened map toward the KL-optimal
/// environment-valid permutation pair.
///
/// With one component fixed, the hard KL loss decomposes into independent
/// per-index contributions, so the other component can be re-solved exactly
/// as an assignment problem. The refinement alternates the two assignments
/// until a fixpoint, restricting images to cost-preserving actions and
/// probability-preserving goals: the result is always environment-valid, and
/// low-trajectory-weight rows (which carry almost no relaxed-gradient
/// signal) land on their KL-optimal valid images instead of noise.
fn refine_map(
    map: &mut EquivalenceMap,
    hard_loss: &mut f64,
    source: &JointPolicy,
    target: &JointPolicy,
    task: &TaskSpec,
) {
    let goals = task.num_goals();
    let actions = task.num_actions();
    let p = task.goal_probs();
    let costs = task.costs();
    let s_sender = source.sender_probs();
    let s_receiver = source.receiver_probs();
    let t_sender = target.sender_probs();
    let t_receiver = target.receiver_probs();

    let mut marginal = vec![0.0; actions];
    for g in 0..goals {
        let row = s_sender.row(g);
        for a in 0..actions {
            marginal[a] += p[g] * row[a];
        }
    }

    // Large but finite penalty; a cost-preserving completion always exists
    // (the identity is one), so penalized images are never forced.
    const FORBIDDEN: f64 = 1e12;

    for _ in 0..64 {
        // Re-solve act_perm given obs_perm. weight[a][b] = negated loss
        // contribution of mapping action a to image b.
        let act_weights = Mat::from_fn(actions, actions, |a, b| {
            if (costs[b] - costs[a]).abs() > DEFAULT_EQUIVALENCE_TOL {
                return -FORBIDDEN;
            }
            let mut contribution = 0.0;
            for g in 0..goals {
                let s = s_sender.get(g, a);
                if s > 0.0 {
                    contribution += p[g]
                        * s
                        * (s.ln() - t_sender.get(map.obs_perm[g], b).max(KL_PROB_FLOOR).ln());
                }
            }
            let r_row = s_receiver.row(a);
            let mut receiver_kl = 0.0;
            for g in 0..goals {
                if r_row[g] > 0.0 {
                    receiver_kl += r_row[g]
                        * (r_row[g].ln()
                            - t_receiver.get(b, map.obs_perm[g]).max(KL_PROB_FLOOR).ln());
                }
            }
            -(contribution + marginal[a] * receiver_kl)
        });
        let new_act = max_weight_assignment(&act_weights);

        // Re-solve obs_perm given the new act_perm.
        let obs_weights = Mat::from_fn(goals, goals, |g, h| {
            if (p[h] - p[g]).abs() > DEFAULT_EQUIVALENCE_TOL {
                return -FORBIDDEN;
            }
            let mut contribution = 0.0;
            let s_row = s_sender.row(g);
            for a in 0..actions {
                if s_row[a] > 0.0 {
                    contribution += p[g]
                        * s_row[a]
                        * (s_row[a].ln() - t_sender.get(h, new_act[a]).max(KL_PROB_FLOOR).ln());
                }
            }
            for a in 0..actions {
                let r = s_receiver.get(a, g);
                if r > 0.0 {
                    contribution += marginal[a]
                        * r
                        * (r.ln() - t_receiver.get(new_act[a], h).max(KL_PROB_FLOOR).ln());
                }
            }
            -contribution
        });
        let new_obs = max_weight_assignment(&obs_weights);

        let unchanged = new_act == map.act_perm && new_obs == map.obs_perm;
        map.act_perm = new_act;
        map.obs_perm = new_obs;
        if unchanged {
            break;
        }
    }
    *hard_loss = mapping_kl(source, target, map, task.goal_dist()).expect("dims fixed");
}

/// Maximum-weight assignment on the log-probabilities of a relaxed matrix.
fn harden(logits: &Mat) -> Result<Vec<usize>> {
    let probs = softmax_rows(logits)?;
    let log_probs = Mat::from_fn(probs.rows(), probs.cols(), |i, j| {
        probs.get(i, j).max(1e-300).ln()
    });
    let assignment = max_weight_assignment(&log_probs);
    if !is_permutation(&assignment) {
        return Err(Error::Internal(
            "assignment returned a non-bijection".into(),
        ));
    }
    Ok(assignment)
}
