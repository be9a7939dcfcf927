//! Contextual-bandit learners under epsilon-greedy exploration.
//!
//! * [`EmtCb`] answers with the value of the memory an [`Emt`] retrieves for
//!   each `(context, action)` key.
//! * [`ParametricCb`] is a hashed linear regressor over first- and
//!   second-order context features, one weight block per action, trained with
//!   per-weight adaptive SGD on the squared loss.
//! * [`PemtCb`] stacks the two: the tree's per-action prediction is appended
//!   to the parametric features as one extra input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::scorer::ScorerConfig;
use crate::tree::{Emt, TreeConfig};

/// A learner that picks one of `actions()` actions for a context and is then
/// told the reward of that action only.
pub trait Learner {
    fn actions(&self) -> usize;

    fn predict(&mut self, context: &[f64]) -> Result<usize>;

    fn learn(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()>;
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn actions(&self) -> usize {
        (**self).actions()
    }

    fn predict(&mut self, context: &[f64]) -> Result<usize> {
        (**self).predict(context)
    }

    fn learn(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        (**self).learn(context, action, reward)
    }
}

fn check_actions(actions: usize) -> Result<()> {
    if actions < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 actions, got {actions}")));
    }
    Ok(())
}

fn check_action(action: usize, actions: usize) -> Result<()> {
    if action < actions {
        Ok(())
    } else {
        Err(Error::ActionOutOfRange { action, actions })
    }
}

/// Encodes a `(context, action)` pair as the context followed by a one-hot
/// action block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyEncoder {
    context_dim: usize,
    actions: usize,
}

impl KeyEncoder {
    pub fn new(context_dim: usize, actions: usize) -> Result<Self> {
        check_actions(actions)?;
        Ok(KeyEncoder { context_dim, actions })
    }

    pub fn key_dim(&self) -> usize {
        self.context_dim + self.actions
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn encode(&self, context: &[f64], action: usize) -> Result<Vec<f64>> {
        let mut key = Vec::with_capacity(self.key_dim());
        self.encode_into(context, action, &mut key)?;
        Ok(key)
    }

    pub fn encode_into(&self, context: &[f64], action: usize, key: &mut Vec<f64>) -> Result<()> {
        check_dim(self.context_dim, context.len())?;
        check_action(action, self.actions)?;
        key.clear();
        key.extend_from_slice(context);
        key.extend((0..self.actions).map(|a| if a == action { 1.0 } else { 0.0 }));
        Ok(())
    }
}

/// Index of the largest estimate, lowest index on ties.
pub fn argmax(estimates: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in estimates.iter().enumerate().skip(1) {
        if e > estimates[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct EpsilonGreedy {
    epsilon: f64,
    rng: ChaCha8Rng,
    decisions: u64,
    explored: u64,
}

impl EpsilonGreedy {
    pub fn new(epsilon: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(EpsilonGreedy {
            epsilon,
            rng,
            decisions: 0,
            explored: 0,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Starts a decision: with probability epsilon returns a uniformly random
    /// action, otherwise `None` and the caller should act greedily.
    pub fn explore(&mut self, actions: usize) -> Option<usize> {
        self.decisions += 1;
        if self.rng.random::<f64>() < self.epsilon {
            self.explored += 1;
            Some(self.rng.random_range(0..actions))
        } else {
            None
        }
    }

    pub fn select(&mut self, estimates: &[f64]) -> usize {
        self.explore(estimates.len()).unwrap_or_else(|| argmax(estimates))
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    /// How many decisions took the uniform branch.
    pub fn explored(&self) -> u64 {
        self.explored
    }
}

/// Per-action reward estimates from a tree; an empty leaf counts as 0.
fn tree_estimates(tree: &mut Emt, encoder: &KeyEncoder, context: &[f64], key: &mut Vec<f64>) -> Result<Vec<f64>> {
    (0..encoder.actions())
        .map(|a| {
            encoder.encode_into(context, a, key)?;
            Ok(tree.query(key)?.map_or(0.0, |r| r.value))
        })
        .collect()
}

/// Epsilon-greedy over memory-tree reward estimates.
#[derive(Clone, Debug)]
pub struct EmtCb {
    tree: Emt,
    encoder: KeyEncoder,
    policy: EpsilonGreedy,
    key: Vec<f64>,
}

impl EmtCb {
    pub fn new(
        context_dim: usize,
        actions: usize,
        tree: TreeConfig,
        scorer: ScorerConfig,
        policy: EpsilonGreedy,
    ) -> Result<Self> {
        let encoder = KeyEncoder::new(context_dim, actions)?;
        let tree = Emt::new(encoder.key_dim(), tree, scorer)?;
        Ok(EmtCb {
            tree,
            encoder,
            policy,
            key: Vec::new(),
        })
    }

    pub fn tree(&self) -> &Emt {
        &self.tree
    }

    pub fn policy(&self) -> &EpsilonGreedy {
        &self.policy
    }

    pub fn encoder(&self) -> &KeyEncoder {
        &self.encoder
    }

    pub fn estimates(&mut self, context: &[f64]) -> Result<Vec<f64>> {
        tree_estimates(&mut self.tree, &self.encoder, context, &mut self.key)
    }
}

impl Learner for EmtCb {
    fn actions(&self) -> usize {
        self.encoder.actions()
    }

    fn predict(&mut self, context: &[f64]) -> Result<usize> {
        check_dim(self.encoder.context_dim(), context.len())?;
        // the tree is only consulted on greedy rounds
        match self.policy.explore(self.actions()) {
            Some(a) => Ok(a),
            None => Ok(argmax(&self.estimates(context)?)),
        }
    }

    fn learn(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        self.encoder.encode_into(context, action, &mut self.key)?;
        self.tree.learn(&self.key, reward)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParametricConfig {
    /// log2 of the weight-table size.
    pub hash_bits: u32,
    pub learning_rate: f64,
    /// Include all pairwise products `x_i * x_j`, `i <= j`.
    pub quadratic: bool,
}

impl Default for ParametricConfig {
    fn default() -> Self {
        ParametricConfig {
            hash_bits: 18,
            learning_rate: 0.5,
            quadratic: true,
        }
    }
}

impl ParametricConfig {
    pub fn validate(&self, actions: usize) -> Result<()> {
        let action_bits = action_bits(actions);
        if self.hash_bits > 30 || self.hash_bits <= action_bits {
            return Err(Error::InvalidConfig(format!(
                "hash bits must lie in ({action_bits}, 30] for {actions} actions, got {}",
                self.hash_bits
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

fn action_bits(actions: usize) -> u32 {
    actions.next_power_of_two().trailing_zeros()
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashed linear reward model with one table block per action.
///
/// Features of `(x, a)` are a bias, each `x_i`, each `x_i * x_j` for `i <= j`
/// (when quadratic), and a fixed number of caller-supplied extra features.
/// Each feature id is hashed into the block of action `a`, so different
/// actions never share weights.
#[derive(Clone, Debug)]
pub struct ParametricModel {
    context_dim: usize,
    actions: usize,
    extras: usize,
    config: ParametricConfig,
    block_bits: u32,
    weights: Vec<f64>,
    accumulators: Vec<f64>,
    features: Vec<(usize, f64)>,
}

impl ParametricModel {
    pub fn new(context_dim: usize, actions: usize, extras: usize, config: ParametricConfig) -> Result<Self> {
        check_actions(actions)?;
        config.validate(actions)?;
        let size = 1usize << config.hash_bits;
        Ok(ParametricModel {
            context_dim,
            actions,
            extras,
            config,
            block_bits: config.hash_bits - action_bits(actions),
            weights: vec![0.0; size],
            accumulators: vec![0.0; size],
            features: Vec::new(),
        })
    }

    pub fn table_size(&self) -> usize {
        self.weights.len()
    }

    pub fn extras(&self) -> usize {
        self.extras
    }

    /// Number of features per `(x, a)`, counting zero-valued ones.
    pub fn feature_count(&self) -> usize {
        let d = self.context_dim;
        let quad = if self.config.quadratic { d * (d + 1) / 2 } else { 0 };
        1 + d + quad + self.extras
    }

    fn slot(&self, feature: u64, action: usize) -> usize {
        let mask = (1u64 << self.block_bits) - 1;
        (action << self.block_bits) | (mix(feature) & mask) as usize
    }

    pub fn bias_slot(&self, action: usize) -> usize {
        self.slot(0, action)
    }

    /// Slot of extra feature `index` for `action`.
    pub fn extra_slot(&self, index: usize, action: usize) -> usize {
        let d = self.context_dim as u64;
        let base = 1 + d + if self.config.quadratic { d * (d + 1) / 2 } else { 0 };
        self.slot(base + index as u64, action)
    }

    pub fn weight(&self, slot: usize) -> f64 {
        self.weights[slot]
    }

    pub fn set_weight(&mut self, slot: usize, value: f64) {
        self.weights[slot] = value;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_input(&self, context: &[f64], action: usize, extras: &[f64]) -> Result<()> {
        check_dim(self.context_dim, context.len())?;
        check_dim(self.extras, extras.len())?;
        check_action(action, self.actions)?;
        check_finite(context, "context")?;
        check_finite(extras, "extra features")
    }

    /// Fills `self.features` with the non-zero `(slot, value)` pairs.
    fn featurize(&mut self, context: &[f64], action: usize, extras: &[f64]) {
        let mut features = std::mem::take(&mut self.features);
        features.clear();
        features.push((self.slot(0, action), 1.0));
        let d = self.context_dim as u64;
        for (i, &x) in context.iter().enumerate() {
            if x != 0.0 {
                features.push((self.slot(1 + i as u64, action), x));
            }
        }
        let mut id = 1 + d;
        if self.config.quadratic {
            for (i, &xi) in context.iter().enumerate() {
                for &xj in &context[i..] {
                    let v = xi * xj;
                    if v != 0.0 {
                        features.push((self.slot(id, action), v));
                    }
                    id += 1;
                }
            }
        }
        for (e, &v) in extras.iter().enumerate() {
            if v != 0.0 {
                features.push((self.slot(id + e as u64, action), v));
            }
        }
        self.features = features;
    }

    fn dot_features(&self) -> f64 {
        self.features.iter().map(|&(s, v)| self.weights[s] * v).sum()
    }

    pub fn predict(&mut self, context: &[f64], action: usize, extras: &[f64]) -> Result<f64> {
        self.check_input(context, action, extras)?;
        self.featurize(context, action, extras);
        Ok(self.dot_features())
    }

    /// One adaptive step on `(prediction - reward)^2`: each weight moves by
    /// `learning_rate * g / sqrt(sum of its squared gradients)`.
    pub fn learn(&mut self, context: &[f64], action: usize, reward: f64, extras: &[f64]) -> Result<()> {
        self.check_input(context, action, extras)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        self.featurize(context, action, extras);
        let residual = 2.0 * (self.dot_features() - reward);
        let lr = self.config.learning_rate;
        for &(s, v) in &self.features {
            let g = residual * v;
            if g != 0.0 {
                self.accumulators[s] += g * g;
                self.weights[s] -= lr * g / self.accumulators[s].sqrt();
            }
        }
        Ok(())
    }
}

/// Epsilon-greedy over a [`ParametricModel`].
#[derive(Clone, Debug)]
pub struct ParametricCb {
    model: ParametricModel,
    policy: EpsilonGreedy,
    estimates: Vec<f64>,
}

impl ParametricCb {
    pub fn new(context_dim: usize, actions: usize, config: ParametricConfig, policy: EpsilonGreedy) -> Result<Self> {
        Ok(ParametricCb {
            model: ParametricModel::new(context_dim, actions, 0, config)?,
            policy,
            estimates: Vec::new(),
        })
    }

    pub fn model(&self) -> &ParametricModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ParametricModel {
        &mut self.model
    }

    pub fn policy(&self) -> &EpsilonGreedy {
        &self.policy
    }
}

impl Learner for ParametricCb {
    fn actions(&self) -> usize {
        self.model.actions
    }

    fn predict(&mut self, context: &[f64]) -> Result<usize> {
        self.estimates.clear();
        for a in 0..self.model.actions {
            let e = self.model.predict(context, a, &[])?;
            self.estimates.push(e);
        }
        Ok(self.policy.select(&self.estimates))
    }

    fn learn(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        self.model.learn(context, action, reward, &[])
    }
}

#[derive(Clone, Debug)]
struct StackCache {
    context: Vec<f64>,
    tree_estimates: Vec<f64>,
}

/// A parametric learner with the tree's reward prediction as one extra
/// feature per action.
///
/// `learn` trains the parametric model on the tree prediction that was
/// available when the action was chosen, then inserts into the tree.
#[derive(Clone, Debug)]
pub struct PemtCb {
    tree: Emt,
    encoder: KeyEncoder,
    model: ParametricModel,
    policy: EpsilonGreedy,
    cache: Option<StackCache>,
    key: Vec<f64>,
    estimates: Vec<f64>,
    uncached_learns: u64,
}

impl PemtCb {
    pub fn new(
        context_dim: usize,
        actions: usize,
        tree: TreeConfig,
        scorer: ScorerConfig,
        parametric: ParametricConfig,
        policy: EpsilonGreedy,
    ) -> Result<Self> {
        let encoder = KeyEncoder::new(context_dim, actions)?;
        Ok(PemtCb {
            tree: Emt::new(encoder.key_dim(), tree, scorer)?,
            encoder,
            model: ParametricModel::new(context_dim, actions, 1, parametric)?,
            policy,
            cache: None,
            key: Vec::new(),
            estimates: Vec::new(),
            uncached_learns: 0,
        })
    }

    pub fn tree(&self) -> &Emt {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut Emt {
        &mut self.tree
    }

    pub fn model(&self) -> &ParametricModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ParametricModel {
        &mut self.model
    }

    pub fn policy(&self) -> &EpsilonGreedy {
        &self.policy
    }

    /// Learn calls that had no matching prediction and recomputed the tree
    /// feature from the current tree.
    pub fn uncached_learns(&self) -> u64 {
        self.uncached_learns
    }

    /// Tree predictions cached by the last `predict`, if any.
    pub fn cached_tree_estimates(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.tree_estimates.as_slice())
    }
}

impl Learner for PemtCb {
    fn actions(&self) -> usize {
        self.encoder.actions()
    }

    fn predict(&mut self, context: &[f64]) -> Result<usize> {
        let tree_estimates = tree_estimates(&mut self.tree, &self.encoder, context, &mut self.key)?;
        self.estimates.clear();
        for (a, &f) in tree_estimates.iter().enumerate() {
            let e = self.model.predict(context, a, &[f])?;
            self.estimates.push(e);
        }
        self.cache = Some(StackCache {
            context: context.to_vec(),
            tree_estimates,
        });
        Ok(self.policy.select(&self.estimates))
    }

    fn learn(&mut self, context: &[f64], action: usize, reward: f64) -> Result<()> {
        self.encoder.encode_into(context, action, &mut self.key)?;
        let feature = match self.cache.take() {
            Some(c) if c.context == context => c.tree_estimates[action],
            _ => {
                self.uncached_learns += 1;
                log::warn!("stacked learn without a matching predict; recomputing the tree feature");
                self.tree.query(&self.key)?.map_or(0.0, |r| r.value)
            }
        };
        self.model.learn(context, action, reward, &[feature])?;
        self.tree.learn(&self.key, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};
    use rand::SeedableRng;

    fn policy(epsilon: f64, seed: u64) -> EpsilonGreedy {
        EpsilonGreedy::new(epsilon, ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn small_tree() -> TreeConfig {
        TreeConfig {
            leaf_capacity: 8,
            memory_budget: None,
            seed: 3,
        }
    }

    #[test]
    fn encode_examples() {
        let enc = KeyEncoder::new(1, 2).unwrap();
        assert_eq!(enc.encode(&[0.5], 0).unwrap(), vec![0.5, 1.0, 0.0]);
        assert_eq!(enc.encode(&[0.5], 1).unwrap(), vec![0.5, 0.0, 1.0]);
        assert_eq!(enc.encode(&[0.5], 1).unwrap(), enc.encode(&[0.5], 1).unwrap());
        assert!(matches!(enc.encode(&[0.5], 2), Err(Error::ActionOutOfRange { .. })));
        assert!(KeyEncoder::new(1, 1).is_err());
    }

    #[test]
    fn greedy_selection() {
        let mut p = policy(0.0, 0);
        assert_eq!(p.select(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(p.select(&[0.5, 0.5]), 0);
        assert_eq!(p.explored(), 0);
        assert!(EpsilonGreedy::new(1.5, ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let est = [0.2, -0.1, 0.7, 0.7, 0.3];
        for scale in [0.001, 1.0, 3.5, 1e6] {
            let scaled: Vec<f64> = est.iter().map(|e| e * scale).collect();
            assert_eq!(argmax(&scaled), 2);
        }
    }

    #[test]
    fn emt_cb_empty_tree_picks_first_action() {
        let mut cb = EmtCb::new(2, 3, small_tree(), ScorerConfig::default(), policy(0.0, 1)).unwrap();
        assert_eq!(cb.predict(&[0.1, 0.2]).unwrap(), 0);
    }

    #[test]
    fn emt_cb_replays_a_rewarded_action() {
        let mut cb = EmtCb::new(2, 3, small_tree(), ScorerConfig::default(), policy(0.0, 1)).unwrap();
        cb.learn(&[0.1, 0.2], 0, 0.0).unwrap();
        cb.learn(&[0.1, 0.2], 1, 0.0).unwrap();
        cb.learn(&[0.1, 0.2], 2, 1.0).unwrap();
        assert_eq!(cb.predict(&[0.1, 0.2]).unwrap(), 2);
        assert_eq!(cb.estimates(&[0.1, 0.2]).unwrap()[2], 1.0);
    }

    #[test]
    fn emt_cb_learn_counts_and_duplicates() {
        let mut cb = EmtCb::new(2, 3, small_tree(), ScorerConfig::default(), policy(0.1, 1)).unwrap();
        cb.learn(&[0.1, 0.2], 1, 0.0).unwrap();
        assert_eq!(cb.tree().len(), 1);
        cb.learn(&[0.1, 0.2], 1, 0.0).unwrap();
        assert_eq!(cb.tree().len(), 2);
    }

    #[test]
    fn emt_cb_budget() {
        let tree = TreeConfig {
            memory_budget: Some(1000),
            ..small_tree()
        };
        let mut cb = EmtCb::new(3, 4, tree, ScorerConfig::default(), policy(0.1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let a = cb.predict(&x).unwrap();
            cb.learn(&x, a, rng.random_range(0..2) as f64).unwrap();
        }
        assert_eq!(cb.tree().len(), 1000);
    }

    #[test]
    fn exploration_is_uniform_when_epsilon_is_one() {
        let mut cb = EmtCb::new(1, 4, small_tree(), ScorerConfig::default(), policy(1.0, 2)).unwrap();
        cb.learn(&[0.5], 3, 1.0).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[cb.predict(&[0.5]).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (850..1150).contains(&c)), "{counts:?}");
        // exploration never consults the tree
        assert_eq!(cb.tree().clock(), 1);
    }

    #[test]
    fn parametric_zero_and_bias_slot() {
        let mut m = ParametricModel::new(3, 3, 0, ParametricConfig::default()).unwrap();
        let x = [0.2, 0.0, 0.9];
        for a in 0..3 {
            assert_eq!(m.predict(&x, a, &[]).unwrap(), 0.0);
        }
        let slot = m.bias_slot(1);
        m.set_weight(slot, 0.4);
        assert_eq!(m.predict(&x, 1, &[]).unwrap(), 0.4);
        assert_eq!(m.predict(&x, 0, &[]).unwrap(), 0.0);
        assert_eq!(m.predict(&x, 2, &[]).unwrap(), 0.0);
        assert_eq!(m.feature_count(), 1 + 3 + 6);
    }

    #[test]
    fn parametric_hashing_is_deterministic() {
        let mut a = ParametricModel::new(4, 2, 0, ParametricConfig::default()).unwrap();
        let mut b = ParametricModel::new(4, 2, 0, ParametricConfig::default()).unwrap();
        let x = [0.1, 0.5, 0.3, 0.9];
        a.learn(&x, 1, 1.0, &[]).unwrap();
        b.learn(&x, 1, 1.0, &[]).unwrap();
        assert_eq!(a.predict(&x, 1, &[]).unwrap(), b.predict(&x, 1, &[]).unwrap());
        assert_eq!(a.predict(&x, 1, &[]).unwrap(), a.predict(&x, 1, &[]).unwrap());
    }

    #[test]
    fn parametric_single_step_worked_example() {
        // bias only: an all-zero context has no other non-zero feature
        let config = ParametricConfig {
            learning_rate: 0.5,
            ..Default::default()
        };
        let mut m = ParametricModel::new(2, 2, 0, config).unwrap();
        m.learn(&[0.0, 0.0], 0, 1.0, &[]).unwrap();
        assert_eq!(m.weight(m.bias_slot(0)), 0.5);
        assert_eq!(m.predict(&[0.0, 0.0], 0, &[]).unwrap(), 0.5);
    }

    #[test]
    fn parametric_stationary_point() {
        let mut m = ParametricModel::new(2, 2, 0, ParametricConfig::default()).unwrap();
        let slot = m.bias_slot(0);
        m.set_weight(slot, 0.3);
        let before = m.weights().to_vec();
        m.learn(&[0.0, 0.0], 0, 0.3, &[]).unwrap();
        assert_eq!(m.weights(), &before[..]);
    }

    #[test]
    fn parametric_converges_on_repeats() {
        let mut m = ParametricModel::new(3, 2, 0, ParametricConfig::default()).unwrap();
        let x = [0.3, 0.7, 0.1];
        let mut errors = Vec::new();
        for _ in 0..200 {
            errors.push((m.predict(&x, 1, &[]).unwrap() - 0.8).abs());
            m.learn(&x, 1, 0.8, &[]).unwrap();
        }
        assert!(errors.last().unwrap() < &1e-3, "{:?}", &errors[190..]);
        assert!(errors[100] < errors[0]);
    }

    #[test]
    fn parametric_validation() {
        let config = ParametricConfig {
            hash_bits: 1,
            ..Default::default()
        };
        assert!(ParametricModel::new(2, 4, 0, config).is_err());
        let mut m = ParametricModel::new(2, 2, 0, ParametricConfig::default()).unwrap();
        assert!(m.predict(&[0.0], 0, &[]).is_err());
        assert!(m.predict(&[0.0, 0.0], 2, &[]).is_err());
        assert!(m.learn(&[0.0, 0.0], 0, f64::NAN, &[]).is_err());
    }

    #[test]
    fn pemt_with_empty_tree_matches_parametric() {
        let mut pemt = PemtCb::new(
            2,
            3,
            small_tree(),
            ScorerConfig::default(),
            ParametricConfig::default(),
            EpsilonGreedy::new(0.1, derive(4, Stream::Exploration)).unwrap(),
        )
        .unwrap();
        let mut par = ParametricCb::new(
            2,
            3,
            ParametricConfig::default(),
            EpsilonGreedy::new(0.1, derive(4, Stream::Exploration)).unwrap(),
        )
        .unwrap();
        assert_eq!(pemt.model().feature_count(), par.model().feature_count() + 1);
        let x = [0.4, 0.6];
        assert_eq!(pemt.predict(&x).unwrap(), par.predict(&x).unwrap());
        assert_eq!(pemt.cached_tree_estimates(), Some(&[0.0, 0.0, 0.0][..]));
    }

    #[test]
    fn pemt_pass_through_follows_tree() {
        let mut pemt = PemtCb::new(
            1,
            3,
            small_tree(),
            ScorerConfig::default(),
            ParametricConfig::default(),
            policy(0.0, 0),
        )
        .unwrap();
        let enc = KeyEncoder::new(1, 3).unwrap();
        pemt.tree_mut().learn(&enc.encode(&[0.5], 0).unwrap(), 0.2).unwrap();
        pemt.tree_mut().learn(&enc.encode(&[0.5], 1).unwrap(), 0.9).unwrap();
        pemt.tree_mut().learn(&enc.encode(&[0.5], 2).unwrap(), 0.4).unwrap();
        for a in 0..3 {
            let slot = pemt.model().extra_slot(0, a);
            pemt.model_mut().set_weight(slot, 1.0);
        }
        assert_eq!(pemt.predict(&[0.5]).unwrap(), 1);
    }

    #[test]
    fn pemt_learns_from_decision_time_feature() {
        // budget 1: each insertion replaces the only memory
        let tree = TreeConfig {
            memory_budget: Some(1),
            ..small_tree()
        };
        let mut pemt = PemtCb::new(
            1,
            2,
            tree,
            ScorerConfig::default(),
            ParametricConfig::default(),
            policy(0.0, 0),
        )
        .unwrap();
        let enc = KeyEncoder::new(1, 2).unwrap();
        let x = [0.5];
        let fresh = || ParametricModel::new(1, 2, 1, ParametricConfig::default()).unwrap();
        let (mut reference, mut stale) = (fresh(), fresh());
        // one shared warm-up step so the adaptive step depends on magnitudes
        for m in [pemt.model_mut(), &mut reference, &mut stale] {
            m.learn(&x, 0, 1.0, &[0.5]).unwrap();
        }
        pemt.tree_mut().learn(&enc.encode(&x, 0).unwrap(), 0.25).unwrap();
        let a = pemt.predict(&x).unwrap();
        assert_eq!(a, 0);
        assert_eq!(pemt.cached_tree_estimates().unwrap()[0], 0.25);
        // the tree changes between predict and learn
        pemt.tree_mut().learn(&enc.encode(&x, 0).unwrap(), 0.75).unwrap();
        let key = enc.encode(&x, 0).unwrap();
        assert_eq!(pemt.tree_mut().query(&key).unwrap().unwrap().value, 0.75);
        pemt.learn(&x, a, 1.0).unwrap();
        assert_eq!(pemt.uncached_learns(), 0);

        reference.learn(&x, a, 1.0, &[0.25]).unwrap();
        assert!(pemt.model().weights() == reference.weights());
        stale.learn(&x, a, 1.0, &[0.75]).unwrap();
        assert!(pemt.model().weights() != stale.weights());
    }

    #[test]
    fn pemt_learn_without_predict_recomputes() {
        let mut pemt = PemtCb::new(
            1,
            2,
            small_tree(),
            ScorerConfig::default(),
            ParametricConfig::default(),
            policy(0.0, 0),
        )
        .unwrap();
        pemt.learn(&[0.5], 1, 1.0).unwrap();
        assert_eq!(pemt.uncached_learns(), 1);
        assert_eq!(pemt.tree().len(), 1);
        pemt.predict(&[0.5]).unwrap();
        pemt.learn(&[0.5], 1, 1.0).unwrap();
        assert_eq!(pemt.uncached_learns(), 1);
    }
}
