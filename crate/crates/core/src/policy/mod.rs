//! Per-epoch sequence policies.
//!
//! A policy assigns a probability to every complete action sequence of an
//! epoch. All policies here factorize into per-step conditional
//! distributions, `P(a) = prod_j P(a_j | a_1..a_{j-1})`, which is what the
//! sampling, winning-probability and lower-bound routines rely on.

mod history;
mod map;
mod tree;

pub use history::RewardedHistory;
pub use map::{update_rule_by_name, AdditiveUpdate, MapPolicy, WeightUpdate};
pub use tree::{decision_pair, decision_probability, HValueTreePolicy};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionSequence, Coverage, DseEnvironment, EnvError, EpochOutcome, SequenceSpace};
use crate::numeric::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite h-value or weight: {0}")]
    NonFinite(f64),
    #[error("inverse temperature beta must be finite and positive, got {0}")]
    InvalidBeta(f64),
    #[error("policy updates require a positive reward, got {0}")]
    NonPositiveReward(f64),
    #[error("policy shape does not match the environment: {0}")]
    ShapeMismatch(String),
    #[error("observed transition conflicts with the map at step {step}")]
    InconsistentTransition { step: usize },
    #[error("unknown update rule {0:?}")]
    UnknownUpdateRule(String),
    #[error("malformed policy dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("rewarded history entry {index} replays to reward {observed}, recorded {recorded}")]
    HistoryMismatch { index: usize, recorded: f64, observed: f64 },
}

/// A policy over complete action sequences of one epoch.
pub trait SequencePolicy {
    fn space(&self) -> &SequenceSpace;

    /// Conditional distribution of the next action given the actions
    /// already chosen this epoch. `out` is resized to the step arity.
    fn step_distribution(&self, prefix: &[usize], out: &mut Vec<f64>);

    /// Smallest probability of any complete sequence.
    fn min_sequence_probability(&self) -> f64;

    /// Reinforces the policy with a rewarded epoch. Implementations reject
    /// non-positive rewards.
    fn update_on_reward(&mut self, actions: &ActionSequence, outcome: &EpochOutcome) -> Result<(), PolicyError>;

    fn sequence_probability(&self, a: &ActionSequence) -> Result<f64, PolicyError> {
        self.space().validate(a)?;
        let mut dist = Vec::new();
        let mut p = 1.0;
        for (j, &action) in a.steps().iter().enumerate() {
            self.step_distribution(&a.steps()[..j], &mut dist);
            p *= dist[action];
        }
        Ok(p)
    }

    /// Draws one sequence, one uniform variate per step.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSequence {
        let len = self.space().epoch_length();
        let mut steps = Vec::with_capacity(len);
        let mut dist = Vec::new();
        for _ in 0..len {
            self.step_distribution(&steps, &mut dist);
            steps.push(sample_index(&dist, rng.random()));
        }
        ActionSequence::new(steps)
    }
}

/// Index `i` with cumulative weight just above `u * total`.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Probability of `a` under `policy`.
pub fn sequence_probability<P: SequencePolicy + ?Sized>(policy: &P, a: &ActionSequence) -> Result<f64, PolicyError> {
    policy.sequence_probability(a)
}

pub fn sample_sequence<P: SequencePolicy + ?Sized, R: Rng + ?Sized>(policy: &P, rng: &mut R) -> ActionSequence {
    policy.sample(rng)
}

/// Lower bound on the winning probability: the smallest probability of any
/// sequence. Valid whenever at least one sequence is rewarded.
pub fn q_min_bound<P: SequencePolicy + ?Sized>(policy: &P) -> f64 {
    policy.min_sequence_probability()
}

fn check_shape<P: SequencePolicy + ?Sized, E: DseEnvironment + ?Sized>(policy: &P, env: &E) -> Result<(), PolicyError> {
    if policy.space() != env.space() {
        return Err(PolicyError::ShapeMismatch(format!(
            "policy arities {:?}, environment arities {:?}",
            policy.space().arities(),
            env.space().arities()
        )));
    }
    Ok(())
}

/// Probability mass of rewarded and unrewarded completions of a prefix,
/// conditioned on the prefix having been played.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardMasses {
    pub rewarded: f64,
    pub unrewarded: f64,
}

/// Conditional reward masses below `prefix`. Subtrees whose coverage is
/// decided are not descended into.
pub fn reward_masses<P, E>(policy: &P, env: &E, prefix: &mut Vec<usize>) -> Result<RewardMasses, PolicyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    match env.coverage(prefix) {
        Coverage::NoReward => {
            return Ok(RewardMasses {
                rewarded: 0.0,
                unrewarded: 1.0,
            })
        }
        Coverage::AllRewarded => {
            return Ok(RewardMasses {
                rewarded: 1.0,
                unrewarded: 0.0,
            })
        }
        Coverage::Mixed => {}
    }
    let space = env.space();
    if prefix.len() == space.epoch_length() {
        let r = env.reward(&ActionSequence::new(prefix.clone()))?;
        return Ok(if r > 0.0 {
            RewardMasses {
                rewarded: 1.0,
                unrewarded: 0.0,
            }
        } else {
            RewardMasses {
                rewarded: 0.0,
                unrewarded: 1.0,
            }
        });
    }
    let mut dist = Vec::new();
    policy.step_distribution(prefix, &mut dist);
    let mut rewarded = CompensatedSum::new();
    let mut unrewarded = CompensatedSum::new();
    for (action, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        prefix.push(action);
        let child = reward_masses(policy, env, prefix)?;
        prefix.pop();
        rewarded.add(p * child.rewarded);
        unrewarded.add(p * child.unrewarded);
    }
    Ok(RewardMasses {
        rewarded: rewarded.value(),
        unrewarded: unrewarded.value(),
    })
}

fn check_recursion_size<E: DseEnvironment + ?Sized>(env: &E, limit: u64) -> Result<(), PolicyError> {
    if !env.prunes_by_coverage() {
        env.space().check_enumerable(limit)?;
    }
    Ok(())
}

/// Winning probability `Q = sum over rewarded a of P(a)`.
///
/// Uses the environment's coverage information to skip subtrees without
/// rewards and subtrees that are rewarded everywhere; on the binary tree
/// this visits O(layers) nodes.
pub fn winning_probability<P, E>(policy: &P, env: &E) -> Result<f64, PolicyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    check_shape(policy, env)?;
    check_recursion_size(env, crate::env::DEFAULT_ENUMERATION_LIMIT)?;
    let mut prefix = Vec::with_capacity(env.space().epoch_length());
    Ok(reward_masses(policy, env, &mut prefix)?.rewarded)
}

/// Probability of every sequence of the space, in index order. Each entry
/// is an independent product of step probabilities.
pub fn enumerate_probabilities<P: SequencePolicy + ?Sized>(policy: &P, limit: u64) -> Result<Vec<f64>, PolicyError> {
    let space = policy.space();
    let size = space.check_enumerable(limit)?;
    let mut out = Vec::with_capacity(size as usize);
    let mut prefix = Vec::with_capacity(space.epoch_length());
    enumerate_into(policy, &mut prefix, 1.0, &mut out);
    Ok(out)
}

fn enumerate_into<P: SequencePolicy + ?Sized>(policy: &P, prefix: &mut Vec<usize>, mass: f64, out: &mut Vec<f64>) {
    if prefix.len() == policy.space().epoch_length() {
        out.push(mass);
        return;
    }
    let mut dist = Vec::new();
    policy.step_distribution(prefix, &mut dist);
    for (action, &p) in dist.iter().enumerate() {
        prefix.push(action);
        enumerate_into(policy, prefix, mass * p, out);
        prefix.pop();
    }
}

/// Brute-force winning probability: compensated sum of `P(a)` over every
/// rewarded sequence of an enumerable space.
pub fn winning_probability_enumerated<P, E>(policy: &P, env: &E, limit: u64) -> Result<f64, PolicyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    check_shape(policy, env)?;
    let probs = enumerate_probabilities(policy, limit)?;
    let mut sum = CompensatedSum::new();
    for (a, p) in env.space().iter().zip(probs) {
        if env.reward(&a)? > 0.0 {
            sum.add(p);
        }
    }
    Ok(sum.value())
}

/// Expected reward of one classical epoch, `sum_a r(a) P(a)`.
pub fn expected_reward<P, E>(policy: &P, env: &E) -> Result<f64, PolicyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    check_shape(policy, env)?;
    let rewarded = crate::env::rewarded_sequences(env, crate::env::DEFAULT_ENUMERATION_LIMIT)?;
    let mut sum = CompensatedSum::new();
    for (a, r) in rewarded {
        sum.add(r * policy.sequence_probability(&a)?);
    }
    Ok(sum.value())
}

/// Draws a sequence from the policy restricted to the rewarded set
/// (`want_rewarded`) or to its complement, renormalized.
///
/// Returns `None` when the requested set has zero probability.
pub fn sample_conditional<P, E, R>(
    policy: &P,
    env: &E,
    want_rewarded: bool,
    rng: &mut R,
) -> Result<Option<ActionSequence>, PolicyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    check_shape(policy, env)?;
    let len = env.space().epoch_length();
    let mut prefix = Vec::with_capacity(len);
    let mut dist = Vec::new();
    let mut weights = Vec::new();
    while prefix.len() < len {
        policy.step_distribution(&prefix, &mut dist);
        weights.clear();
        for (action, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                weights.push(0.0);
                continue;
            }
            prefix.push(action);
            let m = reward_masses(policy, env, &mut prefix)?;
            prefix.pop();
            weights.push(p * if want_rewarded { m.rewarded } else { m.unrewarded });
        }
        if weights.iter().all(|&w| w <= 0.0) {
            return Ok(None);
        }
        prefix.push(sample_index(&weights, rng.random()));
    }
    Ok(Some(ActionSequence::new(prefix)))
}

/// How the hybrid agent estimates its lower bound on the winning
/// probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QMinEstimator {
    /// Smallest sequence probability of the current policy.
    #[default]
    PolicyBound,
    /// Maximum of the policy bound and a `z`-sigma Wilson lower bound of the
    /// reward frequency over the last `window` classically sampled epochs.
    WithRewardFrequency { window: usize, z: f64 },
}

impl QMinEstimator {
    /// `recent` holds the reward indicator of recent classical samples,
    /// oldest first.
    pub fn estimate(&self, policy_bound: f64, recent: &[bool]) -> f64 {
        match *self {
            QMinEstimator::PolicyBound => policy_bound,
            QMinEstimator::WithRewardFrequency { window, z } => {
                let tail = &recent[recent.len().saturating_sub(window)..];
                if tail.is_empty() {
                    return policy_bound;
                }
                let n = tail.len() as f64;
                let f = tail.iter().filter(|&&r| r).count() as f64 / n;
                let z2 = z * z;
                let centre = f + z2 / (2.0 * n);
                let spread = z * (f * (1.0 - f) / n + z2 / (4.0 * n * n)).sqrt();
                let wilson = ((centre - spread) / (1.0 + z2 / n)).max(0.0);
                policy_bound.max(wilson).min(1.0)
            }
        }
    }
}

/// The policies selectable from a run configuration.
#[derive(Clone, Debug)]
pub enum AnyPolicy {
    Tree(HValueTreePolicy),
    Map(MapPolicy),
}

impl SequencePolicy for AnyPolicy {
    fn space(&self) -> &SequenceSpace {
        match self {
            AnyPolicy::Tree(p) => p.space(),
            AnyPolicy::Map(p) => p.space(),
        }
    }

    fn step_distribution(&self, prefix: &[usize], out: &mut Vec<f64>) {
        match self {
            AnyPolicy::Tree(p) => p.step_distribution(prefix, out),
            AnyPolicy::Map(p) => p.step_distribution(prefix, out),
        }
    }

    fn min_sequence_probability(&self) -> f64 {
        match self {
            AnyPolicy::Tree(p) => p.min_sequence_probability(),
            AnyPolicy::Map(p) => p.min_sequence_probability(),
        }
    }

    fn update_on_reward(&mut self, a: &ActionSequence, outcome: &EpochOutcome) -> Result<(), PolicyError> {
        match self {
            AnyPolicy::Tree(p) => p.update_on_reward(a, outcome),
            AnyPolicy::Map(p) => p.update_on_reward(a, outcome),
        }
    }

    fn sequence_probability(&self, a: &ActionSequence) -> Result<f64, PolicyError> {
        match self {
            AnyPolicy::Tree(p) => p.sequence_probability(a),
            AnyPolicy::Map(p) => p.sequence_probability(a),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSequence {
        match self {
            AnyPolicy::Tree(p) => p.sample(rng),
            AnyPolicy::Map(p) => p.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BinaryTreeEnv, RewardTableEnv, DEFAULT_ENUMERATION_LIMIT};
    use crate::rng::derive_rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Environment with no rewarded sequence; the built-in constructors
    /// refuse to create one.
    struct Barren(SequenceSpace);

    impl DseEnvironment for Barren {
        fn space(&self) -> &SequenceSpace {
            &self.0
        }
        fn evaluate(&self, a: &ActionSequence) -> Result<EpochOutcome, EnvError> {
            self.0.validate(a)?;
            Ok(EpochOutcome {
                percepts: vec![0; a.len()],
                reward: 0.0,
            })
        }
    }

    fn random_tree_policy(l: usize, beta: f64, seed: u64, updates: usize) -> HValueTreePolicy {
        let mut rng = derive_rng(seed, 0);
        let mut p = HValueTreePolicy::new(l, beta).unwrap();
        for _ in 0..updates {
            let a = ActionSequence::from_bits(rng.random_range(0..(1u64 << l)), l);
            let r = rng.random_range(1..=8) as f64;
            p.reinforce(&a, r).unwrap();
        }
        p
    }

    #[test]
    fn fresh_policy_q_on_l12_k5_tree() {
        let env = BinaryTreeEnv::with_seeded_path(12, 5, 3).unwrap();
        let p = HValueTreePolicy::new(12, 0.1).unwrap();
        let q = winning_probability(&p, &env).unwrap();
        let brute = winning_probability_enumerated(&p, &env, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(q, 0.0078125);
        assert!((q - brute).abs() < 1e-12);
    }

    #[test]
    fn q_edge_cases() {
        let space = SequenceSpace::binary(4).unwrap();
        let all = RewardTableEnv::from_fn(space.clone(), 1 << 10, |_| 1.0).unwrap();
        let p = random_tree_policy(4, 0.3, 1, 5);
        assert!((winning_probability(&p, &all).unwrap() - 1.0).abs() < 1e-15);
        let barren = Barren(space);
        assert_eq!(winning_probability(&p, &barren).unwrap(), 0.0);
        assert_eq!(winning_probability_enumerated(&p, &barren, 1 << 10).unwrap(), 0.0);
    }

    #[test]
    fn q_shape_mismatch_is_an_error() {
        let env = BinaryTreeEnv::with_seeded_path(5, 2, 0).unwrap();
        let p = HValueTreePolicy::new(4, 0.1).unwrap();
        assert!(matches!(
            winning_probability(&p, &env),
            Err(PolicyError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn unpruned_generic_env_must_be_enumerable() {
        struct Huge(SequenceSpace);
        impl DseEnvironment for Huge {
            fn space(&self) -> &SequenceSpace {
                &self.0
            }
            fn evaluate(&self, a: &ActionSequence) -> Result<EpochOutcome, EnvError> {
                Ok(EpochOutcome {
                    percepts: vec![],
                    reward: a.steps()[0] as f64,
                })
            }
        }
        let space = SequenceSpace::binary(30).unwrap();
        let p = MapPolicy::new(space.clone(), 0.1, 0).unwrap();
        let err = winning_probability(&p, &Huge(space)).unwrap_err();
        assert!(matches!(err, PolicyError::Env(EnvError::NotEnumerable { .. })));
    }

    #[test]
    fn expected_reward_fresh_l12_k5() {
        let env = BinaryTreeEnv::with_seeded_path(12, 5, 11).unwrap();
        let p = HValueTreePolicy::new(12, 0.1).unwrap();
        // brute force over all 4096 leaves
        let brute: f64 = env.space().iter().map(|a| env.reward(&a).unwrap()).sum::<f64>() / 4096.0;
        assert_eq!(brute, 112.0 / 4096.0);
        assert!((expected_reward(&p, &env).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn q_min_examples() {
        let p = HValueTreePolicy::new(12, 0.1).unwrap();
        assert_eq!(q_min_bound(&p), 2f64.powi(-12));
        let map = MapPolicy::new(SequenceSpace::binary(12).unwrap(), 0.1, 0).unwrap();
        assert_eq!(q_min_bound(&map), 2f64.powi(-12));
    }

    #[test]
    fn conditional_sampling_never_leaves_its_set() {
        let env = BinaryTreeEnv::with_seeded_path(6, 2, 5).unwrap();
        let p = random_tree_policy(6, 0.2, 9, 6);
        let mut rng = derive_rng(1, 1);
        for _ in 0..500 {
            let a = sample_conditional(&p, &env, true, &mut rng).unwrap().unwrap();
            assert!(env.reward(&a).unwrap() > 0.0);
            let b = sample_conditional(&p, &env, false, &mut rng).unwrap().unwrap();
            assert_eq!(env.reward(&b).unwrap(), 0.0);
        }
        let all = RewardTableEnv::from_fn(SequenceSpace::binary(6).unwrap(), 1 << 10, |_| 2.0).unwrap();
        assert!(sample_conditional(&p, &all, false, &mut rng).unwrap().is_none());
    }

    #[test]
    fn frequency_augmented_q_min() {
        let est = QMinEstimator::WithRewardFrequency { window: 100, z: 3.0 };
        let mut recent = vec![false; 60];
        recent.extend(vec![true; 40]);
        let q = est.estimate(1e-4, &recent);
        assert!(q > 1e-4 && q < 0.4, "{q}");
        assert_eq!(est.estimate(1e-4, &[]), 1e-4);
        assert_eq!(QMinEstimator::PolicyBound.estimate(1e-4, &recent), 1e-4);
        assert_eq!(est.estimate(1e-4, &[false; 100]), 1e-4);
    }

    proptest! {
        #[test]
        fn normalization_by_enumeration(l in 1usize..=10, beta in 0.01f64..2.0, seed in any::<u64>(), updates in 0usize..12) {
            let p = random_tree_policy(l, beta, seed, updates);
            let total = enumerate_probabilities(&p, 1 << 14).unwrap().into_iter().collect::<CompensatedSum>().value();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn q_min_below_q_below_one(l in 2usize..=9, k_frac in 0.0f64..=1.0, beta in 0.01f64..1.0, seed in any::<u64>(), updates in 0usize..10) {
            let k = ((l as f64) * k_frac).floor() as usize;
            let env = BinaryTreeEnv::with_seeded_path(l, k, seed ^ 0x55).unwrap();
            let p = random_tree_policy(l, beta, seed, updates);
            let q = winning_probability(&p, &env).unwrap();
            let brute = winning_probability_enumerated(&p, &env, 1 << 12).unwrap();
            prop_assert!((q - brute).abs() < 1e-12);
            let probs = enumerate_probabilities(&p, 1 << 12).unwrap();
            let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
            let bound = q_min_bound(&p);
            prop_assert!((bound - min).abs() <= 1e-12 * min.max(1e-300));
            prop_assert!(bound <= q * (1.0 + 1e-12));
            prop_assert!(q <= 1.0 + 1e-12);
        }

        #[test]
        fn table_env_q_matches_brute_force(l in 1usize..=8, density in 0.05f64..1.0, seed in any::<u64>()) {
            let space = SequenceSpace::binary(l).unwrap();
            let mut rng = derive_rng(seed, 7);
            let mut entries: Vec<(ActionSequence, f64)> = Vec::new();
            for a in space.iter() {
                if rng.random::<f64>() < density {
                    entries.push((a, 1.0 + rng.random::<f64>()));
                }
            }
            if entries.is_empty() {
                entries.push((space.sequence_at(0), 1.0));
            }
            let env = RewardTableEnv::new(space, entries).unwrap();
            let p = random_tree_policy(l, 0.3, seed, 4);
            let q = winning_probability(&p, &env).unwrap();
            let brute = winning_probability_enumerated(&p, &env, 1 << 10).unwrap();
            prop_assert!((q - brute).abs() < 1e-12);
            prop_assert!(q_min_bound(&p) <= q);
        }
    }
}
