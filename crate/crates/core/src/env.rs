//! Deterministic strictly epochal (DSE) environments.
//!
//! An epoch is a fixed-length sequence of actions. The environment is reset
//! after every epoch, so percepts and the reward of an epoch are a pure
//! function of the action sequence that was played.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an observed percept.
pub type Percept = u64;

/// Default ceiling on the number of sequences an enumeration may visit.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action sequence has length {got}, expected epoch length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("action {action} at step {step} is out of range for arity {arity}")]
    ActionOutOfRange { step: usize, action: usize, arity: usize },
    #[error("invalid environment parameter: {0}")]
    InvalidParameter(String),
    #[error("sequence space of {size} sequences is not enumerable (limit {limit})")]
    NotEnumerable { size: u128, limit: u64 },
    #[error("environment has no rewarded action sequence")]
    NoRewardedSequence,
    #[error("reward table line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// The actions an agent plays during one epoch, one index per step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSequence(Vec<usize>);

impl ActionSequence {
    pub fn new(steps: Vec<usize>) -> Self {
        ActionSequence(steps)
    }

    /// Binary sequence of `len` decisions read from `bits`, first decision
    /// in the most significant position.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= 64);
        ActionSequence((0..len).map(|i| ((bits >> (len - 1 - i)) & 1) as usize).collect())
    }

    pub fn steps(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for ActionSequence {
    fn from(v: Vec<usize>) -> Self {
        ActionSequence(v)
    }
}

/// Digits are concatenated when every action is below 10 ("0110"),
/// otherwise they are separated by dots ("3.11.0").
impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&a| a < 10) {
            for a in &self.0 {
                write!(f, "{a}")?;
            }
        } else {
            for (i, a) in self.0.iter().enumerate() {
                if i > 0 {
                    f.write_str(".")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for ActionSequence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let steps: Option<Vec<usize>> = if s.contains('.') {
            s.split('.').map(|p| p.trim().parse().ok()).collect()
        } else {
            s.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
        };
        steps
            .filter(|v| !v.is_empty())
            .map(ActionSequence)
            .ok_or_else(|| format!("invalid action sequence {s:?}"))
    }
}

/// Shape of the per-epoch action space: one arity per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceSpace {
    arities: Vec<usize>,
    /// `prefix_offsets[d]` = number of prefixes shorter than `d`.
    prefix_offsets: Vec<u128>,
}

impl SequenceSpace {
    pub fn new(arities: Vec<usize>) -> Result<Self, EnvError> {
        if arities.is_empty() {
            return Err(EnvError::InvalidParameter("epoch length must be at least 1".into()));
        }
        if let Some(step) = arities.iter().position(|&a| a == 0) {
            return Err(EnvError::InvalidParameter(format!("step {step} has arity 0")));
        }
        let mut prefix_offsets = Vec::with_capacity(arities.len() + 1);
        let mut offset: u128 = 0;
        let mut layer: u128 = 1;
        prefix_offsets.push(0);
        for &a in &arities {
            offset = offset.saturating_add(layer);
            layer = layer.saturating_mul(a as u128);
            prefix_offsets.push(offset);
        }
        Ok(SequenceSpace {
            arities,
            prefix_offsets,
        })
    }

    pub fn binary(len: usize) -> Result<Self, EnvError> {
        Self::new(vec![2; len])
    }

    pub fn epoch_length(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, step: usize) -> usize {
        self.arities[step]
    }

    pub fn is_binary(&self) -> bool {
        self.arities.iter().all(|&a| a == 2)
    }

    /// Number of sequences, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.subtree_size(0)
    }

    /// Number of completions of a prefix of length `depth`.
    pub fn subtree_size(&self, depth: usize) -> u128 {
        self.arities[depth..]
            .iter()
            .fold(1u128, |acc, &a| acc.saturating_mul(a as u128))
    }

    /// Errors unless the whole space fits within `limit` sequences.
    pub fn check_enumerable(&self, limit: u64) -> Result<u64, EnvError> {
        let size = self.size();
        if size > limit as u128 {
            return Err(EnvError::NotEnumerable { size, limit });
        }
        Ok(size as u64)
    }

    pub fn validate(&self, a: &ActionSequence) -> Result<(), EnvError> {
        self.validate_prefix(a.steps())?;
        if a.len() != self.epoch_length() {
            return Err(EnvError::LengthMismatch {
                expected: self.epoch_length(),
                got: a.len(),
            });
        }
        Ok(())
    }

    pub fn validate_prefix(&self, prefix: &[usize]) -> Result<(), EnvError> {
        if prefix.len() > self.epoch_length() {
            return Err(EnvError::LengthMismatch {
                expected: self.epoch_length(),
                got: prefix.len(),
            });
        }
        for (step, (&action, &arity)) in prefix.iter().zip(&self.arities).enumerate() {
            if action >= arity {
                return Err(EnvError::ActionOutOfRange { step, action, arity });
            }
        }
        Ok(())
    }

    /// Mixed-radix index of a full sequence, first step most significant.
    pub fn index_of(&self, a: &ActionSequence) -> u64 {
        a.steps()
            .iter()
            .zip(&self.arities)
            .fold(0u64, |acc, (&x, &r)| acc * r as u64 + x as u64)
    }

    pub fn sequence_at(&self, mut index: u64) -> ActionSequence {
        let mut steps = vec![0; self.arities.len()];
        for (slot, &r) in steps.iter_mut().zip(&self.arities).rev() {
            *slot = (index % r as u64) as usize;
            index /= r as u64;
        }
        ActionSequence(steps)
    }

    /// Canonical node identifier of a prefix: prefixes are numbered layer by
    /// layer, the empty prefix is 0 and a binary prefix `b` of length `d`
    /// maps to `2^d - 1 + b`.
    pub fn prefix_id(&self, prefix: &[usize]) -> Percept {
        let value = prefix
            .iter()
            .zip(&self.arities)
            .fold(0u128, |acc, (&x, &r)| acc * r as u128 + x as u128);
        (self.prefix_offsets[prefix.len()] + value) as Percept
    }

    /// Iterates over all sequences in index order.
    pub fn iter(&self) -> SpaceIter<'_> {
        SpaceIter {
            space: self,
            next: Some(vec![0; self.arities.len()]),
        }
    }
}

pub struct SpaceIter<'a> {
    space: &'a SequenceSpace,
    next: Option<Vec<usize>>,
}

impl Iterator for SpaceIter<'_> {
    type Item = ActionSequence;

    fn next(&mut self) -> Option<ActionSequence> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.space.arities[i] {
                carried = false;
                break;
            }
            succ[i] = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(ActionSequence(current))
    }
}

/// Percepts and reward of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochOutcome {
    /// Percept after each action, `percepts[j]` follows action `j`.
    pub percepts: Vec<Percept>,
    pub reward: f64,
}

/// Reward structure below a prefix, used to prune probability recursions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    NoReward,
    AllRewarded,
    Mixed,
}

/// A deterministic strictly epochal environment.
///
/// Implementations must be free of hidden mutable state: `evaluate` is a
/// pure function of the action sequence.
pub trait DseEnvironment: Send + Sync {
    fn space(&self) -> &SequenceSpace;

    fn evaluate(&self, a: &ActionSequence) -> Result<EpochOutcome, EnvError>;

    /// Reward only; environments override this when percepts are costly.
    fn reward(&self, a: &ActionSequence) -> Result<f64, EnvError> {
        self.evaluate(a).map(|o| o.reward)
    }

    fn initial_percept(&self) -> Percept {
        0
    }

    /// What can be said about the rewards of all completions of `prefix`.
    /// `Mixed` is always a correct answer.
    fn coverage(&self, _prefix: &[usize]) -> Coverage {
        Coverage::Mixed
    }

    /// True when `coverage` prunes enough that recursions over rewarded
    /// subtrees stay small even if the full space is not enumerable.
    fn prunes_by_coverage(&self) -> bool {
        false
    }
}

/// Brute-force count of sequences with positive reward.
pub fn count_rewarded<E: DseEnvironment + ?Sized>(env: &E, limit: u64) -> Result<u64, EnvError> {
    env.space().check_enumerable(limit)?;
    let mut count = 0;
    for a in env.space().iter() {
        if env.reward(&a)? > 0.0 {
            count += 1;
        }
    }
    Ok(count)
}

/// All rewarded sequences with their rewards, in index order.
///
/// Walks only subtrees whose coverage is not `NoReward`; fails once more
/// than `limit` sequences would have to be visited.
pub fn rewarded_sequences<E: DseEnvironment + ?Sized>(
    env: &E,
    limit: u64,
) -> Result<Vec<(ActionSequence, f64)>, EnvError> {
    if !env.prunes_by_coverage() {
        env.space().check_enumerable(limit)?;
    }
    let mut out = Vec::new();
    let mut visited = 0u64;
    let mut prefix = Vec::with_capacity(env.space().epoch_length());
    collect_rewarded(env, &mut prefix, limit, &mut visited, &mut out)?;
    Ok(out)
}

fn collect_rewarded<E: DseEnvironment + ?Sized>(
    env: &E,
    prefix: &mut Vec<usize>,
    limit: u64,
    visited: &mut u64,
    out: &mut Vec<(ActionSequence, f64)>,
) -> Result<(), EnvError> {
    if env.coverage(prefix) == Coverage::NoReward {
        return Ok(());
    }
    let space = env.space();
    if prefix.len() == space.epoch_length() {
        *visited += 1;
        if *visited > limit {
            return Err(EnvError::NotEnumerable {
                size: *visited as u128,
                limit,
            });
        }
        let a = ActionSequence(prefix.clone());
        let r = env.reward(&a)?;
        if r > 0.0 {
            out.push((a, r));
        }
        return Ok(());
    }
    for action in 0..space.arity(prefix.len()) {
        prefix.push(action);
        collect_rewarded(env, prefix, limit, visited, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Binary tree benchmark: `layers` binary decisions per epoch, one correct
/// path rewarded with `2^k`, and leaves that leave the correct path after
/// `x` correct decisions rewarded with `floor(2^(k + x - layers))`.
#[derive(Clone, Debug)]
pub struct BinaryTreeEnv {
    layers: usize,
    reward_exponent: usize,
    correct_path: ActionSequence,
    space: SequenceSpace,
}

impl BinaryTreeEnv {
    pub const MAX_LAYERS: usize = 62;

    pub fn new(layers: usize, reward_exponent: usize, correct_path: ActionSequence) -> Result<Self, EnvError> {
        if layers == 0 || layers > Self::MAX_LAYERS {
            return Err(EnvError::InvalidParameter(format!(
                "layers must be in 1..={}, got {layers}",
                Self::MAX_LAYERS
            )));
        }
        if reward_exponent > layers {
            return Err(EnvError::InvalidParameter(format!(
                "reward exponent {reward_exponent} exceeds layers {layers}"
            )));
        }
        let space = SequenceSpace::binary(layers)?;
        space.validate(&correct_path)?;
        Ok(BinaryTreeEnv {
            layers,
            reward_exponent,
            correct_path,
            space,
        })
    }

    /// Tree whose correct path is drawn from a seeded generator.
    pub fn with_seeded_path(layers: usize, reward_exponent: usize, seed: u64) -> Result<Self, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = (0..layers).map(|_| rng.random_range(0..2usize)).collect();
        Self::new(layers, reward_exponent, ActionSequence(path))
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn reward_exponent(&self) -> usize {
        self.reward_exponent
    }

    pub fn correct_path(&self) -> &ActionSequence {
        &self.correct_path
    }

    /// Number of leaves with positive reward, `2^k`.
    pub fn rewarded_count(&self) -> u64 {
        1u64 << self.reward_exponent
    }

    /// Length of the longest common prefix with the correct path.
    pub fn correct_prefix_len(&self, steps: &[usize]) -> usize {
        steps
            .iter()
            .zip(self.correct_path.steps())
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// Exact integer reward for a leaf with correct-prefix length `x`.
    pub fn reward_for_prefix_len(&self, x: usize) -> u64 {
        let exponent = self.reward_exponent + x;
        if exponent < self.layers {
            0
        } else {
            1u64 << (exponent - self.layers)
        }
    }

    /// Correct decisions needed before a leaf can be rewarded.
    fn required_prefix(&self) -> usize {
        self.layers - self.reward_exponent
    }
}

impl DseEnvironment for BinaryTreeEnv {
    fn space(&self) -> &SequenceSpace {
        &self.space
    }

    fn evaluate(&self, a: &ActionSequence) -> Result<EpochOutcome, EnvError> {
        let reward = self.reward(a)?;
        let steps = a.steps();
        let percepts = (1..=steps.len()).map(|j| self.space.prefix_id(&steps[..j])).collect();
        Ok(EpochOutcome { percepts, reward })
    }

    fn reward(&self, a: &ActionSequence) -> Result<f64, EnvError> {
        self.space.validate(a)?;
        Ok(self.reward_for_prefix_len(self.correct_prefix_len(a.steps())) as f64)
    }

    fn coverage(&self, prefix: &[usize]) -> Coverage {
        let matched = self.correct_prefix_len(prefix);
        let need = self.required_prefix();
        if matched < prefix.len() {
            // Already off the correct path: every completion shares x = matched.
            if matched >= need {
                Coverage::AllRewarded
            } else {
                Coverage::NoReward
            }
        } else if prefix.len() >= need {
            Coverage::AllRewarded
        } else {
            Coverage::Mixed
        }
    }

    fn prunes_by_coverage(&self) -> bool {
        true
    }
}

/// Environment defined by an explicit table of rewarded sequences. Every
/// sequence absent from the table has reward 0; percepts are prefix ids.
#[derive(Clone, Debug)]
pub struct RewardTableEnv {
    space: SequenceSpace,
    rewards: BTreeMap<ActionSequence, f64>,
}

impl RewardTableEnv {
    pub fn new<I>(space: SequenceSpace, entries: I) -> Result<Self, EnvError>
    where
        I: IntoIterator<Item = (ActionSequence, f64)>,
    {
        let mut rewards = BTreeMap::new();
        for (a, r) in entries {
            space.validate(&a)?;
            if !(r.is_finite() && r > 0.0) {
                return Err(EnvError::InvalidParameter(format!(
                    "reward for {a} must be finite and positive, got {r}"
                )));
            }
            if rewards.insert(a.clone(), r).is_some() {
                return Err(EnvError::InvalidParameter(format!("duplicate entry for {a}")));
            }
        }
        if rewards.is_empty() {
            return Err(EnvError::NoRewardedSequence);
        }
        Ok(RewardTableEnv { space, rewards })
    }

    /// Builds the table by evaluating `reward` on every sequence of the space.
    pub fn from_fn<F>(space: SequenceSpace, limit: u64, mut reward: F) -> Result<Self, EnvError>
    where
        F: FnMut(&ActionSequence) -> f64,
    {
        space.check_enumerable(limit)?;
        let entries: Vec<_> = space
            .iter()
            .filter_map(|a| {
                let r = reward(&a);
                (r != 0.0).then_some((a, r))
            })
            .collect();
        Self::new(space, entries)
    }

    /// Parses the text form: one `sequence,reward` line per rewarded
    /// sequence, `#` starts a comment. Without an explicit `space` the
    /// space is binary with the length of the first sequence.
    pub fn parse(text: &str, space: Option<SequenceSpace>) -> Result<Self, EnvError> {
        let mut entries = Vec::new();
        let mut space = space;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| EnvError::Parse { line: line_no, message };
            let (seq, reward) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected `sequence,reward`".into()))?;
            let a: ActionSequence = seq.parse().map_err(parse_err)?;
            let r: f64 = reward
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("invalid reward {reward:?}: {e}")))?;
            if space.is_none() {
                space = Some(SequenceSpace::binary(a.len())?);
            }
            space
                .as_ref()
                .unwrap()
                .validate(&a)
                .map_err(|e| parse_err(e.to_string()))?;
            entries.push((a, r));
        }
        let space = space.ok_or(EnvError::NoRewardedSequence)?;
        Self::new(space, entries)
    }

    /// Inverse of [`RewardTableEnv::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (a, r) in &self.rewards {
            out.push_str(&format!("{a},{r}\n"));
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ActionSequence, f64)> {
        self.rewards.iter().map(|(a, &r)| (a, r))
    }

    fn rewarded_below(&self, prefix: &[usize]) -> u128 {
        let start = ActionSequence(prefix.to_vec());
        self.rewards
            .range(start..)
            .take_while(|(a, _)| a.steps().starts_with(prefix))
            .count() as u128
    }
}

impl DseEnvironment for RewardTableEnv {
    fn space(&self) -> &SequenceSpace {
        &self.space
    }

    fn evaluate(&self, a: &ActionSequence) -> Result<EpochOutcome, EnvError> {
        let reward = self.reward(a)?;
        let steps = a.steps();
        let percepts = (1..=steps.len()).map(|j| self.space.prefix_id(&steps[..j])).collect();
        Ok(EpochOutcome { percepts, reward })
    }

    fn reward(&self, a: &ActionSequence) -> Result<f64, EnvError> {
        self.space.validate(a)?;
        Ok(self.rewards.get(a).copied().unwrap_or(0.0))
    }

    fn coverage(&self, prefix: &[usize]) -> Coverage {
        let below = self.rewarded_below(prefix);
        if below == 0 {
            Coverage::NoReward
        } else if below == self.space.subtree_size(prefix.len()) {
            Coverage::AllRewarded
        } else {
            Coverage::Mixed
        }
    }

    fn prunes_by_coverage(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tree(l: usize, k: usize) -> BinaryTreeEnv {
        BinaryTreeEnv::new(l, k, ActionSequence::from_bits(0b1011_0010_1101 & ((1 << l) - 1), l)).unwrap()
    }

    fn deviate_at(env: &BinaryTreeEnv, decision: usize) -> ActionSequence {
        let mut steps = env.correct_path().steps().to_vec();
        steps[decision - 1] ^= 1;
        ActionSequence::new(steps)
    }

    #[test]
    fn correct_path_gets_full_reward() {
        let env = tree(12, 5);
        let out = env.evaluate(env.correct_path()).unwrap();
        assert_eq!(out.reward, 32.0);
        assert_eq!(out.percepts.len(), 12);
    }

    #[test]
    fn deviation_after_seven_correct_decisions() {
        let env = tree(12, 5);
        assert_eq!(env.reward(&deviate_at(&env, 8)).unwrap(), 1.0);
    }

    #[test]
    fn deviation_at_first_decision_is_unrewarded() {
        let env = tree(12, 5);
        assert_eq!(env.reward(&deviate_at(&env, 1)).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let env = tree(4, 2);
        assert!(matches!(
            env.evaluate(&ActionSequence::new(vec![0, 1, 0])),
            Err(EnvError::LengthMismatch { expected: 4, got: 3 })
        ));
        assert!(matches!(
            env.evaluate(&ActionSequence::new(vec![0, 2, 0, 0])),
            Err(EnvError::ActionOutOfRange {
                step: 1,
                action: 2,
                arity: 2
            })
        ));
        assert!(BinaryTreeEnv::new(3, 4, ActionSequence::from_bits(0, 3)).is_err());
    }

    #[test]
    fn count_rewarded_examples() {
        assert_eq!(count_rewarded(&tree(12, 5), DEFAULT_ENUMERATION_LIMIT).unwrap(), 32);
        assert_eq!(count_rewarded(&tree(3, 0), DEFAULT_ENUMERATION_LIMIT).unwrap(), 1);
        assert_eq!(count_rewarded(&tree(5, 5), DEFAULT_ENUMERATION_LIMIT).unwrap(), 32);
        let err = count_rewarded(&tree(12, 5), 1000).unwrap_err();
        assert!(matches!(err, EnvError::NotEnumerable { .. }));
    }

    #[test]
    fn rewarded_leaf_count_is_two_to_the_k() {
        for l in 1..=16 {
            for k in 1..=l {
                let env = BinaryTreeEnv::with_seeded_path(l, k, (l * 31 + k) as u64).unwrap();
                let count = count_rewarded(&env, DEFAULT_ENUMERATION_LIMIT).unwrap();
                assert_eq!(count, 1 << k, "l={l} k={k}");
                assert_eq!(env.rewarded_count(), count);
            }
        }
    }

    #[test]
    fn pruned_rewarded_walk_matches_brute_force() {
        let env = tree(12, 5);
        let pruned = rewarded_sequences(&env, 1 << 10).unwrap();
        let brute: Vec<_> = env
            .space()
            .iter()
            .filter_map(|a| {
                let r = env.reward(&a).unwrap();
                (r > 0.0).then_some((a, r))
            })
            .collect();
        assert_eq!(pruned, brute);
        let total: f64 = pruned.iter().map(|(_, r)| r).sum();
        assert_eq!(total, 112.0);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let env = tree(12, 5);
        let a = deviate_at(&env, 10);
        let first = env.evaluate(&a).unwrap();
        for _ in 0..1000 {
            let again = env.evaluate(&a).unwrap();
            assert_eq!(again.percepts, first.percepts);
            assert_eq!(again.reward.to_bits(), first.reward.to_bits());
        }
    }

    #[test]
    fn percepts_are_prefix_node_ids() {
        let env = tree(3, 1);
        let a = ActionSequence::new(vec![1, 0, 1]);
        let out = env.evaluate(&a).unwrap();
        // prefixes "1", "10", "101" -> 1+1, 3+2, 7+5
        assert_eq!(out.percepts, vec![2, 5, 12]);
    }

    #[test]
    fn space_index_round_trip() {
        let space = SequenceSpace::new(vec![3, 2, 4]).unwrap();
        assert_eq!(space.size(), 24);
        for (i, a) in space.iter().enumerate() {
            assert_eq!(space.index_of(&a), i as u64);
            assert_eq!(space.sequence_at(i as u64), a);
        }
        assert_eq!(space.iter().count(), 24);
    }

    #[test]
    fn table_parse_and_coverage() {
        let text = "# two rewarded leaves\n110,2\n111 , 1.5 # trailing\n\n";
        let env = RewardTableEnv::parse(text, None).unwrap();
        assert_eq!(env.space().epoch_length(), 3);
        assert_eq!(env.reward(&"110".parse().unwrap()).unwrap(), 2.0);
        assert_eq!(env.reward(&"010".parse().unwrap()).unwrap(), 0.0);
        assert_eq!(env.coverage(&[1, 1]), Coverage::AllRewarded);
        assert_eq!(env.coverage(&[1]), Coverage::Mixed);
        assert_eq!(env.coverage(&[0]), Coverage::NoReward);
        let again = RewardTableEnv::parse(&env.to_text(), None).unwrap();
        assert_eq!(again.to_text(), env.to_text());
    }

    #[test]
    fn table_rejects_bad_input() {
        assert!(matches!(
            RewardTableEnv::parse("# nothing\n", None),
            Err(EnvError::NoRewardedSequence)
        ));
        assert!(matches!(
            RewardTableEnv::parse("01,1\n012,1\n", None),
            Err(EnvError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            RewardTableEnv::parse("01,abc\n", None),
            Err(EnvError::Parse { line: 1, .. })
        ));
        assert!(RewardTableEnv::parse("01,0\n", None).is_err());
    }

    #[test]
    fn wide_actions_display_with_dots() {
        let a = ActionSequence::new(vec![3, 11, 0]);
        assert_eq!(a.to_string(), "3.11.0");
        assert_eq!("3.11.0".parse::<ActionSequence>().unwrap(), a);
    }

    proptest! {
        #[test]
        fn reward_is_monotone_in_correct_prefix(l in 1usize..=16, k_frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let k = ((l as f64) * k_frac).floor() as usize;
            let env = BinaryTreeEnv::with_seeded_path(l, k, seed).unwrap();
            let mut last = 0;
            for x in 0..=l {
                let r = env.reward_for_prefix_len(x);
                prop_assert!(r >= last);
                last = r;
            }
            prop_assert_eq!(env.reward_for_prefix_len(l), 1u64 << k);
            if l > 0 {
                prop_assert!(env.reward_for_prefix_len(l - 1) < 1u64 << k);
            }
        }

        #[test]
        fn coverage_agrees_with_leaves(l in 1usize..=8, k_frac in 0.0f64..=1.0, seed in any::<u64>(), bits in any::<u64>(), depth_frac in 0.0f64..=1.0) {
            let k = ((l as f64) * k_frac).floor() as usize;
            let env = BinaryTreeEnv::with_seeded_path(l, k, seed).unwrap();
            let depth = ((l as f64) * depth_frac).floor() as usize;
            let prefix = ActionSequence::from_bits(bits & ((1u64 << l) - 1), l).steps()[..depth].to_vec();
            let rewarded: Vec<bool> = env.space().iter()
                .filter(|a| a.steps().starts_with(&prefix))
                .map(|a| env.reward(&a).unwrap() > 0.0)
                .collect();
            match env.coverage(&prefix) {
                Coverage::NoReward => prop_assert!(rewarded.iter().all(|r| !r)),
                Coverage::AllRewarded => prop_assert!(rewarded.iter().all(|&r| r)),
                Coverage::Mixed => {}
            }
        }
    }
}
