//! Distributions of rewarded histories.

use std::collections::BTreeMap;
use std::fmt;

use super::StatsError;
use crate::agents::AgentTrace;
use crate::env::{rewarded_sequences, ActionSequence, DseEnvironment, DEFAULT_ENUMERATION_LIMIT};
use crate::numeric::CompensatedSum;
use crate::policy::SequencePolicy;

/// A rewarded history truncated to its first `J` rewarded sequences. The
/// rewards are functions of the sequences and are left out of the key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistoryKey(pub Vec<ActionSequence>);

impl fmt::Display for HistoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardedHistoryDistribution {
    pub j: usize,
    pub probabilities: BTreeMap<HistoryKey, f64>,
}

impl RewardedHistoryDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.values().copied().collect::<CompensatedSum>().value()
    }
}

/// Exact law of the first `j` rewarded sequences: each interval ends with
/// rewarded `a` with probability `P_j(a) / Q_j` under the policy reached
/// so far.
pub fn exact_history_distribution<P, E>(
    initial_policy: &P,
    env: &E,
    j: usize,
    limit: u64,
) -> Result<RewardedHistoryDistribution, StatsError>
where
    P: SequencePolicy + Clone,
    E: DseEnvironment + ?Sized,
{
    let probabilities = expand_all(initial_policy, env, j, limit)?
        .into_iter()
        .map(|(k, (p, _))| (k, p))
        .collect();
    Ok(RewardedHistoryDistribution { j, probabilities })
}

/// Probability of each truncated history together with the expected
/// number of classical epochs needed to collect it, `sum_i 1 / Q_i`.
pub fn exact_classical_epochs_by_history<P, E>(
    initial_policy: &P,
    env: &E,
    j: usize,
    limit: u64,
) -> Result<BTreeMap<HistoryKey, (f64, f64)>, StatsError>
where
    P: SequencePolicy + Clone,
    E: DseEnvironment + ?Sized,
{
    expand_all(initial_policy, env, j, limit)
}

fn expand_all<P, E>(
    initial_policy: &P,
    env: &E,
    j: usize,
    limit: u64,
) -> Result<BTreeMap<HistoryKey, (f64, f64)>, StatsError>
where
    P: SequencePolicy + Clone,
    E: DseEnvironment + ?Sized,
{
    let rewarded = rewarded_sequences(env, DEFAULT_ENUMERATION_LIMIT)?;
    let branches = (rewarded.len() as u128).checked_pow(j as u32).unwrap_or(u128::MAX);
    if branches > limit as u128 {
        return Err(StatsError::HistoryLimit { branches, limit });
    }
    let mut out = BTreeMap::new();
    let mut prefix = Vec::with_capacity(j);
    expand(initial_policy, env, &rewarded, j, (1.0, 0.0), &mut prefix, &mut out)?;
    Ok(out)
}

fn expand<P, E>(
    policy: &P,
    env: &E,
    rewarded: &[(ActionSequence, f64)],
    remaining: usize,
    (mass, epochs): (f64, f64),
    prefix: &mut Vec<ActionSequence>,
    out: &mut BTreeMap<HistoryKey, (f64, f64)>,
) -> Result<(), StatsError>
where
    P: SequencePolicy + Clone,
    E: DseEnvironment + ?Sized,
{
    if remaining == 0 {
        out.insert(HistoryKey(prefix.clone()), (mass, epochs));
        return Ok(());
    }
    let probs = rewarded
        .iter()
        .map(|(a, _)| policy.sequence_probability(a))
        .collect::<Result<Vec<f64>, _>>()?;
    let q = probs.iter().copied().collect::<CompensatedSum>().value();
    for ((a, _), p) in rewarded.iter().zip(probs) {
        if p == 0.0 {
            continue;
        }
        let mut next = policy.clone();
        next.update_on_reward(a, &env.evaluate(a)?)?;
        prefix.push(a.clone());
        expand(
            &next,
            env,
            rewarded,
            remaining - 1,
            (mass * p / q, epochs + 1.0 / q),
            prefix,
            out,
        )?;
        prefix.pop();
    }
    Ok(())
}

/// Frequency table of truncated rewarded histories across traces.
pub fn empirical_history_counts(traces: &[AgentTrace], j: usize) -> Result<BTreeMap<HistoryKey, u64>, StatsError> {
    if traces.is_empty() {
        return Err(StatsError::InsufficientData("no traces".into()));
    }
    let mut counts = BTreeMap::new();
    for (index, tr) in traces.iter().enumerate() {
        if tr.rewards.len() < j {
            return Err(StatsError::TooFewRewards {
                index,
                found: tr.rewards.len(),
                needed: j,
            });
        }
        let key = tr.rewards[..j]
            .iter()
            .map(|e| e.sequence.clone().ok_or(StatsError::MissingSequences))
            .collect::<Result<Vec<_>, _>>()?;
        *counts.entry(HistoryKey(key)).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Normalized frequencies of [`empirical_history_counts`].
pub fn empirical_history_distribution(
    traces: &[AgentTrace],
    j: usize,
) -> Result<RewardedHistoryDistribution, StatsError> {
    let counts = empirical_history_counts(traces, j)?;
    let n = traces.len() as f64;
    Ok(RewardedHistoryDistribution {
        j,
        probabilities: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
    })
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::env::{BinaryTreeEnv, RewardTableEnv, SequenceSpace};
    use crate::policy::HValueTreePolicy;

    #[test]
    fn single_rewarded_sequence_is_certain() {
        let space = SequenceSpace::binary(1).unwrap();
        let env = RewardTableEnv::new(space, vec![(ActionSequence::new(vec![1]), 1.0)]).unwrap();
        let p = HValueTreePolicy::new(1, 0.1).unwrap();
        let d = exact_history_distribution(&p, &env, 1, 100).unwrap();
        assert_eq!(d.probabilities.len(), 1);
        assert_eq!(d.total(), 1.0);
    }

    #[test]
    fn symmetric_first_reward_on_small_tree() {
        let env = BinaryTreeEnv::with_seeded_path(3, 1, 0).unwrap();
        let p = HValueTreePolicy::new(3, 0.1).unwrap();
        let d = exact_history_distribution(&p, &env, 1, 100).unwrap();
        assert_eq!(d.probabilities.len(), 2);
        for &v in d.probabilities.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let d2 = exact_history_distribution(&p, &env, 2, 100).unwrap();
        assert_eq!(d2.probabilities.len(), 4);
        assert!((d2.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_epochs_on_small_tree() {
        // Two rewarded leaves of eight under a uniform policy: Q = 1/4
        // before any update.
        let env = BinaryTreeEnv::with_seeded_path(3, 1, 0).unwrap();
        let p = HValueTreePolicy::new(3, 0.1).unwrap();
        let by = exact_classical_epochs_by_history(&p, &env, 1, 100).unwrap();
        for &(mass, epochs) in by.values() {
            assert!((mass - 0.5).abs() < 1e-15);
            assert!((epochs - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_is_enforced() {
        let env = BinaryTreeEnv::with_seeded_path(6, 4, 0).unwrap();
        let p = HValueTreePolicy::new(6, 0.1).unwrap();
        assert!(matches!(
            exact_history_distribution(&p, &env, 4, 1000),
            Err(StatsError::HistoryLimit { .. })
        ));
    }
}
