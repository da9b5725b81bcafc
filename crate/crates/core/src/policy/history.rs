use super::{PolicyError, SequencePolicy};
use crate::env::{ActionSequence, DseEnvironment};

/// Ordered list of rewarded epochs. Replaying it into a fresh policy
/// reproduces the learned policy exactly, since updates only happen on
/// rewarded epochs and are deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardedHistory {
    entries: Vec<(ActionSequence, f64)>,
}

impl RewardedHistory {
    pub fn push(&mut self, a: ActionSequence, reward: f64) -> Result<(), PolicyError> {
        if !(reward.is_finite() && reward > 0.0) {
            return Err(PolicyError::NonPositiveReward(reward));
        }
        self.entries.push((a, reward));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ActionSequence, f64)] {
        &self.entries
    }

    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    /// Applies every entry to `policy` in order. Each sequence is evaluated
    /// again and must earn the recorded reward.
    pub fn replay<P, E>(&self, mut policy: P, env: &E) -> Result<P, PolicyError>
    where
        P: SequencePolicy,
        E: DseEnvironment + ?Sized,
    {
        for (index, (a, recorded)) in self.entries.iter().enumerate() {
            let outcome = env.evaluate(a)?;
            if outcome.reward != *recorded {
                return Err(PolicyError::HistoryMismatch {
                    index,
                    recorded: *recorded,
                    observed: outcome.reward,
                });
            }
            policy.update_on_reward(a, &outcome)?;
        }
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BinaryTreeEnv;
    use crate::policy::HValueTreePolicy;

    #[test]
    fn rejects_bad_entries_and_mismatched_replays() {
        let env = BinaryTreeEnv::new(3, 1, ActionSequence::from_bits(0, 3)).unwrap();
        let mut h = RewardedHistory::default();
        assert!(h.push(ActionSequence::from_bits(0, 3), 0.0).is_err());
        h.push(ActionSequence::from_bits(0, 3), 5.0).unwrap();
        let err = h.replay(HValueTreePolicy::new(3, 0.1).unwrap(), &env).unwrap_err();
        assert!(matches!(err, PolicyError::HistoryMismatch { index: 0, .. }));
        h.truncate(0);
        assert!(h.is_empty());
    }
}
