//! Map-building agent.
//!
//! The agent records the transitions `(percept, action) -> percept` it has
//! observed in rewarded epochs and keeps one weight vector per known
//! percept. Planning chains the per-step distributions along the map; any
//! step whose percept has not been observed yet uses the uniform
//! distribution over the step's actions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use super::{PolicyError, SequencePolicy};
use crate::env::{ActionSequence, EpochOutcome, Percept, SequenceSpace};

/// Rule that folds one rewarded (percept, action) pair into the percept's
/// weight vector.
pub trait WeightUpdate: Send + Sync {
    fn name(&self) -> &str;
    fn apply(&self, weights: &mut [f64], action: usize, reward: f64);
}

/// Adds the reward to the chosen action's weight.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdditiveUpdate;

impl WeightUpdate for AdditiveUpdate {
    fn name(&self) -> &str {
        "additive"
    }

    fn apply(&self, weights: &mut [f64], action: usize, reward: f64) {
        weights[action] += reward;
    }
}

/// Looks up a shipped update rule by its configuration name.
pub fn update_rule_by_name(name: &str) -> Result<Arc<dyn WeightUpdate>, PolicyError> {
    match name {
        "additive" => Ok(Arc::new(AdditiveUpdate)),
        other => Err(PolicyError::UnknownUpdateRule(other.to_string())),
    }
}

type StepKey = (usize, Percept);

/// Policy that plans with a learned map of the environment.
///
/// Known percepts use `softmax(2 beta w)`; for two actions this coincides
/// with the tree agent's `0.5 + 0.5 tanh(beta (w_c - w_other))`.
#[derive(Clone)]
pub struct MapPolicy {
    space: SequenceSpace,
    beta: f64,
    initial_percept: Percept,
    transitions: BTreeMap<(usize, Percept, usize), Percept>,
    weights: BTreeMap<StepKey, Vec<f64>>,
    rule: Arc<dyn WeightUpdate>,
}

impl fmt::Debug for MapPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapPolicy")
            .field("arities", &self.space.arities())
            .field("beta", &self.beta)
            .field("rule", &self.rule.name())
            .field("known_transitions", &self.transitions.len())
            .finish()
    }
}

impl MapPolicy {
    pub fn new(space: SequenceSpace, beta: f64, initial_percept: Percept) -> Result<Self, PolicyError> {
        Self::with_rule(space, beta, initial_percept, Arc::new(AdditiveUpdate))
    }

    pub fn with_rule(
        space: SequenceSpace,
        beta: f64,
        initial_percept: Percept,
        rule: Arc<dyn WeightUpdate>,
    ) -> Result<Self, PolicyError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PolicyError::InvalidBeta(beta));
        }
        Ok(MapPolicy {
            space,
            beta,
            initial_percept,
            transitions: BTreeMap::new(),
            weights: BTreeMap::new(),
            rule,
        })
    }

    pub fn known_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// Percept the map predicts after `prefix`, or `None` once the prefix
    /// leaves the mapped region.
    pub fn percept_after(&self, prefix: &[usize]) -> Option<Percept> {
        let mut percept = self.initial_percept;
        for (step, &action) in prefix.iter().enumerate() {
            percept = *self.transitions.get(&(step, percept, action))?;
        }
        Some(percept)
    }

    fn distribution_at(&self, step: usize, percept: Option<Percept>, out: &mut Vec<f64>) {
        let arity = self.space.arity(step);
        out.clear();
        match percept.and_then(|p| self.weights.get(&(step, p))) {
            Some(w) => {
                let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                out.extend(w.iter().map(|&x| (2.0 * self.beta * (x - max)).exp()));
                let total: f64 = out.iter().sum();
                out.iter_mut().for_each(|x| *x /= total);
            }
            None => out.resize(arity, 1.0 / arity as f64),
        }
    }

    fn min_from(&self, step: usize, percept: Option<Percept>, memo: &mut HashMap<StepKey, f64>) -> f64 {
        let len = self.space.epoch_length();
        if step == len {
            return 1.0;
        }
        let Some(p) = percept else {
            return self.space.arities()[step..].iter().map(|&a| 1.0 / a as f64).product();
        };
        if let Some(&v) = memo.get(&(step, p)) {
            return v;
        }
        let mut dist = Vec::new();
        self.distribution_at(step, Some(p), &mut dist);
        let v = dist
            .iter()
            .enumerate()
            .map(|(action, &q)| {
                let next = self.transitions.get(&(step, p, action)).copied();
                q * self.min_from(step + 1, next, memo)
            })
            .fold(f64::INFINITY, f64::min);
        memo.insert((step, p), v);
        v
    }

    /// Text dump: transitions then weights, one per line.
    pub fn dump(&self) -> String {
        let mut out = format!("map rule={} beta={}\n", self.rule.name(), self.beta);
        for ((step, from, action), to) in &self.transitions {
            out.push_str(&format!("t {step} {from} {action} {to}\n"));
        }
        for ((step, percept), w) in &self.weights {
            let ws: Vec<String> = w.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("w {step} {percept} {}\n", ws.join(" ")));
        }
        out
    }
}

impl SequencePolicy for MapPolicy {
    fn space(&self) -> &SequenceSpace {
        &self.space
    }

    fn step_distribution(&self, prefix: &[usize], out: &mut Vec<f64>) {
        self.distribution_at(prefix.len(), self.percept_after(prefix), out);
    }

    fn min_sequence_probability(&self) -> f64 {
        let mut memo = HashMap::new();
        self.min_from(0, Some(self.initial_percept), &mut memo)
    }

    fn update_on_reward(&mut self, a: &ActionSequence, outcome: &EpochOutcome) -> Result<(), PolicyError> {
        let reward = outcome.reward;
        if !(reward.is_finite() && reward > 0.0) {
            return Err(PolicyError::NonPositiveReward(reward));
        }
        self.space.validate(a)?;
        if outcome.percepts.len() != a.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "{} percepts for {} actions",
                outcome.percepts.len(),
                a.len()
            )));
        }
        let mut percept = self.initial_percept;
        for (step, (&action, &next)) in a.steps().iter().zip(&outcome.percepts).enumerate() {
            match self.transitions.insert((step, percept, action), next) {
                Some(prev) if prev != next => return Err(PolicyError::InconsistentTransition { step }),
                _ => {}
            }
            let arity = self.space.arity(step);
            let w = self.weights.entry((step, percept)).or_insert_with(|| vec![0.0; arity]);
            self.rule.apply(w, action, reward);
            if let Some(bad) = w.iter().find(|x| !x.is_finite()) {
                return Err(PolicyError::NonFinite(*bad));
            }
            percept = next;
        }
        Ok(())
    }
}
