//! The h-value agent for binary decision trees.
//!
//! Every inner node of the tree carries one h-value per outgoing edge. The
//! decision at a node picks child `c` with probability
//! `0.5 + 0.5 tanh(beta (h_c - h_other))`, and a rewarded epoch adds its
//! reward to every h-value along the played path.

use std::fmt::Write as _;

use rand::Rng;

use super::{PolicyError, SequencePolicy};
use crate::env::{ActionSequence, EpochOutcome, SequenceSpace};

/// Probabilities of both children of a node with h-values `h`.
///
/// `0.5 + 0.5 tanh(x)` is evaluated as the logistic `1 / (1 + e^{-2x})` so
/// that the less likely child keeps full relative precision, and the more
/// likely child is taken as the complement, which makes the pair sum to
/// exactly 1.
#[inline]
pub fn decision_pair(h: [f64; 2], beta: f64) -> [f64; 2] {
    let d = beta * (h[0] - h[1]);
    if d >= 0.0 {
        let low = 1.0 / (1.0 + (2.0 * d).exp());
        [1.0 - low, low]
    } else {
        let low = 1.0 / (1.0 + (-2.0 * d).exp());
        [low, 1.0 - low]
    }
}

/// Probability of taking child `chosen` (0 or 1) at a node with h-values
/// `h_pair`.
pub fn decision_probability(h_pair: (f64, f64), chosen: usize, beta: f64) -> Result<f64, PolicyError> {
    for h in [h_pair.0, h_pair.1] {
        if !h.is_finite() {
            return Err(PolicyError::NonFinite(h));
        }
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(PolicyError::InvalidBeta(beta));
    }
    if chosen > 1 {
        return Err(PolicyError::ShapeMismatch(format!(
            "binary decision, got choice {chosen}"
        )));
    }
    Ok(decision_pair([h_pair.0, h_pair.1], beta)[chosen])
}

/// Softmax h-value policy on a binary tree with `layers` decisions.
///
/// Nodes are addressed by their prefix id (`2^depth - 1 + prefix bits`),
/// which is also the percept the binary tree environment reports, so a
/// node's children are `2 id + 1` and `2 id + 2`.
#[derive(Clone, Debug)]
pub struct HValueTreePolicy {
    space: SequenceSpace,
    beta: f64,
    initial_h: f64,
    h: Vec<[f64; 2]>,
    probs: Vec<[f64; 2]>,
    touched: Vec<bool>,
}

impl HValueTreePolicy {
    pub const MAX_LAYERS: usize = 20;

    /// Fresh policy with every h-value 0.
    pub fn new(layers: usize, beta: f64) -> Result<Self, PolicyError> {
        Self::with_initial_h(layers, beta, 0.0)
    }

    pub fn with_initial_h(layers: usize, beta: f64, initial_h: f64) -> Result<Self, PolicyError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PolicyError::InvalidBeta(beta));
        }
        if !initial_h.is_finite() {
            return Err(PolicyError::NonFinite(initial_h));
        }
        if layers == 0 || layers > Self::MAX_LAYERS {
            return Err(PolicyError::ShapeMismatch(format!(
                "tree policy supports 1..={} layers, got {layers}",
                Self::MAX_LAYERS
            )));
        }
        let nodes = (1usize << layers) - 1;
        Ok(HValueTreePolicy {
            space: SequenceSpace::binary(layers)?,
            beta,
            initial_h,
            h: vec![[initial_h; 2]; nodes],
            probs: vec![[0.5; 2]; nodes],
            touched: vec![false; nodes],
        })
    }

    pub fn layers(&self) -> usize {
        self.space.epoch_length()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn h_pair(&self, node: usize) -> [f64; 2] {
        self.h[node]
    }

    pub fn node_probabilities(&self, node: usize) -> [f64; 2] {
        self.probs[node]
    }

    fn node_of(prefix: &[usize]) -> usize {
        prefix.iter().fold(0, |node, &a| 2 * node + 1 + a)
    }

    /// Adds `reward` to the h-value of every edge along `a`.
    pub fn reinforce(&mut self, a: &ActionSequence, reward: f64) -> Result<(), PolicyError> {
        if !(reward.is_finite() && reward > 0.0) {
            return Err(PolicyError::NonPositiveReward(reward));
        }
        self.space.validate(a)?;
        let mut node = 0;
        for &action in a.steps() {
            let h = &mut self.h[node];
            h[action] += reward;
            if !h[action].is_finite() {
                return Err(PolicyError::NonFinite(h[action]));
            }
            self.probs[node] = decision_pair(*h, self.beta);
            self.touched[node] = true;
            node = 2 * node + 1 + action;
        }
        Ok(())
    }

    fn min_below(&self, node: usize, depth: usize) -> f64 {
        let layers = self.layers();
        if depth == layers {
            return 1.0;
        }
        if !self.touched[node] {
            return 0.5f64.powi((layers - depth) as i32);
        }
        let p = self.probs[node];
        (0..2)
            .map(|c| p[c] * self.min_below(2 * node + 1 + c, depth + 1))
            .fold(f64::INFINITY, f64::min)
    }

    /// Text dump of the touched nodes: a header line, then one line per
    /// node `id prefix h0 h1`. Untouched nodes keep the initial value.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "htree layers={} beta={} initial_h={}\n",
            self.layers(),
            self.beta,
            self.initial_h
        );
        for node in 0..self.h.len() {
            if self.touched[node] {
                let depth = (usize::BITS - (node + 1).leading_zeros() - 1) as usize;
                let bits = node + 1 - (1 << depth);
                let prefix: String = (0..depth)
                    .map(|i| if (bits >> (depth - 1 - i)) & 1 == 1 { '1' } else { '0' })
                    .collect();
                let prefix = if prefix.is_empty() { "-".to_string() } else { prefix };
                let [h0, h1] = self.h[node];
                writeln!(out, "{node} {prefix} {h0} {h1}").unwrap();
            }
        }
        out
    }

    /// Inverse of [`HValueTreePolicy::dump`].
    pub fn from_dump(text: &str) -> Result<Self, PolicyError> {
        let err = |line: usize, message: &str| PolicyError::Dump {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty dump"))?;
        let mut layers = None;
        let mut beta = None;
        let mut initial = None;
        for field in header.split_whitespace().skip(1) {
            let (key, value) = field.split_once('=').ok_or_else(|| err(1, "bad header field"))?;
            match key {
                "layers" => layers = value.parse::<usize>().ok(),
                "beta" => beta = value.parse::<f64>().ok(),
                "initial_h" => initial = value.parse::<f64>().ok(),
                _ => return Err(err(1, "unknown header field")),
            }
        }
        if !header.starts_with("htree ") {
            return Err(err(1, "missing htree header"));
        }
        let mut policy = Self::with_initial_h(
            layers.ok_or_else(|| err(1, "missing layers"))?,
            beta.ok_or_else(|| err(1, "missing beta"))?,
            initial.ok_or_else(|| err(1, "missing initial_h"))?,
        )?;
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(line_no, "expected `id prefix h0 h1`"));
            }
            let node: usize = fields[0].parse().map_err(|_| err(line_no, "bad node id"))?;
            if node >= policy.h.len() {
                return Err(err(line_no, "node id out of range"));
            }
            let h0: f64 = fields[2].parse().map_err(|_| err(line_no, "bad h0"))?;
            let h1: f64 = fields[3].parse().map_err(|_| err(line_no, "bad h1"))?;
            if !(h0.is_finite() && h1.is_finite()) {
                return Err(err(line_no, "non-finite h-value"));
            }
            policy.h[node] = [h0, h1];
            policy.probs[node] = decision_pair([h0, h1], policy.beta);
            policy.touched[node] = true;
        }
        Ok(policy)
    }
}

impl PartialEq for HValueTreePolicy {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space
            && self.beta.to_bits() == other.beta.to_bits()
            && self
                .h
                .iter()
                .zip(&other.h)
                .all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits())
            && self.touched == other.touched
    }
}

impl SequencePolicy for HValueTreePolicy {
    fn space(&self) -> &SequenceSpace {
        &self.space
    }

    fn step_distribution(&self, prefix: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.probs[Self::node_of(prefix)]);
    }

    fn min_sequence_probability(&self) -> f64 {
        self.min_below(0, 0)
    }

    fn update_on_reward(&mut self, a: &ActionSequence, outcome: &EpochOutcome) -> Result<(), PolicyError> {
        self.reinforce(a, outcome.reward)
    }

    fn sequence_probability(&self, a: &ActionSequence) -> Result<f64, PolicyError> {
        self.space.validate(a)?;
        let mut node = 0;
        let mut p = 1.0;
        for &action in a.steps() {
            p *= self.probs[node][action];
            node = 2 * node + 1 + action;
        }
        Ok(p)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSequence {
        let mut node = 0;
        let steps = (0..self.layers())
            .map(|_| {
                let u: f64 = rng.random();
                let action = if u < self.probs[node][0] { 0 } else { 1 };
                node = 2 * node + 1 + action;
                action
            })
            .collect();
        ActionSequence::new(steps)
    }
}
