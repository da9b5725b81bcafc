use rand::Rng;

use super::AmplifyError;
use crate::env::{ActionSequence, DseEnvironment, SequenceSpace};
use crate::numeric::CompensatedSum;
use crate::policy::{enumerate_probabilities, SequencePolicy};

pub const DEFAULT_STATEVECTOR_LIMIT: u64 = 1 << 20;

/// Real amplitudes over the sequence space, indexed like
/// [`SequenceSpace::iter`]. Keeps the prepared state for the reflection
/// and the oracle's rewarded mask.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeState {
    space: SequenceSpace,
    amplitudes: Vec<f64>,
    reference: Vec<f64>,
    rewarded: Vec<bool>,
}

/// Prepares `sum_a sqrt(P(a)) |a>` and the rewarded mask of `env`.
pub fn statevector_prepare<P, E>(policy: &P, env: &E, limit: u64) -> Result<AmplitudeState, AmplifyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    let space = env.space();
    let size = space.size();
    if size > limit as u128 {
        return Err(AmplifyError::DimensionLimit { size, limit });
    }
    if policy.space() != space {
        return Err(crate::policy::PolicyError::ShapeMismatch(format!(
            "policy arities {:?}, environment arities {:?}",
            policy.space().arities(),
            space.arities()
        ))
        .into());
    }
    let probs = enumerate_probabilities(policy, limit)?;
    let amplitudes: Vec<f64> = probs.iter().map(|p| p.sqrt()).collect();
    let mut rewarded = vec![false; amplitudes.len()];
    for (a, _) in crate::env::rewarded_sequences(env, limit)? {
        rewarded[space.index_of(&a) as usize] = true;
    }
    Ok(AmplitudeState {
        space: space.clone(),
        reference: amplitudes.clone(),
        amplitudes,
        rewarded,
    })
}

impl AmplitudeState {
    /// State with explicit amplitudes; the reference state is the given
    /// vector.
    pub fn from_amplitudes(
        space: SequenceSpace,
        amplitudes: Vec<f64>,
        rewarded: Vec<bool>,
    ) -> Result<Self, AmplifyError> {
        if space.size() != amplitudes.len() as u128 || rewarded.len() != amplitudes.len() {
            return Err(AmplifyError::InvalidParams(format!(
                "{} amplitudes and {} mask entries for a space of {} sequences",
                amplitudes.len(),
                rewarded.len(),
                space.size()
            )));
        }
        Ok(AmplitudeState {
            space,
            reference: amplitudes.clone(),
            amplitudes,
            rewarded,
        })
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn rewarded_mask(&self) -> &[bool] {
        &self.rewarded
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a * a)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Total measurement probability of rewarded sequences.
    pub fn rewarded_mass(&self) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.rewarded)
            .filter(|(_, &r)| r)
            .map(|(a, _)| a * a)
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// Oracle sign flip on rewarded sequences followed by the reflection
    /// `I - 2 |psi><psi|` about the prepared state.
    pub fn grover_iterate(&mut self) {
        for (a, &r) in self.amplitudes.iter_mut().zip(&self.rewarded) {
            if r {
                *a = -*a;
            }
        }
        let overlap: f64 = self
            .reference
            .iter()
            .zip(&self.amplitudes)
            .map(|(p, a)| p * a)
            .collect::<CompensatedSum>()
            .value();
        for (a, p) in self.amplitudes.iter_mut().zip(&self.reference) {
            *a -= 2.0 * overlap * p;
        }
    }

    /// Draws a basis sequence with probability `|amplitude|^2`.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSequence {
        let probs = self.probabilities();
        let index = crate::policy::sample_index(&probs, rng.random());
        self.space.sequence_at(index as u64)
    }

    /// Cumulative table for repeated measurements of the same state.
    pub fn measurement_table(&self) -> MeasurementTable {
        let mut acc = 0.0;
        let cdf = self
            .amplitudes
            .iter()
            .map(|a| {
                acc += a * a;
                acc
            })
            .collect();
        MeasurementTable { cdf }
    }
}

/// Inverse-CDF sampler over basis indices.
#[derive(Clone, Debug)]
pub struct MeasurementTable {
    cdf: Vec<f64>,
}

impl MeasurementTable {
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}
