//! Amplitude amplification.
//!
//! Two interchangeable backends produce the outcome of `k` Grover
//! iterations followed by a measurement:
//!
//! - the analytic law: with probability `G(Q, k)` a rewarded sequence drawn
//!   from the policy restricted to the rewarded set, otherwise a sequence
//!   from the restriction to the unrewarded set;
//! - an exact statevector over the full sequence space.
//!
//! [`search`] drives repeated attempts with unknown success probability.

mod search;
mod statevector;

pub use search::{exponential_search, ExponentialSearch, KSchedule, SearchOutcome, SearchParams};
pub use statevector::{statevector_prepare, AmplitudeState, DEFAULT_STATEVECTOR_LIMIT};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionSequence, DseEnvironment, EpochOutcome};
use crate::policy::{sample_conditional, winning_probability, PolicyError, SequencePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmplifyError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("probability out of [0, 1]: {0}")]
    ProbabilityDomain(f64),
    #[error("statevector dimension {size} exceeds limit {limit}")]
    DimensionLimit { size: u128, limit: u64 },
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("oracle cost alpha_o and iteration count k must be at least 1")]
    ThresholdDomain,
}

impl From<crate::env::EnvError> for AmplifyError {
    fn from(e: crate::env::EnvError) -> Self {
        AmplifyError::Policy(PolicyError::Env(e))
    }
}

fn check_probability(q: f64) -> Result<(), AmplifyError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(AmplifyError::ProbabilityDomain(q))
    }
}

/// Probability of a reward after `k` Grover iterations,
/// `sin^2((2k+1) asin(sqrt(q)))`.
pub fn grover_success_prob(q: f64, k: u32) -> Result<f64, AmplifyError> {
    check_probability(q)?;
    let theta = q.sqrt().asin();
    let s = ((2 * k as u64 + 1) as f64 * theta).sin();
    Ok((s * s).clamp(0.0, 1.0))
}

/// Smallest winning probability for which `k_max` iterations reach
/// certainty, `sin^2(pi / (2 (2 k_max + 1)))`.
pub fn q_kmax(k_max: u32) -> f64 {
    let s = (std::f64::consts::PI / (2.0 * (2 * k_max as u64 + 1) as f64)).sin();
    s * s
}

const THRESHOLD_MAX_ITERATIONS: usize = 200;
const THRESHOLD_TOLERANCE: f64 = 1e-12;

/// Winning probability above which `k` iterations at oracle cost
/// `alpha_o` stop paying off: the first root of
/// `G(Q,k)/(alpha_o k + 1) - Q` above zero, so that quantum play has the
/// higher reward rate for every `Q` below it.
///
/// Returns 0 when quantum play never beats classical play.
pub fn q_max_threshold(alpha_o: u32, k: u32) -> Result<f64, AmplifyError> {
    if alpha_o == 0 || k == 0 {
        return Err(AmplifyError::ThresholdDomain);
    }
    let cost = (alpha_o as u64 * k as u64 + 1) as f64;
    let f = |q: f64| grover_success_prob(q, k).map(|g| g / cost - q);
    // Walk up in angle space with steps far below one oscillation of G.
    let step = std::f64::consts::PI / (2.0 * (2 * k as u64 + 1) as f64) / 64.0;
    let mut lo = 0.0;
    let mut i = 1;
    loop {
        let theta = (i as f64 * step).min(std::f64::consts::FRAC_PI_2);
        let hi = theta.sin().powi(2);
        if f(hi)? <= 0.0 {
            return if i == 1 { Ok(0.0) } else { bisect(f, lo, hi) };
        }
        lo = hi;
        i += 1;
    }
}

fn bisect<F>(f: F, mut lo: f64, mut hi: f64) -> Result<f64, AmplifyError>
where
    F: Fn(f64) -> Result<f64, AmplifyError>,
{
    for _ in 0..THRESHOLD_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < THRESHOLD_TOLERANCE {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Result of one attempt: `k` iterations, a measurement and the
/// verification epoch that plays the measured sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct GroverOutcome {
    pub measured: ActionSequence,
    pub iterations_k: u32,
    pub epochs_consumed: u64,
    pub rewarded: bool,
    pub reward: f64,
    pub outcome: EpochOutcome,
}

/// Epochs spent by one attempt with `k` iterations.
pub fn attempt_cost(alpha_o: u32, k: u32) -> u64 {
    alpha_o as u64 * k as u64 + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Analytic,
    Statevector,
}

/// Backend state prepared once per policy state; attempts reuse it until
/// the policy changes.
#[derive(Clone, Debug)]
pub enum PreparedSearch {
    Analytic { q: f64 },
    Statevector(AmplitudeState),
}

impl PreparedSearch {
    pub fn prepare<P, E>(backend: Backend, policy: &P, env: &E) -> Result<Self, AmplifyError>
    where
        P: SequencePolicy + ?Sized,
        E: DseEnvironment + ?Sized,
    {
        Ok(match backend {
            Backend::Analytic => PreparedSearch::Analytic {
                q: winning_probability(policy, env)?,
            },
            Backend::Statevector => {
                PreparedSearch::Statevector(statevector_prepare(policy, env, DEFAULT_STATEVECTOR_LIMIT)?)
            }
        })
    }

    /// One attempt with `k` iterations. `policy` must be the policy the
    /// search was prepared from.
    pub fn attempt<P, E, R>(
        &self,
        policy: &P,
        env: &E,
        k: u32,
        alpha_o: u32,
        rng: &mut R,
    ) -> Result<GroverOutcome, AmplifyError>
    where
        P: SequencePolicy + ?Sized,
        E: DseEnvironment + ?Sized,
        R: Rng + ?Sized,
    {
        let measured = match self {
            PreparedSearch::Analytic { q } => analytic_measure(policy, env, *q, k, rng)?,
            PreparedSearch::Statevector(state) => {
                let mut s = state.clone();
                for _ in 0..k {
                    s.grover_iterate();
                }
                s.measure(rng)
            }
        };
        verify(env, measured, k, alpha_o)
    }
}

fn verify<E: DseEnvironment + ?Sized>(
    env: &E,
    measured: ActionSequence,
    k: u32,
    alpha_o: u32,
) -> Result<GroverOutcome, AmplifyError> {
    let outcome = env.evaluate(&measured)?;
    Ok(GroverOutcome {
        measured,
        iterations_k: k,
        epochs_consumed: attempt_cost(alpha_o, k),
        rewarded: outcome.reward > 0.0,
        reward: outcome.reward,
        outcome,
    })
}

fn analytic_measure<P, E, R>(policy: &P, env: &E, q: f64, k: u32, rng: &mut R) -> Result<ActionSequence, AmplifyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Ok(policy.sample(rng));
    }
    let g = grover_success_prob(q, k)?;
    let want_rewarded = rng.random::<f64>() < g;
    match sample_conditional(policy, env, want_rewarded, rng)? {
        Some(a) => Ok(a),
        // The drawn set has no mass; G is 0 or 1 up to rounding.
        None => {
            Ok(sample_conditional(policy, env, !want_rewarded, rng)?.expect("policy mass lies in one of the two sets"))
        }
    }
}

/// Outcome of `k` iterations under the analytic law followed by the
/// verification epoch.
pub fn analytic_grover_sample<P, E, R>(
    policy: &P,
    env: &E,
    k: u32,
    alpha_o: u32,
    rng: &mut R,
) -> Result<GroverOutcome, AmplifyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    let q = winning_probability(policy, env)?;
    let measured = analytic_measure(policy, env, q, k, rng)?;
    verify(env, measured, k, alpha_o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BinaryTreeEnv, RewardTableEnv, SequenceSpace};
    use crate::policy::HValueTreePolicy;
    use crate::rng::derive_rng;
    use proptest::prelude::*;

    #[test]
    fn g_law_examples() {
        for q in [0.0, 0.1, 0.37, 1.0] {
            assert!((grover_success_prob(q, 0).unwrap() - q).abs() < 1e-15);
        }
        assert!((grover_success_prob(0.25, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(grover_success_prob(1.2, 1).is_err());
        assert!(grover_success_prob(-0.1, 1).is_err());
    }

    #[test]
    fn q_kmax_examples() {
        assert_eq!(q_kmax(0), 1.0);
        assert!((q_kmax(1) - 0.25).abs() < 1e-15);
        for k in 0..=50 {
            assert!((grover_success_prob(q_kmax(k), k).unwrap() - 1.0).abs() < 1e-12);
            assert!(q_kmax(k + 1) < q_kmax(k));
        }
    }

    #[test]
    fn q_max_examples() {
        let q1 = q_max_threshold(1, 1).unwrap();
        assert!((q1 - 0.3964).abs() < 5e-4, "{q1}");
        let f = grover_success_prob(q1, 1).unwrap() / 2.0 - q1;
        assert!(f.abs() < 1e-8);
        let q2 = q_max_threshold(2, 1).unwrap();
        assert!(q2 < q1);
        assert!(q_max_threshold(1, 2).unwrap() < q1);
        // Further lobes of G above 1/(k+1) do not move the threshold.
        let q5 = q_max_threshold(1, 5).unwrap();
        assert!((q5 - 0.0526).abs() < 1e-3, "{q5}");
        // (2k+1)^2 = alpha_o k + 1: no advantage even for small Q.
        assert_eq!(q_max_threshold(8, 1).unwrap(), 0.0);
        assert!(matches!(q_max_threshold(0, 1), Err(AmplifyError::ThresholdDomain)));
        assert!(matches!(q_max_threshold(1, 0), Err(AmplifyError::ThresholdDomain)));
    }

    #[test]
    fn q_max_decreases_in_both_arguments() {
        for alpha in 1..=4 {
            for k in 1..=8 {
                let q = q_max_threshold(alpha, k).unwrap();
                assert!(q > 0.0 && q < 1.0);
                assert!(q_max_threshold(alpha + 1, k).unwrap() < q);
                assert!(q_max_threshold(alpha, k + 1).unwrap() < q);
            }
        }
    }

    #[test]
    fn certain_success_at_quarter() {
        let space = SequenceSpace::binary(2).unwrap();
        let env = RewardTableEnv::new(space, vec![(ActionSequence::from_bits(2, 2), 1.0)]).unwrap();
        let p = HValueTreePolicy::new(2, 0.1).unwrap();
        let mut rng = derive_rng(0, 0);
        for _ in 0..200 {
            let out = analytic_grover_sample(&p, &env, 1, 2, &mut rng).unwrap();
            assert!(out.rewarded);
            assert_eq!(out.epochs_consumed, 3);
        }
    }

    #[test]
    fn backends_agree_on_certain_outcomes() {
        let env = BinaryTreeEnv::with_seeded_path(4, 0, 3).unwrap();
        let p = HValueTreePolicy::new(4, 0.1).unwrap();
        // Q = 1/16: one iteration gives sin^2(3 asin(1/4)).
        let g = grover_success_prob(1.0 / 16.0, 1).unwrap();
        let state = statevector_prepare(&p, &env, 1 << 10).unwrap();
        let mut s = state.clone();
        s.grover_iterate();
        assert!((s.rewarded_mass() - g).abs() < 1e-14);
        let prep = PreparedSearch::prepare(Backend::Statevector, &p, &env).unwrap();
        let mut rng = derive_rng(5, 0);
        let out = prep.attempt(&p, &env, 0, 2, &mut rng).unwrap();
        assert_eq!(out.epochs_consumed, 1);
        assert_eq!(out.iterations_k, 0);
    }

    proptest! {
        #[test]
        fn g_law_is_a_probability(q in 0.0f64..=1.0, k in 0u32..200) {
            let g = grover_success_prob(q, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }
}
