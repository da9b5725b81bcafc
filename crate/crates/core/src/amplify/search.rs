use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AmplifyError, Backend, GroverOutcome, PreparedSearch};
use crate::env::DseEnvironment;
use crate::policy::SequencePolicy;

/// How the iteration count of each attempt is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KSchedule {
    /// Uniform on `0..ceil(m)` with growing `m`, clipped to `k_max` when set.
    #[default]
    Exponential,
    /// Every attempt runs exactly `k_max` iterations.
    FixedKMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub lambda: f64,
    pub alpha_o: u32,
    pub k_max: Option<u32>,
    pub attempt_budget: Option<u64>,
    pub schedule: KSchedule,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            lambda: 6.0 / 5.0,
            alpha_o: 2,
            k_max: None,
            attempt_budget: None,
            schedule: KSchedule::Exponential,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), AmplifyError> {
        if !(self.lambda > 1.0 && self.lambda < 4.0 / 3.0) {
            return Err(AmplifyError::InvalidParams(format!(
                "lambda must lie in (1, 4/3), got {}",
                self.lambda
            )));
        }
        if self.alpha_o == 0 {
            return Err(AmplifyError::InvalidParams("alpha_o must be at least 1".into()));
        }
        if self.k_max == Some(0) {
            return Err(AmplifyError::InvalidParams(
                "k_max must be at least 1; k_max = 0 is classical play".into(),
            ));
        }
        if self.schedule == KSchedule::FixedKMax && self.k_max.is_none() {
            return Err(AmplifyError::InvalidParams("fixed_k_max schedule needs k_max".into()));
        }
        Ok(())
    }
}

/// State of the iteration-count schedule between attempts.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialSearch {
    m: f64,
    m_cap: f64,
    lambda: f64,
    k_max: Option<u32>,
    schedule: KSchedule,
}

impl ExponentialSearch {
    /// Starts with `m = 1`; `m` never exceeds `sqrt(1 / q_min)`.
    pub fn new(params: &SearchParams, q_min: f64) -> Result<Self, AmplifyError> {
        params.validate()?;
        if !(0.0..=1.0).contains(&q_min) {
            return Err(AmplifyError::ProbabilityDomain(q_min));
        }
        Ok(ExponentialSearch {
            m: 1.0,
            m_cap: (1.0 / q_min).sqrt(),
            lambda: params.lambda,
            k_max: params.k_max,
            schedule: params.schedule,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn next_k<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match (self.schedule, self.k_max) {
            (KSchedule::FixedKMax, Some(k)) => k,
            _ => {
                let upper = self.m.ceil().min(u32::MAX as f64) as u32;
                let k = if upper <= 1 { 0 } else { rng.random_range(0..upper) };
                self.k_max.map_or(k, |cap| k.min(cap))
            }
        }
    }

    pub fn on_failure(&mut self) {
        self.m = (self.lambda * self.m).min(self.m_cap).max(1.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found {
        outcome: GroverOutcome,
        total_epochs: u64,
        attempts: u64,
    },
    BudgetExhausted {
        epochs_spent: u64,
        attempts: u64,
    },
}

/// Repeats attempts until one is rewarded or the attempt budget is spent.
pub fn exponential_search<P, E, R>(
    policy: &P,
    env: &E,
    params: &SearchParams,
    q_min: f64,
    rng: &mut R,
    backend: Backend,
) -> Result<SearchOutcome, AmplifyError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    let mut schedule = ExponentialSearch::new(params, q_min)?;
    let prepared = PreparedSearch::prepare(backend, policy, env)?;
    let mut epochs = 0u64;
    let mut attempts = 0u64;
    loop {
        if params.attempt_budget.is_some_and(|b| attempts >= b) {
            return Ok(SearchOutcome::BudgetExhausted {
                epochs_spent: epochs,
                attempts,
            });
        }
        let k = schedule.next_k(rng);
        let outcome = prepared.attempt(policy, env, k, params.alpha_o, rng)?;
        epochs += outcome.epochs_consumed;
        attempts += 1;
        if outcome.rewarded {
            return Ok(SearchOutcome::Found {
                outcome,
                total_epochs: epochs,
                attempts,
            });
        }
        schedule.on_failure();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BinaryTreeEnv, RewardTableEnv, SequenceSpace};
    use crate::policy::HValueTreePolicy;
    use crate::rng::derive_rng;

    #[test]
    fn all_rewarded_finishes_in_one_epoch() {
        let space = SequenceSpace::binary(4).unwrap();
        let env = RewardTableEnv::from_fn(space, 1 << 8, |_| 1.0).unwrap();
        let p = HValueTreePolicy::new(4, 0.1).unwrap();
        let params = SearchParams::default();
        for seed in 0..50 {
            let mut rng = derive_rng(seed, 0);
            let out = exponential_search(&p, &env, &params, 1.0 / 16.0, &mut rng, Backend::Analytic).unwrap();
            match out {
                SearchOutcome::Found {
                    total_epochs,
                    attempts,
                    outcome,
                } => {
                    assert_eq!(total_epochs, 1);
                    assert_eq!(attempts, 1);
                    assert_eq!(outcome.iterations_k, 0);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn schedule_grows_to_cap() {
        let params = SearchParams::default();
        let mut s = ExponentialSearch::new(&params, 1.0 / 64.0).unwrap();
        let mut rng = derive_rng(0, 0);
        assert_eq!(s.next_k(&mut rng), 0);
        for _ in 0..100 {
            s.on_failure();
            assert!(s.next_k(&mut rng) < 8);
        }
        assert_eq!(s.m(), 8.0);
    }

    #[test]
    fn k_max_clips_and_fixes() {
        let capped = SearchParams {
            k_max: Some(2),
            ..SearchParams::default()
        };
        let mut s = ExponentialSearch::new(&capped, 1e-6).unwrap();
        let mut rng = derive_rng(1, 0);
        for _ in 0..60 {
            s.on_failure();
        }
        let ks: Vec<u32> = (0..1000).map(|_| s.next_k(&mut rng)).collect();
        assert!(ks.iter().all(|&k| k <= 2));
        assert!(ks.contains(&0) && ks.contains(&2));
        let fixed = SearchParams {
            k_max: Some(3),
            schedule: KSchedule::FixedKMax,
            ..SearchParams::default()
        };
        let s = ExponentialSearch::new(&fixed, 0.5).unwrap();
        assert_eq!(s.next_k(&mut rng), 3);
    }

    #[test]
    fn invalid_params_are_rejected() {
        for bad in [
            SearchParams {
                lambda: 1.0,
                ..SearchParams::default()
            },
            SearchParams {
                lambda: 1.4,
                ..SearchParams::default()
            },
            SearchParams {
                alpha_o: 0,
                ..SearchParams::default()
            },
            SearchParams {
                k_max: Some(0),
                ..SearchParams::default()
            },
            SearchParams {
                schedule: KSchedule::FixedKMax,
                ..SearchParams::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(ExponentialSearch::new(&SearchParams::default(), 1.5).is_err());
    }

    #[test]
    fn budget_exhaustion_reports_epochs() {
        let env = BinaryTreeEnv::with_seeded_path(12, 0, 2).unwrap();
        let p = HValueTreePolicy::new(12, 0.1).unwrap();
        let params = SearchParams {
            alpha_o: 1,
            attempt_budget: Some(3),
            ..SearchParams::default()
        };
        let mut rng = derive_rng(6, 0);
        // Q = 2^-12: three attempts with k <= 1 almost never succeed.
        match exponential_search(&p, &env, &params, 2f64.powi(-12), &mut rng, Backend::Analytic).unwrap() {
            SearchOutcome::BudgetExhausted { epochs_spent, attempts } => {
                assert_eq!(attempts, 3);
                assert!((3..=6).contains(&epochs_spent));
            }
            SearchOutcome::Found { attempts, .. } => assert!(attempts <= 3),
        }
    }

    #[test]
    fn mean_epochs_on_fresh_tree_below_bound() {
        let env = BinaryTreeEnv::with_seeded_path(12, 5, 1).unwrap();
        let p = HValueTreePolicy::new(12, 0.1).unwrap();
        let params = SearchParams {
            alpha_o: 1,
            ..SearchParams::default()
        };
        let n = 4000;
        let mut total = 0.0;
        for i in 0..n {
            let mut rng = derive_rng(99, i);
            match exponential_search(&p, &env, &params, 2f64.powi(-12), &mut rng, Backend::Analytic).unwrap() {
                SearchOutcome::Found { total_epochs, .. } => total += total_epochs as f64,
                other => panic!("{other:?}"),
            }
        }
        let mean = total / n as f64;
        assert!(mean < 2.25 * 128f64.sqrt(), "{mean}");
    }
}
