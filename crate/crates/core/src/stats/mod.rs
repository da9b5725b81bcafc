//! Exact oracles, estimators and bound checks.

mod curve;
mod history;
pub mod thresholds;

pub use curve::{average_reward_curve, BinPoint, BinnedCurve, CurveAccounting, CurveAccumulator, CurvePoint};
pub use history::{
    empirical_history_counts, empirical_history_distribution, exact_classical_epochs_by_history,
    exact_history_distribution, HistoryKey, RewardedHistoryDistribution,
};
pub use tests::{
    chi_square_goodness_of_fit, chi_square_two_sample, geometric_cdf, geometric_pit, kolmogorov_sf, ks_test_uniform,
    tv_check, ChiSquareResult, DistributionCheck, KsResult,
};

use std::fmt;

use thiserror::Error;

use crate::agents::{epochs_to_reward_stats, AgentTrace, IntervalSummary};
use crate::amplify::q_kmax;
use crate::env::EnvError;
use crate::numeric::mean_variance;
use crate::policy::PolicyError;
use thresholds::MEAN_SIGMAS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{branches} rewarded histories exceed the enumeration limit {limit}")]
    HistoryLimit { branches: u128, limit: u64 },
    #[error("trace {index} found {found} rewards, {needed} needed")]
    TooFewRewards { index: usize, found: usize, needed: usize },
    #[error("traces were recorded without action sequences")]
    MissingSequences,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("summaries were computed for different thresholds ({0} vs {1})")]
    MismatchedConfigs(f64, f64),
    #[error("outside the bound's validity region: {0}")]
    OutsideValidity(String),
}

impl From<EnvError> for StatsError {
    fn from(e: EnvError) -> Self {
        StatsError::Policy(PolicyError::Env(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearningTime {
    Epochs(u64),
    Censored,
}

/// First epoch whose post-update winning probability reaches `q_l`; 0 if
/// the initial policy already does.
pub fn learning_time(trace: &AgentTrace, q_l: f64) -> LearningTime {
    if trace.initial_q >= q_l {
        return LearningTime::Epochs(0);
    }
    trace
        .rewards
        .iter()
        .find(|e| e.q_after >= q_l)
        .map_or(LearningTime::Censored, |e| LearningTime::Epochs(e.epoch))
}

/// Rewards observed up to and including the learning epoch.
pub fn rewards_to_learn(trace: &AgentTrace, q_l: f64) -> Option<u64> {
    match learning_time(trace, q_l) {
        LearningTime::Epochs(t) => Some(trace.rewards.iter().take_while(|e| e.epoch <= t).count() as u64),
        LearningTime::Censored => None,
    }
}

/// Learning-time statistics of one ensemble. Censored traces are counted
/// but excluded from the moments.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningTimeSummary {
    pub q_l: f64,
    pub n: usize,
    pub censored_count: usize,
    pub mean_t: f64,
    pub var_t: f64,
    pub mean_j: f64,
    pub var_j: f64,
    pub cov_tj: f64,
    /// Mean learning time with censored traces counted at their total
    /// epochs.
    pub mean_t_with_censored: f64,
    pub per_interval: Vec<IntervalSummary>,
}

impl LearningTimeSummary {
    pub fn from_traces(traces: &[AgentTrace], q_l: f64) -> Self {
        let mut ts = Vec::with_capacity(traces.len());
        let mut js = Vec::with_capacity(traces.len());
        let mut with_censored = Vec::with_capacity(traces.len());
        for tr in traces {
            match learning_time(tr, q_l) {
                LearningTime::Epochs(t) => {
                    ts.push(t as f64);
                    js.push(rewards_to_learn(tr, q_l).unwrap_or(0) as f64);
                    with_censored.push(t as f64);
                }
                LearningTime::Censored => with_censored.push(tr.total_epochs as f64),
            }
        }
        let (mean_t, var_t) = mean_variance(&ts);
        let (mean_j, var_j) = mean_variance(&js);
        let n = ts.len() as f64;
        let cov_tj = if ts.len() > 1 {
            ts.iter()
                .zip(&js)
                .map(|(t, j)| (t - mean_t) * (j - mean_j))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        LearningTimeSummary {
            q_l,
            n: ts.len(),
            censored_count: traces.len() - ts.len(),
            mean_t,
            var_t,
            mean_j,
            var_j,
            cov_tj,
            mean_t_with_censored: mean_variance(&with_censored).0,
            per_interval: epochs_to_reward_stats(traces),
        }
    }

    pub fn std_t(&self) -> f64 {
        self.var_t.sqrt()
    }

    pub fn stderr_t(&self) -> f64 {
        (self.var_t / self.n as f64).sqrt()
    }
}

/// One line of a pass/fail report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// Distance to the bound in standard errors, positive on the passing
    /// side; `NaN` for deterministic checks.
    pub sigma_margin: f64,
    pub pass: bool,
}

impl Check {
    /// Passes if `measured + sigmas * sigma <= bound`.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64, sigma: f64, sigmas: f64) -> Self {
        let margin = sigma_distance(bound - measured, sigma);
        Check {
            name: name.into(),
            measured,
            bound,
            sigma_margin: margin,
            pass: margin >= sigmas,
        }
    }

    /// Passes if `measured - sigmas * sigma >= bound`.
    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64, sigma: f64, sigmas: f64) -> Self {
        let margin = sigma_distance(measured - bound, sigma);
        Check {
            name: name.into(),
            measured,
            bound,
            sigma_margin: margin,
            pass: margin >= sigmas,
        }
    }

    /// Passes if `|measured - target| <= sigmas * sigma`. The margin is the
    /// unused part of the tolerance, in standard errors.
    pub fn within_sigmas(name: impl Into<String>, measured: f64, target: f64, sigma: f64, sigmas: f64) -> Self {
        let margin = sigmas - sigma_distance((measured - target).abs(), sigma);
        Check {
            name: name.into(),
            measured,
            bound: target,
            sigma_margin: margin,
            pass: margin >= 0.0,
        }
    }

    /// Passes if `|measured - target| <= tolerance`.
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            bound: target,
            sigma_margin: f64::NAN,
            pass: (measured - target).abs() <= tolerance,
        }
    }

    /// Passes if `pass` holds.
    pub fn flag(name: impl Into<String>, measured: f64, bound: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            measured,
            bound,
            sigma_margin: f64::NAN,
            pass,
        }
    }
}

fn sigma_distance(gap: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        gap / sigma
    } else if gap >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\tmeasured={}\tbound={}\tsigma_margin={}\t{}",
            self.name,
            self.measured,
            self.bound,
            if self.sigma_margin.is_nan() {
                "na".to_string()
            } else {
                format!("{:.3}", self.sigma_margin)
            },
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem2Report {
    pub check: Check,
    /// `<T>_q / sqrt(<T>_c <J>)`.
    pub alpha_hat: f64,
    pub alpha_hat_sigma: f64,
}

/// Standard error of `alpha sqrt(mean_t * mean_j)` by the delta method,
/// with `T` and `J` measured on the same agents.
fn sqrt_product_sigma(s: &LearningTimeSummary, alpha: f64) -> f64 {
    if s.mean_t <= 0.0 || s.mean_j <= 0.0 {
        return 0.0;
    }
    let n = s.n as f64;
    let dt = alpha * 0.5 * (s.mean_j / s.mean_t).sqrt();
    let dj = alpha * 0.5 * (s.mean_t / s.mean_j).sqrt();
    ((dt * dt * s.var_t + dj * dj * s.var_j + 2.0 * dt * dj * s.cov_tj) / n)
        .max(0.0)
        .sqrt()
}

/// `<T>_q <= alpha_s alpha_o sqrt(<T>_c <J>)`, required to hold with a
/// `3 sigma` margin. `<J>` comes from the classical ensemble.
pub fn theorem2_bound_check(
    classical: &LearningTimeSummary,
    hybrid: &LearningTimeSummary,
    alpha_s: f64,
    alpha_o: u32,
) -> Result<Theorem2Report, StatsError> {
    if classical.q_l != hybrid.q_l {
        return Err(StatsError::MismatchedConfigs(classical.q_l, hybrid.q_l));
    }
    let alpha = alpha_s * alpha_o as f64;
    let root = (classical.mean_t * classical.mean_j).sqrt();
    let bound = alpha * root;
    let sigma_q = hybrid.stderr_t();
    let sigma_b = sqrt_product_sigma(classical, alpha);
    let sigma = (sigma_q * sigma_q + sigma_b * sigma_b).sqrt();
    let (alpha_hat, alpha_hat_sigma) = if root > 0.0 {
        let a = hybrid.mean_t / root;
        let rel_b = sqrt_product_sigma(classical, 1.0) / root;
        let rel_q = if hybrid.mean_t > 0.0 {
            sigma_q / hybrid.mean_t
        } else {
            0.0
        };
        (
            a / alpha_o as f64,
            a / alpha_o as f64 * (rel_b * rel_b + rel_q * rel_q).sqrt(),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(Theorem2Report {
        check: Check::at_most("theorem2_learning_time", hybrid.mean_t, bound, sigma, MEAN_SIGMAS),
        alpha_hat,
        alpha_hat_sigma,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Theorem3Report {
    pub check: Check,
    /// `<T>_q / <T>_c`.
    pub ratio: f64,
    pub ratio_sigma: f64,
    /// `alpha_o <T>_c / (4 k_max)`, the approximate learning time for
    /// `Q_l << 1` and `k_max << 1 / Q_l`.
    pub refinement: f64,
    pub refinement_applicable: bool,
}

/// `<T>_q <= (alpha_o pi^2 / 16) <T>_c / k_max` for `Q_l < Q_{k_max}`,
/// required to hold with a `3 sigma` margin.
pub fn theorem3_bound_check(
    classical: &LearningTimeSummary,
    nisq: &LearningTimeSummary,
    alpha_o: u32,
    k_max: u32,
    q_l: f64,
) -> Result<Theorem3Report, StatsError> {
    if k_max == 0 {
        return Err(StatsError::OutsideValidity("k_max = 0 performs no quantum step".into()));
    }
    let limit = q_kmax(k_max);
    if q_l >= limit {
        return Err(StatsError::OutsideValidity(format!(
            "Q_l = {q_l} is not below Q_kmax({k_max}) = {limit}"
        )));
    }
    if classical.q_l != q_l || nisq.q_l != q_l {
        return Err(StatsError::MismatchedConfigs(classical.q_l, nisq.q_l));
    }
    let factor = alpha_o as f64 * std::f64::consts::PI.powi(2) / 16.0 / k_max as f64;
    let bound = factor * classical.mean_t;
    let sigma = (nisq.stderr_t().powi(2) + (factor * classical.stderr_t()).powi(2)).sqrt();
    let ratio = nisq.mean_t / classical.mean_t;
    let ratio_sigma =
        ratio * ((nisq.stderr_t() / nisq.mean_t).powi(2) + (classical.stderr_t() / classical.mean_t).powi(2)).sqrt();
    Ok(Theorem3Report {
        check: Check::at_most(
            format!("theorem3_learning_time_kmax{k_max}"),
            nisq.mean_t,
            bound,
            sigma,
            MEAN_SIGMAS,
        ),
        ratio,
        ratio_sigma,
        refinement: alpha_o as f64 * classical.mean_t / (4.0 * k_max as f64),
        refinement_applicable: q_l <= 0.01 && (k_max as f64) <= 0.01 / q_l,
    })
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::agents::{run_classical, EpochKind, RewardEvent, StopRule, TraceOptions};
    use crate::env::{BinaryTreeEnv, RewardTableEnv, SequenceSpace};
    use crate::policy::HValueTreePolicy;
    use crate::rng::derive_rng;

    fn event(epoch: u64, q_after: f64) -> RewardEvent {
        RewardEvent {
            epoch,
            played_index: epoch,
            kind: EpochKind::Classical,
            reward: 1.0,
            q_after,
            sequence: None,
        }
    }

    #[test]
    fn learning_time_cases() {
        let tr = AgentTrace {
            initial_q: 0.6,
            ..AgentTrace::default()
        };
        assert_eq!(learning_time(&tr, 0.5), LearningTime::Epochs(0));
        let tr = AgentTrace {
            initial_q: 0.1,
            rewards: vec![event(4, 0.3), event(9, 0.7), event(12, 0.9)],
            total_epochs: 20,
            ..AgentTrace::default()
        };
        assert_eq!(learning_time(&tr, 0.5), LearningTime::Epochs(9));
        assert_eq!(rewards_to_learn(&tr, 0.5), Some(2));
        assert_eq!(learning_time(&tr, 0.95), LearningTime::Censored);
    }

    #[test]
    fn single_reward_toy_env() {
        // One rewarded sequence of a single binary step; one update with a
        // huge reward makes Q numerically 1.
        let space = SequenceSpace::binary(1).unwrap();
        let env = RewardTableEnv::new(space, vec![(crate::env::ActionSequence::new(vec![1]), 1000.0)]).unwrap();
        let mut p = HValueTreePolicy::new(1, 1.0).unwrap();
        let mut rng = derive_rng(0, 0);
        let tr = run_classical(
            &mut p,
            &env,
            &StopRule::learned(0.999, 100),
            TraceOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(learning_time(&tr, 0.999), LearningTime::Epochs(tr.rewards[0].epoch));
    }

    #[test]
    fn summary_and_degenerate_bounds() {
        let env = BinaryTreeEnv::with_seeded_path(4, 4, 0).unwrap();
        let traces: Vec<AgentTrace> = (0..10)
            .map(|i| {
                let mut p = HValueTreePolicy::new(4, 0.1).unwrap();
                let mut rng = derive_rng(1, i);
                run_classical(
                    &mut p,
                    &env,
                    &StopRule::learned(0.5, 10),
                    TraceOptions::default(),
                    &mut rng,
                )
                .unwrap()
            })
            .collect();
        let s = LearningTimeSummary::from_traces(&traces, 0.5);
        assert_eq!(s.mean_t, 0.0);
        assert_eq!(s.censored_count, 0);
        let r = theorem2_bound_check(&s, &s, 2.25, 1).unwrap();
        assert!(r.check.pass);
        let other = LearningTimeSummary { q_l: 0.4, ..s.clone() };
        assert!(theorem2_bound_check(&s, &other, 2.25, 1).is_err());
    }

    #[test]
    fn theorem3_validity_region() {
        let s = LearningTimeSummary {
            q_l: 0.2,
            n: 10,
            censored_count: 0,
            mean_t: 10.0,
            var_t: 1.0,
            mean_j: 2.0,
            var_j: 0.0,
            cov_tj: 0.0,
            mean_t_with_censored: 10.0,
            per_interval: vec![],
        };
        assert!(matches!(
            theorem3_bound_check(&s, &s, 1, 0, 0.2),
            Err(StatsError::OutsideValidity(_))
        ));
        assert!(matches!(
            theorem3_bound_check(&s, &s, 1, 1, 0.3),
            Err(StatsError::OutsideValidity(_))
        ));
        let r = theorem3_bound_check(&s, &s, 1, 1, 0.2).unwrap();
        assert!(!r.check.pass);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn check_display_and_margins() {
        let c = Check::at_most("x", 1.0, 2.0, 0.25, 3.0);
        assert!(c.pass);
        assert_eq!(c.sigma_margin, 4.0);
        assert_eq!(c.to_string(), "x\tmeasured=1\tbound=2\tsigma_margin=4.000\tPASS");
        let w = Check::within_sigmas("w", 1.1, 1.0, 0.1, 2.0);
        assert!(w.pass);
        assert!(!Check::within("q", 0.5, 0.3964, 5e-4).pass);
    }
}
