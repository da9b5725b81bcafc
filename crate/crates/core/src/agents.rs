//! Classical and hybrid agent loops.
//!
//! Both loops share the policy update rule and differ only in how the next
//! rewarded epoch is found. The hybrid agent searches with amplitude
//! amplification until a verification epoch is rewarded, updates its
//! policy, and repeats; a [`ModeSwitchRule`] can hand it over to classical
//! play for good.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amplify::{attempt_cost, AmplifyError, Backend, ExponentialSearch, PreparedSearch, SearchParams};
use crate::env::{ActionSequence, DseEnvironment};
use crate::numeric::mean_variance;
use crate::policy::{winning_probability, PolicyError, QMinEstimator, RewardedHistory, SequencePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Amplify(#[from] AmplifyError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

impl From<crate::env::EnvError> for AgentError {
    fn from(e: crate::env::EnvError) -> Self {
        AgentError::Policy(PolicyError::Env(e))
    }
}

/// When an agent run ends. The run stops at the first rule that fires;
/// `epoch_budget` always applies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    /// Learned once the winning probability after an update reaches this.
    pub q_learned: Option<f64>,
    /// Stop after this many rewarded epochs.
    pub rewards: Option<u64>,
    pub epoch_budget: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            q_learned: None,
            rewards: None,
            epoch_budget: 100_000,
        }
    }
}

impl StopRule {
    pub fn horizon(epochs: u64) -> Self {
        StopRule {
            epoch_budget: epochs,
            ..StopRule::default()
        }
    }

    pub fn learned(q_l: f64, epoch_budget: u64) -> Self {
        StopRule {
            q_learned: Some(q_l),
            epoch_budget,
            ..StopRule::default()
        }
    }

    pub fn rewards(j: u64, epoch_budget: u64) -> Self {
        StopRule {
            rewards: Some(j),
            epoch_budget,
            ..StopRule::default()
        }
    }

    fn has_target(&self) -> bool {
        self.q_learned.is_some() || self.rewards.is_some()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if let Some(q) = self.q_learned {
            if !(q > 0.0 && q <= 1.0) {
                return Err(AgentError::Config(format!("q_learned must lie in (0, 1], got {q}")));
            }
        }
        if self.rewards == Some(0) {
            return Err(AgentError::Config("reward target must be positive".into()));
        }
        Ok(())
    }
}

/// Condition under which a hybrid agent stops searching and plays
/// classically from then on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSwitchRule {
    #[default]
    AlwaysQuantum,
    /// Winning probability (instrumented) at or above `q_stop`.
    QThreshold { q_stop: f64 },
    /// Reward frequency over the last `window` classically sampled epochs
    /// (verification epochs with `k = 0`) at or above `threshold`.
    RewardFrequency { window: usize, threshold: f64 },
    /// Number of rewards found reaches `rewards`.
    RewardCount { rewards: u64 },
}

impl ModeSwitchRule {
    pub fn validate(&self, firewall: bool) -> Result<(), AgentError> {
        match *self {
            ModeSwitchRule::QThreshold { q_stop } => {
                if firewall {
                    return Err(AgentError::Config(
                        "q_threshold switching reads the true winning probability, which the firewall forbids".into(),
                    ));
                }
                if !(0.0..=1.0).contains(&q_stop) {
                    return Err(AgentError::Config(format!("q_stop must lie in [0, 1], got {q_stop}")));
                }
            }
            ModeSwitchRule::RewardFrequency { window, threshold }
                if (window == 0 || !(0.0..=1.0).contains(&threshold)) =>
            {
                return Err(AgentError::Config(format!(
                    "reward_frequency needs window > 0 and threshold in [0, 1], got {window}, {threshold}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochKind {
    Quantum,
    Verification,
    Classical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: u64,
    pub kind: EpochKind,
    pub reward: f64,
    /// Instrumented winning probability after this epoch's update, if any.
    pub q_after: Option<f64>,
}

/// A rewarded epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardEvent {
    pub epoch: u64,
    /// Position among the epochs that were actually played (verification
    /// and classical epochs), 1-based.
    pub played_index: u64,
    pub kind: EpochKind,
    pub reward: f64,
    pub q_after: f64,
    pub sequence: Option<ActionSequence>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TraceOptions {
    pub per_epoch: bool,
    pub sequences: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AgentTrace {
    pub initial_q: f64,
    pub rewards: Vec<RewardEvent>,
    pub records: Option<Vec<EpochRecord>>,
    pub total_epochs: u64,
    pub quantum_epochs: u64,
    pub verification_epochs: u64,
    pub classical_epochs: u64,
    pub attempts: u64,
    /// Quantum epochs of an attempt cut short by the epoch budget.
    pub partial_attempt_epochs: u64,
    /// Epoch after which a hybrid agent played only classically.
    pub switched_at: Option<u64>,
    /// Epoch at which the winning probability first reached the stop
    /// rule's threshold (0 if it held initially).
    pub learning_time: Option<u64>,
    /// The run hit its epoch or attempt budget before reaching its target.
    pub censored: bool,
}

impl AgentTrace {
    pub fn reward_count(&self) -> u64 {
        self.rewards.len() as u64
    }

    /// Number of epochs that were played rather than spent on iterations.
    pub fn played_epochs(&self) -> u64 {
        self.verification_epochs + self.classical_epochs
    }

    pub fn rewarded_history(&self) -> Option<RewardedHistory> {
        let mut h = RewardedHistory::default();
        for e in &self.rewards {
            h.push(e.sequence.clone()?, e.reward).ok()?;
        }
        Some(h)
    }

    /// Interval lengths `t_j` between consecutive rewards (the first counted
    /// from the start) and the winning probability `Q_j` in force during
    /// each interval.
    pub fn intervals(&self) -> Vec<(u64, f64)> {
        let mut last = 0;
        let mut q = self.initial_q;
        self.rewards
            .iter()
            .map(|e| {
                let item = (e.epoch - last, q);
                last = e.epoch;
                q = e.q_after;
                item
            })
            .collect()
    }

    /// Internal audit: the epoch counters add up.
    pub fn accounting_consistent(&self) -> bool {
        self.total_epochs == self.quantum_epochs + self.verification_epochs + self.classical_epochs
    }

    fn push_record(&mut self, epoch: u64, kind: EpochKind, reward: f64, q_after: Option<f64>) {
        if let Some(r) = self.records.as_mut() {
            r.push(EpochRecord {
                epoch,
                kind,
                reward,
                q_after,
            });
        }
    }
}

struct Tracker<'a> {
    stop: &'a StopRule,
    options: TraceOptions,
    trace: AgentTrace,
    q: f64,
}

impl<'a> Tracker<'a> {
    fn new(stop: &'a StopRule, options: TraceOptions, q0: f64) -> Self {
        let mut trace = AgentTrace {
            initial_q: q0,
            records: options.per_epoch.then(Vec::new),
            ..AgentTrace::default()
        };
        if stop.q_learned.is_some_and(|ql| q0 >= ql) {
            trace.learning_time = Some(0);
        }
        Tracker {
            stop,
            options,
            trace,
            q: q0,
        }
    }

    fn done(&self) -> bool {
        (self.stop.q_learned.is_some() && self.trace.learning_time.is_some())
            || self.stop.rewards.is_some_and(|j| self.trace.reward_count() >= j)
    }

    fn out_of_budget(&self) -> bool {
        self.trace.total_epochs >= self.stop.epoch_budget
    }

    fn remaining(&self) -> u64 {
        self.stop.epoch_budget.saturating_sub(self.trace.total_epochs)
    }

    fn quantum(&mut self, epochs: u64) {
        for _ in 0..epochs {
            self.trace.total_epochs += 1;
            self.trace.quantum_epochs += 1;
            let e = self.trace.total_epochs;
            self.trace.push_record(e, EpochKind::Quantum, 0.0, None);
        }
    }

    /// Books a played epoch; on reward the policy is updated and the
    /// winning probability recomputed.
    fn played<P, E>(
        &mut self,
        kind: EpochKind,
        a: &ActionSequence,
        outcome: &crate::env::EpochOutcome,
        policy: &mut P,
        env: &E,
    ) -> Result<(), AgentError>
    where
        P: SequencePolicy + ?Sized,
        E: DseEnvironment + ?Sized,
    {
        self.trace.total_epochs += 1;
        match kind {
            EpochKind::Classical => self.trace.classical_epochs += 1,
            _ => self.trace.verification_epochs += 1,
        }
        let epoch = self.trace.total_epochs;
        if outcome.reward > 0.0 {
            policy.update_on_reward(a, outcome)?;
            self.q = winning_probability(policy, env)?;
            self.trace.rewards.push(RewardEvent {
                epoch,
                played_index: self.trace.played_epochs(),
                kind,
                reward: outcome.reward,
                q_after: self.q,
                sequence: self.options.sequences.then(|| a.clone()),
            });
            if self.trace.learning_time.is_none() && self.stop.q_learned.is_some_and(|ql| self.q >= ql) {
                self.trace.learning_time = Some(epoch);
            }
            self.trace.push_record(epoch, kind, outcome.reward, Some(self.q));
        } else {
            self.trace.push_record(epoch, kind, outcome.reward, None);
        }
        Ok(())
    }

    fn finish(mut self, budget_hit: bool) -> AgentTrace {
        self.trace.censored = budget_hit && self.stop.has_target() && !self.done();
        self.trace
    }
}

fn check_env<P, E>(policy: &P, env: &E) -> Result<(), AgentError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
{
    if policy.space() != env.space() {
        return Err(AgentError::Policy(PolicyError::ShapeMismatch(format!(
            "policy arities {:?}, environment arities {:?}",
            policy.space().arities(),
            env.space().arities()
        ))));
    }
    Ok(())
}

/// Classical agent: every epoch samples a sequence from the policy and
/// learns from it if rewarded.
pub fn run_classical<P, E, R>(
    policy: &mut P,
    env: &E,
    stop: &StopRule,
    options: TraceOptions,
    rng: &mut R,
) -> Result<AgentTrace, AgentError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    stop.validate()?;
    check_env(policy, env)?;
    let mut t = Tracker::new(stop, options, winning_probability(policy, env)?);
    while !t.done() {
        if t.out_of_budget() {
            return Ok(t.finish(true));
        }
        let a = policy.sample(rng);
        let outcome = env.evaluate(&a)?;
        t.played(EpochKind::Classical, &a, &outcome, policy, env)?;
    }
    Ok(t.finish(false))
}

/// Hybrid agent configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridParams {
    pub search: SearchParams,
    pub switch: ModeSwitchRule,
    pub q_min: QMinEstimator,
    pub backend: Backend,
    /// The agent's own decisions may only use its policy and observed
    /// rewards.
    pub firewall: bool,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            search: SearchParams::default(),
            switch: ModeSwitchRule::AlwaysQuantum,
            q_min: QMinEstimator::PolicyBound,
            backend: Backend::Analytic,
            firewall: false,
        }
    }
}

impl HybridParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        self.search.validate()?;
        self.switch.validate(self.firewall)
    }
}

struct SwitchState {
    rule: ModeSwitchRule,
    recent: VecDeque<bool>,
    recent_cap: usize,
}

impl SwitchState {
    fn new(rule: ModeSwitchRule, estimator: QMinEstimator) -> Self {
        let window = match rule {
            ModeSwitchRule::RewardFrequency { window, .. } => window,
            _ => 0,
        };
        let est_window = match estimator {
            QMinEstimator::WithRewardFrequency { window, .. } => window,
            QMinEstimator::PolicyBound => 0,
        };
        SwitchState {
            rule,
            recent: VecDeque::new(),
            recent_cap: window.max(est_window),
        }
    }

    fn observe_classical_sample(&mut self, rewarded: bool) {
        if self.recent_cap == 0 {
            return;
        }
        if self.recent.len() == self.recent_cap {
            self.recent.pop_front();
        }
        self.recent.push_back(rewarded);
    }

    fn should_switch(&self, q: f64, rewards: u64) -> bool {
        match self.rule {
            ModeSwitchRule::AlwaysQuantum => false,
            ModeSwitchRule::QThreshold { q_stop } => q >= q_stop,
            ModeSwitchRule::RewardCount { rewards: j } => rewards >= j,
            ModeSwitchRule::RewardFrequency { window, threshold } => {
                if self.recent.len() < window {
                    return false;
                }
                let hits = self.recent.iter().rev().take(window).filter(|&&r| r).count();
                hits as f64 / window as f64 >= threshold
            }
        }
    }
}

/// Hybrid agent: amplitude-amplified search for each reward, classical
/// policy update, repeat; classical play after the switch rule fires.
pub fn run_hybrid<P, E, R>(
    policy: &mut P,
    env: &E,
    params: &HybridParams,
    stop: &StopRule,
    options: TraceOptions,
    rng: &mut R,
) -> Result<AgentTrace, AgentError>
where
    P: SequencePolicy + ?Sized,
    E: DseEnvironment + ?Sized,
    R: Rng + ?Sized,
{
    stop.validate()?;
    params.validate()?;
    check_env(policy, env)?;
    let alpha_o = params.search.alpha_o;
    let mut t = Tracker::new(stop, options, winning_probability(policy, env)?);
    let mut switch = SwitchState::new(params.switch, params.q_min);
    let mut classical = switch.should_switch(t.q, 0);
    if classical {
        t.trace.switched_at = Some(0);
    }
    // Backend and schedule for the current policy; rebuilt after updates.
    let mut search: Option<(PreparedSearch, ExponentialSearch, u64)> = None;
    let mut budget_hit = false;
    while !t.done() {
        if t.out_of_budget() {
            budget_hit = true;
            break;
        }
        if classical {
            let a = policy.sample(rng);
            let outcome = env.evaluate(&a)?;
            t.played(EpochKind::Classical, &a, &outcome, policy, env)?;
            continue;
        }
        if search.is_none() {
            let prepared = match params.backend {
                Backend::Analytic => PreparedSearch::Analytic { q: t.q },
                b => PreparedSearch::prepare(b, policy, env)?,
            };
            let recent: Vec<bool> = switch.recent.iter().copied().collect();
            let q_min = params.q_min.estimate(policy.min_sequence_probability(), &recent);
            search = Some((prepared, ExponentialSearch::new(&params.search, q_min)?, 0));
        }
        let (prepared, schedule, attempts) = search.as_mut().expect("search prepared above");
        if params.search.attempt_budget.is_some_and(|b| *attempts >= b) {
            budget_hit = true;
            break;
        }
        let k = schedule.next_k(rng);
        let cost = attempt_cost(alpha_o, k);
        if cost > t.remaining() {
            let partial = t.remaining();
            t.quantum(partial);
            t.trace.partial_attempt_epochs += partial;
            budget_hit = true;
            break;
        }
        let out = prepared.attempt(&*policy, env, k, alpha_o, rng)?;
        *attempts += 1;
        t.trace.attempts += 1;
        t.quantum(cost - 1);
        if k == 0 {
            switch.observe_classical_sample(out.rewarded);
        }
        t.played(EpochKind::Verification, &out.measured, &out.outcome, policy, env)?;
        if out.rewarded {
            search = None;
        } else {
            schedule.on_failure();
        }
        if switch.should_switch(t.q, t.trace.reward_count()) {
            classical = true;
            t.trace.switched_at = Some(t.trace.total_epochs);
        }
    }
    Ok(t.finish(budget_hit))
}

/// Statistics of the interval lengths `t_j` across traces.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSummary {
    pub j: usize,
    pub count: usize,
    pub mean_t: f64,
    pub var_t: f64,
    pub mean_q: f64,
    /// Mean of `1 / Q_j` over the traces that reached interval `j`.
    pub mean_inv_q: f64,
}

/// Per-interval summary; interval `j` includes every trace that found its
/// `j+1`-th reward.
pub fn epochs_to_reward_stats(traces: &[AgentTrace]) -> Vec<IntervalSummary> {
    let mut per_j: Vec<Vec<(u64, f64)>> = Vec::new();
    for tr in traces {
        for (j, item) in tr.intervals().into_iter().enumerate() {
            if per_j.len() <= j {
                per_j.push(Vec::new());
            }
            per_j[j].push(item);
        }
    }
    per_j
        .into_iter()
        .enumerate()
        .map(|(j, items)| {
            let ts: Vec<f64> = items.iter().map(|&(t, _)| t as f64).collect();
            let (mean_t, var_t) = mean_variance(&ts);
            let n = items.len() as f64;
            IntervalSummary {
                j,
                count: items.len(),
                mean_t,
                var_t,
                mean_q: items.iter().map(|&(_, q)| q).sum::<f64>() / n,
                mean_inv_q: items.iter().map(|&(_, q)| 1.0 / q).sum::<f64>() / n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplify::{q_max_threshold, KSchedule};
    use crate::env::{BinaryTreeEnv, RewardTableEnv, SequenceSpace};
    use crate::policy::HValueTreePolicy;
    use crate::rng::derive_rng;

    fn full() -> TraceOptions {
        TraceOptions {
            per_epoch: true,
            sequences: true,
        }
    }

    #[test]
    fn all_rewarded_one_epoch() {
        let env = RewardTableEnv::from_fn(SequenceSpace::binary(3).unwrap(), 64, |_| 1.0).unwrap();
        let mut p = HValueTreePolicy::new(3, 0.1).unwrap();
        let mut rng = derive_rng(0, 0);
        let tr = run_classical(&mut p, &env, &StopRule::rewards(1, 100), full(), &mut rng).unwrap();
        assert_eq!(tr.total_epochs, 1);
        assert!(!tr.censored);
        let mut p = HValueTreePolicy::new(3, 0.1).unwrap();
        let tr = run_hybrid(
            &mut p,
            &env,
            &HybridParams::default(),
            &StopRule::rewards(1, 100),
            full(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(tr.total_epochs, 1);
        assert_eq!(tr.verification_epochs, 1);
    }

    #[test]
    fn classical_budget_censors() {
        let env = BinaryTreeEnv::with_seeded_path(12, 0, 0).unwrap();
        let mut p = HValueTreePolicy::new(12, 0.1).unwrap();
        let mut rng = derive_rng(0, 1);
        let tr = run_classical(&mut p, &env, &StopRule::rewards(5, 10), full(), &mut rng).unwrap();
        assert_eq!(tr.total_epochs, 10);
        assert!(tr.censored);
        assert_eq!(tr.records.as_ref().unwrap().len(), 10);
        let horizon = run_classical(&mut p, &env, &StopRule::horizon(7), full(), &mut rng).unwrap();
        assert_eq!(horizon.total_epochs, 7);
        assert!(!horizon.censored);
    }

    #[test]
    fn learned_at_start_gives_zero() {
        let env = BinaryTreeEnv::with_seeded_path(4, 4, 0).unwrap();
        let mut p = HValueTreePolicy::new(4, 0.1).unwrap();
        let mut rng = derive_rng(0, 2);
        let tr = run_classical(&mut p, &env, &StopRule::learned(0.5, 100), full(), &mut rng).unwrap();
        assert_eq!(tr.learning_time, Some(0));
        assert_eq!(tr.total_epochs, 0);
    }

    #[test]
    fn hybrid_accounting_adds_up() {
        let env = BinaryTreeEnv::with_seeded_path(8, 3, 2).unwrap();
        let params = HybridParams {
            search: SearchParams {
                alpha_o: 2,
                ..SearchParams::default()
            },
            ..HybridParams::default()
        };
        for seed in 0..40 {
            let mut p = HValueTreePolicy::new(8, 0.1).unwrap();
            let mut rng = derive_rng(seed, 0);
            let tr = run_hybrid(&mut p, &env, &params, &StopRule::rewards(6, 5000), full(), &mut rng).unwrap();
            assert!(tr.accounting_consistent());
            let recs = tr.records.as_ref().unwrap();
            assert_eq!(recs.len() as u64, tr.total_epochs);
            for (i, r) in recs.iter().enumerate() {
                assert_eq!(r.epoch, i as u64 + 1);
                if r.kind == EpochKind::Quantum {
                    assert_eq!(r.reward, 0.0);
                }
            }
            let rewarded: Vec<u64> = recs.iter().filter(|r| r.reward > 0.0).map(|r| r.epoch).collect();
            assert_eq!(rewarded, tr.rewards.iter().map(|e| e.epoch).collect::<Vec<_>>());
            assert_eq!(tr.attempts, tr.verification_epochs);
            assert_eq!(tr.quantum_epochs % 2, 0);
            let replayed = tr
                .rewarded_history()
                .unwrap()
                .replay(HValueTreePolicy::new(8, 0.1).unwrap(), &env)
                .unwrap();
            assert_eq!(replayed, p);
        }
    }

    #[test]
    fn partial_attempt_is_flagged() {
        let env = BinaryTreeEnv::with_seeded_path(10, 0, 2).unwrap();
        let params = HybridParams {
            search: SearchParams {
                alpha_o: 2,
                k_max: Some(5),
                schedule: KSchedule::FixedKMax,
                ..SearchParams::default()
            },
            ..HybridParams::default()
        };
        let mut p = HValueTreePolicy::new(10, 0.1).unwrap();
        let mut rng = derive_rng(1, 0);
        let tr = run_hybrid(&mut p, &env, &params, &StopRule::rewards(50, 25), full(), &mut rng).unwrap();
        assert_eq!(tr.total_epochs, 25);
        assert!(tr.censored);
        // Attempts cost 11 epochs: two full attempts, then 3 partial epochs.
        assert_eq!(tr.partial_attempt_epochs, 3);
        assert!(tr.accounting_consistent());
    }

    #[test]
    fn q_threshold_switch_latches() {
        let env = BinaryTreeEnv::with_seeded_path(6, 2, 4).unwrap();
        let q_stop = q_max_threshold(1, 1).unwrap();
        let params = HybridParams {
            search: SearchParams {
                alpha_o: 1,
                ..SearchParams::default()
            },
            switch: ModeSwitchRule::QThreshold { q_stop },
            ..HybridParams::default()
        };
        let mut p = HValueTreePolicy::new(6, 0.5).unwrap();
        let mut rng = derive_rng(2, 0);
        let tr = run_hybrid(&mut p, &env, &params, &StopRule::horizon(400), full(), &mut rng).unwrap();
        let at = tr.switched_at.expect("switches");
        let recs = tr.records.unwrap();
        let q_at_switch = tr.rewards.iter().rfind(|e| e.epoch <= at).unwrap().q_after;
        assert!(q_at_switch >= q_stop);
        for r in &recs[at as usize..] {
            assert_eq!(r.kind, EpochKind::Classical);
        }
        for e in tr.rewards.iter().filter(|e| e.epoch < at) {
            assert!(e.q_after < q_stop);
        }
    }

    #[test]
    fn firewall_rejects_true_q_switch() {
        let params = HybridParams {
            switch: ModeSwitchRule::QThreshold { q_stop: 0.4 },
            firewall: true,
            ..HybridParams::default()
        };
        assert!(matches!(params.validate(), Err(AgentError::Config(_))));
        let ok = HybridParams {
            switch: ModeSwitchRule::RewardFrequency {
                window: 50,
                threshold: 0.3964,
            },
            firewall: true,
            ..HybridParams::default()
        };
        ok.validate().unwrap();
    }

    #[test]
    fn reward_frequency_switch_fires_on_easy_env() {
        let space = SequenceSpace::binary(2).unwrap();
        let env = RewardTableEnv::from_fn(space, 16, |a| if a.steps()[0] == 0 { 1.0 } else { 0.0 }).unwrap();
        let params = HybridParams {
            switch: ModeSwitchRule::RewardFrequency {
                window: 10,
                threshold: 0.3,
            },
            ..HybridParams::default()
        };
        let mut p = HValueTreePolicy::new(2, 0.1).unwrap();
        let mut rng = derive_rng(3, 0);
        let tr = run_hybrid(&mut p, &env, &params, &StopRule::horizon(200), full(), &mut rng).unwrap();
        assert!(tr.switched_at.is_some());
    }

    #[test]
    fn interval_stats_match_rewards() {
        let env = BinaryTreeEnv::with_seeded_path(6, 2, 1).unwrap();
        let traces: Vec<AgentTrace> = (0..50)
            .map(|i| {
                let mut p = HValueTreePolicy::new(6, 0.1).unwrap();
                let mut rng = derive_rng(4, i);
                run_classical(
                    &mut p,
                    &env,
                    &StopRule::rewards(3, 10_000),
                    TraceOptions::default(),
                    &mut rng,
                )
                .unwrap()
            })
            .collect();
        let stats = epochs_to_reward_stats(&traces);
        assert_eq!(stats.len(), 3);
        assert!(stats.iter().all(|s| s.count == 50));
        assert!((stats[0].mean_q - 0.0625).abs() < 1e-15);
        for tr in &traces {
            assert_eq!(tr.reward_count(), 3);
            assert_eq!(tr.intervals().iter().map(|i| i.0).sum::<u64>(), tr.total_epochs);
        }
    }
}
