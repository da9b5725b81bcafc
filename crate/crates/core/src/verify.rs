//! Verification suites behind `hybrid-rl verify`.
//!
//! Every suite is a deterministic function of its seed and sample sizes and
//! returns a [`Report`] with one line per check.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::agents::{
    epochs_to_reward_stats, run_classical, run_hybrid, AgentError, AgentTrace, HybridParams, ModeSwitchRule, StopRule,
    TraceOptions,
};
use crate::amplify::{
    analytic_grover_sample, grover_success_prob, q_kmax, q_max_threshold, statevector_prepare, AmplifyError, Backend,
    KSchedule, PreparedSearch, SearchParams, DEFAULT_STATEVECTOR_LIMIT,
};
use crate::env::{ActionSequence, BinaryTreeEnv, DseEnvironment, EnvError, RewardTableEnv, SequenceSpace};
use crate::policy::{winning_probability, HValueTreePolicy, MapPolicy, PolicyError, QMinEstimator, SequencePolicy};
use crate::rng::{derive_member_rng, derive_rng, AgentRng};
use crate::runner::{run_agents, worker_pool, RunError};
use crate::stats::thresholds::{HISTORY_LIMIT, MEAN_SIGMAS, TEST_LEVEL};
use crate::stats::{
    chi_square_goodness_of_fit, chi_square_two_sample, empirical_history_counts, exact_classical_epochs_by_history,
    exact_history_distribution, geometric_pit, ks_test_uniform, theorem2_bound_check, theorem3_bound_check, tv_check,
    Check, HistoryKey, LearningTimeSummary, Report, StatsError,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Amplify(#[from] AmplifyError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("unknown suite {0:?}; expected one of amplify, theorem1, theorem2, theorem3, interval-laws, all")]
    UnknownSuite(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Amplify,
    Theorem1,
    Theorem2,
    Theorem3,
    IntervalLaws,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::Amplify,
        Suite::Theorem1,
        Suite::Theorem2,
        Suite::Theorem3,
        Suite::IntervalLaws,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Amplify => "amplify",
            Suite::Theorem1 => "theorem1",
            Suite::Theorem2 => "theorem2",
            Suite::Theorem3 => "theorem3",
            Suite::IntervalLaws => "interval-laws",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| VerifyError::UnknownSuite(s.to_string()))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample sizes of the suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes {
    pub g_law_policies: u64,
    pub backend_samples: u64,
    pub turnover_attempts: u64,
    pub theorem1_agents: u64,
    pub interval_agents: u64,
    pub decomposition_agents: u64,
    pub theorem_agents: u64,
}

impl Sizes {
    /// The sizes of the acceptance criteria.
    pub const FULL: Sizes = Sizes {
        g_law_policies: 100,
        backend_samples: 1_000_000,
        turnover_attempts: 1_000_000,
        theorem1_agents: 100_000,
        interval_agents: 10_000,
        decomposition_agents: 20_000,
        theorem_agents: 10_000,
    };

    /// Small sizes for smoke runs.
    pub const QUICK: Sizes = Sizes {
        g_law_policies: 20,
        backend_samples: 20_000,
        turnover_attempts: 20_000,
        theorem1_agents: 4_000,
        interval_agents: 2_000,
        decomposition_agents: 2_000,
        theorem_agents: 1_000,
    };
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub sizes: Sizes,
    /// Directory for the history tables of the theorem1 suite.
    pub out: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 1,
            sizes: Sizes::FULL,
            out: None,
        }
    }
}

// Stream blocks of the individual checks.
const G_LAW: u32 = 1;
const BACKEND: u32 = 2;
const TURNOVER: u32 = 3;
const THEOREM1_CLASSICAL: u32 = 10;
const THEOREM1_HYBRID: u32 = 11;
const INTERVAL: u32 = 20;
const INTERVAL_PIT: u32 = 21;
const DECOMPOSITION: u32 = 22;
const THEOREM2_CLASSICAL: u32 = 30;
const THEOREM2_HYBRID: u32 = 31;
const THEOREM3_CLASSICAL: u32 = 40;
const THEOREM3_NISQ: u32 = 41;

/// Epoch budget of the learning-time ensembles; large enough that
/// censoring is not expected.
const LEARNING_BUDGET: u64 = 1_000_000;

/// Runs `suite` on a worker pool sized by `HYBRID_RL_WORKERS`. Failing
/// checks do not stop later ones.
pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Report, VerifyError> {
    let pool = worker_pool()?;
    pool.install(|| match suite {
        Suite::Amplify => amplify_suite(opts),
        Suite::Theorem1 => theorem1_suite(opts),
        Suite::Theorem2 => theorem2_suite(opts),
        Suite::Theorem3 => theorem3_suite(opts),
        Suite::IntervalLaws => interval_suite(opts),
        Suite::All => {
            let mut report = Report::default();
            for s in Suite::EACH {
                report.extend(run_suite(s, opts)?);
            }
            Ok(report)
        }
    })
}

/// Runs `f` over `total` samples split into chunks of fixed size, each on
/// its own stream, and returns the chunk results in order.
fn sample_chunks<T, F>(seed: u64, member: u32, total: u64, f: F) -> Result<Vec<T>, VerifyError>
where
    T: Send,
    F: Fn(&mut AgentRng, u64) -> Result<T, VerifyError> + Sync,
{
    const CHUNK: u64 = 10_000;
    let chunks = total.div_ceil(CHUNK);
    run_agents(seed, member, chunks, |c, rng| f(rng, CHUNK.min(total - c * CHUNK)))
}

fn merge_counts<K: Ord>(parts: Vec<BTreeMap<K, u64>>) -> BTreeMap<K, u64> {
    let mut out = BTreeMap::new();
    for part in parts {
        for (k, c) in part {
            *out.entry(k).or_insert(0) += c;
        }
    }
    out
}

fn test_level_check(name: impl Into<String>, p_value: f64) -> Check {
    Check::flag(name, p_value, TEST_LEVEL, p_value >= TEST_LEVEL)
}

fn distribution_checks<K: Ord>(name: &str, exact: &BTreeMap<K, f64>, counts: &BTreeMap<K, u64>) -> Vec<Check> {
    let d = tv_check(exact, counts);
    vec![
        Check::flag(format!("{name} tv"), d.tv, d.bound, d.pass()),
        Check::flag(
            format!("{name} max_z"),
            d.max_z,
            crate::stats::thresholds::DISTRIBUTION_SIGMAS,
            d.pass(),
        ),
    ]
}

// ---------------------------------------------------------------- amplify

pub fn amplify_suite(opts: &VerifyOptions) -> Result<Report, VerifyError> {
    let mut report = Report::default();
    report.push(g_law_check(opts.seed, opts.sizes.g_law_policies)?);
    report.extend(backend_equivalence(opts.seed, opts.sizes.backend_samples)?);
    let q = q_max_threshold(1, 1)?;
    report.push(Check::within("q_max=0.3964±5e-4", q, 0.3964, 5e-4));
    let worst = (1..=50)
        .map(|k| grover_success_prob(q_kmax(k), k).map(|g| (g - 1.0).abs()))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.push(Check::within(
        "q_kmax identity G(q_kmax(k),k)=1, k<=50",
        worst,
        0.0,
        1e-12,
    ));
    report.extend(turnover(opts.seed, opts.sizes.turnover_attempts)?);
    Ok(report)
}

/// Random trained tree policy on a random tree with at most 10 layers.
fn random_tree_instance(rng: &mut AgentRng) -> Result<(BinaryTreeEnv, HValueTreePolicy), VerifyError> {
    let layers = rng.random_range(2..=10);
    let exponent = rng.random_range(0..layers);
    let env = BinaryTreeEnv::with_seeded_path(layers, exponent, rng.random())?;
    let beta = rng.random_range(0.01..1.0);
    let mut policy = HValueTreePolicy::new(layers, beta)?;
    let epochs = rng.random_range(0..60);
    run_classical(
        &mut policy,
        &env,
        &StopRule::horizon(epochs),
        TraceOptions::default(),
        rng,
    )?;
    Ok((env, policy))
}

/// Largest deviation of the statevector rewarded mass from `G(Q, k)`,
/// `k <= 25`, over random policies.
pub fn g_law_max_error(seed: u64, policies: u64) -> Result<f64, VerifyError> {
    let errors = run_agents(seed, G_LAW, policies, |_, rng| {
        let (env, policy) = random_tree_instance(rng)?;
        let q = winning_probability(&policy, &env)?;
        let mut state = statevector_prepare(&policy, &env, DEFAULT_STATEVECTOR_LIMIT)?;
        let mut worst: f64 = 0.0;
        for k in 0..=25 {
            worst = worst.max((state.rewarded_mass() - grover_success_prob(q, k)?).abs());
            state.grover_iterate();
        }
        Ok::<f64, VerifyError>(worst)
    })?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

fn g_law_check(seed: u64, policies: u64) -> Result<Check, VerifyError> {
    let worst = g_law_max_error(seed, policies)?;
    Ok(Check::within(
        format!("G-law statevector mass vs G(Q,k), {policies} policies"),
        worst,
        0.0,
        1e-10,
    ))
}

/// Analytic and statevector measurement statistics after `k` iterations
/// against the exact statevector distribution.
pub fn backend_equivalence(seed: u64, samples: u64) -> Result<Report, VerifyError> {
    let env = BinaryTreeEnv::with_seeded_path(5, 2, seed)?;
    // Lightly trained, so that the measurement spreads over many leaves.
    let mut policy = HValueTreePolicy::new(5, 0.02)?;
    let mut rng = derive_rng(seed, u64::from(BACKEND) << 32 | 0xffff_ffff);
    run_classical(
        &mut policy,
        &env,
        &StopRule::rewards(3, 10_000),
        TraceOptions::default(),
        &mut rng,
    )?;
    let space = env.space().clone();
    let prepared = PreparedSearch::prepare(Backend::Statevector, &policy, &env)?;
    let mut report = Report::default();
    for (i, k) in [1u32, 2].into_iter().enumerate() {
        let mut state = statevector_prepare(&policy, &env, DEFAULT_STATEVECTOR_LIMIT)?;
        for _ in 0..k {
            state.grover_iterate();
        }
        let exact: BTreeMap<u64, f64> = state
            .probabilities()
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p > 0.0)
            .map(|(i, p)| (i as u64, p))
            .collect();
        let member = BACKEND + 100 * (i as u32 + 1);
        let analytic = merge_counts(sample_chunks(seed, member, samples, |rng, n| {
            let mut counts = BTreeMap::new();
            for _ in 0..n {
                let out = analytic_grover_sample(&policy, &env, k, 1, rng)?;
                *counts.entry(space.index_of(&out.measured)).or_insert(0u64) += 1;
            }
            Ok(counts)
        })?);
        let sv = merge_counts(sample_chunks(seed, member + 1, samples, |rng, n| {
            let mut counts = BTreeMap::new();
            for _ in 0..n {
                let out = prepared.attempt(&policy, &env, k, 1, rng)?;
                *counts.entry(space.index_of(&out.measured)).or_insert(0u64) += 1;
            }
            Ok(counts)
        })?);
        report.extend(Report {
            checks: distribution_checks(
                &format!("backend-equivalence analytic vs exact k={k}"),
                &exact,
                &analytic,
            ),
        });
        report.extend(Report {
            checks: distribution_checks(&format!("backend-equivalence statevector vs exact k={k}"), &exact, &sv),
        });
        let chi = chi_square_two_sample(&analytic, &sv)?;
        report.push(test_level_check(
            format!("backend-equivalence two-sample chi-square p k={k}"),
            chi.p_value,
        ));
    }
    Ok(report)
}

/// Single-step environment with `rewarded` of `arity` actions rewarded 1.
fn fraction_env(arity: usize, rewarded: usize) -> Result<RewardTableEnv, VerifyError> {
    let space = SequenceSpace::new(vec![arity])?;
    Ok(RewardTableEnv::new(
        space,
        (0..rewarded).map(|a| (ActionSequence::new(vec![a]), 1.0)),
    )?)
}

/// Reward per epoch of `k = 1` attempts against classical play at a
/// winning probability `rewarded / arity`.
pub fn turnover_rates(seed: u64, member: u32, rewarded: usize, attempts: u64) -> Result<TurnoverRates, VerifyError> {
    let env = fraction_env(20, rewarded)?;
    let policy = MapPolicy::new(env.space().clone(), 0.1, env.initial_percept())?;
    let q = winning_probability(&policy, &env)?;
    let prepared = PreparedSearch::prepare(Backend::Statevector, &policy, &env)?;
    let sums = |parts: Vec<(f64, u64)>| parts.iter().fold((0.0, 0), |(r, e), (pr, pe)| (r + pr, e + pe));
    let (q_reward, q_epochs) = sums(sample_chunks(seed, member, attempts, |rng, n| {
        let (mut r, mut e) = (0.0, 0);
        for _ in 0..n {
            let out = prepared.attempt(&policy, &env, 1, 1, rng)?;
            r += out.reward;
            e += out.epochs_consumed;
        }
        Ok((r, e))
    })?);
    let (c_reward, c_epochs) = sums(sample_chunks(seed, member + 1, attempts, |rng, n| {
        let mut r = 0.0;
        for _ in 0..n {
            r += env.reward(&policy.sample(rng))?;
        }
        Ok((r, n))
    })?);
    // Rewards are 0 or 1; each attempt yields at most one.
    let pq = q_reward / attempts as f64;
    let pc = c_reward / c_epochs as f64;
    let cost = q_epochs as f64 / attempts as f64;
    Ok(TurnoverRates {
        q,
        quantum_rate: q_reward / q_epochs as f64,
        quantum_sigma: (pq * (1.0 - pq) / attempts as f64).sqrt() / cost,
        classical_rate: pc,
        classical_sigma: (pc * (1.0 - pc) / c_epochs as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurnoverRates {
    pub q: f64,
    pub quantum_rate: f64,
    pub quantum_sigma: f64,
    pub classical_rate: f64,
    pub classical_sigma: f64,
}

impl TurnoverRates {
    pub fn sigma(&self) -> f64 {
        self.quantum_sigma.hypot(self.classical_sigma)
    }
}

fn turnover(seed: u64, attempts: u64) -> Result<Report, VerifyError> {
    let mut report = Report::default();
    let below = turnover_rates(seed, TURNOVER, 7, attempts)?;
    report.push(Check::at_least(
        format!("turnover quantum rate > classical at Q={:.2}", below.q),
        below.quantum_rate,
        below.classical_rate,
        below.sigma(),
        MEAN_SIGMAS,
    ));
    let above = turnover_rates(seed, TURNOVER + 100, 9, attempts)?;
    report.push(Check::at_most(
        format!("turnover quantum rate < classical at Q={:.2}", above.q),
        above.quantum_rate,
        above.classical_rate,
        above.sigma(),
        MEAN_SIGMAS,
    ));
    Ok(report)
}

// ---------------------------------------------------------------- theorem 1

/// The small instance of the distribution check: 3 layers, 2 rewarded
/// leaves, beta 0.1.
pub fn theorem1_instance(seed: u64) -> Result<(BinaryTreeEnv, HValueTreePolicy), VerifyError> {
    Ok((
        BinaryTreeEnv::with_seeded_path(3, 1, seed)?,
        HValueTreePolicy::new(3, 0.1)?,
    ))
}

/// Hybrid agent that searches for every reward.
pub fn always_quantum(backend: Backend) -> HybridParams {
    HybridParams {
        search: SearchParams {
            alpha_o: 1,
            ..SearchParams::default()
        },
        switch: ModeSwitchRule::AlwaysQuantum,
        q_min: QMinEstimator::PolicyBound,
        backend,
        firewall: false,
    }
}

/// Classical and hybrid traces with rewarded sequences recorded.
pub fn history_traces<P, E>(
    policy: &P,
    env: &E,
    stop: &StopRule,
    hybrid: Option<&HybridParams>,
    seed: u64,
    member: u32,
    agents: u64,
) -> Result<Vec<AgentTrace>, VerifyError>
where
    P: SequencePolicy + Clone + Sync,
    E: DseEnvironment + ?Sized,
{
    let options = TraceOptions {
        per_epoch: false,
        sequences: true,
    };
    run_agents(seed, member, agents, |_, rng| {
        let mut p = policy.clone();
        Ok::<_, VerifyError>(match hybrid {
            None => run_classical(&mut p, env, stop, options, rng)?,
            Some(h) => run_hybrid(&mut p, env, h, stop, options, rng)?,
        })
    })
}

pub fn theorem1_suite(opts: &VerifyOptions) -> Result<Report, VerifyError> {
    const J: usize = 2;
    let (env, policy) = theorem1_instance(opts.seed)?;
    let exact = exact_history_distribution(&policy, &env, J, HISTORY_LIMIT)?;
    let stop = StopRule::rewards(J as u64, 100_000);
    let n = opts.sizes.theorem1_agents;
    let classical = history_traces(&policy, &env, &stop, None, opts.seed, THEOREM1_CLASSICAL, n)?;
    let hybrid_params = always_quantum(Backend::Statevector);
    let hybrid = history_traces(
        &policy,
        &env,
        &stop,
        Some(&hybrid_params),
        opts.seed,
        THEOREM1_HYBRID,
        n,
    )?;
    let c_counts = empirical_history_counts(&classical, J)?;
    let h_counts = empirical_history_counts(&hybrid, J)?;

    let mut report = Report::default();
    report.push(Check::within(
        "theorem1 exact p(h_r) sums to 1",
        exact.total(),
        1.0,
        1e-12,
    ));
    report.extend(Report {
        checks: distribution_checks("theorem1 classical vs exact", &exact.probabilities, &c_counts),
    });
    report.extend(Report {
        checks: distribution_checks("theorem1 hybrid vs exact", &exact.probabilities, &h_counts),
    });
    let keys: Vec<&HistoryKey> = exact.probabilities.keys().collect();
    let probs: Vec<f64> = exact.probabilities.values().copied().collect();
    for (name, counts) in [("classical", &c_counts), ("hybrid", &h_counts)] {
        let cells: Vec<u64> = keys.iter().map(|k| counts.get(*k).copied().unwrap_or(0)).collect();
        let gof = chi_square_goodness_of_fit(&cells, &probs)?;
        report.push(test_level_check(
            format!("theorem1 {name} chi-square goodness of fit p"),
            gof.p_value,
        ));
    }
    let chi = chi_square_two_sample(&c_counts, &h_counts)?;
    report.push(test_level_check(
        "theorem1 classical vs hybrid two-sample chi-square p",
        chi.p_value,
    ));
    let censored = classical.iter().chain(&hybrid).filter(|t| t.censored).count();
    report.push(Check::flag(
        "theorem1 censored traces",
        censored as f64,
        0.0,
        censored == 0,
    ));

    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir).map_err(|source| VerifyError::Io {
            path: dir.clone(),
            source,
        })?;
        write_history_csv(&dir.join("history_exact.csv"), &exact.probabilities)?;
        for (name, counts) in [("classical", &c_counts), ("hybrid", &h_counts)] {
            let freq = counts.iter().map(|(k, &c)| (k.clone(), c as f64 / n as f64)).collect();
            write_history_csv(&dir.join(format!("history_{name}.csv")), &freq)?;
        }
    }
    Ok(report)
}

/// `history,probability` table, one row per rewarded history.
pub fn write_history_csv(path: &Path, probabilities: &BTreeMap<HistoryKey, f64>) -> Result<(), VerifyError> {
    let io = |source| VerifyError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = String::from("history,probability\n");
    for (k, p) in probabilities {
        text.push_str(&format!("{k},{p}\n"));
    }
    std::fs::write(path, text).map_err(io)
}

// ---------------------------------------------------------------- interval laws

/// The benchmark tree: 12 layers, 32 rewarded leaves.
pub fn benchmark_tree(seed: u64) -> Result<BinaryTreeEnv, VerifyError> {
    Ok(BinaryTreeEnv::with_seeded_path(12, 5, seed)?)
}

pub fn interval_suite(opts: &VerifyOptions) -> Result<Report, VerifyError> {
    const J: u64 = 3;
    let env = benchmark_tree(opts.seed)?;
    let policy = HValueTreePolicy::new(12, 0.1)?;
    let n = opts.sizes.interval_agents;
    let stop = StopRule::rewards(J, LEARNING_BUDGET);
    let traces = run_agents(opts.seed, INTERVAL, n, |_, rng| {
        let mut p = policy.clone();
        Ok::<_, VerifyError>(run_classical(&mut p, &env, &stop, TraceOptions::default(), rng)?)
    })?;
    let mut report = Report::default();
    let complete: Vec<&AgentTrace> = traces.iter().filter(|t| t.reward_count() >= J).collect();
    report.push(Check::flag(
        "interval censored traces",
        (traces.len() - complete.len()) as f64,
        0.0,
        complete.len() == traces.len(),
    ));

    let q0 = winning_probability(&policy, &env)?;
    let first: Vec<f64> = complete.iter().map(|t| t.intervals()[0].0 as f64).collect();
    let (mean, var) = crate::numeric::mean_variance(&first);
    report.push(Check::within_sigmas(
        format!("interval t_1 mean = 1/Q = {}", 1.0 / q0),
        mean,
        1.0 / q0,
        (var / first.len() as f64).sqrt(),
        MEAN_SIGMAS,
    ));
    let mut pit_rng = derive_member_rng(opts.seed, INTERVAL_PIT, 0);
    let u: Vec<f64> = complete
        .iter()
        .map(|t| geometric_pit(t.intervals()[0].0, q0, pit_rng.random()))
        .collect();
    report.push(test_level_check(
        format!("interval t_1 KS against geometric(Q={q0})"),
        ks_test_uniform(u)?.p_value,
    ));
    let pooled: Vec<f64> = complete
        .iter()
        .flat_map(|t| t.intervals())
        .map(|(t, q)| geometric_pit(t, q, pit_rng.random()))
        .collect();
    report.push(test_level_check(
        format!("interval t_j|h_r KS against geometric(Q_j), j<={J}"),
        ks_test_uniform(pooled)?.p_value,
    ));
    let owned: Vec<AgentTrace> = complete.iter().map(|t| (*t).clone()).collect();
    for s in epochs_to_reward_stats(&owned).iter().take(J as usize) {
        report.push(Check::within_sigmas(
            format!("interval mean t_{} = mean 1/Q_{}", s.j + 1, s.j + 1),
            s.mean_t,
            s.mean_inv_q,
            (s.var_t / s.count as f64).sqrt(),
            MEAN_SIGMAS,
        ));
    }
    report.push(decomposition_check(opts.seed, opts.sizes.decomposition_agents)?);
    Ok(report)
}

/// Mean epochs to the third reward against `sum_h p(h) <T(h)>` from the
/// exact history enumeration.
pub fn decomposition_check(seed: u64, agents: u64) -> Result<Check, VerifyError> {
    const J: u64 = 3;
    let env = BinaryTreeEnv::with_seeded_path(4, 2, seed)?;
    let policy = HValueTreePolicy::new(4, 0.3)?;
    let by_history = exact_classical_epochs_by_history(&policy, &env, J as usize, HISTORY_LIMIT)?;
    let exact_mean: f64 = by_history.values().map(|(p, t)| p * t).sum();
    let stop = StopRule::rewards(J, LEARNING_BUDGET);
    let times = run_agents(seed, DECOMPOSITION, agents, |_, rng| {
        let mut p = policy.clone();
        let tr = run_classical(&mut p, &env, &stop, TraceOptions::default(), rng)?;
        Ok::<f64, VerifyError>(tr.rewards.get(J as usize - 1).map_or(f64::NAN, |e| e.epoch as f64))
    })?;
    let (mean, var) = crate::numeric::mean_variance(&times);
    Ok(Check::within_sigmas(
        "decomposition <T> = sum_h p(h) <T(h)>",
        mean,
        exact_mean,
        (var / times.len() as f64).sqrt(),
        MEAN_SIGMAS,
    ))
}

// ---------------------------------------------------------------- theorems 2 and 3

/// Learning-time summary of one ensemble on the benchmark tree.
pub fn learning_ensemble(
    seed: u64,
    member: u32,
    agents: u64,
    beta: f64,
    q_l: f64,
    hybrid: Option<&HybridParams>,
) -> Result<LearningTimeSummary, VerifyError> {
    let env = benchmark_tree(seed)?;
    let policy = HValueTreePolicy::new(12, beta)?;
    let stop = StopRule::learned(q_l, LEARNING_BUDGET);
    let traces = run_agents(seed, member, agents, |_, rng| {
        let mut p = policy.clone();
        Ok::<_, VerifyError>(match hybrid {
            None => run_classical(&mut p, &env, &stop, TraceOptions::default(), rng)?,
            Some(h) => run_hybrid(&mut p, &env, h, &stop, TraceOptions::default(), rng)?,
        })
    })?;
    Ok(LearningTimeSummary::from_traces(&traces, q_l))
}

fn censored_check(name: &str, s: &LearningTimeSummary) -> Check {
    Check::flag(format!("{name} censored traces"), s.censored_count as f64, 0.0, true)
}

pub const THEOREM2_Q_L: f64 = 0.3;
pub const THEOREM2_ALPHA_S: f64 = 9.0 / 4.0;

pub fn theorem2_suite(opts: &VerifyOptions) -> Result<Report, VerifyError> {
    let n = opts.sizes.theorem_agents;
    let classical = learning_ensemble(opts.seed, THEOREM2_CLASSICAL, n, 0.1, THEOREM2_Q_L, None)?;
    let params = always_quantum(Backend::Analytic);
    let hybrid = learning_ensemble(opts.seed, THEOREM2_HYBRID, n, 0.1, THEOREM2_Q_L, Some(&params))?;
    let r = theorem2_bound_check(&classical, &hybrid, THEOREM2_ALPHA_S, 1)?;
    let mut report = Report::default();
    report.push(r.check);
    report.push(Check::flag(
        format!("theorem2 effective alpha_hat (sigma {:.4})", r.alpha_hat_sigma),
        r.alpha_hat,
        THEOREM2_ALPHA_S,
        true,
    ));
    report.push(censored_check("theorem2 classical", &classical));
    report.push(censored_check("theorem2 hybrid", &hybrid));
    Ok(report)
}

pub const THEOREM3_Q_L: f64 = 0.025;
pub const THEOREM3_K_MAX: [u32; 3] = [1, 2, 4];

/// NISQ agent: every attempt runs exactly `k_max` iterations.
pub fn nisq_params(k_max: u32) -> HybridParams {
    let mut p = always_quantum(Backend::Analytic);
    p.search.k_max = Some(k_max);
    p.search.schedule = KSchedule::FixedKMax;
    p
}

pub fn theorem3_suite(opts: &VerifyOptions) -> Result<Report, VerifyError> {
    let n = opts.sizes.theorem_agents;
    let classical = learning_ensemble(opts.seed, THEOREM3_CLASSICAL, n, 0.1, THEOREM3_Q_L, None)?;
    let mut report = Report::default();
    report.push(censored_check("theorem3 classical", &classical));
    let mut ratios = Vec::new();
    for (i, &k) in THEOREM3_K_MAX.iter().enumerate() {
        let params = nisq_params(k);
        let nisq = learning_ensemble(opts.seed, THEOREM3_NISQ + i as u32, n, 0.1, THEOREM3_Q_L, Some(&params))?;
        let r = theorem3_bound_check(&classical, &nisq, 1, k, THEOREM3_Q_L)?;
        report.push(r.check);
        report.push(censored_check(&format!("theorem3 kmax{k}"), &nisq));
        ratios.push((k, r.ratio, r.ratio_sigma));
    }
    for w in ratios.windows(2) {
        let ((k1, r1, s1), (k2, r2, s2)) = (w[0], w[1]);
        report.push(Check::at_least(
            format!("theorem3 ratio decreases kmax{k1} -> kmax{k2}"),
            r1 - r2,
            0.0,
            s1.hypot(s2),
            MEAN_SIGMAS,
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(VerifyError::UnknownSuite(_))));
    }

    #[test]
    fn quick_amplify_suite_passes() {
        let opts = VerifyOptions {
            sizes: Sizes::QUICK,
            ..VerifyOptions::default()
        };
        let r = amplify_suite(&opts).unwrap();
        assert!(r.all_pass(), "{r}");
        assert!(r.checks.iter().any(|c| c.name.starts_with("G-law")));
        assert!(r.checks.iter().any(|c| c.name.starts_with("backend-equivalence")));
        assert!(r.checks.iter().any(|c| c.name == "q_max=0.3964±5e-4"));
    }

    #[test]
    fn quick_theorem1_suite_passes_and_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let opts = VerifyOptions {
            sizes: Sizes::QUICK,
            out: Some(dir.path().to_path_buf()),
            ..VerifyOptions::default()
        };
        let r = theorem1_suite(&opts).unwrap();
        assert!(r.all_pass(), "{r}");
        let exact = std::fs::read_to_string(dir.path().join("history_exact.csv")).unwrap();
        assert_eq!(exact.lines().count(), 5);
        assert!(dir.path().join("history_hybrid.csv").exists());
    }
}
