//! Ensemble orchestration and CSV output.
//!
//! Agents run on a rayon pool sized by `HYBRID_RL_WORKERS` (all cores if
//! unset). Agent `i` of member `m` always draws from
//! `derive_member_rng(seed, m, i)`, and per-chunk partial sums are merged in
//! chunk order, so every output byte is independent of the worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{run_classical, run_hybrid, AgentError, AgentTrace, HybridParams, StopRule, TraceOptions};
use crate::config::{build_env, build_policy, ConfigError, Mode, RunConfig, RunMember};
use crate::env::DseEnvironment;
use crate::numeric::CompensatedSum;
use crate::policy::AnyPolicy;
use crate::rng::{derive_member_rng, AgentRng};
use crate::stats::{learning_time, BinPoint, BinnedCurve, CurveAccounting, CurveAccumulator, CurvePoint, LearningTime};

/// Environment variable holding the worker count.
pub const WORKERS_VAR: &str = "HYBRID_RL_WORKERS";

/// Agents per unit of parallel work.
const CHUNK: u64 = 64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("invalid {WORKERS_VAR}: {0}")]
    Workers(String),
    #[error("agent ids above 2^32 are not supported")]
    TooManyAgents,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Worker count from [`WORKERS_VAR`], if set.
pub fn configured_workers() -> Result<Option<usize>, RunError> {
    match std::env::var(WORKERS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(RunError::Workers(v)),
        },
    }
}

pub fn worker_pool() -> Result<rayon::ThreadPool, RunError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_workers()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| RunError::Workers(e.to_string()))
}

/// Runs `f(i, rng_i)` for agents `0..n` in parallel and returns the
/// results in agent order.
pub fn run_agents<T, E, F>(seed: u64, member: u32, n: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send + From<RunError>,
    F: Fn(u64, &mut AgentRng) -> Result<T, E> + Sync,
{
    let n32 = u32::try_from(n).map_err(|_| E::from(RunError::TooManyAgents))?;
    (0..n32)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_member_rng(seed, member, i);
            f(i as u64, &mut rng)
        })
        .collect()
}

/// One row of agents.csv.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentRow {
    pub agent_id: u64,
    /// Learning time under `stop.q_learned`, or the epoch of the last
    /// target reward under `stop.rewards`; `None` if censored or if the stop
    /// rule has no target.
    pub t: Option<u64>,
    pub j: u64,
    pub censored: bool,
    pub total_epochs: u64,
}

impl AgentRow {
    pub fn from_trace(agent_id: u64, trace: &AgentTrace, stop: &StopRule) -> Self {
        let t = match (stop.q_learned, stop.rewards) {
            (Some(q), _) => match learning_time(trace, q) {
                LearningTime::Epochs(t) => Some(t),
                LearningTime::Censored => None,
            },
            (None, Some(j)) if trace.reward_count() >= j => Some(trace.rewards[j as usize - 1].epoch),
            _ => None,
        };
        AgentRow {
            agent_id,
            t,
            j: trace.reward_count(),
            censored: trace.censored,
            total_epochs: trace.total_epochs,
        }
    }
}

/// Result of one ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub member: RunMember,
    pub rows: Vec<AgentRow>,
    pub curve: Option<Vec<CurvePoint>>,
    pub bins: Option<Vec<BinPoint>>,
}

/// Everything one agent needs besides its random stream.
pub struct AgentSetup {
    pub env: Box<dyn DseEnvironment>,
    pub policy: AnyPolicy,
    pub mode: Mode,
    pub hybrid: HybridParams,
    pub stop: StopRule,
}

impl AgentSetup {
    pub fn new(cfg: &RunConfig, member: &RunMember) -> Result<Self, RunError> {
        let env = build_env(&cfg.env)?;
        let policy = build_policy(&cfg.policy, member.beta, env.as_ref())?;
        let hybrid = if member.mode == Mode::Classical {
            HybridParams::default()
        } else {
            cfg.effective_hybrid(member.mode)?
        };
        Ok(AgentSetup {
            env,
            policy,
            mode: member.mode,
            hybrid,
            stop: cfg.stop,
        })
    }

    pub fn run(&self, options: TraceOptions, rng: &mut AgentRng) -> Result<AgentTrace, AgentError> {
        let mut policy = self.policy.clone();
        match self.mode {
            Mode::Classical => run_classical(&mut policy, self.env.as_ref(), &self.stop, options, rng),
            Mode::Hybrid | Mode::Nisq => {
                run_hybrid(&mut policy, self.env.as_ref(), &self.hybrid, &self.stop, options, rng)
            }
        }
    }
}

/// Runs one ensemble. Traces are folded into the curve as they finish and
/// then dropped.
pub fn run_ensemble(cfg: &RunConfig, member: &RunMember) -> Result<EnsembleResult, RunError> {
    let setup = AgentSetup::new(cfg, member)?;
    let horizon = cfg.stop.epoch_budget;
    let curve = cfg.output.curve;
    let accounting = cfg.output.accounting;
    if cfg.agents > u32::MAX as u64 {
        return Err(RunError::TooManyAgents);
    }
    let bin_width = cfg.output.bin_width;
    let chunks = cfg.agents.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = curve.then(|| CurveAccumulator::new(horizon, accounting));
            let mut bins = bin_width.map(|w| BinnedCurve::uniform(horizon, w, accounting));
            let mut rows = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.agents) {
                let mut rng = derive_member_rng(cfg.seed, member.index, i as u32);
                let trace = setup.run(TraceOptions::default(), &mut rng)?;
                if let Some(a) = acc.as_mut() {
                    a.add(&trace);
                }
                if let Some(b) = bins.as_mut() {
                    b.add(&trace);
                }
                rows.push(AgentRow::from_trace(i, &trace, &cfg.stop));
            }
            Ok((acc, bins, rows))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut acc: Option<CurveAccumulator> = None;
    let mut bins: Option<BinnedCurve> = None;
    let mut rows = Vec::with_capacity(cfg.agents as usize);
    for (a, b, r) in parts {
        match (acc.as_mut(), a) {
            (Some(total), Some(part)) => total.merge(&part),
            (None, part) => acc = part,
            _ => {}
        }
        match (bins.as_mut(), b) {
            (Some(total), Some(part)) => total.merge(&part),
            (None, part) => bins = part,
            _ => {}
        }
        rows.extend(r);
    }
    Ok(EnsembleResult {
        member: member.clone(),
        rows,
        curve: acc.map(|a| a.finish()),
        bins: bins.map(|b| b.finish()),
    })
}

/// Files written by [`simulate`] for one member.
#[derive(Clone, Debug)]
pub struct MemberOutput {
    pub member: RunMember,
    pub agents_csv: PathBuf,
    pub curve_csv: Option<PathBuf>,
    pub bins_csv: Option<PathBuf>,
    pub summary: AgentsSummary,
}

/// Validates `cfg`, runs every member and writes its CSV files into `out`.
/// The effective configuration is saved as `config.toml` next to them.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<MemberOutput>, RunError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()?).map_err(io_err(&cfg_path))?;
    let pool = worker_pool()?;
    let mut outputs = Vec::new();
    for member in cfg.members() {
        let result = pool.install(|| run_ensemble(cfg, &member))?;
        let agents_csv = out.join(format!("agents{}.csv", member.label));
        write_agents_csv(&agents_csv, &result.rows)?;
        let curve_csv = match &result.curve {
            Some(curve) => {
                let p = out.join(format!("curve{}.csv", member.label));
                write_curve_csv(&p, curve)?;
                Some(p)
            }
            None => None,
        };
        let bins_csv = match &result.bins {
            Some(bins) => {
                let p = out.join(format!("bins{}.csv", member.label));
                write_bins_csv(&p, bins)?;
                Some(p)
            }
            None => None,
        };
        outputs.push(MemberOutput {
            summary: AgentsSummary::from_rows(&result.rows),
            member,
            agents_csv,
            curve_csv,
            bins_csv,
        });
    }
    Ok(outputs)
}

pub const AGENTS_HEADER: [&str; 5] = ["agent_id", "T", "J", "censored", "total_epochs"];
pub const CURVE_HEADER: [&str; 4] = ["epoch", "mean_reward", "stderr", "n_alive"];

pub fn write_agents_csv(path: &Path, rows: &[AgentRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(AGENTS_HEADER).map_err(csv_err(path))?;
    for r in rows {
        let t = r.t.map_or_else(|| "NA".to_string(), |t| t.to_string());
        w.write_record([
            r.agent_id.to_string(),
            t,
            r.j.to_string(),
            u8::from(r.censored).to_string(),
            r.total_epochs.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(CURVE_HEADER).map_err(csv_err(path))?;
    for p in curve {
        w.write_record([
            p.epoch.to_string(),
            p.mean_reward.to_string(),
            p.stderr.to_string(),
            p.n_alive.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub const BINS_HEADER: [&str; 5] = ["start", "end", "mean_reward", "stderr", "n"];

pub fn write_bins_csv(path: &Path, bins: &[BinPoint]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(BINS_HEADER).map_err(csv_err(path))?;
    for b in bins {
        w.write_record([
            b.start.to_string(),
            b.end.to_string(),
            b.mean.to_string(),
            b.stderr.to_string(),
            b.n.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_agents_csv(path: &Path) -> Result<Vec<AgentRow>, RunError> {
    let malformed = |message: String| RunError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(AGENTS_HEADER) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| -> Result<u64, RunError> {
            rec[i]
                .parse()
                .map_err(|_| malformed(format!("row {}: bad {} {:?}", line + 1, AGENTS_HEADER[i], &rec[i])))
        };
        let t = if &rec[1] == "NA" { None } else { Some(field(1)?) };
        let censored = match field(3)? {
            0 => false,
            1 => true,
            v => return Err(malformed(format!("row {}: censored must be 0 or 1, got {v}", line + 1))),
        };
        rows.push(AgentRow {
            agent_id: field(0)?,
            t,
            j: field(2)?,
            censored,
            total_epochs: field(4)?,
        });
    }
    Ok(rows)
}

/// Ensemble statistics recomputable from agents.csv alone.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentsSummary {
    pub agents: usize,
    pub censored: usize,
    /// Agents with a recorded `T`.
    pub with_t: usize,
    pub mean_t: f64,
    pub stderr_t: f64,
    pub mean_j: f64,
    pub stderr_j: f64,
    pub mean_total_epochs: f64,
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().collect::<CompensatedSum>().value() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let ss = xs.map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

impl AgentsSummary {
    pub fn from_rows(rows: &[AgentRow]) -> Self {
        let (mean_t, stderr_t) = mean_stderr(rows.iter().filter_map(|r| r.t.map(|t| t as f64)));
        let (mean_j, stderr_j) = mean_stderr(rows.iter().map(|r| r.j as f64));
        let (mean_total_epochs, _) = mean_stderr(rows.iter().map(|r| r.total_epochs as f64));
        AgentsSummary {
            agents: rows.len(),
            censored: rows.iter().filter(|r| r.censored).count(),
            with_t: rows.iter().filter(|r| r.t.is_some()).count(),
            mean_t,
            stderr_t,
            mean_j,
            stderr_j,
            mean_total_epochs,
        }
    }

    pub fn write_line(&self, name: &str, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "{name}\tagents={}\tcensored={}\twith_T={}\tmean_T={:.4}\tstderr_T={:.4}\tmean_J={:.4}\tstderr_J={:.4}\tmean_epochs={:.4}",
            self.agents,
            self.censored,
            self.with_t,
            self.mean_t,
            self.stderr_t,
            self.mean_j,
            self.stderr_j,
            self.mean_total_epochs
        )
    }
}

/// Summaries of every `agents*.csv` in `dir`, sorted by file name.
pub fn analyze(dir: &Path) -> Result<Vec<(String, AgentsSummary)>, RunError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("agents") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(RunError::Malformed {
            path: dir.to_path_buf(),
            message: "no agents*.csv files".into(),
        });
    }
    files
        .iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            Ok((name, AgentsSummary::from_rows(&read_agents_csv(p)?)))
        })
        .collect()
}

/// Reads `curve*.csv` back; used by tests and downstream tooling.
pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>, RunError> {
    let malformed = |message: String| RunError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |i: usize| malformed(format!("bad {} {:?}", CURVE_HEADER[i], &rec[i]));
        out.push(CurvePoint {
            epoch: rec[0].parse().map_err(|_| bad(0))?,
            mean_reward: rec[1].parse().map_err(|_| bad(1))?,
            stderr: rec[2].parse().map_err(|_| bad(2))?,
            n_alive: rec[3].parse().map_err(|_| bad(3))?,
        });
    }
    Ok(out)
}

impl CurveAccounting {
    pub fn name(self) -> &'static str {
        match self {
            CurveAccounting::AllEpochs => "all_epochs",
            CurveAccounting::PlayedOnly => "played_only",
        }
    }
}
