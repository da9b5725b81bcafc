//! Run configuration.
//!
//! A run is described by one TOML document. Every field has a default, so
//! an empty document is a valid configuration; `RunConfig::default()`
//! serialized with [`RunConfig::to_toml`] is the documented schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{HybridParams, ModeSwitchRule, StopRule};
use crate::amplify::{q_max_threshold, Backend, KSchedule, SearchParams};
use crate::env::{ActionSequence, BinaryTreeEnv, DseEnvironment, RewardTableEnv, SequenceSpace};
use crate::policy::{update_rule_by_name, AnyPolicy, HValueTreePolicy, MapPolicy, QMinEstimator};
use crate::stats::CurveAccounting;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Classical,
    #[default]
    Hybrid,
    /// Hybrid agent limited to `k_max` iterations, each attempt running
    /// exactly `k_max`.
    Nisq,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Hybrid => "hybrid",
            Mode::Nisq => "nisq",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    BinaryTree {
        layers: usize,
        reward_exponent: usize,
        /// Explicit correct path as a bit string; overrides `path_seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default)]
        path_seed: u64,
    },
    RewardTable {
        /// `sequence,reward` lines; relative paths resolve against the
        /// configuration file.
        file: PathBuf,
        /// Step arities; binary with the table's sequence length if absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arities: Option<Vec<usize>>,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::BinaryTree {
            layers: 12,
            reward_exponent: 5,
            path: None,
            path_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    HTree,
    Map,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub beta: f64,
    pub initial_h: f64,
    pub update_rule: String,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            kind: PolicyKind::HTree,
            beta: 0.1,
            initial_h: 0.0,
            update_rule: "additive".into(),
        }
    }
}

/// Hybrid-agent settings. `switch` absent means the default rule:
/// `q_threshold` at `q_max_threshold(alpha_o, 1)`, or with the firewall
/// on, `reward_frequency` with window 50 and the same threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSpec {
    pub search: SearchParams,
    pub q_min: QMinEstimator,
    pub backend: Backend,
    pub firewall: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch: Option<ModeSwitchRule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write curve.csv with horizon `stop.epoch_budget`.
    pub curve: bool,
    pub accounting: CurveAccounting,
    /// Also write bins.csv: per-agent average reward over windows of this
    /// many epochs, then mean and standard error across agents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<u64>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            curve: true,
            accounting: CurveAccounting::AllEpochs,
            bin_width: None,
        }
    }
}

/// Runs every combination of `modes` and `betas`; each writes
/// `curve_<mode>_beta<beta>.csv` and `agents_<mode>_beta<beta>.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub modes: Vec<Mode>,
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub agents: u64,
    pub mode: Mode,
    pub env: EnvSpec,
    pub policy: PolicySpec,
    pub hybrid: HybridSpec,
    pub stop: StopRule,
    pub output: OutputSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            agents: 1000,
            mode: Mode::Hybrid,
            env: EnvSpec::default(),
            policy: PolicySpec::default(),
            hybrid: HybridSpec::default(),
            stop: StopRule::horizon(2000),
            output: OutputSpec::default(),
            sweep: None,
        }
    }
}

/// One concrete ensemble of a (possibly swept) configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMember {
    pub index: u32,
    pub mode: Mode,
    pub beta: f64,
    /// File-name suffix; empty for unswept runs.
    pub label: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let EnvSpec::RewardTable { file, .. } = &mut cfg.env {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Hybrid parameters with mode-specific overrides and the default
    /// switch rule filled in.
    pub fn effective_hybrid(&self, mode: Mode) -> Result<HybridParams, ConfigError> {
        let h = &self.hybrid;
        let mut p = HybridParams {
            search: h.search,
            switch: ModeSwitchRule::AlwaysQuantum,
            q_min: h.q_min,
            backend: h.backend,
            firewall: h.firewall,
        };
        p.switch = match h.switch {
            Some(rule) => rule,
            None => {
                let q = q_max_threshold(p.search.alpha_o.max(1), 1).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if p.firewall {
                    ModeSwitchRule::RewardFrequency {
                        window: 50,
                        threshold: q,
                    }
                } else {
                    ModeSwitchRule::QThreshold { q_stop: q }
                }
            }
        };
        if mode == Mode::Nisq {
            if p.search.k_max.is_none() {
                return Err(ConfigError::Invalid("nisq mode needs hybrid.search.k_max".into()));
            }
            p.search.schedule = KSchedule::FixedKMax;
        }
        Ok(p)
    }

    pub fn members(&self) -> Vec<RunMember> {
        match &self.sweep {
            None => vec![RunMember {
                index: 0,
                mode: self.mode,
                beta: self.policy.beta,
                label: String::new(),
            }],
            Some(s) => {
                let modes = if s.modes.is_empty() {
                    vec![self.mode]
                } else {
                    s.modes.clone()
                };
                let betas = if s.betas.is_empty() {
                    vec![self.policy.beta]
                } else {
                    s.betas.clone()
                };
                let mut out = Vec::new();
                for &mode in &modes {
                    for &beta in &betas {
                        out.push(RunMember {
                            index: out.len() as u32,
                            mode,
                            beta,
                            label: format!("_{}_beta{}", mode.name(), beta),
                        });
                    }
                }
                out
            }
        }
    }

    /// Checks every parameter, including that the environment and the
    /// policies of all members can be built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents == 0 {
            return Err(ConfigError::Invalid("agents must be positive".into()));
        }
        self.stop.validate()?;
        if self.output.curve && self.stop.epoch_budget > 10_000_000 {
            return Err(ConfigError::Invalid("curve horizon above 10^7 epochs".into()));
        }
        if self.output.bin_width == Some(0) {
            return Err(ConfigError::Invalid("output.bin_width must be positive".into()));
        }
        if let Some(s) = &self.sweep {
            if s.modes.is_empty() && s.betas.is_empty() {
                return Err(ConfigError::Invalid("sweep lists neither modes nor betas".into()));
            }
        }
        let env = build_env(&self.env)?;
        for m in self.members() {
            build_policy(&self.policy, m.beta, env.as_ref())?;
            if m.mode != Mode::Classical {
                self.effective_hybrid(m.mode)?.validate()?;
            }
        }
        Ok(())
    }
}

pub fn build_env(spec: &EnvSpec) -> Result<Box<dyn DseEnvironment>, ConfigError> {
    Ok(match spec {
        EnvSpec::BinaryTree {
            layers,
            reward_exponent,
            path,
            path_seed,
        } => match path {
            Some(bits) => {
                let a: ActionSequence = bits
                    .parse()
                    .map_err(|e| ConfigError::Invalid(format!("correct path {bits:?}: {e}")))?;
                Box::new(BinaryTreeEnv::new(*layers, *reward_exponent, a)?)
            }
            None => Box::new(BinaryTreeEnv::with_seeded_path(*layers, *reward_exponent, *path_seed)?),
        },
        EnvSpec::RewardTable { file, arities } => {
            let text = std::fs::read_to_string(file).map_err(|source| ConfigError::Io {
                path: file.clone(),
                source,
            })?;
            let space = arities.clone().map(SequenceSpace::new).transpose()?;
            Box::new(RewardTableEnv::parse(&text, space)?)
        }
    })
}

pub fn build_policy<E: DseEnvironment + ?Sized>(
    spec: &PolicySpec,
    beta: f64,
    env: &E,
) -> Result<AnyPolicy, ConfigError> {
    Ok(match spec.kind {
        PolicyKind::HTree => {
            if !env.space().is_binary() {
                return Err(ConfigError::Invalid(
                    "h_tree policy needs a binary sequence space".into(),
                ));
            }
            AnyPolicy::Tree(HValueTreePolicy::with_initial_h(
                env.space().epoch_length(),
                beta,
                spec.initial_h,
            )?)
        }
        PolicyKind::Map => AnyPolicy::Map(MapPolicy::with_rule(
            env.space().clone(),
            beta,
            env.initial_percept(),
            update_rule_by_name(&spec.update_rule)?,
        )?),
    })
}
