use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use hybrid_rl::config::RunConfig;
use hybrid_rl::runner::{analyze, simulate};
use hybrid_rl::verify::{run_suite, Sizes, Suite, VerifyOptions};

/// Ensemble simulator for hybrid quantum-classical learning agents.
///
/// The worker count is read from HYBRID_RL_WORKERS (all cores if unset).
#[derive(Parser)]
#[command(name = "hybrid-rl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Full,
    Quick,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensembles of a configuration and write curve.csv and agents.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configuration's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configuration's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite; exits non-zero if any check fails.
    Verify {
        /// amplify, theorem1, theorem2, theorem3, interval-laws or all.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
        /// Write the theorem1 history tables here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute ensemble summaries from the agents*.csv files of a directory.
    Analyze {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Configuration helpers.
    Config {
        /// Print the default configuration, which documents every key.
        #[arg(long)]
        print_defaults: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            let dir = cfg.output.dir.clone();
            for m in simulate(&cfg, &dir)? {
                m.summary.write_line(&m.agents_csv.display().to_string(), &mut stdout)?;
            }
            Ok(true)
        }
        Command::Verify {
            suite,
            seed,
            scale,
            out,
        } => {
            let suite: Suite = suite.parse()?;
            let opts = VerifyOptions {
                seed,
                sizes: match scale {
                    Scale::Full => Sizes::FULL,
                    Scale::Quick => Sizes::QUICK,
                },
                out,
            };
            let report = run_suite(suite, &opts)?;
            write!(stdout, "{report}")?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            writeln!(stdout, "# {suite}: {} checks, {failed} failed", report.checks.len())?;
            Ok(failed == 0)
        }
        Command::Analyze { dir } => {
            for (name, s) in analyze(&dir)? {
                s.write_line(&name, &mut stdout)?;
            }
            Ok(true)
        }
        Command::Config { print_defaults } => {
            if !print_defaults {
                anyhow::bail!("nothing to do; pass --print-defaults");
            }
            write!(stdout, "{}", RunConfig::default().to_toml()?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
