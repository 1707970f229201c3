use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nexus_cli::{check_suite, make_snapshot, replay, run, RunConfig, SnapshotPolicy, SEED_ENV};
use nexus_core::env_sim::{Action, SnapshotStore};
use nexus_core::eval::{pgr_table, MetricsReport, TrajectoryRecord};
use nexus_core::task_model::TaskSuite;

#[derive(Parser)]
#[command(
    name = "nexus",
    version,
    about = "Run and evaluate compositional GUI-agent task suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a suite and write trajectories and reports.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed, overriding the config and NEXUS_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Join weak, strong-ceiling and bridged reports into a PGR table.
    Pgr {
        weak: PathBuf,
        strong: PathBuf,
        bridged: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check a suite's tasks and templates, and optionally the snapshots they start from.
    ValidateSuite {
        suite: PathBuf,
        /// Take snapshots and the snapshot policy from a run config.
        #[arg(long, conflicts_with = "snapshots")]
        config: Option<PathBuf>,
        /// Snapshot directory; every task starts from `--snapshot`.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, default_value = "clean")]
        snapshot: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-execute a logged action sequence and compare the final state hash.
    Replay {
        trajectory: PathBuf,
        #[arg(long, conflicts_with = "config")]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Author a snapshot from app definitions and an optional action recipe.
    MakeSnapshot {
        #[arg(long)]
        apps: PathBuf,
        /// JSON array of actions, e.g. ["Tap(icon_settings)", "Tap(wifi_toggle)"].
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a suite with every template instantiated.
    Expand {
        suite: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MetricsReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn snapshots_from(snapshots: Option<PathBuf>, config: Option<PathBuf>) -> Result<(SnapshotStore, Option<RunConfig>)> {
    let (dir, config) = match (snapshots, config) {
        (Some(dir), _) => (dir, None),
        (None, Some(c)) => {
            let config = RunConfig::load(&c)?;
            (config.snapshots.clone(), Some(config))
        }
        (None, None) => bail!("either --snapshots or --config is required"),
    };
    let store = SnapshotStore::from_dir(&dir).with_context(|| format!("loading snapshots from {}", dir.display()))?;
    Ok((store, config))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, out, seed } => {
            let env_seed = std::env::var(SEED_ENV).ok();
            let mut config = RunConfig::load(&config)?.with_seed_override(env_seed.as_deref())?;
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(o) = out {
                config.output_dir = o;
            }
            let output = run(&config)?;
            print!("{}", output.report.to_table());
            if output.faults().is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in output.faults() {
                    eprintln!("fault in {}: {}", f.task_id, f.message);
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Pgr {
            weak,
            strong,
            bridged,
            json,
        } => {
            let table = pgr_table(&load_report(&weak)?, &load_report(&strong)?, &load_report(&bridged)?)?;
            if json {
                print!("{}", table.to_json());
            } else {
                print!("{}", table.to_table());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateSuite {
            suite,
            config,
            snapshots,
            snapshot,
            seed,
        } => {
            let s = TaskSuite::load(&suite)?;
            let check = match (config, snapshots) {
                (None, None) => check_suite(&s, seed, None),
                (c, d) => {
                    let (store, config) = snapshots_from(d, c)?;
                    let policy = config.map_or_else(|| SnapshotPolicy::uniform(snapshot), |c| c.snapshot_policy);
                    check_suite(&s, seed, Some((&store, &policy)))
                }
            };
            print!("{}", check.to_text());
            Ok(if check.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Replay {
            trajectory,
            snapshots,
            config,
        } => {
            let text = fs::read_to_string(&trajectory).with_context(|| format!("reading {}", trajectory.display()))?;
            let record = TrajectoryRecord::from_jsonl(&text)?;
            let (store, _) = snapshots_from(snapshots, config)?;
            let outcome = replay(&record, &store)?;
            if outcome.matches() {
                println!(
                    "ok {} {} steps, final state {}",
                    outcome.task_id, outcome.steps, outcome.actual
                );
                Ok(ExitCode::SUCCESS)
            } else {
                println!(
                    "MISMATCH {} after {} steps: logged {}, replayed {}",
                    outcome.task_id, outcome.steps, outcome.expected, outcome.actual
                );
                Ok(ExitCode::FAILURE)
            }
        }
        Command::MakeSnapshot { apps, recipe, out } => {
            let actions: Vec<Action> = match recipe {
                None => Vec::new(),
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let raw: Vec<String> = serde_json::from_str(&text)?;
                    raw.iter().map(|a| a.parse::<Action>()).collect::<Result<_, _>>()?
                }
            };
            let state = make_snapshot(&apps, &actions)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, state.to_json())?;
            println!("wrote {} (state {})", out.display(), state.state_hash());
            Ok(ExitCode::SUCCESS)
        }
        Command::Expand { suite, seed } => {
            let mut s = TaskSuite::load(&suite)?;
            s.tasks = s.expand(seed)?;
            s.templates.clear();
            print!("{}", s.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
