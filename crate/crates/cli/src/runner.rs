use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use nexus_core::env_sim::{EnvError, SnapshotStore};
use nexus_core::eval::{Fault, MetricError, MetricsReport, TrajectoryRecord};
use nexus_core::scheduler::{run_episode, Backends, EpisodeOptions};
use nexus_core::task_model::{validate, CompositionalTask, SuiteError, TaskSuite, TemplateError};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("expanding templates: {0}")]
    Template(#[from] TemplateError),
    #[error("task `{id}` is invalid: {problems}")]
    InvalidTask { id: String, problems: String },
    #[error("task id `{0}` appears more than once")]
    DuplicateTask(String),
    #[error("loading snapshots: {0}")]
    Snapshots(#[from] EnvError),
    #[error("building report: {0}")]
    Metrics(#[from] MetricError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
}

/// Everything one suite run produced, in suite order.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub records: Vec<TrajectoryRecord>,
}

impl RunOutput {
    pub fn faults(&self) -> &[Fault] {
        &self.report.faults
    }
}

/// Per-episode seed: the first eight bytes of SHA-256 over the master seed
/// and the task id.
pub fn episode_seed(master: u64, task_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(task_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// File name for a task's trajectory log.
pub fn trajectory_file_name(task_id: &str) -> String {
    let safe: String = task_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.jsonl")
}

/// Expand and validate the suite's tasks.
pub fn load_tasks(suite: &TaskSuite, seed: u64) -> Result<Vec<CompositionalTask>, RunError> {
    let tasks = suite.expand(seed)?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.id.as_str()) {
            return Err(RunError::DuplicateTask(t.id.clone()));
        }
        let report = validate(t);
        if !report.is_valid() {
            let problems = serde_json::to_string(&report.findings).unwrap_or_default();
            return Err(RunError::InvalidTask {
                id: t.id.clone(),
                problems,
            });
        }
    }
    Ok(tasks)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "episode panicked".to_string()
    }
}

fn run_one(
    task: &CompositionalTask,
    config: &RunConfig,
    snapshots: &SnapshotStore,
    backends: &Backends,
) -> Result<TrajectoryRecord, Fault> {
    let snapshot = config.snapshot_policy.snapshot_for(&task.id);
    let fault = |message: String| Fault {
        task_id: task.id.clone(),
        message,
    };
    let initial = snapshots.reset(snapshot).map_err(|e| fault(e.to_string()))?;
    let mut options = EpisodeOptions::new(snapshot, episode_seed(config.seed, &task.id));
    options.clock = config.clock;
    panic::catch_unwind(AssertUnwindSafe(|| {
        run_episode(task, initial, backends, &config.scheduler, &options)
    }))
    .map_err(|p| fault(panic_message(p)))
}

/// Run every task of the configured suite. Writes nothing to disk.
pub fn run_suite(config: &RunConfig) -> Result<RunOutput, RunError> {
    let suite = TaskSuite::load(&config.suite)?;
    let tasks = load_tasks(&suite, config.seed)?;
    let snapshots = SnapshotStore::from_dir(&config.snapshots)?;
    let backends = config.build_backends()?;
    run_tasks(&suite.name, &tasks, config, &snapshots, &backends)
}

/// Run the given tasks with explicit snapshots and backends.
pub fn run_tasks(
    suite_name: &str,
    tasks: &[CompositionalTask],
    config: &RunConfig,
    snapshots: &SnapshotStore,
    backends: &Backends,
) -> Result<RunOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<Result<TrajectoryRecord, Fault>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_one(t, config, snapshots, backends))
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    let mut faults = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => faults.push(f),
        }
    }
    let report = MetricsReport::from_records(suite_name, &records, faults, config.pricing.as_ref())?;
    Ok(RunOutput { report, records })
}

/// Write `trajectories/<task>.jsonl`, `report.json`, `report.txt` and
/// `report.csv` under `dir`. Stale trajectory logs are removed first.
pub fn write_artifacts(dir: &Path, output: &RunOutput) -> io::Result<()> {
    let traj = dir.join("trajectories");
    if traj.exists() {
        fs::remove_dir_all(&traj)?;
    }
    fs::create_dir_all(&traj)?;
    for r in &output.records {
        fs::write(traj.join(trajectory_file_name(&r.task_id)), r.to_jsonl())?;
    }
    fs::write(dir.join("report.json"), output.report.to_json())?;
    fs::write(dir.join("report.txt"), output.report.to_table())?;
    fs::write(dir.join("report.csv"), output.report.to_csv())?;
    Ok(())
}

/// Run the suite and write its artifacts to the configured output directory.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    let output = run_suite(config)?;
    write_artifacts(&config.output_dir, &output)?;
    Ok(output)
}
