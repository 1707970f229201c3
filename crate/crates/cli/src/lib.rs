//! Library side of the `nexus` command: run configuration, the suite runner,
//! trajectory replay, suite validation and snapshot authoring.

pub mod config;
pub mod replay;
pub mod runner;
pub mod snapshot;
pub mod validate;

pub use config::{BackendBinding, BackendBindings, ConfigError, RunConfig, SnapshotPolicy, SEED_ENV};
pub use replay::{replay, ReplayError, ReplayOutcome};
pub use runner::{
    episode_seed, load_tasks, run, run_suite, run_tasks, trajectory_file_name, write_artifacts, RunError, RunOutput,
};
pub use snapshot::{make_snapshot, SnapshotError};
pub use validate::{check_against, check_suite, ItemCheck, SuiteCheck};
