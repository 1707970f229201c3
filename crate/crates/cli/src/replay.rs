use nexus_core::env_sim::{EnvError, SnapshotStore};
use nexus_core::eval::TrajectoryRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Snapshot(#[from] EnvError),
    #[error("snapshot `{snapshot}` hashes to {actual}, but the log started from {expected}")]
    InitialMismatch {
        snapshot: String,
        expected: String,
        actual: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub task_id: String,
    pub steps: usize,
    pub expected: String,
    pub actual: String,
}

impl ReplayOutcome {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Re-apply the logged env actions to the recorded snapshot and compare the
/// resulting state hash with the logged final hash.
pub fn replay(record: &TrajectoryRecord, snapshots: &SnapshotStore) -> Result<ReplayOutcome, ReplayError> {
    let mut env = snapshots.reset(record.snapshot())?;
    let start = env.state_hash();
    if start != record.initial_state_hash() {
        return Err(ReplayError::InitialMismatch {
            snapshot: record.snapshot().to_string(),
            expected: record.initial_state_hash().to_string(),
            actual: start,
        });
    }
    let mut steps = 0;
    for (_, action) in record.env_steps() {
        env = env.step(action).0;
        steps += 1;
    }
    Ok(ReplayOutcome {
        task_id: record.task_id.clone(),
        steps,
        expected: record.final_state_hash.clone(),
        actual: env.state_hash(),
    })
}
