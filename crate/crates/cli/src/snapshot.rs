use std::path::Path;

use nexus_core::env_sim::{Action, AppMachine, EnvError, EnvState, StepEffect};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("recipe step {index} `{action}` had no effect: {effect}")]
    Ineffective {
        index: usize,
        action: String,
        effect: String,
    },
}

/// Build a snapshot from app definitions, optionally driving the fresh
/// device through a recipe of actions. Every recipe step must change
/// something. The result is rebased so it starts on the launcher.
pub fn make_snapshot(apps_dir: &Path, recipe: &[Action]) -> Result<EnvState, SnapshotError> {
    let apps = AppMachine::load_dir(apps_dir)?;
    let mut env = EnvState::from_apps(apps, 0);
    for (index, action) in recipe.iter().enumerate() {
        let (next, effect) = env.step(action);
        if matches!(effect, StepEffect::NoOp { .. } | StepEffect::Rejected { .. }) {
            return Err(SnapshotError::Ineffective {
                index,
                action: action.to_string(),
                effect: serde_json::to_string(&effect).unwrap_or_default(),
            });
        }
        env = next;
    }
    Ok(env.rebase())
}
