use std::fmt::Write as _;

use nexus_core::env_sim::{EnvState, Goal, SnapshotStore, SYSTEM_APP};
use nexus_core::task_model::{validate, validate_template, CompositionalTask, TaskSuite};
use serde::Serialize;

use crate::config::SnapshotPolicy;

/// Findings for one task or template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ItemCheck {
    pub id: String,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SuiteCheck {
    pub items: Vec<ItemCheck>,
}

impl SuiteCheck {
    pub fn is_valid(&self) -> bool {
        self.items.iter().all(|i| i.errors.is_empty())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let status = if item.errors.is_empty() { "ok" } else { "FAIL" };
            let _ = writeln!(out, "{status:<4} {}", item.id);
            for e in &item.errors {
                let _ = writeln!(out, "     error: {e}");
            }
            for w in &item.warnings {
                let _ = writeln!(out, "     warning: {w}");
            }
        }
        let bad = self.items.iter().filter(|i| !i.errors.is_empty()).count();
        let _ = writeln!(out, "{} checked, {} invalid", self.items.len(), bad);
        out
    }
}

fn to_text<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

/// Checks a task against the device it will start from: every subtask
/// environment is an installed app, every checkpoint path resolves, and the
/// goal is not already met.
pub fn check_against(task: &CompositionalTask, start: &EnvState) -> (Vec<String>, Vec<String>) {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for s in &task.subtasks {
        if s.environment != SYSTEM_APP && !start.app_registry.contains(&s.environment) {
            errors.push(format!("subtask `{}` targets unknown app `{}`", s.id, s.environment));
        }
    }
    let goal = Goal::from_task(task);
    match start.check_goal(&goal) {
        Err(e) => errors.push(e.to_string()),
        Ok(()) => {
            if start.reward(&goal).ok() == Some(1) {
                warnings.push("goal is already satisfied on the starting snapshot".to_string());
            }
        }
    }
    (errors, warnings)
}

/// Structural checks on every task and template; environment checks on
/// every expanded task when snapshots are given.
pub fn check_suite(suite: &TaskSuite, seed: u64, env: Option<(&SnapshotStore, &SnapshotPolicy)>) -> SuiteCheck {
    let mut items = Vec::new();
    for t in &suite.templates {
        let r = validate_template(t);
        items.push(ItemCheck {
            id: format!("template {}", t.id),
            errors: r.findings.iter().map(to_text).collect(),
            warnings: r.lints.iter().map(to_text).collect(),
        });
    }
    let tasks = match suite.expand(seed) {
        Ok(t) => t,
        Err(e) => {
            items.push(ItemCheck {
                id: "templates".to_string(),
                errors: vec![e.to_string()],
                warnings: Vec::new(),
            });
            suite.tasks.clone()
        }
    };
    let mut seen = std::collections::BTreeSet::new();
    for t in &tasks {
        let r = validate(t);
        let mut item = ItemCheck {
            id: t.id.clone(),
            errors: r.findings.iter().map(to_text).collect(),
            warnings: r.lints.iter().map(to_text).collect(),
        };
        if !seen.insert(t.id.clone()) {
            item.errors.push("duplicate task id".to_string());
        }
        if let Some((store, policy)) = env {
            let snapshot = policy.snapshot_for(&t.id);
            match store.reset(snapshot) {
                Err(e) => item.errors.push(e.to_string()),
                Ok(start) => {
                    let (errors, warnings) = check_against(t, &start);
                    item.errors.extend(errors);
                    item.warnings.extend(warnings);
                }
            }
        }
        items.push(item);
    }
    SuiteCheck { items }
}
