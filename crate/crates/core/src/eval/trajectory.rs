use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::TerminationReason;
use crate::env_sim::{Action, StepEffect};
use crate::memory::MemoryEntry;
use crate::scheduler::{Plan, Subtask};
use crate::task_model::CompositionType;

/// How the verdict of an episode came about, before judging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ending {
    Done,
    Infeasible,
    Collapse,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIds {
    pub planner: String,
    pub navigator: String,
    pub analyst: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetScope {
    EpisodeSteps,
    GlobalSubtasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    EpisodeStart {
        task_id: String,
        composition_type: CompositionType,
        snapshot: String,
        instruction: String,
        seed: u64,
        horizon: u32,
        episode_step_budget: u32,
        initial_state_hash: String,
        backends: BackendIds,
        /// Scheduler configuration in force for this episode.
        config: Value,
    },
    PlannerCall {
        backend: String,
        round: usize,
        attempt: u32,
        observation: String,
        memory: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback: Option<String>,
        response: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<Plan>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    SubtaskDispatch {
        global_index: usize,
        subtask: Subtask,
        /// Plan items after the head; recorded, never executed.
        lookahead: Vec<Subtask>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        lints: Vec<String>,
    },
    NavigatorCall {
        backend: String,
        instruction: String,
        history_len: usize,
        step_index: usize,
        response: String,
    },
    EnvStep {
        action: Action,
        effect: StepEffect,
        foreground: String,
        step_count: u64,
        state_hash: String,
        /// Satisfied goal checkpoints after the step.
        progress: usize,
    },
    AnalystCall {
        backend: String,
        instruction: String,
        response: String,
    },
    ToolCall {
        name: String,
        status: String,
    },
    MemoryAppend {
        entry: MemoryEntry,
    },
    BudgetExceeded {
        scope: BudgetScope,
        limit: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attempted: Option<Action>,
    },
    EpisodeEnd {
        ending: Ending,
        reward: u8,
        termination_reason: TerminationReason,
        final_state_hash: String,
        env_steps: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        judge_error: Option<String>,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::EpisodeStart { .. } => "episode_start",
            EventKind::PlannerCall { .. } => "planner_call",
            EventKind::SubtaskDispatch { .. } => "subtask_dispatch",
            EventKind::NavigatorCall { .. } => "navigator_call",
            EventKind::EnvStep { .. } => "env_step",
            EventKind::AnalystCall { .. } => "analyst_call",
            EventKind::ToolCall { .. } => "tool_call",
            EventKind::MemoryAppend { .. } => "memory_append",
            EventKind::BudgetExceeded { .. } => "budget_exceeded",
            EventKind::EpisodeEnd { .. } => "episode_end",
        }
    }

    /// Backend identity for model-call events.
    pub fn backend(&self) -> Option<&str> {
        match self {
            EventKind::PlannerCall { backend, .. }
            | EventKind::NavigatorCall { backend, .. }
            | EventKind::AnalystCall { backend, .. } => Some(backend),
            _ => None,
        }
    }
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
    pub wall_ms: u64,
    pub infer_ms: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trajectory has no {0} event")]
    Missing(&'static str),
    #[error("event seq {found} at position {expected}")]
    Sequence { expected: u64, found: u64 },
}

/// A finished episode. All fields other than `events` are copies of what the
/// first and last events say, kept for convenient access.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub composition_type: CompositionType,
    pub config: Value,
    pub events: Vec<Event>,
    pub final_state_hash: String,
    pub ending: Ending,
    pub reward: u8,
    pub termination_reason: TerminationReason,
}

impl TrajectoryRecord {
    /// Build from an event log that starts with `episode_start` and ends with `episode_end`.
    pub fn from_events(events: Vec<Event>) -> Result<Self, TrajectoryError> {
        for (i, e) in events.iter().enumerate() {
            if e.seq != i as u64 {
                return Err(TrajectoryError::Sequence {
                    expected: i as u64,
                    found: e.seq,
                });
            }
        }
        let (task_id, composition_type, config) = match events.first().map(|e| &e.kind) {
            Some(EventKind::EpisodeStart {
                task_id,
                composition_type,
                config,
                ..
            }) => (task_id.clone(), *composition_type, config.clone()),
            _ => return Err(TrajectoryError::Missing("episode_start")),
        };
        let (ending, reward, termination_reason, final_state_hash) = match events.last().map(|e| &e.kind) {
            Some(EventKind::EpisodeEnd {
                ending,
                reward,
                termination_reason,
                final_state_hash,
                ..
            }) => (*ending, *reward, *termination_reason, final_state_hash.clone()),
            _ => return Err(TrajectoryError::Missing("episode_end")),
        };
        Ok(Self {
            task_id,
            composition_type,
            config,
            events,
            final_state_hash,
            ending,
            reward,
            termination_reason,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TrajectoryError> {
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|source| TrajectoryError::Parse { line: i + 1, source }))
            .collect::<Result<Vec<Event>, _>>()?;
        Self::from_events(events)
    }

    pub fn env_steps(&self) -> impl Iterator<Item = (&Event, &Action)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::EnvStep { action, .. } => Some((e, action)),
            _ => None,
        })
    }

    pub fn env_step_count(&self) -> u64 {
        self.env_steps().count() as u64
    }

    pub fn model_calls(&self) -> impl Iterator<Item = (&Event, &str)> {
        self.events.iter().filter_map(|e| e.kind.backend().map(|b| (e, b)))
    }

    /// Planner rounds that produced a plan (retries of a malformed reply excluded).
    pub fn planning_rounds(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(&e.kind, EventKind::PlannerCall { plan: Some(_), .. }))
            .count()
    }

    pub fn memory_entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::MemoryAppend { entry } => Some(entry),
            _ => None,
        })
    }

    pub fn initial_state_hash(&self) -> &str {
        match &self.events[0].kind {
            EventKind::EpisodeStart { initial_state_hash, .. } => initial_state_hash,
            _ => unreachable!("checked at construction"),
        }
    }

    pub fn snapshot(&self) -> &str {
        match &self.events[0].kind {
            EventKind::EpisodeStart { snapshot, .. } => snapshot,
            _ => unreachable!("checked at construction"),
        }
    }
}
