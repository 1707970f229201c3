//! The scheduling loop: observe, plan, dispatch the plan head, remember, re-plan.

mod plan;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{lint_subtask, parse_plan, Plan, PlanError, Subtask, SubtaskKind, Terminal};

use crate::backend::{
    AnalystBackend, AnalystRequest, NavigatorBackend, NavigatorRequest, PlannerBackend, PlannerRequest, Reply, Usage,
};
use crate::env_sim::{Action, EnvState, Goal, StepEffect};
use crate::eval::{classify, BackendIds, BudgetScope, Ending, Event, EventKind, TrajectoryRecord};
use crate::executor::{exec_act, exec_think, exec_tool, ActLimits, ExecError, ExecObserver, ToolRegistry};
use crate::memory::{render_context_with, ContextView, ProcessMemory, ResultVariant, ToolResult, MIN_CONTEXT_BUDGET};
use crate::task_model::CompositionalTask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub max_global_subtasks: u32,
    /// Step limit H for one act subtask.
    pub per_subtask_step_budget: u32,
    /// Defaults to the goal horizon.
    pub episode_step_budget: Option<u32>,
    pub malformed_retry_limit: u32,
    pub history_window: usize,
    pub memory_char_budget: usize,
    pub context_view: ContextView,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            max_global_subtasks: 20,
            per_subtask_step_budget: 15,
            episode_step_budget: None,
            malformed_retry_limit: 1,
            history_window: 5,
            memory_char_budget: 4096,
            context_view: ContextView::Full,
        }
    }
}

impl SchedulerConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.max_global_subtasks == 0 {
            return Err("max_global_subtasks must be positive".into());
        }
        if self.per_subtask_step_budget == 0 {
            return Err("per_subtask_step_budget must be positive".into());
        }
        if self.episode_step_budget == Some(0) {
            return Err("episode_step_budget must be positive".into());
        }
        if self.history_window == 0 {
            return Err("history_window must be positive".into());
        }
        if self.memory_char_budget < MIN_CONTEXT_BUDGET {
            return Err(format!("memory_char_budget must be at least {MIN_CONTEXT_BUDGET}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("planner collapsed after {attempts} attempts: {last_error}")]
    PlannerCollapse { attempts: u32, last_error: String },
}

/// The three model roles of an episode.
#[derive(Clone)]
pub struct Backends {
    pub planner: Arc<dyn PlannerBackend>,
    pub navigator: Arc<dyn NavigatorBackend>,
    pub analyst: Arc<dyn AnalystBackend>,
}

impl Backends {
    pub fn ids(&self) -> BackendIds {
        BackendIds {
            planner: self.planner.identity().to_string(),
            navigator: self.navigator.identity().to_string(),
            analyst: self.analyst.identity().to_string(),
        }
    }
}

/// One call to the planner within a planning round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerAttempt {
    pub feedback: Option<String>,
    pub reply: Option<Reply>,
    pub wall_ms: u64,
    pub outcome: Result<Plan, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanRound {
    pub memory: String,
    pub attempts: Vec<PlannerAttempt>,
    pub plan: Result<Plan, SchedulerError>,
}

/// Ask the planner for a plan, retrying malformed replies with the parse
/// error as feedback.
pub fn plan(
    backend: &dyn PlannerBackend,
    observation: &str,
    goal: &Goal,
    memory: &ProcessMemory,
    config: &SchedulerConfig,
    seed: u64,
) -> PlanRound {
    let rendered = render_context_with(memory, config.memory_char_budget, config.context_view)
        .unwrap_or_else(|e| format!("(memory unavailable: {e})\n"));
    let mut attempts = Vec::new();
    let mut feedback: Option<String> = None;
    for _ in 0..=config.malformed_retry_limit {
        let request = PlannerRequest {
            goal: &goal.instruction,
            observation,
            memory: &rendered,
            feedback: feedback.as_deref(),
            seed,
        };
        let started = Instant::now();
        let reply = backend.plan(&request);
        let wall_ms = started.elapsed().as_millis() as u64;
        let (reply, outcome) = match reply {
            Ok(r) => {
                let parsed = parse_plan(&r.text).map_err(|e| e.to_string());
                (Some(r), parsed)
            }
            Err(e) => (None, Err(e.to_string())),
        };
        let error = outcome.as_ref().err().cloned();
        attempts.push(PlannerAttempt {
            feedback: feedback.take(),
            reply,
            wall_ms,
            outcome,
        });
        match error {
            None => {
                let plan = attempts
                    .last()
                    .and_then(|a| a.outcome.clone().ok())
                    .expect("just parsed");
                return PlanRound {
                    memory: rendered,
                    attempts,
                    plan: Ok(plan),
                };
            }
            Some(e) => feedback = Some(format!("Your previous reply could not be parsed: {e}")),
        }
    }
    let last_error = attempts
        .last()
        .and_then(|a| a.outcome.clone().err())
        .unwrap_or_default();
    PlanRound {
        memory: rendered,
        plan: Err(SchedulerError::PlannerCollapse {
            attempts: attempts.len() as u32,
            last_error,
        }),
        attempts,
    }
}

/// How event times are stamped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Wall time equals reported inference time for model calls and is zero
    /// elsewhere. Makes trajectories byte-reproducible.
    #[default]
    Logical,
    /// Measured wall time, never less than the reported inference time.
    System,
}

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub snapshot: String,
    pub seed: u64,
    pub clock: Clock,
    pub tools: ToolRegistry,
}

impl EpisodeOptions {
    pub fn new(snapshot: impl Into<String>, seed: u64) -> Self {
        Self {
            snapshot: snapshot.into(),
            seed,
            clock: Clock::Logical,
            tools: ToolRegistry::default(),
        }
    }
}

struct Recorder<'g> {
    events: Vec<Event>,
    clock: Clock,
    goal: &'g Goal,
}

impl Recorder<'_> {
    fn push(&mut self, kind: EventKind, wall_ms: u64, usage: Usage) {
        self.events.push(Event {
            seq: self.events.len() as u64,
            kind,
            wall_ms,
            infer_ms: usage.infer_ms,
            tokens_in: usage.tokens_in,
            tokens_out: usage.tokens_out,
        });
    }

    fn note(&mut self, kind: EventKind) {
        self.push(kind, 0, Usage::default());
    }

    fn call(&mut self, kind: EventKind, measured_ms: u64, usage: Usage) {
        let wall = match self.clock {
            Clock::Logical => usage.infer_ms,
            Clock::System => measured_ms.max(usage.infer_ms),
        };
        self.push(kind, wall, usage);
    }
}

impl ExecObserver for Recorder<'_> {
    fn navigator_call(&mut self, backend: &str, request: &NavigatorRequest<'_>, reply: &Reply, wall_ms: u64) {
        self.call(
            EventKind::NavigatorCall {
                backend: backend.to_string(),
                instruction: request.instruction.to_string(),
                history_len: request.history.lines().count(),
                step_index: request.step_index,
                response: reply.text.clone(),
            },
            wall_ms,
            reply.usage,
        );
    }

    fn env_step(&mut self, action: &Action, effect: &StepEffect, after: &EnvState, wall_ms: u64) {
        let kind = EventKind::EnvStep {
            action: action.clone(),
            effect: effect.clone(),
            foreground: after.foreground.clone(),
            step_count: after.step_count,
            state_hash: after.state_hash(),
            progress: after.progress(self.goal),
        };
        let wall = match self.clock {
            Clock::Logical => 0,
            Clock::System => wall_ms,
        };
        self.push(kind, wall, Usage::default());
    }

    fn analyst_call(&mut self, backend: &str, request: &AnalystRequest<'_>, reply: &Reply, wall_ms: u64) {
        self.call(
            EventKind::AnalystCall {
                backend: backend.to_string(),
                instruction: request.instruction.to_string(),
                response: reply.text.clone(),
            },
            wall_ms,
            reply.usage,
        );
    }
}

/// Run one task to termination from `initial`. Never fails: every fault
/// becomes a termination reason in the returned record.
pub fn run_episode(
    task: &CompositionalTask,
    initial: EnvState,
    backends: &Backends,
    config: &SchedulerConfig,
    options: &EpisodeOptions,
) -> TrajectoryRecord {
    let goal = Goal::from_task(task);
    let budget = config.episode_step_budget.unwrap_or(goal.horizon);
    let seed = options.seed;
    let mut rec = Recorder {
        events: Vec::new(),
        clock: options.clock,
        goal: &goal,
    };
    let mut env = initial;
    rec.note(EventKind::EpisodeStart {
        task_id: task.id.clone(),
        composition_type: task.composition_type,
        snapshot: options.snapshot.clone(),
        instruction: task.instruction.clone(),
        seed,
        horizon: goal.horizon,
        episode_step_budget: budget,
        initial_state_hash: env.state_hash(),
        backends: backends.ids(),
        config: serde_json::to_value(config).expect("config serializes"),
    });

    let mut memory = ProcessMemory::new();
    let mut steps_used: u32 = 0;
    let mut round = 0usize;
    let ending = loop {
        let observation = env.observe();
        let planned = plan(
            backends.planner.as_ref(),
            &observation.text,
            &goal,
            &memory,
            config,
            seed,
        );
        for (k, a) in planned.attempts.iter().enumerate() {
            rec.call(
                EventKind::PlannerCall {
                    backend: backends.planner.identity().to_string(),
                    round,
                    attempt: k as u32,
                    observation: observation.text.clone(),
                    memory: planned.memory.clone(),
                    feedback: a.feedback.clone(),
                    response: a.reply.as_ref().map(|r| r.text.clone()).unwrap_or_default(),
                    plan: a.outcome.as_ref().ok().cloned(),
                    error: a.outcome.as_ref().err().cloned(),
                },
                a.wall_ms,
                a.reply.as_ref().map(|r| r.usage).unwrap_or_default(),
            );
        }
        let plan = match planned.plan {
            Ok(p) => p,
            Err(_) => break Ending::Collapse,
        };
        match plan.terminal {
            Some(Terminal::Done) => break Ending::Done,
            Some(Terminal::Infeasible) => break Ending::Infeasible,
            None => {}
        }
        if memory.len() >= config.max_global_subtasks as usize {
            rec.note(EventKind::BudgetExceeded {
                scope: BudgetScope::GlobalSubtasks,
                limit: config.max_global_subtasks,
                attempted: None,
            });
            break Ending::BudgetExceeded;
        }
        let head = plan.subtasks[0].clone();
        rec.note(EventKind::SubtaskDispatch {
            global_index: memory.len(),
            lints: lint_subtask(&head),
            lookahead: plan.subtasks[1..].to_vec(),
            subtask: head.clone(),
        });

        let left = budget.saturating_sub(steps_used);
        let (result, exhausted) = match head.kind {
            SubtaskKind::Act => {
                let limits = ActLimits {
                    max_steps: config.per_subtask_step_budget,
                    history_window: config.history_window,
                    episode_steps_left: left,
                };
                let out = exec_act(
                    &mut env,
                    &head.instruction,
                    limits,
                    backends.navigator.as_ref(),
                    seed,
                    &mut rec,
                );
                steps_used += out.steps_used;
                (ResultVariant::Act(out.result), out.budget_exhausted)
            }
            SubtaskKind::Think => {
                let rendered =
                    render_context_with(&memory, config.memory_char_budget, config.context_view).unwrap_or_default();
                let think = exec_think(
                    &observation.text,
                    &head.instruction,
                    &rendered,
                    backends.analyst.as_ref(),
                    seed,
                    &mut rec,
                );
                (ResultVariant::Think(think), None)
            }
            SubtaskKind::Tool => match exec_tool(&mut env, &head.instruction, &options.tools, left, &mut rec) {
                Ok(out) => {
                    steps_used += out.steps_used;
                    rec.note(EventKind::ToolCall {
                        name: head.instruction.clone(),
                        status: out.result.status.clone(),
                    });
                    (ResultVariant::Tool(out.result), out.budget_exhausted)
                }
                Err(e @ ExecError::UnknownTool(_)) | Err(e @ ExecError::NavigatorMalformed(_)) => {
                    let status = e.to_string();
                    rec.note(EventKind::ToolCall {
                        name: head.instruction.clone(),
                        status: status.clone(),
                    });
                    (ResultVariant::Tool(ToolResult { status }), None)
                }
            },
        };
        let entry = memory.append(head.instruction.clone(), result).clone();
        rec.note(EventKind::MemoryAppend { entry });
        if let Some(attempted) = exhausted {
            rec.note(EventKind::BudgetExceeded {
                scope: BudgetScope::EpisodeSteps,
                limit: budget,
                attempted: Some(attempted),
            });
            break Ending::BudgetExceeded;
        }
        round += 1;
    };

    let (reward, judge_error) = match env.reward(&goal) {
        Ok(r) => (r, None),
        Err(e) => (0, Some(e.to_string())),
    };
    let reason = classify(ending, reward);
    rec.note(EventKind::EpisodeEnd {
        ending,
        reward,
        termination_reason: reason,
        final_state_hash: env.state_hash(),
        env_steps: rec
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::EnvStep { .. }))
            .count() as u64,
        judge_error,
    });
    TrajectoryRecord::from_events(rec.events).expect("recorder emits a well-formed log")
}
