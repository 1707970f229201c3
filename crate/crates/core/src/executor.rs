//! The execution module: act subtasks go to the navigator, think subtasks to
//! the analyst, tool subtasks to the tool registry. Every failure becomes a
//! result variant; nothing here aborts an episode.

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::backend::{AnalystBackend, AnalystRequest, NavigatorBackend, NavigatorRequest, Reply};
use crate::env_sim::{unquote, Action, EnvState, StepEffect};
use crate::memory::{ActResult, StepLog, ThinkResult, ToolResult};

pub const DEFAULT_HISTORY_WINDOW: usize = 5;
pub const SUBTASK_BUDGET_NOTE: &str = "subtask budget exhausted";
pub const EPISODE_BUDGET_NOTE: &str = "episode step budget exhausted";

/// What the navigator decided for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    Act(Action),
    Stop { completed: bool, note: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavigatorReply {
    pub reasoning: String,
    pub decision: Move,
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("navigator reply malformed: {0}")]
    NavigatorMalformed(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
}

fn parse_stop(s: &str) -> Option<Move> {
    let inner = s
        .strip_prefix("Stop")?
        .trim_start()
        .strip_prefix('(')?
        .strip_suffix(')')?
        .trim();
    let rest = inner
        .strip_prefix("completed")?
        .trim_start()
        .strip_prefix('=')?
        .trim_start();
    let (completed, rest) = match rest.strip_prefix("true") {
        Some(r) => (true, r),
        None => (false, rest.strip_prefix("false")?),
    };
    let rest = rest.trim();
    if rest.is_empty() {
        return Some(Move::Stop {
            completed,
            note: String::new(),
        });
    }
    let (note, tail) = unquote(rest.strip_prefix(',')?.trim_start())?;
    tail.trim().is_empty().then_some(Move::Stop { completed, note })
}

/// Parse `REASONING: ...` / `ACTION: ...` / `REFLECTION: ...` lines. Exactly
/// one `ACTION:` line is required; untagged lines continue the previous
/// reasoning or reflection.
pub fn parse_navigator_reply(text: &str) -> Result<NavigatorReply, ExecError> {
    let bad = |why: &str| ExecError::NavigatorMalformed(why.to_string());
    let mut reasoning: Vec<&str> = Vec::new();
    let mut reflection: Vec<&str> = Vec::new();
    let mut action: Option<&str> = None;
    #[derive(PartialEq)]
    enum Field {
        None,
        Reasoning,
        Reflection,
        Action,
    }
    let mut current = Field::None;
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let upper = t.to_ascii_uppercase();
        if upper.starts_with("REASONING:") {
            reasoning.push(t["REASONING:".len()..].trim());
            current = Field::Reasoning;
        } else if upper.starts_with("REFLECTION:") {
            reflection.push(t["REFLECTION:".len()..].trim());
            current = Field::Reflection;
        } else if upper.starts_with("ACTION:") {
            if action.is_some() {
                return Err(bad("more than one ACTION line"));
            }
            action = Some(t["ACTION:".len()..].trim());
            current = Field::Action;
        } else {
            match current {
                Field::Reasoning => reasoning.push(t),
                Field::Reflection => reflection.push(t),
                Field::None | Field::Action => return Err(bad(&format!("unexpected line `{t}`"))),
            }
        }
    }
    let action = action.ok_or_else(|| bad("no ACTION line"))?;
    let decision = match parse_stop(action) {
        Some(m) => m,
        None => Move::Act(
            action
                .parse::<Action>()
                .map_err(|e| ExecError::NavigatorMalformed(e.to_string()))?,
        ),
    };
    Ok(NavigatorReply {
        reasoning: reasoning.join(" "),
        decision,
        reflection: (!reflection.is_empty()).then(|| reflection.join(" ")),
    })
}

/// Hooks for logging what an executor does. All default to no-ops.
pub trait ExecObserver {
    fn navigator_call(&mut self, _backend: &str, _request: &NavigatorRequest<'_>, _reply: &Reply, _wall_ms: u64) {}
    fn env_step(&mut self, _action: &Action, _effect: &StepEffect, _after: &EnvState, _wall_ms: u64) {}
    fn analyst_call(&mut self, _backend: &str, _request: &AnalystRequest<'_>, _reply: &Reply, _wall_ms: u64) {}
}

/// Observer that records nothing.
pub struct Silent;

impl ExecObserver for Silent {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActLimits {
    /// Per-subtask step limit H.
    pub max_steps: u32,
    /// Prior steps of the current subtask shown to the navigator.
    pub history_window: usize,
    /// Steps left in the episode budget.
    pub episode_steps_left: u32,
}

impl ActLimits {
    pub fn new(max_steps: u32) -> Self {
        Self {
            max_steps,
            history_window: DEFAULT_HISTORY_WINDOW,
            episode_steps_left: u32::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActOutcome {
    pub result: ActResult,
    pub steps_used: u32,
    /// Set when the episode budget ran out: the action the navigator wanted
    /// next, which was not applied.
    pub budget_exhausted: Option<Action>,
}

fn render_history(logs: &[StepLog], window: usize) -> String {
    let executed: Vec<(usize, &StepLog)> = logs.iter().filter(|l| l.executed).enumerate().collect();
    let start = executed.len().saturating_sub(window);
    let mut out = String::new();
    for (k, l) in &executed[start..] {
        out.push_str(&format!(
            "{}. {} => {}\n",
            k + 1,
            l.reasoning.replace('\n', " "),
            l.action
        ));
    }
    out
}

/// Drive the navigator on one act subtask for at most `limits.max_steps` env
/// steps. A stop after the last allowed step is still honoured.
pub fn exec_act(
    env: &mut EnvState,
    instruction: &str,
    limits: ActLimits,
    navigator: &dyn NavigatorBackend,
    seed: u64,
    observer: &mut dyn ExecObserver,
) -> ActOutcome {
    let mut logs: Vec<StepLog> = Vec::new();
    let mut steps: u32 = 0;
    let finish =
        |logs: Vec<StepLog>, completed: bool, note: Option<String>, steps: u32, exhausted: Option<Action>| ActOutcome {
            result: ActResult {
                completed,
                step_logs: logs,
                note,
            },
            steps_used: steps,
            budget_exhausted: exhausted,
        };
    loop {
        let observation = env.observe().text;
        let history = render_history(&logs, limits.history_window);
        let request = NavigatorRequest {
            instruction,
            observation: &observation,
            history: &history,
            step_index: steps as usize,
            seed,
        };
        let started = Instant::now();
        let reply = match navigator.next_move(&request) {
            Ok(r) => r,
            Err(e) => return finish(logs, false, Some(format!("navigator unavailable: {e}")), steps, None),
        };
        observer.navigator_call(
            navigator.identity(),
            &request,
            &reply,
            started.elapsed().as_millis() as u64,
        );
        let parsed = match parse_navigator_reply(&reply.text) {
            Ok(p) => p,
            Err(e) => return finish(logs, false, Some(e.to_string()), steps, None),
        };
        match parsed.decision {
            Move::Stop { completed, note } => {
                logs.push(StepLog {
                    reasoning: parsed.reasoning,
                    action: Action::Stop(None),
                    reflection: parsed.reflection,
                    executed: false,
                });
                let note = (!note.is_empty()).then_some(note);
                return finish(logs, completed, note, steps, None);
            }
            Move::Act(action) => {
                if steps >= limits.max_steps {
                    return finish(logs, false, Some(SUBTASK_BUDGET_NOTE.into()), steps, None);
                }
                if steps >= limits.episode_steps_left {
                    return finish(logs, false, Some(EPISODE_BUDGET_NOTE.into()), steps, Some(action));
                }
                let started = Instant::now();
                let (next, effect) = env.step(&action);
                *env = next;
                steps += 1;
                observer.env_step(&action, &effect, env, started.elapsed().as_millis() as u64);
                logs.push(StepLog {
                    reasoning: parsed.reasoning,
                    action,
                    reflection: parsed.reflection,
                    executed: true,
                });
            }
        }
    }
}

/// Ask the analyst about the current screen. Takes the rendered observation,
/// never the environment.
pub fn exec_think(
    observation: &str,
    instruction: &str,
    memory: &str,
    analyst: &dyn AnalystBackend,
    seed: u64,
    observer: &mut dyn ExecObserver,
) -> ThinkResult {
    let request = AnalystRequest {
        instruction,
        observation,
        memory,
        seed,
    };
    let started = Instant::now();
    match analyst.analyze(&request) {
        Err(e) => ThinkResult {
            text: format!("FAILED: analyst unavailable: {e}"),
            failed: true,
        },
        Ok(reply) => {
            observer.analyst_call(
                analyst.identity(),
                &request,
                &reply,
                started.elapsed().as_millis() as u64,
            );
            let text = reply.text.trim();
            if text.is_empty() {
                ThinkResult {
                    text: "FAILED: analyst returned no text".into(),
                    failed: true,
                }
            } else if text.starts_with("FAILED:") {
                ThinkResult {
                    text: text.to_string(),
                    failed: true,
                }
            } else {
                ThinkResult {
                    text: reply.text.clone(),
                    failed: false,
                }
            }
        }
    }
}

/// Named deterministic operations on the device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Vec<Action>>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self {
            tools: BTreeMap::from([("HOME".to_string(), vec![Action::Home])]),
        }
    }
}

impl ToolRegistry {
    pub fn empty() -> Self {
        Self { tools: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, actions: Vec<Action>) {
        self.tools.insert(name.to_ascii_uppercase(), actions);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    /// Tool named by the first word of `instruction`, case-insensitively.
    pub fn resolve(&self, instruction: &str) -> Result<(&str, &[Action]), ExecError> {
        let word = instruction
            .split_whitespace()
            .next()
            .unwrap_or("")
            .trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .to_ascii_uppercase();
        self.tools
            .get_key_value(&word)
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .ok_or(ExecError::UnknownTool(word))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutcome {
    pub result: ToolResult,
    pub steps_used: u32,
    pub budget_exhausted: Option<Action>,
}

/// Apply a registered tool. Each of its actions is one env step.
pub fn exec_tool(
    env: &mut EnvState,
    instruction: &str,
    registry: &ToolRegistry,
    episode_steps_left: u32,
    observer: &mut dyn ExecObserver,
) -> Result<ToolOutcome, ExecError> {
    let (_, actions) = registry.resolve(instruction)?;
    let mut steps = 0;
    for action in actions {
        if steps >= episode_steps_left {
            return Ok(ToolOutcome {
                result: ToolResult {
                    status: EPISODE_BUDGET_NOTE.into(),
                },
                steps_used: steps,
                budget_exhausted: Some(action.clone()),
            });
        }
        let started = Instant::now();
        let (next, effect) = env.step(action);
        *env = next;
        steps += 1;
        observer.env_step(action, &effect, env, started.elapsed().as_millis() as u64);
    }
    Ok(ToolOutcome {
        result: ToolResult { status: "ok".into() },
        steps_used: steps,
        budget_exhausted: None,
    })
}
