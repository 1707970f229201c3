//! Deterministic table-driven backends.
//!
//! Each reads a keyed response table from a JSON file. Keys are text patterns
//! matched against the request (goal for the planner, instruction for the
//! navigator and analyst); replies may reference pattern captures.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pattern::{fill, Pattern};
use super::{
    encode_blocks, estimate_tokens, AnalystBackend, AnalystRequest, BackendError, NavigatorBackend, NavigatorRequest,
    PlannerBackend, PlannerRequest, Reply, Usage,
};
use crate::env_sim::{quote, Observation, Role};
use crate::memory::{parse_rendering, RenderedResult};

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BackendError> {
    let text = fs::read_to_string(path).map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))
}

fn compile(source: &str) -> Result<Pattern, BackendError> {
    Pattern::new(source).map_err(BackendError::Script)
}

fn usage(latency_ms: u64, request: &str, reply: &str) -> Usage {
    Usage {
        infer_ms: latency_ms,
        tokens_in: estimate_tokens(request),
        tokens_out: estimate_tokens(reply),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerScript {
    /// Pattern over the goal instruction.
    pub goal: String,
    /// Reply per turn. The turn is the number of successful entries visible
    /// in the rendered memory, so failed subtasks are re-planned. Past the
    /// end, the last turn repeats.
    pub turns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlannerTable {
    identity: String,
    #[serde(default)]
    latency_ms: u64,
    scripts: Vec<PlannerScript>,
    #[serde(default)]
    fallback: Option<String>,
}

/// Scripted scheduling backend. Reply placeholders: goal captures, `{goal}`,
/// `{think:last}` and `{think:N}` (N-th successful think text in memory).
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    identity: String,
    latency_ms: u64,
    scripts: Vec<(Pattern, PlannerScript)>,
    fallback: Option<String>,
}

impl ScriptedPlanner {
    pub fn new(
        identity: impl Into<String>,
        latency_ms: u64,
        scripts: Vec<PlannerScript>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            identity: identity.into(),
            latency_ms,
            scripts: scripts
                .into_iter()
                .map(|s| Ok((compile(&s.goal)?, s)))
                .collect::<Result<_, BackendError>>()?,
            fallback: None,
        })
    }

    /// A planner that gives the same reply to everything.
    pub fn constant(identity: impl Into<String>, reply: impl Into<String>) -> Self {
        Self::new(
            identity,
            0,
            vec![PlannerScript {
                goal: "{_}".into(),
                turns: vec![reply.into()],
            }],
        )
        .expect("wildcard pattern compiles")
    }

    pub fn with_fallback(mut self, fallback: impl Into<String>) -> Self {
        self.fallback = Some(fallback.into());
        self
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let t: PlannerTable = read_table(path)?;
        let mut p = Self::new(t.identity, t.latency_ms, t.scripts)?;
        p.fallback = t.fallback;
        Ok(p)
    }
}

impl PlannerBackend for ScriptedPlanner {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn plan(&self, request: &PlannerRequest<'_>) -> Result<Reply, BackendError> {
        let wire = encode_blocks(&request.blocks());
        let found = self
            .scripts
            .iter()
            .find_map(|(p, s)| p.captures(request.goal).map(|caps| (caps, s)));
        let text = match found {
            None => self
                .fallback
                .clone()
                .ok_or_else(|| BackendError::Script(format!("no script for goal `{}`", request.goal)))?,
            Some((caps, script)) => {
                let entries = parse_rendering(request.memory);
                let turn = entries.iter().filter(|e| e.result.succeeded()).count();
                let thinks: Vec<&str> = entries
                    .iter()
                    .filter_map(|e| match &e.result {
                        RenderedResult::Think { ok: true, text } => Some(text.as_str()),
                        _ => None,
                    })
                    .collect();
                let reply = script
                    .turns
                    .get(turn)
                    .or(script.turns.last())
                    .cloned()
                    .unwrap_or_default();
                fill(&reply, &|key| match key {
                    "goal" => Some(request.goal.to_string()),
                    "think:last" => Some(thinks.last().copied().unwrap_or("").to_string()),
                    k => match k.strip_prefix("think:").and_then(|n| n.parse::<usize>().ok()) {
                        Some(n) => Some(thinks.get(n).copied().unwrap_or("").to_string()),
                        None => caps.get(k).cloned(),
                    },
                })
            }
        };
        Ok(Reply {
            usage: usage(self.latency_ms, &wire, &text),
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigatorFinish {
    Stop {
        completed: bool,
        note: String,
    },
    /// Replay the action list forever; never stops.
    Cycle,
}

impl Default for NavigatorFinish {
    fn default() -> Self {
        Self::Stop {
            completed: true,
            note: "done".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigatorRule {
    /// Pattern over the subtask instruction.
    pub instruction: String,
    /// Actions in the wire grammar, e.g. `Tap(icon_notes)` or `Type("{body}")`.
    pub actions: Vec<String>,
    #[serde(default)]
    pub finish: NavigatorFinish,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NavigatorTable {
    identity: String,
    #[serde(default)]
    latency_ms: u64,
    rules: Vec<NavigatorRule>,
    #[serde(default)]
    fallback: Option<NavigatorFinish>,
}

/// Replays a fixed action list per instruction, indexed by the step number
/// within the subtask.
#[derive(Debug, Clone)]
pub struct ScriptedNavigator {
    identity: String,
    latency_ms: u64,
    rules: Vec<(Pattern, NavigatorRule)>,
    fallback: NavigatorFinish,
}

impl ScriptedNavigator {
    pub fn new(identity: impl Into<String>, latency_ms: u64, rules: Vec<NavigatorRule>) -> Result<Self, BackendError> {
        Ok(Self {
            identity: identity.into(),
            latency_ms,
            rules: rules
                .into_iter()
                .map(|r| Ok((compile(&r.instruction)?, r)))
                .collect::<Result<_, BackendError>>()?,
            fallback: NavigatorFinish::Stop {
                completed: false,
                note: "no script for this instruction".into(),
            },
        })
    }

    /// Every instruction gets the same actions and finish.
    pub fn uniform(identity: impl Into<String>, actions: &[&str], finish: NavigatorFinish) -> Self {
        Self::new(
            identity,
            0,
            vec![NavigatorRule {
                instruction: "{_}".into(),
                actions: actions.iter().map(|a| a.to_string()).collect(),
                finish,
                reflection: None,
            }],
        )
        .expect("wildcard pattern compiles")
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let t: NavigatorTable = read_table(path)?;
        let mut n = Self::new(t.identity, t.latency_ms, t.rules)?;
        if let Some(f) = t.fallback {
            n.fallback = f;
        }
        Ok(n)
    }
}

fn escape_for_quotes(s: &str) -> String {
    let q = quote(s);
    q[1..q.len() - 1].to_string()
}

fn stop_line(completed: bool, note: &str) -> String {
    format!("ACTION: Stop(completed={completed}, {})", quote(note))
}

impl NavigatorBackend for ScriptedNavigator {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn next_move(&self, request: &NavigatorRequest<'_>) -> Result<Reply, BackendError> {
        let wire = encode_blocks(&request.blocks());
        let k = request.step_index;
        let found = self
            .rules
            .iter()
            .find_map(|(p, r)| p.captures(request.instruction).map(|c| (c, r)));
        let text = match found {
            None => match &self.fallback {
                NavigatorFinish::Stop { completed, note } => {
                    format!("REASONING: nothing scripted\n{}", stop_line(*completed, note))
                }
                NavigatorFinish::Cycle => "REASONING: nothing scripted\nACTION: Swipe(up)".to_string(),
            },
            Some((caps, rule)) => {
                let lookup = |key: &str| caps.get(key).map(|v| escape_for_quotes(v));
                let action = if k < rule.actions.len() {
                    Some(&rule.actions[k])
                } else if rule.finish == NavigatorFinish::Cycle && !rule.actions.is_empty() {
                    Some(&rule.actions[k % rule.actions.len()])
                } else {
                    None
                };
                let mut text = match (action, &rule.finish) {
                    (Some(a), _) => format!("REASONING: scripted step {}\nACTION: {}", k + 1, fill(a, &lookup)),
                    (None, NavigatorFinish::Stop { completed, note }) => {
                        format!("REASONING: script finished\n{}", stop_line(*completed, note))
                    }
                    (None, NavigatorFinish::Cycle) => "REASONING: empty cycle\nACTION: Swipe(up)".to_string(),
                };
                if let Some(r) = &rule.reflection {
                    text.push_str("\nREFLECTION: ");
                    text.push_str(r);
                }
                text
            }
        };
        Ok(Reply {
            usage: usage(self.latency_ms, &wire, &text),
            text,
        })
    }
}

/// Deterministic extraction applied to the observation rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AnalystOp {
    Text {
        text: String,
    },
    /// Value of the element with this id.
    Value {
        element: String,
    },
    Label {
        element: String,
    },
    /// Sum of numeric values of list items.
    SumValues,
    /// Number of list items.
    Count,
    /// Labels of list items joined by ", ".
    Labels,
    Fail {
        note: String,
    },
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalystRule {
    pub instruction: String,
    pub reply: AnalystOp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnalystTable {
    identity: String,
    #[serde(default)]
    latency_ms: u64,
    rules: Vec<AnalystRule>,
    #[serde(default)]
    fallback: Option<AnalystOp>,
}

#[derive(Debug, Clone)]
pub struct ScriptedAnalyst {
    identity: String,
    latency_ms: u64,
    rules: Vec<(Pattern, AnalystRule)>,
    fallback: AnalystOp,
}

pub(crate) fn format_number(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

impl ScriptedAnalyst {
    pub fn new(identity: impl Into<String>, latency_ms: u64, rules: Vec<AnalystRule>) -> Result<Self, BackendError> {
        Ok(Self {
            identity: identity.into(),
            latency_ms,
            rules: rules
                .into_iter()
                .map(|r| Ok((compile(&r.instruction)?, r)))
                .collect::<Result<_, BackendError>>()?,
            fallback: AnalystOp::Fail {
                note: "no script for this instruction".into(),
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let t: AnalystTable = read_table(path)?;
        let mut a = Self::new(t.identity, t.latency_ms, t.rules)?;
        if let Some(f) = t.fallback {
            a.fallback = f;
        }
        Ok(a)
    }

    fn apply(op: &AnalystOp, caps: &BTreeMap<String, String>, observation: &str) -> String {
        let sub = |s: &str| fill(s, &|k| caps.get(k).cloned());
        let nodes = Observation::parse_nodes(observation);
        let items = || nodes.iter().filter(|n| n.role == Role::ListItem);
        let fail = |what: String| format!("FAILED: {what}");
        match op {
            AnalystOp::Text { text } => sub(text),
            AnalystOp::Value { element } => {
                let id = sub(element);
                nodes
                    .iter()
                    .find(|n| n.id == id)
                    .and_then(|n| n.value.clone())
                    .unwrap_or_else(|| fail(format!("no value for `{id}` on screen")))
            }
            AnalystOp::Label { element } => {
                let id = sub(element);
                nodes
                    .iter()
                    .find(|n| n.id == id)
                    .map(|n| n.label.clone())
                    .unwrap_or_else(|| fail(format!("no element `{id}` on screen")))
            }
            AnalystOp::SumValues => {
                let values: Option<Vec<f64>> = items()
                    .map(|n| n.value.as_deref().and_then(|v| v.trim().parse::<f64>().ok()))
                    .collect();
                match values {
                    Some(v) if !v.is_empty() => format_number(v.iter().sum()),
                    _ => fail("no numeric list on screen".into()),
                }
            }
            AnalystOp::Count => items().count().to_string(),
            AnalystOp::Labels => items().map(|n| n.label.as_str()).collect::<Vec<_>>().join(", "),
            AnalystOp::Fail { note } => fail(sub(note)),
            AnalystOp::Empty => String::new(),
        }
    }
}

impl AnalystBackend for ScriptedAnalyst {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn analyze(&self, request: &AnalystRequest<'_>) -> Result<Reply, BackendError> {
        let wire = encode_blocks(&request.blocks());
        let found = self
            .rules
            .iter()
            .find_map(|(p, r)| p.captures(request.instruction).map(|c| (c, &r.reply)));
        let empty = BTreeMap::new();
        let text = match found {
            Some((caps, op)) => Self::apply(op, &caps, request.observation),
            None => Self::apply(&self.fallback, &empty, request.observation),
        };
        Ok(Reply {
            usage: usage(self.latency_ms, &wire, &text),
            text,
        })
    }
}
