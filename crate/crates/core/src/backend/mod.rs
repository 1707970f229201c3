//! Pluggable model backends.
//!
//! Planner, navigator and analyst all speak the same wire contract: labeled
//! UTF-8 text blocks in, one text reply out. Backends are stateless between
//! calls and must tolerate concurrent calls from different episodes.

mod pattern;
mod remote;
mod scripted;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pattern::{match_pattern, Pattern};
pub use remote::RemoteBackend;
pub use scripted::{
    AnalystOp, AnalystRule, NavigatorFinish, NavigatorRule, PlannerScript, ScriptedAnalyst, ScriptedNavigator,
    ScriptedPlanner,
};

/// Per-call accounting reported by a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub infer_ms: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("script: {0}")]
    Script(String),
}

/// Labeled text blocks, in wire order.
pub type Blocks<'a> = Vec<(&'static str, &'a str)>;

/// `### LABEL` headers, each followed by its block text.
pub fn encode_blocks(blocks: &Blocks<'_>) -> String {
    let mut out = String::new();
    for (label, text) in blocks {
        let _ = writeln!(out, "### {label}");
        out.push_str(text);
        if !text.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`encode_blocks`] for well-formed input.
pub fn decode_blocks(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.split_inclusive('\n') {
        if let Some(label) = line.strip_prefix("### ") {
            out.push((label.trim_end().to_string(), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
        }
    }
    for (_, body) in &mut out {
        if body.ends_with('\n') {
            body.pop();
        }
    }
    out
}

/// Rough token count used by backends that cannot report one.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerRequest<'a> {
    pub goal: &'a str,
    pub observation: &'a str,
    pub memory: &'a str,
    /// Parse error of the previous attempt, when retrying.
    pub feedback: Option<&'a str>,
    pub seed: u64,
}

impl<'a> PlannerRequest<'a> {
    pub fn blocks(&self) -> Blocks<'a> {
        let mut b = vec![
            ("GOAL", self.goal),
            ("OBSERVATION", self.observation),
            ("MEMORY", self.memory),
        ];
        if let Some(f) = self.feedback {
            b.push(("FEEDBACK", f));
        }
        b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NavigatorRequest<'a> {
    pub instruction: &'a str,
    pub observation: &'a str,
    /// At most N prior steps of the current subtask, one per line.
    pub history: &'a str,
    pub step_index: usize,
    pub seed: u64,
}

impl<'a> NavigatorRequest<'a> {
    pub fn blocks(&self) -> Blocks<'a> {
        vec![
            ("INSTRUCTION", self.instruction),
            ("OBSERVATION", self.observation),
            ("HISTORY", self.history),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalystRequest<'a> {
    pub instruction: &'a str,
    pub observation: &'a str,
    pub memory: &'a str,
    pub seed: u64,
}

impl<'a> AnalystRequest<'a> {
    pub fn blocks(&self) -> Blocks<'a> {
        vec![
            ("INSTRUCTION", self.instruction),
            ("OBSERVATION", self.observation),
            ("MEMORY", self.memory),
        ]
    }
}

pub trait PlannerBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn plan(&self, request: &PlannerRequest<'_>) -> Result<Reply, BackendError>;
}

pub trait NavigatorBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn next_move(&self, request: &NavigatorRequest<'_>) -> Result<Reply, BackendError>;
}

pub trait AnalystBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn analyze(&self, request: &AnalystRequest<'_>) -> Result<Reply, BackendError>;
}
