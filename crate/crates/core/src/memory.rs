//! Append-only process memory.
//!
//! Every executed subtask leaves one entry `[i] instruction → result`. The
//! planner sees the memory only through [`render_context`], which must fit a
//! character budget and sheds act detail before it ever sheds think results.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_sim::Action;

pub const MIN_CONTEXT_BUDGET: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLog {
    pub reasoning: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    /// False for the navigator's closing stop, which is logged but never applied.
    pub executed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActResult {
    pub completed: bool,
    pub step_logs: Vec<StepLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ActResult {
    pub fn steps(&self) -> usize {
        self.step_logs.iter().filter(|l| l.executed).count()
    }

    pub fn last_action(&self) -> Option<&Action> {
        self.step_logs.iter().rev().find(|l| l.executed).map(|l| &l.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkResult {
    pub text: String,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ResultVariant {
    Act(ActResult),
    Think(ThinkResult),
    Tool(ToolResult),
}

impl ResultVariant {
    /// Whether the executor reported the subtask as done.
    pub fn succeeded(&self) -> bool {
        match self {
            ResultVariant::Act(a) => a.completed,
            ResultVariant::Think(t) => !t.failed,
            ResultVariant::Tool(t) => t.status == "ok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub index: usize,
    pub instruction: String,
    pub result: ResultVariant,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessMemory {
    entries: Vec<MemoryEntry>,
}

impl ProcessMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, instruction: impl Into<String>, result: ResultVariant) -> &MemoryEntry {
        let index = self.entries.len();
        self.entries.push(MemoryEntry {
            index,
            instruction: instruction.into(),
            result,
        });
        &self.entries[index]
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&MemoryEntry> {
        self.entries.get(index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("context budget {0} is below the minimum of {MIN_CONTEXT_BUDGET}")]
    BudgetTooSmall(usize),
}

/// How think results appear in the rendering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextView {
    #[default]
    Full,
    /// Think texts replaced by nothing. Ablation of intermediate-information carry-over.
    BlankThink,
}

struct Block {
    think: bool,
    header: String,
    detail: Vec<String>,
    show_detail: bool,
    kept: bool,
}

fn one_line(s: &str) -> String {
    s.replace('\n', " ")
}

fn block_for(entry: &MemoryEntry, view: ContextView) -> Block {
    let i = entry.index;
    let instr = one_line(&entry.instruction);
    match &entry.result {
        ResultVariant::Act(a) => {
            let last = a.last_action().map_or_else(|| "none".to_string(), |x| x.to_string());
            let header = format!(
                "[{i}] {instr} → act completed={} steps={} last={last}",
                a.completed,
                a.steps()
            );
            let mut detail: Vec<String> = a
                .step_logs
                .iter()
                .map(|l| {
                    let mut line = if l.executed {
                        format!("    - {} => {}", one_line(&l.reasoning), l.action)
                    } else {
                        format!("    - {} => stop", one_line(&l.reasoning))
                    };
                    if let Some(r) = &l.reflection {
                        line.push_str(&format!(" | reflection: {}", one_line(r)));
                    }
                    line
                })
                .collect();
            if let Some(n) = &a.note {
                detail.push(format!("    note: {}", one_line(n)));
            }
            Block {
                think: false,
                header,
                detail,
                show_detail: true,
                kept: true,
            }
        }
        ResultVariant::Think(t) => {
            let text = match view {
                ContextView::Full => t.text.as_str(),
                ContextView::BlankThink => "",
            };
            let status = if t.failed { "think failed" } else { "think ok" };
            Block {
                think: true,
                header: format!("[{i}] {instr} → {status}: {text}"),
                detail: Vec::new(),
                show_detail: false,
                kept: true,
            }
        }
        ResultVariant::Tool(t) => Block {
            think: false,
            header: format!("[{i}] {instr} → tool: {}", one_line(&t.status)),
            detail: Vec::new(),
            show_detail: false,
            kept: true,
        },
    }
}

fn assemble(blocks: &[Block]) -> String {
    let omitted = blocks.iter().filter(|b| !b.kept).count();
    let mut out = String::new();
    if omitted > 0 {
        out.push_str(&format!("(... {omitted} earlier entries omitted)\n"));
    }
    for b in blocks.iter().filter(|b| b.kept) {
        out.push_str(&b.header);
        out.push('\n');
        if b.show_detail {
            for d in &b.detail {
                out.push_str(d);
                out.push('\n');
            }
        }
    }
    out
}

fn chars(s: &str) -> usize {
    s.chars().count()
}

/// Render memory oldest to newest within `char_budget` characters.
///
/// Shedding order when over budget: act step detail (oldest first), then
/// whole act and tool entries (oldest first), then think entries, and as a
/// last resort a hard cut of what remains.
pub fn render_context(memory: &ProcessMemory, char_budget: usize) -> Result<String, MemoryError> {
    render_context_with(memory, char_budget, ContextView::Full)
}

pub fn render_context_with(
    memory: &ProcessMemory,
    char_budget: usize,
    view: ContextView,
) -> Result<String, MemoryError> {
    if char_budget < MIN_CONTEXT_BUDGET {
        return Err(MemoryError::BudgetTooSmall(char_budget));
    }
    let mut blocks: Vec<Block> = memory.entries().iter().map(|e| block_for(e, view)).collect();
    let mut out = assemble(&blocks);
    if chars(&out) <= char_budget {
        return Ok(out);
    }

    let shed_steps: [&dyn Fn(&mut Block) -> bool; 3] = [
        &|b: &mut Block| {
            let had = b.show_detail && !b.detail.is_empty();
            b.show_detail = false;
            had
        },
        &|b: &mut Block| {
            let drop = b.kept && !b.think;
            if drop {
                b.kept = false;
            }
            drop
        },
        &|b: &mut Block| {
            let drop = b.kept;
            b.kept = false;
            drop
        },
    ];
    for shed in shed_steps {
        for i in 0..blocks.len() {
            if shed(&mut blocks[i]) {
                out = assemble(&blocks);
                if chars(&out) <= char_budget {
                    return Ok(out);
                }
            }
        }
    }
    Ok(out.chars().take(char_budget).collect())
}

/// Entry header recovered from a rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedEntry {
    pub index: usize,
    pub instruction: String,
    pub result: RenderedResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RenderedResult {
    Act { completed: bool, steps: usize },
    Think { ok: bool, text: String },
    Tool { status: String },
}

impl RenderedResult {
    pub fn succeeded(&self) -> bool {
        match self {
            RenderedResult::Act { completed, .. } => *completed,
            RenderedResult::Think { ok, .. } => *ok,
            RenderedResult::Tool { status } => status == "ok",
        }
    }
}

/// Recover entry headers from [`render_context`] output. Detail lines,
/// the omission marker and truncated tails are skipped.
pub fn parse_rendering(text: &str) -> Vec<RenderedEntry> {
    const MARKERS: [&str; 4] = [" → act ", " → think ok: ", " → think failed: ", " → tool: "];
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('[') else { continue };
        let Some((idx, rest)) = rest.split_once("] ") else {
            continue;
        };
        let Ok(index) = idx.parse::<usize>() else { continue };
        let Some((at, marker)) = MARKERS
            .iter()
            .filter_map(|m| rest.find(m).map(|p| (p, *m)))
            .min_by_key(|(p, _)| *p)
        else {
            continue;
        };
        let instruction = rest[..at].to_string();
        let tail = &rest[at + marker.len()..];
        let result = match marker {
            " → act " => {
                let field = |key: &str| {
                    tail.split_whitespace()
                        .find_map(|w| w.strip_prefix(key))
                        .map(str::to_string)
                };
                let Some(completed) = field("completed=").and_then(|v| v.parse().ok()) else {
                    continue;
                };
                let steps = field("steps=").and_then(|v| v.parse().ok()).unwrap_or(0);
                RenderedResult::Act { completed, steps }
            }
            " → think ok: " => RenderedResult::Think {
                ok: true,
                text: tail.to_string(),
            },
            " → think failed: " => RenderedResult::Think {
                ok: false,
                text: tail.to_string(),
            },
            _ => RenderedResult::Tool {
                status: tail.to_string(),
            },
        };
        out.push(RenderedEntry {
            index,
            instruction,
            result,
        });
    }
    out
}
