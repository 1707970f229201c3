//! Compositional task definitions.
//!
//! A task is a set of atomic subtasks, a dependency relation over their ids,
//! a compound-logic tree deciding which subtask completions satisfy the task,
//! and a list of checkpoints that judge each subtask against app data stores.

mod logic;
mod suite;
mod template;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use logic::{evaluate_logic, LogicError};
pub use suite::{SuiteError, TaskSuite};
pub use template::{instantiate, instantiate_all, DerivedPlaceholder, TaskTemplate, TemplateError};
pub use validate::{validate, validate_template, Finding, Lint, ValidationReport};

/// One self-contained unit of work: an intent, its parameters and the app it runs in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicSubtaskSpec {
    pub id: String,
    pub command: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub environment: String,
}

/// Recursive expression over subtask ids deciding task completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompoundLogicExpr {
    Leaf {
        id: String,
    },
    /// All children, completed in the listed order.
    Sequential {
        children: Vec<CompoundLogicExpr>,
    },
    Conjunctive {
        children: Vec<CompoundLogicExpr>,
    },
    Disjunctive {
        children: Vec<CompoundLogicExpr>,
    },
    /// Groups children under a label. The label carries no semantics.
    Hierarchical {
        parent: String,
        children: Vec<CompoundLogicExpr>,
    },
}

impl CompoundLogicExpr {
    pub fn leaf(id: impl Into<String>) -> Self {
        Self::Leaf { id: id.into() }
    }

    pub fn seq(children: Vec<CompoundLogicExpr>) -> Self {
        Self::Sequential { children }
    }

    pub fn and(children: Vec<CompoundLogicExpr>) -> Self {
        Self::Conjunctive { children }
    }

    pub fn or(children: Vec<CompoundLogicExpr>) -> Self {
        Self::Disjunctive { children }
    }

    pub fn group(parent: impl Into<String>, children: Vec<CompoundLogicExpr>) -> Self {
        Self::Hierarchical {
            parent: parent.into(),
            children,
        }
    }

    /// Leaf ids in left-to-right order (duplicates kept).
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Self::Leaf { id } => out.push(id),
            Self::Sequential { children }
            | Self::Conjunctive { children }
            | Self::Disjunctive { children }
            | Self::Hierarchical { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Sequential { children }
            | Self::Conjunctive { children }
            | Self::Disjunctive { children }
            | Self::Hierarchical { children, .. } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompositionType {
    SimpleConcatenation,
    ContextTransition,
    DeepDive,
}

impl CompositionType {
    pub const ALL: [CompositionType; 3] = [
        CompositionType::SimpleConcatenation,
        CompositionType::ContextTransition,
        CompositionType::DeepDive,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            Self::SimpleConcatenation => "SC",
            Self::ContextTransition => "CT",
            Self::DeepDive => "DD",
        }
    }
}

impl fmt::Display for CompositionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// Comparison operator of a checkpoint predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOp {
    Eq,
    Contains,
    CountEq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    /// Path into the app data store, e.g. `wifi`, `notes.title`,
    /// `messages[to=Yuan].body` or `alarms`.
    pub path: String,
    pub op: CheckOp,
    pub expected: String,
}

/// Success condition over one app's data store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub app: String,
    /// Logic leaf this checkpoint judges. Untied checkpoints must hold unconditionally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<String>,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionalTask {
    pub id: String,
    pub instruction: String,
    pub subtasks: Vec<AtomicSubtaskSpec>,
    /// Ordered pairs `(before, after)`.
    #[serde(default)]
    pub dependencies: Vec<(String, String)>,
    pub logic: CompoundLogicExpr,
    pub composition_type: CompositionType,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
    pub optimal_steps: u32,
}

impl CompositionalTask {
    pub fn subtask(&self, id: &str) -> Option<&AtomicSubtaskSpec> {
        self.subtasks.iter().find(|s| s.id == id)
    }
}
