//! App data stores and checkpoint predicates over them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvState, StoreSchema};
use crate::eval::step_budget;
use crate::task_model::{evaluate_logic, CheckOp, Checkpoint, CompositionalTask, CompoundLogicExpr};

/// Scalar value stamped with the step count at which it was written (0 = seed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamped {
    pub value: String,
    pub rev: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub values: BTreeMap<String, String>,
    pub rev: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataStore {
    #[serde(default)]
    pub fields: BTreeMap<String, Stamped>,
    #[serde(default)]
    pub collections: BTreeMap<String, Vec<StoredRecord>>,
}

impl DataStore {
    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(|s| s.value.as_str())
    }

    pub fn records(&self, collection: &str) -> &[StoredRecord] {
        self.collections.get(collection).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// What the agent is asked to achieve, and the step horizon it has.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub instruction: String,
    pub checkpoints: Vec<Checkpoint>,
    pub logic: CompoundLogicExpr,
    pub horizon: u32,
}

impl Goal {
    pub fn from_task(task: &CompositionalTask) -> Self {
        Self {
            instruction: task.instruction.clone(),
            checkpoints: task.checkpoints.clone(),
            logic: task.logic.clone(),
            horizon: step_budget(task.optimal_steps),
        }
    }
}

enum Resolved<'a> {
    Scalar(Option<&'a Stamped>),
    Values(Vec<(&'a str, u64)>),
    Records(Vec<u64>),
}

struct ParsedPath<'p> {
    name: &'p str,
    filter: Option<(&'p str, &'p str)>,
    field: Option<&'p str>,
}

fn parse_path(path: &str) -> Option<ParsedPath<'_>> {
    let (head, field) = match path.find('[') {
        Some(open) => {
            let close = path[open..].find(']')? + open;
            let rest = &path[close + 1..];
            let field = match rest {
                "" => None,
                r => Some(r.strip_prefix('.')?),
            };
            (&path[..=close], field)
        }
        None => match path.split_once('.') {
            Some((h, f)) => (h, Some(f)),
            None => (path, None),
        },
    };
    let (name, filter) = match head.split_once('[') {
        Some((n, f)) => {
            let (k, v) = f.strip_suffix(']')?.split_once('=')?;
            (n, Some((k.trim(), v.trim())))
        }
        None => (head, None),
    };
    if name.is_empty() || field == Some("") {
        return None;
    }
    Some(ParsedPath { name, filter, field })
}

fn resolve<'a>(store: &'a DataStore, schema: &StoreSchema, path: &str) -> Option<Resolved<'a>> {
    let p = parse_path(path)?;
    if schema.fields.contains(p.name) {
        if p.filter.is_some() || p.field.is_some() {
            return None;
        }
        return Some(Resolved::Scalar(store.fields.get(p.name)));
    }
    let cols = schema.collections.get(p.name)?;
    if let Some((k, _)) = p.filter {
        if !cols.contains(k) {
            return None;
        }
    }
    if let Some(f) = p.field {
        if !cols.contains(f) {
            return None;
        }
    }
    let matching = store.records(p.name).iter().filter(|r| match p.filter {
        Some((k, v)) => r.values.get(k).map(String::as_str) == Some(v),
        None => true,
    });
    Some(match p.field {
        Some(f) => Resolved::Values(
            matching
                .map(|r| (r.values.get(f).map(String::as_str).unwrap_or(""), r.rev))
                .collect(),
        ),
        None => Resolved::Records(matching.map(|r| r.rev).collect()),
    })
}

fn as_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Trimmed string equality, or numeric equality when both sides are numbers
/// (so "143.50" matches "143.5").
pub(crate) fn values_equal(actual: &str, expected: &str) -> bool {
    if actual.trim() == expected.trim() {
        return true;
    }
    match (as_number(actual), as_number(expected)) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
        _ => false,
    }
}

fn test_value(op: CheckOp, actual: &str, expected: &str) -> bool {
    match op {
        CheckOp::Eq => values_equal(actual, expected),
        CheckOp::Contains => actual.contains(expected),
        CheckOp::Ge => matches!((as_number(actual), as_number(expected)), (Some(a), Some(b)) if a >= b),
        CheckOp::CountEq => false,
    }
}

impl EnvState {
    pub(crate) fn schema_of(&self, app: &str) -> Option<&StoreSchema> {
        if app == super::SYSTEM_APP {
            return Some(super::system_schema());
        }
        self.app_registry.get(app).map(|a| &a.schema)
    }

    /// Evaluate one checkpoint. `Ok(Some(rev))` when satisfied, where `rev` is
    /// the step at which the satisfying data was written.
    pub fn check(&self, checkpoint: &Checkpoint) -> Result<Option<u64>, EnvError> {
        let mismatch = || EnvError::SchemaMismatch {
            app: checkpoint.app.clone(),
            path: checkpoint.predicate.path.clone(),
        };
        let schema = self.schema_of(&checkpoint.app).ok_or_else(mismatch)?;
        let empty = DataStore::default();
        let store = self.data_stores.get(&checkpoint.app).unwrap_or(&empty);
        let resolved = resolve(store, schema, &checkpoint.predicate.path).ok_or_else(mismatch)?;
        let op = checkpoint.predicate.op;
        let expected = checkpoint.predicate.expected.as_str();
        Ok(match (op, resolved) {
            (CheckOp::CountEq, Resolved::Scalar(_)) => return Err(mismatch()),
            (CheckOp::CountEq, Resolved::Values(vs)) => {
                let n: usize = expected.trim().parse().map_err(|_| mismatch())?;
                (vs.len() == n).then(|| vs.iter().map(|v| v.1).max().unwrap_or(0))
            }
            (CheckOp::CountEq, Resolved::Records(revs)) => {
                let n: usize = expected.trim().parse().map_err(|_| mismatch())?;
                (revs.len() == n).then(|| revs.iter().copied().max().unwrap_or(0))
            }
            (_, Resolved::Records(_)) => return Err(mismatch()),
            (_, Resolved::Scalar(s)) => s.filter(|s| test_value(op, &s.value, expected)).map(|s| s.rev),
            (_, Resolved::Values(vs)) => vs
                .iter()
                .filter(|(v, _)| test_value(op, v, expected))
                .map(|(_, rev)| *rev)
                .min(),
        })
    }

    /// Confirm every checkpoint path resolves against its app's schema.
    pub fn check_goal(&self, goal: &Goal) -> Result<(), EnvError> {
        for c in &goal.checkpoints {
            self.check(c)?;
        }
        Ok(())
    }

    /// Logic leaves satisfied by the current stores, in completion order.
    /// A leaf is satisfied when all its tied checkpoints are; leaves without
    /// checkpoints are vacuously satisfied at step 0.
    pub fn satisfied_leaves(&self, goal: &Goal) -> Result<Vec<String>, EnvError> {
        let mut results = Vec::with_capacity(goal.checkpoints.len());
        for c in &goal.checkpoints {
            results.push(self.check(c)?);
        }
        let leaves = goal.logic.leaves();
        let mut seen = BTreeSet::new();
        let mut timed = Vec::new();
        for (pos, leaf) in leaves.iter().enumerate() {
            if !seen.insert(*leaf) {
                continue;
            }
            let mut time = Some(0u64);
            for (c, r) in goal.checkpoints.iter().zip(&results) {
                if c.subtask.as_deref() == Some(leaf) {
                    time = match (time, r) {
                        (Some(t), Some(rev)) => Some(t.max(*rev)),
                        _ => None,
                    };
                }
            }
            if let Some(t) = time {
                timed.push((t, pos, leaf.to_string()));
            }
        }
        timed.sort();
        Ok(timed.into_iter().map(|(_, _, id)| id).collect())
    }

    /// Number of satisfied checkpoints; a coarse progress signal for logs.
    pub fn progress(&self, goal: &Goal) -> usize {
        goal.checkpoints
            .iter()
            .filter(|c| matches!(self.check(c), Ok(Some(_))))
            .count()
    }

    /// Binary task reward. Pure in `(self, goal)`.
    pub fn reward(&self, goal: &Goal) -> Result<u8, EnvError> {
        for c in goal.checkpoints.iter().filter(|c| c.subtask.is_none()) {
            if self.check(c)?.is_none() {
                // still validate the remaining paths
                self.check_goal(goal)?;
                return Ok(0);
            }
        }
        let order = self.satisfied_leaves(goal)?;
        let completed: BTreeSet<String> = order.iter().cloned().collect();
        let ok = evaluate_logic(&goal.logic, &completed, &order).map_err(|e| EnvError::Logic(e.to_string()))?;
        Ok(u8::from(ok))
    }
}
