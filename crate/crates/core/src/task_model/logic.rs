use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::CompoundLogicExpr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("unknown subtask id `{0}`")]
    UnknownId(String),
}

/// Completion time of a satisfied sub-expression. `UNTIMED` marks ids that are
/// completed but absent from the completion order; it never precedes anything.
type Time = u64;
const UNTIMED: Time = Time::MAX;

/// Decide whether `expr` is satisfied by the `completed` ids.
///
/// `completion_order` positions the completed ids in time (first occurrence
/// wins). Sequential nodes require each child to complete strictly before the
/// next; a child whose completion time is unknown cannot satisfy that.
pub fn evaluate_logic(
    expr: &CompoundLogicExpr,
    completed: &BTreeSet<String>,
    completion_order: &[String],
) -> Result<bool, LogicError> {
    let declared: BTreeSet<&str> = expr.leaves().into_iter().collect();
    if let Some(id) = completed
        .iter()
        .chain(completion_order)
        .find(|id| !declared.contains(id.as_str()))
    {
        return Err(LogicError::UnknownId(id.clone()));
    }

    let mut times: BTreeMap<&str, Time> = BTreeMap::new();
    for (pos, id) in completion_order.iter().enumerate() {
        if completed.contains(id) {
            times.entry(id.as_str()).or_insert(pos as Time);
        }
    }
    for id in completed {
        times.entry(id.as_str()).or_insert(UNTIMED);
    }
    Ok(completion_time(expr, &times).is_some())
}

fn completion_time(expr: &CompoundLogicExpr, times: &BTreeMap<&str, Time>) -> Option<Time> {
    match expr {
        CompoundLogicExpr::Leaf { id } => times.get(id.as_str()).copied(),
        CompoundLogicExpr::Conjunctive { children } | CompoundLogicExpr::Hierarchical { children, .. } => {
            let mut latest = 0;
            for c in children {
                latest = latest.max(completion_time(c, times)?);
            }
            Some(latest)
        }
        CompoundLogicExpr::Disjunctive { children } => children.iter().filter_map(|c| completion_time(c, times)).min(),
        CompoundLogicExpr::Sequential { children } => {
            let mut prev: Option<Time> = None;
            for c in children {
                let t = completion_time(c, times)?;
                if let Some(p) = prev {
                    if p == UNTIMED || t == UNTIMED || p >= t {
                        return None;
                    }
                }
                prev = Some(t);
            }
            Some(prev.unwrap_or(0))
        }
    }
}
