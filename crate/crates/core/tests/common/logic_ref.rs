//! Brute-force reference for `evaluate_logic`.
//!
//! The reference works on prefixes of the completion order instead of
//! completion times: a node "holds at k" when it holds using only the first k
//! timed completions. A sequence holds when the first prefix at which each
//! child holds strictly increases along the children, found by scanning.

use std::collections::BTreeSet;

use nexus_core::task_model::{evaluate_logic, CompoundLogicExpr as E};
use proptest::prelude::*;
use proptest::test_runner::TestRunner;

/// `None` in `at` means "everything completed, timed or not".
pub fn holds(e: &E, timed: &[String], completed: &BTreeSet<String>, at: Option<usize>) -> bool {
    match e {
        E::Leaf { id } => match at {
            Some(k) => timed[..k].contains(id),
            None => completed.contains(id),
        },
        E::Conjunctive { children } | E::Hierarchical { children, .. } => {
            children.iter().all(|c| holds(c, timed, completed, at))
        }
        E::Disjunctive { children } => children.iter().any(|c| holds(c, timed, completed, at)),
        E::Sequential { children } => {
            if children.len() == 1 {
                return holds(&children[0], timed, completed, at);
            }
            let limit = at.unwrap_or(timed.len());
            let mut prev = 0;
            for c in children {
                match (1..=limit).find(|&k| holds(c, timed, completed, Some(k))) {
                    Some(k) if k > prev => prev = k,
                    _ => return false,
                }
            }
            true
        }
    }
}

pub fn reference(e: &E, completed: &BTreeSet<String>, order: &[String]) -> bool {
    let mut timed: Vec<String> = Vec::new();
    for id in order {
        if completed.contains(id) && !timed.contains(id) {
            timed.push(id.clone());
        }
    }
    holds(e, &timed, completed, None)
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// Expressions over `n` ids where every id appears as a leaf at least once.
pub fn expr_strategy() -> impl Strategy<Value = (usize, E)> {
    (1usize..=10).prop_flat_map(|n| {
        let leaf = (0..n).prop_map(|i| E::leaf(format!("s{i}")));
        let tree = leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(E::seq),
                prop::collection::vec(inner.clone(), 2..4).prop_map(E::and),
                prop::collection::vec(inner.clone(), 2..4).prop_map(E::or),
                prop::collection::vec(inner, 1..4).prop_map(|c| E::group("g", c)),
            ]
        });
        tree.prop_map(move |t| {
            let present: BTreeSet<String> = t.leaves().into_iter().map(str::to_string).collect();
            let missing: Vec<E> = ids(n)
                .into_iter()
                .filter(|i| !present.contains(i))
                .map(E::leaf)
                .collect();
            let e = if missing.is_empty() {
                t
            } else {
                let mut children = vec![t];
                children.extend(missing);
                E::group("all", children)
            };
            (n, e)
        })
    })
}

/// Every sequence of distinct ids of length at most `max_len`.
pub fn orders(universe: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for o in &frontier {
            for id in universe.iter().filter(|id| !o.contains(id)) {
                let mut o2 = o.clone();
                o2.push(id.clone());
                next.push(o2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn check(e: &E, completed: &BTreeSet<String>, order: &[String]) -> Result<(), TestCaseError> {
    let got = evaluate_logic(e, completed, order).map_err(|err| TestCaseError::fail(err.to_string()))?;
    let want = reference(e, completed, order);
    prop_assert_eq!(got, want, "expr {:?} completed {:?} order {:?}", e, completed, order);
    Ok(())
}

/// Compare on every completion subset (untimed, timed in id order and in
/// reverse) and every completion order of length <= 4 (alone and with the
/// remaining ids completed but untimed), for each generated expression.
pub fn equivalence(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&expr_strategy(), |(n, e)| {
            let universe = ids(n);
            for mask in 0u32..(1 << n) {
                let subset: Vec<String> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| universe[i].clone())
                    .collect();
                let set: BTreeSet<String> = subset.iter().cloned().collect();
                check(&e, &set, &[])?;
                check(&e, &set, &subset)?;
                let rev: Vec<String> = subset.iter().rev().cloned().collect();
                check(&e, &set, &rev)?;
            }
            let all: BTreeSet<String> = universe.iter().cloned().collect();
            for o in orders(&universe, 4.min(n)) {
                let set: BTreeSet<String> = o.iter().cloned().collect();
                check(&e, &set, &o)?;
                check(&e, &all, &o)?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
