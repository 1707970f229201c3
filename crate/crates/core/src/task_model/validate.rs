use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CompositionType, CompositionalTask, CompoundLogicExpr, TaskTemplate};

/// Structural defect that makes a task unusable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    DuplicateSubtask { id: String },
    EmptyCommand { id: String },
    UnknownDependencyEndpoint { id: String },
    DependencyCycle { ids: Vec<String> },
    UnknownLeaf { id: String },
    TooFewChildren { node: String, found: usize },
    UnknownCheckpointSubtask { id: String },
    ZeroOptimalSteps,
    UndeclaredPlaceholder { name: String },
    EmptyDomain { name: String },
    IncompleteDerivation { name: String, missing: String },
}

/// Consistency warning. Does not make the task invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "lint", rename_all = "snake_case")]
pub enum Lint {
    ContextTransitionWithoutDependencies,
    UnjudgedLeaf { id: String },
    UnusedSubtask { id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub lints: Vec<Lint>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate(task: &CompositionalTask) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for s in &task.subtasks {
        if !ids.insert(s.id.as_str()) {
            report.findings.push(Finding::DuplicateSubtask { id: s.id.clone() });
        }
        if s.command.trim().is_empty() {
            report.findings.push(Finding::EmptyCommand { id: s.id.clone() });
        }
    }

    let mut bad_endpoints = BTreeSet::new();
    for (from, to) in &task.dependencies {
        for id in [from, to] {
            if !ids.contains(id.as_str()) && bad_endpoints.insert(id.clone()) {
                report
                    .findings
                    .push(Finding::UnknownDependencyEndpoint { id: id.clone() });
            }
        }
    }
    if let Some(cycle) = cyclic_nodes(&task.dependencies) {
        report.findings.push(Finding::DependencyCycle { ids: cycle });
    }

    check_logic(&task.logic, &ids, &mut report.findings);

    for c in &task.checkpoints {
        if let Some(id) = &c.subtask {
            if !ids.contains(id.as_str()) {
                report
                    .findings
                    .push(Finding::UnknownCheckpointSubtask { id: id.clone() });
            }
        }
    }
    if task.optimal_steps == 0 {
        report.findings.push(Finding::ZeroOptimalSteps);
    }

    if task.composition_type == CompositionType::ContextTransition && task.dependencies.is_empty() {
        report.lints.push(Lint::ContextTransitionWithoutDependencies);
    }
    let leaves: BTreeSet<&str> = task.logic.leaves().into_iter().collect();
    for leaf in &leaves {
        if !task.checkpoints.iter().any(|c| c.subtask.as_deref() == Some(leaf)) {
            report.lints.push(Lint::UnjudgedLeaf { id: leaf.to_string() });
        }
    }
    for id in &ids {
        if !leaves.contains(id) {
            report.lints.push(Lint::UnusedSubtask { id: id.to_string() });
        }
    }
    report
}

fn check_logic(expr: &CompoundLogicExpr, ids: &BTreeSet<&str>, findings: &mut Vec<Finding>) {
    let (node, min, children) = match expr {
        CompoundLogicExpr::Leaf { id } => {
            if !ids.contains(id.as_str()) {
                findings.push(Finding::UnknownLeaf { id: id.clone() });
            }
            return;
        }
        CompoundLogicExpr::Sequential { children } => ("sequential", 1, children),
        CompoundLogicExpr::Conjunctive { children } => ("conjunctive", 2, children),
        CompoundLogicExpr::Disjunctive { children } => ("disjunctive", 2, children),
        CompoundLogicExpr::Hierarchical { children, .. } => ("hierarchical", 1, children),
    };
    if children.len() < min {
        findings.push(Finding::TooFewChildren {
            node: node.to_string(),
            found: children.len(),
        });
    }
    for c in children {
        check_logic(c, ids, findings);
    }
}

/// Kahn's algorithm. Returns the sorted nodes that could not be ordered, if any.
fn cyclic_nodes(edges: &[(String, String)]) -> Option<Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in edges {
        indegree.entry(from).or_insert(0);
        *indegree.entry(to).or_insert(0) += 1;
        succ.entry(from).or_default().push(to);
    }
    let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
    let mut ordered = 0;
    while let Some(n) = ready.pop() {
        ordered += 1;
        for m in succ.get(n).into_iter().flatten() {
            let d = indegree.get_mut(m).expect("edge endpoint registered");
            *d -= 1;
            if *d == 0 {
                ready.push(m);
            }
        }
    }
    if ordered == indegree.len() {
        None
    } else {
        Some(
            indegree
                .into_iter()
                .filter(|(_, d)| *d > 0)
                .map(|(n, _)| n.to_string())
                .collect(),
        )
    }
}

/// Template-level checks: placeholders declared, domains non-empty, derivations total.
pub fn validate_template(template: &TaskTemplate) -> ValidationReport {
    let mut report = ValidationReport::default();
    for name in template.referenced_placeholders() {
        if !template.domains.contains_key(&name) && !template.derived.contains_key(&name) {
            report.findings.push(Finding::UndeclaredPlaceholder { name });
        }
    }
    for (name, values) in &template.domains {
        if values.is_empty() {
            report.findings.push(Finding::EmptyDomain { name: name.clone() });
        }
    }
    for (name, d) in &template.derived {
        match template.domains.get(&d.from) {
            None => report
                .findings
                .push(Finding::UndeclaredPlaceholder { name: d.from.clone() }),
            Some(values) => {
                for v in values {
                    if !d.values.contains_key(v) {
                        report.findings.push(Finding::IncompleteDerivation {
                            name: name.clone(),
                            missing: v.clone(),
                        });
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_model::AtomicSubtaskSpec;

    fn task(ids: &[&str], deps: &[(&str, &str)]) -> CompositionalTask {
        CompositionalTask {
            id: "t".into(),
            instruction: "do things".into(),
            subtasks: ids
                .iter()
                .map(|id| AtomicSubtaskSpec {
                    id: id.to_string(),
                    command: format!("do {id}"),
                    params: Default::default(),
                    environment: "notes".into(),
                })
                .collect(),
            dependencies: deps.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            logic: if ids.len() == 1 {
                CompoundLogicExpr::leaf(ids[0])
            } else {
                CompoundLogicExpr::and(ids.iter().map(|i| CompoundLogicExpr::leaf(*i)).collect())
            },
            composition_type: CompositionType::SimpleConcatenation,
            checkpoints: vec![],
            optimal_steps: 3,
        }
    }

    #[test]
    fn single_subtask_is_valid() {
        assert!(validate(&task(&["a"], &[])).is_valid());
    }

    #[test]
    fn two_cycle_is_found() {
        let r = validate(&task(&["a", "b"], &[("a", "b"), ("b", "a")]));
        assert_eq!(
            r.findings,
            vec![Finding::DependencyCycle {
                ids: vec!["a".into(), "b".into()]
            }]
        );
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let r = validate(&task(&["a", "b"], &[("a", "a")]));
        assert!(matches!(r.findings[..], [Finding::DependencyCycle { .. }]));
    }

    #[test]
    fn unresolved_ids_are_reported() {
        let mut t = task(&["a", "b"], &[("a", "x")]);
        t.logic = CompoundLogicExpr::or(vec![CompoundLogicExpr::leaf("a"), CompoundLogicExpr::leaf("q")]);
        let r = validate(&t);
        assert!(r
            .findings
            .contains(&Finding::UnknownDependencyEndpoint { id: "x".into() }));
        assert!(r.findings.contains(&Finding::UnknownLeaf { id: "q".into() }));
    }

    #[test]
    fn disjunction_needs_two_children() {
        let mut t = task(&["a"], &[]);
        t.logic = CompoundLogicExpr::or(vec![CompoundLogicExpr::leaf("a")]);
        assert!(!validate(&t).is_valid());
    }

    #[test]
    fn context_transition_without_deps_is_linted() {
        let mut t = task(&["a", "b"], &[]);
        t.composition_type = CompositionType::ContextTransition;
        let r = validate(&t);
        assert!(r.is_valid());
        assert!(r.lints.contains(&Lint::ContextTransitionWithoutDependencies));
    }
}
