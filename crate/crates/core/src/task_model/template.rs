use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AtomicSubtaskSpec, Checkpoint, CompositionType, CompositionalTask, CompoundLogicExpr, Predicate};

/// Placeholder whose value is looked up from another placeholder's binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedPlaceholder {
    pub from: String,
    pub values: BTreeMap<String, String>,
}

/// A parameterised task. `{name}` placeholders may appear in the instruction,
/// subtask commands and params, checkpoint paths and expected values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub id: String,
    pub instruction: String,
    pub domains: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub derived: BTreeMap<String, DerivedPlaceholder>,
    pub subtasks: Vec<AtomicSubtaskSpec>,
    #[serde(default)]
    pub dependencies: Vec<(String, String)>,
    pub logic: CompoundLogicExpr,
    pub composition_type: CompositionType,
    pub checkpoints: Vec<Checkpoint>,
    pub optimal_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("value `{value}` is outside the domain of `{name}`")]
    ValueOutOfDomain { name: String, value: String },
    #[error("binding for undeclared placeholder `{0}`")]
    UnknownPlaceholder(String),
    #[error("derived placeholder `{name}` has no value for `{from}`")]
    IncompleteDerivation { name: String, from: String },
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

impl TaskTemplate {
    fn texts(&self) -> Vec<&str> {
        let mut out = vec![self.instruction.as_str()];
        for s in &self.subtasks {
            out.push(&s.command);
            out.extend(s.params.values().map(String::as_str));
        }
        for c in &self.checkpoints {
            out.push(&c.predicate.path);
            out.push(&c.predicate.expected);
        }
        out
    }

    pub fn referenced_placeholders(&self) -> BTreeSet<String> {
        self.texts()
            .into_iter()
            .flat_map(|t| placeholder_re().captures_iter(t).map(|c| c[1].to_string()))
            .collect()
    }
}

fn substitute(text: &str, values: &BTreeMap<String, String>) -> String {
    placeholder_re()
        .replace_all(text, |c: &Captures| match values.get(&c[1]) {
            Some(v) => v.clone(),
            None => c[0].to_string(),
        })
        .into_owned()
}

/// Fill a template. Pure: the same arguments always produce the same task.
pub fn instantiate(
    template: &TaskTemplate,
    bindings: &BTreeMap<String, String>,
    seed: u64,
) -> Result<CompositionalTask, TemplateError> {
    for name in bindings.keys() {
        if !template.domains.contains_key(name) {
            return Err(TemplateError::UnknownPlaceholder(name.clone()));
        }
    }
    let mut values = BTreeMap::new();
    for (name, domain) in &template.domains {
        let v = bindings
            .get(name)
            .ok_or_else(|| TemplateError::MissingBinding(name.clone()))?;
        if !domain.contains(v) {
            return Err(TemplateError::ValueOutOfDomain {
                name: name.clone(),
                value: v.clone(),
            });
        }
        values.insert(name.clone(), v.clone());
    }
    for (name, d) in &template.derived {
        let src = values
            .get(&d.from)
            .ok_or_else(|| TemplateError::MissingBinding(d.from.clone()))?;
        let v = d.values.get(src).ok_or_else(|| TemplateError::IncompleteDerivation {
            name: name.clone(),
            from: src.clone(),
        })?;
        values.insert(name.clone(), v.clone());
    }

    let sub = |t: &str| substitute(t, &values);
    Ok(CompositionalTask {
        id: instance_id(&template.id, bindings, seed),
        instruction: sub(&template.instruction),
        subtasks: template
            .subtasks
            .iter()
            .map(|s| AtomicSubtaskSpec {
                id: s.id.clone(),
                command: sub(&s.command),
                params: s.params.iter().map(|(k, v)| (k.clone(), sub(v))).collect(),
                environment: s.environment.clone(),
            })
            .collect(),
        dependencies: template.dependencies.clone(),
        logic: template.logic.clone(),
        composition_type: template.composition_type,
        checkpoints: template
            .checkpoints
            .iter()
            .map(|c| Checkpoint {
                app: c.app.clone(),
                subtask: c.subtask.clone(),
                predicate: Predicate {
                    path: sub(&c.predicate.path),
                    op: c.predicate.op,
                    expected: sub(&c.predicate.expected),
                },
            })
            .collect(),
        optimal_steps: template.optimal_steps,
    })
}

fn instance_id(template_id: &str, bindings: &BTreeMap<String, String>, seed: u64) -> String {
    let mut h = Sha256::new();
    for (k, v) in bindings {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    format!("{template_id}-{}", hex::encode(&digest[..4]))
}

/// Every instantiation over the cartesian product of the domains, in
/// lexicographic binding order.
pub fn instantiate_all(template: &TaskTemplate, seed: u64) -> Result<Vec<CompositionalTask>, TemplateError> {
    let names: Vec<&String> = template.domains.keys().collect();
    let mut out = Vec::new();
    let mut cursor = vec![0usize; names.len()];
    if template.domains.values().any(Vec::is_empty) {
        return Ok(out);
    }
    loop {
        let bindings: BTreeMap<String, String> = names
            .iter()
            .zip(&cursor)
            .map(|(n, &i)| ((*n).clone(), template.domains[*n][i].clone()))
            .collect();
        out.push(instantiate(template, &bindings, seed)?);

        // odometer increment, last placeholder fastest
        let mut k = names.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < template.domains[names[k]].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_model::CheckOp;

    fn send_template() -> TaskTemplate {
        TaskTemplate {
            id: "send".into(),
            instruction: "send {msg} to {contact}".into(),
            domains: BTreeMap::from([
                ("msg".into(), vec!["hi".into(), "bye".into()]),
                ("contact".into(), vec!["Yuan".into(), "Bob".into()]),
            ]),
            derived: BTreeMap::new(),
            subtasks: vec![AtomicSubtaskSpec {
                id: "a".into(),
                command: "send message".into(),
                params: BTreeMap::from([("to".into(), "{contact}".into())]),
                environment: "messaging".into(),
            }],
            dependencies: vec![],
            logic: CompoundLogicExpr::leaf("a"),
            composition_type: CompositionType::SimpleConcatenation,
            checkpoints: vec![Checkpoint {
                app: "messaging".into(),
                subtask: Some("a".into()),
                predicate: Predicate {
                    path: "messages[to={contact}].body".into(),
                    op: CheckOp::Contains,
                    expected: "{msg}".into(),
                },
            }],
            optimal_steps: 6,
        }
    }

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn substitutes_everywhere() {
        let t = instantiate(&send_template(), &bind(&[("msg", "hi"), ("contact", "Yuan")]), 0).unwrap();
        assert_eq!(t.instruction, "send hi to Yuan");
        assert_eq!(t.checkpoints[0].app, "messaging");
        assert_eq!(t.checkpoints[0].predicate.op, CheckOp::Contains);
        assert_eq!(t.checkpoints[0].predicate.expected, "hi");
        assert_eq!(t.checkpoints[0].predicate.path, "messages[to=Yuan].body");
        assert_eq!(t.subtasks[0].params["to"], "Yuan");
    }

    #[test]
    fn missing_binding() {
        let err = instantiate(&send_template(), &bind(&[("msg", "hi")]), 0).unwrap_err();
        assert_eq!(err, TemplateError::MissingBinding("contact".into()));
    }

    #[test]
    fn out_of_domain() {
        let err = instantiate(&send_template(), &bind(&[("msg", "yo"), ("contact", "Yuan")]), 0).unwrap_err();
        assert!(matches!(err, TemplateError::ValueOutOfDomain { .. }));
    }

    #[test]
    fn pure_and_seeded() {
        let b = bind(&[("msg", "hi"), ("contact", "Yuan")]);
        let x = serde_json::to_string(&instantiate(&send_template(), &b, 3).unwrap()).unwrap();
        let y = serde_json::to_string(&instantiate(&send_template(), &b, 3).unwrap()).unwrap();
        assert_eq!(x, y);
        let z = instantiate(&send_template(), &b, 4).unwrap();
        assert_ne!(z.id, instantiate(&send_template(), &b, 3).unwrap().id);
    }

    #[test]
    fn enumerates_cartesian_product() {
        let all = instantiate_all(&send_template(), 0).unwrap();
        assert_eq!(all.len(), 4);
        let ids: BTreeSet<_> = all.iter().map(|t| t.id.clone()).collect();
        assert_eq!(ids.len(), 4);
    }
}
