use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::action::{quote, unquote};
use super::app::{Binding, Effect, ElementDef};
use super::{EnvState, HOME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Button,
    Text,
    Input,
    ListItem,
    Toggle,
    Icon,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Button => "button",
            Role::Text => "text",
            Role::Input => "input",
            Role::ListItem => "list-item",
            Role::Toggle => "toggle",
            Role::Icon => "icon",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "button" => Role::Button,
            "text" => Role::Text,
            "input" => Role::Input,
            "list-item" => Role::ListItem,
            "toggle" => Role::Toggle,
            "icon" => Role::Icon,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiNode {
    pub id: String,
    pub role: Role,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub actionable: bool,
}

/// Structured view of the current screen: the element tree under the screen
/// root, plus a line-per-node text rendering of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub foreground: String,
    pub screen: String,
    pub nodes: Vec<UiNode>,
    pub text: String,
}

/// What tapping an element does.
#[derive(Debug, Clone)]
pub(crate) enum Target<'a> {
    Static,
    Launch(&'a str),
    Button(&'a [Effect]),
    Input(&'a str),
    Toggle(&'a str),
    Item { index: usize, effects: &'a [Effect] },
}

impl Observation {
    fn render(foreground: &str, screen: &str, nodes: &[UiNode]) -> String {
        let mut out = format!("app: {foreground} | screen: {screen}\n");
        for n in nodes {
            let _ = write!(out, "[{}] {} {}", n.id, n.role.as_str(), quote(&n.label));
            if let Some(v) = &n.value {
                let _ = write!(out, " = {}", quote(v));
            }
            if n.actionable {
                out.push_str(" *");
            }
            out.push('\n');
        }
        out
    }

    /// Recover nodes from a text rendering. Lines that are not node lines are skipped.
    pub fn parse_nodes(text: &str) -> Vec<UiNode> {
        text.lines().filter_map(parse_node_line).collect()
    }

    pub fn node(&self, id: &str) -> Option<&UiNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

fn parse_node_line(line: &str) -> Option<UiNode> {
    let rest = line.trim_end().strip_prefix('[')?;
    let (id, rest) = rest.split_once("] ")?;
    let (role, rest) = rest.split_once(' ')?;
    let role = Role::parse(role)?;
    let (label, mut rest) = unquote(rest)?;
    let mut value = None;
    if let Some(r) = rest.strip_prefix(" = ") {
        let (v, r) = unquote(r)?;
        value = Some(v);
        rest = r;
    }
    let actionable = match rest {
        "" => false,
        " *" => true,
        _ => return None,
    };
    Some(UiNode {
        id: id.to_string(),
        role,
        label,
        value,
        actionable,
    })
}

impl EnvState {
    /// The element list for the current screen paired with tap semantics.
    pub(crate) fn elements(&self) -> (String, Vec<(UiNode, Target<'_>)>) {
        if self.foreground == HOME {
            let icons = self
                .app_registry
                .iter()
                .map(|(id, app)| {
                    (
                        UiNode {
                            id: format!("icon_{id}"),
                            role: Role::Icon,
                            label: app.label.clone(),
                            value: None,
                            actionable: true,
                        },
                        Target::Launch(id.as_str()),
                    )
                })
                .collect();
            return ("home".to_string(), icons);
        }
        let Some(app) = self.app_registry.get(&self.foreground) else {
            return (String::new(), Vec::new());
        };
        let Some(screen_id) = self.screen_stack.get(&app.id).and_then(|s| s.last()) else {
            return (String::new(), Vec::new());
        };
        let Some(screen) = app.screens.get(screen_id) else {
            return (screen_id.clone(), Vec::new());
        };
        let ui = self.ui.get(&app.id).cloned().unwrap_or_default();
        let store = self.data_stores.get(&app.id);
        let mut out = vec![(
            UiNode {
                id: "screen_title".into(),
                role: Role::Text,
                label: screen.title.clone(),
                value: None,
                actionable: false,
            },
            Target::Static,
        )];
        for el in &screen.elements {
            match el {
                ElementDef::Text { id, label, bind } => {
                    let value = match bind {
                        None => None,
                        Some(Binding::Field(f)) => store.and_then(|s| s.field(f)).map(str::to_string),
                        Some(Binding::Selected(f)) => ui.selected.as_ref().and_then(|(coll, i)| {
                            store
                                .and_then(|s| s.records(coll).get(*i))
                                .and_then(|r| r.values.get(f).cloned())
                        }),
                    };
                    out.push((
                        UiNode {
                            id: id.clone(),
                            role: Role::Text,
                            label: label.clone(),
                            value,
                            actionable: false,
                        },
                        Target::Static,
                    ));
                }
                ElementDef::Button { id, label, effects } => out.push((
                    UiNode {
                        id: id.clone(),
                        role: Role::Button,
                        label: label.clone(),
                        value: None,
                        actionable: true,
                    },
                    Target::Button(effects),
                )),
                ElementDef::Input { id, label, key } => out.push((
                    UiNode {
                        id: id.clone(),
                        role: Role::Input,
                        label: label.clone(),
                        value: Some(ui.form.get(key).cloned().unwrap_or_default()),
                        actionable: true,
                    },
                    Target::Input(key),
                )),
                ElementDef::Toggle { id, label, field } => out.push((
                    UiNode {
                        id: id.clone(),
                        role: Role::Toggle,
                        label: label.clone(),
                        value: Some(store.and_then(|s| s.field(field)).unwrap_or("off").to_string()),
                        actionable: true,
                    },
                    Target::Toggle(field),
                )),
                ElementDef::List {
                    id,
                    collection,
                    label_field,
                    value_field,
                    on_tap,
                    page_size,
                } => {
                    let records = store.map(|s| s.records(collection)).unwrap_or(&[]);
                    let start = if page_size.is_some() {
                        ui.scroll.min(records.len())
                    } else {
                        0
                    };
                    let end = page_size.map_or(records.len(), |p| (start + p).min(records.len()));
                    for (index, r) in records.iter().enumerate().take(end).skip(start) {
                        out.push((
                            UiNode {
                                id: format!("{id}_{index}"),
                                role: Role::ListItem,
                                label: r.values.get(label_field).cloned().unwrap_or_default(),
                                value: value_field.as_ref().and_then(|f| r.values.get(f).cloned()),
                                actionable: !on_tap.is_empty(),
                            },
                            Target::Item { index, effects: on_tap },
                        ));
                    }
                }
            }
        }
        (screen_id.clone(), out)
    }

    /// Pure: the same state always yields a byte-identical observation.
    pub fn observe(&self) -> Observation {
        let (screen, elements) = self.elements();
        let nodes: Vec<UiNode> = elements.into_iter().map(|(n, _)| n).collect();
        let text = Observation::render(&self.foreground, &screen, &nodes);
        Observation {
            foreground: self.foreground.clone(),
            screen,
            nodes,
            text,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_lines_round_trip() {
        let nodes = vec![
            UiNode {
                id: "note_0".into(),
                role: Role::ListItem,
                label: "groceries".into(),
                value: Some("milk, \"eggs\"".into()),
                actionable: true,
            },
            UiNode {
                id: "screen_title".into(),
                role: Role::Text,
                label: "Notes".into(),
                value: None,
                actionable: false,
            },
        ];
        let text = Observation::render("notes", "list", &nodes);
        assert_eq!(Observation::parse_nodes(&text), nodes);
    }
}
