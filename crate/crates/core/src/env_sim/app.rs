use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Declarative definition of one simulated app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMachine {
    pub id: String,
    pub label: String,
    /// Screen shown on launch; every Back chain ends here.
    pub root: String,
    pub screens: BTreeMap<String, Screen>,
    pub schema: StoreSchema,
    #[serde(default)]
    pub seed: SeedData,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreSchema {
    #[serde(default)]
    pub fields: BTreeSet<String>,
    /// Collection name to record field names.
    #[serde(default)]
    pub collections: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedData {
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
    #[serde(default)]
    pub collections: BTreeMap<String, Vec<BTreeMap<String, String>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub title: String,
    pub elements: Vec<ElementDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// Field of the record selected from a list.
    Selected(String),
    /// Scalar store field.
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementDef {
    Text {
        id: String,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bind: Option<Binding>,
    },
    Button {
        id: String,
        label: String,
        effects: Vec<Effect>,
    },
    Input {
        id: String,
        label: String,
        key: String,
    },
    Toggle {
        id: String,
        label: String,
        field: String,
    },
    /// Expands to one list item per record, ids `{id}_{record index}`.
    List {
        id: String,
        collection: String,
        label_field: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value_field: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        on_tap: Vec<Effect>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        page_size: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Goto(String),
    Back,
    ClearForm,
    /// Append a record built from form values; rejected unless every
    /// `require`d form key is non-blank.
    Commit {
        collection: String,
        fields: BTreeMap<String, String>,
        #[serde(default)]
        require: Vec<String>,
    },
    SetField {
        field: String,
        value: String,
    },
}

impl AppMachine {
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = fs::read_to_string(path).map_err(|e| EnvError::Io(format!("{}: {e}", path.display())))?;
        let app: AppMachine =
            serde_json::from_str(&text).map_err(|e| EnvError::Parse(format!("{}: {e}", path.display())))?;
        let problems = app.check();
        if !problems.is_empty() {
            return Err(EnvError::InvalidApp { app: app.id, problems });
        }
        Ok(app)
    }

    /// Load every `*.json` app definition in a directory, sorted by app id.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, EnvError> {
        let entries = fs::read_dir(dir).map_err(|e| EnvError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut apps = paths.iter().map(|p| Self::load(p)).collect::<Result<Vec<_>, _>>()?;
        apps.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(apps)
    }

    /// Structural problems: dangling screen references, unknown store names,
    /// duplicate element ids.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id == super::HOME || self.id == super::SYSTEM_APP {
            problems.push(format!("reserved app id `{}`", self.id));
        }
        if !self.screens.contains_key(&self.root) {
            problems.push(format!("root screen `{}` missing", self.root));
        }
        let check_effects = |effects: &[Effect], problems: &mut Vec<String>| {
            for e in effects {
                match e {
                    Effect::Goto(s) if !self.screens.contains_key(s) => {
                        problems.push(format!("transition to unknown screen `{s}`"))
                    }
                    Effect::Commit { collection, fields, .. } => match self.schema.collections.get(collection) {
                        None => problems.push(format!("commit to unknown collection `{collection}`")),
                        Some(cols) => {
                            for f in fields.keys().filter(|f| !cols.contains(*f)) {
                                problems.push(format!("commit of unknown field `{collection}.{f}`"));
                            }
                        }
                    },
                    Effect::SetField { field, .. } if !self.schema.fields.contains(field) => {
                        problems.push(format!("set of unknown field `{field}`"))
                    }
                    _ => {}
                }
            }
        };
        for (sid, screen) in &self.screens {
            let mut ids = BTreeSet::new();
            for el in &screen.elements {
                let id = match el {
                    ElementDef::Text { id, bind, .. } => {
                        if let Some(Binding::Field(f)) = bind {
                            if !self.schema.fields.contains(f) {
                                problems.push(format!("{sid}: binding to unknown field `{f}`"));
                            }
                        }
                        id
                    }
                    ElementDef::Button { id, effects, .. } => {
                        check_effects(effects, &mut problems);
                        id
                    }
                    ElementDef::Input { id, .. } => id,
                    ElementDef::Toggle { id, field, .. } => {
                        if !self.schema.fields.contains(field) {
                            problems.push(format!("{sid}: toggle of unknown field `{field}`"));
                        }
                        id
                    }
                    ElementDef::List {
                        id,
                        collection,
                        label_field,
                        value_field,
                        on_tap,
                        page_size,
                    } => {
                        check_effects(on_tap, &mut problems);
                        match self.schema.collections.get(collection) {
                            None => problems.push(format!("{sid}: list of unknown collection `{collection}`")),
                            Some(cols) => {
                                for f in std::iter::once(label_field).chain(value_field) {
                                    if !cols.contains(f) {
                                        problems.push(format!("{sid}: list field `{collection}.{f}` unknown"));
                                    }
                                }
                            }
                        }
                        if *page_size == Some(0) {
                            problems.push(format!("{sid}: zero page size"));
                        }
                        id
                    }
                };
                if !ids.insert(id.clone()) {
                    problems.push(format!("{sid}: duplicate element id `{id}`"));
                }
            }
        }
        for f in self.seed.fields.keys() {
            if !self.schema.fields.contains(f) {
                problems.push(format!("seed for unknown field `{f}`"));
            }
        }
        for (c, records) in &self.seed.collections {
            match self.schema.collections.get(c) {
                None => problems.push(format!("seed for unknown collection `{c}`")),
                Some(cols) => {
                    for r in records {
                        for f in r.keys().filter(|f| !cols.contains(*f)) {
                            problems.push(format!("seed record field `{c}.{f}` unknown"));
                        }
                    }
                }
            }
        }
        problems
    }
}
