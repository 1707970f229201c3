//! Deterministic simulated device.
//!
//! `EnvState` is a value: [`EnvState::step`] returns the successor state and
//! never fails. Invalid input only consumes a step. Horizon enforcement is the
//! caller's job; the environment accepts any number of steps.

mod action;
mod app;
mod observe;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub(crate) use action::{quote, unquote};
pub use action::{Action, ActionParseError, Direction, MAX_TYPE_LEN};
pub use app::{AppMachine, Binding, Effect, ElementDef, Screen, SeedData, StoreSchema};
pub use observe::{Observation, Role, UiNode};
pub use store::{DataStore, Goal, Stamped, StoredRecord};

use observe::Target;

/// Foreground value while the launcher is showing.
pub const HOME: &str = "home";
/// Pseudo-app holding the agent's recorded answer.
pub const SYSTEM_APP: &str = "system";

fn system_schema() -> &'static StoreSchema {
    static SCHEMA: OnceLock<StoreSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| StoreSchema {
        fields: BTreeSet::from(["answer".to_string()]),
        collections: BTreeMap::new(),
    })
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown snapshot `{0}`")]
    UnknownSnapshot(String),
    #[error("checkpoint path `{path}` does not resolve in app `{app}`")]
    SchemaMismatch { app: String, path: String },
    #[error("app `{app}` is invalid: {}", problems.join("; "))]
    InvalidApp { app: String, problems: Vec<String> },
    #[error("logic evaluation failed: {0}")]
    Logic(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppRegistry(pub BTreeMap<String, AppMachine>);

impl AppRegistry {
    pub fn get(&self, id: &str) -> Option<&AppMachine> {
        self.0.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &AppMachine)> {
        self.0.iter()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }
}

/// Transient per-app UI state: form buffer, focused input, list selection, scroll.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiState {
    #[serde(default)]
    pub form: BTreeMap<String, String>,
    #[serde(default)]
    pub focus: Option<String>,
    /// `(collection, record index)`
    #[serde(default)]
    pub selected: Option<(String, usize)>,
    #[serde(default)]
    pub scroll: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub app_registry: Arc<AppRegistry>,
    pub foreground: String,
    pub screen_stack: BTreeMap<String, Vec<String>>,
    pub ui: BTreeMap<String, UiState>,
    pub data_stores: BTreeMap<String, DataStore>,
    pub step_count: u64,
    pub rng_seed: u64,
}

/// Outcome of one step, for logs and the agent's own bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum StepEffect {
    NoOp { reason: String },
    WentHome,
    Launched { app: String },
    Navigated { screen: String },
    Focused { element: String },
    Typed { key: String },
    Toggled { field: String, value: String },
    Selected { collection: String, index: usize },
    Committed { collection: String },
    Rejected { reason: String },
    Scrolled { offset: usize },
    Answered,
}

impl StepEffect {
    pub fn is_noop(&self) -> bool {
        matches!(self, StepEffect::NoOp { .. })
    }
}

impl EnvState {
    /// Fresh device: launcher in front, every app on its root screen, seed data loaded.
    pub fn from_apps(apps: Vec<AppMachine>, rng_seed: u64) -> Self {
        let mut screen_stack = BTreeMap::new();
        let mut ui = BTreeMap::new();
        let mut data_stores = BTreeMap::new();
        for app in &apps {
            screen_stack.insert(app.id.clone(), vec![app.root.clone()]);
            ui.insert(app.id.clone(), UiState::default());
            let mut store = DataStore::default();
            for f in &app.schema.fields {
                let value = app.seed.fields.get(f).cloned().unwrap_or_default();
                store.fields.insert(f.clone(), Stamped { value, rev: 0 });
            }
            for c in app.schema.collections.keys() {
                let records = app
                    .seed
                    .collections
                    .get(c)
                    .into_iter()
                    .flatten()
                    .map(|values| StoredRecord {
                        values: values.clone(),
                        rev: 0,
                    })
                    .collect();
                store.collections.insert(c.clone(), records);
            }
            data_stores.insert(app.id.clone(), store);
        }
        let mut system = DataStore::default();
        system.fields.insert(
            "answer".into(),
            Stamped {
                value: String::new(),
                rev: 0,
            },
        );
        data_stores.insert(SYSTEM_APP.to_string(), system);
        Self {
            app_registry: Arc::new(AppRegistry(apps.into_iter().map(|a| (a.id.clone(), a)).collect())),
            foreground: HOME.to_string(),
            screen_stack,
            ui,
            data_stores,
            step_count: 0,
            rng_seed,
        }
    }

    /// Canonical SHA-256 over the serialized state. Every map is ordered, so
    /// the digest is stable across runs and platforms.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn store(&self, app: &str) -> Option<&DataStore> {
        self.data_stores.get(app)
    }

    pub fn current_screen(&self) -> Option<&str> {
        if self.foreground == HOME {
            return None;
        }
        self.screen_stack
            .get(&self.foreground)
            .and_then(|s| s.last())
            .map(String::as_str)
    }

    /// Apply one action. Total: every input yields a successor with
    /// `step_count` incremented by exactly one.
    pub fn step(&self, action: &Action) -> (EnvState, StepEffect) {
        let mut next = self.clone();
        next.step_count += 1;
        let effect = match action {
            Action::Home => {
                next.foreground = HOME.to_string();
                StepEffect::WentHome
            }
            Action::Back => next.back(),
            Action::Tap(id) => return self.tap(next, id),
            Action::Type(text) => next.type_text(text),
            Action::Swipe(dir) => next.swipe(*dir),
            Action::Stop(Some(answer)) => {
                let rev = next.step_count;
                next.data_stores
                    .entry(SYSTEM_APP.to_string())
                    .or_default()
                    .fields
                    .insert(
                        "answer".into(),
                        Stamped {
                            value: answer.clone(),
                            rev,
                        },
                    );
                StepEffect::Answered
            }
            Action::Stop(None) => StepEffect::NoOp {
                reason: "stop without answer".into(),
            },
        };
        (next, effect)
    }

    fn noop(reason: impl Into<String>) -> StepEffect {
        StepEffect::NoOp { reason: reason.into() }
    }

    fn back(&mut self) -> StepEffect {
        if self.foreground == HOME {
            return Self::noop("back on home screen");
        }
        let app = self.foreground.clone();
        let stack = self.screen_stack.entry(app.clone()).or_default();
        if stack.len() > 1 {
            stack.pop();
            let screen = stack.last().cloned().unwrap_or_default();
            let ui = self.ui.entry(app).or_default();
            ui.focus = None;
            ui.scroll = 0;
            StepEffect::Navigated { screen }
        } else {
            self.foreground = HOME.to_string();
            StepEffect::WentHome
        }
    }

    fn tap(&self, mut next: EnvState, id: &str) -> (EnvState, StepEffect) {
        let (_, elements) = self.elements();
        let Some((node, target)) = elements.into_iter().find(|(n, _)| n.id == id) else {
            return (next, Self::noop(format!("no element `{id}`")));
        };
        if !node.actionable {
            return (next, Self::noop(format!("element `{id}` is not actionable")));
        }
        let app = self.foreground.clone();
        let effect = match target {
            Target::Static => Self::noop(format!("element `{id}` is not actionable")),
            Target::Launch(app_id) => {
                let root = self
                    .app_registry
                    .get(app_id)
                    .map(|a| a.root.clone())
                    .unwrap_or_default();
                next.foreground = app_id.to_string();
                next.screen_stack.insert(app_id.to_string(), vec![root]);
                next.ui.insert(app_id.to_string(), UiState::default());
                StepEffect::Launched {
                    app: app_id.to_string(),
                }
            }
            Target::Input(_) => {
                next.ui.entry(app).or_default().focus = Some(id.to_string());
                StepEffect::Focused {
                    element: id.to_string(),
                }
            }
            Target::Toggle(field) => {
                let rev = next.step_count;
                let store = next.data_stores.entry(app).or_default();
                let now = if store.field(field) == Some("on") { "off" } else { "on" };
                store.fields.insert(
                    field.to_string(),
                    Stamped {
                        value: now.to_string(),
                        rev,
                    },
                );
                StepEffect::Toggled {
                    field: field.to_string(),
                    value: now.to_string(),
                }
            }
            Target::Button(effects) => {
                let mut scratch = next.clone();
                match scratch.apply_effects(&app, effects) {
                    Ok(effect) => {
                        next = scratch;
                        effect
                    }
                    Err(reason) => StepEffect::Rejected { reason },
                }
            }
            Target::Item { index, effects } => {
                let mut scratch = next.clone();
                let collection = self.list_collection_of(id).unwrap_or_default();
                scratch.ui.entry(app.clone()).or_default().selected = Some((collection.clone(), index));
                match scratch.apply_effects(&app, effects) {
                    Ok(_) => {
                        next = scratch;
                        StepEffect::Selected { collection, index }
                    }
                    Err(reason) => StepEffect::Rejected { reason },
                }
            }
        };
        (next, effect)
    }

    fn list_collection_of(&self, element_id: &str) -> Option<String> {
        let app = self.app_registry.get(&self.foreground)?;
        let screen = app.screens.get(self.current_screen()?)?;
        screen.elements.iter().find_map(|el| match el {
            ElementDef::List { id, collection, .. }
                if element_id
                    .strip_prefix(id.as_str())
                    .and_then(|r| r.strip_prefix('_'))
                    .is_some_and(|r| r.parse::<usize>().is_ok()) =>
            {
                Some(collection.clone())
            }
            _ => None,
        })
    }

    fn apply_effects(&mut self, app: &str, effects: &[Effect]) -> Result<StepEffect, String> {
        let mut last = Self::noop("button has no effect");
        for e in effects {
            last = match e {
                Effect::Goto(screen) => {
                    self.screen_stack
                        .entry(app.to_string())
                        .or_default()
                        .push(screen.clone());
                    let ui = self.ui.entry(app.to_string()).or_default();
                    ui.focus = None;
                    ui.scroll = 0;
                    StepEffect::Navigated { screen: screen.clone() }
                }
                Effect::Back => {
                    let stack = self.screen_stack.entry(app.to_string()).or_default();
                    if stack.len() > 1 {
                        stack.pop();
                    }
                    let ui = self.ui.entry(app.to_string()).or_default();
                    ui.focus = None;
                    ui.scroll = 0;
                    StepEffect::Navigated {
                        screen: stack.last().cloned().unwrap_or_default(),
                    }
                }
                Effect::ClearForm => {
                    let ui = self.ui.entry(app.to_string()).or_default();
                    ui.form.clear();
                    ui.focus = None;
                    last
                }
                Effect::Commit {
                    collection,
                    fields,
                    require,
                } => {
                    let ui = self.ui.entry(app.to_string()).or_default();
                    if let Some(missing) = require
                        .iter()
                        .find(|k| ui.form.get(*k).is_none_or(|v| v.trim().is_empty()))
                    {
                        return Err(format!("`{missing}` is required"));
                    }
                    let values = fields
                        .iter()
                        .map(|(field, key)| (field.clone(), ui.form.get(key).cloned().unwrap_or_default()))
                        .collect();
                    ui.form.clear();
                    ui.focus = None;
                    let rev = self.step_count;
                    self.data_stores
                        .entry(app.to_string())
                        .or_default()
                        .collections
                        .entry(collection.clone())
                        .or_default()
                        .push(StoredRecord { values, rev });
                    StepEffect::Committed {
                        collection: collection.clone(),
                    }
                }
                Effect::SetField { field, value } => {
                    let rev = self.step_count;
                    self.data_stores.entry(app.to_string()).or_default().fields.insert(
                        field.clone(),
                        Stamped {
                            value: value.clone(),
                            rev,
                        },
                    );
                    StepEffect::Toggled {
                        field: field.clone(),
                        value: value.clone(),
                    }
                }
            };
        }
        Ok(last)
    }

    fn type_text(&mut self, text: &str) -> StepEffect {
        if text.chars().count() > MAX_TYPE_LEN {
            return Self::noop("text too long");
        }
        if self.foreground == HOME {
            return Self::noop("no focused input");
        }
        let (_, elements) = self.elements();
        let app = self.foreground.clone();
        let focus = self.ui.get(&app).and_then(|u| u.focus.clone());
        let key = focus.and_then(|f| {
            elements.into_iter().find_map(|(n, t)| match t {
                Target::Input(key) if n.id == f => Some(key.to_string()),
                _ => None,
            })
        });
        match key {
            Some(key) => {
                self.ui
                    .entry(app)
                    .or_default()
                    .form
                    .entry(key.clone())
                    .or_default()
                    .push_str(text);
                StepEffect::Typed { key }
            }
            None => Self::noop("no focused input"),
        }
    }

    fn swipe(&mut self, dir: Direction) -> StepEffect {
        let Some(app) = self.app_registry.get(&self.foreground).cloned() else {
            return Self::noop("nothing to scroll");
        };
        let Some(screen) = self.current_screen().and_then(|s| app.screens.get(s)) else {
            return Self::noop("nothing to scroll");
        };
        let paged = screen.elements.iter().find_map(|el| match el {
            ElementDef::List {
                collection,
                page_size: Some(p),
                ..
            } => Some((collection.clone(), *p)),
            _ => None,
        });
        let Some((collection, page)) = paged else {
            return Self::noop("nothing to scroll");
        };
        let len = self
            .data_stores
            .get(&app.id)
            .map(|s| s.records(&collection).len())
            .unwrap_or(0);
        let ui = self.ui.entry(app.id.clone()).or_default();
        let offset = match dir {
            Direction::Up if ui.scroll + page < len => ui.scroll + page,
            Direction::Down if ui.scroll > 0 => ui.scroll.saturating_sub(page),
            _ => return Self::noop("cannot scroll further"),
        };
        ui.scroll = offset;
        StepEffect::Scrolled { offset }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("state serializes");
        s.push('\n');
        s
    }

    /// Freeze the current data as seed data: launcher in front, every app
    /// back on its root screen with blank UI state, step counter and write
    /// stamps reset to zero. Used to author snapshots.
    pub fn rebase(&self) -> EnvState {
        let mut next = self.clone();
        next.foreground = HOME.to_string();
        next.step_count = 0;
        for (id, app) in self.app_registry.iter() {
            next.screen_stack.insert(id.clone(), vec![app.root.clone()]);
            next.ui.insert(id.clone(), UiState::default());
        }
        for store in next.data_stores.values_mut() {
            for f in store.fields.values_mut() {
                f.rev = 0;
            }
            for r in store.collections.values_mut().flatten() {
                r.rev = 0;
            }
        }
        next
    }
}

/// Named, restorable environment states.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    snapshots: BTreeMap<String, EnvState>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load every `<id>.json` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, EnvError> {
        let entries = fs::read_dir(dir).map_err(|e| EnvError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut store = Self::new();
        for p in paths {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(&p).map_err(|e| EnvError::Io(format!("{}: {e}", p.display())))?;
            let state: EnvState =
                serde_json::from_str(&text).map_err(|e| EnvError::Parse(format!("{}: {e}", p.display())))?;
            store.insert(id, state);
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: impl Into<String>, state: EnvState) {
        self.snapshots.insert(id.into(), state);
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.snapshots.keys().map(String::as_str)
    }

    /// The exact stored state.
    pub fn reset(&self, id: &str) -> Result<EnvState, EnvError> {
        self.snapshots
            .get(id)
            .cloned()
            .ok_or_else(|| EnvError::UnknownSnapshot(id.to_string()))
    }
}
