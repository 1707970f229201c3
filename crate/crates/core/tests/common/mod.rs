#![allow(dead_code)]

pub mod logic_ref;
pub mod purity;

use std::path::PathBuf;
use std::sync::OnceLock;

use nexus_core::env_sim::{Action, Direction, EnvState, SnapshotStore};
use nexus_core::task_model::{CompositionalTask, TaskSuite};
use proptest::prelude::*;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn snapshots() -> SnapshotStore {
    SnapshotStore::from_dir(&data("snapshots")).expect("shipped snapshots load")
}

pub fn clean() -> EnvState {
    static CLEAN: OnceLock<EnvState> = OnceLock::new();
    CLEAN.get_or_init(|| snapshots().reset("clean").unwrap()).clone()
}

pub fn suite(name: &str) -> TaskSuite {
    TaskSuite::load(&data(&format!("suites/{name}.json"))).expect("shipped suite loads")
}

/// Snapshot id each shipped task starts from, as declared by the oracle config.
pub fn start_snapshot(task: &CompositionalTask) -> String {
    let text = std::fs::read_to_string(data("configs/oracle.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let policy = &v["snapshot_policy"];
    policy["per_task"][&task.id]
        .as_str()
        .or(policy["default"].as_str())
        .unwrap()
        .to_string()
}

const TARGETS: &[&str] = &[
    "icon_notes",
    "icon_messaging",
    "icon_expenses",
    "icon_clock",
    "icon_settings",
    "note_0",
    "note_1",
    "note_4",
    "new_note",
    "title_input",
    "body_input",
    "save",
    "back",
    "compose",
    "to_input",
    "send",
    "add_expense",
    "amount_input",
    "category_input",
    "add_alarm",
    "time_input",
    "label_input",
    "wifi_toggle",
    "bluetooth_toggle",
    "dnd_toggle",
    "expense_0",
    "nonexistent",
];

pub fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        6 => prop::sample::select(TARGETS).prop_map(|t| Action::Tap(t.to_string())),
        2 => "[a-z ]{0,8}".prop_map(Action::Type),
        1 => prop_oneof![Just(Direction::Up), Just(Direction::Down)].prop_map(Action::Swipe),
        1 => Just(Action::Back),
        1 => Just(Action::Home),
        1 => prop::option::of("[0-9.]{1,5}").prop_map(Action::Stop),
    ]
}

pub fn actions(max: usize) -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec(action(), 0..max)
}

pub fn run(start: &EnvState, actions: &[Action]) -> EnvState {
    actions.iter().fold(start.clone(), |s, a| s.step(a).0)
}
