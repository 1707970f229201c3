//! Purity and immutability properties, runnable under any `TestRunner`.

use std::sync::OnceLock;

use nexus_core::backend::ScriptedAnalyst;
use nexus_core::env_sim::{Action, Goal};
use nexus_core::executor::{exec_think, Silent};
use nexus_core::memory::{
    parse_rendering, render_context, ActResult, MemoryEntry, ProcessMemory, RenderedResult, ResultVariant, StepLog,
    ThinkResult, ToolResult,
};
use proptest::prelude::*;
use proptest::test_runner::TestRunner;

use super::{action, actions, clean, data, run, suite};

pub type Property = fn(&mut TestRunner) -> Result<(), String>;

pub const PROPERTIES: &[(&str, Property)] = &[
    ("step never mutates its input", step_never_mutates_its_input),
    ("observe is pure", observe_is_pure),
    ("reward is pure", reward_is_pure),
    ("think leaves the environment alone", think_leaves_the_environment_alone),
    ("memory is append-only", memory_is_append_only),
    ("rendering fits the budget", rendering_fits_the_budget),
    ("think results survive truncation", think_results_survive_truncation),
];

fn step_log() -> impl Strategy<Value = StepLog> {
    (
        "[a-z ]{0,16}",
        action(),
        prop::option::of("[a-z ]{1,12}"),
        any::<bool>(),
    )
        .prop_map(|(reasoning, action, reflection, executed)| StepLog {
            reasoning,
            action: if executed { action } else { Action::Stop(None) },
            reflection,
            executed,
        })
}

fn result() -> impl Strategy<Value = ResultVariant> {
    prop_oneof![
        (
            any::<bool>(),
            prop::collection::vec(step_log(), 0..6),
            prop::option::of("[a-z ]{1,20}")
        )
            .prop_map(|(completed, step_logs, note)| ResultVariant::Act(ActResult {
                completed,
                step_logs,
                note
            })),
        ("[a-z0-9 ,.]{1,30}", any::<bool>()).prop_map(|(text, failed)| ResultVariant::Think(ThinkResult {
            text: if failed { format!("FAILED: {text}") } else { text },
            failed
        })),
        "[a-z]{1,8}".prop_map(|status| ResultVariant::Tool(ToolResult { status })),
    ]
}

fn appends() -> impl Strategy<Value = Vec<(String, ResultVariant)>> {
    prop::collection::vec(("[a-z][a-z ]{0,24}", result()), 0..30)
}

fn goal() -> impl Strategy<Value = Goal> {
    let tasks = suite("nexus-core").tasks;
    prop::sample::select(tasks).prop_map(|t| Goal::from_task(&t))
}

fn filled(items: Vec<(String, ResultVariant)>) -> ProcessMemory {
    let mut memory = ProcessMemory::new();
    for (i, r) in items {
        memory.append(i, r);
    }
    memory
}

pub fn step_never_mutates_its_input(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(actions(25), action()), |(acts, next)| {
            let s = run(&clean(), &acts);
            let copy = s.clone();
            let hash = s.state_hash();
            let _ = s.step(&next);
            prop_assert_eq!(&s, &copy);
            prop_assert_eq!(s.state_hash(), hash);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn observe_is_pure(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&actions(25), |acts| {
            let s = run(&clean(), &acts);
            let hash = s.state_hash();
            prop_assert_eq!(s.observe(), s.observe());
            prop_assert_eq!(s.state_hash(), hash);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn reward_is_pure(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(actions(25), goal()), |(acts, g)| {
            let s = run(&clean(), &acts);
            let hash = s.state_hash();
            let a = s.reward(&g).unwrap();
            prop_assert_eq!(a, s.reward(&g).unwrap());
            prop_assert!(a <= 1);
            prop_assert_eq!(s.progress(&g), s.progress(&g));
            prop_assert_eq!(s.state_hash(), hash);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn think_leaves_the_environment_alone(runner: &mut TestRunner) -> Result<(), String> {
    static ANALYST: OnceLock<ScriptedAnalyst> = OnceLock::new();
    let analyst = ANALYST.get_or_init(|| ScriptedAnalyst::load(&data("scripts/analyst_oracle.json")).unwrap());
    let instruction = prop::sample::select(vec![
        "Read the body of the open note",
        "Sum the visible expenses",
        "Count the visible expenses",
        "List the visible alarm labels",
        "Something the analyst was never told about",
    ]);
    runner
        .run(
            &(actions(25), instruction, any::<u64>()),
            |(acts, instruction, seed)| {
                let env = run(&clean(), &acts);
                let hash = env.state_hash();
                let obs = env.observe().text;
                let a = exec_think(&obs, instruction, "", analyst, seed, &mut Silent);
                let b = exec_think(&obs, instruction, "", analyst, seed, &mut Silent);
                prop_assert_eq!(env.state_hash(), hash);
                prop_assert_eq!(&a, &b);
                if a.failed {
                    prop_assert!(a.text.starts_with("FAILED:"));
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

pub fn memory_is_append_only(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&appends(), |items| {
            let mut memory = ProcessMemory::new();
            let mut expected: Vec<MemoryEntry> = Vec::new();
            for (instruction, result) in items {
                let before = memory.len();
                let added = memory.append(instruction.clone(), result.clone()).clone();
                prop_assert_eq!(added.index, before);
                prop_assert_eq!(memory.len(), before + 1);
                expected.push(MemoryEntry {
                    index: before,
                    instruction,
                    result,
                });
                prop_assert_eq!(memory.entries(), &expected[..]);
            }
            for (k, e) in memory.entries().iter().enumerate() {
                prop_assert_eq!(e.index, k);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn rendering_fits_the_budget(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(appends(), 256usize..4096), |(items, budget)| {
            let memory = filled(items);
            let text = render_context(&memory, budget).unwrap();
            prop_assert!(text.chars().count() <= budget);
            prop_assert_eq!(text.clone(), render_context(&memory, budget).unwrap());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn think_results_survive_truncation(runner: &mut TestRunner) -> Result<(), String> {
    runner
        .run(&(appends(), 256usize..2048), |(items, budget)| {
            let memory = filled(items);
            let thinks: Vec<(usize, &str)> = memory
                .entries()
                .iter()
                .filter_map(|e| match &e.result {
                    ResultVariant::Think(t) => Some((e.index, t.text.as_str())),
                    _ => None,
                })
                .collect();
            // a generous bound on the size of a rendering holding only think entries
            let needed: usize = 48
                + memory
                    .entries()
                    .iter()
                    .filter(|e| matches!(e.result, ResultVariant::Think(_)))
                    .map(|e| e.instruction.chars().count() + 40)
                    .sum::<usize>()
                + thinks.iter().map(|(_, t)| t.chars().count()).sum::<usize>();
            prop_assume!(needed <= budget);
            let text = render_context(&memory, budget).unwrap();
            let parsed = parse_rendering(&text);
            for (index, t) in thinks {
                match parsed.iter().find(|p| p.index == index).map(|p| &p.result) {
                    Some(RenderedResult::Think { text, .. }) => prop_assert_eq!(text.as_str(), t),
                    other => prop_assert!(false, "think entry {} missing: {:?}", index, other),
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
