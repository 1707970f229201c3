//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use nexus_cli::{replay, run, run_suite, RunConfig, RunOutput};
use nexus_core::backend::{NavigatorFinish, PlannerScript, ScriptedAnalyst, ScriptedNavigator, ScriptedPlanner};
use nexus_core::env_sim::{StepEffect, HOME};
use nexus_core::eval::{
    classify, compute_cost, compute_pgr, scan_signatures, step_budget, BackendIds, Ending, Event, EventKind,
    MetricError, PricingTable, SignatureKind, TerminationReason, TrajectoryRecord,
};
use nexus_core::scheduler::{run_episode, Backends, EpisodeOptions, SchedulerConfig};
use nexus_core::task_model::{CompositionType, CompositionalTask, TaskSuite};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use tempfile::TempDir;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn config(name: &str) -> RunConfig {
    RunConfig::load(&common::data(&format!("configs/{name}.json"))).expect("shipped config loads")
}

fn executed(name: &str) -> &'static RunOutput {
    static RUNS: OnceLock<std::sync::Mutex<BTreeMap<String, &'static RunOutput>>> = OnceLock::new();
    let runs = RUNS.get_or_init(Default::default);
    let mut guard = runs.lock().unwrap();
    guard
        .entry(name.to_string())
        .or_insert_with(|| Box::leak(Box::new(run_suite(&config(name)).expect("suite runs"))))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let started = Instant::now();
    let mut trees = Vec::new();
    let mut episodes = 0;
    let dirs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    for d in &dirs {
        let mut c = config("templated");
        c.output_dir = d.path().to_path_buf();
        episodes = run(&c).map_err(|e| e.to_string())?.records.len();
        trees.push(tree(d.path()));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(episodes >= 100, || format!("only {episodes} episodes"))?;
    ensure(trees[0] == trees[1], || "artifact trees differ between runs".into())?;
    ensure(secs < 60.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "{episodes} episodes, {} files identical across 2 runs in {secs:.2} s",
        trees[0].len()
    ))
}

fn oracle_suite() -> Verdict {
    let c = config("oracle");
    let suite = TaskSuite::load(&c.suite).map_err(|e| e.to_string())?;
    ensure(suite.tasks.len() >= 12, || format!("{} tasks", suite.tasks.len()))?;
    let mut per_type = Vec::new();
    for ty in CompositionType::ALL {
        let n = suite.tasks.iter().filter(|t| t.composition_type == ty).count();
        ensure(n >= 4, || format!("{ty}: {n} tasks"))?;
        per_type.push(format!("{ty} {n}"));
    }
    let apps: BTreeSet<&str> = suite
        .tasks
        .iter()
        .flat_map(|t| t.subtasks.iter().map(|s| s.environment.as_str()))
        .filter(|e| *e != "system")
        .collect();
    ensure(
        apps == BTreeSet::from(["clock", "expenses", "messaging", "notes", "settings"]),
        || format!("apps used: {apps:?}"),
    )?;
    let out = executed("oracle");
    ensure(out.faults().is_empty(), || format!("{} faults", out.faults().len()))?;
    ensure(out.report.success_rate == 100.0, || {
        format!("success rate {}", out.report.success_rate)
    })?;
    let bad: Vec<&str> = out
        .records
        .iter()
        .filter(|r| r.termination_reason != TerminationReason::Successful)
        .map(|r| r.task_id.as_str())
        .collect();
    ensure(bad.is_empty(), || format!("not successful: {bad:?}"))?;
    Ok(format!(
        "{} tasks ({}), success_rate = 100",
        suite.tasks.len(),
        per_type.join(", ")
    ))
}

fn context_sensitivity() -> Verdict {
    let full = executed("oracle");
    let blank = executed("ct-ablation");
    let mut flipped = Vec::new();
    for r in full
        .records
        .iter()
        .filter(|r| r.composition_type == CompositionType::ContextTransition)
    {
        let b = blank
            .records
            .iter()
            .find(|b| b.task_id == r.task_id)
            .ok_or_else(|| format!("{} missing from the ablation", r.task_id))?;
        ensure(r.termination_reason == TerminationReason::Successful, || {
            format!("{} not successful with full context", r.task_id)
        })?;
        ensure(
            matches!(
                b.termination_reason,
                TerminationReason::Premature | TerminationReason::BudgetExceeded
            ),
            || format!("{} ended {} with blanked thinks", r.task_id, b.termination_reason),
        )?;
        flipped.push(format!("{}->{}", r.task_id, b.termination_reason));
    }
    ensure(!flipped.is_empty(), || "no CT tasks".into())?;
    Ok(format!("{} CT tasks flipped: {}", flipped.len(), flipped.join(", ")))
}

fn taxonomy() -> Verdict {
    let expected = [
        ("oracle", TerminationReason::Successful),
        ("early-done", TerminationReason::Premature),
        ("no-stop", TerminationReason::BudgetExceeded),
        ("infeasible", TerminationReason::DeemedImpossible),
        ("garbage", TerminationReason::Collapse),
    ];
    let mut seen = BTreeSet::new();
    let mut parts = Vec::new();
    for (name, reason) in expected {
        let out = executed(name);
        let share = out.report.termination[&reason];
        ensure(out.faults().is_empty() && share == 100.0, || {
            format!("{name}: {share}% {reason}")
        })?;
        seen.insert(reason);
        parts.push(format!("{name}=100% {reason}"));
    }
    ensure(seen.len() == TerminationReason::ALL.len(), || {
        "reasons not distinct".into()
    })?;
    Ok(parts.join(", "))
}

fn wifi_task(k: u32) -> CompositionalTask {
    serde_json::from_value(serde_json::json!({
        "id": format!("budget-{k}"),
        "instruction": "Turn on Wi-Fi",
        "subtasks": [{"id": "a", "command": "Turn on Wi-Fi", "params": {}, "environment": "settings"}],
        "dependencies": [],
        "logic": {"kind": "leaf", "id": "a"},
        "composition_type": "SimpleConcatenation",
        "checkpoints": [{"app": "settings", "subtask": "a", "predicate": {"path": "wifi", "op": "eq", "expected": "on"}}],
        "optimal_steps": k
    }))
    .expect("task literal parses")
}

/// `padding` swipes, then two taps that turn Wi-Fi on.
fn padded_episode(task: &CompositionalTask, padding: u32) -> TrajectoryRecord {
    let mut acts: Vec<&str> = vec!["Swipe(up)"; padding as usize];
    acts.extend(["Tap(icon_settings)", "Tap(wifi_toggle)"]);
    let planner = ScriptedPlanner::new(
        "budget-planner",
        0,
        vec![PlannerScript {
            goal: "{_}".into(),
            turns: vec!["1. [ACT] Turn on Wi-Fi".into(), "DONE".into()],
        }],
    )
    .unwrap();
    let backends = Backends {
        planner: Arc::new(planner),
        navigator: Arc::new(ScriptedNavigator::uniform(
            "budget-navigator",
            &acts,
            NavigatorFinish::default(),
        )),
        analyst: Arc::new(ScriptedAnalyst::load(&common::data("scripts/analyst_oracle.json")).unwrap()),
    };
    let scheduler = SchedulerConfig {
        per_subtask_step_budget: 64,
        ..SchedulerConfig::default()
    };
    run_episode(
        task,
        common::clean(),
        &backends,
        &scheduler,
        &EpisodeOptions::new("clean", 0),
    )
}

fn env_steps(r: &TrajectoryRecord) -> u32 {
    r.events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::EnvStep { .. }))
        .count() as u32
}

fn budget() -> Verdict {
    let mut parts = Vec::new();
    for k in [1u32, 5, 14] {
        let task = wifi_task(k);
        let b = step_budget(k);
        ensure(b == 2 * k, || format!("step_budget({k}) = {b}"))?;
        let fits = padded_episode(&task, 2 * k - 2);
        ensure(
            fits.termination_reason == TerminationReason::Successful && env_steps(&fits) == 2 * k,
            || format!("k={k}: {} steps ended {}", env_steps(&fits), fits.termination_reason),
        )?;
        let over = padded_episode(&task, 2 * k - 1);
        ensure(
            over.termination_reason == TerminationReason::BudgetExceeded && env_steps(&over) == 2 * k,
            || format!("k={k}: {} steps ended {}", env_steps(&over), over.termination_reason),
        )?;
        parts.push(format!("k={k}: {} ok, {} over", 2 * k, 2 * k + 1));
    }
    Ok(parts.join("; "))
}

fn pgr() -> Verdict {
    let v = compute_pgr(57.0, 80.0, 77.0).map_err(|e| e.to_string())?;
    ensure((v - 86.96).abs() <= 0.01, || format!("got {v}"))?;
    ensure(compute_pgr(57.0, 80.0, 57.0) == Ok(0.0), || {
        "bridged = weak is not 0".into()
    })?;
    ensure(compute_pgr(57.0, 80.0, 80.0) == Ok(100.0), || {
        "bridged = strong is not 100".into()
    })?;
    ensure(compute_pgr(57.0, 57.0, 70.0) == Err(MetricError::ZeroGap), || {
        "no ZeroGap".into()
    })?;
    let tars = compute_pgr(11.0, 60.0, 49.0).map_err(|e| e.to_string())?;
    Ok(format!(
        "(57, 80, 77) -> {v:.2} (tolerance 0.01), (11, 60, 49) -> {tars:.2}, anchors exact, ZeroGap raised"
    ))
}

fn event(seq: u64, kind: EventKind, tokens: (u64, u64)) -> Event {
    Event {
        seq,
        kind,
        wall_ms: 0,
        infer_ms: 0,
        tokens_in: tokens.0,
        tokens_out: tokens.1,
    }
}

/// A record from the given middle events, framed by start and end events.
fn synthetic(middle: Vec<(EventKind, (u64, u64))>, ending: Ending) -> TrajectoryRecord {
    let mut kinds = vec![(
        EventKind::EpisodeStart {
            task_id: "synthetic".into(),
            composition_type: CompositionType::SimpleConcatenation,
            snapshot: "clean".into(),
            instruction: "synthetic".into(),
            seed: 0,
            horizon: 2,
            episode_step_budget: 2,
            initial_state_hash: String::new(),
            backends: BackendIds {
                planner: "gpt-4o".into(),
                navigator: "gpt-4o".into(),
                analyst: "gpt-4o".into(),
            },
            config: serde_json::Value::Null,
        },
        (0, 0),
    )];
    let steps = middle
        .iter()
        .filter(|(k, _)| matches!(k, EventKind::EnvStep { .. }))
        .count() as u64;
    kinds.extend(middle);
    kinds.push((
        EventKind::EpisodeEnd {
            ending,
            reward: 0,
            termination_reason: classify(ending, 0),
            final_state_hash: String::new(),
            env_steps: steps,
            judge_error: None,
        },
        (0, 0),
    ));
    let events = kinds
        .into_iter()
        .enumerate()
        .map(|(i, (k, t))| event(i as u64, k, t))
        .collect();
    TrajectoryRecord::from_events(events).expect("synthetic log is well formed")
}

fn step(action: &str, foreground: &str) -> (EventKind, (u64, u64)) {
    (
        EventKind::EnvStep {
            action: action.parse().unwrap(),
            effect: StepEffect::NoOp {
                reason: "synthetic".into(),
            },
            foreground: foreground.into(),
            step_count: 0,
            state_hash: String::new(),
            progress: 0,
        },
        (0, 0),
    )
}

fn cost() -> Verdict {
    let call = (
        EventKind::NavigatorCall {
            backend: "gpt-4o".into(),
            instruction: "x".into(),
            history_len: 0,
            step_index: 0,
            response: "ACTION: Back".into(),
        },
        (10_000, 500),
    );
    let record = synthetic(vec![call, step("Back", "notes")], Ending::Done);
    let pricing = PricingTable::default().with("gpt-4o", 2.50, 10.00);
    let got = compute_cost(&record, &pricing)
        .map_err(|e| e.to_string())?
        .ok_or("no steps")?;
    ensure((got - 0.030).abs() <= 1e-9, || format!("got {got}"))?;
    Ok(format!(
        "10000 in / 500 out at 2.50/10.00 per 1M over 1 step -> {got:.9} USD (tolerance 1e-9)"
    ))
}

fn logic_oracle() -> Verdict {
    common::logic_ref::equivalence(&mut runner(200))?;
    Ok("200 expressions, n <= 10, all subsets and all orders of length <= 4 agree".into())
}

fn purity() -> Verdict {
    let mut names = Vec::new();
    for (name, property) in common::purity::PROPERTIES {
        property(&mut runner(1000)).map_err(|e| format!("{name}: {e}"))?;
        names.push(*name);
    }
    Ok(format!("{} properties x 1000 cases: {}", names.len(), names.join("; ")))
}

fn signatures() -> Verdict {
    let mut toggles = vec![step("Tap(icon_settings)", "settings")];
    toggles.extend((0..6).map(|_| step("Tap(wifi_toggle)", "settings")));
    let flip = scan_signatures(&synthetic(toggles, Ending::Done));
    ensure(
        flip.iter().map(|s| s.kind).collect::<Vec<_>>() == vec![SignatureKind::RepeatedIdenticalAction],
        || format!("toggle flip gave {flip:?}"),
    )?;
    let mut pingpong = Vec::new();
    for app in ["notes", "messaging", "notes", "messaging", "notes"] {
        pingpong.push(step(&format!("Tap(icon_{app})"), app));
        pingpong.push(step("Home", HOME));
    }
    let osc = scan_signatures(&synthetic(pingpong, Ending::BudgetExceeded));
    ensure(
        osc.iter().map(|s| s.kind).collect::<Vec<_>>() == vec![SignatureKind::AppOscillation],
        || format!("ping-pong gave {osc:?}"),
    )?;
    let out = executed("oracle");
    let flagged: Vec<&str> = out
        .records
        .iter()
        .filter(|r| !scan_signatures(r).is_empty())
        .map(|r| r.task_id.as_str())
        .collect();
    ensure(flagged.is_empty(), || format!("oracle episodes flagged: {flagged:?}"))?;
    Ok(format!(
        "toggle x6 -> RepeatedIdenticalAction, A-B-A-B-A -> AppOscillation, 0 of {} oracle episodes flagged",
        out.records.len()
    ))
}

fn replay_all() -> Verdict {
    let c = config("oracle");
    let store = nexus_core::env_sim::SnapshotStore::from_dir(&c.snapshots).map_err(|e| e.to_string())?;
    let dir = TempDir::new().unwrap();
    let mut c = c;
    c.output_dir = dir.path().to_path_buf();
    let out = run(&c).map_err(|e| e.to_string())?;
    let mut matched = 0;
    for r in &out.records {
        let text = fs::read_to_string(
            dir.path()
                .join("trajectories")
                .join(nexus_cli::trajectory_file_name(&r.task_id)),
        )
        .map_err(|e| e.to_string())?;
        let logged = TrajectoryRecord::from_jsonl(&text).map_err(|e| e.to_string())?;
        let outcome = replay(&logged, &store).map_err(|e| e.to_string())?;
        if outcome.matches() {
            matched += 1;
        }
    }
    let total = out.records.len();
    ensure(total > 0 && matched == total, || {
        format!("{matched}/{total} reproduced")
    })?;
    Ok(format!(
        "{matched}/{total} oracle trajectories reproduce their final state hash"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("determinism replay", determinism),
        ("oracle suite", oracle_suite),
        ("context-transition sensitivity", context_sensitivity),
        ("termination taxonomy coverage", taxonomy),
        ("budget exactness", budget),
        ("PGR arithmetic", pgr),
        ("cost metric", cost),
        ("logic-oracle equivalence", logic_oracle),
        ("purity and immutability", purity),
        ("failure signatures", signatures),
        ("replay verb", replay_all),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let stdout = std::io::stdout();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed += 1;
                ("FAIL", e)
            }
        };
        let mut out = stdout.lock();
        writeln!(out, "{tag} {:>2} {name}: {detail}", i + 1).unwrap();
        out.flush().unwrap();
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
