mod common;

use common::purity;
use proptest::test_runner::{Config, TestRunner};

fn check(property: purity::Property) {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    if let Err(e) = property(&mut runner) {
        panic!("{e}");
    }
}

#[test]
fn step_never_mutates_its_input() {
    check(purity::step_never_mutates_its_input);
}

#[test]
fn observe_is_pure() {
    check(purity::observe_is_pure);
}

#[test]
fn reward_is_pure() {
    check(purity::reward_is_pure);
}

#[test]
fn think_leaves_the_environment_alone() {
    check(purity::think_leaves_the_environment_alone);
}

#[test]
fn memory_is_append_only() {
    check(purity::memory_is_append_only);
}

#[test]
fn rendering_fits_the_budget() {
    check(purity::rendering_fits_the_budget);
}

#[test]
fn think_results_survive_truncation() {
    check(purity::think_results_survive_truncation);
}
