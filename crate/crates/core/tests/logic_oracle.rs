mod common;

use std::collections::BTreeSet;

use common::logic_ref::{equivalence, expr_strategy, ids};
use nexus_core::task_model::{evaluate_logic, CompoundLogicExpr as E};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

#[test]
fn matches_reference_on_all_subsets_and_short_orders() {
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    equivalence(&mut runner).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn adding_completions_never_hurts_without_sequences(
        (n, e) in expr_strategy(),
        a in any::<u16>(),
        b in any::<u16>(),
    ) {
        fn has_seq(e: &E) -> bool {
            match e {
                E::Leaf { .. } => false,
                E::Sequential { children } => children.len() > 1 || children.iter().any(has_seq),
                E::Conjunctive { children } | E::Disjunctive { children } | E::Hierarchical { children, .. } => {
                    children.iter().any(has_seq)
                }
            }
        }
        prop_assume!(!has_seq(&e));
        let universe = ids(n);
        let small: BTreeSet<String> = (0..n).filter(|i| a & (1 << i) != 0).map(|i| universe[i].clone()).collect();
        let mut big = small.clone();
        big.extend((0..n).filter(|i| b & (1 << i) != 0).map(|i| universe[i].clone()));
        if evaluate_logic(&e, &small, &[]).unwrap() {
            prop_assert!(evaluate_logic(&e, &big, &[]).unwrap());
        }
    }
}

#[test]
fn undeclared_ids_are_rejected() {
    let e = E::and(vec![E::leaf("a"), E::leaf("b")]);
    let completed: BTreeSet<String> = ["a".to_string(), "zz".to_string()].into();
    assert!(evaluate_logic(&e, &completed, &[]).is_err());
}
