//! Episode judging and suite metrics.

mod metrics;
mod report;
mod signatures;
mod trajectory;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use metrics::{compute_cost, compute_latency, compute_pgr, MetricError, PricingTable, Rate};
pub use report::{pgr_table, EpisodeOutcome, Fault, MetricsReport, PgrRow, PgrTable, TypeStats};
pub use signatures::{scan_signatures, scan_signatures_with, FailureSignature, SignatureKind, SignatureThresholds};
pub use trajectory::{BackendIds, BudgetScope, Ending, Event, EventKind, TrajectoryError, TrajectoryRecord};

/// Episode step budget for a task with the given optimal step count.
pub fn step_budget(optimal_steps: u32) -> u32 {
    optimal_steps.saturating_mul(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Successful,
    Premature,
    BudgetExceeded,
    DeemedImpossible,
    Collapse,
}

impl TerminationReason {
    pub const ALL: [TerminationReason; 5] = [
        TerminationReason::Successful,
        TerminationReason::Premature,
        TerminationReason::BudgetExceeded,
        TerminationReason::DeemedImpossible,
        TerminationReason::Collapse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Successful => "successful",
            TerminationReason::Premature => "premature",
            TerminationReason::BudgetExceeded => "budget_exceeded",
            TerminationReason::DeemedImpossible => "deemed_impossible",
            TerminationReason::Collapse => "collapse",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify(ending: Ending, reward: u8) -> TerminationReason {
    match (ending, reward) {
        (Ending::Done, 1) => TerminationReason::Successful,
        (Ending::Done, _) => TerminationReason::Premature,
        (Ending::Infeasible, _) => TerminationReason::DeemedImpossible,
        (Ending::Collapse, _) => TerminationReason::Collapse,
        (Ending::BudgetExceeded, _) => TerminationReason::BudgetExceeded,
    }
}
