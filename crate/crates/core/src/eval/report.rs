use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{token_totals, total_cost};
use super::{
    compute_pgr, scan_signatures, FailureSignature, MetricError, PricingTable, TerminationReason, TrajectoryRecord,
};
use crate::task_model::CompositionType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub task_id: String,
    pub composition_type: CompositionType,
    pub termination_reason: TerminationReason,
    pub reward: u8,
    pub env_steps: u64,
    pub planning_rounds: usize,
    pub signatures: Vec<FailureSignature>,
}

/// An episode that could not be run or judged; excluded from the rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub task_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub episodes: usize,
    pub successful: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub suite: String,
    pub episodes: usize,
    pub success_rate: f64,
    /// Percent of episodes per reason; all five reasons always present.
    pub termination: BTreeMap<TerminationReason, f64>,
    /// Inference seconds per env step, pooled over the suite.
    pub mean_latency_s: Option<f64>,
    /// Model USD per env step, pooled over the suite.
    pub mean_cost_usd: Option<f64>,
    pub env_steps: u64,
    pub by_type: BTreeMap<CompositionType, TypeStats>,
    pub outcomes: Vec<EpisodeOutcome>,
    pub faults: Vec<Fault>,
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl MetricsReport {
    pub fn from_records(
        suite: impl Into<String>,
        records: &[TrajectoryRecord],
        faults: Vec<Fault>,
        pricing: Option<&PricingTable>,
    ) -> Result<Self, MetricError> {
        let n = records.len();
        let count = |reason: TerminationReason| records.iter().filter(|r| r.termination_reason == reason).count();
        let termination = TerminationReason::ALL
            .iter()
            .map(|&reason| (reason, percent(count(reason), n)))
            .collect();
        let env_steps: u64 = records.iter().map(|r| r.env_step_count()).sum();
        let infer_ms: u64 = records
            .iter()
            .flat_map(|r| r.model_calls())
            .map(|(e, _)| e.infer_ms)
            .sum();
        let mean_latency_s = (env_steps > 0).then(|| infer_ms as f64 / 1000.0 / env_steps as f64);
        let mean_cost_usd = match pricing {
            None => None,
            Some(p) => {
                let usd = total_cost(&token_totals(records), p)?;
                (env_steps > 0).then(|| usd / env_steps as f64)
            }
        };
        let mut by_type: BTreeMap<CompositionType, TypeStats> = BTreeMap::new();
        for r in records {
            let s = by_type.entry(r.composition_type).or_insert(TypeStats {
                episodes: 0,
                successful: 0,
                success_rate: 0.0,
            });
            s.episodes += 1;
            if r.termination_reason == TerminationReason::Successful {
                s.successful += 1;
            }
        }
        for s in by_type.values_mut() {
            s.success_rate = percent(s.successful, s.episodes);
        }
        let outcomes = records
            .iter()
            .map(|r| EpisodeOutcome {
                task_id: r.task_id.clone(),
                composition_type: r.composition_type,
                termination_reason: r.termination_reason,
                reward: r.reward,
                env_steps: r.env_step_count(),
                planning_rounds: r.planning_rounds(),
                signatures: scan_signatures(r),
            })
            .collect();
        Ok(Self {
            suite: suite.into(),
            episodes: n,
            success_rate: percent(count(TerminationReason::Successful), n),
            termination,
            mean_latency_s,
            mean_cost_usd,
            env_steps,
            by_type,
            outcomes,
            faults,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Task ids covered, including faulted ones.
    pub fn task_ids(&self) -> BTreeSet<&str> {
        self.outcomes
            .iter()
            .map(|o| o.task_id.as_str())
            .chain(self.faults.iter().map(|f| f.task_id.as_str()))
            .collect()
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"));
        let mut out = String::new();
        let _ = writeln!(out, "suite              {}", self.suite);
        let _ = writeln!(out, "episodes           {}", self.episodes);
        let _ = writeln!(out, "success rate (%)   {:.2}", self.success_rate);
        let _ = writeln!(out, "latency (s/step)   {}", opt(self.mean_latency_s, 3));
        let _ = writeln!(out, "cost (USD/step)    {}", opt(self.mean_cost_usd, 6));
        let _ = writeln!(out, "env steps          {}", self.env_steps);
        let _ = writeln!(out, "faults             {}", self.faults.len());
        out.push('\n');
        let _ = writeln!(out, "{:<20} {:>8}", "termination", "%");
        for (reason, pct) in &self.termination {
            let _ = writeln!(out, "{:<20} {:>8.2}", reason.as_str(), pct);
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>10} {:>8}",
            "type", "episodes", "successful", "rate"
        );
        for (ty, s) in &self.by_type {
            let _ = writeln!(
                out,
                "{:<6} {:>8} {:>10} {:>8.2}",
                ty.abbrev(),
                s.episodes,
                s.successful,
                s.success_rate
            );
        }
        out.push('\n');
        let w = self.outcomes.iter().map(|o| o.task_id.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(
            out,
            "{:<w$} {:<4} {:<18} {:>6} {:>5} {:>6}  signatures",
            "task", "type", "termination", "reward", "steps", "rounds"
        );
        for o in &self.outcomes {
            let sigs: Vec<String> = o.signatures.iter().map(|s| format!("{:?}", s.kind)).collect();
            let _ = writeln!(
                out,
                "{:<w$} {:<4} {:<18} {:>6} {:>5} {:>6}  {}",
                o.task_id,
                o.composition_type.abbrev(),
                o.termination_reason.as_str(),
                o.reward,
                o.env_steps,
                o.planning_rounds,
                if sigs.is_empty() {
                    "-".to_string()
                } else {
                    sigs.join(",")
                }
            );
        }
        for f in &self.faults {
            let _ = writeln!(out, "{:<w$} FAULT {}", f.task_id, f.message);
        }
        out
    }

    /// One row per episode.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "task_id",
            "composition_type",
            "termination_reason",
            "reward",
            "env_steps",
            "planning_rounds",
            "signatures",
        ]);
        for o in &self.outcomes {
            let sigs: Vec<String> = o.signatures.iter().map(|s| format!("{:?}", s.kind)).collect();
            let _ = w.write_record([
                o.task_id.as_str(),
                o.composition_type.abbrev(),
                o.termination_reason.as_str(),
                &o.reward.to_string(),
                &o.env_steps.to_string(),
                &o.planning_rounds.to_string(),
                &sigs.join(";"),
            ]);
        }
        for f in &self.faults {
            let _ = w.write_record([f.task_id.as_str(), "", "fault", "", "", "", f.message.as_str()]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgrRow {
    pub label: String,
    pub weak: f64,
    pub strong: f64,
    pub bridged: f64,
    /// Absent when the gap is zero.
    pub pgr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgrTable {
    pub rows: Vec<PgrRow>,
}

impl PgrTable {
    pub fn overall(&self) -> &PgrRow {
        self.rows.last().expect("overall row is always present")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>8} {:>8} {:>8} {:>8}\n",
            "type", "weak", "strong", "bridged", "PGR"
        );
        for r in &self.rows {
            let pgr = r.pgr.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}"));
            let _ = writeln!(
                out,
                "{:<8} {:>8.2} {:>8.2} {:>8.2} {:>8}",
                r.label, r.weak, r.strong, r.bridged, pgr
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }
}

/// Join three suite reports over the same task ids into per-type and overall PGR rows.
pub fn pgr_table(
    weak: &MetricsReport,
    strong: &MetricsReport,
    bridged: &MetricsReport,
) -> Result<PgrTable, MetricError> {
    let ids = weak.task_ids();
    for (name, other) in [("strong", strong), ("bridged", bridged)] {
        if other.task_ids() != ids {
            let diff: Vec<&str> = ids.symmetric_difference(&other.task_ids()).copied().collect();
            return Err(MetricError::TaskSetMismatch(format!(
                "weak and {name} reports differ on {}",
                diff.join(", ")
            )));
        }
    }
    let row = |label: &str, w: f64, s: f64, b: f64| PgrRow {
        label: label.to_string(),
        weak: w,
        strong: s,
        bridged: b,
        pgr: compute_pgr(w, s, b).ok(),
    };
    let rate = |r: &MetricsReport, ty: CompositionType| r.by_type.get(&ty).map_or(0.0, |s| s.success_rate);
    let mut rows = Vec::new();
    for ty in CompositionType::ALL {
        if weak.by_type.contains_key(&ty) || strong.by_type.contains_key(&ty) || bridged.by_type.contains_key(&ty) {
            rows.push(row(ty.abbrev(), rate(weak, ty), rate(strong, ty), rate(bridged, ty)));
        }
    }
    rows.push(row(
        "Overall",
        weak.success_rate,
        strong.success_rate,
        bridged.success_rate,
    ));
    Ok(PgrTable { rows })
}
