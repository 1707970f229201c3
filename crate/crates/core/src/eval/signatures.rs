use serde::{Deserialize, Serialize};

use super::{Ending, EventKind, TrajectoryRecord};
use crate::env_sim::HOME;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureKind {
    RepeatedIdenticalAction,
    AppOscillation,
    ZeroProgressStop,
}

/// A detected failure pattern spanning events `start..=end` (by `seq`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSignature {
    pub kind: SignatureKind,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureThresholds {
    pub repeats: usize,
    pub switches: usize,
}

impl Default for SignatureThresholds {
    fn default() -> Self {
        Self {
            repeats: 4,
            switches: 4,
        }
    }
}

pub fn scan_signatures(record: &TrajectoryRecord) -> Vec<FailureSignature> {
    scan_signatures_with(record, SignatureThresholds::default())
}

pub fn scan_signatures_with(record: &TrajectoryRecord, t: SignatureThresholds) -> Vec<FailureSignature> {
    let mut out = Vec::new();

    let steps: Vec<_> = record.env_steps().collect();
    let mut i = 0;
    while i < steps.len() {
        let mut j = i;
        while j + 1 < steps.len() && steps[j + 1].1 == steps[i].1 {
            j += 1;
        }
        if j - i + 1 >= t.repeats {
            out.push(FailureSignature {
                kind: SignatureKind::RepeatedIdenticalAction,
                start: steps[i].0.seq,
                end: steps[j].0.seq,
            });
        }
        i = j + 1;
    }

    // Visits: maximal runs of env steps with the same foreground app and the
    // same goal progress, launcher excluded.
    struct Visit<'a> {
        app: &'a str,
        progress: usize,
        start: u64,
        end: u64,
    }
    let mut visits: Vec<Visit> = Vec::new();
    for e in &record.events {
        let EventKind::EnvStep {
            foreground, progress, ..
        } = &e.kind
        else {
            continue;
        };
        if foreground == HOME {
            continue;
        }
        match visits.last_mut() {
            Some(v) if v.app == foreground && v.progress == *progress => v.end = e.seq,
            _ => visits.push(Visit {
                app: foreground,
                progress: *progress,
                start: e.seq,
                end: e.seq,
            }),
        }
    }
    let mut s = 0;
    while s + 1 < visits.len() {
        let ok_pair = |a: &Visit, b: &Visit| a.app != b.app && a.progress == b.progress;
        if !ok_pair(&visits[s], &visits[s + 1]) {
            s += 1;
            continue;
        }
        let mut e = s + 1;
        while e + 1 < visits.len() && visits[e + 1].app == visits[e - 1].app && ok_pair(&visits[e], &visits[e + 1]) {
            e += 1;
        }
        if e - s >= t.switches {
            out.push(FailureSignature {
                kind: SignatureKind::AppOscillation,
                start: visits[s].start,
                end: visits[e].end,
            });
            s = e;
        } else {
            s += 1;
        }
    }

    if record.ending == Ending::Done && steps.is_empty() {
        let seq = record.events.last().map_or(0, |e| e.seq);
        out.push(FailureSignature {
            kind: SignatureKind::ZeroProgressStop,
            start: seq,
            end: seq,
        });
    }
    out
}
