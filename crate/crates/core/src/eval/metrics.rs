use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrajectoryRecord;

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub input: f64,
    pub output: f64,
}

/// Backend identity → rates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PricingTable(pub BTreeMap<String, Rate>);

impl PricingTable {
    pub fn with(mut self, identity: impl Into<String>, input: f64, output: f64) -> Self {
        self.0.insert(identity.into(), Rate { input, output });
        self
    }

    pub fn check(&self) -> Result<(), MetricError> {
        for (id, r) in &self.0 {
            if !(r.input >= 0.0 && r.output >= 0.0) {
                return Err(MetricError::NegativeRate(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no pricing for backend `{0}`")]
    MissingPricing(String),
    #[error("negative rate for backend `{0}`")]
    NegativeRate(String),
    #[error("strong ceiling equals weak baseline; gap is zero")]
    ZeroGap,
    #[error("task sets differ: {0}")]
    TaskSetMismatch(String),
}

/// Token totals per backend.
pub(crate) fn token_totals<'a>(
    records: impl IntoIterator<Item = &'a TrajectoryRecord>,
) -> BTreeMap<String, (u64, u64)> {
    let mut totals: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in records {
        for (e, backend) in r.model_calls() {
            let t = totals.entry(backend.to_string()).or_default();
            t.0 += e.tokens_in;
            t.1 += e.tokens_out;
        }
    }
    totals
}

pub(crate) fn total_cost(totals: &BTreeMap<String, (u64, u64)>, pricing: &PricingTable) -> Result<f64, MetricError> {
    let mut usd = 0.0;
    for (backend, (tin, tout)) in totals {
        let rate = pricing
            .0
            .get(backend)
            .ok_or_else(|| MetricError::MissingPricing(backend.clone()))?;
        usd += (*tin as f64 * rate.input + *tout as f64 * rate.output) / 1e6;
    }
    Ok(usd)
}

/// Mean model cost per environment step in USD. `None` when calls were
/// made but no step was taken.
pub fn compute_cost(record: &TrajectoryRecord, pricing: &PricingTable) -> Result<Option<f64>, MetricError> {
    let totals = token_totals([record]);
    let usd = total_cost(&totals, pricing)?;
    if totals.is_empty() {
        return Ok(Some(0.0));
    }
    let steps = record.env_step_count();
    Ok((steps > 0).then(|| usd / steps as f64))
}

/// Mean inference seconds per environment step; `None` for zero steps.
pub fn compute_latency(record: &TrajectoryRecord) -> Option<f64> {
    let steps = record.env_step_count();
    if steps == 0 {
        return None;
    }
    let ms: u64 = record.model_calls().map(|(e, _)| e.infer_ms).sum();
    Some(ms as f64 / 1000.0 / steps as f64)
}

/// Share of the weak-to-strong gap recovered, in percent.
pub fn compute_pgr(weak: f64, strong_ceiling: f64, bridged: f64) -> Result<f64, MetricError> {
    let gap = strong_ceiling - weak;
    if gap == 0.0 {
        return Err(MetricError::ZeroGap);
    }
    Ok(100.0 * (bridged - weak) / gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgr_anchors() {
        assert_eq!(compute_pgr(57.0, 80.0, 57.0).unwrap(), 0.0);
        assert_eq!(compute_pgr(57.0, 80.0, 80.0).unwrap(), 100.0);
        assert_eq!(compute_pgr(50.0, 50.0, 60.0), Err(MetricError::ZeroGap));
        assert!((compute_pgr(57.0, 80.0, 77.0).unwrap() - 86.956_521_7).abs() < 1e-6);
    }

    #[test]
    fn negative_rates_rejected() {
        let p = PricingTable::default().with("x", -1.0, 0.0);
        assert_eq!(p.check(), Err(MetricError::NegativeRate("x".into())));
    }
}
