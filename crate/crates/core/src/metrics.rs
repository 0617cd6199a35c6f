//! Acceptance metrics and the analytical speedup model.
//!
//! MAT counts the correction/bonus token: every round contributes
//! `accepted + 1`, so a perfect draft of length K scores K + 1. A round that
//! ends on an accepted `<eos>` has no bonus token and contributes `accepted`.
//! The modeled cost of a run is one full target forward per round plus every
//! draft layer evaluated, each weighted by its model's unit cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeTrace;
use crate::error::{Error, Result};
use crate::model::CostProfile;

pub const MAT_CONVENTION: &str = "MAT = mean over verification rounds of (accepted + 1), bonus/correction token included; a round ending on an accepted <eos> contributes accepted";

/// Mean tokens emitted per verification round.
pub fn mat(trace: &DecodeTrace) -> Result<f64> {
    if trace.rounds.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let emitted: usize = trace.rounds.iter().map(|r| r.emitted()).sum();
    Ok(emitted as f64 / trace.rounds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub rate: f64,
    /// Set when nothing was drafted; `rate` is then 0.
    pub no_drafts: bool,
}

pub fn acceptance_rate(trace: &DecodeTrace) -> AcceptanceRate {
    let drafted = trace.drafted();
    if drafted == 0 {
        return AcceptanceRate {
            rate: 0.0,
            no_drafts: true,
        };
    }
    AcceptanceRate {
        rate: trace.accepted() as f64 / drafted as f64,
        no_drafts: false,
    }
}

/// Modeled cost of the run: `sum draft probe costs + rounds * target full cost`.
pub fn modeled_cost(
    trace: &DecodeTrace,
    cost_target: &CostProfile,
    cost_draft: &CostProfile,
) -> f64 {
    trace.cost.draft_layer_units as f64 * cost_draft.unit_cost
        + trace.rounds.len() as f64 * cost_target.full()
}

/// Autoregressive cost of the same output divided by the modeled cost.
pub fn modeled_speedup(
    trace: &DecodeTrace,
    cost_target: &CostProfile,
    cost_draft: &CostProfile,
) -> f64 {
    let cost = modeled_cost(trace, cost_target, cost_draft);
    if cost == 0.0 {
        return 1.0;
    }
    trace.output.len() as f64 * cost_target.full() / cost
}

/// Baseline wall time over method wall time. Hardware-dependent; reported,
/// never asserted.
pub fn wallclock_speedup(baseline: &DecodeTrace, method: &DecodeTrace) -> Result<f64> {
    if baseline.wall_ns == 0 || method.wall_ns == 0 {
        return Err(Error::ZeroElapsed);
    }
    Ok(baseline.wall_ns as f64 / method.wall_ns as f64)
}

/// Number of drafted tokens produced at each exit depth.
pub fn exit_histogram(trace: &DecodeTrace) -> BTreeMap<usize, u64> {
    let mut h = BTreeMap::new();
    for c in trace.rounds.iter().flat_map(|r| &r.candidates) {
        *h.entry(c.exit_depth).or_insert(0) += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mat: f64,
    pub acceptance_rate: f64,
    pub modeled_speedup: f64,
    pub wallclock_speedup: Option<f64>,
    pub exit_histogram: BTreeMap<usize, u64>,
}

impl RunMetrics {
    pub fn from_trace(
        trace: &DecodeTrace,
        cost_target: &CostProfile,
        cost_draft: &CostProfile,
        baseline: Option<&DecodeTrace>,
    ) -> Result<Self> {
        Ok(Self {
            mat: mat(trace)?,
            acceptance_rate: acceptance_rate(trace).rate,
            modeled_speedup: modeled_speedup(trace, cost_target, cost_draft),
            wallclock_speedup: baseline.map(|b| wallclock_speedup(b, trace)).transpose()?,
            exit_histogram: exit_histogram(trace),
        })
    }
}
