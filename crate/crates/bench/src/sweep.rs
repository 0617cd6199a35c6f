//! Threshold sweep: one S2D method evaluated at every tuple of a grid.

use std::collections::BTreeMap;

use crate::config::{ExperimentConfig, LoadedModels, MethodKind, MethodSpec};
use crate::error::{BenchError, Result};
use crate::report::{Report, RowKind};
use crate::runner::{aggregate, metadata, prepare_suite, run_records, RunOptions};
use crate::tasks::TaskSuite;
use s2d_core::decoding::{PolicyKind, ThresholdSet};

pub fn tuple_label(t: &[f64]) -> String {
    let parts: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(","))
}

/// `base` with its S2D thresholds replaced by `tuple`.
pub fn with_thresholds(base: &MethodSpec, tuple: &[f64]) -> Result<MethodSpec> {
    let mut m = base.clone();
    let MethodKind::Speculative {
        policy,
        thresholds_by_target,
    } = &mut m.kind
    else {
        return Err(BenchError::Config(format!(
            "method {:?} is not speculative",
            base.name
        )));
    };
    let PolicyKind::S2d {
        ladder, thresholds, ..
    } = &mut policy.kind
    else {
        return Err(BenchError::Config(format!(
            "method {:?} is not an S2D method",
            base.name
        )));
    };
    if ladder.len() != tuple.len() {
        return Err(BenchError::Config(format!(
            "threshold tuple {} does not match ladder {:?}",
            tuple_label(tuple),
            ladder
        )));
    }
    *thresholds = ThresholdSet::new(tuple.to_vec())?;
    thresholds_by_target.clear();
    m.name = format!("{}{}", base.name, tuple_label(tuple));
    Ok(m)
}

/// Runs the sweep declared in `config.sweep`.
pub fn threshold_sweep(config: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| BenchError::Config("config has no sweep section".into()))?;
    let models = LoadedModels::load(config)?;
    let suite = prepare_suite(config)?;
    sweep_grid(config, &models, &suite, &spec.method, &spec.grid(), opts)
}

/// One cell per (target, tuple, temperature, seed); rows sorted by target
/// (config order) then modeled speedup, best first. The best tuple per
/// target (mean modeled speedup over temperatures and seeds; earliest grid
/// entry on ties) goes into the metadata.
pub fn sweep_grid(
    config: &ExperimentConfig,
    models: &LoadedModels,
    suite: &TaskSuite,
    method: &str,
    grid: &[Vec<f64>],
    opts: &RunOptions,
) -> Result<Report> {
    if grid.is_empty() {
        return Err(BenchError::Config("empty threshold grid".into()));
    }
    let base = config
        .methods
        .iter()
        .find(|m| m.name == method)
        .ok_or_else(|| BenchError::Config(format!("unknown sweep method {method:?}")))?;
    let methods = grid
        .iter()
        .map(|t| with_thresholds(base, t))
        .collect::<Result<Vec<_>>>()?;
    for m in &methods {
        m.policy_for("")
            .expect("speculative")
            .validate(models.draft.as_ref().expect("validated"))?;
    }
    let records = run_records(config, models, suite, &methods, opts);
    let costs = models.cost_profiles();
    let mut rows: Vec<_> = aggregate(config, &methods, &costs, &records)
        .into_iter()
        .filter(|r| r.kind == RowKind::Cell)
        .collect();

    let mut best = BTreeMap::new();
    for t in &config.targets {
        let mut top: Option<(f64, usize)> = None;
        for (i, m) in methods.iter().enumerate() {
            let v: Option<Vec<f64>> = rows
                .iter()
                .filter(|r| r.target == t.name && r.method == m.name)
                .map(|r| r.modeled_speedup)
                .collect();
            let Some(v) = v.filter(|v| !v.is_empty()) else {
                continue;
            };
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            if top.is_none_or(|(b, _)| mean > b) {
                top = Some((mean, i));
            }
        }
        if let Some((_, i)) = top {
            best.insert(t.name.clone(), grid[i].clone());
        }
    }

    let target_pos = |name: &str| {
        config
            .targets
            .iter()
            .position(|t| t.name == name)
            .unwrap_or(usize::MAX)
    };
    let method_pos = |name: &str| {
        methods
            .iter()
            .position(|m| m.name == name)
            .unwrap_or(usize::MAX)
    };
    rows.sort_by(|a, b| {
        target_pos(&a.target)
            .cmp(&target_pos(&b.target))
            .then_with(|| {
                let (x, y) = (
                    a.modeled_speedup.unwrap_or(f64::NEG_INFINITY),
                    b.modeled_speedup.unwrap_or(f64::NEG_INFINITY),
                );
                y.total_cmp(&x)
            })
            .then_with(|| method_pos(&a.method).cmp(&method_pos(&b.method)))
            .then_with(|| a.temperature.total_cmp(&b.temperature))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    let mut meta = metadata(config, "sweep", costs);
    meta.best_thresholds = best;
    Ok(Report {
        metadata: meta,
        rows,
    })
}
