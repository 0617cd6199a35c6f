//! Grid execution: every (target × method × temperature × seed × item)
//! decode, aggregated into report rows.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LoadedModels, MethodKind, MethodSpec, DRAFT_KEY};
use crate::error::{BenchError, Result};
use crate::report::{
    version_string, Metadata, Report, Row, RowKind, ALL_CATEGORIES, ALL_TARGETS,
    WALLCLOCK_NOT_MEASURED,
};
use crate::tasks::{load_tasks, Category, TaskItem, TaskSuite};
use s2d_core::decoding::{
    autoregressive_decode, self_speculative_decode, speculative_decode, DecodeTrace,
};
use s2d_core::exec::{self, ExecMode};
use s2d_core::metrics::{self, MAT_CONVENTION};
use s2d_core::model::{mix64, CostProfile, ModelHandle, Rng, SamplerConfig};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; `None` uses the pool default.
    pub threads: Option<usize>,
    pub exec: ExecMode,
    /// Time an autoregressive baseline per item and report wall-clock
    /// speedups. Only honoured on a single worker thread, where timings are
    /// not disturbed by concurrent cells.
    pub wallclock: bool,
    /// Write every decode trace to `<dir>/traces.jsonl`.
    pub trace_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            exec: ExecMode::default(),
            wallclock: false,
            trace_dir: None,
        }
    }
}

impl RunOptions {
    fn timing(&self) -> bool {
        self.wallclock && (self.threads == Some(1) || !self.exec.is_parallel())
    }
}

/// One decode of the grid, as archived in `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub target: String,
    pub method: String,
    pub temperature: f64,
    pub seed: u64,
    pub item_id: String,
    pub category: Category,
    pub trace: Option<DecodeTrace>,
    pub error: Option<String>,
}

/// The suite a config selects: category filter, per-category cap and token
/// budget override applied.
pub fn prepare_suite(config: &ExperimentConfig) -> Result<TaskSuite> {
    let mut suite = load_tasks(config.resolve(&config.tasks))?;
    if let Some(cats) = &config.categories {
        suite = suite.filter(cats);
    }
    if let Some(cap) = config.items_per_category {
        let mut seen: BTreeMap<Category, usize> = BTreeMap::new();
        suite.items.retain(|t| {
            let n = seen.entry(t.category).or_insert(0);
            *n += 1;
            *n <= cap
        });
    }
    if let Some(m) = config.max_new_tokens {
        for t in &mut suite.items {
            t.max_new_tokens = m;
        }
    }
    if suite.items.is_empty() {
        return Err(BenchError::Config("no tasks".into()));
    }
    Ok(suite)
}

/// Seed of one item's decode; shared by every method so endpoint
/// configurations see identical randomness.
pub fn item_seed(seed: u64, item_index: usize) -> u64 {
    mix64(seed ^ mix64(item_index as u64 + 1))
}

pub fn sampler_for(temperature: f64, seed: u64) -> SamplerConfig {
    if temperature == 0.0 {
        SamplerConfig::greedy()
    } else {
        SamplerConfig::new(temperature, seed)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn decode_with(
    method: &MethodSpec,
    target_name: &str,
    target: &ModelHandle,
    draft: Option<&ModelHandle>,
    prompt: &str,
    max_new_tokens: usize,
    temperature: f64,
    seed: u64,
) -> Result<DecodeTrace> {
    let tokens = target.vocab().encode_chars(prompt)?;
    let sampler = sampler_for(temperature, seed);
    let mut rng = Rng::new(seed);
    let trace = match &method.kind {
        MethodKind::Autoregressive => {
            autoregressive_decode(target, &tokens, max_new_tokens, &sampler, &mut rng)?
        }
        MethodKind::Speculative { .. } => {
            let draft = draft.ok_or_else(|| {
                BenchError::Config(format!("method {:?} needs a draft", method.name))
            })?;
            let policy = method.policy_for(target_name).expect("speculative method");
            speculative_decode(
                target,
                draft,
                &policy,
                &tokens,
                max_new_tokens,
                &sampler,
                &mut rng,
            )?
        }
        MethodKind::SelfSpeculative { ladder, policy } => self_speculative_decode(
            target,
            ladder,
            policy,
            &tokens,
            max_new_tokens,
            &sampler,
            &mut rng,
        )?,
    };
    Ok(trace)
}

struct Job<'a> {
    target: usize,
    method: &'a MethodSpec,
    temperature: f64,
    seed: u64,
    item: usize,
}

fn grid_jobs<'a>(
    config: &'a ExperimentConfig,
    suite: &TaskSuite,
    methods: &'a [MethodSpec],
) -> Vec<Job<'a>> {
    let mut jobs = Vec::new();
    for target in 0..config.targets.len() {
        for method in methods {
            for &temperature in &config.temperatures {
                for &seed in &config.seeds {
                    for item in 0..suite.items.len() {
                        jobs.push(Job {
                            target,
                            method,
                            temperature,
                            seed,
                            item,
                        });
                    }
                }
            }
        }
    }
    jobs
}

/// Runs every decode of the grid for `methods` (the config's own methods
/// unless a sweep substitutes them).
pub fn run_records(
    config: &ExperimentConfig,
    models: &LoadedModels,
    suite: &TaskSuite,
    methods: &[MethodSpec],
    opts: &RunOptions,
) -> Vec<(ItemRecord, Option<u64>)> {
    let jobs = grid_jobs(config, suite, methods);
    let timing = opts.timing();
    let baseline = MethodSpec::autoregressive("baseline");
    let run = |job: &Job| {
        let (spec, target) = &models.targets[job.target];
        let item: &TaskItem = &suite.items[job.item];
        let seed = item_seed(job.seed, job.item);
        let go = |m: &MethodSpec| {
            decode_with(
                m,
                &spec.name,
                target,
                models.draft.as_ref(),
                &item.prompt,
                item.max_new_tokens,
                job.temperature,
                seed,
            )
        };
        let result = go(job.method);
        let baseline_ns = if timing && result.is_ok() {
            go(&baseline).ok().map(|t| t.wall_ns)
        } else {
            None
        };
        let (trace, error) = match result {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        (
            ItemRecord {
                target: spec.name.clone(),
                method: job.method.name.clone(),
                temperature: job.temperature,
                seed: job.seed,
                item_id: item.id.clone(),
                category: item.category,
                trace,
                error,
            },
            baseline_ns,
        )
    };
    let body = || exec::map(opts.exec, &jobs, run);
    match opts.threads {
        Some(n) => exec::with_threads(n, body),
        None => body(),
    }
}

#[derive(Default)]
struct Acc {
    n: usize,
    mat: f64,
    acc: f64,
    speed: f64,
    wall: f64,
    wall_n: usize,
    hist: BTreeMap<usize, u64>,
    error: Option<String>,
}

impl Acc {
    fn add(
        &mut self,
        rec: &ItemRecord,
        baseline_ns: Option<u64>,
        ct: &CostProfile,
        cd: &CostProfile,
    ) {
        self.n += 1;
        let Some(trace) = &rec.trace else {
            if self.error.is_none() {
                self.error = Some(format!(
                    "{}: {}",
                    rec.item_id,
                    rec.error.as_deref().unwrap_or("decode failed")
                ));
            }
            return;
        };
        match metrics::mat(trace) {
            Ok(m) => self.mat += m,
            Err(e) => {
                self.error
                    .get_or_insert_with(|| format!("{}: {e}", rec.item_id));
                return;
            }
        }
        self.acc += metrics::acceptance_rate(trace).rate;
        self.speed += metrics::modeled_speedup(trace, ct, cd);
        if let Some(b) = baseline_ns {
            self.wall += b as f64 / trace.wall_ns as f64;
            self.wall_n += 1;
        }
        for (k, v) in metrics::exit_histogram(trace) {
            *self.hist.entry(k).or_insert(0) += v;
        }
    }

    fn row(&self, kind: RowKind, key: &(String, String, u64, u64), category: &str) -> Row {
        let ok = self.error.is_none();
        let mean = |s: f64| (ok && self.n > 0).then(|| s / self.n as f64);
        Row {
            kind,
            target: key.0.clone(),
            method: key.1.clone(),
            category: category.to_string(),
            temperature: f64::from_bits(key.2),
            seed: key.3,
            n_items: self.n,
            mat: mean(self.mat),
            acceptance_rate: mean(self.acc),
            modeled_speedup: mean(self.speed),
            wallclock_speedup: (ok && self.wall_n == self.n && self.n > 0)
                .then(|| self.wall / self.n as f64),
            exit_histogram: if ok {
                self.hist.clone()
            } else {
                BTreeMap::new()
            },
            error: self.error.clone(),
        }
    }
}

/// Aggregates item records into cell, per-category and average rows. Row
/// order follows the config: targets, then methods, temperatures, seeds.
pub fn aggregate(
    config: &ExperimentConfig,
    methods: &[MethodSpec],
    costs: &BTreeMap<String, CostProfile>,
    records: &[(ItemRecord, Option<u64>)],
) -> Vec<Row> {
    type Key = (String, String, u64, u64);
    let mut cells: BTreeMap<Key, Acc> = BTreeMap::new();
    let mut cats: BTreeMap<(Key, Category), Acc> = BTreeMap::new();
    for (rec, base) in records {
        let ct = &costs[&rec.target];
        let method = methods
            .iter()
            .find(|m| m.name == rec.method)
            .expect("record of a known method");
        let cd = match method.kind {
            MethodKind::Speculative { .. } => costs.get(DRAFT_KEY).unwrap_or(ct),
            _ => ct,
        };
        let key = (
            rec.target.clone(),
            rec.method.clone(),
            rec.temperature.to_bits(),
            rec.seed,
        );
        cells
            .entry(key.clone())
            .or_default()
            .add(rec, *base, ct, cd);
        cats.entry((key, rec.category))
            .or_default()
            .add(rec, *base, ct, cd);
    }

    let mut rows = Vec::new();
    let mut cat_rows = Vec::new();
    let mut avg_rows = Vec::new();
    let keys = |target: &str| {
        let mut ks = Vec::new();
        for m in methods {
            for t in &config.temperatures {
                for s in &config.seeds {
                    ks.push((target.to_string(), m.name.clone(), t.to_bits(), *s));
                }
            }
        }
        ks
    };
    for t in &config.targets {
        for key in keys(&t.name) {
            let Some(acc) = cells.get(&key) else { continue };
            rows.push(acc.row(RowKind::Cell, &key, ALL_CATEGORIES));
            for c in Category::ALL {
                if let Some(a) = cats.get(&(key.clone(), c)) {
                    cat_rows.push(a.row(RowKind::Category, &key, c.as_str()));
                }
            }
        }
    }
    for key in keys(ALL_TARGETS) {
        let per_target: Vec<&Row> = rows
            .iter()
            .filter(|r| r.method == key.1 && r.temperature.to_bits() == key.2 && r.seed == key.3)
            .collect();
        if per_target.is_empty() {
            continue;
        }
        let mean = |f: &dyn Fn(&Row) -> Option<f64>| {
            let v: Option<Vec<f64>> = per_target.iter().map(|r| f(r)).collect();
            v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        let error = per_target.iter().find_map(|r| r.error.clone());
        avg_rows.push(Row {
            kind: RowKind::Average,
            target: key.0.clone(),
            method: key.1.clone(),
            category: ALL_CATEGORIES.to_string(),
            temperature: f64::from_bits(key.2),
            seed: key.3,
            n_items: per_target.iter().map(|r| r.n_items).sum(),
            mat: mean(&|r| r.mat),
            acceptance_rate: mean(&|r| r.acceptance_rate),
            modeled_speedup: mean(&|r| r.modeled_speedup),
            wallclock_speedup: mean(&|r| r.wallclock_speedup),
            exit_histogram: BTreeMap::new(),
            error,
        });
    }
    rows.extend(cat_rows);
    rows.extend(avg_rows);
    rows
}

pub fn metadata(
    config: &ExperimentConfig,
    kind: &str,
    costs: BTreeMap<String, CostProfile>,
) -> Metadata {
    Metadata {
        kind: kind.to_string(),
        version: version_string(),
        config_name: config.name.clone(),
        config_hash: config.hash(),
        mat_convention: MAT_CONVENTION.to_string(),
        cost_profiles: costs,
        best_thresholds: BTreeMap::new(),
        notes: Vec::new(),
    }
}

fn write_traces(dir: &Path, records: &[(ItemRecord, Option<u64>)]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let path = dir.join("traces.jsonl");
    let mut f =
        std::io::BufWriter::new(fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?);
    for (rec, _) in records {
        let line = serde_json::to_string(rec).expect("records serialize");
        writeln!(f, "{line}").map_err(|e| BenchError::io(&path, e))?;
    }
    f.flush().map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<ItemRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| BenchError::Config(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// The full bench: one row per grid cell plus per-category and average rows.
pub fn run_bench(config: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let models = LoadedModels::load(config)?;
    let suite = prepare_suite(config)?;
    run_bench_with(config, &models, &suite, opts)
}

pub fn run_bench_with(
    config: &ExperimentConfig,
    models: &LoadedModels,
    suite: &TaskSuite,
    opts: &RunOptions,
) -> Result<Report> {
    let records = run_records(config, models, suite, &config.methods, opts);
    let costs = models.cost_profiles();
    let rows = aggregate(config, &config.methods, &costs, &records);
    let mut report = Report {
        metadata: metadata(config, "bench", costs),
        rows,
    };
    if !opts.timing() {
        report
            .metadata
            .notes
            .push(WALLCLOCK_NOT_MEASURED.to_string());
    }
    if let Some(dir) = &opts.trace_dir {
        let path = write_traces(dir, &records)?;
        verify_traces(config, &report, &path)?;
    }
    Ok(report)
}

/// Re-derives every row from archived traces and checks it matches the
/// report bit for bit, wall-clock fields excluded.
pub fn verify_traces(
    config: &ExperimentConfig,
    report: &Report,
    traces: impl AsRef<Path>,
) -> Result<()> {
    let records: Vec<(ItemRecord, Option<u64>)> = read_traces(traces)?
        .into_iter()
        .map(|r| (r, None))
        .collect();
    let rows = aggregate(
        config,
        &config.methods,
        &report.metadata.cost_profiles,
        &records,
    );
    let expected = report.without_wallclock().rows;
    if rows != expected {
        let first = rows
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .unwrap_or(rows.len().min(expected.len()));
        return Err(BenchError::Runtime(format!(
            "trace verification failed: row {first} differs from the archived traces"
        )));
    }
    Ok(())
}
