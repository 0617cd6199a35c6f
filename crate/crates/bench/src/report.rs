//! Bench reports: rows, metadata, JSON/CSV emission and comparison.
//!
//! `report.json` and `report.csv` carry the same content. The CSV starts with
//! one `# metadata <json>` comment line; floats are written with 17
//! significant digits so they parse back to the identical value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use s2d_core::model::CostProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// One grid cell (target × method × temperature × seed) over all items.
    Cell,
    /// The same cell restricted to one task category.
    Category,
    /// Mean over targets of a method's cells ("Avg Speedup").
    Average,
}

impl RowKind {
    fn as_str(self) -> &'static str {
        match self {
            RowKind::Cell => "cell",
            RowKind::Category => "category",
            RowKind::Average => "average",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(RowKind::Cell),
            "category" => Ok(RowKind::Category),
            "average" => Ok(RowKind::Average),
            _ => Err(BenchError::Config(format!("unknown row kind {s:?}"))),
        }
    }
}

pub const ALL_CATEGORIES: &str = "all";
pub const ALL_TARGETS: &str = "avg";
pub const WALLCLOCK_NOT_MEASURED: &str =
    "wall-clock speedups not measured (requires wallclock on a single worker)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub target: String,
    pub method: String,
    pub category: String,
    pub temperature: f64,
    pub seed: u64,
    pub n_items: usize,
    pub mat: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub modeled_speedup: Option<f64>,
    /// Excluded from determinism comparisons.
    pub wallclock_speedup: Option<f64>,
    pub exit_histogram: BTreeMap<usize, u64>,
    pub error: Option<String>,
}

impl Row {
    pub fn key(&self) -> RowKey {
        RowKey {
            kind: self.kind,
            target: self.target.clone(),
            method: self.method.clone(),
            category: self.category.clone(),
            temperature_bits: self.temperature.to_bits(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub kind: RowKind,
    pub target: String,
    pub method: String,
    pub category: String,
    pub temperature_bits: u64,
    pub seed: u64,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/T={}/seed={}",
            self.kind.as_str(),
            self.target,
            self.method,
            self.category,
            f64::from_bits(self.temperature_bits),
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// `bench` or `sweep`.
    pub kind: String,
    pub version: String,
    pub config_name: String,
    pub config_hash: String,
    pub mat_convention: String,
    pub cost_profiles: BTreeMap<String, CostProfile>,
    /// Sweep only: best threshold tuple per target.
    #[serde(default)]
    pub best_thresholds: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub rows: Vec<Row>,
}

/// Version string: crate version plus `git describe` of the build tree when
/// available.
pub fn version_string() -> String {
    match option_env!("S2D_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

impl Report {
    /// The report as an untimed run would have produced it: wall-clock fields
    /// cleared and the "not measured" note present. Used for determinism checks.
    pub fn without_wallclock(&self) -> Report {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.wallclock_speedup = None;
        }
        if r.metadata.kind == "bench"
            && !r.metadata.notes.iter().any(|n| n == WALLCLOCK_NOT_MEASURED)
        {
            r.metadata.notes.push(WALLCLOCK_NOT_MEASURED.to_string());
        }
        r
    }

    pub fn cells(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.kind == RowKind::Cell)
    }

    pub fn cell(&self, target: &str, method: &str) -> Option<&Row> {
        self.cells()
            .find(|r| r.target == target && r.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(format!("report: {e}")))
    }

    pub fn to_csv(&self) -> Result<String> {
        let meta = serde_json::to_string(&self.metadata).expect("metadata serializes");
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.kind.as_str().to_string(),
                r.target.clone(),
                r.method.clone(),
                r.category.clone(),
                fmt_f64(r.temperature),
                r.seed.to_string(),
                r.n_items.to_string(),
                fmt_opt(r.mat),
                fmt_opt(r.acceptance_rate),
                fmt_opt(r.modeled_speedup),
                fmt_opt(r.wallclock_speedup),
                r.exit_histogram
                    .iter()
                    .map(|(k, v)| format!("{k}:{v}"))
                    .collect::<Vec<_>>()
                    .join(";"),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let body = String::from_utf8(
            w.into_inner()
                .map_err(|e| BenchError::Runtime(e.to_string()))?,
        )
        .expect("csv output is utf-8");
        Ok(format!("# metadata {meta}\n{body}"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let meta = first
            .strip_prefix("# metadata ")
            .ok_or_else(|| BenchError::Config("report csv: missing metadata line".into()))?;
        let metadata: Metadata = serde_json::from_str(meta)
            .map_err(|e| BenchError::Config(format!("report csv metadata: {e}")))?;
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let bad =
                |what: &str| BenchError::Config(format!("report csv: bad {what} in {:?}", rec));
            let opt = |i: usize| -> Result<Option<f64>> {
                let s = &rec[i];
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(CSV_HEADER[i]))
                }
            };
            let mut hist = BTreeMap::new();
            for part in rec[11].split(';').filter(|s| !s.is_empty()) {
                let (k, v) = part.split_once(':').ok_or_else(|| bad("exit_histogram"))?;
                hist.insert(
                    k.parse().map_err(|_| bad("exit_histogram"))?,
                    v.parse().map_err(|_| bad("exit_histogram"))?,
                );
            }
            rows.push(Row {
                kind: RowKind::parse(&rec[0])?,
                target: rec[1].to_string(),
                method: rec[2].to_string(),
                category: rec[3].to_string(),
                temperature: rec[4].parse().map_err(|_| bad("temperature"))?,
                seed: rec[5].parse().map_err(|_| bad("seed"))?,
                n_items: rec[6].parse().map_err(|_| bad("n_items"))?,
                mat: opt(7)?,
                acceptance_rate: opt(8)?,
                modeled_speedup: opt(9)?,
                wallclock_speedup: opt(10)?,
                exit_histogram: hist,
                error: (!rec[12].is_empty()).then(|| rec[12].to_string()),
            });
        }
        Ok(Self { metadata, rows })
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| BenchError::io(&json, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()?).map_err(|e| BenchError::io(&csv, e))?;
        Ok(())
    }

    /// Reads `report.json` from a directory, or the given file (`.json` or
    /// `.csv`).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join("report.json")
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| BenchError::io(&file, e))?;
        if file.extension().is_some_and(|e| e == "csv") {
            Self::from_csv(&text)
        } else {
            Self::from_json(&text)
        }
    }
}

const CSV_HEADER: [&str; 13] = [
    "kind",
    "target",
    "method",
    "category",
    "temperature",
    "seed",
    "n_items",
    "mat",
    "acceptance_rate",
    "modeled_speedup",
    "wallclock_speedup",
    "exit_histogram",
    "error",
];

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

// ----------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, PartialEq)]
pub enum Difference {
    OnlyInFirst(RowKey),
    OnlyInSecond(RowKey),
    Metric {
        key: RowKey,
        metric: &'static str,
        first: Option<f64>,
        second: Option<f64>,
    },
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |x: &Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
        match self {
            Difference::OnlyInFirst(k) => write!(f, "only in first:  {k}"),
            Difference::OnlyInSecond(k) => write!(f, "only in second: {k}"),
            Difference::Metric {
                key,
                metric,
                first,
                second,
            } => {
                let delta = match (first, second) {
                    (Some(a), Some(b)) => format!("{:+.6}", b - a),
                    _ => "n/a".into(),
                };
                write!(
                    f,
                    "{key} {metric}: {} -> {} ({delta})",
                    show(first),
                    show(second)
                )
            }
        }
    }
}

/// Row-by-row differences of the deterministic metrics (wall clock ignored).
pub fn compare(a: &Report, b: &Report) -> Vec<Difference> {
    let ia: BTreeMap<RowKey, &Row> = a.rows.iter().map(|r| (r.key(), r)).collect();
    let ib: BTreeMap<RowKey, &Row> = b.rows.iter().map(|r| (r.key(), r)).collect();
    let mut out = Vec::new();
    for (k, ra) in &ia {
        let Some(rb) = ib.get(k) else {
            out.push(Difference::OnlyInFirst(k.clone()));
            continue;
        };
        for (metric, x, y) in [
            ("mat", ra.mat, rb.mat),
            ("acceptance_rate", ra.acceptance_rate, rb.acceptance_rate),
            ("modeled_speedup", ra.modeled_speedup, rb.modeled_speedup),
        ] {
            if x.map(f64::to_bits) != y.map(f64::to_bits) {
                out.push(Difference::Metric {
                    key: k.clone(),
                    metric,
                    first: x,
                    second: y,
                });
            }
        }
    }
    out.extend(
        ib.keys()
            .filter(|k| !ia.contains_key(k))
            .cloned()
            .map(Difference::OnlyInSecond),
    );
    out
}
