//! Experiment configuration (JSON) and model loading.
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};
use crate::tasks::Category;
use s2d_core::decoding::{DraftPolicy, PolicyKind, ThresholdSet};
use s2d_core::model::{CostProfile, ModelHandle, Vocabulary};
use s2d_core::tabular::{NGramTable, TabularModel};
use s2d_core::transformer::load_checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// A binary checkpoint of the toy transformer.
    Transformer { path: PathBuf },
    /// A JSON n-gram table presented as an `n_layers`-deep model.
    Ngram { path: PathBuf, n_layers: usize },
    /// One n-gram table per exit; the deepest exit is the model depth.
    NgramLadder { rungs: Vec<LadderRung> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderRung {
    pub exit: usize,
    pub path: PathBuf,
}

fn read_table(p: &Path) -> Result<NGramTable> {
    let text = std::fs::read_to_string(p).map_err(|e| BenchError::io(p, e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub model: ModelSource,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftSpec {
    pub model: ModelSource,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodKind {
    Autoregressive,
    /// Separate draft model.
    Speculative {
        policy: DraftPolicy,
        /// Per-target S2D thresholds replacing the policy's own.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        thresholds_by_target: BTreeMap<String, ThresholdSet>,
    },
    /// The target's own early exits draft for it.
    SelfSpeculative {
        ladder: Vec<usize>,
        policy: DraftPolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: MethodKind,
}

impl MethodSpec {
    pub fn autoregressive(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: MethodKind::Autoregressive,
        }
    }

    pub fn speculative(name: &str, policy: DraftPolicy) -> Self {
        Self {
            name: name.into(),
            kind: MethodKind::Speculative {
                policy,
                thresholds_by_target: BTreeMap::new(),
            },
        }
    }

    /// The policy used against `target`, with any per-target thresholds
    /// applied.
    pub fn policy_for(&self, target: &str) -> Option<DraftPolicy> {
        match &self.kind {
            MethodKind::Autoregressive => None,
            MethodKind::SelfSpeculative { policy, .. } => Some(policy.clone()),
            MethodKind::Speculative {
                policy,
                thresholds_by_target,
            } => {
                let mut p = policy.clone();
                if let (Some(t), PolicyKind::S2d { thresholds, .. }) =
                    (thresholds_by_target.get(target), &mut p.kind)
                {
                    *thresholds = t.clone();
                }
                Some(p)
            }
        }
    }
}

/// Threshold grid: the cartesian product of one axis per ladder exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Name of the S2D method whose thresholds are swept.
    pub method: String,
    pub axes: Vec<Vec<f64>>,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut t = prefix.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
        }
        out
    }
}

fn default_temperatures() -> Vec<f64> {
    vec![0.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub tasks: PathBuf,
    /// Restrict the suite to these categories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<Category>>,
    /// Keep at most this many items per category (in file order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items_per_category: Option<usize>,
    /// Overrides every item's `max_new_tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<usize>,
    pub targets: Vec<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<DraftSpec>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text)
            .map_err(|e| BenchError::Config(format!("experiment config: {e}")))?;
        c.base_dir = base_dir.into();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(BenchError::Config(m));
        if self.targets.is_empty() {
            return cfg("at least one target is required".into());
        }
        if self.methods.is_empty() {
            return cfg("at least one method is required".into());
        }
        if self.temperatures.is_empty() || self.seeds.is_empty() {
            return cfg("temperatures and seeds must be non-empty".into());
        }
        if let Some(t) = self
            .temperatures
            .iter()
            .find(|t| !t.is_finite() || **t < 0.0)
        {
            return cfg(format!("invalid temperature {t}"));
        }
        let mut names = HashSet::new();
        for t in &self.targets {
            if !names.insert(&t.name) {
                return cfg(format!("duplicate target name {:?}", t.name));
            }
        }
        let mut mnames = HashSet::new();
        for m in &self.methods {
            if !mnames.insert(&m.name) {
                return cfg(format!("duplicate method name {:?}", m.name));
            }
            if let MethodKind::Speculative {
                thresholds_by_target,
                ..
            } = &m.kind
            {
                if self.draft.is_none() {
                    return cfg(format!("method {:?} needs a draft model", m.name));
                }
                if let Some(k) = thresholds_by_target.keys().find(|k| !names.contains(k)) {
                    return cfg(format!(
                        "method {:?}: thresholds for unknown target {k:?}",
                        m.name
                    ));
                }
            }
        }
        if let Some(s) = &self.sweep {
            let m = self.methods.iter().find(|m| m.name == s.method);
            let ladder_len = match m.map(|m| &m.kind) {
                Some(MethodKind::Speculative { policy, .. }) => match &policy.kind {
                    PolicyKind::S2d { ladder, .. } => ladder.len(),
                    _ => return cfg(format!("sweep method {:?} is not an S2D method", s.method)),
                },
                _ => {
                    return cfg(format!(
                        "sweep method {:?} is not a speculative method",
                        s.method
                    ))
                }
            };
            if s.axes.len() != ladder_len {
                return cfg(format!(
                    "sweep grid has {} axes for a ladder of {} exits",
                    s.axes.len(),
                    ladder_len
                ));
            }
            if s.axes.iter().any(|a| a.is_empty()) {
                return cfg("sweep axes must be non-empty".into());
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical (key-sorted) JSON form; field order in the
    /// file does not matter.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(canonical_json(&v).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON text with object keys sorted at every level.
pub fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(a) => format!(
            "[{}]",
            a.iter().map(canonical_json).collect::<Vec<_>>().join(",")
        ),
        other => other.to_string(),
    }
}

pub fn load_model(source: &ModelSource, unit_cost: f64, base: &Path) -> Result<ModelHandle> {
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    match source {
        ModelSource::Transformer { path } => {
            let model = load_checkpoint(resolve(path))?;
            Ok(ModelHandle::from_model(model, unit_cost)?)
        }
        ModelSource::Ngram { path, n_layers } => {
            let table = read_table(&resolve(path))?;
            Ok(ModelHandle::from_model(
                TabularModel::single(table, *n_layers)?,
                unit_cost,
            )?)
        }
        ModelSource::NgramLadder { rungs } => {
            let depth = rungs.iter().map(|r| r.exit).max().unwrap_or(0);
            let tables = rungs
                .iter()
                .map(|r| Ok((r.exit, read_table(&resolve(&r.path))?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelHandle::from_model(
                TabularModel::ladder(depth, tables)?,
                unit_cost,
            )?)
        }
    }
}

/// Models of an experiment, loaded and checked to share one vocabulary.
#[derive(Debug, Clone)]
pub struct LoadedModels {
    pub targets: Vec<(TargetSpec, ModelHandle)>,
    pub draft: Option<ModelHandle>,
}

impl LoadedModels {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let targets = config
            .targets
            .iter()
            .map(|t| {
                Ok((
                    t.clone(),
                    load_model(&t.model, t.unit_cost, &config.base_dir)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let draft = config
            .draft
            .as_ref()
            .map(|d| load_model(&d.model, d.unit_cost, &config.base_dir))
            .transpose()?;
        let loaded = Self { targets, draft };
        loaded.check(config)?;
        Ok(loaded)
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.targets[0].1.vocab()
    }

    fn check(&self, config: &ExperimentConfig) -> Result<()> {
        let v = self.vocab();
        let all = self.targets.iter().map(|t| &t.1).chain(self.draft.as_ref());
        if all.clone().any(|m| m.vocab() != v) {
            return Err(BenchError::Config(
                "models do not share one vocabulary".into(),
            ));
        }
        for m in &config.methods {
            for (spec, target) in &self.targets {
                match &m.kind {
                    MethodKind::Autoregressive => {}
                    MethodKind::Speculative { .. } => {
                        let draft = self.draft.as_ref().expect("validated");
                        m.policy_for(&spec.name)
                            .expect("speculative")
                            .validate(draft)?;
                    }
                    MethodKind::SelfSpeculative { ladder, policy } => {
                        if let Some(e) = ladder
                            .iter()
                            .find(|e| !target.has_exit(**e) || **e >= target.n_layers())
                        {
                            return Err(BenchError::Config(format!(
                                "method {:?}: target {:?} has no draft exit {e}",
                                m.name, spec.name
                            )));
                        }
                        policy.validate(target)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cost_profiles(&self) -> BTreeMap<String, CostProfile> {
        let mut m: BTreeMap<String, CostProfile> = self
            .targets
            .iter()
            .map(|(s, h)| (s.name.clone(), h.cost_profile()))
            .collect();
        if let Some(d) = &self.draft {
            m.insert(DRAFT_KEY.into(), d.cost_profile());
        }
        m
    }
}

/// Key of the draft model in per-model maps.
pub const DRAFT_KEY: &str = "<draft>";
