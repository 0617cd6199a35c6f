//! Desk-scale training recipe: targets trained on the corpus, a draft
//! extracted from one target's first layers and fine-tuned over a ladder of
//! exits. Writes checkpoints and a ready-to-run experiment config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DraftSpec, ExperimentConfig, MethodSpec, ModelSource, SweepSpec, TargetSpec};
use crate::corpus::{generate, CORPUS_LINES, CORPUS_SEED};
use crate::error::{BenchError, Result};
use s2d_core::decoding::{DraftPolicy, Fallback, ThresholdSet};
use s2d_core::exec::ExecMode;
use s2d_core::model::{mix64, Vocabulary};
use s2d_core::transformer::{
    perplexity, save_checkpoint, train, SgdConfig, TinyTransformer, TrainOptions, TrainingMode,
    TransformerConfig,
};

/// The bundled task suite.
pub const BUNDLED_TASKS: &str = include_str!("../data/tasks.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRecipe {
    pub name: String,
    pub n_layers: usize,
    pub unit_cost: f64,
    pub steps: usize,
    /// Train with the sorted loss over these exits instead of the plain
    /// full-depth loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<usize>>,
    /// Further cost profiles benched as separate targets over the same
    /// checkpoint.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cost_variants: Vec<CostVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostVariant {
    pub name: String,
    pub unit_cost: f64,
}

fn soft() -> TrainingMode {
    TrainingMode::Soft
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftRecipe {
    /// Target whose first `keep_layers` layers seed the draft.
    pub from: String,
    pub keep_layers: usize,
    pub ladder: Vec<usize>,
    pub steps: usize,
    pub unit_cost: f64,
    #[serde(default = "soft")]
    pub mode: TrainingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchDefaults {
    pub max_draft_len: usize,
    pub s2d_thresholds: Vec<f64>,
    pub sweep_axes: Vec<Vec<f64>>,
    pub temperatures: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items_per_category: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecipe {
    /// Training text; the generated corpus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub dims: ModelDims,
    pub targets: Vec<TargetRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<DraftRecipe>,
    pub batch_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub bench: BenchDefaults,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl TrainRecipe {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut r: Self = serde_json::from_str(text)
            .map_err(|e| BenchError::Config(format!("training recipe: {e}")))?;
        r.base_dir = base_dir.into();
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(
            &text,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(BenchError::Config(m));
        if self.targets.is_empty() {
            return cfg("recipe needs at least one target".into());
        }
        if self.batch_size == 0 || self.seq_len < 2 {
            return cfg("batch_size must be positive and seq_len at least 2".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return cfg(format!("invalid learning rate {}", self.learning_rate));
        }
        let mut names: Vec<&str> = self
            .targets
            .iter()
            .flat_map(|t| {
                std::iter::once(t.name.as_str())
                    .chain(t.cost_variants.iter().map(|v| v.name.as_str()))
            })
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return cfg(format!("target name {:?} is used twice", w[0]));
        }
        if let Some(d) = &self.draft {
            let Some(src) = self.targets.iter().find(|t| t.name == d.from) else {
                return cfg(format!("draft source {:?} is not a recipe target", d.from));
            };
            if d.keep_layers == 0 || d.keep_layers > src.n_layers {
                return cfg(format!(
                    "draft keeps {} of {} layers",
                    d.keep_layers, src.n_layers
                ));
            }
            if d.ladder.last() != Some(&d.keep_layers) {
                return cfg(format!(
                    "draft ladder {:?} must end at {}",
                    d.ladder, d.keep_layers
                ));
            }
            if d.ladder.len() != self.bench.s2d_thresholds.len()
                || d.ladder.len() != self.bench.sweep_axes.len()
            {
                return cfg("bench thresholds and sweep axes must match the draft ladder".into());
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let v = serde_json::to_value(self).expect("recipe serializes");
        Sha256::digest(crate::config::canonical_json(&v).as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn corpus_text(&self) -> Result<String> {
        match &self.corpus {
            Some(p) => {
                let p = if p.is_absolute() {
                    p.clone()
                } else {
                    self.base_dir.join(p)
                };
                fs::read_to_string(&p).map_err(|e| BenchError::io(&p, e))
            }
            None => Ok(generate(CORPUS_SEED, CORPUS_LINES)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub n_layers: usize,
    pub mode: TrainingMode,
    pub steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    /// Held-out perplexity at each trained exit.
    pub perplexity: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub recipe_hash: String,
    pub seed: u64,
    pub models: Vec<ModelSummary>,
}

fn tail_mean(losses: &[f64]) -> f64 {
    let tail = &losses[losses.len().saturating_sub(50)..];
    if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Trains every model of the recipe and writes `<name>.ckpt`, `draft.ckpt`,
/// `tasks.jsonl`, `experiment.json` and `train_summary.json` into `out`.
/// `mode_override` replaces the draft's training mode.
pub fn run_recipe(
    recipe: &TrainRecipe,
    out: &Path,
    seed_override: Option<u64>,
    mode_override: Option<TrainingMode>,
    exec: ExecMode,
    log: &mut dyn FnMut(&str),
) -> Result<TrainSummary> {
    let seed = seed_override.unwrap_or(recipe.seed);
    let text = recipe.corpus_text()?;
    let vocab = Vocabulary::from_text(&text)?;
    let stream = vocab.encode_chars(&text)?;
    // last 5% held out for perplexity
    let split = stream.len() * 19 / 20;
    let (train_stream, held_out) = stream.split_at(split);
    let held: Vec<_> = held_out
        .chunks(recipe.dims.max_context)
        .map(<[_]>::to_vec)
        .collect();
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;

    let sgd = SgdConfig {
        learning_rate: recipe.learning_rate,
        clip_norm: recipe.clip_norm,
    };
    let mut summaries = Vec::new();
    let mut trained: Vec<(String, TinyTransformer)> = Vec::new();
    for (i, t) in recipe.targets.iter().enumerate() {
        let config = TransformerConfig {
            n_layers: t.n_layers,
            d_model: recipe.dims.d_model,
            n_heads: recipe.dims.n_heads,
            d_ff: recipe.dims.d_ff,
            max_context: recipe.dims.max_context,
            vocab_size: vocab.size(),
            init_seed: mix64(seed ^ mix64(i as u64 + 1)),
        };
        let mut model = TinyTransformer::init(config, vocab.clone())?;
        let mode = match &t.ladder {
            Some(l) => {
                model = model.with_ladder(l.clone())?;
                TrainingMode::Soft
            }
            None => TrainingMode::Sft,
        };
        let opts = TrainOptions {
            mode,
            steps: t.steps,
            batch_size: recipe.batch_size,
            seq_len: recipe.seq_len,
            sgd,
            seed: mix64(seed ^ mix64(100 + i as u64)),
        };
        let summary = fit(&mut model, &t.name, train_stream, &held, &opts, exec, log)?;
        summaries.push(summary);
        save_checkpoint(&model, out.join(format!("{}.ckpt", t.name)))?;
        trained.push((t.name.clone(), model));
    }

    if let Some(d) = &recipe.draft {
        let source = &trained
            .iter()
            .find(|(n, _)| *n == d.from)
            .expect("validated")
            .1;
        let mut draft = source
            .extract_prefix(d.keep_layers)?
            .with_ladder(d.ladder.clone())?;
        let mode = mode_override.unwrap_or(d.mode);
        let opts = TrainOptions {
            mode,
            steps: d.steps,
            batch_size: recipe.batch_size,
            seq_len: recipe.seq_len,
            sgd,
            seed: mix64(seed ^ mix64(999)),
        };
        let summary = fit(&mut draft, "draft", train_stream, &held, &opts, exec, log)?;
        summaries.push(summary);
        save_checkpoint(&draft, out.join("draft.ckpt"))?;
    }

    let tasks = out.join("tasks.jsonl");
    fs::write(&tasks, BUNDLED_TASKS).map_err(|e| BenchError::io(&tasks, e))?;
    let exp = experiment_for(recipe);
    let exp_path = out.join("experiment.json");
    fs::write(
        &exp_path,
        serde_json::to_string_pretty(&exp).expect("config serializes"),
    )
    .map_err(|e| BenchError::io(&exp_path, e))?;
    let summary = TrainSummary {
        recipe_hash: recipe.hash(),
        seed,
        models: summaries,
    };
    let sp = out.join("train_summary.json");
    fs::write(
        &sp,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| BenchError::io(&sp, e))?;
    Ok(summary)
}

fn fit(
    model: &mut TinyTransformer,
    name: &str,
    stream: &[s2d_core::model::TokenId],
    held: &[Vec<s2d_core::model::TokenId>],
    opts: &TrainOptions,
    exec: ExecMode,
    log: &mut dyn FnMut(&str),
) -> Result<ModelSummary> {
    let every = (opts.steps / 10).max(1);
    let mut window = Vec::new();
    let losses = train(model, stream, opts, exec, |step, loss| {
        window.push(loss);
        if (step + 1) % every == 0 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            log(&format!(
                "{name}: step {}/{} loss {mean:.4}",
                step + 1,
                opts.steps
            ));
            window.clear();
        }
    })?;
    let exits = model.ladder().exits().to_vec();
    let perplexity = exits
        .iter()
        .map(|&e| Ok((e, perplexity(model, e, held)?)))
        .collect::<Result<Vec<_>>>()?;
    log(&format!("{name}: held-out perplexity {perplexity:?}"));
    Ok(ModelSummary {
        name: name.to_string(),
        n_layers: model.config().n_layers,
        mode: opts.mode,
        steps: opts.steps,
        first_loss: losses.first().copied().unwrap_or(f64::NAN),
        last_loss: tail_mean(&losses),
        perplexity,
    })
}

/// The experiment config matching a recipe's outputs: autoregressive
/// baseline, fixed-exit speculative decoding at every ladder exit, and S2D.
pub fn experiment_for(recipe: &TrainRecipe) -> ExperimentConfig {
    let b = &recipe.bench;
    let mut methods = vec![MethodSpec::autoregressive("AR")];
    let mut sweep = None;
    if let Some(d) = &recipe.draft {
        for &e in &d.ladder {
            methods.push(MethodSpec::speculative(
                &format!("L{e}+SD"),
                DraftPolicy::fixed_exit(e, b.max_draft_len),
            ));
        }
        let thresholds = ThresholdSet::new(b.s2d_thresholds.clone()).expect("validated thresholds");
        methods.push(MethodSpec::speculative(
            "S2D",
            DraftPolicy::s2d(
                d.ladder.clone(),
                thresholds,
                Fallback::StopDraft,
                b.max_draft_len,
            ),
        ));
        sweep = Some(SweepSpec {
            method: "S2D".into(),
            axes: b.sweep_axes.clone(),
        });
    }
    ExperimentConfig {
        name: "desk".into(),
        tasks: "tasks.jsonl".into(),
        categories: None,
        items_per_category: b.items_per_category,
        max_new_tokens: None,
        targets: recipe
            .targets
            .iter()
            .flat_map(|t| {
                let model = ModelSource::Transformer {
                    path: format!("{}.ckpt", t.name).into(),
                };
                std::iter::once((t.name.clone(), t.unit_cost))
                    .chain(
                        t.cost_variants
                            .iter()
                            .map(|v| (v.name.clone(), v.unit_cost)),
                    )
                    .map(move |(name, unit_cost)| TargetSpec {
                        name,
                        model: model.clone(),
                        unit_cost,
                    })
            })
            .collect(),
        draft: recipe.draft.as_ref().map(|d| DraftSpec {
            model: ModelSource::Transformer {
                path: "draft.ckpt".into(),
            },
            unit_cost: d.unit_cost,
        }),
        methods,
        temperatures: b.temperatures.clone(),
        seeds: vec![0],
        output_dir: None,
        sweep,
        base_dir: PathBuf::new(),
    }
}
