//! Sorted (multi-exit) loss, SGD training and perplexity.

use serde::{Deserialize, Serialize};

use super::config::TrainingMode;
use super::model::TinyTransformer;
use super::params::Params;
use crate::error::{ensure, Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::{Rng, TokenId};

fn check_batch(model: &TinyTransformer, batch: &[Vec<TokenId>]) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let max = model.config.max_context;
    let mut predictions = 0;
    for seq in batch {
        ensure!(
            seq.len() >= 2,
            Validation,
            "training sequences need at least 2 tokens"
        );
        if seq.len() > max {
            return Err(Error::ContextOverflow {
                len: seq.len(),
                max,
            });
        }
        ensure!(
            seq.iter().all(|t| t.index() < model.config.vocab_size),
            Validation,
            "token outside vocabulary"
        );
        predictions += seq.len() - 1;
    }
    Ok(predictions)
}

fn check_exits(model: &TinyTransformer, exits: &[usize]) -> Result<()> {
    ensure!(!exits.is_empty(), Config, "no exits requested");
    for &e in exits {
        ensure!(
            (1..=model.config.n_layers).contains(&e),
            Config,
            "exit {e} outside 1..={}",
            model.config.n_layers
        );
    }
    Ok(())
}

/// Mean next-token cross-entropy (pooled over positions and batch items) at
/// each of `exits`.
pub fn exit_losses(
    model: &TinyTransformer,
    batch: &[Vec<TokenId>],
    exits: &[usize],
) -> Result<Vec<f64>> {
    let n = check_batch(model, batch)?;
    check_exits(model, exits)?;
    let weighted: Vec<(usize, f64)> = exits.iter().map(|&e| (e, 0.0)).collect();
    let mut sums = vec![0.0; exits.len()];
    for seq in batch {
        for (s, l) in sums
            .iter_mut()
            .zip(model.sequence_loss(seq, &weighted, 0.0, None))
        {
            *s += l;
        }
    }
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// Mean over `ladder` exits of each exit's cross-entropy.
pub fn sorted_loss(
    model: &TinyTransformer,
    batch: &[Vec<TokenId>],
    ladder: &[usize],
) -> Result<f64> {
    let per_exit = exit_losses(model, batch, ladder)?;
    Ok(per_exit.iter().sum::<f64>() / per_exit.len() as f64)
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    /// `sum_e weight_e * loss_e`
    pub loss: f64,
    pub per_exit: Vec<f64>,
    pub grads: Params<f64>,
}

/// Weighted multi-exit loss and its exact gradient. Batch items are
/// processed with `exec` and reduced in order.
pub fn loss_and_grad(
    model: &TinyTransformer,
    batch: &[Vec<TokenId>],
    weighted_exits: &[(usize, f64)],
    exec: ExecMode,
) -> Result<LossGrad> {
    let n = check_batch(model, batch)?;
    let exits: Vec<usize> = weighted_exits.iter().map(|e| e.0).collect();
    check_exits(model, &exits)?;
    let scale = 1.0 / n as f64;
    let parts = exec::map(exec, batch, |seq| {
        let mut g = Params::zeros(&model.config);
        let l = model.sequence_loss(seq, weighted_exits, scale, Some(&mut g));
        (l, g)
    });
    let mut grads = Params::zeros(&model.config);
    let mut sums = vec![0.0; exits.len()];
    for (l, g) in parts {
        grads.add_assign(&g);
        for (s, x) in sums.iter_mut().zip(l) {
            *s += x;
        }
    }
    let per_exit: Vec<f64> = sums.into_iter().map(|s| s * scale).collect();
    let loss = per_exit
        .iter()
        .zip(weighted_exits)
        .map(|(l, (_, w))| l * w)
        .sum();
    Ok(LossGrad {
        loss,
        per_exit,
        grads,
    })
}

/// Exit weights for a training mode: the deepest ladder exit alone for SFT,
/// uniform `1/|ladder|` for SoFT.
pub fn mode_weights(model: &TinyTransformer, mode: TrainingMode) -> Vec<(usize, f64)> {
    match mode {
        TrainingMode::Sft => vec![(model.ladder.deepest(), 1.0)],
        TrainingMode::Soft => {
            let exits = model.ladder.exits();
            let w = 1.0 / exits.len() as f64;
            exits.iter().map(|&e| (e, w)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Rescale the gradient to this global norm when it is larger.
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            clip_norm: Some(1.0),
        }
    }
}

pub fn apply_sgd(model: &mut TinyTransformer, grads: &Params<f64>, sgd: &SgdConfig) {
    let mut step = sgd.learning_rate;
    if let Some(clip) = sgd.clip_norm {
        let norm = grads.norm();
        if norm > clip {
            step *= clip / norm;
        }
    }
    if step == 0.0 {
        return;
    }
    for (w, g) in model.params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi = (*wi as f64 - step * gi) as f32;
        }
    }
}

/// One gradient-descent step with the given exit weights; returns the
/// pre-update loss.
pub fn train_step_weighted(
    model: &mut TinyTransformer,
    batch: &[Vec<TokenId>],
    weighted_exits: &[(usize, f64)],
    sgd: &SgdConfig,
    exec: ExecMode,
) -> Result<f64> {
    let lg = loss_and_grad(model, batch, weighted_exits, exec)?;
    if let Some((i, l)) = lg.per_exit.iter().enumerate().find(|(_, l)| !l.is_finite()) {
        return Err(Error::NonFiniteLoss {
            loss: *l,
            exit: weighted_exits[i].0,
        });
    }
    if !lg.grads.norm().is_finite() {
        return Err(Error::NonFiniteLoss {
            loss: lg.loss,
            exit: model.ladder.deepest(),
        });
    }
    apply_sgd(model, &lg.grads, sgd);
    Ok(lg.loss)
}

/// One SFT or SoFT step; returns the pre-update loss.
pub fn train_step(
    model: &mut TinyTransformer,
    batch: &[Vec<TokenId>],
    mode: TrainingMode,
    sgd: &SgdConfig,
    exec: ExecMode,
) -> Result<f64> {
    let weights = mode_weights(model, mode);
    train_step_weighted(model, batch, &weights, sgd, exec)
}

/// `exp` of the mean next-token cross-entropy at `exit`. Sequences longer
/// than the context window are split into consecutive windows.
pub fn perplexity(model: &TinyTransformer, exit: usize, corpus: &[Vec<TokenId>]) -> Result<f64> {
    let max = model.config.max_context;
    let windows: Vec<Vec<TokenId>> = corpus
        .iter()
        .flat_map(|seq| {
            seq.chunks(max)
                .filter(|c| c.len() >= 2)
                .map(<[TokenId]>::to_vec)
        })
        .collect();
    ensure!(
        !windows.is_empty(),
        Validation,
        "corpus has no sequence of at least 2 tokens"
    );
    let ce = exit_losses(model, &windows, &[exit])?[0];
    Ok(ce.exp())
}

/// Random contiguous windows of `seq_len` tokens from `stream`.
pub fn sample_batch(
    stream: &[TokenId],
    batch_size: usize,
    seq_len: usize,
    rng: &mut Rng,
) -> Vec<Vec<TokenId>> {
    let span = stream.len().saturating_sub(seq_len) + 1;
    (0..batch_size)
        .map(|_| {
            let start = rng.below(span);
            stream[start..(start + seq_len).min(stream.len())].to_vec()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub mode: TrainingMode,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

/// Runs `opts.steps` steps on windows drawn from `stream`; returns the
/// per-step losses.
pub fn train(
    model: &mut TinyTransformer,
    stream: &[TokenId],
    opts: &TrainOptions,
    exec: ExecMode,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    ensure!(
        stream.len() >= 2,
        Validation,
        "training stream is too short"
    );
    let seq_len = opts.seq_len.min(model.config.max_context).min(stream.len());
    let mut rng = Rng::new(opts.seed);
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let batch = sample_batch(stream, opts.batch_size, seq_len, &mut rng);
        let loss = train_step(model, &batch, opts.mode, &opts.sgd, exec)?;
        on_step(step, loss);
        losses.push(loss);
    }
    model.training_mode = opts.mode;
    Ok(losses)
}
