//! Count-based n-gram models with add-alpha smoothing.
//!
//! These are exact, fully enumerable stand-ins for draft and target models:
//! `p(t | ctx) = (count(ctx, t) + alpha) / (count(ctx, .) + alpha * |V|)`.
//! Contexts shorter than `order - 1` are left-padded with `<bos>`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{CostProfile, LanguageModel, ModelHandle, ProbDist, TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct NGramTable {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: BTreeMap<Vec<TokenId>, Vec<f64>>,
}

/// JSON form: `{order, alpha, vocab, counts: [[[ctx...], [count per token]], ...]}`.
#[derive(Serialize, Deserialize)]
struct TableRepr {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: Vec<(Vec<TokenId>, Vec<f64>)>,
}

impl TryFrom<TableRepr> for NGramTable {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        let mut table = NGramTable::empty(r.order, r.alpha, r.vocab)?;
        for (ctx, counts) in r.counts {
            table.set_counts(&ctx, counts)?;
        }
        Ok(table)
    }
}

impl From<NGramTable> for TableRepr {
    fn from(t: NGramTable) -> Self {
        TableRepr {
            order: t.order,
            alpha: t.alpha,
            vocab: t.vocab,
            counts: t.counts.into_iter().collect(),
        }
    }
}

impl NGramTable {
    pub fn empty(order: usize, alpha: f64, vocab: Vocabulary) -> Result<Self> {
        ensure!(order >= 1, Validation, "n-gram order must be at least 1");
        ensure!(
            alpha > 0.0 && alpha.is_finite(),
            Validation,
            "alpha must be positive, got {alpha}"
        );
        Ok(Self {
            order,
            alpha,
            vocab,
            counts: BTreeMap::new(),
        })
    }

    /// Counts every position that has a full `order - 1` token history.
    pub fn build(
        corpus: &[Vec<TokenId>],
        order: usize,
        alpha: f64,
        vocab: Vocabulary,
    ) -> Result<Self> {
        let mut table = Self::empty(order, alpha, vocab)?;
        let v = table.vocab.size();
        let ctx_len = order - 1;
        for seq in corpus {
            if let Some(t) = seq.iter().find(|t| t.index() >= v) {
                return Err(Error::Validation(format!(
                    "corpus token {t} outside vocabulary"
                )));
            }
            for i in ctx_len..seq.len() {
                let row = table
                    .counts
                    .entry(seq[i - ctx_len..i].to_vec())
                    .or_insert_with(|| vec![0.0; v]);
                row[seq[i].index()] += 1.0;
            }
        }
        Ok(table)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Replaces the count row of one context. Used to construct tables with
    /// prescribed conditionals.
    pub fn set_counts(&mut self, context: &[TokenId], counts: Vec<f64>) -> Result<()> {
        ensure!(
            context.len() == self.order - 1,
            Validation,
            "context length {} does not match order {}",
            context.len(),
            self.order
        );
        ensure!(
            counts.len() == self.vocab.size(),
            Validation,
            "count row has {} entries for a vocabulary of {}",
            counts.len(),
            self.vocab.size()
        );
        ensure!(
            counts.iter().all(|c| c.is_finite() && *c >= 0.0),
            Validation,
            "counts must be finite and non-negative"
        );
        ensure!(
            context.iter().all(|t| self.vocab.contains(*t)),
            Validation,
            "context token outside vocabulary"
        );
        self.counts.insert(context.to_vec(), counts);
        Ok(())
    }

    /// The `order - 1` token history used for `context`, bos-padded on the left.
    pub fn history(&self, context: &[TokenId]) -> Vec<TokenId> {
        let n = self.order - 1;
        let tail = &context[context.len().saturating_sub(n)..];
        let mut h = vec![self.vocab.bos(); n - tail.len()];
        h.extend_from_slice(tail);
        h
    }

    pub fn conditional(&self, context: &[TokenId]) -> ProbDist {
        let v = self.vocab.size();
        let denom_alpha = self.alpha * v as f64;
        let probs = match self.counts.get(&self.history(context)) {
            Some(row) => {
                let total: f64 = row.iter().sum();
                row.iter()
                    .map(|c| (c + self.alpha) / (total + denom_alpha))
                    .collect()
            }
            None => vec![1.0 / v as f64; v],
        };
        // exact by construction up to rounding
        ProbDist::normalized(probs).expect("smoothed conditional is positive")
    }

    pub fn log_conditional(&self, context: &[TokenId]) -> Vec<f64> {
        self.conditional(context)
            .probs()
            .iter()
            .map(|p| p.ln())
            .collect()
    }

    /// Probability of emitting `continuation` after `prompt`.
    pub fn sequence_prob(&self, prompt: &[TokenId], continuation: &[TokenId]) -> f64 {
        let mut ctx = prompt.to_vec();
        let mut p = 1.0;
        for &t in continuation {
            p *= self.conditional(&ctx).prob(t);
            ctx.push(t);
        }
        p
    }
}

/// Exhaustively enumerates every continuation of `prompt` up to `horizon`
/// tokens under `next`, with its probability. A continuation stops early once
/// it emits `stop`. Total mass is 1 up to rounding.
pub fn enumerate_continuations<F>(
    prompt: &[TokenId],
    horizon: usize,
    stop: Option<TokenId>,
    next: F,
) -> Vec<(Vec<TokenId>, f64)>
where
    F: Fn(&[TokenId]) -> ProbDist,
{
    let mut out = Vec::new();
    let mut ctx = prompt.to_vec();
    walk(&mut ctx, prompt.len(), horizon, stop, 1.0, &next, &mut out);
    out
}

fn walk<F>(
    ctx: &mut Vec<TokenId>,
    start: usize,
    horizon: usize,
    stop: Option<TokenId>,
    mass: f64,
    next: &F,
    out: &mut Vec<(Vec<TokenId>, f64)>,
) where
    F: Fn(&[TokenId]) -> ProbDist,
{
    let emitted = ctx.len() - start;
    let stopped = emitted > 0 && stop == ctx.last().copied();
    if emitted == horizon || stopped {
        out.push((ctx[start..].to_vec(), mass));
        return;
    }
    let dist = next(ctx);
    for (i, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        ctx.push(TokenId::from(i));
        walk(ctx, start, horizon, stop, mass * p, next, out);
        ctx.pop();
    }
}

/// A tabular model exposed through the language-model contract. Each exit
/// reads its own table, so a ladder of tables stands in for early-exit
/// sub-models; depth and costs are synthetic.
#[derive(Debug, Clone)]
pub struct TabularModel {
    vocab: Vocabulary,
    n_layers: usize,
    exits: Vec<usize>,
    tables: Vec<NGramTable>,
}

impl TabularModel {
    /// One table read at every depth `1..=n_layers`.
    pub fn single(table: NGramTable, n_layers: usize) -> Result<Self> {
        ensure!(
            n_layers >= 1,
            Config,
            "tabular model needs at least one layer"
        );
        Ok(Self {
            vocab: table.vocab.clone(),
            n_layers,
            exits: (1..=n_layers).collect(),
            tables: vec![table; n_layers],
        })
    }

    /// Distinct tables at the given exits; the deepest exit must equal `n_layers`.
    pub fn ladder(n_layers: usize, rungs: Vec<(usize, NGramTable)>) -> Result<Self> {
        ensure!(!rungs.is_empty(), Config, "empty table ladder");
        let vocab = rungs[0].1.vocab.clone();
        ensure!(
            rungs.iter().all(|(_, t)| t.vocab == vocab),
            Config,
            "ladder tables disagree on vocabulary"
        );
        ensure!(
            rungs.last().map(|r| r.0) == Some(n_layers),
            Config,
            "deepest ladder exit must equal the model depth {n_layers}"
        );
        let (exits, tables): (Vec<_>, Vec<_>) = rungs.into_iter().unzip();
        Ok(Self {
            vocab,
            n_layers,
            exits,
            tables,
        })
    }

    pub fn table_at(&self, exit: usize) -> Option<&NGramTable> {
        self.exits
            .iter()
            .position(|&e| e == exit)
            .map(|i| &self.tables[i])
    }
}

impl LanguageModel for TabularModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn n_layers(&self) -> usize {
        self.n_layers
    }

    fn exits(&self) -> &[usize] {
        &self.exits
    }

    fn score(&self, tokens: &[TokenId], n_positions: usize, exit: usize) -> Result<Vec<Vec<f64>>> {
        let table = self.table_at(exit).ok_or_else(|| {
            Error::Config(format!(
                "exit {exit} not in tabular ladder {:?}",
                self.exits
            ))
        })?;
        let start = tokens.len() + 1 - n_positions;
        Ok((start..=tokens.len())
            .map(|end| table.log_conditional(&tokens[..end]))
            .collect())
    }
}

/// Wraps a table as a model handle with a declared cost profile.
pub fn ngram_as_model(table: NGramTable, profile: CostProfile) -> Result<ModelHandle> {
    ModelHandle::from_model(
        TabularModel::single(table, profile.n_layers)?,
        profile.unit_cost,
    )
}
