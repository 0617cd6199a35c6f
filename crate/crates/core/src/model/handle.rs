use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use crate::error::{ensure, Error, Result};

/// Backend contract shared by the tiny transformer and the tabular oracles.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    fn n_layers(&self) -> usize;

    /// Depths whose output can be read through the shared head, strictly
    /// increasing and ending at or below `n_layers`.
    fn exits(&self) -> &[usize];

    fn max_context(&self) -> Option<usize> {
        None
    }

    /// Next-token logits for each of the last `n_positions` prefixes of
    /// `tokens`, read at `exit`. Entry `j` predicts the token following
    /// `tokens[..tokens.len() - n_positions + j + 1]`.
    fn score(&self, tokens: &[TokenId], n_positions: usize, exit: usize) -> Result<Vec<Vec<f64>>>;

    /// Last-position logits at several exits. Backends that share a trunk
    /// across exits override this to run a single pass.
    fn score_exits(&self, tokens: &[TokenId], exits: &[usize]) -> Result<Vec<Vec<f64>>> {
        exits
            .iter()
            .map(|&e| {
                self.score(tokens, 1, e)
                    .map(|mut v| v.pop().unwrap_or_default())
            })
            .collect()
    }

    /// Walks `exits` shallow to deep on the last position of `tokens`,
    /// handing each exit's logits to `visit` until it returns `false`.
    /// Backends with a shared trunk continue one forward pass instead of
    /// restarting it per exit.
    fn probe_exits(
        &self,
        tokens: &[TokenId],
        exits: &[usize],
        visit: &mut dyn FnMut(usize, Vec<f64>) -> bool,
    ) -> Result<()> {
        for (i, &e) in exits.iter().enumerate() {
            let logits = self.score(tokens, 1, e)?.pop().unwrap_or_default();
            if !visit(i, logits) {
                break;
            }
        }
        Ok(())
    }
}

/// Per-model analytical cost: a forward to depth `e` costs `e * unit_cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub n_layers: usize,
    pub unit_cost: f64,
}

impl CostProfile {
    pub fn new(n_layers: usize, unit_cost: f64) -> Result<Self> {
        ensure!(
            n_layers >= 1,
            Config,
            "cost profile needs at least one layer"
        );
        ensure!(
            unit_cost > 0.0 && unit_cost.is_finite(),
            Config,
            "unit cost must be positive, got {unit_cost}"
        );
        Ok(Self {
            n_layers,
            unit_cost,
        })
    }

    pub fn full(&self) -> f64 {
        self.n_layers as f64 * self.unit_cost
    }

    pub fn at_depth(&self, depth: usize) -> f64 {
        depth as f64 * self.unit_cost
    }

    /// Cost of extending a forward already at depth `from` to depth `to`.
    pub fn incremental(&self, from: usize, to: usize) -> f64 {
        to.saturating_sub(from) as f64 * self.unit_cost
    }
}

/// A shareable model plus its cost profile; the unit every decoder consumes.
#[derive(Clone)]
pub struct ModelHandle {
    model: Arc<dyn LanguageModel>,
    unit_cost: f64,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("n_layers", &self.n_layers())
            .field("exits", &self.exits())
            .field("unit_cost", &self.unit_cost)
            .finish()
    }
}

impl ModelHandle {
    pub fn new(model: Arc<dyn LanguageModel>, unit_cost: f64) -> Result<Self> {
        let exits = model.exits();
        ensure!(model.n_layers() >= 1, Config, "model has no layers");
        ensure!(!exits.is_empty(), Config, "model exposes no exits");
        ensure!(
            exits.windows(2).all(|w| w[0] < w[1]),
            Config,
            "exits {exits:?} are not strictly increasing"
        );
        ensure!(
            exits[0] >= 1 && *exits.last().unwrap() <= model.n_layers(),
            Config,
            "exits {exits:?} outside 1..={}",
            model.n_layers()
        );
        CostProfile::new(model.n_layers(), unit_cost)?;
        Ok(Self { model, unit_cost })
    }

    pub fn from_model<M: LanguageModel + 'static>(model: M, unit_cost: f64) -> Result<Self> {
        Self::new(Arc::new(model), unit_cost)
    }

    /// Same backend, different cost profile.
    pub fn with_unit_cost(&self, unit_cost: f64) -> Result<Self> {
        Self::new(self.model.clone(), unit_cost)
    }

    pub fn backend(&self) -> &Arc<dyn LanguageModel> {
        &self.model
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.model.vocab()
    }

    pub fn n_layers(&self) -> usize {
        self.model.n_layers()
    }

    pub fn exits(&self) -> &[usize] {
        self.model.exits()
    }

    pub fn max_context(&self) -> Option<usize> {
        self.model.max_context()
    }

    pub fn unit_cost(&self) -> f64 {
        self.unit_cost
    }

    pub fn cost_profile(&self) -> CostProfile {
        CostProfile {
            n_layers: self.n_layers(),
            unit_cost: self.unit_cost,
        }
    }

    pub fn has_exit(&self, exit: usize) -> bool {
        exit == self.n_layers() || self.exits().contains(&exit)
    }

    fn check_exit(&self, exit: usize) -> Result<()> {
        if self.has_exit(exit) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "exit {exit} is not in the model ladder {:?} (depth {})",
                self.exits(),
                self.n_layers()
            )))
        }
    }

    fn check_context(&self, tokens: &[TokenId]) -> Result<()> {
        ensure!(!tokens.is_empty(), Validation, "empty context");
        if let Some(max) = self.max_context() {
            if tokens.len() > max {
                return Err(Error::ContextOverflow {
                    len: tokens.len(),
                    max,
                });
            }
        }
        let v = self.vocab().size();
        if let Some(t) = tokens.iter().find(|t| t.index() >= v) {
            return Err(Error::Validation(format!(
                "token {t} outside vocabulary of size {v}"
            )));
        }
        Ok(())
    }

    /// Next-token logits after `context`, read at `exit`.
    pub fn evaluate(&self, context: &[TokenId], exit: usize) -> Result<Vec<f64>> {
        self.check_exit(exit)?;
        self.check_context(context)?;
        let mut out = self.model.score(context, 1, exit)?;
        Ok(out.pop().expect("backend returned no positions"))
    }

    /// Next-token logits after `context` at each of `exits` (one trunk pass
    /// where the backend supports it).
    pub fn evaluate_exits(&self, context: &[TokenId], exits: &[usize]) -> Result<Vec<Vec<f64>>> {
        for &e in exits {
            self.check_exit(e)?;
        }
        self.check_context(context)?;
        self.model.score_exits(context, exits)
    }

    /// See [`LanguageModel::probe_exits`]; `exits` must be increasing.
    pub fn probe_exits(
        &self,
        context: &[TokenId],
        exits: &[usize],
        visit: &mut dyn FnMut(usize, Vec<f64>) -> bool,
    ) -> Result<()> {
        ensure!(
            exits.windows(2).all(|w| w[0] < w[1]),
            Config,
            "probe exits must be increasing"
        );
        for &e in exits {
            self.check_exit(e)?;
        }
        self.check_context(context)?;
        self.model.probe_exits(context, exits, visit)
    }

    /// Full-depth logits for the last `n_positions` prefixes of `tokens`.
    pub fn score(&self, tokens: &[TokenId], n_positions: usize) -> Result<Vec<Vec<f64>>> {
        self.check_context(tokens)?;
        ensure!(
            (1..=tokens.len()).contains(&n_positions),
            Validation,
            "cannot score {n_positions} positions of a {}-token sequence",
            tokens.len()
        );
        self.model.score(tokens, n_positions, self.n_layers())
    }
}
