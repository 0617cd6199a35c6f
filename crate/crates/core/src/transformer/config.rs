use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub vocab_size: usize,
    pub init_seed: u64,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_layers >= 1, Config, "n_layers must be at least 1");
        ensure!(
            self.d_model >= 1 && self.n_heads >= 1 && self.d_ff >= 1,
            Config,
            "dimensions must be positive"
        );
        ensure!(
            self.d_model % self.n_heads == 0,
            Config,
            "d_model {} is not divisible by n_heads {}",
            self.d_model,
            self.n_heads
        );
        ensure!(
            self.max_context >= 2,
            Config,
            "max_context must be at least 2"
        );
        ensure!(
            self.vocab_size >= 2,
            Config,
            "vocab_size must be at least 2"
        );
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Trainable parameters:
    ///
    /// ```text
    /// embeddings   V*d
    /// per layer    4d^2 + 4d      (q, k, v, o projections with biases)
    ///              2*d*f + f + d  (feed-forward with biases)
    ///              4d             (two layer norms)
    /// final norm   2d
    /// head         d*V + V
    /// ```
    ///
    /// i.e. `2Vd + V + 2d + L(4d^2 + 2df + 9d + f)`.
    pub fn param_count(&self) -> usize {
        let (v, d, f, l) = (self.vocab_size, self.d_model, self.d_ff, self.n_layers);
        2 * v * d + v + 2 * d + l * (4 * d * d + 2 * d * f + 9 * d + f)
    }
}

/// Ordered early-exit depths; the deepest equals the model depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubModelLadder {
    exits: Vec<usize>,
}

impl SubModelLadder {
    pub fn new(exits: Vec<usize>, n_layers: usize) -> Result<Self> {
        ensure!(!exits.is_empty(), Config, "ladder is empty");
        ensure!(exits[0] >= 1, Config, "ladder exits must be at least 1");
        ensure!(
            exits.windows(2).all(|w| w[0] < w[1]),
            Config,
            "ladder {exits:?} is not strictly increasing"
        );
        ensure!(
            *exits.last().unwrap() == n_layers,
            Config,
            "deepest ladder exit {} must equal the model depth {n_layers}",
            exits.last().unwrap()
        );
        Ok(Self { exits })
    }

    pub fn full(n_layers: usize) -> Self {
        Self {
            exits: vec![n_layers],
        }
    }

    pub fn exits(&self) -> &[usize] {
        &self.exits
    }

    pub fn len(&self) -> usize {
        self.exits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exits.is_empty()
    }

    pub fn deepest(&self) -> usize {
        *self.exits.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Loss on the deepest exit only.
    Sft,
    /// Mean loss over every ladder exit.
    Soft,
}

impl std::str::FromStr for TrainingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sft" => Ok(TrainingMode::Sft),
            "soft" => Ok(TrainingMode::Soft),
            other => Err(format!(
                "unknown training mode `{other}` (expected sft or soft)"
            )),
        }
    }
}
