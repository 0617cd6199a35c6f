use serde::{Deserialize, Serialize};

use super::vocab::TokenId;
use crate::error::{ensure, Error, Result};

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Normalized probability vector over the vocabulary at one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        ensure!(!probs.is_empty(), Validation, "empty distribution");
        ensure!(
            probs.iter().all(|p| p.is_finite() && *p >= 0.0),
            Validation,
            "distribution has negative or non-finite entries"
        );
        let sum: f64 = probs.iter().sum();
        ensure!(
            (sum - 1.0).abs() <= NORMALIZATION_TOL,
            Validation,
            "distribution sums to {sum}, not 1"
        );
        Ok(Self { probs })
    }

    /// Rescales non-negative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        ensure!(
            sum > 0.0 && sum.is_finite(),
            Validation,
            "cannot normalize weights summing to {sum}"
        );
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn one_hot(size: usize, at: TokenId) -> Self {
        let mut probs = vec![0.0; size];
        probs[at.index()] = 1.0;
        Self { probs }
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, t: TokenId) -> f64 {
        self.probs.get(t.index()).copied().unwrap_or(0.0)
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> TokenId {
        TokenId::from(argmax(&self.probs))
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[argmax(&self.probs)]
    }
}

/// Lowest index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Converts logits into a distribution. `temperature == 0` yields the argmax
/// one-hot; otherwise a max-shifted softmax of `logits / temperature`.
pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<ProbDist> {
    ensure!(!logits.is_empty(), Validation, "empty logits");
    if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite logit {} at index {i}",
            logits[i]
        )));
    }
    ensure!(
        temperature >= 0.0 && temperature.is_finite(),
        Validation,
        "temperature must be a finite non-negative number, got {temperature}"
    );
    if temperature == 0.0 {
        return Ok(ProbDist::one_hot(
            logits.len(),
            TokenId::from(argmax(logits)),
        ));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|l| ((l - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbDist {
        probs: exps.into_iter().map(|e| e / sum).collect(),
    })
}
