use serde::{Deserialize, Serialize};

use crate::model::TokenId;

/// A drafted token as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCandidate {
    pub token: TokenId,
    pub confidence: f64,
    pub exit_depth: usize,
}

/// One draft + verify round (or one plain step for autoregressive decoding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub candidates: Vec<RoundCandidate>,
    /// Length of the accepted candidate prefix.
    pub accepted: usize,
    /// Correction (first rejection) or bonus (all accepted) token from the
    /// target; absent when an accepted `<eos>` ended the round.
    pub next_token: Option<TokenId>,
    /// Draft layers evaluated this round, including probes that emitted nothing.
    pub draft_layer_units: u64,
}

impl Round {
    pub fn emitted(&self) -> usize {
        self.accepted + usize::from(self.next_token.is_some())
    }

    pub fn output_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.candidates[..self.accepted]
            .iter()
            .map(|c| c.token)
            .chain(self.next_token)
    }
}

/// Logical forward costs, in layer units per model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Full-depth target forwards (one per round).
    pub target_forwards: u64,
    pub draft_layer_units: u64,
}

/// Full record of one generation. JSON field names are stable:
/// `prompt`, `output`, `rounds[].{candidates[].{token, confidence,
/// exit_depth}, accepted, next_token, draft_layer_units}`,
/// `cost.{target_forwards, draft_layer_units}`, `wall_ns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub prompt: Vec<TokenId>,
    pub output: Vec<TokenId>,
    pub rounds: Vec<Round>,
    pub cost: CostLedger,
    pub wall_ns: u64,
}

impl DecodeTrace {
    /// Concatenation of every round's emitted tokens.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        self.rounds.iter().flat_map(Round::output_tokens).collect()
    }

    pub fn drafted(&self) -> usize {
        self.rounds.iter().map(|r| r.candidates.len()).sum()
    }

    pub fn accepted(&self) -> usize {
        self.rounds.iter().map(|r| r.accepted).sum()
    }

    /// Ledger recomputed from the rounds.
    pub fn replay_cost(&self) -> CostLedger {
        CostLedger {
            target_forwards: self.rounds.len() as u64,
            draft_layer_units: self.rounds.iter().map(|r| r.draft_layer_units).sum(),
        }
    }

    /// The trace without its wall-clock measurement, for determinism checks.
    pub fn without_timing(&self) -> DecodeTrace {
        DecodeTrace {
            wall_ns: 0,
            ..self.clone()
        }
    }
}
