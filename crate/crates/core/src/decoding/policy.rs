use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::ModelHandle;

pub const DEFAULT_DRAFT_LEN: usize = 5;

/// Per-exit confidence thresholds aligned with a ladder. Values above 1 can
/// never be met and disable that exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSet(Vec<f64>);

impl ThresholdSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(!values.is_empty(), Config, "empty threshold set");
        ensure!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            Config,
            "thresholds must be finite and non-negative: {values:?}"
        );
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ThresholdSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ThresholdSet> for Vec<f64> {
    fn from(t: ThresholdSet) -> Self {
        t.0
    }
}

/// What to do when no exit reaches its threshold for a drafted position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// End the drafting round with the candidates drafted so far.
    #[default]
    StopDraft,
    /// Emit the deepest exit's token anyway.
    EmitFinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Standard speculative decoding with the draft read at one depth.
    FixedExit { depth: usize },
    /// Adaptive exit: shallowest ladder exit whose confidence meets its threshold.
    S2d {
        ladder: Vec<usize>,
        thresholds: ThresholdSet,
        #[serde(default)]
        fallback: Fallback,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default = "default_draft_len")]
    pub max_draft_len: usize,
}

fn default_draft_len() -> usize {
    DEFAULT_DRAFT_LEN
}

impl DraftPolicy {
    pub fn fixed_exit(depth: usize, max_draft_len: usize) -> Self {
        Self {
            kind: PolicyKind::FixedExit { depth },
            max_draft_len,
        }
    }

    pub fn s2d(
        ladder: Vec<usize>,
        thresholds: ThresholdSet,
        fallback: Fallback,
        max_draft_len: usize,
    ) -> Self {
        Self {
            kind: PolicyKind::S2d {
                ladder,
                thresholds,
                fallback,
            },
            max_draft_len,
        }
    }

    /// Exits this policy may read.
    pub fn exits(&self) -> Vec<usize> {
        match &self.kind {
            PolicyKind::FixedExit { depth } => vec![*depth],
            PolicyKind::S2d { ladder, .. } => ladder.clone(),
        }
    }

    pub fn validate(&self, draft: &ModelHandle) -> Result<()> {
        ensure!(
            self.max_draft_len >= 1,
            Config,
            "max_draft_len must be at least 1"
        );
        match &self.kind {
            PolicyKind::FixedExit { depth } => {
                ensure!(
                    draft.has_exit(*depth),
                    Config,
                    "fixed exit {depth} not in draft ladder {:?}",
                    draft.exits()
                );
            }
            PolicyKind::S2d {
                ladder, thresholds, ..
            } => {
                ensure!(
                    ladder.len() == thresholds.len(),
                    Config,
                    "{} thresholds for a ladder of {} exits",
                    thresholds.len(),
                    ladder.len()
                );
                ensure!(!ladder.is_empty(), Config, "empty S2D ladder");
                ensure!(
                    ladder.windows(2).all(|w| w[0] < w[1]),
                    Config,
                    "S2D ladder {ladder:?} is not strictly increasing"
                );
                for e in ladder {
                    ensure!(
                        draft.has_exit(*e),
                        Config,
                        "S2D exit {e} not in draft ladder {:?}",
                        draft.exits()
                    );
                }
            }
        }
        Ok(())
    }
}
