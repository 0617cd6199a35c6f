//! Generation strategies: autoregressive baseline, fixed-exit speculative
//! decoding, adaptive-exit (S2D) drafting and self-speculative decoding.

mod draft;
mod engine;
mod policy;
mod trace;
mod verify;

pub use draft::{draft_s2d, draft_standard, DraftCandidate, DraftOutcome, PositionDraws};
pub use engine::{
    autoregressive_decode, draft_distribution, self_speculative_decode, speculative_decode,
};
pub use policy::{DraftPolicy, Fallback, PolicyKind, ThresholdSet, DEFAULT_DRAFT_LEN};
pub use trace::{CostLedger, DecodeTrace, Round, RoundCandidate};
pub use verify::{residual, verify_greedy, verify_stochastic, Verdict};
