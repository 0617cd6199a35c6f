//! Sorted speculative decoding at desk scale.
//!
//! A draft model built as a ladder of early-exit sub-models proposes tokens;
//! each drafted token exits at the shallowest sub-model whose confidence
//! clears that exit's threshold, and a target model verifies the whole draft
//! in one pass. The crate provides:
//!
//! * [`model`]: vocabulary, distributions, seeded sampling, the model contract
//! * [`transformer`]: a trainable multi-exit toy transformer (SFT and sorted
//!   fine-tuning), prefix extraction and checkpoints
//! * [`tabular`]: add-alpha n-gram models and an exhaustive enumerator used as
//!   exact oracles
//! * [`decoding`]: autoregressive, fixed-exit speculative, adaptive-exit (S2D)
//!   and self-speculative generation with greedy and stochastic verification
//! * [`metrics`]: MAT, acceptance rate and analytical / wall-clock speedup

pub mod decoding;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod tabular;
pub mod transformer;

pub use error::{Error, Result};
