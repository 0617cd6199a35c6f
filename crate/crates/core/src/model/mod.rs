//! Vocabulary, distributions, seeded sampling and the language-model contract.

mod dist;
mod handle;
mod sampling;
mod vocab;

pub use dist::{apply_temperature, argmax, ProbDist, NORMALIZATION_TOL};
pub use handle::{CostProfile, LanguageModel, ModelHandle};
pub use sampling::{mix64, sample_token, sample_with_uniform, Rng, SamplerConfig};
pub use vocab::{TokenId, Vocabulary, BOS_SYMBOL, EOS_SYMBOL};
