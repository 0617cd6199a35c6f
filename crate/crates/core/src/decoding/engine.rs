use std::time::Instant;

use super::draft::{draft_dist, draft_s2d, draft_standard, DraftOutcome};
use super::policy::{DraftPolicy, PolicyKind};
use super::trace::{CostLedger, DecodeTrace, Round};
use super::verify::{verify_greedy, verify_stochastic, Verdict};
use crate::error::{ensure, Error, Result};
use crate::model::{
    apply_temperature, argmax, sample_token, ModelHandle, Rng, SamplerConfig, TokenId,
};

fn check_prompt(model: &ModelHandle, prompt: &[TokenId]) -> Result<()> {
    ensure!(!prompt.is_empty(), Validation, "empty prompt");
    ensure!(
        prompt.iter().all(|t| model.vocab().contains(*t)),
        Validation,
        "prompt token outside vocabulary"
    );
    Ok(())
}

fn context_limit(models: &[&ModelHandle]) -> usize {
    models
        .iter()
        .filter_map(|m| m.max_context())
        .min()
        .unwrap_or(usize::MAX)
}

fn elapsed_ns(start: Instant) -> u64 {
    (start.elapsed().as_nanos() as u64).max(1)
}

/// Baseline: one full-depth target forward per emitted token.
pub fn autoregressive_decode(
    target: &ModelHandle,
    prompt: &[TokenId],
    max_new_tokens: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<DecodeTrace> {
    check_prompt(target, prompt)?;
    let start = Instant::now();
    let eos = target.vocab().eos();
    let limit = context_limit(&[target]);
    let mut ctx = prompt.to_vec();
    let mut rounds = Vec::new();
    while ctx.len() - prompt.len() < max_new_tokens {
        if ctx.len() > limit {
            return Err(Error::ContextOverflow {
                len: ctx.len(),
                max: limit,
            });
        }
        let logits = target.evaluate(&ctx, target.n_layers())?;
        let token = if sampler.is_greedy() {
            TokenId::from(argmax(&logits))
        } else {
            sample_token(
                &apply_temperature(&logits, sampler.temperature)?,
                sampler,
                rng,
            )
            .0
        };
        rounds.push(Round {
            candidates: Vec::new(),
            accepted: 0,
            next_token: Some(token),
            draft_layer_units: 0,
        });
        ctx.push(token);
        if token == eos {
            break;
        }
    }
    Ok(DecodeTrace {
        prompt: prompt.to_vec(),
        output: ctx[prompt.len()..].to_vec(),
        cost: CostLedger {
            target_forwards: rounds.len() as u64,
            draft_layer_units: 0,
        },
        rounds,
        wall_ns: elapsed_ns(start),
    })
}

/// Draft/verify loop. Verification is greedy at temperature 0 and rejection
/// sampling otherwise. Each round drafts at most
/// `min(K, remaining - 1, context room)` tokens so the output never exceeds
/// `max_new_tokens`.
pub fn speculative_decode(
    target: &ModelHandle,
    draft: &ModelHandle,
    policy: &DraftPolicy,
    prompt: &[TokenId],
    max_new_tokens: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<DecodeTrace> {
    ensure!(
        target.vocab() == draft.vocab(),
        Config,
        "target and draft vocabularies differ"
    );
    policy.validate(draft)?;
    check_prompt(target, prompt)?;
    let start = Instant::now();
    let eos = target.vocab().eos();
    let limit = context_limit(&[target, draft]);
    let mut ctx = prompt.to_vec();
    let mut rounds = Vec::new();
    let mut ledger = CostLedger::default();
    loop {
        let produced = ctx.len() - prompt.len();
        if produced >= max_new_tokens || (produced > 0 && ctx.last() == Some(&eos)) {
            break;
        }
        if ctx.len() > limit {
            return Err(Error::ContextOverflow {
                len: ctx.len(),
                max: limit,
            });
        }
        let k = policy
            .max_draft_len
            .min(max_new_tokens - produced - 1)
            .min(limit - ctx.len());
        let drafted = if k == 0 {
            DraftOutcome::default()
        } else {
            match &policy.kind {
                PolicyKind::FixedExit { depth } => {
                    draft_standard(draft, *depth, &ctx, k, sampler, rng)?
                }
                PolicyKind::S2d {
                    ladder,
                    thresholds,
                    fallback,
                } => draft_s2d(
                    draft,
                    ladder,
                    thresholds.values(),
                    &ctx,
                    k,
                    sampler,
                    rng,
                    *fallback,
                )?,
            }
        };
        let Verdict {
            accepted,
            next_token,
        } = if sampler.is_greedy() {
            verify_greedy(target, &ctx, &drafted.candidates)?
        } else {
            verify_stochastic(target, &ctx, &drafted.candidates, sampler, rng)?
        };
        let round = Round {
            candidates: drafted.candidates.iter().map(|c| c.record()).collect(),
            accepted,
            next_token,
            draft_layer_units: drafted.layer_units,
        };
        ctx.extend(round.output_tokens());
        ledger.target_forwards += 1;
        ledger.draft_layer_units += drafted.layer_units;
        rounds.push(round);
    }
    Ok(DecodeTrace {
        prompt: prompt.to_vec(),
        output: ctx[prompt.len()..].to_vec(),
        rounds,
        cost: ledger,
        wall_ns: elapsed_ns(start),
    })
}

/// Speculative decoding where the draft is the target's own early exits.
/// Every exit of `draft_ladder` must be a target exit strictly shallower than
/// its full depth; draft probes are charged at the target's own unit cost.
#[allow(clippy::too_many_arguments)]
pub fn self_speculative_decode(
    target: &ModelHandle,
    draft_ladder: &[usize],
    policy: &DraftPolicy,
    prompt: &[TokenId],
    max_new_tokens: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<DecodeTrace> {
    ensure!(
        !draft_ladder.is_empty(),
        Config,
        "empty self-speculative ladder"
    );
    for &e in draft_ladder {
        ensure!(
            e < target.n_layers(),
            Config,
            "self-speculative exit {e} is not shallower than the target depth {}",
            target.n_layers()
        );
        ensure!(
            target.exits().contains(&e),
            Config,
            "exit {e} is not a trained target exit {:?}",
            target.exits()
        );
    }
    for e in policy.exits() {
        ensure!(
            draft_ladder.contains(&e),
            Config,
            "policy exit {e} outside the self-speculative ladder {draft_ladder:?}"
        );
    }
    if let PolicyKind::S2d { ladder, .. } = &policy.kind {
        ensure!(
            ladder.as_slice() == draft_ladder,
            Config,
            "S2D ladder {ladder:?} differs from the self-speculative ladder {draft_ladder:?}"
        );
    }
    speculative_decode(target, target, policy, prompt, max_new_tokens, sampler, rng)
}

/// The distribution a drafter at `exit` samples from after `context`.
pub fn draft_distribution(
    draft: &ModelHandle,
    context: &[TokenId],
    exit: usize,
    sampler: &SamplerConfig,
) -> Result<crate::model::ProbDist> {
    draft_dist(&draft.evaluate(context, exit)?, sampler)
}
