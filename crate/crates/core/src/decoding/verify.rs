use super::draft::DraftCandidate;
use crate::error::Result;
use crate::model::{
    apply_temperature, argmax, sample_with_uniform, ModelHandle, ProbDist, Rng, SamplerConfig,
    TokenId,
};

/// Accepted prefix length and the target's correction or bonus token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub accepted: usize,
    /// `None` when an accepted `<eos>` ended the round.
    pub next_token: Option<TokenId>,
}

impl Verdict {
    /// An accepted `<eos>` ends generation: it is the round's last token and
    /// no correction or bonus token follows it.
    fn stop_at_eos(self, candidates: &[DraftCandidate], eos: TokenId) -> Self {
        match candidates[..self.accepted]
            .iter()
            .position(|c| c.token == eos)
        {
            Some(j) => Verdict {
                accepted: j + 1,
                next_token: None,
            },
            None => self,
        }
    }
}

fn target_logits(
    target: &ModelHandle,
    context: &[TokenId],
    candidates: &[DraftCandidate],
) -> Result<Vec<Vec<f64>>> {
    let mut tokens = context.to_vec();
    tokens.extend(candidates.iter().map(|c| c.token));
    target.score(&tokens, candidates.len() + 1)
}

/// Top-1 verification: accept the longest prefix agreeing with the target's
/// argmax, then emit the target's argmax at the first disagreement (or after
/// the last candidate).
pub fn verify_greedy(
    target: &ModelHandle,
    context: &[TokenId],
    candidates: &[DraftCandidate],
) -> Result<Verdict> {
    let logits = target_logits(target, context, candidates)?;
    let accepted = candidates
        .iter()
        .zip(&logits)
        .take_while(|(c, l)| argmax(l) == c.token.index())
        .count();
    let v = Verdict {
        accepted,
        next_token: Some(TokenId::from(argmax(&logits[accepted]))),
    };
    Ok(v.stop_at_eos(candidates, target.vocab().eos()))
}

/// `normalize(max(0, q - p))`, or `q` itself when that residual has no mass.
pub fn residual(q: &ProbDist, p: &ProbDist) -> ProbDist {
    let diff: Vec<f64> = q
        .probs()
        .iter()
        .zip(p.probs())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    if diff.iter().sum::<f64>() > 0.0 {
        ProbDist::normalized(diff).unwrap_or_else(|_| q.clone())
    } else {
        q.clone()
    }
}

/// Rejection-sampling verification. Candidate `i` is accepted when
/// `u < min(1, q_i[t] / p_i[t])`; on the first rejection the next token comes
/// from the residual `max(0, q_i - p_i)`, and after full acceptance from
/// `q_{K+1}`. A candidate with `p_i[t] = 0` is rejected and replaced from
/// `q_i`.
pub fn verify_stochastic(
    target: &ModelHandle,
    context: &[TokenId],
    candidates: &[DraftCandidate],
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<Verdict> {
    let logits = target_logits(target, context, candidates)?;
    let qs = logits
        .iter()
        .map(|l| apply_temperature(l, sampler.temperature))
        .collect::<Result<Vec<_>>>()?;
    for (i, c) in candidates.iter().enumerate() {
        let p = c.dist.prob(c.token);
        let q = qs[i].prob(c.token);
        let replacement = if p == 0.0 {
            Some(qs[i].clone())
        } else if rng.next_f64() < (q / p).min(1.0) {
            None
        } else {
            Some(residual(&qs[i], &c.dist))
        };
        if let Some(r) = replacement {
            let v = Verdict {
                accepted: i,
                next_token: Some(sample_with_uniform(&r, rng.next_f64())),
            };
            return Ok(v.stop_at_eos(candidates, target.vocab().eos()));
        }
    }
    let v = Verdict {
        accepted: candidates.len(),
        next_token: Some(sample_with_uniform(&qs[candidates.len()], rng.next_f64())),
    };
    Ok(v.stop_at_eos(candidates, target.vocab().eos()))
}
