use super::policy::Fallback;
use super::trace::RoundCandidate;
use crate::error::{ensure, Result};
use crate::model::{
    apply_temperature, mix64, sample_token, ModelHandle, ProbDist, Rng, SamplerConfig, TokenId,
};

/// A drafted token with the distribution it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftCandidate {
    pub token: TokenId,
    /// Probability of `token` under `dist` (sampling) or the max of `dist` (greedy).
    pub confidence: f64,
    pub exit_depth: usize,
    pub dist: ProbDist,
}

impl DraftCandidate {
    pub fn record(&self) -> RoundCandidate {
        RoundCandidate {
            token: self.token,
            confidence: self.confidence,
            exit_depth: self.exit_depth,
        }
    }
}

/// Candidates of one drafting round plus the draft layers it evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DraftOutcome {
    pub candidates: Vec<DraftCandidate>,
    pub layer_units: u64,
}

impl DraftOutcome {
    pub fn tokens(&self) -> Vec<TokenId> {
        self.candidates.iter().map(|c| c.token).collect()
    }
}

/// Distribution a drafter samples from. In greedy mode this is the plain
/// softmax so the confidence of the argmax is its model probability.
pub(crate) fn draft_dist(logits: &[f64], sampler: &SamplerConfig) -> Result<ProbDist> {
    let t = if sampler.is_greedy() {
        1.0
    } else {
        sampler.temperature
    };
    apply_temperature(logits, t)
}

/// Randomness for one drafted position. Sampling mode takes a single base
/// draw from the session stream per position; the exit at depth `d` then
/// samples from its own stream keyed by `(base, d)`. Which exits get probed
/// therefore never changes the draw any other exit sees, and a fixed-exit
/// drafter at depth `d` sees exactly what a ladder's depth-`d` exit sees.
#[derive(Debug, Clone, Copy)]
pub struct PositionDraws {
    base: Option<u64>,
}

impl PositionDraws {
    pub fn next(sampler: &SamplerConfig, rng: &mut Rng) -> Self {
        Self {
            base: (!sampler.is_greedy()).then(|| rng.next_u64()),
        }
    }

    pub fn for_exit(&self, depth: usize) -> Rng {
        Rng::new(self.base.map_or(0, |b| b ^ mix64(depth as u64)))
    }
}

fn candidate(
    logits: &[f64],
    exit: usize,
    sampler: &SamplerConfig,
    draws: PositionDraws,
) -> Result<DraftCandidate> {
    let dist = draft_dist(logits, sampler)?;
    let (token, confidence) = sample_token(&dist, sampler, &mut draws.for_exit(exit));
    Ok(DraftCandidate {
        token,
        confidence,
        exit_depth: exit,
        dist,
    })
}

/// Drafts up to `k` tokens autoregressively at a fixed `exit`. Stops after
/// drafting `<eos>`.
pub fn draft_standard(
    draft: &ModelHandle,
    exit: usize,
    context: &[TokenId],
    k: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
) -> Result<DraftOutcome> {
    let eos = draft.vocab().eos();
    let mut ctx = context.to_vec();
    let mut out = DraftOutcome::default();
    for _ in 0..k {
        let draws = PositionDraws::next(sampler, rng);
        let logits = draft.evaluate(&ctx, exit)?;
        let c = candidate(&logits, exit, sampler, draws)?;
        out.layer_units += exit as u64;
        ctx.push(c.token);
        let done = c.token == eos;
        out.candidates.push(c);
        if done {
            break;
        }
    }
    Ok(out)
}

/// Adaptive drafting over a ladder of exits. For each position the exits are
/// probed shallow to deep and the first whose sampled confidence `c`
/// satisfies `threshold <= c` emits its token. Exits with a threshold above 1
/// are not probed (they can never qualify) unless `EmitFinal` needs the
/// deepest one. Probing continues the same forward pass, so a position costs
/// the depth of the deepest exit it probed.
#[allow(clippy::too_many_arguments)]
pub fn draft_s2d(
    draft: &ModelHandle,
    ladder: &[usize],
    thresholds: &[f64],
    context: &[TokenId],
    k: usize,
    sampler: &SamplerConfig,
    rng: &mut Rng,
    fallback: Fallback,
) -> Result<DraftOutcome> {
    ensure!(
        ladder.len() == thresholds.len(),
        Config,
        "{} thresholds for a ladder of {} exits",
        thresholds.len(),
        ladder.len()
    );
    ensure!(!ladder.is_empty(), Config, "empty ladder");
    let last = ladder.len() - 1;
    let probed: Vec<usize> = (0..ladder.len())
        .filter(|&i| thresholds[i] <= 1.0 || (i == last && fallback == Fallback::EmitFinal))
        .collect();
    let exits: Vec<usize> = probed.iter().map(|&i| ladder[i]).collect();
    let eos = draft.vocab().eos();

    let mut ctx = context.to_vec();
    let mut out = DraftOutcome::default();
    while out.candidates.len() < k {
        let mut emitted: Option<DraftCandidate> = None;
        let mut deepest: Option<DraftCandidate> = None;
        let mut depth = 0;
        let mut failure = None;
        let draws = PositionDraws::next(sampler, rng);
        draft.probe_exits(&ctx, &exits, &mut |j, logits| {
            let i = probed[j];
            depth = ladder[i];
            match candidate(&logits, ladder[i], sampler, draws) {
                Ok(c) if thresholds[i] <= c.confidence => {
                    emitted = Some(c);
                    false
                }
                Ok(c) => {
                    deepest = Some(c);
                    true
                }
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        out.layer_units += depth as u64;
        let chosen = match (emitted, fallback) {
            (Some(c), _) => c,
            (None, Fallback::EmitFinal) => {
                deepest.expect("deepest exit is always probed under emit_final")
            }
            (None, Fallback::StopDraft) => break,
        };
        ctx.push(chosen.token);
        let done = chosen.token == eos;
        out.candidates.push(chosen);
        if done {
            break;
        }
    }
    Ok(out)
}
