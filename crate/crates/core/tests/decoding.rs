mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use s2d_core::decoding::*;
use s2d_core::metrics::{acceptance_rate, mat, modeled_speedup};
use s2d_core::model::{
    apply_temperature, sample_token, CostProfile, ProbDist, Rng, SamplerConfig, TokenId,
};
use s2d_core::tabular::{enumerate_continuations, NGramTable};
use s2d_core::Error;

fn greedy() -> SamplerConfig {
    SamplerConfig::greedy()
}

#[test]
fn autoregressive_follows_single_continuation() {
    // a -> b -> c -> <eos>, nearly deterministic
    let v = vocab(5);
    let seq = toks(&[2, 3, 4, 1]);
    let t = NGramTable::build(&[seq], 2, 1e-9, v).unwrap();
    let target = table_model(t, 6, 1.0);
    let mut rng = Rng::new(0);
    let trace = autoregressive_decode(&target, &toks(&[2]), 10, &greedy(), &mut rng).unwrap();
    assert_eq!(trace.output, toks(&[3, 4, 1]));
    let again = autoregressive_decode(&target, &toks(&[2]), 10, &greedy(), &mut rng).unwrap();
    assert_eq!(again.output, trace.output);
    assert_eq!(trace.cost.target_forwards, 3);
    assert_eq!(trace.cost.draft_layer_units, 0);
    assert!(autoregressive_decode(&target, &[], 3, &greedy(), &mut rng).is_err());
}

#[test]
fn draft_standard_composes_sample_token() {
    let v = vocab(6);
    let draft = table_model(random_table(&v, 2, 0.1, 0.2, 1), 4, 1.0);
    let s = SamplerConfig::new(1.0, 77);
    let ctx = toks(&[2, 3]);
    let mut rng = s.rng();
    let out = draft_standard(&draft, 3, &ctx, 1, &s, &mut rng).unwrap();
    let mut rng2 = s.rng();
    let draws = PositionDraws::next(&s, &mut rng2);
    let dist = apply_temperature(&draft.evaluate(&ctx, 3).unwrap(), 1.0).unwrap();
    let (t, c) = sample_token(&dist, &s, &mut draws.for_exit(3));
    assert_eq!(out.candidates.len(), 1);
    assert_eq!(
        (out.candidates[0].token, out.candidates[0].confidence),
        (t, c)
    );
    assert_eq!(out.layer_units, 3);
    let many = draft_standard(&draft, 2, &ctx, 5, &s, &mut rng).unwrap();
    assert!(many.candidates.iter().all(|c| c.exit_depth == 2));
}

#[test]
fn draft_standard_greedy_walks_the_table() {
    let v = vocab(6);
    let table = random_table(&v, 2, 0.1, 0.0, 3);
    let draft = table_model(table.clone(), 4, 1.0);
    let out = draft_standard(&draft, 4, &toks(&[2]), 3, &greedy(), &mut Rng::new(0)).unwrap();
    // hand walk: argmax of each conditional in turn
    let mut ctx = toks(&[2]);
    for c in &out.candidates {
        let want = table.conditional(&ctx).argmax();
        assert_eq!(c.token, want);
        assert!((c.confidence - table.conditional(&ctx).max_prob()).abs() < 1e-12);
        ctx.push(want);
    }
    assert_eq!(out.candidates.len(), 3);
}

fn ladder_draft(seed: u64) -> (ModelHandleAlias, Vec<usize>) {
    let v = vocab(6);
    let rungs = vec![
        (2, random_table(&v, 2, 0.1, 0.2, seed)),
        (3, random_table(&v, 2, 0.1, 0.2, seed + 1)),
        (4, random_table(&v, 2, 0.1, 0.2, seed + 2)),
    ];
    (ladder_model(4, rungs, 1.0), vec![2, 3, 4])
}

type ModelHandleAlias = s2d_core::model::ModelHandle;

#[test]
fn vacuous_and_disabled_thresholds_match_fixed_exits() {
    let (draft, ladder) = ladder_draft(10);
    for sampler in [
        greedy(),
        SamplerConfig::new(1.0, 5),
        SamplerConfig::new(0.7, 6),
    ] {
        let ctx = toks(&[2, 4]);
        let mut r1 = sampler.rng();
        let mut r2 = sampler.rng();
        let a = draft_s2d(
            &draft,
            &ladder,
            &[0.0, 0.0, 0.0],
            &ctx,
            5,
            &sampler,
            &mut r1,
            Fallback::StopDraft,
        )
        .unwrap();
        let b = draft_standard(&draft, 2, &ctx, 5, &sampler, &mut r2).unwrap();
        assert_eq!(a.tokens(), b.tokens());
        assert_eq!(a.layer_units, b.layer_units);
        assert_eq!(r1, r2);

        let mut r1 = sampler.rng();
        let mut r2 = sampler.rng();
        let a = draft_s2d(
            &draft,
            &ladder,
            &[1.1, 1.1, 0.0],
            &ctx,
            5,
            &sampler,
            &mut r1,
            Fallback::StopDraft,
        )
        .unwrap();
        let b = draft_standard(&draft, 4, &ctx, 5, &sampler, &mut r2).unwrap();
        assert_eq!(a.tokens(), b.tokens());
        assert!(a.candidates.iter().all(|c| c.exit_depth == 4));
        assert_eq!(a.layer_units, b.layer_units);
    }
}

/// Ladder (2, 3, 4) with thresholds (0.75, 0.70, 0.0): one context where the
/// depth-2 confidence is 0.8, one where depth 2 gives 0.6 and depth 3 gives 0.72.
#[test]
fn constructed_confidences_pick_the_expected_exit() {
    let v = vocab(4); // <bos> <eos> a b
    let alpha = 1e-12;
    let mut t2 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut t3 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut t4 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    // context "a": depth-2 confident
    t2.set_counts(&toks(&[2]), vec![0.0, 0.0, 2.0, 8.0])
        .unwrap();
    t3.set_counts(&toks(&[2]), vec![0.0, 0.0, 5.0, 5.0])
        .unwrap();
    t4.set_counts(&toks(&[2]), vec![0.0, 0.0, 1.0, 9.0])
        .unwrap();
    // context "b": depth 2 at 0.6, depth 3 at 0.72
    t2.set_counts(&toks(&[3]), vec![0.0, 0.0, 6.0, 4.0])
        .unwrap();
    t3.set_counts(&toks(&[3]), vec![0.0, 0.0, 7.2, 2.8])
        .unwrap();
    t4.set_counts(&toks(&[3]), vec![0.0, 0.0, 9.0, 1.0])
        .unwrap();
    let draft = ladder_model(4, vec![(2, t2), (3, t3), (4, t4)], 1.0);
    let th = [0.75, 0.70, 0.0];

    let out = draft_s2d(
        &draft,
        &[2, 3, 4],
        &th,
        &toks(&[2]),
        1,
        &greedy(),
        &mut Rng::new(0),
        Fallback::StopDraft,
    )
    .unwrap();
    assert_eq!(out.candidates[0].exit_depth, 2);
    assert!((out.candidates[0].confidence - 0.8).abs() < 1e-9);
    assert_eq!(out.layer_units, 2);

    let out = draft_s2d(
        &draft,
        &[2, 3, 4],
        &th,
        &toks(&[3]),
        1,
        &greedy(),
        &mut Rng::new(0),
        Fallback::StopDraft,
    )
    .unwrap();
    assert_eq!(out.candidates[0].exit_depth, 3);
    assert!((out.candidates[0].confidence - 0.72).abs() < 1e-9);
    assert_eq!(out.layer_units, 3);

    // nothing qualifies: stop_draft drafts nothing but pays for the probes,
    // emit_final takes the deepest token
    let strict = [0.95, 0.95, 0.95];
    let out = draft_s2d(
        &draft,
        &[2, 3, 4],
        &strict,
        &toks(&[3]),
        3,
        &greedy(),
        &mut Rng::new(0),
        Fallback::StopDraft,
    )
    .unwrap();
    assert!(out.candidates.is_empty());
    assert_eq!(out.layer_units, 4);
    let out = draft_s2d(
        &draft,
        &[2, 3, 4],
        &strict,
        &toks(&[3]),
        1,
        &greedy(),
        &mut Rng::new(0),
        Fallback::EmitFinal,
    )
    .unwrap();
    assert_eq!(out.candidates[0].exit_depth, 4);
    assert_eq!(out.candidates[0].token, TokenId(2));

    assert!(matches!(
        draft_s2d(
            &draft,
            &[2, 3, 4],
            &[0.5, 0.5],
            &toks(&[3]),
            1,
            &greedy(),
            &mut Rng::new(0),
            Fallback::StopDraft
        ),
        Err(Error::Config(_))
    ));
}

#[test]
fn greedy_verifier_basics() {
    let v = vocab(6);
    let table = random_table(&v, 2, 0.1, 0.0, 21);
    let target = table_model(table.clone(), 4, 1.0);
    let ctx = toks(&[2]);
    let drafted = draft_standard(&target, 4, &ctx, 4, &greedy(), &mut Rng::new(0)).unwrap();
    let verdict = verify_greedy(&target, &ctx, &drafted.candidates).unwrap();
    assert_eq!(verdict.accepted, 4);
    let mut full = ctx.clone();
    full.extend(drafted.tokens());
    assert_eq!(verdict.next_token, Some(table.conditional(&full).argmax()));

    let mut wrong = drafted.candidates.clone();
    let good = wrong[0].token;
    wrong[0].token = TokenId::from(if good.index() == 2 { 3 } else { 2 });
    let verdict = verify_greedy(&target, &ctx, &wrong).unwrap();
    assert_eq!(verdict.accepted, 0);
    assert_eq!(verdict.next_token, Some(good));

    let empty = verify_greedy(&target, &ctx, &[]).unwrap();
    assert_eq!(empty.accepted, 0);
    assert_eq!(empty.next_token, Some(good));
}

#[test]
fn stochastic_verifier_edge_cases() {
    let v = vocab(5);
    let table = random_table(&v, 2, 0.1, 0.3, 31);
    let target = table_model(table.clone(), 4, 1.0);
    let s = SamplerConfig::new(1.0, 3);
    let ctx = toks(&[2]);
    let mut rng = s.rng();
    for _ in 0..200 {
        // p_i = q_i: always fully accepted
        let drafted = draft_standard(&target, 4, &ctx, 3, &s, &mut rng).unwrap();
        let verdict = verify_stochastic(&target, &ctx, &drafted.candidates, &s, &mut rng).unwrap();
        let eos_at = drafted.candidates.iter().position(|c| c.token == v.eos());
        match eos_at {
            Some(j) => assert_eq!((verdict.accepted, verdict.next_token), (j + 1, None)),
            None => assert_eq!(verdict.accepted, drafted.candidates.len()),
        }
    }
    // a token the target gives zero mass is always rejected and replaced from q
    let mut z = NGramTable::empty(2, 1e-300, v.clone()).unwrap();
    z.set_counts(&ctx, vec![0.0, 0.0, 0.0, 5.0, 5.0]).unwrap();
    let zero_target = table_model(z, 4, 1.0);
    let cand = DraftCandidate {
        token: TokenId(2),
        confidence: 1.0,
        exit_depth: 4,
        dist: ProbDist::one_hot(5, TokenId(2)),
    };
    for _ in 0..200 {
        let verdict = verify_stochastic(
            &zero_target,
            &ctx,
            std::slice::from_ref(&cand),
            &s,
            &mut rng,
        )
        .unwrap();
        assert_eq!(verdict.accepted, 0);
        assert!(verdict.next_token == Some(TokenId(3)) || verdict.next_token == Some(TokenId(4)));
    }
}

#[test]
fn single_step_identity_on_random_pairs() {
    let mut rng = Rng::new(2024);
    for _ in 0..1000 {
        let n = 2 + rng.below(7);
        let p = ProbDist::normalized((0..n).map(|_| rng.next_f64() + 1e-3).collect()).unwrap();
        let q = ProbDist::normalized((0..n).map(|_| rng.next_f64() * rng.next_f64()).collect())
            .unwrap();
        let beta: f64 = (0..n).map(|i| p.probs()[i].min(q.probs()[i])).sum();
        let r = residual(&q, &p);
        for x in 0..n {
            let (px, qx) = (p.probs()[x], q.probs()[x]);
            let through = px * (qx / px).min(1.0) + (1.0 - beta) * r.probs()[x];
            assert!((through - qx).abs() < 1e-12);
        }
    }
}

fn tv(emp: &HashMap<Vec<TokenId>, usize>, n: usize, exact: &[(Vec<TokenId>, f64)]) -> f64 {
    let mut d = 0.0;
    for (seq, p) in exact {
        let e = *emp.get(seq).unwrap_or(&0) as f64 / n as f64;
        d += (e - p).abs();
    }
    let covered: usize = exact.iter().map(|(s, _)| *emp.get(s).unwrap_or(&0)).sum();
    d += (n - covered) as f64 / n as f64;
    d / 2.0
}

fn sampled_tv(
    target: &s2d_core::model::ModelHandle,
    draft: &s2d_core::model::ModelHandle,
    policy: &DraftPolicy,
    exact: &[(Vec<TokenId>, f64)],
    horizon: usize,
    n: usize,
    seed: u64,
) -> f64 {
    let s = SamplerConfig::new(1.0, seed);
    let mut rng = s.rng();
    let mut emp = HashMap::new();
    for _ in 0..n {
        let t =
            speculative_decode(target, draft, policy, &toks(&[2]), horizon, &s, &mut rng).unwrap();
        *emp.entry(t.output).or_insert(0) += 1;
    }
    tv(&emp, n, exact)
}

#[test]
fn stochastic_decoding_matches_enumerated_target() {
    let v = vocab(4);
    let target_table = random_table(&v, 2, 0.2, 0.5, 41);
    let target = table_model(target_table.clone(), 8, 1.0);
    let draft = table_model(random_table(&v, 2, 0.2, 0.5, 42), 2, 1.0);
    let exact = enumerate_continuations(&toks(&[2]), 2, Some(v.eos()), |c| {
        target_table.conditional(c)
    });
    let d = sampled_tv(
        &target,
        &draft,
        &DraftPolicy::fixed_exit(2, 2),
        &exact,
        2,
        200_000,
        9,
    );
    assert!(d <= 0.005, "TV {d}");
}

/// With an intermediate threshold the exit is chosen after looking at the
/// sampled token, so the token actually proposed follows a mixture over the
/// probed exits rather than the emitting exit's distribution. Verification
/// against the emitting exit's distribution is then biased.
///
/// Exit 1 proposes a:0.9 b:0.1 behind threshold 0.5, exit 2 proposes a:0.1
/// b:0.9, the target is a:0.5 b:0.5. By hand, the first output token is b with
/// probability 0.9 * 4/9 (exit-1 a rejected) + 0.1 * 0.9 * 5/9 (exit-2 b
/// accepted) = 0.45 instead of 0.5. With every threshold at 0 it is exact.
#[test]
fn s2d_sampling_bias_matches_hand_computation() {
    let v = vocab(4);
    let alpha = 1e-12;
    let mut e1 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut e2 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut tt = NGramTable::empty(2, alpha, v.clone()).unwrap();
    for c in [2, 3] {
        e1.set_counts(&toks(&[c]), vec![0.0, 0.0, 9.0, 1.0])
            .unwrap();
        e2.set_counts(&toks(&[c]), vec![0.0, 0.0, 1.0, 9.0])
            .unwrap();
        tt.set_counts(&toks(&[c]), vec![0.0, 0.0, 5.0, 5.0])
            .unwrap();
    }
    let draft = ladder_model(2, vec![(1, e1), (2, e2)], 1.0);
    let target = table_model(tt, 8, 1.0);
    let freq_b = |th: Vec<f64>, seed: u64| {
        let policy = DraftPolicy::s2d(
            vec![1, 2],
            ThresholdSet::new(th).unwrap(),
            Fallback::StopDraft,
            1,
        );
        let s = SamplerConfig::new(1.0, seed);
        let mut rng = s.rng();
        let n = 50_000;
        let hits = (0..n)
            .filter(|_| {
                let t = speculative_decode(&target, &draft, &policy, &toks(&[2]), 2, &s, &mut rng)
                    .unwrap();
                t.output[0] == TokenId(3)
            })
            .count();
        hits as f64 / n as f64
    };
    // 50k draws: standard error about 0.0022
    assert!((freq_b(vec![0.0, 0.0], 1) - 0.5).abs() < 0.01);
    assert!((freq_b(vec![0.5, 0.0], 2) - 0.45).abs() < 0.01);
}

/// Expected emitted tokens of one round by enumeration: a drafted token `x`
/// survives with probability `min(p(x), q(x))`; an accepted `<eos>` ends the
/// round without a bonus.
fn expected_emitted(
    draft: &NGramTable,
    target: &NGramTable,
    ctx: &mut Vec<TokenId>,
    i: usize,
    k: usize,
    mass: f64,
    eos: TokenId,
) -> f64 {
    if i == k {
        return mass * (k + 1) as f64;
    }
    let p = draft.conditional(ctx);
    let q = target.conditional(ctx);
    let keep: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| a.min(*b))
        .collect();
    let mut total = mass * (1.0 - keep.iter().sum::<f64>()) * (i + 1) as f64;
    for (x, &m) in keep.iter().enumerate() {
        let tok = TokenId::from(x);
        if tok == eos {
            total += mass * m * (i + 1) as f64;
        } else {
            ctx.push(tok);
            total += expected_emitted(draft, target, ctx, i + 1, k, mass * m, eos);
            ctx.pop();
        }
    }
    total
}

#[test]
fn mat_matches_enumerated_expectation() {
    let v = vocab(4);
    let dt = random_table(&v, 2, 0.3, 0.3, 51);
    let tt = random_table(&v, 2, 0.3, 0.3, 52);
    let draft = table_model(dt.clone(), 2, 1.0);
    let target = table_model(tt.clone(), 8, 1.0);
    let k = 3;
    let prompts: Vec<Vec<TokenId>> = (0..16).map(|c| toks(&[c / 4, c % 4])).collect();
    let expected: f64 = prompts
        .iter()
        .map(|p| expected_emitted(&dt, &tt, &mut p.clone(), 0, k, 1.0, v.eos()))
        .sum::<f64>()
        / prompts.len() as f64;
    let s = SamplerConfig::new(1.0, 61);
    let mut rng = s.rng();
    let policy = DraftPolicy::fixed_exit(2, k);
    let mut rounds = Vec::new();
    for i in 0..100_000 {
        let prompt = &prompts[i % prompts.len()];
        // a budget of k + 1 tokens makes every decode exactly one round
        let t = speculative_decode(&target, &draft, &policy, prompt, k + 1, &s, &mut rng).unwrap();
        rounds.push(t.rounds[0].clone());
    }
    let trace = DecodeTrace {
        prompt: Vec::new(),
        output: Vec::new(),
        rounds,
        cost: CostLedger::default(),
        wall_ns: 1,
    };
    let m = mat(&trace).unwrap();
    assert!((m - expected).abs() < 0.02, "MAT {m} vs {expected}");
}

#[test]
fn perfect_draft_rounds_and_budget() {
    let v = vocab(6);
    let table = random_table(&v, 2, 0.1, 0.0, 71);
    let target = table_model(table, 8, 1.0);
    let policy = DraftPolicy::fixed_exit(8, 5);
    for sampler in [greedy(), SamplerConfig::new(1.0, 4)] {
        let mut rng = sampler.rng();
        let t = speculative_decode(
            &target,
            &target,
            &policy,
            &toks(&[2]),
            30,
            &sampler,
            &mut rng,
        )
        .unwrap();
        // an accepted <eos> counts as accepted too
        assert_eq!(acceptance_rate(&t).rate, 1.0);
        if !t.output.contains(&v.eos()) {
            assert_eq!(t.output.len(), 30);
            assert_eq!(t.rounds.len(), 5); // ceil(30 / 6)
            assert!(t.rounds.iter().all(|r| r.accepted == r.candidates.len()));
            assert_eq!(mat(&t).unwrap(), 6.0);
        }
        let one = speculative_decode(
            &target,
            &target,
            &policy,
            &toks(&[2]),
            1,
            &sampler,
            &mut rng,
        )
        .unwrap();
        assert_eq!(one.rounds.len(), 1);
        assert_eq!(one.output.len(), 1);
        assert!(one.rounds[0].candidates.is_empty());
    }
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let target = table_model(random_table(&vocab(5), 2, 0.1, 0.1, 1), 4, 1.0);
    let draft = table_model(random_table(&vocab(6), 2, 0.1, 0.1, 1), 4, 1.0);
    let r = speculative_decode(
        &target,
        &draft,
        &DraftPolicy::fixed_exit(4, 3),
        &toks(&[2]),
        5,
        &greedy(),
        &mut Rng::new(0),
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

fn check_round_invariants(t: &DecodeTrace) {
    for r in &t.rounds {
        assert!(r.accepted <= r.candidates.len());
        assert!((1..=r.candidates.len() + 1).contains(&r.emitted()));
    }
    assert_eq!(t.reconstruct(), t.output);
    assert_eq!(t.replay_cost(), t.cost);
}

#[test]
fn greedy_speculation_is_lossless_over_a_grid() {
    let v = vocab(7);
    let target = table_model(random_table(&v, 3, 0.05, 0.05, 81), 12, 1.0);
    let (ladder, _) = ladder_draft(90);
    let ladder = {
        // re-home the ladder onto the 7-symbol vocabulary
        let _ = ladder;
        ladder_model(
            4,
            vec![
                (2, random_table(&v, 2, 0.1, 0.05, 91)),
                (3, random_table(&v, 3, 0.1, 0.05, 92)),
                (4, random_table(&v, 3, 0.05, 0.05, 81)),
            ],
            1.0,
        )
    };
    let policies = vec![
        DraftPolicy::fixed_exit(2, 5),
        DraftPolicy::fixed_exit(4, 5),
        DraftPolicy::fixed_exit(3, 2),
        DraftPolicy::s2d(
            vec![2, 3, 4],
            ThresholdSet::new(vec![0.5, 0.4, 0.0]).unwrap(),
            Fallback::StopDraft,
            5,
        ),
        DraftPolicy::s2d(
            vec![2, 3, 4],
            ThresholdSet::new(vec![0.6, 0.6, 0.6]).unwrap(),
            Fallback::StopDraft,
            4,
        ),
        DraftPolicy::s2d(
            vec![2, 3, 4],
            ThresholdSet::new(vec![0.6, 0.6, 0.6]).unwrap(),
            Fallback::EmitFinal,
            4,
        ),
    ];
    for prompt in random_prompts(&v, 50, 3, 5) {
        let ar = autoregressive_decode(&target, &prompt, 24, &greedy(), &mut Rng::new(0)).unwrap();
        for p in &policies {
            let t = speculative_decode(
                &target,
                &ladder,
                p,
                &prompt,
                24,
                &greedy(),
                &mut Rng::new(0),
            )
            .unwrap();
            assert_eq!(t.output, ar.output, "{p:?}");
            check_round_invariants(&t);
        }
    }
}

#[test]
fn self_speculative_tables() {
    let v = vocab(6);
    let target = ladder_model(
        6,
        vec![
            (2, random_table(&v, 2, 0.1, 0.05, 101)),
            (4, random_table(&v, 2, 0.1, 0.05, 102)),
            (6, random_table(&v, 2, 0.1, 0.05, 103)),
        ],
        1.0,
    );
    let policy = DraftPolicy::s2d(
        vec![2, 4],
        ThresholdSet::new(vec![0.5, 0.0]).unwrap(),
        Fallback::StopDraft,
        4,
    );
    for prompt in random_prompts(&v, 20, 2, 6) {
        let ar = autoregressive_decode(&target, &prompt, 20, &greedy(), &mut Rng::new(0)).unwrap();
        let t = self_speculative_decode(
            &target,
            &[2, 4],
            &policy,
            &prompt,
            20,
            &greedy(),
            &mut Rng::new(0),
        )
        .unwrap();
        assert_eq!(t.output, ar.output);
        check_round_invariants(&t);
    }
    let s = SamplerConfig::new(1.0, 8);
    let a = self_speculative_decode(&target, &[2, 4], &policy, &toks(&[2]), 20, &s, &mut s.rng())
        .unwrap();
    let b = self_speculative_decode(&target, &[2, 4], &policy, &toks(&[2]), 20, &s, &mut s.rng())
        .unwrap();
    assert_eq!(a.without_timing(), b.without_timing());

    // the full depth as its own draft is a degenerate configuration
    let degenerate = DraftPolicy::s2d(
        vec![6],
        ThresholdSet::new(vec![0.0]).unwrap(),
        Fallback::StopDraft,
        4,
    );
    assert!(matches!(
        self_speculative_decode(
            &target,
            &[6],
            &degenerate,
            &toks(&[2]),
            5,
            &greedy(),
            &mut Rng::new(0)
        ),
        Err(Error::Config(_))
    ));
    // exits the target was not trained with are rejected
    assert!(self_speculative_decode(
        &target,
        &[3],
        &DraftPolicy::fixed_exit(3, 4),
        &toks(&[2]),
        5,
        &greedy(),
        &mut Rng::new(0)
    )
    .is_err());
}

/// Replays a 3-round S2D fixture by hand: ladder (2, 3, 4) drafting for a
/// 12-layer target.
#[test]
fn ledger_replay_fixture() {
    let v = vocab(4);
    let alpha = 1e-12;
    let mut t2 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut t3 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut t4 = NGramTable::empty(2, alpha, v.clone()).unwrap();
    let mut tt = NGramTable::empty(2, alpha, v.clone()).unwrap();
    // after a: depth 2 confident (0.9 on b); after b: only depth 4 reaches the threshold
    t2.set_counts(&toks(&[2]), vec![0.0, 0.0, 1.0, 9.0])
        .unwrap();
    t3.set_counts(&toks(&[2]), vec![0.0, 0.0, 1.0, 9.0])
        .unwrap();
    t4.set_counts(&toks(&[2]), vec![0.0, 0.0, 1.0, 9.0])
        .unwrap();
    t2.set_counts(&toks(&[3]), vec![0.0, 0.0, 5.0, 5.0])
        .unwrap();
    t3.set_counts(&toks(&[3]), vec![0.0, 0.0, 6.0, 4.0])
        .unwrap();
    t4.set_counts(&toks(&[3]), vec![0.0, 0.0, 8.0, 2.0])
        .unwrap();
    // target: a -> b, b -> b
    tt.set_counts(&toks(&[2]), vec![0.0, 0.0, 1.0, 9.0])
        .unwrap();
    tt.set_counts(&toks(&[3]), vec![0.0, 0.0, 4.0, 6.0])
        .unwrap();
    let draft = ladder_model(4, vec![(2, t2), (3, t3), (4, t4)], 1.0);
    let target = table_model(tt, 12, 4.0);
    let policy = DraftPolicy::s2d(
        vec![2, 3, 4],
        ThresholdSet::new(vec![0.75, 0.7, 0.0]).unwrap(),
        Fallback::StopDraft,
        2,
    );
    let t = speculative_decode(
        &target,
        &draft,
        &policy,
        &toks(&[2]),
        7,
        &greedy(),
        &mut Rng::new(0),
    )
    .unwrap();
    // round 1 from "a": draft b (depth 2, 2 units), then after b draft a (depth 4,
    //   4 units); target accepts b, rejects a -> emits b b.  6 units.
    // round 2 from "a b b": after b draft a at depth 4 (4 units); after a, b at depth 2
    //   (2 units); target rejects a -> emits b.  6 units.
    // round 3 from "a b b b": same as round 2 -> emits b.  6 units ...
    assert_eq!(
        t.rounds[0]
            .candidates
            .iter()
            .map(|c| c.exit_depth)
            .collect::<Vec<_>>(),
        vec![2, 4]
    );
    assert_eq!(t.rounds[0].accepted, 1);
    assert_eq!(t.rounds[0].draft_layer_units, 6);
    assert_eq!(
        t.rounds[1]
            .candidates
            .iter()
            .map(|c| c.exit_depth)
            .collect::<Vec<_>>(),
        vec![4, 2]
    );
    assert_eq!(t.rounds[1].accepted, 0);
    assert_eq!(t.rounds[1].draft_layer_units, 6);
    let units: u64 = t.rounds.iter().map(|r| r.draft_layer_units).sum();
    assert_eq!(units, t.cost.draft_layer_units);
    // modeled: output * 12 * 4 / (units * 1 + rounds * 48)
    let ct = CostProfile::new(12, 4.0).unwrap();
    let cd = CostProfile::new(4, 1.0).unwrap();
    let want = t.output.len() as f64 * 48.0 / (units as f64 + t.rounds.len() as f64 * 48.0);
    assert!((modeled_speedup(&t, &ct, &cd) - want).abs() < 1e-12);
    let hist = s2d_core::metrics::exit_histogram(&t);
    assert_eq!(hist.values().sum::<u64>() as usize, t.drafted());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_threshold_never_moves_the_exit_shallower(
        seed in 0u64..1000,
        base in prop::collection::vec(0.0f64..1.2, 3),
        which in 0usize..2,
        bump in 0.0f64..1.0,
        sampling in any::<bool>(),
    ) {
        let (draft, ladder) = ladder_draft(seed);
        let sampler = if sampling { SamplerConfig::new(1.0, seed) } else { greedy() };
        let mut raised = base.clone();
        raised[which] += bump;
        let ctx = toks(&[2, 3]);
        let a = draft_s2d(&draft, &ladder, &base, &ctx, 1, &sampler, &mut sampler.rng(), Fallback::EmitFinal).unwrap();
        let b = draft_s2d(&draft, &ladder, &raised, &ctx, 1, &sampler, &mut sampler.rng(), Fallback::EmitFinal).unwrap();
        prop_assert!(b.candidates[0].exit_depth >= a.candidates[0].exit_depth);
    }
}
