//! Sequential vs data-parallel execution of the two hot loops: the batched
//! sorted-loss gradient and a batch of independent decode sessions.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use s2d_core::decoding::{speculative_decode, DraftPolicy, Fallback, ThresholdSet};
use s2d_core::exec::{self, ExecMode};
use s2d_core::model::{ModelHandle, Rng, SamplerConfig, TokenId, Vocabulary};
use s2d_core::transformer::{
    loss_and_grad, mode_weights, TinyTransformer, TrainingMode, TransformerConfig,
};

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn toy(n_layers: usize, seed: u64) -> TinyTransformer {
    let vocab = Vocabulary::from_text("abcdefghijklmnop .").unwrap();
    let config = TransformerConfig {
        n_layers,
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        max_context: 64,
        vocab_size: vocab.size(),
        init_seed: seed,
    };
    TinyTransformer::init(config, vocab).unwrap()
}

fn batch(n: usize, len: usize, vocab: usize) -> Vec<Vec<TokenId>> {
    let mut rng = Rng::new(1);
    (0..n)
        .map(|_| {
            (0..len)
                .map(|_| TokenId::from(2 + rng.below(vocab - 2)))
                .collect()
        })
        .collect()
}

fn gradient(c: &mut Criterion) {
    let mut model = toy(4, 3).with_ladder(vec![2, 3, 4]).unwrap();
    model.set_training_mode(TrainingMode::Soft);
    let weights = mode_weights(&model, TrainingMode::Soft);
    let data = batch(8, 32, model.vocabulary().size());
    let mut group = c.benchmark_group("sorted_loss_gradient");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| loss_and_grad(&model, &data, &weights, mode).unwrap().loss)
        });
    }
    group.finish();
}

fn decode_batch(c: &mut Criterion) {
    let target = ModelHandle::from_model(toy(6, 5), 4.0).unwrap();
    let draft_model = toy(4, 7).with_ladder(vec![2, 3, 4]).unwrap();
    let draft = ModelHandle::from_model(draft_model, 1.0).unwrap();
    let policy = DraftPolicy::s2d(
        vec![2, 3, 4],
        ThresholdSet::new(vec![0.3, 0.2, 0.0]).unwrap(),
        Fallback::StopDraft,
        4,
    );
    let prompts = batch(8, 4, target.vocab().size());
    let sampler = SamplerConfig::greedy();
    let mut group = c.benchmark_group("decode_sessions");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                exec::map(mode, &prompts, |p| {
                    speculative_decode(&target, &draft, &policy, p, 16, &sampler, &mut Rng::new(0))
                        .unwrap()
                        .output
                        .len()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, decode_batch);
criterion_main!(benches);
