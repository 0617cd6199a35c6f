#![allow(dead_code)]

use s2d_core::model::{CostProfile, ModelHandle, Rng, TokenId, Vocabulary};
use s2d_core::tabular::{ngram_as_model, NGramTable, TabularModel};

pub fn vocab(n: usize) -> Vocabulary {
    let mut symbols = vec!["<bos>".to_string(), "<eos>".to_string()];
    symbols.extend((2..n).map(|i| ((b'a' + (i - 2) as u8) as char).to_string()));
    Vocabulary::new(symbols, TokenId(0), TokenId(1)).unwrap()
}

pub fn toks(ids: &[u32]) -> Vec<TokenId> {
    ids.iter().map(|&i| TokenId(i)).collect()
}

/// Every context of length `order - 1` gets random counts; `<eos>` is damped
/// by `eos_scale`.
pub fn random_table(
    v: &Vocabulary,
    order: usize,
    alpha: f64,
    eos_scale: f64,
    seed: u64,
) -> NGramTable {
    let mut rng = Rng::new(seed);
    let mut table = NGramTable::empty(order, alpha, v.clone()).unwrap();
    let n = v.size();
    let ctx_len = order - 1;
    for code in 0..n.pow(ctx_len as u32) {
        let mut ctx = Vec::with_capacity(ctx_len);
        let mut c = code;
        for _ in 0..ctx_len {
            ctx.push(TokenId::from(c % n));
            c /= n;
        }
        let counts = (0..n)
            .map(|i| {
                let x = rng.next_f64() * 10.0;
                if i == v.eos().index() {
                    x * eos_scale
                } else {
                    x
                }
            })
            .collect();
        table.set_counts(&ctx, counts).unwrap();
    }
    table
}

pub fn table_model(table: NGramTable, n_layers: usize, unit_cost: f64) -> ModelHandle {
    ngram_as_model(table, CostProfile::new(n_layers, unit_cost).unwrap()).unwrap()
}

pub fn ladder_model(
    n_layers: usize,
    rungs: Vec<(usize, NGramTable)>,
    unit_cost: f64,
) -> ModelHandle {
    ModelHandle::from_model(TabularModel::ladder(n_layers, rungs).unwrap(), unit_cost).unwrap()
}

pub fn random_prompts(v: &Vocabulary, n: usize, len: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            (0..len)
                .map(|_| TokenId::from(2 + rng.below(v.size() - 2)))
                .collect()
        })
        .collect()
}
