#![allow(dead_code)]

use std::path::{Path, PathBuf};

use s2d_bench::corpus::{generate, CORPUS_SEED};
use s2d_core::model::Vocabulary;
use s2d_core::tabular::NGramTable;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// N-gram tables over the generated corpus, one per `(order, alpha)`.
pub fn tables(specs: &[(usize, f64)]) -> Vec<NGramTable> {
    let text = generate(CORPUS_SEED, 600);
    let vocab =
        Vocabulary::from_text(&generate(CORPUS_SEED, s2d_bench::corpus::CORPUS_LINES)).unwrap();
    let lines: Vec<_> = text
        .lines()
        .map(|l| vocab.encode_chars(&format!("{l}\n")).unwrap())
        .collect();
    specs
        .iter()
        .map(|&(order, alpha)| NGramTable::build(&lines, order, alpha, vocab.clone()).unwrap())
        .collect()
}

pub fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
    p
}

/// A directory holding a 3-gram target, a 2-exit draft ladder (unigram at
/// exit 1, bigram at exit 2), the first `per_category` items of the bundled
/// suite, and an experiment config built from `extra` merged over defaults.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(per_category: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let t = tables(&[(3, 0.05), (1, 0.5), (2, 0.1)]);
        write_json(dir.path(), "target.json", &t[0]);
        write_json(dir.path(), "uni.json", &t[1]);
        write_json(dir.path(), "bi.json", &t[2]);
        let suite = std::fs::read_to_string(data_dir().join("tasks.jsonl")).unwrap();
        let mut kept = Vec::new();
        let mut seen = std::collections::BTreeMap::new();
        for line in suite.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let n = seen
                .entry(v["category"].as_str().unwrap().to_string())
                .or_insert(0);
            *n += 1;
            if *n <= per_category {
                kept.push(line.to_string());
            }
        }
        std::fs::write(dir.path().join("tasks.jsonl"), kept.join("\n") + "\n").unwrap();
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Default two-target config; `patch` edits the JSON before it is written.
    pub fn config(&self, patch: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
        let mut v = serde_json::json!({
            "name": "fixture",
            "tasks": "tasks.jsonl",
            "max_new_tokens": 12,
            "targets": [
                {"name": "big", "model": {"kind": "ngram", "path": "target.json", "n_layers": 12}, "unit_cost": 16.0},
                {"name": "small", "model": {"kind": "ngram", "path": "target.json", "n_layers": 8}, "unit_cost": 2.7}
            ],
            "draft": {"model": {"kind": "ngram_ladder", "rungs": [
                {"exit": 1, "path": "uni.json"}, {"exit": 2, "path": "bi.json"}
            ]}, "unit_cost": 1.0},
            "methods": [
                {"name": "AR", "kind": "autoregressive"},
                {"name": "L1+SD", "kind": "speculative", "policy": {"kind": "fixed_exit", "depth": 1, "max_draft_len": 4}},
                {"name": "L2+SD", "kind": "speculative", "policy": {"kind": "fixed_exit", "depth": 2, "max_draft_len": 4}},
                {"name": "S2D", "kind": "speculative", "policy": {"kind": "s2d", "ladder": [1, 2], "thresholds": [0.3, 0.0], "max_draft_len": 4}}
            ],
            "temperatures": [0.0, 1.0],
            "seeds": [0, 1],
            "sweep": {"method": "S2D", "axes": [[0.0, 0.3, 1.1], [0.0]]}
        });
        patch(&mut v);
        let p = self.path("experiment.json");
        std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
        p
    }
}
