//! Bundled data files match their generators. Run with `S2D_BLESS=1` to
//! rewrite them.

use std::path::PathBuf;

use s2d_bench::corpus::{generate, CORPUS_LINES, CORPUS_SEED};
use s2d_bench::tasks::{load_tasks, toy_suite, Category};

pub const TASK_SEED: u64 = 7;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn check(name: &str, expected: &str) {
    let path = data(name);
    if std::env::var_os("S2D_BLESS").is_some() {
        std::fs::write(&path, expected).unwrap();
    }
    let found = std::fs::read_to_string(&path).unwrap();
    assert!(found == expected, "{name} is stale; rerun with S2D_BLESS=1");
}

#[test]
fn corpus_matches_generator() {
    check("corpus.txt", &generate(CORPUS_SEED, CORPUS_LINES));
}

#[test]
fn task_suite_matches_generator() {
    check("tasks.jsonl", &toy_suite(5, 24, TASK_SEED).to_jsonl());
    let suite = load_tasks(data("tasks.jsonl")).unwrap();
    assert_eq!(suite.items.len(), 30);
    for c in Category::ALL {
        assert_eq!(suite.items.iter().filter(|t| t.category == c).count(), 5);
    }
}
