//! Toy task suite: JSONL, one `{id, category, prompt, max_new_tokens}` per line.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::family_line;
use crate::error::{BenchError, Result};
use s2d_core::model::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Translation,
    MultiTurnConversation,
    Rag,
    Math,
    Qa,
    Summarization,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Translation,
        Category::MultiTurnConversation,
        Category::Rag,
        Category::Math,
        Category::Qa,
        Category::Summarization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Translation => "translation",
            Category::MultiTurnConversation => "multi_turn_conversation",
            Category::Rag => "rag",
            Category::Math => "math",
            Category::Qa => "qa",
            Category::Summarization => "summarization",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskItem {
    pub id: String,
    pub category: Category,
    pub prompt: String,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    pub name: String,
    pub items: Vec<TaskItem>,
}

impl TaskSuite {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let item: TaskItem = serde_json::from_str(line)
                .map_err(|e| BenchError::Config(format!("tasks line {}: {e}", i + 1)))?;
            if item.prompt.is_empty() {
                return Err(BenchError::Config(format!(
                    "tasks line {}: empty prompt",
                    i + 1
                )));
            }
            if item.max_new_tokens == 0 {
                return Err(BenchError::Config(format!(
                    "tasks line {}: max_new_tokens must be positive",
                    i + 1
                )));
            }
            if !seen.insert(item.id.clone()) {
                return Err(BenchError::Config(format!(
                    "tasks line {}: duplicate id {:?}",
                    i + 1,
                    item.id
                )));
            }
            items.push(item);
        }
        if items.is_empty() {
            return Err(BenchError::Config("no tasks".into()));
        }
        Ok(Self {
            name: name.to_string(),
            items,
        })
    }

    pub fn filter(&self, categories: &[Category]) -> Self {
        Self {
            name: self.name.clone(),
            items: self
                .items
                .iter()
                .filter(|t| categories.contains(&t.category))
                .cloned()
                .collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|t| serde_json::to_string(t).expect("task items serialize") + "\n")
            .collect()
    }
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskSuite> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("tasks");
    TaskSuite::parse(name, &text)
}

/// The bundled suite: `per_category` prompts per category from the corpus
/// grammar, drawn with a seed disjoint from the corpus seed.
pub fn toy_suite(per_category: usize, max_new_tokens: usize, seed: u64) -> TaskSuite {
    let mut rng = Rng::new(seed);
    let mut items = Vec::new();
    for (f, cat) in Category::ALL.into_iter().enumerate() {
        for i in 0..per_category {
            let (prompt, _) = family_line(f, &mut rng);
            items.push(TaskItem {
                id: format!("{}-{}", cat.as_str(), i + 1),
                category: cat,
                prompt,
                max_new_tokens,
            });
        }
    }
    TaskSuite {
        name: "toy".into(),
        items,
    }
}
