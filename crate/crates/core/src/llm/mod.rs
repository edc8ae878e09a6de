//! Language-model clients.
//!
//! Every prompt carries a [`LlmRequest`] descriptor (task, subject, attempt)
//! besides its text, so the scripted [`MockLlm`] can answer from fixtures
//! without matching on prompt wording.

mod http;
mod mock;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use http::{HttpLlm, HttpLlmConfig};
pub use mock::{MockEntry, MockLlm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Ask the model itself for tuning advice on a knob.
    Elicit,
    FilterNoise,
    Summarize,
    ConsistencyCheck,
    Revise,
    ExtractRange,
    ExtractSpecial,
    SelectSystem,
    SelectWorkload,
    SelectQuery,
    SelectDependencies,
    RankImportance,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Elicit => "elicit",
            TaskKind::FilterNoise => "filter_noise",
            TaskKind::Summarize => "summarize",
            TaskKind::ConsistencyCheck => "consistency_check",
            TaskKind::Revise => "revise",
            TaskKind::ExtractRange => "extract_range",
            TaskKind::ExtractSpecial => "extract_special",
            TaskKind::SelectSystem => "select_system",
            TaskKind::SelectWorkload => "select_workload",
            TaskKind::SelectQuery => "select_query",
            TaskKind::SelectDependencies => "select_dependencies",
            TaskKind::RankImportance => "rank_importance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub task: TaskKind,
    /// Knob name, DBMS id, query id or `*`, depending on the task.
    pub subject: String,
    /// Index of the prompt variant or loop round, starting at 0.
    pub attempt: u32,
    pub prompt: String,
}

impl LlmRequest {
    pub fn new(task: TaskKind, subject: impl Into<String>, attempt: u32, prompt: String) -> Self {
        LlmRequest {
            task,
            subject: subject.into(),
            attempt,
            prompt,
        }
    }
}

/// A completion backend. Implementations must tolerate concurrent callers.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String>;

    /// Identifier recorded in provenance sidecars.
    fn model(&self) -> &str;
}

/// Extracts the first JSON value embedded in a model response, tolerating
/// code fences and surrounding prose.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        let (Some(start), Some(end)) = (trimmed.find(open), trimmed.rfind(close)) else {
            continue;
        };
        if start < end {
            if let Ok(v) = serde_json::from_str(&trimmed[start..=end]) {
                return Some(v);
            }
        }
    }
    None
}
