//! Turning natural-language tuning advice into a per-knob Tuning Lake and
//! then into structured, machine-readable knowledge.
//!
//! Preparation runs collect, filter, summarize and consistency-check per
//! knob. Transformation extracts attributes from each lake entry with an
//! ensemble of few-shot prompts and aggregates them by majority vote.

mod collect;
mod consistency;
mod filter;
mod lake;
mod pipeline;
mod prompts;
mod summarize;
mod transform;

use serde::{Deserialize, Serialize};

use crate::catalog::KnobValue;

pub use collect::{collect, CollectOutcome, FileDropSource, KnowledgeSource, LlmSource};
pub use consistency::consistency_check;
pub use filter::{filter_noise, rule_check, Verdict};
pub use lake::{
    read_lake, read_lake_entry, read_structured, read_structured_dir, write_lake_entry,
    write_structured, LakeSidecar,
};
pub use pipeline::{KnowledgePipeline, PipelineSettings, PrepareOutcome};
pub use prompts::Prompts;
pub use summarize::{merge_by_priority, summarize, ClaimKind, MergeResult};
pub use transform::{
    extract, load_example_pool, majority_vote, sample_examples, transform, validate_structured,
    Candidate, Example, TransformContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Manual,
    Web,
    Llm,
}

impl Source {
    /// Lower is more trusted: manual 0, web 1, llm 2.
    pub fn priority(self) -> u8 {
        match self {
            Source::Manual => 0,
            Source::Web => 1,
            Source::Llm => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Manual => "manual",
            Source::Web => "web",
            Source::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub knob_name: String,
    pub source: Source,
    pub text: String,
    /// Where the text came from (file path or model id).
    pub origin: String,
}

impl KnowledgeDoc {
    /// Returns `None` for blank text.
    pub fn new(knob: &str, source: Source, text: &str, origin: &str) -> Option<Self> {
        let text = text.trim();
        (!text.is_empty()).then(|| KnowledgeDoc {
            knob_name: knob.to_string(),
            source,
            text: text.to_string(),
            origin: origin.to_string(),
        })
    }

    pub fn priority(&self) -> u8 {
        self.source.priority()
    }

    pub fn reference(&self) -> String {
        format!("{}:{}", self.source.as_str(), self.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningLakeEntry {
    pub knob_name: String,
    pub summary: String,
    pub provenance: Vec<String>,
    pub consistency_attempts: u32,
    /// False when the consistency loop ran out of rounds.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialValue {
    pub value: KnobValue,
    pub meaning: String,
}

/// Structured view of one knob's tuning knowledge. Text values are quantity
/// expressions kept verbatim and resolved against the system profile when
/// the search space is built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredKnob {
    #[serde(rename = "name")]
    pub knob_name: String,
    pub suggested_values: Vec<KnobValue>,
    pub min_value: Option<KnobValue>,
    pub max_value: Option<KnobValue>,
    pub special_value: Option<SpecialValue>,
}

impl StructuredKnob {
    pub fn empty(knob: &str) -> Self {
        StructuredKnob {
            knob_name: knob.to_string(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionTask {
    RangeAndSuggested,
    SpecialValue,
}
