use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{KnowledgeDoc, Prompts};
use crate::llm::{LlmClient, LlmRequest, TaskKind};

/// What a clause asserts about the knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClaimKind {
    LowerBound,
    UpperBound,
    Special,
    Suggestion,
    Other,
}

static LOWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(no less than|not less than|at least|minimum|lower bound|or (?:more|higher|larger))\b").unwrap()
});
static UPPER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(no more than|not more than|at most|up to|maximum|exceed|upper bound|less than|below|or (?:less|lower|smaller))\b").unwrap()
});
static LOWER_WEAK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(more than|above|larger than|greater than)\b").unwrap());
static SPECIAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(disables?|disabled|turns? off|special|sentinel|means that|falls? back)\b").unwrap()
});
static SUGGEST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(set|sets|setting|recommends?|recommended|suggests?|suggested|use|start with|starting point|typical|good value)\b").unwrap()
});
static QUANTITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix) -?\d+(?:\.\d+)?
        (?: \s*%\s*of\s+(?:the\s+)?(?:total\s+|available\s+|system\s+|physical\s+)*[a-z]+(?:\s+cache)?
          | \s*%
          | \s*(?:[kmgt]i?b|bytes|ms|min(?:utes)?|sec(?:onds)?|s|h|hours|d|days)\b )?",
    )
    .unwrap()
});
static BUT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i),?\s+but\s+").unwrap());

fn classify(clause: &str) -> ClaimKind {
    if LOWER.is_match(clause) {
        ClaimKind::LowerBound
    } else if UPPER.is_match(clause) {
        ClaimKind::UpperBound
    } else if LOWER_WEAK.is_match(clause) {
        ClaimKind::LowerBound
    } else if SPECIAL.is_match(clause) {
        ClaimKind::Special
    } else if SUGGEST.is_match(clause) {
        ClaimKind::Suggestion
    } else {
        ClaimKind::Other
    }
}

fn normalize_quantity(q: &str) -> String {
    q.to_ascii_lowercase()
        .replace("the ", "")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect()
}

fn quantities(text: &str) -> Vec<String> {
    QUANTITY
        .find_iter(text)
        .map(|m| normalize_quantity(m.as_str()))
        .collect()
}

fn normalize_text(text: &str) -> String {
    text.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '%' && c != '.')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches('.')
        .to_string()
}

/// Splits text into sentence-level clauses, further splitting on "but".
fn clauses(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?' | ';') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    sentences.push(current);
    sentences
        .iter()
        .flat_map(|s| BUT.split(s).map(str::to_string).collect::<Vec<_>>())
        .map(|c| c.trim().trim_end_matches([';', ',']).trim().to_string())
        .filter(|c| c.chars().any(|ch| ch.is_alphanumeric()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedClause {
    pub text: String,
    pub priority: u8,
    pub kind: ClaimKind,
    pub quantity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeResult {
    pub kept: Vec<MergedClause>,
    /// Clauses removed because a more trusted source said otherwise.
    pub dropped: Vec<MergedClause>,
}

impl MergeResult {
    pub fn text(&self) -> String {
        self.kept
            .iter()
            .map(|c| {
                let t = c.text.trim();
                if t.ends_with(['.', '!', '?']) {
                    t.to_string()
                } else {
                    format!("{t}.")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Quantities mentioned only by dropped clauses.
    fn rejected_quantities(&self) -> BTreeSet<String> {
        let kept: BTreeSet<_> = self.kept.iter().flat_map(|c| quantities(&c.text)).collect();
        self.dropped
            .iter()
            .flat_map(|c| quantities(&c.text))
            .filter(|q| !kept.contains(q))
            .collect()
    }
}

/// Deterministic priority merge. Clauses are visited in priority order; a
/// clause is dropped when it repeats an accepted one, or when a strictly more
/// trusted source already made a claim of the same kind with a different
/// quantity.
pub fn merge_by_priority(docs: &[KnowledgeDoc]) -> MergeResult {
    let mut ordered: Vec<&KnowledgeDoc> = docs.iter().collect();
    ordered.sort_by_key(|d| d.priority());
    let mut result = MergeResult::default();
    let mut seen = BTreeSet::new();
    for doc in ordered {
        for text in clauses(&doc.text) {
            let norm = normalize_text(&text);
            if !seen.insert(norm) {
                continue;
            }
            let clause = MergedClause {
                kind: classify(&text),
                quantity: quantities(&text).into_iter().next(),
                priority: doc.priority(),
                text,
            };
            let conflict = clause.kind != ClaimKind::Other
                && result.kept.iter().any(|k| {
                    k.kind == clause.kind
                        && k.priority < clause.priority
                        && (k.quantity != clause.quantity || k.quantity.is_some())
                });
            if conflict {
                log::debug!("dropping lower-priority clause {:?}", clause.text);
                result.dropped.push(clause);
            } else {
                result.kept.push(clause);
            }
        }
    }
    result
}

/// Summarizes the legal documents of one knob. Returns `None` when there is
/// nothing to summarize.
///
/// The model rewrites the priority-merged text; its answer is discarded in
/// favor of the merged text when it fails or reintroduces a quantity that only
/// a dropped clause mentioned.
pub fn summarize(
    docs: &[KnowledgeDoc],
    llm: Option<&dyn LlmClient>,
    prompts: &Prompts,
    dbms: &str,
) -> Option<(String, MergeResult)> {
    let knob = docs.first()?.knob_name.clone();
    let merged = merge_by_priority(docs);
    let merged_text = merged.text();
    let Some(llm) = llm else {
        return Some((merged_text, merged));
    };
    let mut sorted: Vec<&KnowledgeDoc> = docs.iter().collect();
    sorted.sort_by_key(|d| d.priority());
    let sources = sorted
        .iter()
        .map(|d| format!("[priority {}] {}", d.priority(), d.text))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = prompts.render(
        "summarize",
        &[("dbms", dbms), ("knob", &knob), ("merged", &merged_text), ("sources", &sources)],
    );
    let summary = match llm.complete(&LlmRequest::new(TaskKind::Summarize, knob.as_str(), 0, prompt)) {
        Ok(text) if !text.trim().is_empty() => {
            let rejected = merged.rejected_quantities();
            let leaked: Vec<_> = quantities(&text).into_iter().filter(|q| rejected.contains(q)).collect();
            if leaked.is_empty() {
                text.trim().to_string()
            } else {
                log::warn!("summary for {knob} reintroduced dropped content {leaked:?}; using merged text");
                merged_text
            }
        }
        Ok(_) => merged_text,
        Err(e) => {
            log::warn!("summarize {knob}: {e}; using merged text");
            merged_text
        }
    };
    Some((summary, merged))
}
