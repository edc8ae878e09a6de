use std::sync::LazyLock;

use regex::Regex;

use super::{KnowledgeDoc, Prompts};
use crate::catalog::{KnobKind, KnobSpec, SystemProfile, Unit};
use crate::llm::{extract_json, LlmClient, LlmRequest, TaskKind};
use crate::quantity::{parse_quantity, resolve_quantity, Quantity, Suffix};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub keep: bool,
    pub reason: Option<String>,
    /// Set when the model could not be consulted and only rules decided.
    pub low_confidence: bool,
}

impl Verdict {
    fn keep(low_confidence: bool) -> Self {
        Verdict {
            keep: true,
            reason: None,
            low_confidence,
        }
    }

    fn discard(reason: String) -> Self {
        Verdict {
            keep: false,
            reason: Some(reason),
            low_confidence: false,
        }
    }
}

/// Quantities that appear as a recommendation ("set to X", "between X and
/// Y", "no more than X", ...).
static CLAIM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?ix)
        \b(?: set(?:ting)?(?:\s+\w+){0,3}?\s+to | between | and | at\s+least | at\s+most
            | no\s+(?:more|less)\s+than | not\s+(?:more|less)\s+than | up\s+to
            | value\s+of | use | recommend(?:s|ed)?(?:\s+value)? )
        \s+(?:a\s+value\s+(?:of\s+)?)?
        (?P<q> -?\d+(?:\.\d+)?
            (?: \s*%\s*of\s+(?:the\s+)?(?:total\s+|available\s+|system\s+|physical\s+)*(?:ram|memory|disk)
              | \s*%
              | \s*(?:[kmgt]i?b|bytes|ms|min(?:utes)?|sec(?:onds)?|s|h|hours|d|days)\b )? )",
    )
    .unwrap()
});

/// Deterministic checks of recommended quantities against the system view:
/// wrong unit family, fractional values for integer knobs, and values outside
/// the vendor bounds. Returns a discard reason on conflict.
pub fn rule_check(text: &str, spec: &KnobSpec, profile: &SystemProfile) -> Option<String> {
    for caps in CLAIM.captures_iter(text) {
        let token = caps["q"].trim();
        let Ok(quantity) = parse_quantity(token) else {
            continue;
        };
        let family_ok = match (&quantity, spec.unit) {
            (Quantity::Literal { suffix: Some(Suffix::Memory(_)), .. }, unit) => unit.is_memory(),
            (Quantity::Literal { suffix: Some(Suffix::Time(_)), .. }, unit) => {
                matches!(unit, Unit::Milliseconds | Unit::Seconds)
            }
            (Quantity::Percent { .. }, unit) => unit.is_memory(),
            (Quantity::Literal { suffix: None, .. }, _) => true,
        };
        if !family_ok {
            return Some(format!("{token:?} has the wrong type for a {:?} knob", spec.kind));
        }
        if !spec.kind.is_numeric() {
            continue;
        }
        // A bare number on a unit-bearing knob is ambiguous (native unit or
        // canonical?), so it is left to the model.
        if matches!(quantity, Quantity::Literal { suffix: None, .. }) && spec.unit != Unit::None {
            continue;
        }
        let Ok(value) = resolve_quantity(token, profile, spec.unit) else {
            continue;
        };
        if spec.kind == KnobKind::Integer
            && spec.unit == Unit::None
            && value.fract() != 0.0
        {
            return Some(format!("{token:?} is fractional but the knob is an integer"));
        }
        if let Some((lo, hi)) = spec.bounds() {
            if value < lo || value > hi {
                return Some(format!("{token:?} lies outside the legal range [{lo}, {hi}]"));
            }
        }
    }
    None
}

fn system_view_json(spec: &KnobSpec) -> String {
    serde_json::to_string(spec).unwrap_or_default()
}

/// Classifies one document as legal guidance or noise. Rule checks run first;
/// the model is consulted only when they pass.
pub fn filter_noise(
    doc: &KnowledgeDoc,
    spec: &KnobSpec,
    profile: &SystemProfile,
    llm: Option<&dyn LlmClient>,
    prompts: &Prompts,
    dbms: &str,
) -> Verdict {
    if let Some(reason) = rule_check(&doc.text, spec, profile) {
        return Verdict::discard(reason);
    }
    let Some(llm) = llm else {
        return Verdict::keep(true);
    };
    let prompt = prompts.render(
        "filter_noise",
        &[
            ("dbms", dbms),
            ("system_view", &system_view_json(spec)),
            ("knowledge", &doc.text),
        ],
    );
    let request = LlmRequest::new(TaskKind::FilterNoise, spec.name.as_str(), doc.priority() as u32, prompt);
    let answer = match llm.complete(&request) {
        Ok(text) => text,
        Err(e) => {
            log::warn!("noise filter for {} fell back to rules: {e}", spec.name);
            return Verdict::keep(true);
        }
    };
    match extract_json(&answer).and_then(|v| v.get("conflict").and_then(|c| c.as_bool()).map(|c| (c, v))) {
        Some((true, v)) => Verdict::discard(
            v.get("reason")
                .and_then(|r| r.as_str())
                .unwrap_or("conflicts with the system view")
                .to_string(),
        ),
        Some((false, _)) => Verdict::keep(false),
        None => {
            log::warn!("unparsable noise verdict for {}: {answer:?}", spec.name);
            Verdict::keep(true)
        }
    }
}
