use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ExtractionTask, Prompts, SpecialValue, StructuredKnob, TuningLakeEntry};
use crate::catalog::{KnobKind, KnobSpec, KnobValue, SystemProfile};
use crate::error::{Error, Result};
use crate::llm::{extract_json, LlmClient, LlmRequest, TaskKind};
use crate::quantity::resolve_quantity;
use crate::util::{derive_seed, rng};

/// A curated question/answer pair used as a few-shot example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub knob: String,
    pub input: String,
    /// Full structured answer with all four attributes.
    pub output: Value,
}

const BUILTIN_POOL: &str = include_str!("../../resources/example_pool.json");

/// The example pool at `path`, or the builtin one.
pub fn load_example_pool(path: Option<&Path>) -> Result<Vec<Example>> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => BUILTIN_POOL.to_string(),
    };
    let pool: Vec<Example> = serde_json::from_str(&text)?;
    if pool.is_empty() {
        return Err(Error::InvalidArgument("example pool is empty".into()));
    }
    Ok(pool)
}

/// Draws `n` distinct pool entries uniformly without replacement.
pub fn sample_examples(pool: &[Example], n: usize, seed: u64) -> Result<Vec<Example>> {
    if n > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {n} examples from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = rng(seed);
    Ok(index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// One extraction result: attribute name to JSON value.
pub type Candidate = BTreeMap<String, Value>;

/// Integral floats become integers so that `1` and `1.0` vote together.
fn canonical(value: &Value) -> Value {
    match value {
        Value::Number(n) => match n.as_f64() {
            Some(f) if f.fract() == 0.0 && f.abs() < 9.0e15 && !n.is_i64() && !n.is_u64() => {
                json!(f as i64)
            }
            _ => value.clone(),
        },
        Value::String(s) => Value::String(s.trim().to_string()),
        Value::Array(items) => Value::Array(items.iter().map(canonical).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), canonical(v))).collect()),
        _ => value.clone(),
    }
}

fn is_vote(value: &Value) -> bool {
    !matches!(value, Value::Null) && !matches!(value, Value::Array(a) if a.is_empty())
}

/// Element-wise majority vote: per attribute, the most frequent non-absent
/// value. Ties go to the lexicographically smallest canonical JSON text.
pub fn majority_vote(candidates: &[Candidate]) -> Candidate {
    let mut tallies: BTreeMap<&str, HashMap<String, (usize, Value)>> = BTreeMap::new();
    for cand in candidates {
        for (attr, value) in cand {
            if !is_vote(value) {
                continue;
            }
            let value = canonical(value);
            let key = serde_json::to_string(&value).expect("json value serializes");
            tallies
                .entry(attr)
                .or_default()
                .entry(key)
                .or_insert((0, value))
                .0 += 1;
        }
    }
    tallies
        .into_iter()
        .filter_map(|(attr, counts)| {
            counts
                .into_iter()
                .min_by(|(ka, (ca, _)), (kb, (cb, _))| cb.cmp(ca).then_with(|| ka.cmp(kb)))
                .map(|(_, (_, v))| (attr.to_string(), v))
        })
        .collect()
}

pub struct TransformContext<'a> {
    pub llm: &'a dyn LlmClient,
    pub prompts: &'a Prompts,
    pub pool: &'a [Example],
    pub profile: &'a SystemProfile,
    pub ensemble_size: usize,
    pub examples_per_prompt: usize,
    pub seed: u64,
}

fn project(task: ExtractionTask, output: &Value) -> Value {
    match task {
        ExtractionTask::RangeAndSuggested => json!({
            "suggested_values": output.get("suggested_values").cloned().unwrap_or(json!([])),
            "min_value": output.get("min_value").cloned().unwrap_or(Value::Null),
            "max_value": output.get("max_value").cloned().unwrap_or(Value::Null),
        }),
        ExtractionTask::SpecialValue => match output.get("special_value") {
            Some(Value::Object(sv)) => json!({
                "special_value": sv.get("value").cloned().unwrap_or(Value::Null),
                "meaning": sv.get("meaning").cloned().unwrap_or(Value::Null),
            }),
            _ => json!({"special_value": null, "meaning": null}),
        },
    }
}

fn target_values(task: ExtractionTask) -> &'static str {
    match task {
        ExtractionTask::RangeAndSuggested => {
            "the recommended values (\"suggested_values\", a list), the recommended minimum \
             (\"min_value\") and the recommended maximum (\"max_value\")."
        }
        ExtractionTask::SpecialValue => {
            "the special value (\"special_value\"): a single value that makes the knob behave \
             differently from the rest of its range, such as 0 disabling a timeout, together \
             with its meaning (\"meaning\")."
        }
    }
}

fn scalar(value: Option<&Value>) -> Option<Value> {
    match value? {
        v @ (Value::Number(_) | Value::String(_)) => Some(v.clone()),
        _ => None,
    }
}

fn parse_candidate(task: ExtractionTask, answer: &str) -> Option<(Candidate, Option<String>)> {
    let Value::Object(obj) = extract_json(answer)? else {
        return None;
    };
    let mut cand = Candidate::new();
    let mut meaning = None;
    match task {
        ExtractionTask::RangeAndSuggested => {
            let suggested = match obj.get("suggested_values") {
                Some(Value::Array(items)) => {
                    let items: Vec<Value> = items.iter().filter_map(|i| scalar(Some(i))).collect();
                    (!items.is_empty()).then_some(Value::Array(items))
                }
                other => scalar(other).map(|v| Value::Array(vec![v])),
            };
            cand.extend(suggested.map(|v| ("suggested_values".to_string(), v)));
            for attr in ["min_value", "max_value"] {
                cand.extend(scalar(obj.get(attr)).map(|v| (attr.to_string(), v)));
            }
        }
        ExtractionTask::SpecialValue => {
            let (value, m) = match obj.get("special_value") {
                Some(Value::Object(sv)) => (scalar(sv.get("value")), sv.get("meaning")),
                other => (scalar(other), obj.get("meaning")),
            };
            meaning = m.and_then(|m| m.as_str()).map(str::to_string);
            cand.extend(value.map(|v| ("special_value".to_string(), v)));
        }
    }
    Some((cand, meaning))
}

fn to_knob_value(value: &Value) -> Option<KnobValue> {
    match value {
        Value::Number(n) => n.as_f64().map(KnobValue::Number),
        Value::String(s) => Some(KnobValue::Text(s.clone())),
        _ => None,
    }
}

fn render_examples(examples: &[Example], task: ExtractionTask) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            format!(
                "Example {}\nKnob: {}\nKnowledge: {}\nAnswer: {}\n",
                i + 1,
                ex.knob,
                ex.input,
                project(task, &ex.output)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Extracts structured knowledge from a lake entry with a prompt ensemble
/// per subtask, then validates the voted result against the knob. Dropped
/// attributes are logged.
pub fn transform(entry: &TuningLakeEntry, spec: &KnobSpec, ctx: &TransformContext<'_>) -> StructuredKnob {
    let (valid, warnings) = validate_structured(extract(entry, ctx), spec, ctx.profile);
    for w in warnings {
        log::warn!("{}: {w}", entry.knob_name);
    }
    valid
}

/// The majority-voted extraction, before validation.
pub fn extract(entry: &TuningLakeEntry, ctx: &TransformContext<'_>) -> StructuredKnob {
    let knob = entry.knob_name.as_str();
    if entry.summary.trim().is_empty() {
        return StructuredKnob::empty(knob);
    }
    let mut voted = Candidate::new();
    let mut meanings: Vec<(Value, String)> = Vec::new();
    for (task, kind) in [
        (ExtractionTask::RangeAndSuggested, TaskKind::ExtractRange),
        (ExtractionTask::SpecialValue, TaskKind::ExtractSpecial),
    ] {
        let mut candidates = Vec::new();
        for variant in 0..ctx.ensemble_size.max(1) {
            let seed = derive_seed(
                ctx.seed,
                &[knob.as_bytes(), kind.as_str().as_bytes(), &(variant as u64).to_le_bytes()],
            );
            let n = ctx.examples_per_prompt.min(ctx.pool.len());
            let examples = sample_examples(ctx.pool, n, seed).expect("n bounded by pool size");
            let prompt = ctx.prompts.render(
                "extract",
                &[
                    ("target_values", target_values(task)),
                    ("examples", &render_examples(&examples, task)),
                    ("knob", knob),
                    ("knowledge", &entry.summary),
                ],
            );
            let answer = match ctx.llm.complete(&LlmRequest::new(kind, knob, variant as u32, prompt)) {
                Ok(a) => a,
                Err(e) => {
                    log::warn!("{knob}: extraction variant {variant} failed: {e}");
                    continue;
                }
            };
            match parse_candidate(task, &answer) {
                Some((cand, meaning)) => {
                    if let (Some(v), Some(m)) = (cand.get("special_value"), meaning) {
                        meanings.push((canonical(v), m));
                    }
                    candidates.push(cand);
                }
                None => log::warn!("{knob}: skipping malformed extraction {answer:?}"),
            }
        }
        if !candidates.is_empty() {
            voted.extend(majority_vote(&candidates));
        }
    }

    let special_value = voted.get("special_value").and_then(|v| {
        let meaning = meanings
            .iter()
            .find(|(mv, _)| mv == v)
            .map(|(_, m)| m.clone())
            .unwrap_or_default();
        to_knob_value(v).map(|value| SpecialValue { value, meaning })
    });
    StructuredKnob {
        knob_name: knob.to_string(),
        suggested_values: match voted.get("suggested_values") {
            Some(Value::Array(items)) => items.iter().filter_map(to_knob_value).collect(),
            _ => Vec::new(),
        },
        min_value: voted.get("min_value").and_then(to_knob_value),
        max_value: voted.get("max_value").and_then(to_knob_value),
        special_value,
    }
}

fn resolve(value: &KnobValue, spec: &KnobSpec, profile: &SystemProfile) -> Option<f64> {
    match value {
        KnobValue::Number(v) => Some(*v),
        KnobValue::Text(s) => resolve_quantity(s, profile, spec.unit).ok(),
    }
}

fn normalize_choice(value: &KnobValue, spec: &KnobSpec) -> Option<KnobValue> {
    let text = match value {
        KnobValue::Text(s) => s.trim().to_ascii_lowercase(),
        KnobValue::Number(n) if spec.kind == KnobKind::Boolean => n.to_string(),
        KnobValue::Number(_) => return None,
    };
    let text = if spec.kind == KnobKind::Boolean {
        match text.as_str() {
            "on" | "true" | "yes" | "1" => "on".to_string(),
            "off" | "false" | "no" | "0" => "off".to_string(),
            _ => return None,
        }
    } else {
        text
    };
    spec.choices()
        .into_iter()
        .find(|c| c.to_ascii_lowercase() == text)
        .map(KnobValue::Text)
}

/// Drops attributes that violate the knob's domain: unresolvable expressions,
/// bounds outside the vendor range, inverted bounds, suggestions outside the
/// recommended range and special values outside the vendor range. Returns the
/// cleaned knowledge and one message per dropped attribute.
pub fn validate_structured(
    mut sk: StructuredKnob,
    spec: &KnobSpec,
    profile: &SystemProfile,
) -> (StructuredKnob, Vec<String>) {
    let mut warnings = Vec::new();
    if !spec.kind.is_numeric() {
        let before = sk.suggested_values.len();
        sk.suggested_values = sk
            .suggested_values
            .iter()
            .filter_map(|v| normalize_choice(v, spec))
            .collect();
        if sk.suggested_values.len() != before {
            warnings.push("dropped suggested values that are not valid choices".into());
        }
        for (name, attr) in [("min_value", &mut sk.min_value), ("max_value", &mut sk.max_value)] {
            if attr.take().is_some() {
                warnings.push(format!("dropped {name}: knob is not numeric"));
            }
        }
        if sk.special_value.take().is_some() {
            warnings.push("dropped special_value: knob is not numeric".into());
        }
        return (sk, warnings);
    }

    let (lo, hi) = spec.bounds().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let inside = |v: f64| v >= lo && v <= hi;
    let mut bound = |name: &str, attr: &mut Option<KnobValue>| -> Option<f64> {
        let value = attr.as_ref()?;
        match resolve(value, spec, profile) {
            Some(v) if inside(v) => Some(v),
            Some(v) => {
                warnings.push(format!("dropped {name} {value}: {v} outside [{lo}, {hi}]"));
                *attr = None;
                None
            }
            None => {
                warnings.push(format!("dropped {name} {value}: not a resolvable quantity"));
                *attr = None;
                None
            }
        }
    };
    let mut min = bound("min_value", &mut sk.min_value);
    let mut max = bound("max_value", &mut sk.max_value);
    if let (Some(a), Some(b)) = (min, max) {
        if a > b {
            warnings.push(format!("dropped inverted bounds [{a}, {b}]"));
            sk.min_value = None;
            sk.max_value = None;
            min = None;
            max = None;
        }
    }
    let lo_ok = min.unwrap_or(lo);
    let hi_ok = max.unwrap_or(hi);
    let before = sk.suggested_values.len();
    sk.suggested_values.retain(|v| {
        resolve(v, spec, profile).is_some_and(|x| x >= lo_ok && x <= hi_ok && inside(x))
    });
    if sk.suggested_values.len() != before {
        warnings.push(format!(
            "dropped {} suggested value(s) outside the recommended range",
            before - sk.suggested_values.len()
        ));
    }
    if let Some(sv) = &sk.special_value {
        if !resolve(&sv.value, spec, profile).is_some_and(inside) {
            warnings.push(format!("dropped special_value {}", sv.value));
            sk.special_value = None;
        }
    }
    (sk, warnings)
}
