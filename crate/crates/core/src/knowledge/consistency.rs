use super::{KnowledgeDoc, Prompts, TuningLakeEntry};
use crate::llm::{extract_json, LlmClient, LlmRequest, TaskKind};

fn sources_text(docs: &[KnowledgeDoc]) -> String {
    docs.iter()
        .map(|d| format!("[{}] {}", d.source.as_str(), d.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Checks `summary` against its sources, regenerating it from the checker's
/// feedback until it passes or `max_rounds` checks have been made. Exhaustion
/// yields the last candidate with `verified = false`.
pub fn consistency_check(
    knob: &str,
    summary: String,
    sources: &[KnowledgeDoc],
    llm: &dyn LlmClient,
    prompts: &Prompts,
    dbms: &str,
    max_rounds: u32,
) -> TuningLakeEntry {
    let max_rounds = max_rounds.max(1);
    let sources_txt = sources_text(sources);
    let mut current = summary;
    let mut attempts = 0;
    let mut verified = false;
    while attempts < max_rounds {
        let prompt = prompts.render(
            "consistency_check",
            &[("sources", &sources_txt), ("summary", &current)],
        );
        let verdict = llm.complete(&LlmRequest::new(TaskKind::ConsistencyCheck, knob, attempts, prompt));
        attempts += 1;
        let verdict = match verdict {
            Ok(v) => extract_json(&v),
            Err(e) => {
                log::warn!("consistency check for {knob} unavailable: {e}");
                break;
            }
        };
        let Some(verdict) = verdict else {
            log::warn!("unparsable consistency verdict for {knob}");
            continue;
        };
        if verdict.get("consistent").and_then(|c| c.as_bool()) == Some(true) {
            verified = true;
            break;
        }
        if attempts == max_rounds {
            break;
        }
        let feedback = verdict
            .get("feedback")
            .and_then(|f| f.as_str())
            .unwrap_or("the summary is inconsistent with the sources");
        let prompt = prompts.render(
            "revise",
            &[
                ("dbms", dbms),
                ("knob", knob),
                ("feedback", feedback),
                ("sources", &sources_txt),
                ("summary", &current),
            ],
        );
        match llm.complete(&LlmRequest::new(TaskKind::Revise, knob, attempts - 1, prompt)) {
            Ok(text) if !text.trim().is_empty() => current = text.trim().to_string(),
            Ok(_) => {}
            Err(e) => {
                log::warn!("revising summary for {knob} failed: {e}");
                break;
            }
        }
    }
    TuningLakeEntry {
        knob_name: knob.to_string(),
        summary: current,
        provenance: sources.iter().map(KnowledgeDoc::reference).collect(),
        consistency_attempts: attempts.max(1),
        verified,
    }
}
