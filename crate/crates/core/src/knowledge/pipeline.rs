use std::collections::{BTreeMap, BTreeSet};

use super::{
    collect, consistency_check, filter_noise, summarize, KnowledgeDoc, KnowledgeSource, LakeSidecar,
    Prompts, TuningLakeEntry,
};
use crate::catalog::KnobCatalog;
use crate::llm::LlmClient;

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub dbms: String,
    pub max_rounds: u32,
    /// Worker threads for per-knob processing; 0 means available parallelism.
    pub threads: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            dbms: "postgres".into(),
            max_rounds: 3,
            threads: 0,
        }
    }
}

#[derive(Debug, Default)]
pub struct PrepareOutcome {
    pub entries: BTreeMap<String, (TuningLakeEntry, LakeSidecar)>,
    /// Knobs for which no document survived filtering.
    pub knowledge_free: BTreeSet<String>,
    /// `(adapter, message)` from collection.
    pub errors: Vec<(String, String)>,
}

pub struct KnowledgePipeline<'a> {
    pub catalog: &'a KnobCatalog,
    pub llm: Option<&'a dyn LlmClient>,
    pub prompts: &'a Prompts,
    pub sources: Vec<&'a dyn KnowledgeSource>,
    pub settings: PipelineSettings,
}

impl KnowledgePipeline<'_> {
    /// Filter, summarize and check the documents of one knob.
    pub fn prepare_knob(&self, knob: &str, mut docs: Vec<KnowledgeDoc>) -> (TuningLakeEntry, LakeSidecar) {
        docs.sort_by_key(KnowledgeDoc::priority);
        let dbms = self.settings.dbms.as_str();
        let mut kept = Vec::new();
        let mut side = LakeSidecar {
            knob_name: knob.to_string(),
            ..Default::default()
        };
        match self.catalog.get(knob) {
            Ok(spec) => {
                for doc in docs {
                    let verdict = filter_noise(&doc, spec, &self.catalog.profile, self.llm, self.prompts, dbms);
                    side.low_confidence |= verdict.low_confidence;
                    if verdict.keep {
                        kept.push(doc);
                    } else {
                        side.discarded.push((doc.reference(), verdict.reason.unwrap_or_default()));
                    }
                }
            }
            Err(e) => log::warn!("{e}; documents ignored"),
        }

        let entry = match summarize(&kept, self.llm, self.prompts, dbms) {
            None => TuningLakeEntry {
                knob_name: knob.to_string(),
                summary: String::new(),
                provenance: Vec::new(),
                consistency_attempts: 1,
                verified: true,
            },
            Some((summary, _)) => match self.llm {
                Some(llm) => consistency_check(knob, summary, &kept, llm, self.prompts, dbms, self.settings.max_rounds),
                None => TuningLakeEntry {
                    knob_name: knob.to_string(),
                    summary,
                    provenance: kept.iter().map(KnowledgeDoc::reference).collect(),
                    consistency_attempts: 1,
                    verified: false,
                },
            },
        };
        side.provenance = entry.provenance.clone();
        side.consistency_attempts = entry.consistency_attempts;
        side.verified = entry.verified;
        (entry, side)
    }

    /// Runs the whole preparation for `knobs`. Knobs are processed on worker
    /// threads; results do not depend on scheduling.
    pub fn prepare(&self, knobs: &BTreeSet<String>) -> PrepareOutcome {
        let collected = collect(&self.sources, knobs);
        let mut by_knob: BTreeMap<String, Vec<KnowledgeDoc>> =
            knobs.iter().map(|k| (k.clone(), Vec::new())).collect();
        for doc in collected.docs {
            if let Some(list) = by_knob.get_mut(&doc.knob_name) {
                list.push(doc);
            }
        }
        let work: Vec<(String, Vec<KnowledgeDoc>)> = by_knob.into_iter().collect();
        let threads = match self.settings.threads {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
        .clamp(1, work.len().max(1));
        let chunk = work.len().div_ceil(threads).max(1);
        let results: Vec<(TuningLakeEntry, LakeSidecar)> = std::thread::scope(|s| {
            let handles: Vec<_> = work
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|(knob, docs)| self.prepare_knob(knob, docs.clone()))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("knowledge worker panicked"))
                .collect()
        });

        let mut out = PrepareOutcome {
            errors: collected.errors,
            ..Default::default()
        };
        for (entry, side) in results {
            if entry.summary.is_empty() {
                out.knowledge_free.insert(entry.knob_name.clone());
            }
            out.entries.insert(entry.knob_name.clone(), (entry, side));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{load_system_view, DiskKind, SystemProfile};
    use crate::knowledge::{FileDropSource, Source};
    use crate::llm::{MockLlm, TaskKind};

    const VIEW: &str = "name\tvartype\tmin_val\tmax_val\tboot_val\tunit\tenumvals\n\
        shared_buffers\tinteger\t16\t1073741823\t16384\t8kB\t\\N\n\
        backend_flush_after\tinteger\t0\t256\t0\t\\N\t\\N\n\
        work_mem\tinteger\t64\t2147483647\t4096\tkB\t\\N\n";

    fn catalog() -> KnobCatalog {
        load_system_view(VIEW, SystemProfile::new(16 << 30, DiskKind::Ssd, 8).unwrap()).unwrap()
    }

    fn mock() -> MockLlm {
        MockLlm::new()
            .with("*", TaskKind::FilterNoise, &[r#"{"conflict": false}"#])
            .with(
                "backend_flush_after",
                TaskKind::FilterNoise,
                &[r#"{"conflict": true, "reason": "integer knob"}"#],
            )
            .with("*", TaskKind::ConsistencyCheck, &[r#"{"consistent": true}"#])
            .with("*", TaskKind::Summarize, &[""])
    }

    #[test]
    fn prepares_every_knob_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("shared_buffers.txt"), "Set it to 25% of the RAM.").unwrap();
        std::fs::write(
            dir.path().join("backend_flush_after.txt"),
            "Set backend_flush_after to a value between 0 and 1.",
        )
        .unwrap();
        let cat = catalog();
        let llm = mock();
        let prompts = Prompts::default();
        let manual = FileDropSource::new(dir.path(), Source::Manual);
        let run = |threads| {
            let p = KnowledgePipeline {
                catalog: &cat,
                llm: Some(&llm),
                prompts: &prompts,
                sources: vec![&manual],
                settings: PipelineSettings { threads, ..Default::default() },
            };
            p.prepare(&cat.names())
        };
        let one = run(1);
        let many = run(4);
        assert_eq!(one.entries, many.entries);
        assert_eq!(one.entries.len(), 3);
        assert_eq!(
            one.knowledge_free,
            BTreeSet::from(["backend_flush_after".to_string(), "work_mem".to_string()])
        );
        let (sb, _) = &one.entries["shared_buffers"];
        assert_eq!(sb.summary, "Set it to 25% of the RAM.");
        assert!(sb.verified);
        let (_, bfa) = &one.entries["backend_flush_after"];
        assert_eq!(bfa.discarded.len(), 1);
    }
}
