use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{KnowledgeDoc, Prompts, Source};
use crate::catalog::KnobCatalog;
use crate::error::{Error, Result};
use crate::llm::{LlmClient, LlmRequest, TaskKind};

/// Something that yields tuning documents for a set of knobs.
pub trait KnowledgeSource: Send + Sync {
    fn source(&self) -> Source;
    fn name(&self) -> String;
    /// Documents plus non-fatal per-knob errors.
    fn fetch(&self, knobs: &BTreeSet<String>) -> Result<(Vec<KnowledgeDoc>, Vec<String>)>;
}

/// Reads `<dir>/<knob>.txt` and every `*.txt` under `<dir>/<knob>/`.
pub struct FileDropSource {
    pub dir: PathBuf,
    pub source: Source,
}

impl FileDropSource {
    pub fn new(dir: impl Into<PathBuf>, source: Source) -> Self {
        FileDropSource {
            dir: dir.into(),
            source,
        }
    }

    fn read(&self, knob: &str, path: &Path, docs: &mut Vec<KnowledgeDoc>) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        docs.extend(KnowledgeDoc::new(
            knob,
            self.source,
            &text,
            &path.strip_prefix(&self.dir).unwrap_or(path).display().to_string(),
        ));
        Ok(())
    }
}

impl KnowledgeSource for FileDropSource {
    fn source(&self) -> Source {
        self.source
    }

    fn name(&self) -> String {
        format!("{} file drop {}", self.source.as_str(), self.dir.display())
    }

    fn fetch(&self, knobs: &BTreeSet<String>) -> Result<(Vec<KnowledgeDoc>, Vec<String>)> {
        if !self.dir.is_dir() {
            return Err(Error::io(
                &self.dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ));
        }
        let mut docs = Vec::new();
        for knob in knobs {
            let file = self.dir.join(format!("{knob}.txt"));
            if file.is_file() {
                self.read(knob, &file, &mut docs)?;
            }
            let sub = self.dir.join(knob);
            if sub.is_dir() {
                let mut files: Vec<_> = std::fs::read_dir(&sub)
                    .map_err(|e| Error::io(&sub, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                    .collect();
                files.sort();
                for f in files {
                    self.read(knob, &f, &mut docs)?;
                }
            }
        }
        Ok((docs, Vec::new()))
    }
}

/// Asks the language model itself for advice, one prompt per knob.
pub struct LlmSource<'a> {
    pub llm: &'a dyn LlmClient,
    pub prompts: &'a Prompts,
    pub catalog: &'a KnobCatalog,
    pub dbms: String,
}

impl KnowledgeSource for LlmSource<'_> {
    fn source(&self) -> Source {
        Source::Llm
    }

    fn name(&self) -> String {
        format!("llm {}", self.llm.model())
    }

    fn fetch(&self, knobs: &BTreeSet<String>) -> Result<(Vec<KnowledgeDoc>, Vec<String>)> {
        let mut docs = Vec::new();
        let mut errors = Vec::new();
        for knob in knobs {
            let view = self
                .catalog
                .get(knob)
                .map(|s| serde_json::to_string(s).unwrap_or_default())
                .unwrap_or_default();
            let prompt = self.prompts.render(
                "elicit",
                &[("dbms", &self.dbms), ("knob", knob), ("system_view", &view)],
            );
            match self
                .llm
                .complete(&LlmRequest::new(TaskKind::Elicit, knob.as_str(), 0, prompt))
            {
                Ok(text) => docs.extend(KnowledgeDoc::new(knob, Source::Llm, &text, self.llm.model())),
                Err(e) => errors.push(format!("{knob}: {e}")),
            }
        }
        Ok((docs, errors))
    }
}

#[derive(Debug, Default)]
pub struct CollectOutcome {
    pub docs: Vec<KnowledgeDoc>,
    /// `(adapter, message)` for failures that did not stop collection.
    pub errors: Vec<(String, String)>,
}

/// Gathers documents from every adapter; a failing adapter is recorded and
/// the others proceed.
pub fn collect(adapters: &[&dyn KnowledgeSource], knobs: &BTreeSet<String>) -> CollectOutcome {
    let mut out = CollectOutcome::default();
    for adapter in adapters {
        match adapter.fetch(knobs) {
            Ok((docs, errors)) => {
                out.docs.extend(docs);
                out.errors
                    .extend(errors.into_iter().map(|e| (adapter.name(), e)));
            }
            Err(e) => {
                log::warn!("knowledge source {} failed: {e}", adapter.name());
                out.errors.push((adapter.name(), e.to_string()));
            }
        }
    }
    out
}
