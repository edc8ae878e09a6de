use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmClient, LlmRequest, TaskKind};
use crate::error::{Error, Result};

/// One fixture record. `responses[i]` answers attempt `i`; later attempts
/// reuse the last response. `subject = "*"` matches any subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub subject: String,
    pub task: TaskKind,
    #[serde(default)]
    pub responses: Vec<String>,
    /// Simulate an unavailable model for this key.
    #[serde(default)]
    pub fail: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    Many(Vec<MockEntry>),
    One(MockEntry),
}

/// Scripted client answering from fixtures keyed by `(subject, task)`.
#[derive(Debug, Default)]
pub struct MockLlm {
    entries: HashMap<(String, TaskKind), MockEntry>,
    calls: Mutex<Vec<(TaskKind, String, u32)>>,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, subject: &str, task: TaskKind, responses: &[&str]) -> Self {
        self.insert(MockEntry {
            subject: subject.to_string(),
            task,
            responses: responses.iter().map(|s| s.to_string()).collect(),
            fail: false,
        });
        self
    }

    pub fn failing(mut self, subject: &str, task: TaskKind) -> Self {
        self.insert(MockEntry {
            subject: subject.to_string(),
            task,
            responses: Vec::new(),
            fail: true,
        });
        self
    }

    pub fn insert(&mut self, entry: MockEntry) {
        self.entries
            .insert((entry.subject.clone(), entry.task), entry);
    }

    /// Loads every `*.json` file in `dir` (sorted by file name; later files
    /// override earlier keys).
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut mock = MockLlm::new();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let file: FixtureFile = serde_json::from_str(&text)
                .map_err(|e| Error::Llm(format!("fixture {}: {e}", path.display())))?;
            match file {
                FixtureFile::Many(entries) => entries.into_iter().for_each(|e| mock.insert(e)),
                FixtureFile::One(entry) => mock.insert(entry),
            }
        }
        Ok(mock)
    }

    /// Every request seen so far as `(task, subject, attempt)`.
    pub fn calls(&self) -> Vec<(TaskKind, String, u32)> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self, task: TaskKind) -> usize {
        self.calls.lock().unwrap().iter().filter(|c| c.0 == task).count()
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        self.calls
            .lock()
            .unwrap()
            .push((request.task, request.subject.clone(), request.attempt));
        let entry = self
            .entries
            .get(&(request.subject.clone(), request.task))
            .or_else(|| self.entries.get(&("*".to_string(), request.task)))
            .ok_or_else(|| {
                Error::Llm(format!(
                    "no fixture for {} / {}",
                    request.subject,
                    request.task.as_str()
                ))
            })?;
        if entry.fail || entry.responses.is_empty() {
            return Err(Error::Llm(format!(
                "scripted failure for {} / {}",
                request.subject,
                request.task.as_str()
            )));
        }
        let i = (request.attempt as usize).min(entry.responses.len() - 1);
        Ok(entry.responses[i].clone())
    }

    fn model(&self) -> &str {
        "mock"
    }
}
