//! Coarse-to-fine Bayesian optimization.
//!
//! A session evaluates the vendor defaults, a Latin hypercube over the tiny
//! space, `coarse_threshold` BO steps restricted to the tiny space and then BO
//! steps over the extended full space until the budget runs out. The
//! surrogate is a random forest refitted on every observation so far, so the
//! fine stage starts from everything the coarse stage learned.

mod acquisition;
mod forest;
mod lhs;
mod tuner;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Outcome;
use crate::space::PhysicalConfig;

pub use acquisition::{config_key, expected_improvement, suggest, CandidateSampler, SuggestOptions};
pub use forest::{Forest, ForestOptions};
pub use lhs::{lhs_indices, lhs_sample};
pub use tuner::{FitRecord, Observation, TuneResult, Tuner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// LHS in the tiny space, coarse BO in the tiny space, fine BO in the
    /// extended full space.
    CoarseToFine,
    /// Random initial samples, then BO in the full space.
    Vanilla,
    /// Uniform random search over the full space.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Default,
    Lhs,
    Coarse,
    Fine,
    Random,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Default => "default",
            Stage::Lhs => "lhs",
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
            Stage::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub init_samples: usize,
    pub coarse_threshold: usize,
    /// Evaluations in total, the default configuration included.
    pub budget: usize,
    pub candidates: usize,
    pub neighbours: usize,
    pub trees: usize,
    pub min_split: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Stop once the internal (minimized) objective reaches this value.
    pub target: Option<f64>,
    /// Stop starting new evaluations after this much wall-clock time.
    pub max_wall_ms: Option<u64>,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            init_samples: 10,
            coarse_threshold: 20,
            budget: 100,
            candidates: 2000,
            neighbours: 50,
            trees: 10,
            min_split: 3,
            seed: 0,
            strategy: Strategy::CoarseToFine,
            target: None,
            max_wall_ms: None,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_samples == 0 {
            return Err(Error::Config("tuner.init_samples must be at least 1".into()));
        }
        if self.budget < self.init_samples + self.coarse_threshold {
            return Err(Error::Config(format!(
                "tuner.budget ({}) must be at least init_samples + coarse_threshold ({})",
                self.budget,
                self.init_samples + self.coarse_threshold
            )));
        }
        if self.candidates == 0 || self.trees == 0 {
            return Err(Error::Config("tuner.candidates and tuner.trees must be positive".into()));
        }
        Ok(())
    }

    /// Stage of the evaluation with this (0-based) index.
    pub fn stage_of(&self, iteration: usize) -> Stage {
        let n = self.init_samples;
        match (self.strategy, iteration) {
            (_, 0) => Stage::Default,
            (Strategy::Random, _) => Stage::Random,
            (Strategy::Vanilla, i) if i <= n => Stage::Random,
            (Strategy::Vanilla, _) => Stage::Fine,
            (Strategy::CoarseToFine, i) if i <= n => Stage::Lhs,
            (Strategy::CoarseToFine, i) if i <= n + self.coarse_threshold => Stage::Coarse,
            (Strategy::CoarseToFine, _) => Stage::Fine,
        }
    }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub stage: Stage,
    /// Physical values in canonical units.
    pub config: PhysicalConfig,
    /// Internal objective: minimized, penalty applied.
    pub objective: f64,
    pub outcome: Outcome,
    pub wall_ms: u64,
}

/// Reads a JSON-lines session log. A missing file is an empty log; a
/// truncated last line (an interrupted write) is ignored.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<LogRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("ignoring truncated last line of {}", path.display());
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Appends records to a session log, one flushed line each.
pub struct LogWriter {
    path: PathBuf,
    file: std::fs::File,
}

impl LogWriter {
    /// Opens `path` for appending after rewriting it to exactly `keep`, which
    /// drops any partial trailing line.
    pub fn open(path: &Path, keep: &[LogRecord]) -> Result<Self> {
        let mut text = String::new();
        for r in keep {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        crate::util::write_atomic(path, text.as_bytes())?;
        let file = std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}
