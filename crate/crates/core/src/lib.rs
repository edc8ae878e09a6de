//! Knowledge-guided knob tuning for database systems.
//!
//! Tuning advice from manuals, the web and a language model is distilled
//! into a per-knob Tuning Lake, turned into structured ranges, suggestions
//! and special values, and used to build a small search space that a
//! coarse-to-fine Bayesian optimizer explores before widening to the full
//! space. [`workflow`] wires the stages together.

pub mod bo;
pub mod catalog;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod llm;
pub mod quantity;
pub mod selector;
pub mod space;
pub mod util;
pub mod workflow;

pub use bo::{LogRecord, Stage, Strategy, TuneResult, Tuner, TunerConfig};
pub use catalog::{DiskKind, KnobCatalog, KnobKind, KnobSpec, KnobValue, SystemProfile, Unit};
pub use error::{Error, Result};
pub use harness::{EvalResult, Harness, Outcome, PlanSource};
pub use knowledge::{Source, StructuredKnob, TuningLakeEntry};
pub use llm::{LlmClient, LlmRequest, TaskKind};
pub use selector::{Objective, SelectionReport, WorkloadKind, WorkloadSpec};
pub use space::{Configuration, PhysicalConfig, SearchSpace, SpaceOptions};
pub use workflow::{Session, SessionConfig};
