//! Evaluating configurations: apply, restart, benchmark, measure.

mod postgres;
mod simulated;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::selector::Objective;
use crate::space::PhysicalConfig;

pub use postgres::{parse_metric, render_assignments, PostgresConfig, PostgresHarness, MARKER_BEGIN, MARKER_END};
pub use simulated::{CrashRule, SimulatedDbms, SpecialBonus, SurfaceDim, SyntheticSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Crash,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Metric in natural units (tx/s or ms); present iff the outcome is ok.
    pub objective_raw: Option<f64>,
    pub outcome: Outcome,
    pub wall_ms: u64,
}

impl EvalResult {
    pub fn ok(value: f64, wall_ms: u64) -> Self {
        EvalResult {
            objective_raw: Some(value),
            outcome: Outcome::Ok,
            wall_ms,
        }
    }

    pub fn failed(outcome: Outcome, wall_ms: u64) -> Self {
        EvalResult {
            objective_raw: None,
            outcome,
            wall_ms,
        }
    }
}

/// Execution plans for the query-level knob selection.
pub trait PlanSource {
    fn get_plan(&self, query: &str) -> Result<String>;
}

/// One DBMS instance. `evaluate` takes `&mut self`, so an instance can only
/// run one evaluation at a time.
pub trait Harness: PlanSource {
    fn objective(&self) -> Objective;
    /// Restarts the DBMS with `config` and measures the workload.
    fn evaluate(&mut self, config: &PhysicalConfig) -> Result<EvalResult>;
}

/// Added to `2 × |worst|` when the worst objective is not positive.
pub const PENALTY_MARGIN: f64 = 1.0;

/// Internal (minimized) objective of a successful run.
pub fn normalize(raw: f64, objective: Objective) -> f64 {
    match objective {
        Objective::Latency => raw,
        Objective::Throughput => -raw,
    }
}

/// Scores an evaluation. Failed runs get twice the worst internal objective
/// seen among successful runs (or `2|worst| + margin` when that is not
/// positive), which is strictly worse than every successful run.
pub fn penalize(result: &EvalResult, worst_so_far: f64, objective: Objective) -> f64 {
    match (result.outcome, result.objective_raw) {
        (Outcome::Ok, Some(raw)) => normalize(raw, objective),
        _ if worst_so_far > 0.0 => 2.0 * worst_so_far,
        _ => 2.0 * worst_so_far.abs() + PENALTY_MARGIN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn penalty_examples() {
        let crash = EvalResult::failed(Outcome::Crash, 0);
        assert_eq!(penalize(&crash, 800.0, Objective::Latency), 1600.0);
        assert_eq!(penalize(&EvalResult::ok(500.0, 0), 800.0, Objective::Latency), 500.0);
        assert_eq!(penalize(&EvalResult::ok(240.0, 0), 0.0, Objective::Throughput), -240.0);
        assert_eq!(penalize(&crash, -240.0, Objective::Throughput), 481.0);
        let timeout = EvalResult::failed(Outcome::Timeout, 0);
        assert_eq!(penalize(&timeout, 800.0, Objective::Latency), 1600.0);
    }

    proptest! {
        #[test]
        fn penalty_dominates_every_ok_run(raws in proptest::collection::vec(0.0f64..1e6, 1..20), latency in any::<bool>()) {
            let objective = if latency { Objective::Latency } else { Objective::Throughput };
            let internal: Vec<f64> = raws.iter().map(|r| normalize(*r, objective)).collect();
            let worst = internal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let p = penalize(&EvalResult::failed(Outcome::Crash, 0), worst, objective);
            prop_assert!(internal.iter().all(|x| p > *x));
        }
    }
}
