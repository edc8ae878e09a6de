use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalResult, Harness, Outcome, PlanSource};
use crate::catalog::KnobValue;
use crate::error::{Error, Result};
use crate::selector::Objective;
use crate::space::PhysicalConfig;
use crate::util::stable_hash;

/// Quadratic bowl term for one knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDim {
    /// Numeric optimum, or the best category.
    pub target: KnobValue,
    #[serde(default = "one")]
    pub weight: f64,
    /// Normalization range for numeric distance.
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "one")]
    pub hi: f64,
    /// Value used when a configuration omits the knob.
    #[serde(default)]
    pub default: Option<KnobValue>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialBonus {
    pub knob: String,
    pub value: f64,
    /// Fractional improvement when hit; replaces the knob's bowl term.
    pub bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRule {
    pub knob: String,
    #[serde(default)]
    pub above: Option<f64>,
    #[serde(default)]
    pub below: Option<f64>,
    #[serde(default = "crash")]
    pub outcome: Outcome,
}

fn crash() -> Outcome {
    Outcome::Crash
}

/// Offline stand-in for a DBMS: a weighted squared distance to per-knob
/// targets in normalized coordinates, special-value bonuses, crash regions
/// and deterministic noise.
///
/// Latency surfaces report `base × factor`; throughput surfaces report
/// `base / factor`, where
/// `factor = (1 + Σ wᵢ dᵢ²) × Π(1 + w for a wrong category) × Π(1 − bonus) × noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSurface {
    pub objective: Objective,
    pub base: f64,
    pub dims: BTreeMap<String, SurfaceDim>,
    #[serde(default)]
    pub specials: Vec<SpecialBonus>,
    #[serde(default)]
    pub crashes: Vec<CrashRule>,
    /// Relative noise amplitude.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Reported duration of every evaluation.
    #[serde(default)]
    pub wall_ms: u64,
    /// Plan fixtures keyed by query text.
    #[serde(default)]
    pub plans: BTreeMap<String, String>,
}

impl SyntheticSurface {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: SyntheticSurface = serde_json::from_str(&raw)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base.is_finite() && self.base > 0.0) {
            return Err(Error::InvalidArgument("surface base must be positive".into()));
        }
        for (k, d) in &self.dims {
            if d.target.as_number().is_some() && d.hi <= d.lo {
                return Err(Error::InvalidArgument(format!("surface dim `{k}` needs lo < hi")));
            }
        }
        if self.specials.iter().any(|s| !(0.0..1.0).contains(&s.bonus)) {
            return Err(Error::InvalidArgument("special bonus must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn value<'a>(&'a self, config: &'a PhysicalConfig, knob: &str) -> Option<&'a KnobValue> {
        config.get(knob).or_else(|| self.dims.get(knob).and_then(|d| d.default.as_ref()))
    }

    /// The factor multiplying (latency) or dividing (throughput) the base.
    pub fn factor(&self, config: &PhysicalConfig) -> f64 {
        let mut bowl = 1.0;
        let mut scale = 1.0;
        for (knob, dim) in &self.dims {
            let special = self.specials.iter().find(|s| {
                s.knob == *knob && self.value(config, knob).and_then(KnobValue::as_number) == Some(s.value)
            });
            if let Some(s) = special {
                scale *= 1.0 - s.bonus;
                continue;
            }
            match (self.value(config, knob), &dim.target) {
                (Some(KnobValue::Number(x)), KnobValue::Number(t)) => {
                    let d = (x - t) / (dim.hi - dim.lo);
                    bowl += dim.weight * d * d;
                }
                (Some(KnobValue::Text(x)), KnobValue::Text(t)) if x != t => scale *= 1.0 + dim.weight,
                _ => {}
            }
        }
        bowl * scale
    }

    /// Noise-free objective in natural units at the optimum implied by the
    /// targets and bonuses.
    pub fn optimum(&self) -> f64 {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for s in self.specials.iter().filter(|s| self.dims.contains_key(&s.knob)) {
            let f = best.entry(s.knob.as_str()).or_insert(1.0);
            *f = f.min(1.0 - s.bonus);
        }
        let bonus: f64 = best.values().product();
        match self.objective {
            Objective::Latency => self.base * bonus,
            Objective::Throughput => self.base / bonus,
        }
    }

    fn crash_outcome(&self, config: &PhysicalConfig) -> Option<Outcome> {
        self.crashes.iter().find_map(|rule| {
            let x = self.value(config, &rule.knob)?.as_number()?;
            let hit = rule.above.is_some_and(|a| x > a) || rule.below.is_some_and(|b| x < b);
            hit.then_some(rule.outcome)
        })
    }

    fn noise_factor(&self, config: &PhysicalConfig) -> f64 {
        if self.noise == 0.0 {
            return 1.0;
        }
        let text = serde_json::to_string(config).expect("config serializes");
        let h = stable_hash(&[&self.seed.to_le_bytes(), text.as_bytes()]);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + self.noise * (2.0 * u - 1.0)
    }

    pub fn evaluate(&self, config: &PhysicalConfig) -> EvalResult {
        if let Some(outcome) = self.crash_outcome(config) {
            return EvalResult::failed(outcome, self.wall_ms);
        }
        let factor = self.factor(config) * self.noise_factor(config);
        let value = match self.objective {
            Objective::Latency => self.base * factor,
            Objective::Throughput => self.base / factor,
        };
        EvalResult::ok(value, self.wall_ms)
    }
}

/// [`Harness`] backed by a [`SyntheticSurface`].
#[derive(Debug, Clone)]
pub struct SimulatedDbms {
    pub surface: SyntheticSurface,
    pub evaluations: usize,
}

impl SimulatedDbms {
    pub fn new(surface: SyntheticSurface) -> Self {
        SimulatedDbms {
            surface,
            evaluations: 0,
        }
    }
}

impl PlanSource for SimulatedDbms {
    fn get_plan(&self, query: &str) -> Result<String> {
        self.surface
            .plans
            .get(query.trim())
            .cloned()
            .ok_or_else(|| Error::Harness(format!("no plan fixture for query {:?}", query.trim())))
    }
}

impl Harness for SimulatedDbms {
    fn objective(&self) -> Objective {
        self.surface.objective
    }

    fn evaluate(&mut self, config: &PhysicalConfig) -> Result<EvalResult> {
        self.evaluations += 1;
        Ok(self.surface.evaluate(config))
    }
}
