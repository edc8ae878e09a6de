use std::collections::BTreeSet;
use std::time::Instant;

use super::acquisition::{config_key, suggest, CandidateSampler, SuggestOptions};
use super::forest::{Forest, ForestOptions};
use super::lhs::lhs_sample;
use super::{LogRecord, Stage, Strategy, TunerConfig};
use crate::error::{Error, Result};
use crate::harness::{penalize, Harness, Outcome};
use crate::space::{Configuration, Granularity, PhysicalConfig, SearchSpace};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub iteration: usize,
    pub stage: Stage,
    pub physical: PhysicalConfig,
    /// Encoding in the extended space; `None` when the configuration lies
    /// outside it (possible only for the vendor defaults).
    pub config: Option<Configuration>,
    pub objective: f64,
    pub outcome: Outcome,
    pub wall_ms: u64,
}

impl Observation {
    pub fn record(&self) -> LogRecord {
        LogRecord {
            iteration: self.iteration,
            stage: self.stage,
            config: self.physical.clone(),
            objective: self.objective,
            outcome: self.outcome,
            wall_ms: self.wall_ms,
        }
    }
}

/// Surrogate fit preceding a suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub observations: Vec<Observation>,
    /// Index into `observations` of the lowest objective (earliest on ties).
    pub best: usize,
    /// Fits performed in this process; replayed iterations have none.
    pub fits: Vec<FitRecord>,
}

impl TuneResult {
    pub fn best_observation(&self) -> &Observation {
        &self.observations[self.best]
    }

    /// Best objective after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.observations
            .iter()
            .scan(f64::INFINITY, |b, o| {
                *b = b.min(o.objective);
                Some(*b)
            })
            .collect()
    }
}

pub struct Tuner<'a> {
    space: SearchSpace,
    full: SearchSpace,
    config: &'a TunerConfig,
}

impl<'a> Tuner<'a> {
    pub fn new(space: &SearchSpace, config: &'a TunerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Tuner {
            space: space.with_granularity(Granularity::Tiny),
            full: space.with_granularity(Granularity::Full),
            config,
        })
    }

    fn iteration_seed(&self, label: &[u8], iteration: usize) -> u64 {
        derive_seed(self.config.seed, &[label, &(iteration as u64).to_le_bytes()])
    }

    fn fit(&self, sampler: &CandidateSampler, observations: &[Observation], iteration: usize) -> Result<Option<Forest>> {
        let (x, y): (Vec<Vec<f64>>, Vec<f64>) = observations
            .iter()
            .filter_map(|o| o.config.as_ref().map(|c| (sampler.features(c), o.objective)))
            .unzip();
        if x.is_empty() {
            return Ok(None);
        }
        let opts = ForestOptions {
            trees: self.config.trees,
            min_split: self.config.min_split,
        };
        Forest::fit(&x, &y, sampler.categorical(), opts, self.iteration_seed(b"forest", iteration)).map(Some)
    }

    /// Runs (or resumes) a session. `history` holds log records of an earlier
    /// run with the same inputs; they are replayed instead of re-evaluated.
    /// Every new observation is passed to `sink` before the next one starts.
    pub fn run(
        &self,
        harness: &mut dyn Harness,
        history: &[LogRecord],
        sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
    ) -> Result<TuneResult> {
        let cfg = self.config;
        let objective = harness.objective();
        let tiny = CandidateSampler::new(&self.space)?;
        let full = CandidateSampler::new(&self.full)?;
        let lhs = match cfg.strategy {
            Strategy::CoarseToFine => lhs_sample(&self.space, cfg.init_samples, derive_seed(cfg.seed, &[b"lhs"]))?,
            _ => Vec::new(),
        };
        let opts = SuggestOptions {
            candidates: cfg.candidates,
            neighbours: cfg.neighbours,
        };
        let started = Instant::now();
        let mut observations: Vec<Observation> = Vec::new();
        let mut fits = Vec::new();
        let mut seen = BTreeSet::new();

        for iteration in 0..cfg.budget {
            let best = observations.iter().map(|o| o.objective).fold(f64::INFINITY, f64::min);
            if cfg.target.is_some_and(|t| best <= t) {
                break;
            }
            let stage = cfg.stage_of(iteration);
            if let Some(rec) = history.get(iteration) {
                if rec.iteration != iteration || rec.stage != stage {
                    return Err(Error::Config(format!(
                        "session log does not match the tuner settings at iteration {iteration}"
                    )));
                }
                let config = self.full.encode(&rec.config).ok();
                if let Some(c) = &config {
                    seen.insert(config_key(c));
                }
                observations.push(Observation {
                    iteration,
                    stage,
                    physical: rec.config.clone(),
                    config,
                    objective: rec.objective,
                    outcome: rec.outcome,
                    wall_ms: rec.wall_ms,
                });
                continue;
            }
            if cfg.max_wall_ms.is_some_and(|m| started.elapsed().as_millis() as u64 >= m) {
                break;
            }

            let mut r = rng(self.iteration_seed(b"suggest", iteration));
            let config = match stage {
                Stage::Default => None,
                Stage::Lhs => Some(lhs[iteration - 1].clone()),
                Stage::Random => Some(full.sample(&mut r)),
                Stage::Coarse | Stage::Fine => {
                    let sampler = if stage == Stage::Coarse { &tiny } else { &full };
                    let incumbent = observations
                        .iter()
                        .filter(|o| o.config.is_some())
                        .min_by(|a, b| a.objective.total_cmp(&b.objective))
                        .and_then(|o| o.config.as_ref());
                    match self.fit(sampler, &observations, iteration)? {
                        Some(forest) => {
                            fits.push(FitRecord {
                                iteration,
                                stage,
                                observations: observations.iter().filter(|o| o.config.is_some()).count(),
                            });
                            let best_encoded = incumbent
                                .and_then(|c| observations.iter().find(|o| o.config.as_ref() == Some(c)))
                                .map_or(best, |o| o.objective);
                            Some(suggest(&forest, sampler, best_encoded, incumbent, &seen, opts, &mut r)?)
                        }
                        None => Some(sampler.sample(&mut r)),
                    }
                }
            };
            let (physical, config) = match config {
                Some(c) => (self.full.decode(&c)?, Some(c)),
                None => {
                    let physical = self.full.default_physical();
                    let encoded = self.full.encode(&physical).ok();
                    (physical, encoded)
                }
            };

            let result = harness.evaluate(&physical)?;
            let worst_ok = observations
                .iter()
                .filter(|o| o.outcome == Outcome::Ok)
                .map(|o| o.objective)
                .fold(f64::NEG_INFINITY, f64::max);
            if result.outcome != Outcome::Ok && worst_ok == f64::NEG_INFINITY {
                return Err(Error::Harness(format!(
                    "the default configuration failed ({:?}); there is no baseline to score failures against",
                    result.outcome
                )));
            }
            let objective = penalize(&result, worst_ok, objective);
            if !objective.is_finite() {
                return Err(Error::Harness(format!("non-finite objective at iteration {iteration}")));
            }
            if let Some(c) = &config {
                seen.insert(config_key(c));
            }
            let obs = Observation {
                iteration,
                stage,
                physical,
                config,
                objective,
                outcome: result.outcome,
                wall_ms: result.wall_ms,
            };
            log::info!(
                "iteration {iteration} [{}] objective {objective} ({:?})",
                stage.as_str(),
                obs.outcome
            );
            sink(&obs.record())?;
            observations.push(obs);
        }

        if observations.is_empty() {
            return Err(Error::InvalidArgument("tuning session performed no evaluation".into()));
        }
        let best = (0..observations.len())
            .min_by(|&a, &b| observations[a].objective.total_cmp(&observations[b].objective).then(a.cmp(&b)))
            .expect("non-empty");
        Ok(TuneResult {
            observations,
            best,
            fits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{KnobKind, KnobValue, Unit};
    use crate::harness::{EvalResult, PlanSource, SimulatedDbms, SyntheticSurface};
    use crate::selector::Objective;
    use crate::space::{KnobDomainView, VirtualKnob};

    fn numeric(name: &str, default: f64, lo: f64, hi: f64, tiny: &[f64]) -> KnobDomainView {
        KnobDomainView {
            knob_name: name.into(),
            kind: KnobKind::Integer,
            unit: Unit::None,
            default_value: KnobValue::Number(default),
            effective_min: Some(lo),
            effective_max: Some(hi),
            categories: vec![],
            tiny_values: tiny.iter().map(|v| KnobValue::Number(*v)).collect(),
            virtual_knob: None,
        }
    }

    fn space() -> SearchSpace {
        let mut lt = numeric("lock_timeout", 0.0, 1.0, 1000.0, &[0.0, 500.0, 1000.0]);
        lt.effective_min = Some(0.0);
        lt.virtual_knob = Some(VirtualKnob {
            control_name: "control_lock_timeout".into(),
            normal_name: "normal_lock_timeout".into(),
            special_name: "special_lock_timeout".into(),
            special_value: 0.0,
            normal_min: 1.0,
            normal_max: 1000.0,
        });
        SearchSpace {
            dims: vec![
                numeric("a", 50.0, 0.0, 100.0, &[10.0, 30.0, 60.0]),
                numeric("b", 5.0, 0.0, 10.0, &[2.0, 4.0, 8.0]),
                KnobDomainView {
                    knob_name: "mode".into(),
                    kind: KnobKind::Categorical,
                    unit: Unit::None,
                    default_value: KnobValue::Text("x".into()),
                    effective_min: None,
                    effective_max: None,
                    categories: vec!["x".into(), "y".into(), "z".into()],
                    tiny_values: vec![KnobValue::Text("x".into()), KnobValue::Text("y".into())],
                    virtual_knob: None,
                },
                lt,
            ],
            granularity: Granularity::Tiny,
        }
    }

    fn surface() -> SyntheticSurface {
        serde_json::from_value(serde_json::json!({
            "objective": "latency",
            "base": 100.0,
            "dims": {
                "a": {"target": 30.0, "weight": 2.0, "lo": 0.0, "hi": 100.0},
                "b": {"target": 7.0, "weight": 1.0, "lo": 0.0, "hi": 10.0},
                "mode": {"target": "z", "weight": 0.3},
                "lock_timeout": {"target": 900.0, "weight": 1.0, "lo": 0.0, "hi": 1000.0}
            },
            "specials": [{"knob": "lock_timeout", "value": 0.0, "bonus": 0.1}],
            "crashes": [{"knob": "a", "above": 95.0}]
        }))
        .unwrap()
    }

    fn config(budget: usize, seed: u64) -> TunerConfig {
        TunerConfig {
            budget,
            init_samples: 5,
            coarse_threshold: 8,
            candidates: 300,
            seed,
            ..TunerConfig::default()
        }
    }

    fn run(cfg: &TunerConfig, history: &[LogRecord]) -> (TuneResult, Vec<LogRecord>) {
        let mut h = SimulatedDbms::new(surface());
        let mut log = Vec::new();
        let res = Tuner::new(&space(), cfg)
            .unwrap()
            .run(&mut h, history, &mut |r| {
                log.push(r.clone());
                Ok(())
            })
            .unwrap();
        (res, log)
    }

    #[test]
    fn stages_membership_and_continuity() {
        let cfg = config(30, 1);
        let (res, log) = run(&cfg, &[]);
        assert_eq!(log.len(), 30);
        let sp = space();
        let full = sp.with_granularity(Granularity::Full);
        for o in &res.observations {
            match o.stage {
                Stage::Default => assert_eq!(o.iteration, 0),
                Stage::Lhs | Stage::Coarse => assert!(sp.contains_tiny(o.config.as_ref().unwrap())),
                Stage::Fine => assert!(full.contains_full(o.config.as_ref().unwrap())),
                Stage::Random => unreachable!(),
            }
        }
        let first_fine = res.fits.iter().find(|f| f.stage == Stage::Fine).unwrap();
        let before = res.observations.iter().filter(|o| o.iteration < first_fine.iteration).count();
        assert_eq!(first_fine.observations, before);
        assert_eq!(first_fine.iteration, 1 + 5 + 8);
        let bsf = res.best_so_far();
        assert!(bsf.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(res.best_observation().objective, *bsf.last().unwrap());
    }

    #[test]
    fn deterministic_and_resumable() {
        let cfg = config(25, 3);
        let (a, log_a) = run(&cfg, &[]);
        let (_, log_b) = run(&cfg, &[]);
        assert_eq!(log_a, log_b);
        let (c, log_c) = run(&cfg, &log_a[..12]);
        assert_eq!(log_c, log_a[12..].to_vec());
        assert_eq!(c.observations, a.observations);
        let (_, log_d) = run(&config(25, 4), &[]);
        assert_ne!(log_a, log_d);
    }

    #[test]
    fn coarse_threshold_zero_and_other_strategies() {
        let cfg = TunerConfig {
            coarse_threshold: 0,
            ..config(15, 2)
        };
        let (res, _) = run(&cfg, &[]);
        assert!(res.observations.iter().all(|o| o.stage != Stage::Coarse));
        assert_eq!(res.observations.iter().filter(|o| o.stage == Stage::Fine).count(), 9);
        for strategy in [Strategy::Vanilla, Strategy::Random] {
            let (res, _) = run(&TunerConfig { strategy, ..config(15, 2) }, &[]);
            assert_eq!(res.observations.len(), 15);
            assert!(res.observations.iter().all(|o| !matches!(o.stage, Stage::Lhs | Stage::Coarse)));
        }
    }

    #[test]
    fn target_stops_early() {
        let cfg = TunerConfig {
            target: Some(1e9),
            ..config(20, 0)
        };
        assert_eq!(run(&cfg, &[]).0.observations.len(), 1);
    }

    #[test]
    fn mismatched_history_is_rejected() {
        let (_, log) = run(&config(15, 0), &[]);
        let mut h = SimulatedDbms::new(surface());
        let other = TunerConfig {
            init_samples: 2,
            ..config(15, 0)
        };
        let err = Tuner::new(&space(), &other).unwrap().run(&mut h, &log, &mut |_| Ok(()));
        assert!(err.is_err());
    }

    struct Scripted {
        results: Vec<EvalResult>,
        calls: usize,
    }

    impl PlanSource for Scripted {
        fn get_plan(&self, _: &str) -> Result<String> {
            Err(Error::Harness("none".into()))
        }
    }

    impl Harness for Scripted {
        fn objective(&self) -> Objective {
            Objective::Latency
        }

        fn evaluate(&mut self, _: &PhysicalConfig) -> Result<EvalResult> {
            self.calls += 1;
            Ok(self.results[(self.calls - 1).min(self.results.len() - 1)].clone())
        }
    }

    #[test]
    fn crash_gets_double_the_worst() {
        let results = [700.0, 800.0, 650.0, 720.0, 690.0]
            .iter()
            .map(|v| EvalResult::ok(*v, 1))
            .chain([EvalResult::failed(Outcome::Crash, 1), EvalResult::ok(600.0, 1)])
            .collect();
        let mut h = Scripted { results, calls: 0 };
        let res = Tuner::new(&space(), &TunerConfig { coarse_threshold: 2, ..config(7, 0) }).unwrap().run(&mut h, &[], &mut |_| Ok(())).unwrap();
        assert_eq!(res.observations[5].objective, 1600.0);
        assert_eq!(res.best_so_far()[5], 650.0);
    }

    #[test]
    fn failing_default_is_an_error() {
        let mut h = Scripted {
            results: vec![EvalResult::failed(Outcome::Timeout, 1)],
            calls: 0,
        };
        let err = Tuner::new(&space(), &TunerConfig { coarse_threshold: 2, ..config(7, 0) }).unwrap().run(&mut h, &[], &mut |_| Ok(()));
        assert!(matches!(err, Err(Error::Harness(_))));
    }
}
