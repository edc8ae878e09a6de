//! Session configuration and the end-to-end subcommands.
//!
//! Everything a session produces lives under its output directory:
//!
//! ```text
//! lake/<dbms>/<knob>.txt, <knob>.provenance.json
//! structured/<dbms>/<knob>.json
//! selection.json
//! space.json
//! session.jsonl, best_config.json, best_config.conf, report.txt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bo::{read_log, LogRecord, LogWriter, Stage, TuneResult, Tuner, TunerConfig};
use crate::catalog::{filter_configurable, DenyRules, KnobCatalog, KnobKind, SystemProfile, Unit};
use crate::error::{Error, Result};
use crate::harness::{render_assignments, Harness, Outcome, PostgresConfig, PostgresHarness, SimulatedDbms, SyntheticSurface};
use crate::knowledge::{
    extract, load_example_pool, read_lake, read_lake_entry, read_structured_dir, validate_structured,
    write_lake_entry, write_structured, FileDropSource, KnowledgePipeline, KnowledgeSource, LlmSource,
    PipelineSettings, Prompts, Source, TransformContext,
};
use crate::llm::{HttpLlm, HttpLlmConfig, LlmClient, LlmRequest, MockLlm};
use crate::selector::{read_knob_list, KnobSelector, Objective, SelectionReport, WorkloadKind, WorkloadSpec};
use crate::space::{build_tiny_space, DeviationConfig, PhysicalConfig, SearchSpace, SpaceOptions};
use crate::util::{to_json_pretty, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    /// Tab-separated system-view export.
    pub system_view: PathBuf,
    /// Deny-rule file; the builtin rules apply when unset.
    #[serde(default)]
    pub deny_rules: Option<PathBuf>,
    /// Restricts knowledge preparation and selection to these knobs.
    #[serde(default)]
    pub knobs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub kind: WorkloadKind,
    pub objective: Objective,
    /// Directory of `*.sql` files, one query each, taken in file-name order.
    #[serde(default)]
    pub queries_dir: Option<PathBuf>,
    #[serde(default)]
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    pub manual: Option<PathBuf>,
    pub web: Option<PathBuf>,
    /// Ask the model itself for advice as a third source.
    pub llm_source: bool,
    pub prompts_dir: Option<PathBuf>,
    pub example_pool: Option<PathBuf>,
    pub ensemble_size: usize,
    pub examples_per_prompt: usize,
    pub max_rounds: u32,
    pub threads: usize,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            manual: None,
            web: None,
            llm_source: false,
            prompts_dir: None,
            example_pool: None,
            ensemble_size: 5,
            examples_per_prompt: 3,
            max_rounds: 3,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum LlmConfig {
    /// No model: knowledge is merged by rules only and knob selection uses
    /// the static list.
    #[default]
    None,
    Mock {
        fixtures: PathBuf,
    },
    Http(HttpLlmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub cap: usize,
    pub static_fallback: Option<PathBuf>,
    pub plan_token_budget: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            cap: 20,
            static_fallback: None,
            plan_token_budget: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub betas: Vec<f64>,
    pub virtual_extension: bool,
    pub knowledge_free_fallback: bool,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        let o = SpaceOptions::default();
        SpaceConfig {
            betas: o.deviation.betas,
            virtual_extension: o.virtual_extension,
            knowledge_free_fallback: o.knowledge_free_fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum HarnessConfig {
    Simulated {
        surface: PathBuf,
        /// `<query stem>.json` or `.txt` plan fixtures, matched to the
        /// `*.sql` files of the workload.
        #[serde(default)]
        plans_dir: Option<PathBuf>,
    },
    Postgres(PostgresConfig),
}

/// One tuning session, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub dbms: String,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub profile: SystemProfile,
    pub catalog: CatalogConfig,
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub knowledge: KnowledgeConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub tuner: TunerSection,
    pub harness: HarnessConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// `[tuner]`: the optimizer settings minus the seed, which is session-wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub init_samples: usize,
    pub coarse_threshold: usize,
    pub budget: usize,
    pub candidates: usize,
    pub neighbours: usize,
    pub trees: usize,
    pub min_split: usize,
    pub strategy: crate::bo::Strategy,
    pub target: Option<f64>,
    pub max_wall_ms: Option<u64>,
}

impl Default for TunerSection {
    fn default() -> Self {
        let t = TunerConfig::default();
        TunerSection {
            init_samples: t.init_samples,
            coarse_threshold: t.coarse_threshold,
            budget: t.budget,
            candidates: t.candidates,
            neighbours: t.neighbours,
            trees: t.trees,
            min_split: t.min_split,
            strategy: t.strategy,
            target: t.target,
            max_wall_ms: t.max_wall_ms,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

impl SessionConfig {
    /// Parses and validates a session file. Relative paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: SessionConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve(base, &mut self.catalog.system_view);
        let optional = [
            &mut self.catalog.deny_rules,
            &mut self.workload.queries_dir,
            &mut self.knowledge.manual,
            &mut self.knowledge.web,
            &mut self.knowledge.prompts_dir,
            &mut self.knowledge.example_pool,
            &mut self.selection.static_fallback,
        ];
        for p in optional.into_iter().flatten() {
            resolve(base, p);
        }
        if let LlmConfig::Mock { fixtures } = &mut self.llm {
            resolve(base, fixtures);
        }
        match &mut self.harness {
            HarnessConfig::Simulated { surface, plans_dir } => {
                resolve(base, surface);
                if let Some(p) = plans_dir {
                    resolve(base, p);
                }
            }
            HarnessConfig::Postgres(pg) => {
                resolve(base, &mut pg.conf_path);
                if let Some(p) = &mut pg.results_file {
                    resolve(base, p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Config(e.to_string());
        if self.dbms.trim().is_empty() {
            return Err(Error::Config("dbms must not be empty".into()));
        }
        self.profile.validate().map_err(bad)?;
        must_exist(&self.catalog.system_view, "system view")?;
        for (p, what) in [
            (&self.catalog.deny_rules, "deny-rule file"),
            (&self.workload.queries_dir, "query directory"),
            (&self.knowledge.manual, "manual directory"),
            (&self.knowledge.web, "web directory"),
            (&self.knowledge.prompts_dir, "prompt directory"),
            (&self.knowledge.example_pool, "example pool"),
            (&self.selection.static_fallback, "static knob list"),
        ] {
            if let Some(p) = p {
                must_exist(p, what)?;
            }
        }
        if let LlmConfig::Mock { fixtures } = &self.llm {
            must_exist(fixtures, "mock fixture directory")?;
        }
        match &self.harness {
            HarnessConfig::Simulated { surface, plans_dir } => {
                must_exist(surface, "surface definition")?;
                if let Some(p) = plans_dir {
                    must_exist(p, "plan fixture directory")?;
                }
            }
            HarnessConfig::Postgres(pg) => {
                if pg.restart_command.trim().is_empty() || pg.benchmark_command.trim().is_empty() {
                    return Err(Error::Config("harness restart_command and benchmark_command are required".into()));
                }
            }
        }
        if self.selection.cap == 0 {
            return Err(Error::Config("selection.cap must be at least 1".into()));
        }
        if self.knowledge.ensemble_size == 0 {
            return Err(Error::Config("knowledge.ensemble_size must be at least 1".into()));
        }
        DeviationConfig::new(self.space.betas.clone()).map_err(bad)?;
        self.tuner_config().validate()
    }

    pub fn tuner_config(&self) -> TunerConfig {
        let t = &self.tuner;
        TunerConfig {
            init_samples: t.init_samples,
            coarse_threshold: t.coarse_threshold,
            budget: t.budget,
            candidates: t.candidates,
            neighbours: t.neighbours,
            trees: t.trees,
            min_split: t.min_split,
            seed: self.seed,
            strategy: t.strategy,
            target: t.target,
            max_wall_ms: t.max_wall_ms,
        }
    }

    pub fn space_options(&self) -> Result<SpaceOptions> {
        Ok(SpaceOptions {
            deviation: DeviationConfig::new(self.space.betas.clone())?,
            knowledge_free_fallback: self.space.knowledge_free_fallback,
            virtual_extension: self.space.virtual_extension,
        })
    }

    pub fn lake_dir(&self) -> PathBuf {
        self.output_dir.join("lake").join(&self.dbms)
    }

    pub fn structured_dir(&self) -> PathBuf {
        self.output_dir.join("structured").join(&self.dbms)
    }

    pub fn selection_path(&self) -> PathBuf {
        self.output_dir.join("selection.json")
    }

    pub fn space_path(&self) -> PathBuf {
        self.output_dir.join("space.json")
    }

    pub fn log_path(&self) -> PathBuf {
        self.output_dir.join("session.jsonl")
    }
}

/// A model that is never available.
struct NoLlm;

impl LlmClient for NoLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String> {
        Err(Error::Llm(format!("no model configured for {}", request.task.as_str())))
    }

    fn model(&self) -> &str {
        "none"
    }
}

/// Loaded inputs shared by the subcommands.
pub struct Session {
    pub config: SessionConfig,
    pub catalog: KnobCatalog,
    /// Configurable knobs, restricted to `catalog.knobs` when that is set.
    pub knobs: BTreeSet<String>,
    pub prompts: Prompts,
    llm: Option<Box<dyn LlmClient>>,
}

impl Session {
    pub fn open(config: SessionConfig) -> Result<Self> {
        let catalog = KnobCatalog::load(&config.catalog.system_view, config.profile.clone())?;
        let deny = match &config.catalog.deny_rules {
            Some(p) => DenyRules::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => DenyRules::builtin(),
        };
        let mut knobs = filter_configurable(&catalog, &deny);
        if let Some(only) = &config.catalog.knobs {
            for k in only {
                catalog.get(k).map_err(|e| Error::Config(e.to_string()))?;
            }
            let only: BTreeSet<String> = only.iter().cloned().collect();
            knobs = knobs.intersection(&only).cloned().collect();
        }
        let prompts = match &config.knowledge.prompts_dir {
            Some(d) => Prompts::with_overrides(d)?,
            None => Prompts::default(),
        };
        let llm: Option<Box<dyn LlmClient>> = match &config.llm {
            LlmConfig::None => None,
            LlmConfig::Mock { fixtures } => Some(Box::new(MockLlm::from_dir(fixtures)?)),
            LlmConfig::Http(h) => Some(Box::new(HttpLlm::new(h.clone())?)),
        };
        Ok(Session {
            config,
            catalog,
            knobs,
            prompts,
            llm,
        })
    }

    pub fn llm(&self) -> Option<&dyn LlmClient> {
        self.llm.as_deref()
    }

    /// Query texts in order, with the file stem used to match plan fixtures.
    pub fn queries(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = self
            .config
            .workload
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| (format!("inline{}", i + 1), q.clone()))
            .collect();
        if let Some(dir) = &self.config.workload.queries_dir {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "sql"))
                .collect();
            files.sort();
            for f in files {
                let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
                let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                out.push((stem, text.trim().to_string()));
            }
        }
        Ok(out)
    }

    pub fn workload(&self) -> Result<WorkloadSpec> {
        Ok(WorkloadSpec {
            kind: self.config.workload.kind,
            objective: self.config.workload.objective,
            queries: self.queries()?.into_iter().map(|(_, q)| q).collect(),
        })
    }

    /// The configured DBMS backend.
    pub fn harness(&self) -> Result<Box<dyn Harness>> {
        match &self.config.harness {
            HarnessConfig::Simulated { surface, plans_dir } => {
                let mut s = SyntheticSurface::load(surface)?;
                if s.objective != self.config.workload.objective {
                    return Err(Error::Config(format!(
                        "surface optimizes {:?} but the workload objective is {:?}",
                        s.objective, self.config.workload.objective
                    )));
                }
                if let Some(dir) = plans_dir {
                    for (stem, query) in self.queries()? {
                        for ext in ["json", "txt"] {
                            let p = dir.join(format!("{stem}.{ext}"));
                            if p.is_file() {
                                let plan = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                                s.plans.insert(query.clone(), plan.trim().to_string());
                                break;
                            }
                        }
                    }
                }
                Ok(Box::new(SimulatedDbms::new(s)))
            }
            HarnessConfig::Postgres(pg) => Ok(Box::new(PostgresHarness::new(
                pg.clone(),
                &self.catalog,
                self.config.workload.objective,
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareSummary {
    pub written: BTreeSet<String>,
    /// Knobs whose lake files already existed.
    pub skipped: BTreeSet<String>,
    pub knowledge_free: BTreeSet<String>,
    pub unverified: BTreeSet<String>,
    pub errors: Vec<(String, String)>,
}

/// Builds the Tuning Lake. Knobs with existing lake files are skipped unless
/// `force` is set. Fails only when no source could be read for any knob.
pub fn cmd_prepare_knowledge(session: &Session, force: bool) -> Result<PrepareSummary> {
    let cfg = &session.config;
    let lake = session.config.lake_dir();
    let mut summary = PrepareSummary::default();
    let mut todo = BTreeSet::new();
    for k in &session.knobs {
        if !force && read_lake_entry(&lake, k)?.is_some() {
            summary.skipped.insert(k.clone());
        } else {
            todo.insert(k.clone());
        }
    }
    if todo.is_empty() {
        return Ok(summary);
    }
    let manual = cfg.knowledge.manual.as_ref().map(|d| FileDropSource::new(d, Source::Manual));
    let web = cfg.knowledge.web.as_ref().map(|d| FileDropSource::new(d, Source::Web));
    let elicit = match (cfg.knowledge.llm_source, session.llm()) {
        (true, Some(llm)) => Some(LlmSource {
            llm,
            prompts: &session.prompts,
            catalog: &session.catalog,
            dbms: cfg.dbms.clone(),
        }),
        _ => None,
    };
    let mut sources: Vec<&dyn KnowledgeSource> = Vec::new();
    if let Some(s) = &manual {
        sources.push(s);
    }
    if let Some(s) = &web {
        sources.push(s);
    }
    if let Some(s) = &elicit {
        sources.push(s);
    }
    let pipeline = KnowledgePipeline {
        catalog: &session.catalog,
        llm: session.llm(),
        prompts: &session.prompts,
        sources,
        settings: PipelineSettings {
            dbms: cfg.dbms.clone(),
            max_rounds: cfg.knowledge.max_rounds,
            threads: cfg.knowledge.threads,
        },
    };
    let outcome = pipeline.prepare(&todo);
    if !outcome.errors.is_empty() && outcome.knowledge_free.len() == todo.len() {
        let msgs: Vec<String> = outcome.errors.iter().map(|(a, m)| format!("{a}: {m}")).collect();
        return Err(Error::Harness(format!("no knowledge source could be read: {}", msgs.join("; "))));
    }
    for (knob, (entry, side)) in &outcome.entries {
        write_lake_entry(&lake, entry, side)?;
        summary.written.insert(knob.clone());
        if !entry.verified {
            summary.unverified.insert(knob.clone());
        }
    }
    summary.knowledge_free = outcome.knowledge_free;
    summary.errors = outcome.errors;
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformSummary {
    pub written: BTreeSet<String>,
    pub skipped: BTreeSet<String>,
    /// Knob name to validation warnings (dropped attributes).
    pub warnings: BTreeMap<String, Vec<String>>,
}

/// Turns every lake entry into structured knowledge. Existing files are
/// kept unless `force` is set.
pub fn cmd_transform(session: &Session, force: bool) -> Result<TransformSummary> {
    let cfg = &session.config;
    let lake = read_lake(&cfg.lake_dir())?;
    let out_dir = cfg.structured_dir();
    let pool = load_example_pool(cfg.knowledge.example_pool.as_deref())?;
    let no_llm = NoLlm;
    let ctx = TransformContext {
        llm: session.llm().unwrap_or(&no_llm),
        prompts: &session.prompts,
        pool: &pool,
        profile: &session.catalog.profile,
        ensemble_size: cfg.knowledge.ensemble_size,
        examples_per_prompt: cfg.knowledge.examples_per_prompt,
        seed: cfg.seed,
    };
    let mut summary = TransformSummary::default();
    for (knob, entry) in lake.iter().filter(|(k, _)| session.knobs.contains(*k)) {
        if !force && out_dir.join(format!("{knob}.json")).is_file() {
            summary.skipped.insert(knob.clone());
            continue;
        }
        let spec = session.catalog.get(knob)?;
        let (sk, warnings) = validate_structured(extract(entry, &ctx), spec, &session.catalog.profile);
        for w in &warnings {
            log::warn!("{knob}: {w}");
        }
        if !warnings.is_empty() {
            summary.warnings.insert(knob.clone(), warnings);
        }
        write_structured(&out_dir, &sk)?;
        summary.written.insert(knob.clone());
    }
    Ok(summary)
}

/// Selects the knobs to tune and writes `selection.json`.
pub fn cmd_select(session: &Session) -> Result<SelectionReport> {
    let cfg = &session.config;
    let lake = read_lake(&cfg.lake_dir())?;
    let fallback = match &cfg.selection.static_fallback {
        Some(p) => read_knob_list(p)?,
        None => Vec::new(),
    };
    let no_llm = NoLlm;
    let selector = KnobSelector {
        llm: session.llm().unwrap_or(&no_llm),
        prompts: &session.prompts,
        dbms: cfg.dbms.clone(),
        plan_token_budget: cfg.selection.plan_token_budget,
    };
    let harness = session.harness()?;
    let report = selector.select_knobs(
        &session.knobs,
        &session.workload()?,
        &lake,
        harness.as_ref(),
        cfg.selection.cap,
        &fallback,
    )?;
    if report.final_set.is_empty() {
        return Err(Error::Harness("knob selection produced no knobs".into()));
    }
    write_atomic(&cfg.selection_path(), &to_json_pretty(&report)?)?;
    Ok(report)
}

fn read_selection(path: &Path) -> Result<SelectionReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Everything `tune` returns besides the files it writes.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneSummary {
    pub result: TuneResult,
    pub report: String,
    pub evaluated: usize,
    pub replayed: usize,
}

/// Runs the prerequisites that have no output yet, then tunes. An existing
/// session log for the same search space is resumed; `force` starts over.
pub fn cmd_tune(session: &Session, force: bool) -> Result<TuneSummary> {
    let cfg = &session.config;
    let lake_missing = session.knobs.iter().any(|k| !cfg.lake_dir().join(format!("{k}.txt")).is_file());
    if lake_missing {
        cmd_prepare_knowledge(session, false)?;
    }
    cmd_transform(session, false)?;
    let selection = if cfg.selection_path().is_file() {
        read_selection(&cfg.selection_path())?
    } else {
        cmd_select(session)?
    };
    let structured = read_structured_dir(&cfg.structured_dir())?;
    let space = build_tiny_space(&selection.final_set, &session.catalog, &structured, &cfg.space_options()?)?;

    let log_path = cfg.log_path();
    let mut history = if force { Vec::new() } else { read_log(&log_path)? };
    if !history.is_empty() {
        let saved = std::fs::read_to_string(cfg.space_path())
            .ok()
            .and_then(|t| serde_json::from_str::<SearchSpace>(&t).ok());
        if saved.as_ref() != Some(&space) {
            return Err(Error::Config(
                "the search space changed since the session log was written; rerun with --force".into(),
            ));
        }
    }
    let tuner_cfg = cfg.tuner_config();
    history.truncate(tuner_cfg.budget);
    write_atomic(&cfg.space_path(), &to_json_pretty(&space)?)?;

    let mut harness = session.harness()?;
    let mut writer = LogWriter::open(&log_path, &history)?;
    let result = Tuner::new(&space, &tuner_cfg)?.run(harness.as_mut(), &history, &mut |r| writer.append(r))?;

    let best = result.best_observation();
    write_atomic(&cfg.output_dir.join("best_config.json"), &to_json_pretty(&best.physical)?)?;
    let units: BTreeMap<String, (Unit, bool)> = session
        .catalog
        .knobs
        .values()
        .map(|k| (k.name.clone(), (k.unit, k.kind == KnobKind::Integer)))
        .collect();
    let mut conf = render_assignments(&best.physical, &units).join("\n");
    conf.push('\n');
    write_atomic(&cfg.output_dir.join("best_config.conf"), conf.as_bytes())?;
    let records: Vec<LogRecord> = result.observations.iter().map(|o| o.record()).collect();
    let report = render_report(&records, cfg.workload.objective);
    write_atomic(&cfg.output_dir.join("report.txt"), report.as_bytes())?;
    let replayed = history.len().min(result.observations.len());
    Ok(TuneSummary {
        evaluated: result.observations.len() - replayed,
        replayed,
        result,
        report,
    })
}

/// Natural-unit metric of a successful record.
fn natural(objective: f64, sense: Objective) -> f64 {
    match sense {
        Objective::Latency => objective,
        Objective::Throughput => -objective,
    }
}

/// Human-readable session summary: best result, improvement over the
/// default configuration, iteration of the best and a per-stage breakdown.
pub fn render_report(records: &[LogRecord], sense: Objective) -> String {
    let mut out = String::new();
    let unit = match sense {
        Objective::Latency => "latency (lower is better)",
        Objective::Throughput => "throughput (higher is better)",
    };
    let _ = writeln!(out, "objective: {unit}");
    let _ = writeln!(out, "evaluations: {}", records.len());
    let Some(best) = records
        .iter()
        .filter(|r| r.outcome == Outcome::Ok)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.iteration.cmp(&b.iteration)))
    else {
        let _ = writeln!(out, "no successful evaluation");
        return out;
    };
    let best_value = natural(best.objective, sense);
    let _ = writeln!(out, "best: {best_value} at iteration {} ({})", best.iteration, best.stage.as_str());
    if let Some(default) = records.iter().find(|r| r.stage == Stage::Default && r.outcome == Outcome::Ok) {
        let d = natural(default.objective, sense);
        let _ = writeln!(out, "default: {d}");
        if d != 0.0 {
            let gain = match sense {
                Objective::Latency => (d - best_value) / d,
                Objective::Throughput => (best_value - d) / d,
            };
            let _ = writeln!(out, "improvement over default: {:.2}%", 100.0 * gain);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8} {:>11} {:>8} {:>8} {:>16}", "stage", "evaluations", "crashes", "timeouts", "best");
    let stages: BTreeSet<Stage> = records.iter().map(|r| r.stage).collect();
    for stage in stages {
        let rs: Vec<&LogRecord> = records.iter().filter(|r| r.stage == stage).collect();
        let count = |o: Outcome| rs.iter().filter(|r| r.outcome == o).count();
        let best = rs
            .iter()
            .filter(|r| r.outcome == Outcome::Ok)
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        let best = if best.is_finite() {
            natural(best, sense).to_string()
        } else {
            "-".into()
        };
        let _ = writeln!(
            out,
            "{:<8} {:>11} {:>8} {:>8} {:>16}",
            stage.as_str(),
            rs.len(),
            count(Outcome::Crash),
            count(Outcome::Timeout),
            best
        );
    }
    out
}

/// CSV with columns `iteration,stage,objective,best_so_far`, using the
/// internal objective (minimized; throughput negated; failures penalized).
pub fn cmd_report(log_path: &Path) -> Result<String> {
    if !log_path.is_file() {
        return Err(Error::Config(format!("session log {} does not exist", log_path.display())));
    }
    let records = read_log(log_path)?;
    let mut out = String::from("iteration,stage,objective,best_so_far\n");
    let mut best = f64::INFINITY;
    for r in &records {
        best = best.min(r.objective);
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.stage.as_str(), r.objective, best);
    }
    Ok(out)
}

/// Physical configuration of the best record of a log.
pub fn best_config(records: &[LogRecord]) -> Option<&PhysicalConfig> {
    records
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.iteration.cmp(&b.iteration)))
        .map(|r| &r.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::KnobValue;

    fn rec(iteration: usize, stage: Stage, objective: f64, outcome: Outcome) -> LogRecord {
        LogRecord {
            iteration,
            stage,
            config: PhysicalConfig::from([("work_mem".to_string(), KnobValue::Number(iteration as f64))]),
            objective,
            outcome,
            wall_ms: 0,
        }
    }

    #[test]
    fn report_for_throughput() {
        let records = vec![
            rec(0, Stage::Default, -240.0, Outcome::Ok),
            rec(1, Stage::Lhs, -300.0, Outcome::Ok),
            rec(2, Stage::Lhs, 601.0, Outcome::Crash),
            rec(3, Stage::Coarse, -360.0, Outcome::Ok),
        ];
        let text = render_report(&records, Objective::Throughput);
        assert!(text.contains("best: 360 at iteration 3 (coarse)"), "{text}");
        assert!(text.contains("default: 240"));
        assert!(text.contains("improvement over default: 50.00%"));
        assert!(text.lines().any(|l| l.starts_with("lhs") && l.contains(" 1 ")));
        assert_eq!(best_config(&records).unwrap()["work_mem"], KnobValue::Number(3.0));
    }

    #[test]
    fn report_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut w = LogWriter::open(&path, &[]).unwrap();
        for r in [
            rec(0, Stage::Default, 800.0, Outcome::Ok),
            rec(1, Stage::Lhs, 1600.0, Outcome::Crash),
            rec(2, Stage::Lhs, 700.0, Outcome::Ok),
        ] {
            w.append(&r).unwrap();
        }
        assert_eq!(
            cmd_report(&path).unwrap(),
            "iteration,stage,objective,best_so_far\n0,default,800,800\n1,lhs,1600,800\n2,lhs,700,700\n"
        );
        assert!(matches!(cmd_report(&dir.path().join("missing")), Err(Error::Config(_))));
    }

    #[test]
    fn config_parsing_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("view.tsv"), "name\tvartype\tmin_val\tmax_val\tboot_val\tunit\tenumvals\n").unwrap();
        std::fs::write(dir.path().join("surface.json"), "{}").unwrap();
        let text = r#"
            dbms = "postgres"
            seed = 7
            [profile]
            ram_bytes = 17179869184
            disk_kind = "ssd"
            cpu_cores = 8
            [catalog]
            system_view = "view.tsv"
            [workload]
            kind = "olap"
            objective = "latency"
            [tuner]
            budget = 40
            [harness]
            backend = "simulated"
            surface = "surface.json"
        "#;
        let path = dir.path().join("session.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = SessionConfig::load(&path).unwrap();
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.tuner_config().seed, 7);
        assert_eq!(cfg.tuner_config().budget, 40);
        assert_eq!(cfg.llm, LlmConfig::None);

        std::fs::write(&path, text.replace("seed = 7\n", "")).unwrap();
        assert!(matches!(SessionConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, text.replace("view.tsv", "missing.tsv")).unwrap();
        assert!(matches!(SessionConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, text.replace("budget = 40", "budget = 5")).unwrap();
        assert!(matches!(SessionConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, text.replace("[tuner]", "[tuner]\nbogus = 1")).unwrap();
        assert!(matches!(SessionConfig::load(&path), Err(Error::Config(_))));
    }
}
