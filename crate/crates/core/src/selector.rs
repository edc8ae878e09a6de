//! Choosing the knobs to tune: system, workload, query and dependency levels,
//! each answered by the language model and validated against the configurable
//! set, then capped by an importance ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::PlanSource;
use crate::knowledge::{Prompts, TuningLakeEntry};
use crate::llm::{extract_json, LlmClient, LlmRequest, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Oltp,
    Olap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Throughput,
    Latency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub objective: Objective,
    #[serde(default)]
    pub queries: Vec<String>,
}

impl WorkloadSpec {
    fn kind_str(&self) -> &'static str {
        match self.kind {
            WorkloadKind::Oltp => "OLTP",
            WorkloadKind::Olap => "OLAP",
        }
    }

    fn objective_str(&self) -> &'static str {
        match self.objective {
            Objective::Throughput => "throughput",
            Objective::Latency => "latency",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub system_set: BTreeSet<String>,
    pub workload_set: BTreeSet<String>,
    pub query_set: BTreeSet<String>,
    pub dependency_added: BTreeSet<String>,
    pub final_set: BTreeSet<String>,
    /// Union of all levels, most important first.
    pub ranking: Vec<String>,
    pub rationale: BTreeMap<String, String>,
    /// Every model call failed and the static list was used instead.
    pub fallback: bool,
}

/// Answer of one selection level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelResult {
    pub knobs: BTreeSet<String>,
    pub rationale: BTreeMap<String, String>,
    /// The model could not be consulted (or answered nonsense).
    pub failed: bool,
}

/// Parses a selection answer: a JSON array of names or `{name, reason}`
/// objects, optionally wrapped as `{"knobs": [...]}`. Names outside
/// `allowed` are dropped.
pub fn parse_selection(answer: &str, allowed: &BTreeSet<String>) -> Option<LevelResult> {
    let value = extract_json(answer)?;
    let items = match &value {
        Value::Array(items) => items,
        Value::Object(obj) => obj.get("knobs")?.as_array()?,
        _ => return None,
    };
    let mut out = LevelResult::default();
    for item in items {
        let (name, reason) = match item {
            Value::String(s) => (s.trim(), None),
            Value::Object(o) => match o.get("name").and_then(Value::as_str) {
                Some(n) => (n.trim(), o.get("reason").and_then(Value::as_str)),
                None => continue,
            },
            _ => continue,
        };
        if !allowed.contains(name) {
            log::warn!("model proposed `{name}`, which is not configurable; dropped");
            continue;
        }
        out.knobs.insert(name.to_string());
        if let Some(r) = reason {
            out.rationale.entry(name.to_string()).or_insert_with(|| r.to_string());
        }
    }
    Some(out)
}

fn join(names: &BTreeSet<String>) -> String {
    names.iter().cloned().collect::<Vec<_>>().join(", ")
}

/// Rough token count used for the plan budget.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Deepest JSON nesting level at which an object has a `Plans` list.
fn deepest_parent(v: &Value, depth: usize) -> Option<usize> {
    let own = match v {
        Value::Object(o) if o.contains_key("Plans") => Some(depth),
        _ => None,
    };
    let children = match v {
        Value::Object(o) => o.values().filter_map(|c| deepest_parent(c, depth + 1)).max(),
        Value::Array(a) => a.iter().filter_map(|c| deepest_parent(c, depth + 1)).max(),
        _ => None,
    };
    own.max(children)
}

/// Replaces the `Plans` list of every object at `target` depth by a count.
/// Those lists only hold leaves, since nothing deeper has children.
fn prune_at(v: &mut Value, depth: usize, target: usize) {
    match v {
        Value::Object(o) if depth == target => {
            if let Some(Value::Array(children)) = o.remove("Plans") {
                o.insert("Plans Truncated".into(), Value::from(children.len()));
            }
        }
        Value::Object(o) => o.values_mut().for_each(|c| prune_at(c, depth + 1, target)),
        Value::Array(a) => a.iter_mut().for_each(|c| prune_at(c, depth + 1, target)),
        _ => {}
    }
}

/// Shrinks a plan to at most `budget` tokens by cutting the deepest plan
/// nodes first. JSON plans lose their innermost `Plans` lists; text plans lose
/// their most indented lines. The root node is always kept.
pub fn truncate_plan(plan: &str, budget: usize) -> String {
    if estimate_tokens(plan) <= budget {
        return plan.to_string();
    }
    if let Ok(mut json) = serde_json::from_str::<Value>(plan) {
        loop {
            let text = serde_json::to_string(&json).expect("json serializes");
            if estimate_tokens(&text) <= budget {
                return text;
            }
            match deepest_parent(&json, 0) {
                Some(depth) => prune_at(&mut json, 0, depth),
                None => return text,
            }
        }
    }
    let mut lines: Vec<&str> = plan.lines().collect();
    let indent = |l: &str| l.len() - l.trim_start().len();
    while lines.len() > 1 && estimate_tokens(&lines.join("\n")) > budget {
        let deepest = lines.iter().skip(1).map(|l| indent(l)).max().unwrap_or(0);
        // Drop the last line at the deepest indentation.
        let pos = lines
            .iter()
            .rposition(|l| indent(l) == deepest)
            .filter(|&p| p > 0)
            .unwrap_or(lines.len() - 1);
        lines.remove(pos);
    }
    lines.join("\n")
}

pub struct KnobSelector<'a> {
    pub llm: &'a dyn LlmClient,
    pub prompts: &'a Prompts,
    pub dbms: String,
    /// Token budget for one plan inside a prompt.
    pub plan_token_budget: usize,
}

impl KnobSelector<'_> {
    fn ask(&self, task: TaskKind, subject: &str, prompt: String, allowed: &BTreeSet<String>) -> LevelResult {
        match self.llm.complete(&LlmRequest::new(task, subject, 0, prompt)) {
            Ok(answer) => parse_selection(&answer, allowed).unwrap_or_else(|| {
                log::warn!("unparsable {} answer for {subject}", task.as_str());
                LevelResult { failed: true, ..Default::default() }
            }),
            Err(e) => {
                log::warn!("{} for {subject} failed: {e}", task.as_str());
                LevelResult { failed: true, ..Default::default() }
            }
        }
    }

    pub fn select_system_level(&self, configurable: &BTreeSet<String>) -> LevelResult {
        if configurable.is_empty() {
            return LevelResult::default();
        }
        let prompt = self
            .prompts
            .render("select_system", &[("dbms", &self.dbms), ("knobs", &join(configurable))]);
        self.ask(TaskKind::SelectSystem, &self.dbms, prompt, configurable)
    }

    pub fn select_workload_level(&self, configurable: &BTreeSet<String>, workload: &WorkloadSpec) -> LevelResult {
        if configurable.is_empty() {
            return LevelResult::default();
        }
        let prompt = self.prompts.render(
            "select_workload",
            &[
                ("dbms", &self.dbms),
                ("workload_kind", workload.kind_str()),
                ("objective", workload.objective_str()),
                ("knobs", &join(configurable)),
            ],
        );
        let subject = format!("{}-{}", workload.kind_str().to_lowercase(), workload.objective_str());
        self.ask(TaskKind::SelectWorkload, &subject, prompt, configurable)
    }

    /// One prompt per query plan; the mock subject is `query<i>` (1-based).
    pub fn select_query_level(
        &self,
        configurable: &BTreeSet<String>,
        workload: &WorkloadSpec,
        plans: &dyn PlanSource,
    ) -> LevelResult {
        let mut out = LevelResult::default();
        if configurable.is_empty() || workload.queries.is_empty() {
            return out;
        }
        let mut any_ok = false;
        for (i, query) in workload.queries.iter().enumerate() {
            let plan = match plans.get_plan(query) {
                Ok(p) => truncate_plan(&p, self.plan_token_budget),
                Err(e) => {
                    log::warn!("skipping query {}: {e}", i + 1);
                    continue;
                }
            };
            let prompt = self.prompts.render(
                "select_query",
                &[("dbms", &self.dbms), ("plan", &plan), ("knobs", &join(configurable))],
            );
            let level = self.ask(TaskKind::SelectQuery, &format!("query{}", i + 1), prompt, configurable);
            any_ok |= !level.failed;
            out.knobs.extend(level.knobs);
            for (k, r) in level.rationale {
                out.rationale.entry(k).or_insert(r);
            }
        }
        out.failed = !any_ok;
        out
    }

    /// Adds knobs the lake text of `base` knobs says must move with them.
    /// When the model is unavailable, configurable knobs named verbatim in
    /// that text are added instead.
    pub fn select_knob_level(
        &self,
        lake: &BTreeMap<String, TuningLakeEntry>,
        base: &BTreeSet<String>,
        configurable: &BTreeSet<String>,
    ) -> LevelResult {
        if base.is_empty() {
            return LevelResult::default();
        }
        let knowledge: Vec<String> = base
            .iter()
            .filter_map(|k| lake.get(k))
            .filter(|e| !e.summary.is_empty())
            .map(|e| format!("{}: {}", e.knob_name, e.summary))
            .collect();
        if knowledge.is_empty() {
            return LevelResult::default();
        }
        let candidates: BTreeSet<String> = configurable.difference(base).cloned().collect();
        let prompt = self.prompts.render(
            "select_dependencies",
            &[
                ("dbms", &self.dbms),
                ("selected", &join(base)),
                ("knowledge", &knowledge.join("\n")),
                ("knobs", &join(&candidates)),
            ],
        );
        let mut level = self.ask(TaskKind::SelectDependencies, "dependencies", prompt, &candidates);
        if level.failed {
            let text = knowledge.join("\n");
            level.knobs = candidates
                .iter()
                .filter(|k| mentions(&text, k))
                .cloned()
                .collect();
        }
        level
    }

    /// Orders `union` by importance. The model's order wins; knobs it leaves
    /// out follow, sorted by how many levels picked them, then by name.
    pub fn rank(
        &self,
        union: &BTreeSet<String>,
        counts: &BTreeMap<String, usize>,
        workload: &WorkloadSpec,
    ) -> Vec<String> {
        let mut fallback: Vec<String> = union.iter().cloned().collect();
        fallback.sort_by(|a, b| counts.get(b).cmp(&counts.get(a)).then_with(|| a.cmp(b)));
        if union.len() <= 1 {
            return fallback;
        }
        let prompt = self.prompts.render(
            "rank_importance",
            &[
                ("dbms", &self.dbms),
                ("objective", workload.objective_str()),
                ("workload_kind", workload.kind_str()),
                ("knobs", &join(union)),
            ],
        );
        let answer = match self.llm.complete(&LlmRequest::new(TaskKind::RankImportance, "ranking", 0, prompt)) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("importance ranking failed: {e}; using occurrence counts");
                return fallback;
            }
        };
        let mut ranked: Vec<String> = Vec::new();
        match extract_json(&answer) {
            Some(Value::Array(items)) => {
                for name in items.iter().filter_map(Value::as_str) {
                    if union.contains(name) && !ranked.iter().any(|r| r == name) {
                        ranked.push(name.to_string());
                    }
                }
            }
            Some(Value::Object(scores)) => {
                let mut scored: Vec<(&String, f64)> = scores
                    .iter()
                    .filter(|(k, _)| union.contains(k.as_str()))
                    .filter_map(|(k, v)| v.as_f64().map(|s| (k, s)))
                    .collect();
                scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                ranked.extend(scored.into_iter().map(|(k, _)| k.clone()));
            }
            _ => log::warn!("unparsable importance ranking; using occurrence counts"),
        }
        for k in fallback {
            if !ranked.contains(&k) {
                ranked.push(k);
            }
        }
        ranked
    }

    /// Runs the four levels, completes dependencies and caps the result.
    /// If every model call fails, `static_fallback` (restricted to the
    /// configurable set) is used and the report is flagged.
    pub fn select_knobs(
        &self,
        configurable: &BTreeSet<String>,
        workload: &WorkloadSpec,
        lake: &BTreeMap<String, TuningLakeEntry>,
        plans: &dyn PlanSource,
        cap: usize,
        static_fallback: &[String],
    ) -> Result<SelectionReport> {
        if cap == 0 {
            return Err(Error::InvalidArgument("knob cap must be at least 1".into()));
        }
        let system = self.select_system_level(configurable);
        let work = self.select_workload_level(configurable, workload);
        let query = self.select_query_level(configurable, workload, plans);
        let base: BTreeSet<String> = system
            .knobs
            .iter()
            .chain(&work.knobs)
            .chain(&query.knobs)
            .cloned()
            .collect();
        let deps = self.select_knob_level(lake, &base, configurable);

        let asked_query = !workload.queries.is_empty();
        let all_failed = !configurable.is_empty()
            && system.failed
            && work.failed
            && (!asked_query || query.failed);
        let mut report = SelectionReport::default();
        if all_failed {
            log::warn!("knob selection model unavailable; using the static knob list");
            let mut ranking = Vec::new();
            for k in static_fallback {
                if configurable.contains(k) && !ranking.contains(k) {
                    ranking.push(k.clone());
                } else if !configurable.contains(k) {
                    log::warn!("static knob `{k}` is not configurable; skipped");
                }
            }
            report.final_set = ranking.iter().take(cap).cloned().collect();
            report.ranking = ranking;
            report.fallback = true;
            return Ok(report);
        }

        let dependency_added: BTreeSet<String> = deps.knobs.difference(&base).cloned().collect();
        let union: BTreeSet<String> = base.union(&dependency_added).cloned().collect();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for set in [&system.knobs, &work.knobs, &query.knobs, &dependency_added] {
            for k in set {
                *counts.entry(k.clone()).or_default() += 1;
            }
        }
        let ranking = self.rank(&union, &counts, workload);
        report.final_set = ranking.iter().take(cap).cloned().collect();
        for level in [&system, &work, &query, &deps] {
            for (k, r) in &level.rationale {
                report.rationale.entry(k.clone()).or_insert_with(|| r.clone());
            }
        }
        report.system_set = system.knobs;
        report.workload_set = work.knobs;
        report.query_set = query.knobs;
        report.dependency_added = dependency_added;
        report.ranking = ranking;
        Ok(report)
    }
}

fn mentions(text: &str, knob: &str) -> bool {
    text.match_indices(knob).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + knob.len()..].chars().next();
        let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
        !word(before) && !word(after)
    })
}

/// Reads a plain-text knob list: one name per line, `#` comments.
pub fn read_knob_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockLlm;
    use proptest::prelude::*;

    struct Plans(BTreeMap<String, String>);

    impl PlanSource for Plans {
        fn get_plan(&self, query: &str) -> Result<String> {
            self.0
                .get(query)
                .cloned()
                .ok_or_else(|| Error::Harness(format!("no plan for {query}")))
        }
    }

    fn no_plans() -> Plans {
        Plans(BTreeMap::new())
    }

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn olap() -> WorkloadSpec {
        WorkloadSpec {
            kind: WorkloadKind::Olap,
            objective: Objective::Latency,
            queries: vec![],
        }
    }

    fn selector<'a>(llm: &'a MockLlm, prompts: &'a Prompts) -> KnobSelector<'a> {
        KnobSelector {
            llm,
            prompts,
            dbms: "postgres".into(),
            plan_token_budget: 2000,
        }
    }

    const PG: &[&str] = &[
        "checkpoint_segments",
        "effective_io_concurrency",
        "max_parallel_workers_per_gather",
        "max_wal_size",
        "random_page_cost",
        "shared_buffers",
        "work_mem",
    ];

    #[test]
    fn system_level_validates_names() {
        let llm = MockLlm::new().with(
            "postgres",
            TaskKind::SelectSystem,
            &[r#"["shared_buffers", {"name": "max_wal_size", "reason": "checkpoints"}, "innodb_buffer_pool_size"]"#],
        );
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let level = s.select_system_level(&set(PG));
        assert_eq!(level.knobs, set(&["max_wal_size", "shared_buffers"]));
        assert_eq!(level.rationale["max_wal_size"], "checkpoints");
        assert!(s.select_system_level(&BTreeSet::new()).knobs.is_empty());
    }

    #[test]
    fn workload_level_and_full_rejection() {
        let llm = MockLlm::new()
            .with("olap-latency", TaskKind::SelectWorkload, &[r#"["max_parallel_workers_per_gather"]"#])
            .with("oltp-throughput", TaskKind::SelectWorkload, &[r#"["not_a_knob", "also_not"]"#]);
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        assert_eq!(
            s.select_workload_level(&set(PG), &olap()).knobs,
            set(&["max_parallel_workers_per_gather"])
        );
        let oltp = WorkloadSpec {
            kind: WorkloadKind::Oltp,
            objective: Objective::Throughput,
            queries: vec![],
        };
        assert!(s.select_workload_level(&set(PG), &oltp).knobs.is_empty());
    }

    #[test]
    fn query_level_unions_and_skips_missing_plans() {
        let llm = MockLlm::new()
            .with("query1", TaskKind::SelectQuery, &[r#"["random_page_cost", "work_mem"]"#])
            .with("query2", TaskKind::SelectQuery, &[r#"["work_mem"]"#]);
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let plans = Plans(BTreeMap::from([
            ("q1".to_string(), "Seq Scan on lineitem".to_string()),
            ("q2".to_string(), "Hash Join".to_string()),
        ]));
        let mut w = olap();
        w.queries = vec!["q1".into(), "q2".into(), "q3".into()];
        let level = s.select_query_level(&set(PG), &w, &plans);
        assert_eq!(level.knobs, set(&["random_page_cost", "work_mem"]));
        assert_eq!(llm.call_count(TaskKind::SelectQuery), 2);
        assert!(s.select_query_level(&set(PG), &olap(), &plans).knobs.is_empty());
    }

    fn lake_entry(knob: &str, text: &str) -> (String, TuningLakeEntry) {
        (
            knob.to_string(),
            TuningLakeEntry {
                knob_name: knob.into(),
                summary: text.into(),
                provenance: vec![],
                consistency_attempts: 1,
                verified: true,
            },
        )
    }

    #[test]
    fn dependency_level() {
        let lake = BTreeMap::from([lake_entry(
            "shared_buffers",
            "Larger settings for shared_buffers usually require a corresponding increase in checkpoint_segments.",
        )]);
        let llm = MockLlm::new().with("dependencies", TaskKind::SelectDependencies, &[r#"["checkpoint_segments"]"#]);
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let base = set(&["shared_buffers"]);
        assert_eq!(s.select_knob_level(&lake, &base, &set(PG)).knobs, set(&["checkpoint_segments"]));
        // Without a model, verbatim mentions are used.
        let down = MockLlm::new().failing("*", TaskKind::SelectDependencies);
        let s = selector(&down, &prompts);
        assert_eq!(s.select_knob_level(&lake, &base, &set(PG)).knobs, set(&["checkpoint_segments"]));
        assert!(s.select_knob_level(&lake, &set(&["work_mem"]), &set(PG)).knobs.is_empty());
        assert!(s.select_knob_level(&lake, &BTreeSet::new(), &set(PG)).knobs.is_empty());
    }

    #[test]
    fn disjoint_levels_union() {
        let llm = MockLlm::new()
            .with("*", TaskKind::SelectSystem, &[r#"["a"]"#])
            .with("*", TaskKind::SelectWorkload, &[r#"["b"]"#])
            .with("*", TaskKind::SelectQuery, &[r#"["c"]"#])
            .with("*", TaskKind::RankImportance, &[r#"["c", "a", "b"]"#]);
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let plans = Plans(BTreeMap::from([("q".to_string(), "plan".to_string())]));
        let mut w = olap();
        w.queries = vec!["q".into()];
        let r = s.select_knobs(&set(&["a", "b", "c", "d"]), &w, &BTreeMap::new(), &plans, 10, &[]).unwrap();
        assert_eq!(r.final_set, set(&["a", "b", "c"]));
        assert!(r.dependency_added.is_empty());
        assert!(!r.fallback);
        let r1 = s.select_knobs(&set(&["a", "b", "c", "d"]), &w, &BTreeMap::new(), &plans, 1, &[]).unwrap();
        assert_eq!(r1.final_set, set(&["c"]));
        assert!(s.select_knobs(&set(&["a"]), &w, &BTreeMap::new(), &plans, 0, &[]).is_err());
    }

    #[test]
    fn total_failure_uses_static_list() {
        let llm = MockLlm::new();
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let stat = vec!["shared_buffers".to_string(), "bogus".to_string(), "work_mem".to_string()];
        let r = s.select_knobs(&set(PG), &olap(), &BTreeMap::new(), &no_plans(), 60, &stat).unwrap();
        assert!(r.fallback);
        assert_eq!(r.final_set, set(&["shared_buffers", "work_mem"]));
    }

    #[test]
    fn ranking_fallback_uses_counts_then_names() {
        let llm = MockLlm::new()
            .with("*", TaskKind::SelectSystem, &[r#"["b", "c"]"#])
            .with("*", TaskKind::SelectWorkload, &[r#"["c", "a"]"#]);
        let prompts = Prompts::default();
        let s = selector(&llm, &prompts);
        let r = s.select_knobs(&set(&["a", "b", "c"]), &olap(), &BTreeMap::new(), &no_plans(), 2, &[]).unwrap();
        assert_eq!(r.ranking, ["c", "a", "b"]);
        assert_eq!(r.final_set, set(&["a", "c"]));
    }

    #[test]
    fn json_plan_truncation_cuts_deepest_nodes() {
        let plan = serde_json::json!([{"Plan": {
            "Node Type": "Aggregate",
            "Plans": [{"Node Type": "Hash Join", "Plans": [
                {"Node Type": "Seq Scan", "Relation Name": "lineitem", "Plans": [
                    {"Node Type": "Bitmap Index Scan", "Index Name": "a_very_long_index_name_for_padding"}
                ]},
                {"Node Type": "Hash"}
            ]}]
        }}])
        .to_string();
        let full = estimate_tokens(&plan);
        let cut = truncate_plan(&plan, full - 5);
        assert!(estimate_tokens(&cut) <= full - 5);
        assert!(cut.contains("Seq Scan"));
        assert!(!cut.contains("Bitmap Index Scan"));
        assert_eq!(truncate_plan(&plan, full), plan);
        let root = truncate_plan(&plan, 1);
        assert!(root.contains("Aggregate"));
    }

    #[test]
    fn text_plan_truncation() {
        let plan = "Aggregate\n  ->  Hash Join\n        ->  Seq Scan on lineitem\n        ->  Hash\n              ->  Seq Scan on orders";
        let cut = truncate_plan(plan, estimate_tokens(plan) - 3);
        assert!(!cut.contains("orders"));
        assert!(cut.starts_with("Aggregate"));
        assert_eq!(truncate_plan(plan, 0), "Aggregate");
    }

    proptest! {
        #[test]
        fn final_set_is_configurable_and_monotone_in_cap(
            sys in proptest::collection::btree_set("[a-h]", 0..5),
            wl in proptest::collection::btree_set("[a-h]", 0..5),
            cap in 1usize..8,
        ) {
            let configurable = set(&["a", "b", "c", "d", "e"]);
            let js = |s: &BTreeSet<String>| serde_json::to_string(s).unwrap();
            let llm = MockLlm::new()
                .with("*", TaskKind::SelectSystem, &[&js(&sys)])
                .with("*", TaskKind::SelectWorkload, &[&js(&wl)])
                .with("*", TaskKind::RankImportance, &[r#"["e", "d", "c", "b", "a"]"#]);
            let prompts = Prompts::default();
            let s = selector(&llm, &prompts);
            let small = s.select_knobs(&configurable, &olap(), &BTreeMap::new(), &no_plans(), cap, &[]).unwrap();
            let large = s.select_knobs(&configurable, &olap(), &BTreeMap::new(), &no_plans(), cap + 1, &[]).unwrap();
            prop_assert!(small.final_set.is_subset(&configurable));
            prop_assert!(small.final_set.is_subset(&large.final_set));
            let union: BTreeSet<String> = small.system_set.union(&small.workload_set).cloned().collect();
            if cap >= union.len() {
                prop_assert_eq!(&small.final_set, &union);
            }
        }
    }
}
