//! Knob metadata loaded from a DBMS system view export (`pg_settings`).
//!
//! The export is a tab-separated file with the header
//! `name vartype min_val max_val boot_val unit enumvals`, optionally followed
//! by `category` and `short_desc`. It can be produced with:
//!
//! ```sql
//! COPY (SELECT name, vartype, min_val, max_val, boot_val, unit, enumvals,
//!              category, short_desc
//!       FROM pg_settings WHERE context <> 'internal')
//! TO STDOUT WITH (FORMAT text, HEADER true);
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnobKind {
    Integer,
    Real,
    Categorical,
    Boolean,
}

impl KnobKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, KnobKind::Integer | KnobKind::Real)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    None,
    Bytes,
    Kilobytes,
    Milliseconds,
    Seconds,
    Pages,
    Count,
}

impl Unit {
    pub fn is_memory(self) -> bool {
        matches!(self, Unit::Bytes | Unit::Kilobytes | Unit::Pages)
    }

    pub fn is_non_negative(self) -> bool {
        matches!(
            self,
            Unit::Bytes | Unit::Kilobytes | Unit::Pages | Unit::Milliseconds | Unit::Seconds
        )
    }

    /// Maps a `pg_settings.unit` string to the canonical unit and the factor
    /// that converts native values into it.
    fn from_native(unit: &str) -> Option<(Unit, f64)> {
        let unit = unit.trim();
        if is_null(unit) {
            return Some((Unit::None, 1.0));
        }
        let split = unit
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(unit.len());
        let multiplier: f64 = if split == 0 {
            1.0
        } else {
            unit[..split].parse().ok()?
        };
        let (canonical, scale) = match &unit[split..] {
            "B" => (Unit::Bytes, 1.0),
            "kB" => (Unit::Bytes, 1024.0),
            "MB" => (Unit::Bytes, 1024.0 * 1024.0),
            "GB" => (Unit::Bytes, 1024.0 * 1024.0 * 1024.0),
            "ms" => (Unit::Milliseconds, 1.0),
            "s" => (Unit::Milliseconds, 1_000.0),
            "min" => (Unit::Milliseconds, 60_000.0),
            "h" => (Unit::Milliseconds, 3_600_000.0),
            "d" => (Unit::Milliseconds, 86_400_000.0),
            _ => return None,
        };
        Some((canonical, multiplier * scale))
    }
}

/// A knob value: numbers are in the knob's canonical unit, text holds
/// categorical/boolean settings or not-yet-resolved quantity expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnobValue {
    Number(f64),
    Text(String),
}

impl KnobValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            KnobValue::Number(v) => Some(*v),
            KnobValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            KnobValue::Text(s) => Some(s),
            KnobValue::Number(_) => None,
        }
    }
}

impl fmt::Display for KnobValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnobValue::Number(v) => write!(f, "{v}"),
            KnobValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobSpec {
    pub name: String,
    pub kind: KnobKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor_max: Option<f64>,
    pub default_value: KnobValue,
    #[serde(default)]
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub description: String,
    /// Settings group from the system view (e.g. `Developer Options`).
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub category: String,
}

impl KnobSpec {
    /// Vendor bounds for numeric knobs.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.vendor_min?, self.vendor_max?))
    }

    /// The admissible values of a boolean or categorical knob.
    pub fn choices(&self) -> Vec<String> {
        match self.kind {
            KnobKind::Boolean => vec!["off".into(), "on".into()],
            _ => self.categories.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, value: String| Error::BadField {
            knob: self.name.clone(),
            field,
            value,
        };
        match self.kind {
            KnobKind::Integer | KnobKind::Real => {
                let (lo, hi) = self
                    .bounds()
                    .ok_or_else(|| bad("min_val", "missing".into()))?;
                if lo > hi {
                    return Err(bad("max_val", hi.to_string()));
                }
                let d = self
                    .default_value
                    .as_number()
                    .ok_or_else(|| bad("boot_val", self.default_value.to_string()))?;
                if d < lo || d > hi {
                    return Err(bad("boot_val", d.to_string()));
                }
                if !self.categories.is_empty() {
                    return Err(bad("enumvals", self.categories.join(",")));
                }
            }
            KnobKind::Categorical | KnobKind::Boolean => {
                if (self.kind == KnobKind::Categorical) == self.categories.is_empty() {
                    return Err(bad("enumvals", self.categories.join(",")));
                }
                if self.unit != Unit::None {
                    return Err(bad("unit", format!("{:?}", self.unit)));
                }
                let d = self
                    .default_value
                    .as_text()
                    .ok_or_else(|| bad("boot_val", self.default_value.to_string()))?;
                if !self.choices().iter().any(|c| c == d) {
                    return Err(bad("boot_val", d.to_string()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiskKind {
    Ssd,
    Hdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub ram_bytes: u64,
    pub disk_kind: DiskKind,
    pub cpu_cores: u32,
    /// Needed only to resolve `% of disk` expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_bytes: Option<u64>,
}

impl SystemProfile {
    pub fn new(ram_bytes: u64, disk_kind: DiskKind, cpu_cores: u32) -> Result<Self> {
        let profile = SystemProfile {
            ram_bytes,
            disk_kind,
            cpu_cores,
            disk_bytes: None,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ram_bytes == 0 {
            return Err(Error::InvalidArgument("ram_bytes must be positive".into()));
        }
        if self.cpu_cores == 0 {
            return Err(Error::InvalidArgument("cpu_cores must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobCatalog {
    pub knobs: BTreeMap<String, KnobSpec>,
    pub profile: SystemProfile,
}

impl KnobCatalog {
    pub fn get(&self, name: &str) -> Result<&KnobSpec> {
        self.knobs
            .get(name)
            .ok_or_else(|| Error::UnknownKnob(name.to_string()))
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.knobs.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.knobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knobs.is_empty()
    }

    pub fn load(path: &Path, profile: SystemProfile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        load_system_view(&text, profile)
    }
}

fn is_null(field: &str) -> bool {
    field.is_empty() || field == "\\N"
}

/// Parses a system-view export into a catalog.
///
/// Rows with `vartype = string` (paths, names, lists) are not tunable and are
/// skipped. Negative sentinels such as `-1` are kept verbatim rather than unit
/// scaled.
pub fn load_system_view(text: &str, profile: SystemProfile) -> Result<KnobCatalog> {
    profile.validate()?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut knobs = BTreeMap::new();
    let Some(header) = lines.next() else {
        return Ok(KnobCatalog { knobs, profile });
    };
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let required = ["name", "vartype", "min_val", "max_val", "boot_val", "unit", "enumvals"];
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| Error::SystemView(format!("missing column `{name}`")))?;
    }
    let [c_name, c_type, c_min, c_max, c_boot, c_unit, c_enum] = idx;
    let c_category = col("category");
    let c_desc = col("short_desc");

    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let field = |i: usize| fields.get(i).copied().unwrap_or("").trim();
        let name = field(c_name).to_string();
        if name.is_empty() {
            return Err(Error::SystemView(format!("row without a name: {line:?}")));
        }
        let bad = |field: &'static str, value: &str| Error::BadField {
            knob: name.clone(),
            field,
            value: value.to_string(),
        };
        let kind = match field(c_type) {
            "integer" => KnobKind::Integer,
            "real" => KnobKind::Real,
            "bool" | "boolean" => KnobKind::Boolean,
            "enum" => KnobKind::Categorical,
            "string" => {
                log::debug!("skipping string knob {name}");
                continue;
            }
            other => return Err(bad("vartype", other)),
        };
        let spec = if kind.is_numeric() {
            let (unit, scale) = Unit::from_native(field(c_unit)).ok_or_else(|| bad("unit", field(c_unit)))?;
            let num = |field_name: &'static str, raw: &str| -> Result<f64> {
                let v: f64 = raw.parse().map_err(|_| bad(field_name, raw))?;
                Ok(if v < 0.0 { v } else { v * scale })
            };
            KnobSpec {
                name: name.clone(),
                kind,
                vendor_min: Some(num("min_val", field(c_min))?),
                vendor_max: Some(num("max_val", field(c_max))?),
                default_value: KnobValue::Number(num("boot_val", field(c_boot))?),
                unit,
                categories: Vec::new(),
                description: c_desc.map(field).unwrap_or_default().to_string(),
                category: c_category.map(field).unwrap_or_default().to_string(),
            }
        } else {
            let categories = if kind == KnobKind::Categorical {
                let raw = field(c_enum);
                if is_null(raw) {
                    return Err(bad("enumvals", raw));
                }
                raw.trim_start_matches('{')
                    .trim_end_matches('}')
                    .split(',')
                    .map(|s| s.trim().trim_matches('"').to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            } else {
                Vec::new()
            };
            KnobSpec {
                name: name.clone(),
                kind,
                vendor_min: None,
                vendor_max: None,
                default_value: KnobValue::Text(field(c_boot).to_string()),
                unit: Unit::None,
                categories,
                description: c_desc.map(field).unwrap_or_default().to_string(),
                category: c_category.map(field).unwrap_or_default().to_string(),
            }
        };
        spec.validate()?;
        if knobs.insert(name.clone(), spec).is_some() {
            return Err(Error::DuplicateKnob(name));
        }
    }
    Ok(KnobCatalog { knobs, profile })
}

#[derive(Debug, Clone, PartialEq)]
enum DenyRule {
    Name(glob::Pattern),
    Category(String),
}

/// Patterns excluding knobs that are not worth tuning (debugging, security,
/// file paths). A line is either a glob on the knob name or
/// `category:<prefix>` matched case-insensitively against the settings group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenyRules {
    rules: Vec<DenyRule>,
}

const DEFAULT_DENY_RULES: &str = include_str!("../resources/deny_rules.txt");

impl DenyRules {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(cat) = line.strip_prefix("category:") {
                rules.push(DenyRule::Category(cat.trim().to_ascii_lowercase()));
            } else {
                let pat = glob::Pattern::new(line)
                    .map_err(|e| Error::InvalidArgument(format!("deny rule {line:?}: {e}")))?;
                rules.push(DenyRule::Name(pat));
            }
        }
        Ok(DenyRules { rules })
    }

    /// The rule set shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_DENY_RULES).expect("builtin deny rules parse")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn denies(&self, spec: &KnobSpec) -> bool {
        let category = spec.category.to_ascii_lowercase();
        self.rules.iter().any(|rule| match rule {
            DenyRule::Name(p) => p.matches(&spec.name),
            DenyRule::Category(prefix) => !category.is_empty() && category.starts_with(prefix),
        })
    }

    /// Rules `[0, n)` only; used to check monotonicity.
    pub fn prefix(&self, n: usize) -> Self {
        DenyRules {
            rules: self.rules[..n.min(self.rules.len())].to_vec(),
        }
    }
}

/// The configurable knob set: catalog names minus every denied knob.
pub fn filter_configurable(catalog: &KnobCatalog, deny: &DenyRules) -> BTreeSet<String> {
    catalog
        .knobs
        .values()
        .filter(|spec| !deny.denies(spec))
        .map(|spec| spec.name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "name\tvartype\tmin_val\tmax_val\tboot_val\tunit\tenumvals\n";

    fn profile() -> SystemProfile {
        SystemProfile::new(16 << 30, DiskKind::Ssd, 8).unwrap()
    }

    fn load(rows: &str) -> Result<KnobCatalog> {
        load_system_view(&format!("{HEADER}{rows}"), profile())
    }

    #[test]
    fn integer_knob_without_unit() {
        let cat = load("backend_flush_after\tinteger\t0\t256\t0\t8kB\t\\N\n").unwrap();
        let k = cat.get("backend_flush_after").unwrap();
        assert_eq!(k.kind, KnobKind::Integer);
        assert_eq!(k.vendor_min, Some(0.0));
        // 8kB pages are stored in bytes.
        assert_eq!(k.vendor_max, Some(256.0 * 8192.0));
        assert_eq!(k.unit, Unit::Bytes);

        let cat = load("max_connections\tinteger\t1\t262143\t100\t\t\n").unwrap();
        let k = cat.get("max_connections").unwrap();
        assert_eq!(k.bounds(), Some((1.0, 262143.0)));
        assert_eq!(k.unit, Unit::None);
    }

    #[test]
    fn lock_timeout_in_ms() {
        let cat = load("lock_timeout\tinteger\t0\t2147483647\t0\tms\t\n").unwrap();
        let k = cat.get("lock_timeout").unwrap();
        assert_eq!(k.bounds(), Some((0.0, 2147483647.0)));
        assert_eq!(k.unit, Unit::Milliseconds);
    }

    #[test]
    fn seconds_and_sentinels() {
        let cat = load(
            "checkpoint_timeout\tinteger\t30\t86400\t300\ts\t\n\
             autovacuum_work_mem\tinteger\t-1\t2147483647\t-1\tkB\t\n",
        )
        .unwrap();
        let k = cat.get("checkpoint_timeout").unwrap();
        assert_eq!(k.bounds(), Some((30_000.0, 86_400_000.0)));
        let k = cat.get("autovacuum_work_mem").unwrap();
        assert_eq!(k.vendor_min, Some(-1.0));
        assert_eq!(k.default_value, KnobValue::Number(-1.0));
    }

    #[test]
    fn enums_bools_and_strings() {
        let cat = load(
            "wal_level\tenum\t\\N\t\\N\treplica\t\\N\t{minimal,replica,logical}\n\
             fsync\tbool\t\\N\t\\N\ton\t\\N\t\\N\n\
             data_directory\tstring\t\\N\t\\N\t\\N\t\\N\t\\N\n",
        )
        .unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.get("wal_level").unwrap().categories, ["minimal", "replica", "logical"]);
        assert_eq!(cat.get("fsync").unwrap().kind, KnobKind::Boolean);
    }

    #[test]
    fn empty_view() {
        assert!(load("").unwrap().is_empty());
        assert!(load_system_view("", profile()).unwrap().is_empty());
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        let err = load("a\tinteger\t0\t1\t0\t\t\na\tinteger\t0\t1\t0\t\t\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateKnob(n) if n == "a"));
        let err = load("a\tinteger\tzero\t1\t0\t\t\n").unwrap_err();
        assert!(matches!(err, Error::BadField { field: "min_val", .. }));
        let err = load_system_view("name\tvartype\n", profile()).unwrap_err();
        assert!(matches!(err, Error::SystemView(_)));
    }

    fn spec(name: &str, category: &str) -> KnobSpec {
        KnobSpec {
            name: name.into(),
            kind: KnobKind::Integer,
            vendor_min: Some(0.0),
            vendor_max: Some(10.0),
            default_value: KnobValue::Number(1.0),
            unit: Unit::None,
            categories: vec![],
            description: String::new(),
            category: category.into(),
        }
    }

    fn catalog(specs: Vec<KnobSpec>) -> KnobCatalog {
        KnobCatalog {
            knobs: specs.into_iter().map(|s| (s.name.clone(), s)).collect(),
            profile: profile(),
        }
    }

    #[test]
    fn default_rules_drop_paths() {
        let cat = catalog(vec![spec("shared_buffers", ""), spec("ssl_cert_file", "")]);
        let kept = filter_configurable(&cat, &DenyRules::builtin());
        assert_eq!(kept, BTreeSet::from(["shared_buffers".to_string()]));
    }

    #[test]
    fn empty_rules_keep_all_and_debug_rule_drops_all() {
        let cat = catalog(vec![spec("debug_print_plan", ""), spec("debug_assertions", "")]);
        assert_eq!(filter_configurable(&cat, &DenyRules::default()), cat.names());
        let rules = DenyRules::parse("# debugging\ndebug_*\n").unwrap();
        assert!(filter_configurable(&cat, &rules).is_empty());
    }

    #[test]
    fn category_rule() {
        let cat = catalog(vec![
            spec("wal_consistency_checking", "Developer Options"),
            spec("work_mem", "Resource Usage / Memory"),
        ]);
        let rules = DenyRules::parse("category:developer options").unwrap();
        assert_eq!(
            filter_configurable(&cat, &rules),
            BTreeSet::from(["work_mem".to_string()])
        );
    }

    #[test]
    fn catalog_round_trips_through_json() {
        let cat = load(
            "shared_buffers\tinteger\t16\t1073741823\t1024\t8kB\t\\N\n\
             wal_level\tenum\t\\N\t\\N\treplica\t\\N\t{minimal,replica,logical}\n\
             fsync\tbool\t\\N\t\\N\ton\t\\N\t\\N\n\
             random_page_cost\treal\t0\t1.79769e+308\t4\t\\N\t\\N\n",
        )
        .unwrap();
        let json = serde_json::to_string(&cat).unwrap();
        let back: KnobCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cat);
    }

    proptest! {
        #[test]
        fn filter_is_subset_and_monotone(
            names in proptest::collection::btree_set("[a-z]{1,3}_[a-z]{1,4}", 0..30),
            n_rules in 0usize..8,
        ) {
            let cat = catalog(names.iter().map(|n| spec(n, "")).collect());
            let rules = DenyRules::parse("a*\n*_b*\n?_*\nc*d*\n*x\n*_mem\nz*\n*_q").unwrap();
            let wide = filter_configurable(&cat, &rules.prefix(n_rules));
            let narrow = filter_configurable(&cat, &rules.prefix(n_rules + 1));
            prop_assert!(wide.is_subset(&cat.names()));
            prop_assert!(narrow.is_subset(&wide));
        }
    }
}
