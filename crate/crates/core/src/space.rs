//! Search spaces built from structured knowledge.
//!
//! Every selected knob becomes one [`KnobDomainView`]. The view carries the
//! knowledge-narrowed range used in the fine stage, the handful of discrete
//! values used in the coarse stage and, for knobs with a documented special
//! value, a virtual control/normal/special triple.
//!
//! The optimizer works on [`Configuration`]s over the extended parameter list
//! ([`SearchSpace::params`]). A virtual knob contributes a categorical control
//! parameter and a numeric normal parameter; the special constant is not a
//! parameter. When the control is 1 the normal parameter holds a placeholder
//! (its minimum) so that equal physical configurations encode identically.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{KnobCatalog, KnobKind, KnobSpec, KnobValue, SystemProfile, Unit};
use crate::error::{Error, Result};
use crate::knowledge::StructuredKnob;
use crate::quantity::resolve_quantity;

/// Physical configuration: knob name to value in canonical units.
pub type PhysicalConfig = BTreeMap<String, KnobValue>;

/// Bounds larger than this are clamped so that range widths stay finite.
const BOUND_LIMIT: f64 = 1e18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    pub betas: Vec<f64>,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        DeviationConfig {
            betas: vec![0.0, 0.25, 0.5],
        }
    }
}

impl DeviationConfig {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::InvalidArgument(format!("betas must lie in [0, 1]: {betas:?}")));
        }
        Ok(DeviationConfig { betas })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualKnob {
    pub control_name: String,
    pub normal_name: String,
    pub special_name: String,
    pub special_value: f64,
    pub normal_min: f64,
    pub normal_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobDomainView {
    pub knob_name: String,
    pub kind: KnobKind,
    pub unit: Unit,
    pub default_value: KnobValue,
    /// Numeric knobs only.
    pub effective_min: Option<f64>,
    pub effective_max: Option<f64>,
    /// Choices of categorical and boolean knobs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    /// Coarse-stage candidates. Empty means the knob is held at
    /// [`KnobDomainView::tiny_default`] during the coarse stage.
    pub tiny_values: Vec<KnobValue>,
    #[serde(rename = "virtual", default, skip_serializing_if = "Option::is_none")]
    pub virtual_knob: Option<VirtualKnob>,
}

impl KnobDomainView {
    pub fn is_integer(&self) -> bool {
        self.kind == KnobKind::Integer
    }

    /// The vendor default moved into the effective range.
    pub fn tiny_default(&self) -> KnobValue {
        match (&self.default_value, self.effective_min, self.effective_max) {
            (KnobValue::Number(d), Some(lo), Some(hi)) => {
                if self.virtual_knob.as_ref().is_some_and(|v| v.special_value == *d) {
                    KnobValue::Number(*d)
                } else {
                    KnobValue::Number(d.clamp(lo, hi))
                }
            }
            (v, _, _) => v.clone(),
        }
    }

    fn allows_full(&self, value: &KnobValue) -> bool {
        match value {
            KnobValue::Number(x) => {
                if let Some(v) = &self.virtual_knob {
                    return *x == v.special_value || (*x >= v.normal_min && *x <= v.normal_max && self.step_ok(*x));
                }
                match (self.effective_min, self.effective_max) {
                    (Some(lo), Some(hi)) => *x >= lo && *x <= hi && self.step_ok(*x),
                    _ => false,
                }
            }
            KnobValue::Text(t) => self.categories.iter().any(|c| c == t),
        }
    }

    fn allows_tiny(&self, value: &KnobValue) -> bool {
        if self.tiny_values.is_empty() {
            return *value == self.tiny_default();
        }
        self.tiny_values.contains(value)
    }

    fn step_ok(&self, x: f64) -> bool {
        !self.is_integer() || x.fract() == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Tiny,
    Full,
}

/// Domain of one optimizer parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Real { lo: f64, hi: f64 },
    Integer { lo: f64, hi: f64 },
    Categorical { choices: Vec<String> },
}

impl Domain {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Domain::Categorical { .. })
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Domain::Real { lo, hi } => x >= *lo && x <= *hi,
            Domain::Integer { lo, hi } => x >= *lo && x <= *hi && x.fract() == 0.0,
            Domain::Categorical { choices } => x >= 0.0 && x.fract() == 0.0 && (x as usize) < choices.len(),
        }
    }

    /// Maps a value to `[0, 1]`; categorical values keep their index.
    pub fn normalize(&self, x: f64) -> f64 {
        match self {
            Domain::Real { lo, hi } | Domain::Integer { lo, hi } => {
                if hi > lo {
                    (x - lo) / (hi - lo)
                } else {
                    0.0
                }
            }
            Domain::Categorical { .. } => x,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Domain::Real { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            Domain::Integer { lo, hi } => {
                let x = (lo + (rng.random::<f64>() * (hi - lo + 1.0)).floor()).min(*hi);
                x.max(*lo)
            }
            Domain::Categorical { choices } => rng.random_range(0..choices.len()) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Plain,
    Control,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub knob: String,
    pub role: Role,
    pub domain: Domain,
}

/// A point of the extended space, aligned with [`SearchSpace::params`].
/// Categorical entries hold the index of the chosen category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<KnobDomainView>,
    pub granularity: Granularity,
}

/// Range after Region Discard: knowledge bounds intersected with the vendor
/// range, memory knobs capped at the machine's RAM. Bounds that cannot be
/// resolved, are inverted or leave an empty range are ignored.
pub fn region_discard(spec: &KnobSpec, sk: Option<&StructuredKnob>, profile: &SystemProfile) -> Result<(f64, f64)> {
    let (vlo, vhi) = spec
        .bounds()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not numeric", spec.name)))?;
    let (vlo, vhi) = (vlo.max(-BOUND_LIMIT), vhi.min(BOUND_LIMIT));
    let mut hi_cap = vhi;
    if spec.unit.is_memory() && (profile.ram_bytes as f64) >= vlo {
        hi_cap = hi_cap.min(profile.ram_bytes as f64);
    }
    let resolve = |v: &Option<KnobValue>| -> Option<f64> {
        match v.as_ref()? {
            KnobValue::Number(x) => Some(*x),
            KnobValue::Text(t) => match resolve_quantity(t, profile, spec.unit) {
                Ok(x) => Some(x),
                Err(e) => {
                    log::warn!("{}: ignoring bound: {e}", spec.name);
                    None
                }
            },
        }
    };
    let (kmin, kmax) = sk.map_or((None, None), |sk| (resolve(&sk.min_value), resolve(&sk.max_value)));
    if let (Some(a), Some(b)) = (kmin, kmax) {
        if a > b {
            log::warn!("{}: knowledge bounds [{a}, {b}] are inverted; ignored", spec.name);
            return Ok((vlo, hi_cap));
        }
    }
    let mut lo = kmin.map_or(vlo, |k| k.max(vlo));
    let mut hi = kmax.map_or(hi_cap, |k| k.min(hi_cap));
    if spec.kind == KnobKind::Integer {
        lo = lo.ceil();
        hi = hi.floor();
    }
    if lo > hi {
        log::warn!("{}: knowledge bounds leave an empty range; ignored", spec.name);
        return Ok((vlo, hi_cap));
    }
    Ok((lo, hi))
}

/// `V + β(U − V)`: moves the suggested value `v` towards the bound `u`.
/// Evaluated as `(1 − β)V + βU`, which is exact at β = 0 and β = 1.
pub fn deviate(v: f64, u: f64, beta: f64) -> f64 {
    (1.0 - beta) * v + beta * u
}

/// Deviation for a knob: integers are rounded half away from zero, then the
/// result is clamped to `[lo, hi]`.
pub fn deviate_in(v: f64, u: f64, beta: f64, lo: f64, hi: f64, integer: bool) -> f64 {
    let x = deviate(v, u, beta);
    let x = if integer { x.round() } else { x };
    x.clamp(lo, hi)
}

/// Deviated values of every suggestion in both directions, sorted and
/// deduplicated.
pub fn tiny_values_for(suggested: &[f64], lo: f64, hi: f64, integer: bool, config: &DeviationConfig) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &v in suggested {
        let v = if integer { v.round() } else { v }.clamp(lo, hi);
        for &beta in &config.betas {
            out.push(deviate_in(v, hi, beta, lo, hi, integer));
            out.push(deviate_in(v, lo, beta, lo, hi, integer));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn number_list(values: &[f64]) -> Vec<KnobValue> {
    values.iter().map(|v| KnobValue::Number(*v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceOptions {
    pub deviation: DeviationConfig,
    /// Knowledge-free numeric knobs get `{default, midpoint}` as coarse values.
    pub knowledge_free_fallback: bool,
    /// Apply Virtual Knob Extension to knobs with a special value.
    pub virtual_extension: bool,
}

impl Default for SpaceOptions {
    fn default() -> Self {
        SpaceOptions {
            deviation: DeviationConfig::default(),
            knowledge_free_fallback: true,
            virtual_extension: true,
        }
    }
}

/// Adds the virtual triple when the special value can be told apart from the
/// normal range: it must be an endpoint of the effective range or lie outside
/// it. The normal range is the effective range without the special value.
pub fn extend_virtual(mut view: KnobDomainView, special: f64) -> KnobDomainView {
    let (Some(lo), Some(hi)) = (view.effective_min, view.effective_max) else {
        return view;
    };
    let step = |x: f64, up: bool| match (view.is_integer(), up) {
        (true, true) => x + 1.0,
        (true, false) => x - 1.0,
        (false, true) => x.next_up(),
        (false, false) => x.next_down(),
    };
    let (nlo, nhi) = if special < lo || special > hi {
        (lo, hi)
    } else if special == lo && lo < hi {
        (step(lo, true), hi)
    } else if special == hi && lo < hi {
        (lo, step(hi, false))
    } else {
        log::warn!(
            "{}: special value {special} lies inside [{lo}, {hi}]; no virtual extension",
            view.knob_name
        );
        return view;
    };
    let name = view.knob_name.clone();
    view.virtual_knob = Some(VirtualKnob {
        control_name: format!("control_{name}"),
        normal_name: format!("normal_{name}"),
        special_name: format!("special_{name}"),
        special_value: special,
        normal_min: nlo,
        normal_max: nhi,
    });
    view
}

fn resolve_value(v: &KnobValue, spec: &KnobSpec, profile: &SystemProfile) -> Option<f64> {
    match v {
        KnobValue::Number(x) => Some(*x),
        KnobValue::Text(t) => resolve_quantity(t, profile, spec.unit).ok(),
    }
}

/// Builds the domain view of one knob.
pub fn build_view(
    spec: &KnobSpec,
    sk: Option<&StructuredKnob>,
    profile: &SystemProfile,
    opts: &SpaceOptions,
) -> Result<KnobDomainView> {
    if !spec.kind.is_numeric() {
        let categories = spec.choices();
        let suggested: Vec<KnobValue> = sk
            .map(|sk| {
                sk.suggested_values
                    .iter()
                    .filter(|v| v.as_text().is_some_and(|t| categories.iter().any(|c| c == t)))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        let mut tiny: Vec<KnobValue> = Vec::new();
        for c in &categories {
            let v = KnobValue::Text(c.clone());
            if suggested.is_empty() || suggested.contains(&v) {
                tiny.push(v);
            }
        }
        return Ok(KnobDomainView {
            knob_name: spec.name.clone(),
            kind: spec.kind,
            unit: spec.unit,
            default_value: spec.default_value.clone(),
            effective_min: None,
            effective_max: None,
            categories,
            tiny_values: tiny,
            virtual_knob: None,
        });
    }

    let (lo, hi) = region_discard(spec, sk, profile)?;
    let integer = spec.kind == KnobKind::Integer;
    let suggested: Vec<f64> = sk
        .map(|sk| sk.suggested_values.iter().filter_map(|v| resolve_value(v, spec, profile)).collect())
        .unwrap_or_default();
    let special = sk
        .and_then(|sk| sk.special_value.as_ref())
        .and_then(|s| resolve_value(&s.value, spec, profile))
        .filter(|s| spec.bounds().is_some_and(|(a, b)| *s >= a && *s <= b));

    let mut view = KnobDomainView {
        knob_name: spec.name.clone(),
        kind: spec.kind,
        unit: spec.unit,
        default_value: spec.default_value.clone(),
        effective_min: Some(lo),
        effective_max: Some(hi),
        categories: Vec::new(),
        tiny_values: Vec::new(),
        virtual_knob: None,
    };
    let mut tiny = if !suggested.is_empty() {
        tiny_values_for(&suggested, lo, hi, integer, &opts.deviation)
    } else if opts.knowledge_free_fallback {
        let d = spec.default_value.as_number().unwrap_or(lo).clamp(lo, hi);
        let mid = lo + (hi - lo) / 2.0;
        let mid = if integer { mid.round() } else { mid };
        let mut v = vec![d, mid.clamp(lo, hi)];
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    } else {
        log::info!("{}: no knowledge; held at its default in the coarse stage", spec.name);
        Vec::new()
    };
    if let (Some(s), true) = (special, opts.virtual_extension) {
        view = extend_virtual(view, s);
        if let Some(v) = &view.virtual_knob {
            if !tiny.is_empty() {
                tiny.retain(|x| *x == v.special_value || (*x >= v.normal_min && *x <= v.normal_max));
                tiny.push(v.special_value);
                tiny.sort_by(f64::total_cmp);
                tiny.dedup();
            }
        }
    }
    view.tiny_values = number_list(&tiny);
    Ok(view)
}

/// Builds the space for `selected` knobs (in name order). Knobs missing from
/// the catalog are an error; knobs without structured knowledge use vendor
/// ranges.
pub fn build_tiny_space(
    selected: &BTreeSet<String>,
    catalog: &KnobCatalog,
    sks: &BTreeMap<String, StructuredKnob>,
    opts: &SpaceOptions,
) -> Result<SearchSpace> {
    let dims = selected
        .iter()
        .map(|name| build_view(catalog.get(name)?, sks.get(name), &catalog.profile, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchSpace {
        dims,
        granularity: Granularity::Tiny,
    })
}

impl SearchSpace {
    pub fn with_granularity(&self, granularity: Granularity) -> SearchSpace {
        SearchSpace {
            dims: self.dims.clone(),
            granularity,
        }
    }

    pub fn knob_names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.knob_name.as_str()).collect()
    }

    /// Optimizer parameters of the extended full space, in dimension order.
    pub fn params(&self) -> Vec<Param> {
        let mut out = Vec::new();
        for d in &self.dims {
            let numeric = |lo: f64, hi: f64| {
                if d.is_integer() {
                    Domain::Integer { lo, hi }
                } else {
                    Domain::Real { lo, hi }
                }
            };
            if let Some(v) = &d.virtual_knob {
                out.push(Param {
                    name: v.control_name.clone(),
                    knob: d.knob_name.clone(),
                    role: Role::Control,
                    domain: Domain::Categorical {
                        choices: vec!["0".into(), "1".into()],
                    },
                });
                out.push(Param {
                    name: v.normal_name.clone(),
                    knob: d.knob_name.clone(),
                    role: Role::Normal,
                    domain: numeric(v.normal_min, v.normal_max),
                });
            } else if let (Some(lo), Some(hi)) = (d.effective_min, d.effective_max) {
                out.push(Param {
                    name: d.knob_name.clone(),
                    knob: d.knob_name.clone(),
                    role: Role::Plain,
                    domain: numeric(lo, hi),
                });
            } else {
                out.push(Param {
                    name: d.knob_name.clone(),
                    knob: d.knob_name.clone(),
                    role: Role::Plain,
                    domain: Domain::Categorical {
                        choices: d.categories.clone(),
                    },
                });
            }
        }
        out
    }

    fn encode_into(&self, d: &KnobDomainView, value: &KnobValue, out: &mut Vec<f64>) -> Result<()> {
        let domain_err = || Error::Domain {
            knob: d.knob_name.clone(),
            kind: "value",
        };
        if !d.allows_full(value) {
            return Err(domain_err());
        }
        match (value, &d.virtual_knob) {
            (KnobValue::Number(x), Some(v)) if *x == v.special_value => out.extend([1.0, v.normal_min]),
            (KnobValue::Number(x), Some(_)) => out.extend([0.0, *x]),
            (KnobValue::Number(x), None) => out.push(*x),
            (KnobValue::Text(t), _) => {
                let i = d.categories.iter().position(|c| c == t).ok_or_else(domain_err)?;
                out.push(i as f64);
            }
        }
        Ok(())
    }

    /// Maps a physical configuration onto the extended parameters.
    pub fn encode(&self, physical: &PhysicalConfig) -> Result<Configuration> {
        let mut out = Vec::new();
        for d in &self.dims {
            let value = physical
                .get(&d.knob_name)
                .ok_or_else(|| Error::UnknownKnob(d.knob_name.clone()))?;
            self.encode_into(d, value, &mut out)?;
        }
        Ok(Configuration(out))
    }

    /// Activates the normal value when the control is 0 and the special value
    /// when it is 1.
    pub fn decode(&self, config: &Configuration) -> Result<PhysicalConfig> {
        let params = self.params();
        if config.0.len() != params.len() {
            return Err(Error::Arity {
                expected: params.len(),
                got: config.0.len(),
            });
        }
        let mut out = PhysicalConfig::new();
        let mut i = 0;
        for d in &self.dims {
            let value = match &d.virtual_knob {
                Some(v) => {
                    let control = config.0[i];
                    let normal = config.0[i + 1];
                    i += 2;
                    if control == 1.0 {
                        KnobValue::Number(v.special_value)
                    } else if control == 0.0 {
                        KnobValue::Number(normal)
                    } else {
                        return Err(Error::Domain {
                            knob: d.knob_name.clone(),
                            kind: "control value",
                        });
                    }
                }
                None => {
                    let x = config.0[i];
                    i += 1;
                    if d.effective_min.is_some() {
                        KnobValue::Number(x)
                    } else {
                        let c = d.categories.get(x as usize).filter(|_| x >= 0.0 && x.fract() == 0.0);
                        KnobValue::Text(
                            c.ok_or_else(|| Error::Domain {
                                knob: d.knob_name.clone(),
                                kind: "category index",
                            })?
                            .clone(),
                        )
                    }
                }
            };
            out.insert(d.knob_name.clone(), value);
        }
        Ok(out)
    }

    /// Membership in the extended full space, including the placeholder rule
    /// for active special values.
    pub fn contains_full(&self, config: &Configuration) -> bool {
        let params = self.params();
        if config.0.len() != params.len() || !params.iter().zip(&config.0).all(|(p, x)| p.domain.contains(*x)) {
            return false;
        }
        match self.decode(config) {
            Ok(phys) => self.encode(&phys).is_ok_and(|c| c == *config),
            Err(_) => false,
        }
    }

    /// Membership in the tiny space (coarse-stage candidates).
    pub fn contains_tiny(&self, config: &Configuration) -> bool {
        if !self.contains_full(config) {
            return false;
        }
        let Ok(phys) = self.decode(config) else {
            return false;
        };
        self.dims.iter().all(|d| d.allows_tiny(&phys[&d.knob_name]))
    }

    /// Per-dimension candidate lists of the tiny space.
    pub fn tiny_choices(&self) -> Vec<Vec<KnobValue>> {
        self.dims
            .iter()
            .map(|d| {
                if d.tiny_values.is_empty() {
                    vec![d.tiny_default()]
                } else {
                    d.tiny_values.clone()
                }
            })
            .collect()
    }

    /// Encodes one choice index per dimension of the tiny space.
    pub fn tiny_point(&self, indices: &[usize]) -> Result<Configuration> {
        let choices = self.tiny_choices();
        if indices.len() != choices.len() {
            return Err(Error::Arity {
                expected: choices.len(),
                got: indices.len(),
            });
        }
        let mut out = Vec::new();
        for ((d, c), &i) in self.dims.iter().zip(&choices).zip(indices) {
            let value = c.get(i).ok_or_else(|| Error::Domain {
                knob: d.knob_name.clone(),
                kind: "tiny index",
            })?;
            self.encode_into(d, value, &mut out)?;
        }
        Ok(Configuration(out))
    }

    pub fn sample_tiny<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let idx: Vec<usize> = self.tiny_choices().iter().map(|c| rng.random_range(0..c.len())).collect();
        self.tiny_point(&idx).expect("indices drawn from the tiny choices")
    }

    pub fn sample_full<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let params = self.params();
        let mut x: Vec<f64> = params.iter().map(|p| p.domain.sample(rng)).collect();
        self.canonicalize(&params, &mut x);
        Configuration(x)
    }

    /// Applies the placeholder rule to active special values.
    pub fn canonicalize(&self, params: &[Param], x: &mut [f64]) {
        for i in 0..params.len() {
            if params[i].role == Role::Control && x[i] == 1.0 {
                if let Domain::Integer { lo, .. } | Domain::Real { lo, .. } = params[i + 1].domain {
                    x[i + 1] = lo;
                }
            }
        }
    }

    /// Features for the surrogate: numeric parameters scaled to `[0, 1]`,
    /// categorical ones as indices.
    pub fn features(&self, params: &[Param], config: &Configuration) -> Vec<f64> {
        params.iter().zip(&config.0).map(|(p, x)| p.domain.normalize(*x)).collect()
    }

    /// One-exchange neighbours of `config`: each differs in one knob.
    /// In the tiny space the knob takes another candidate value; in the full
    /// space numeric parameters move by a Gaussian step of 0.2 range widths
    /// and categorical ones take another category.
    pub fn neighbours<R: Rng + ?Sized>(&self, config: &Configuration, count: usize, rng: &mut R) -> Vec<Configuration> {
        let mut out = Vec::with_capacity(count);
        if self.dims.is_empty() || count == 0 {
            return out;
        }
        match self.granularity {
            Granularity::Tiny => {
                let Ok(phys) = self.decode(config) else {
                    return out;
                };
                let choices = self.tiny_choices();
                let current: Vec<usize> = self
                    .dims
                    .iter()
                    .zip(&choices)
                    .map(|(d, c)| c.iter().position(|v| *v == phys[&d.knob_name]).unwrap_or(0))
                    .collect();
                let movable: Vec<usize> = (0..choices.len()).filter(|&i| choices[i].len() > 1).collect();
                if movable.is_empty() {
                    return out;
                }
                for _ in 0..count {
                    let dim = movable[rng.random_range(0..movable.len())];
                    let mut idx = current.clone();
                    let other = rng.random_range(0..choices[dim].len() - 1);
                    idx[dim] = if other >= current[dim] { other + 1 } else { other };
                    out.push(self.tiny_point(&idx).expect("valid tiny indices"));
                }
            }
            Granularity::Full => {
                let params = self.params();
                for _ in 0..count {
                    let mut x = config.0.clone();
                    let i = rng.random_range(0..params.len());
                    x[i] = match &params[i].domain {
                        Domain::Categorical { choices } if choices.len() > 1 => {
                            let other = rng.random_range(0..choices.len() - 1) as f64;
                            if other >= x[i] {
                                other + 1.0
                            } else {
                                other
                            }
                        }
                        Domain::Categorical { .. } => x[i],
                        Domain::Real { lo, hi } => (x[i] + 0.2 * gaussian(rng) * (hi - lo)).clamp(*lo, *hi),
                        Domain::Integer { lo, hi } => {
                            (x[i] + 0.2 * gaussian(rng) * (hi - lo)).round().clamp(*lo, *hi)
                        }
                    };
                    if params[i].role == Role::Normal && x[i - 1] == 1.0 {
                        // Moving a hidden normal value changes nothing; reveal it.
                        x[i - 1] = 0.0;
                    }
                    self.canonicalize(&params, &mut x);
                    out.push(Configuration(x));
                }
            }
        }
        out
    }

    /// Physical vendor defaults of every dimension.
    pub fn default_physical(&self) -> PhysicalConfig {
        self.dims
            .iter()
            .map(|d| (d.knob_name.clone(), d.default_value.clone()))
            .collect()
    }
}

/// Standard normal draw (Box-Muller).
fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::DiskKind;
    use crate::knowledge::SpecialValue;
    use crate::util::rng;
    use proptest::prelude::*;

    const GIB: f64 = (1u64 << 30) as f64;

    fn profile() -> SystemProfile {
        SystemProfile::new(16 << 30, DiskKind::Ssd, 8).unwrap()
    }

    fn knob(name: &str, kind: KnobKind, lo: f64, hi: f64, default: f64, unit: Unit) -> KnobSpec {
        KnobSpec {
            name: name.into(),
            kind,
            vendor_min: Some(lo),
            vendor_max: Some(hi),
            default_value: KnobValue::Number(default),
            unit,
            categories: vec![],
            description: String::new(),
            category: String::new(),
        }
    }

    fn sk(name: &str) -> StructuredKnob {
        StructuredKnob::empty(name)
    }

    fn num(x: f64) -> KnobValue {
        KnobValue::Number(x)
    }

    fn text(s: &str) -> KnobValue {
        KnobValue::Text(s.into())
    }

    #[test]
    fn region_discard_examples() {
        let p = profile();
        let rpc = knob("random_page_cost", KnobKind::Real, 0.0, 1.79e308, 4.0, Unit::None);
        let mut k = sk("random_page_cost");
        k.min_value = Some(num(1.0));
        k.max_value = Some(num(2.0));
        assert_eq!(region_discard(&rpc, Some(&k), &p).unwrap(), (1.0, 2.0));
        assert_eq!(region_discard(&rpc, None, &p).unwrap(), (0.0, BOUND_LIMIT));

        let sb = knob("shared_buffers", KnobKind::Integer, 131072.0, 8796093014016.0, 134217728.0, Unit::Bytes);
        let mut k = sk("shared_buffers");
        k.min_value = Some(text("25% of RAM"));
        k.max_value = Some(text("40% of RAM"));
        let (lo, hi) = region_discard(&sb, Some(&k), &p).unwrap();
        assert_eq!(lo, 4.0 * GIB);
        assert_eq!(hi, (6.4 * GIB).floor());
        // No knowledge: vendor range, capped at RAM for memory knobs.
        assert_eq!(region_discard(&sb, None, &p).unwrap(), (131072.0, 16.0 * GIB));

        let mut inverted = sk("random_page_cost");
        inverted.min_value = Some(num(3.0));
        inverted.max_value = Some(num(2.0));
        assert_eq!(region_discard(&rpc, Some(&inverted), &p).unwrap(), (0.0, BOUND_LIMIT));
        let mut outside = sk("random_page_cost");
        outside.min_value = Some(num(-5.0));
        outside.max_value = Some(num(-1.0));
        assert_eq!(region_discard(&rpc, Some(&outside), &p).unwrap(), (0.0, BOUND_LIMIT));
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(deviate(90.0, 86400.0, 0.5), 43245.0);
        assert_eq!(deviate(90.0, 86400.0, 0.0), 90.0);
        assert_eq!(deviate(90.0, 86400.0, 1.0), 86400.0);
        assert_eq!(deviate(0.0, 10.0, 0.5), 5.0);
    }

    #[test]
    fn checkpoint_timeout_tiny_values() {
        // 90 + 0.25 * 86310 = 21667.5, rounded half away from zero.
        let values = tiny_values_for(&[90.0], 30.0, 86400.0, true, &DeviationConfig::default());
        assert_eq!(values, [60.0, 75.0, 90.0, 21668.0, 43245.0]);
        let at_max = tiny_values_for(&[86400.0], 30.0, 86400.0, true, &DeviationConfig::default());
        assert_eq!(at_max, [43215.0, 64808.0, 86400.0]);
    }

    #[test]
    fn categorical_views() {
        let spec = KnobSpec {
            name: "jit".into(),
            kind: KnobKind::Boolean,
            vendor_min: None,
            vendor_max: None,
            default_value: text("on"),
            unit: Unit::None,
            categories: vec![],
            description: String::new(),
            category: String::new(),
        };
        let mut k = sk("jit");
        k.suggested_values = vec![text("on")];
        let view = build_view(&spec, Some(&k), &profile(), &SpaceOptions::default()).unwrap();
        assert_eq!(view.tiny_values, [text("on")]);
        let view = build_view(&spec, None, &profile(), &SpaceOptions::default()).unwrap();
        assert_eq!(view.tiny_values, [text("off"), text("on")]);
    }

    fn lock_timeout() -> KnobDomainView {
        let spec = knob("lock_timeout", KnobKind::Integer, 0.0, 2147483647.0, 0.0, Unit::Milliseconds);
        let mut k = sk("lock_timeout");
        k.special_value = Some(SpecialValue {
            value: num(0.0),
            meaning: "disables the timeout".into(),
        });
        build_view(&spec, Some(&k), &profile(), &SpaceOptions::default()).unwrap()
    }

    #[test]
    fn lock_timeout_extension() {
        let view = lock_timeout();
        let v = view.virtual_knob.clone().unwrap();
        assert_eq!((v.normal_min, v.normal_max, v.special_value), (1.0, 2147483647.0, 0.0));
        assert_eq!(v.control_name, "control_lock_timeout");
        assert_eq!(v.normal_name, "normal_lock_timeout");
        // Knowledge-free fallback {default, midpoint} plus the special value.
        assert_eq!(view.tiny_values, [num(0.0), num(1073741824.0)]);

        let space = SearchSpace {
            dims: vec![view],
            granularity: Granularity::Full,
        };
        let special = space.decode(&Configuration(vec![1.0, 1.0])).unwrap();
        assert_eq!(special["lock_timeout"], num(0.0));
        let normal = space.decode(&Configuration(vec![0.0, 5000.0])).unwrap();
        assert_eq!(normal["lock_timeout"], num(5000.0));
        assert_eq!(space.encode(&special).unwrap(), Configuration(vec![1.0, 1.0]));
        assert!(space.contains_full(&Configuration(vec![1.0, 1.0])));
        assert!(!space.contains_full(&Configuration(vec![1.0, 7.0])));
        assert!(!space.contains_full(&Configuration(vec![0.0, 0.0])));
    }

    #[test]
    fn special_at_max_and_outside_range() {
        let base = KnobDomainView {
            knob_name: "k".into(),
            kind: KnobKind::Integer,
            unit: Unit::None,
            default_value: num(0.0),
            effective_min: Some(0.0),
            effective_max: Some(10.0),
            categories: vec![],
            tiny_values: vec![],
            virtual_knob: None,
        };
        let v = extend_virtual(base.clone(), 10.0).virtual_knob.unwrap();
        assert_eq!((v.normal_min, v.normal_max), (0.0, 9.0));
        let mut narrow = base.clone();
        narrow.effective_min = Some(1.0);
        let v = extend_virtual(narrow, 0.0).virtual_knob.unwrap();
        assert_eq!((v.normal_min, v.normal_max), (1.0, 10.0));
        assert_eq!(extend_virtual(base.clone(), 5.0).virtual_knob, None);
    }

    #[test]
    fn extension_disabled_keeps_special_out() {
        let spec = knob("lock_timeout", KnobKind::Integer, 0.0, 2147483647.0, 0.0, Unit::Milliseconds);
        let mut k = sk("lock_timeout");
        k.min_value = Some(num(1.0));
        k.suggested_values = vec![num(1000.0)];
        k.special_value = Some(SpecialValue {
            value: num(0.0),
            meaning: String::new(),
        });
        let opts = SpaceOptions {
            virtual_extension: false,
            ..Default::default()
        };
        let view = build_view(&spec, Some(&k), &profile(), &opts).unwrap();
        assert!(view.virtual_knob.is_none());
        assert!(!view.tiny_values.contains(&num(0.0)));
        let on = build_view(&spec, Some(&k), &profile(), &SpaceOptions::default()).unwrap();
        assert!(on.tiny_values.contains(&num(0.0)));
    }

    #[test]
    fn knowledge_free_without_fallback_holds_default() {
        let spec = knob("work_mem", KnobKind::Integer, 65536.0, 2147483647.0 * 1024.0, 4194304.0, Unit::Bytes);
        let opts = SpaceOptions {
            knowledge_free_fallback: false,
            ..Default::default()
        };
        let view = build_view(&spec, None, &profile(), &opts).unwrap();
        assert!(view.tiny_values.is_empty());
        let space = SearchSpace {
            dims: vec![view],
            granularity: Granularity::Tiny,
        };
        let c = space.sample_tiny(&mut rng(1));
        assert_eq!(c, Configuration(vec![4194304.0]));
        assert!(space.contains_tiny(&c));
    }

    fn random_view(seed: u64) -> (KnobSpec, StructuredKnob) {
        use rand::Rng;
        let mut r = rng(seed);
        let integer = r.random_bool(0.5);
        let lo = if integer { r.random_range(-100..100) as f64 } else { r.random_range(-100.0..100.0) };
        let hi = lo + if integer { r.random_range(0..100_000) as f64 } else { r.random_range(0.0..1e5) };
        let kind = if integer { KnobKind::Integer } else { KnobKind::Real };
        let spec = knob("k", kind, lo, hi, lo, Unit::None);
        let mut k = sk("k");
        if r.random_bool(0.5) {
            let a = r.random_range(lo..=hi);
            let b = r.random_range(lo..=hi);
            k.min_value = Some(num(a.min(b)));
            k.max_value = Some(num(a.max(b)));
        }
        k.suggested_values = vec![num(r.random_range(lo - 10.0..=hi + 10.0))];
        if r.random_bool(0.5) {
            k.special_value = Some(SpecialValue {
                value: num(if r.random_bool(0.5) { lo } else { hi }),
                meaning: String::new(),
            });
        }
        (spec, k)
    }

    proptest! {
        #[test]
        fn deviation_endpoints_and_monotonicity(v in -1e9f64..1e9, u in -1e9f64..1e9, b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0) {
            prop_assert_eq!(deviate(v, u, 0.0), v);
            prop_assert!((deviate(v, u, 1.0) - u).abs() <= 1e-9 * u.abs().max(1.0));
            let (lo, hi) = (b1.min(b2), b1.max(b2));
            if u >= v {
                prop_assert!(deviate(v, u, lo) <= deviate(v, u, hi));
            } else {
                prop_assert!(deviate(v, u, lo) >= deviate(v, u, hi));
            }
        }

        #[test]
        fn views_satisfy_invariants(seed in any::<u64>()) {
            let (spec, k) = random_view(seed);
            let view = build_view(&spec, Some(&k), &profile(), &SpaceOptions::default()).unwrap();
            let (lo, hi) = (view.effective_min.unwrap(), view.effective_max.unwrap());
            prop_assert!(lo >= spec.vendor_min.unwrap() && hi <= spec.vendor_max.unwrap());
            let nums: Vec<f64> = view.tiny_values.iter().map(|v| v.as_number().unwrap()).collect();
            prop_assert!(nums.windows(2).all(|w| w[0] < w[1]));
            let special = view.virtual_knob.as_ref().map(|v| v.special_value);
            for x in &nums {
                prop_assert!((*x >= lo && *x <= hi) || Some(*x) == special);
            }
            if let Some(v) = &view.virtual_knob {
                // Partition of the effective range (integer knobs).
                if spec.kind == KnobKind::Integer && v.special_value >= lo && v.special_value <= hi {
                    let covered = (v.normal_max - v.normal_min + 1.0) + 1.0;
                    prop_assert_eq!(covered, hi - lo + 1.0);
                }
                prop_assert!(v.special_value < v.normal_min || v.special_value > v.normal_max);
            }
        }

        #[test]
        fn tiny_points_decode_into_full_space(seeds in proptest::collection::vec(any::<u64>(), 1..5), draw in any::<u64>()) {
            let dims: Vec<KnobDomainView> = seeds.iter().enumerate().map(|(i, s)| {
                let (mut spec, mut k) = random_view(*s);
                spec.name = format!("k{i}");
                k.knob_name = spec.name.clone();
                build_view(&spec, Some(&k), &profile(), &SpaceOptions::default()).unwrap()
            }).collect();
            let space = SearchSpace { dims, granularity: Granularity::Tiny };
            let mut r = rng(draw);
            for _ in 0..20 {
                let c = space.sample_tiny(&mut r);
                prop_assert!(space.contains_tiny(&c));
                prop_assert!(space.contains_full(&c));
                let phys = space.decode(&c).unwrap();
                prop_assert_eq!(space.encode(&phys).unwrap(), c.clone());
                let f = space.sample_full(&mut r);
                prop_assert!(space.contains_full(&f));
                prop_assert_eq!(space.encode(&space.decode(&f).unwrap()).unwrap(), f.clone());
                for n in space.neighbours(&c, 3, &mut r) {
                    prop_assert!(space.contains_tiny(&n));
                }
                let full = space.with_granularity(Granularity::Full);
                for n in full.neighbours(&f, 3, &mut r) {
                    prop_assert!(full.contains_full(&n));
                }
            }
        }
    }

    #[test]
    fn space_json_round_trip() {
        let space = SearchSpace {
            dims: vec![lock_timeout()],
            granularity: Granularity::Tiny,
        };
        let json = serde_json::to_string(&space).unwrap();
        assert!(json.contains("\"virtual\""));
        let back: SearchSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
    }
}
