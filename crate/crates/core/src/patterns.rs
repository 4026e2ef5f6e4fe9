//! Deviation pattern catalog.
//!
//! Each pattern is an abstract net fragment: wildcards that are matched onto
//! elements of a target net, and created elements that add the deviating
//! behaviour. Created element ids are templated on the mapped elements and
//! suffixed with `#<application_id>`, so repeated applications never clash.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{
    Arc, Net, Origin, Place, ProvenanceTag, RoleHint, TimingAnnotation, TimingEffect, Token, Transition, Variable,
};
use crate::sim::Dist;

/// Suggested weight of deviation entry transitions, relative to base weight 1.
pub const DEFAULT_DEVIATION_WEIGHT: f64 = 0.05;
pub const DEFAULT_COARSEN_WINDOW: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PatternCode {
    MissingEvent,
    IncorrectEvent,
    IncorrectActivity,
    MissingObject,
    IncorrectObject,
    IncorrectPosition,
    MissingPosition,
    ChangeCorrelation,
    Multitasking,
    SkipActivity,
    Overtaking,
    Capacity,
    SwitchRoles,
    ResourceMemory,
    IgnoreBatching,
    LongDuration,
}

impl PatternCode {
    pub const ALL: [PatternCode; 16] = [
        PatternCode::MissingEvent,
        PatternCode::IncorrectEvent,
        PatternCode::IncorrectActivity,
        PatternCode::MissingObject,
        PatternCode::IncorrectObject,
        PatternCode::IncorrectPosition,
        PatternCode::MissingPosition,
        PatternCode::ChangeCorrelation,
        PatternCode::Multitasking,
        PatternCode::SkipActivity,
        PatternCode::Overtaking,
        PatternCode::Capacity,
        PatternCode::SwitchRoles,
        PatternCode::ResourceMemory,
        PatternCode::IgnoreBatching,
        PatternCode::LongDuration,
    ];

    pub fn as_str(self) -> &'static str {
        use PatternCode::*;
        match self {
            MissingEvent => "RI_mi^e",
            IncorrectEvent => "RI_in^e",
            IncorrectActivity => "RI_in^a",
            MissingObject => "RI_mi^o",
            IncorrectObject => "RI_in^o",
            IncorrectPosition => "RI_in^p",
            MissingPosition => "RI_mi^p",
            ChangeCorrelation => "BI_1",
            Multitasking => "BI_2",
            SkipActivity => "BI_3",
            Overtaking => "BI_5",
            Capacity => "BI_6",
            SwitchRoles => "BI_7",
            ResourceMemory => "BI_9",
            IgnoreBatching => "BI_10",
            LongDuration => "BI_11",
        }
    }

    pub fn is_recording(self) -> bool {
        self.as_str().starts_with("RI_")
    }

    pub fn is_timing_only(self) -> bool {
        matches!(self, PatternCode::MissingPosition | PatternCode::LongDuration)
    }

    pub fn description(self) -> &'static str {
        use PatternCode::*;
        match self {
            MissingEvent => "an executed activity is not recorded",
            IncorrectEvent => "an activity is recorded as another activity of the process",
            IncorrectActivity => "an activity is recorded under a wrong activity name",
            MissingObject => "an event is recorded without some of its objects",
            IncorrectObject => "an event is recorded with a wrong object",
            IncorrectPosition => "batch logging records a batch of events at the wrong position",
            MissingPosition => "coarse timestamps lose the relative order of events",
            ChangeCorrelation => "a correlation is moved to a different resource",
            Multitasking => "a resource temporarily releases an object and claims it back later",
            SkipActivity => "an activity is skipped during execution",
            Overtaking => "an object overtakes another in a FIFO queue",
            Capacity => "the capacity of a resource is temporarily increased or decreased",
            SwitchRoles => "a resource temporarily takes on another role",
            ResourceMemory => "a second interaction uses a different resource than the memorized one",
            IgnoreBatching => "a batch is released before it is complete",
            LongDuration => "an activity takes exceptionally long",
        }
    }
}

impl fmt::Display for PatternCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternCode {
    type Err = PatternError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PatternError::UnknownPattern(s.to_string()))
    }
}

impl Serialize for PatternCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PatternCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("unknown pattern {0}")]
    UnknownPattern(String),
    #[error("pattern {code} requires parameter {param}")]
    MissingParam { code: String, param: String },
    #[error("pattern {code}: invalid parameter {param}: {detail}")]
    InvalidParam { code: String, param: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildcardKind {
    Place,
    Transition,
    TransitionSet,
    /// A set of arc variables (object occurrences) of a mapped transition.
    ObjectSet,
    /// A single arc variable of a mapped transition.
    Variable,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wildcard {
    pub name: String,
    pub kind: WildcardKind,
}

fn wc(name: &str, kind: WildcardKind) -> Wildcard {
    Wildcard { name: name.to_string(), kind }
}

/// Machine-checkable restriction on a wildcard mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Requirement {
    Labeled { transition: String },
    PlaceRole { place: String, roles: Vec<RoleHint> },
    ArityExactly { place: String, arity: usize },
    ArityAtLeast { place: String, arity: usize },
    /// `place` has a component of the (single) type of `of`.
    ContainsTypeOf { place: String, of: String },
    SameTypeTuple { a: String, b: String },
    DifferentTypes { a: String, b: String },
    DistinctLabels { a: String, b: String },
    LabelDiffers { label: String, transition: String },
    /// Every object variable is a non-fresh variable of the transition that
    /// can be bypassed: it sits on a pre-set arc carrying only objects of the
    /// set, and the post-set has such an arc too.
    BypassableObjects { objects: String, transition: String },
    RecordedVariable { variable: String, transition: String },
    PlaceTypeMatchesVariable { place: String, variable: String, transition: String },
    SharedPlace { producer: String, consumer: String },
    HasProducer { place: String },
}

impl Requirement {
    /// Every wildcard name the requirement refers to.
    pub fn wildcards(&self) -> Vec<&str> {
        use Requirement::*;
        match self {
            Labeled { transition } => vec![transition],
            PlaceRole { place, .. } | ArityExactly { place, .. } | ArityAtLeast { place, .. } => vec![place],
            HasProducer { place } => vec![place],
            ContainsTypeOf { place, of } => vec![place, of],
            SameTypeTuple { a, b } | DifferentTypes { a, b } | DistinctLabels { a, b } => vec![a, b],
            LabelDiffers { label, transition } => vec![label, transition],
            BypassableObjects { objects, transition } => vec![objects, transition],
            RecordedVariable { variable, transition } => vec![variable, transition],
            PlaceTypeMatchesVariable { place, variable, transition } => vec![place, variable, transition],
            SharedPlace { producer, consumer } => vec![producer, consumer],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MappingTarget {
    One(String),
    Many(Vec<String>),
}

impl MappingTarget {
    pub fn one(&self) -> Option<&str> {
        match self {
            MappingTarget::One(s) => Some(s),
            MappingTarget::Many(_) => None,
        }
    }

    pub fn items(&self) -> Vec<&str> {
        match self {
            MappingTarget::One(s) => vec![s.as_str()],
            MappingTarget::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// One use of a pattern: which wildcards map to which elements or values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternApplication {
    pub application_id: String,
    pub code: PatternCode,
    pub mapping: BTreeMap<String, MappingTarget>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl PatternApplication {
    pub fn new(application_id: &str, code: PatternCode, mapping: &[(&str, &str)]) -> Self {
        PatternApplication {
            application_id: application_id.to_string(),
            code,
            mapping: mapping.iter().map(|(k, v)| (k.to_string(), MappingTarget::One(v.to_string()))).collect(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_set(mut self, wildcard: &str, items: &[&str]) -> Self {
        self.mapping
            .insert(wildcard.to_string(), MappingTarget::Many(items.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn with_param(mut self, key: &str, value: serde_json::Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, wildcard: &str) -> &str {
        self.mapping.get(wildcard).and_then(MappingTarget::one).unwrap_or("")
    }

    pub fn items(&self, wildcard: &str) -> Vec<&str> {
        self.mapping.get(wildcard).map(MappingTarget::items).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    Silent,
    /// Same activity name as the mapped transition.
    SameAs(String),
    /// Activity name given by a label wildcard or by another transition.
    From(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedTransition {
    pub name: String,
    pub label: LabelRule,
    pub marks_occurrence: bool,
    pub shadow: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedPlace {
    pub name: String,
    /// One copy per place in post(t1) ∩ pre(t2) instead of a single place.
    #[serde(default)]
    pub per_shared_place: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingOverride {
    /// A wildcard or a created transition name.
    pub target: String,
    pub effect: TimingEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternFragment {
    pub code: PatternCode,
    pub wildcards: Vec<Wildcard>,
    pub created_places: Vec<CreatedPlace>,
    pub created_transitions: Vec<CreatedTransition>,
    /// Created transition name → suggested weight.
    pub weight_defaults: BTreeMap<String, f64>,
    pub timing_overrides: Vec<TimingOverride>,
    /// Only meaningful for BI_6.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_variant: Option<CapacityVariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityVariant {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub code: PatternCode,
    pub description: String,
    pub wildcards: Vec<Wildcard>,
}

fn signature(code: PatternCode) -> Vec<Wildcard> {
    use PatternCode::*;
    use WildcardKind as K;
    match code {
        MissingEvent | SkipActivity | LongDuration => vec![wc("t", K::Transition)],
        IncorrectEvent => vec![wc("t1", K::Transition), wc("t2", K::Transition)],
        IncorrectActivity => vec![wc("t", K::Transition), wc("label", K::Label)],
        MissingObject => vec![wc("t", K::Transition), wc("objects", K::ObjectSet)],
        IncorrectObject => vec![wc("t", K::Transition), wc("var", K::Variable), wc("p_w", K::Place)],
        IncorrectPosition => vec![wc("t1", K::Transition), wc("t2", K::Transition)],
        MissingPosition => vec![wc("transitions", K::TransitionSet)],
        ChangeCorrelation => vec![wc("p", K::Place), wc("p_r", K::Place)],
        Multitasking => vec![wc("p1", K::Place), wc("p2", K::Place)],
        Overtaking => vec![wc("p_q1", K::Place), wc("p_q2", K::Place)],
        Capacity => vec![wc("p_c", K::Place)],
        SwitchRoles => vec![wc("p_r1", K::Place), wc("p_r2", K::Place)],
        ResourceMemory => vec![wc("p_m", K::Place), wc("p_r", K::Place)],
        IgnoreBatching => vec![wc("p_from", K::Place), wc("p_to", K::Place)],
    }
}

/// The implemented patterns with their wildcard signatures.
pub fn catalog() -> Vec<CatalogEntry> {
    PatternCode::ALL
        .into_iter()
        .map(|code| CatalogEntry { code, description: code.description().to_string(), wildcards: signature(code) })
        .collect()
}

fn s(x: &str) -> String {
    x.to_string()
}

/// Restrictions a mapping must satisfy for the transformation to model the
/// intended behaviour.
pub fn wildcard_requirements(code: PatternCode) -> Vec<Requirement> {
    use PatternCode::*;
    use Requirement as R;
    use RoleHint::*;
    let correlation = vec![Correlation, ResourceBusy];
    match code {
        MissingEvent | SkipActivity | LongDuration => vec![R::Labeled { transition: s("t") }],
        IncorrectEvent => vec![
            R::Labeled { transition: s("t1") },
            R::Labeled { transition: s("t2") },
            R::DistinctLabels { a: s("t1"), b: s("t2") },
        ],
        IncorrectActivity => {
            vec![R::Labeled { transition: s("t") }, R::LabelDiffers { label: s("label"), transition: s("t") }]
        }
        MissingObject => vec![
            R::Labeled { transition: s("t") },
            R::BypassableObjects { objects: s("objects"), transition: s("t") },
        ],
        IncorrectObject => vec![
            R::Labeled { transition: s("t") },
            R::RecordedVariable { variable: s("var"), transition: s("t") },
            R::ArityExactly { place: s("p_w"), arity: 1 },
            R::PlaceTypeMatchesVariable { place: s("p_w"), variable: s("var"), transition: s("t") },
        ],
        IncorrectPosition => vec![
            R::Labeled { transition: s("t1") },
            R::Labeled { transition: s("t2") },
            R::SharedPlace { producer: s("t1"), consumer: s("t2") },
        ],
        MissingPosition => vec![R::Labeled { transition: s("transitions") }],
        ChangeCorrelation => vec![
            R::PlaceRole { place: s("p"), roles: correlation },
            R::ArityAtLeast { place: s("p"), arity: 2 },
            R::PlaceRole { place: s("p_r"), roles: vec![ResourceIdle] },
            R::ArityExactly { place: s("p_r"), arity: 1 },
            R::ContainsTypeOf { place: s("p"), of: s("p_r") },
        ],
        Multitasking => vec![
            R::PlaceRole { place: s("p1"), roles: correlation },
            R::ArityAtLeast { place: s("p1"), arity: 2 },
            R::PlaceRole { place: s("p2"), roles: vec![ResourceIdle] },
            R::ArityExactly { place: s("p2"), arity: 1 },
            R::ContainsTypeOf { place: s("p1"), of: s("p2") },
        ],
        Overtaking => vec![
            R::PlaceRole { place: s("p_q1"), roles: vec![Queue] },
            R::PlaceRole { place: s("p_q2"), roles: vec![Queue] },
            R::SameTypeTuple { a: s("p_q1"), b: s("p_q2") },
            R::HasProducer { place: s("p_q2") },
        ],
        Capacity => vec![R::PlaceRole { place: s("p_c"), roles: vec![ResourceIdle, Other] }],
        SwitchRoles => vec![
            R::PlaceRole { place: s("p_r1"), roles: vec![ResourceIdle] },
            R::PlaceRole { place: s("p_r2"), roles: vec![ResourceIdle] },
            R::ArityExactly { place: s("p_r1"), arity: 1 },
            R::ArityExactly { place: s("p_r2"), arity: 1 },
            R::DifferentTypes { a: s("p_r1"), b: s("p_r2") },
        ],
        ResourceMemory => vec![
            R::PlaceRole { place: s("p_m"), roles: vec![Correlation] },
            R::ArityAtLeast { place: s("p_m"), arity: 2 },
            R::ArityExactly { place: s("p_r"), arity: 1 },
            R::ContainsTypeOf { place: s("p_m"), of: s("p_r") },
        ],
        IgnoreBatching => vec![R::SameTypeTuple { a: s("p_from"), b: s("p_to") }],
    }
}

fn ct(name: &str, label: LabelRule, marks: bool, shadow: Option<&str>) -> CreatedTransition {
    CreatedTransition { name: s(name), label, marks_occurrence: marks, shadow: shadow.map(s) }
}

fn cp(name: &str) -> CreatedPlace {
    CreatedPlace { name: s(name), per_shared_place: false }
}

fn param_f64(code: PatternCode, params: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<Option<f64>, PatternError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| PatternError::InvalidParam {
            code: code.to_string(),
            param: key.to_string(),
            detail: format!("expected a number, got {v}"),
        }),
    }
}

fn param_dist(
    code: PatternCode,
    params: &BTreeMap<String, serde_json::Value>,
    key: &str,
    default: Dist,
) -> Result<Dist, PatternError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| PatternError::InvalidParam {
            code: code.to_string(),
            param: key.to_string(),
            detail: e.to_string(),
        }),
    }
}

/// Builds the fragment for `code`. Recognised parameters: `weight` (entry
/// weight of created deviation transitions), `window` (RI_mi^p),
/// `probability` and `delay` (BI_11), `batch_delay` and `item_delay`
/// (RI_in^p), `variant` (BI_6, required).
pub fn instantiate(code: PatternCode, params: &BTreeMap<String, serde_json::Value>) -> Result<PatternFragment, PatternError> {
    use PatternCode::*;
    let weight = param_f64(code, params, "weight")?.unwrap_or(DEFAULT_DEVIATION_WEIGHT);
    if !(weight >= 0.0) {
        return Err(PatternError::InvalidParam { code: code.to_string(), param: s("weight"), detail: s("must be >= 0") });
    }
    let mut places = Vec::new();
    let mut transitions = Vec::new();
    let mut timing = Vec::new();
    let mut capacity_variant = None;
    match code {
        MissingEvent => transitions.push(ct("tau_missing-{t}", LabelRule::Silent, true, Some("t"))),
        SkipActivity => transitions.push(ct("tau_skip-{t}", LabelRule::Silent, true, Some("t"))),
        IncorrectEvent => transitions.push(ct("{t2}_incorrect-{t1}", LabelRule::From(s("t2")), true, Some("t1"))),
        IncorrectActivity => {
            transitions.push(ct("{label}_incorrect-a-{t}", LabelRule::From(s("label")), true, Some("t")))
        }
        IncorrectObject => {
            transitions.push(ct("{t}_incorrect-o-{var}", LabelRule::SameAs(s("t")), true, Some("t")))
        }
        MissingObject => {
            transitions.push(ct("tau_pre-{t}-{objects}", LabelRule::Silent, false, None));
            transitions.push(ct("{t}_missing-{objects}", LabelRule::SameAs(s("t")), true, Some("t")));
            transitions.push(ct("tau_post-{t}-{objects}", LabelRule::Silent, false, None));
            places.push(cp("p_bypass_pre-{t}-{objects}"));
            places.push(cp("p_bypass_post-{t}-{objects}"));
        }
        IncorrectPosition => {
            transitions.push(ct("{t1}_batch-log", LabelRule::SameAs(s("t1")), true, Some("t1")));
            transitions.push(ct("{t2}_batch-log", LabelRule::SameAs(s("t2")), false, Some("t2")));
            places.push(CreatedPlace { name: s("{shared}_batch-log"), per_shared_place: true });
            let batch = param_dist(code, params, "batch_delay", Dist::Constant { value: 1800.0 })?;
            let item = param_dist(code, params, "item_delay", Dist::Constant { value: 0.0 })?;
            timing.push(TimingOverride { target: s("{t1}_batch-log"), effect: TimingEffect::Delay { delay: batch } });
            timing.push(TimingOverride { target: s("{t2}_batch-log"), effect: TimingEffect::Delay { delay: item } });
        }
        MissingPosition => {
            let window = param_f64(code, params, "window")?.unwrap_or(DEFAULT_COARSEN_WINDOW);
            if !(window > 0.0) {
                return Err(PatternError::InvalidParam { code: code.to_string(), param: s("window"), detail: s("must be > 0") });
            }
            timing.push(TimingOverride { target: s("transitions"), effect: TimingEffect::Coarsen { window } });
        }
        LongDuration => {
            let probability = param_f64(code, params, "probability")?
                .unwrap_or(DEFAULT_DEVIATION_WEIGHT / (1.0 + DEFAULT_DEVIATION_WEIGHT));
            if !(0.0..=1.0).contains(&probability) {
                return Err(PatternError::InvalidParam {
                    code: code.to_string(),
                    param: s("probability"),
                    detail: s("must lie in [0, 1]"),
                });
            }
            let delay = param_dist(code, params, "delay", Dist::LogNormal { mu: 9.0, sigma: 0.5 })?;
            timing.push(TimingOverride { target: s("t"), effect: TimingEffect::LongDuration { probability, delay } });
        }
        ChangeCorrelation => {
            transitions.push(ct("tau_change_correlation-{p}-{p_r}", LabelRule::Silent, true, None))
        }
        Multitasking => {
            transitions.push(ct("tau_early_release-{p1}-{p2}", LabelRule::Silent, true, None));
            transitions.push(ct("tau_late_claim-{p1}-{p2}", LabelRule::Silent, false, None));
            places.push(cp("p_multitask-{p1}-{p2}"));
        }
        Overtaking => {
            transitions.push(ct("tau_overtake-{p_q1}-{p_q2}", LabelRule::Silent, true, None));
            places.push(cp("{p_q1}_overtake"));
        }
        Capacity => {
            let variant = match params.get("variant").and_then(|v| v.as_str()) {
                Some("increase") => CapacityVariant::Increase,
                Some("decrease") => CapacityVariant::Decrease,
                Some(other) => {
                    return Err(PatternError::InvalidParam {
                        code: code.to_string(),
                        param: s("variant"),
                        detail: format!("expected increase or decrease, got {other}"),
                    })
                }
                None => return Err(PatternError::MissingParam { code: code.to_string(), param: s("variant") }),
            };
            let (tag, mem) = match variant {
                CapacityVariant::Increase => ("increase", "{p_c}_plus"),
                CapacityVariant::Decrease => ("decrease", "{p_c}_minus"),
            };
            transitions.push(ct(&format!("tau_{tag}-{{p_c}}"), LabelRule::Silent, true, None));
            transitions.push(ct(&format!("tau_{tag}_undo-{{p_c}}"), LabelRule::Silent, false, None));
            places.push(cp(mem));
            if variant == CapacityVariant::Increase {
                places.push(cp("{p_c}_spare"));
            }
            capacity_variant = Some(variant);
        }
        SwitchRoles => {
            transitions.push(ct("tau_switch_role-{p_r1}-{p_r2}", LabelRule::Silent, true, None));
            transitions.push(ct("tau_switch_role_back-{p_r1}-{p_r2}", LabelRule::Silent, false, None));
            places.push(cp("p_role-{p_r1}-{p_r2}"));
        }
        ResourceMemory => {
            transitions.push(ct("tau_reroute-{p_m}-{p_r}", LabelRule::Silent, true, None));
            places.push(cp("{p_m}_reroutable"));
        }
        IgnoreBatching => {
            transitions.push(ct("tau_ignore_batch-{p_from}-{p_to}", LabelRule::Silent, true, None))
        }
    }
    // Entry transitions get the deviation weight; helpers (undo, repair,
    // bypass continuation) keep the base weight so the deviation completes.
    let weight_defaults = transitions
        .iter()
        .map(|t| {
            let entry = t.marks_occurrence && !matches!(code, MissingObject) || t.name.starts_with("tau_pre-");
            (t.name.clone(), if entry { weight } else { 1.0 })
        })
        .collect();
    Ok(PatternFragment {
        code,
        wildcards: signature(code),
        created_places: places,
        created_transitions: transitions,
        weight_defaults,
        timing_overrides: timing,
        capacity_variant,
    })
}

/// Diagnostics produced when checking a mapping against a fragment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MappingDiagnostic {
    MissingWildcard { wildcard: String },
    UnknownWildcard { wildcard: String },
    UnresolvedElement { wildcard: String, id: String },
    KindMismatch { wildcard: String, expected: String },
    RoleMismatch { wildcard: String, id: String, found: RoleHint },
    ArityMismatch { wildcard: String, id: String, detail: String },
    TypeMismatch { wildcard: String, detail: String },
    NotInjective { wildcards: Vec<String>, id: String },
    RequirementViolated { wildcard: String, detail: String },
    CodeMismatch { fragment: String, application: String },
    IdCollision { id: String },
}

impl fmt::Display for MappingDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

/// Type of a transition's variable.
fn var_type(net: &Net, t: &str, var: &str) -> Option<String> {
    net.variables(t).get(var).map(|v| v.object_type.clone())
}

fn violated(wildcard: &str, detail: String) -> MappingDiagnostic {
    MappingDiagnostic::RequirementViolated { wildcard: wildcard.to_string(), detail }
}

impl Requirement {
    /// Checks the requirement; assumes each wildcard resolves to an element
    /// of the right kind (checked beforehand).
    pub fn check(&self, net: &Net, app: &PatternApplication) -> Vec<MappingDiagnostic> {
        use Requirement::*;
        let place = |w: &str| net.place(app.get(w));
        let label = |t: &str| net.transition(t).and_then(|t| t.activity_label.clone());
        let mut out = Vec::new();
        match self {
            Labeled { transition } => {
                for t in app.items(transition) {
                    if label(t).is_none() {
                        out.push(violated(transition, format!("{t} is silent, a labeled transition is required")));
                    }
                }
            }
            PlaceRole { place: w, roles } => {
                if let Some(p) = place(w) {
                    if !roles.contains(&p.role_hint) {
                        out.push(MappingDiagnostic::RoleMismatch {
                            wildcard: w.clone(),
                            id: p.id.clone(),
                            found: p.role_hint,
                        });
                    }
                }
            }
            ArityExactly { place: w, arity } => {
                if let Some(p) = place(w) {
                    if p.type_tuple.len() != *arity {
                        out.push(MappingDiagnostic::ArityMismatch {
                            wildcard: w.clone(),
                            id: p.id.clone(),
                            detail: format!("arity {} but {} required", p.type_tuple.len(), arity),
                        });
                    }
                }
            }
            ArityAtLeast { place: w, arity } => {
                if let Some(p) = place(w) {
                    if p.type_tuple.len() < *arity {
                        out.push(MappingDiagnostic::ArityMismatch {
                            wildcard: w.clone(),
                            id: p.id.clone(),
                            detail: format!("arity {} but at least {} required", p.type_tuple.len(), arity),
                        });
                    }
                }
            }
            ContainsTypeOf { place: w, of } => {
                if let (Some(p), Some(r)) = (place(w), place(of)) {
                    if !r.type_tuple.first().is_some_and(|ty| p.type_tuple.contains(ty)) {
                        out.push(MappingDiagnostic::TypeMismatch {
                            wildcard: w.clone(),
                            detail: format!("{} has no component of type {:?}", p.id, r.type_tuple),
                        });
                    }
                }
            }
            SameTypeTuple { a, b } => {
                if let (Some(pa), Some(pb)) = (place(a), place(b)) {
                    if pa.type_tuple != pb.type_tuple {
                        out.push(MappingDiagnostic::TypeMismatch {
                            wildcard: b.clone(),
                            detail: format!("{} and {} have different types", pa.id, pb.id),
                        });
                    }
                }
            }
            DifferentTypes { a, b } => {
                if let (Some(pa), Some(pb)) = (place(a), place(b)) {
                    if pa.type_tuple == pb.type_tuple {
                        out.push(MappingDiagnostic::TypeMismatch {
                            wildcard: b.clone(),
                            detail: format!("{} and {} must hold different object types", pa.id, pb.id),
                        });
                    }
                }
            }
            DistinctLabels { a, b } => {
                if label(app.get(a)) == label(app.get(b)) {
                    out.push(violated(b, s("both transitions carry the same activity name")));
                }
            }
            LabelDiffers { label: l, transition } => {
                let wrong = app.get(l);
                if wrong.is_empty() {
                    out.push(violated(l, s("activity name must be non-empty")));
                } else if label(app.get(transition)).as_deref() == Some(wrong) {
                    out.push(violated(l, s("wrong activity name equals the original one")));
                }
            }
            BypassableObjects { objects, transition } => {
                let t = app.get(transition);
                let set: BTreeSet<&str> = app.items(objects).into_iter().collect();
                let vars = net.variables(t);
                if set.is_empty() {
                    out.push(violated(objects, s("object set is empty")));
                }
                for o in &set {
                    match vars.get(*o) {
                        None => out.push(violated(objects, format!("{o} is not a variable of {t}"))),
                        Some(v) if v.fresh => out.push(violated(objects, format!("{o} is a fresh variable"))),
                        _ => {}
                    }
                }
                let only = |a: &Arc| a.inscription.iter().all(|v| set.contains(v.name.as_str()));
                let pre_only: BTreeSet<&str> = net
                    .input_arcs(t)
                    .filter(|a| only(a))
                    .flat_map(|a| a.inscription.iter().map(|v| v.name.as_str()))
                    .collect();
                for o in &set {
                    if !pre_only.contains(o) {
                        out.push(violated(objects, format!("{o} is not consumed from a place holding only bypassed objects")));
                    }
                }
                if !net.output_arcs(t).any(|a| only(a)) {
                    out.push(violated(objects, format!("{t} has no post-set place holding only bypassed objects")));
                }
            }
            RecordedVariable { variable, transition } => {
                let t = app.get(transition);
                let v = app.get(variable);
                if !net.transition(t).is_some_and(|t| t.record_spec.iter().any(|r| r == v)) {
                    out.push(violated(variable, format!("{v} is not recorded by {t}")));
                }
            }
            PlaceTypeMatchesVariable { place: w, variable, transition } => {
                if let Some(p) = place(w) {
                    let ty = var_type(net, app.get(transition), app.get(variable));
                    if p.type_tuple.first() != ty.as_ref() {
                        out.push(MappingDiagnostic::TypeMismatch {
                            wildcard: w.clone(),
                            detail: format!("{} holds {:?}, variable has type {:?}", p.id, p.type_tuple, ty),
                        });
                    }
                }
            }
            SharedPlace { producer, consumer } => {
                let post = net.postset(app.get(producer));
                let pre = net.preset(app.get(consumer));
                if post.intersection(&pre).next().is_none() {
                    out.push(violated(consumer, s("no place links the first transition to the second")));
                }
            }
            HasProducer { place: w } => {
                let p = app.get(w);
                if !net.arcs.iter().any(|a| a.target == p && net.transition(&a.source).is_some()) {
                    out.push(violated(w, format!("no transition produces into {p}")));
                }
            }
        }
        out
    }
}

/// Concrete elements added by one application: h(π).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Realized {
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    pub timing: Vec<TimingAnnotation>,
    /// Initial tokens of created places.
    pub tokens: Vec<(String, Token)>,
}

fn fill(template: &str, app: &PatternApplication) -> String {
    let mut out = template.to_string();
    for (k, v) in &app.mapping {
        let value = match v {
            MappingTarget::One(x) => x.clone(),
            MappingTarget::Many(xs) => xs.join("+"),
        };
        out = out.replace(&format!("{{{k}}}"), &value);
    }
    out
}

pub fn created_id(template: &str, app: &PatternApplication) -> String {
    format!("{}#{}", fill(template, app), app.application_id)
}

fn arc(source: &str, target: &str, vars: Vec<Variable>) -> Arc {
    Arc { source: s(source), target: s(target), inscription: vars }
}

/// Variables `x0..xn` typed by a place's tuple, with `slot` (if any) renamed.
fn tuple_vars(place: &Place, slot: Option<(usize, &str)>) -> Vec<Variable> {
    place
        .type_tuple
        .iter()
        .enumerate()
        .map(|(i, ty)| match slot {
            Some((j, name)) if i == j => Variable::new(name, ty),
            _ => Variable::new(&format!("x{i}"), ty),
        })
        .collect()
}

fn position_of(place: &Place, ty: &str) -> usize {
    place.type_tuple.iter().position(|t| t == ty).unwrap_or(0)
}

fn unused_name(taken: &BTreeMap<String, Variable>, base: &str) -> String {
    let mut name = base.to_string();
    while taken.contains_key(&name) {
        name.push('_');
    }
    name
}

impl PatternFragment {
    fn transition_spec(&self, template: &str) -> &CreatedTransition {
        self.created_transitions.iter().find(|t| t.name == template).expect("template from this fragment")
    }

    fn make_transition(&self, net: &Net, app: &PatternApplication, template: &str) -> Transition {
        let spec = self.transition_spec(template);
        let activity_label = match &spec.label {
            LabelRule::Silent => None,
            LabelRule::SameAs(w) => net.transition(app.get(w)).and_then(|t| t.activity_label.clone()),
            LabelRule::From(w) => match net.transition(app.get(w)) {
                Some(t) => t.activity_label.clone(),
                None => Some(app.get(w).to_string()),
            },
        };
        let origin = if self.code.is_recording() {
            Origin::Recording { application_id: app.application_id.clone() }
        } else {
            Origin::Behavioral { application_id: app.application_id.clone() }
        };
        let shadow = spec.shadow.as_ref().map(|w| app.get(w).to_string());
        let record_spec = shadow
            .as_ref()
            .filter(|_| activity_label.is_some())
            .and_then(|t| net.transition(t))
            .map(|t| t.record_spec.clone())
            .unwrap_or_default();
        Transition {
            id: created_id(template, app),
            activity_label,
            provenance: ProvenanceTag {
                origin,
                pattern_code: Some(self.code.to_string()),
                shadow_of: shadow,
                marks_occurrence: spec.marks_occurrence,
                responsible: Vec::new(),
            },
            record_spec,
            distinct: Vec::new(),
            weight: self.weight_defaults.get(template).copied().unwrap_or(1.0),
        }
    }

    fn make_place(&self, template: &str, app: &PatternApplication, types: Vec<String>, role: RoleHint) -> Place {
        Place { id: created_id(template, app), type_tuple: types, role_hint: role }
    }

    /// Concrete created elements for a (validated) application on `net`.
    pub fn realize(&self, net: &Net, app: &PatternApplication) -> Realized {
        use PatternCode::*;
        let mut r = Realized::default();
        let copy_arcs = |from: &str, to: &str, out: &mut Vec<Arc>| {
            for a in net.arcs.iter().filter(|a| a.target == from && net.is_place(&a.source)) {
                out.push(arc(&a.source, to, a.inscription.clone()));
            }
            for a in net.arcs.iter().filter(|a| a.source == from && net.is_place(&a.target)) {
                out.push(arc(to, &a.target, a.inscription.clone()));
            }
        };
        let t_of = |w: &str| net.transition(app.get(w)).expect("validated transition");
        let p_of = |w: &str| net.place(app.get(w)).expect("validated place");

        match self.code {
            MissingEvent | SkipActivity | IncorrectEvent | IncorrectActivity => {
                let template = &self.created_transitions[0].name;
                let mut t = self.make_transition(net, app, template);
                let base = t.provenance.shadow_of.clone().expect("copy patterns shadow a transition");
                let source = net.transition(&base).expect("validated transition");
                t.distinct = source.distinct.clone();
                t.provenance.responsible = source.record_spec.clone();
                copy_arcs(&base, &t.id, &mut r.arcs);
                r.transitions.push(t);
            }
            IncorrectObject => {
                let base = t_of("t");
                let var = app.get("var").to_string();
                let vars = net.variables(&base.id);
                let wrong = unused_name(&vars, "wrong_object");
                let ty = vars.get(&var).map(|v| v.object_type.clone()).unwrap_or_default();
                let mut t = self.make_transition(net, app, "{t}_incorrect-o-{var}");
                copy_arcs(&base.id, &t.id, &mut r.arcs);
                let p_w = app.get("p_w");
                r.arcs.push(arc(p_w, &t.id, vec![Variable::new(&wrong, &ty)]));
                r.arcs.push(arc(&t.id, p_w, vec![Variable::new(&wrong, &ty)]));
                t.record_spec = base.record_spec.iter().map(|v| if *v == var { wrong.clone() } else { v.clone() }).collect();
                t.distinct = base.distinct.clone();
                t.distinct.push((var.clone(), wrong));
                t.provenance.responsible = vec![var];
                r.transitions.push(t);
            }
            MissingObject => {
                let base = t_of("t");
                let objects: BTreeSet<String> = app.items("objects").into_iter().map(s).collect();
                let vars = net.variables(&base.id);
                let carried: Vec<Variable> = objects.iter().filter_map(|o| vars.get(o).cloned()).collect();
                let types: Vec<String> = carried.iter().map(|v| v.object_type.clone()).collect();
                let only = |a: &Arc| a.inscription.iter().all(|v| objects.contains(&v.name));
                let pre_place = self.make_place("p_bypass_pre-{t}-{objects}", app, types.clone(), RoleHint::Other);
                let post_place = self.make_place("p_bypass_post-{t}-{objects}", app, types, RoleHint::Other);
                let tau_pre = self.make_transition(net, app, "tau_pre-{t}-{objects}");
                let mut missing = self.make_transition(net, app, "{t}_missing-{objects}");
                let tau_post = self.make_transition(net, app, "tau_post-{t}-{objects}");

                for a in net.input_arcs(&base.id) {
                    if only(a) {
                        r.arcs.push(arc(&a.source, &tau_pre.id, a.inscription.clone()));
                    } else {
                        // τ_pre only fires while the remaining inputs are available.
                        r.arcs.push(arc(&a.source, &tau_pre.id, a.inscription.clone()));
                        r.arcs.push(arc(&tau_pre.id, &a.source, a.inscription.clone()));
                        r.arcs.push(arc(&a.source, &missing.id, a.inscription.clone()));
                    }
                }
                r.arcs.push(arc(&tau_pre.id, &pre_place.id, carried.clone()));
                r.arcs.push(arc(&pre_place.id, &missing.id, carried.clone()));
                for a in net.output_arcs(&base.id) {
                    if only(a) {
                        r.arcs.push(arc(&tau_post.id, &a.target, a.inscription.clone()));
                    } else {
                        r.arcs.push(arc(&missing.id, &a.target, a.inscription.clone()));
                    }
                }
                r.arcs.push(arc(&missing.id, &post_place.id, carried.clone()));
                r.arcs.push(arc(&post_place.id, &tau_post.id, carried));
                missing.record_spec.retain(|v| !objects.contains(v));
                missing.distinct = base.distinct.clone();
                missing.provenance.responsible = objects.iter().cloned().collect();
                r.places.extend([pre_place, post_place]);
                r.transitions.extend([tau_pre, missing, tau_post]);
            }
            IncorrectPosition => {
                let t1 = t_of("t1");
                let t2 = t_of("t2");
                let shared: BTreeSet<String> =
                    net.postset(&t1.id).intersection(&net.preset(&t2.id)).cloned().collect();
                let mut copies = BTreeMap::new();
                for p in &shared {
                    let place = net.place(p).expect("shared place exists");
                    let id = format!("{p}_batch-log#{}", app.application_id);
                    copies.insert(p.clone(), id.clone());
                    r.places.push(Place { id, type_tuple: place.type_tuple.clone(), role_hint: place.role_hint });
                }
                let mut first = self.make_transition(net, app, "{t1}_batch-log");
                let mut second = self.make_transition(net, app, "{t2}_batch-log");
                first.distinct = t1.distinct.clone();
                second.distinct = t2.distinct.clone();
                first.provenance.responsible = t1.record_spec.clone();
                for a in net.input_arcs(&t1.id) {
                    r.arcs.push(arc(&a.source, &first.id, a.inscription.clone()));
                }
                for a in net.output_arcs(&t1.id) {
                    let target = copies.get(&a.target).unwrap_or(&a.target);
                    r.arcs.push(arc(&first.id, target, a.inscription.clone()));
                }
                for a in net.input_arcs(&t2.id) {
                    let source = copies.get(&a.source).unwrap_or(&a.source);
                    r.arcs.push(arc(source, &second.id, a.inscription.clone()));
                }
                for a in net.output_arcs(&t2.id) {
                    r.arcs.push(arc(&second.id, &a.target, a.inscription.clone()));
                }
                r.transitions.extend([first, second]);
            }
            MissingPosition | LongDuration => {}
            ChangeCorrelation => {
                let p = p_of("p");
                let p_r = p_of("p_r");
                let slot = position_of(p, &p_r.type_tuple[0]);
                let ty = &p_r.type_tuple[0];
                let mut t = self.make_transition(net, app, "tau_change_correlation-{p}-{p_r}");
                r.arcs.push(arc(&p.id, &t.id, tuple_vars(p, Some((slot, "r_old")))));
                r.arcs.push(arc(&p_r.id, &t.id, vec![Variable::new("r_new", ty)]));
                r.arcs.push(arc(&t.id, &p.id, tuple_vars(p, Some((slot, "r_new")))));
                r.arcs.push(arc(&t.id, &p_r.id, vec![Variable::new("r_old", ty)]));
                t.provenance.responsible = vec![s("r_old"), s("r_new")];
                r.transitions.push(t);
            }
            Multitasking => {
                let p1 = p_of("p1");
                let p2 = p_of("p2");
                let ty = &p2.type_tuple[0];
                let slot = position_of(p1, ty);
                let mem = self.make_place("p_multitask-{p1}-{p2}", app, p1.type_tuple.clone(), RoleHint::Correlation);
                let mut release = self.make_transition(net, app, "tau_early_release-{p1}-{p2}");
                let claim = self.make_transition(net, app, "tau_late_claim-{p1}-{p2}");
                let corr = tuple_vars(p1, Some((slot, "r")));
                let res = vec![Variable::new("r", ty)];
                r.arcs.push(arc(&p1.id, &release.id, corr.clone()));
                r.arcs.push(arc(&release.id, &p2.id, res.clone()));
                r.arcs.push(arc(&release.id, &mem.id, corr.clone()));
                r.arcs.push(arc(&mem.id, &claim.id, corr.clone()));
                r.arcs.push(arc(&p2.id, &claim.id, res));
                r.arcs.push(arc(&claim.id, &p1.id, corr));
                release.provenance.responsible = vec![s("r")];
                r.places.push(mem);
                r.transitions.extend([release, claim]);
            }
            Overtaking => {
                let q1 = p_of("p_q1");
                let q2 = p_of("p_q2");
                let obj_ty = q1.type_tuple[0].clone();
                let guard = self.make_place("{p_q1}_overtake", app, vec![obj_ty.clone()], RoleHint::Other);
                let mut t = self.make_transition(net, app, "tau_overtake-{p_q1}-{p_q2}");
                let rename = |place: &Place, obj: &str, prefix: &str| -> Vec<Variable> {
                    place
                        .type_tuple
                        .iter()
                        .enumerate()
                        .map(|(i, ty)| if i == 0 { Variable::new(obj, ty) } else { Variable::new(&format!("{prefix}{i}"), ty) })
                        .collect()
                };
                r.arcs.push(arc(&q1.id, &t.id, rename(q1, "ahead", "y")));
                r.arcs.push(arc(&q2.id, &t.id, rename(q2, "behind", "z")));
                r.arcs.push(arc(&guard.id, &t.id, vec![Variable::new("behind", &obj_ty)]));
                r.arcs.push(arc(&t.id, &q1.id, rename(q1, "behind", "y")));
                r.arcs.push(arc(&t.id, &q2.id, rename(q2, "ahead", "z")));
                // Each object entering ⟨p_q2⟩ gains a single right to overtake.
                for a in net.arcs.iter().filter(|a| a.target == q2.id && net.transition(&a.source).is_some()) {
                    r.arcs.push(arc(&a.source, &guard.id, vec![a.inscription[0].clone()]));
                }
                t.provenance.responsible = vec![s("behind")];
                r.places.push(guard);
                r.transitions.push(t);
            }
            Capacity => {
                let pc = p_of("p_c");
                let x = tuple_vars(pc, None);
                let variant = self.capacity_variant.unwrap_or(CapacityVariant::Decrease);
                let (entry_t, undo_t, mem_t) = match variant {
                    CapacityVariant::Increase => ("tau_increase-{p_c}", "tau_increase_undo-{p_c}", "{p_c}_plus"),
                    CapacityVariant::Decrease => ("tau_decrease-{p_c}", "tau_decrease_undo-{p_c}", "{p_c}_minus"),
                };
                let mem = self.make_place(mem_t, app, pc.type_tuple.clone(), RoleHint::Other);
                let mut entry = self.make_transition(net, app, entry_t);
                let undo = self.make_transition(net, app, undo_t);
                match variant {
                    CapacityVariant::Decrease => {
                        r.arcs.push(arc(&pc.id, &entry.id, x.clone()));
                        r.arcs.push(arc(&entry.id, &mem.id, x.clone()));
                        r.arcs.push(arc(&mem.id, &undo.id, x.clone()));
                        r.arcs.push(arc(&undo.id, &pc.id, x.clone()));
                    }
                    CapacityVariant::Increase => {
                        // One spare unit per existing unit bounds the growth.
                        let spare = self.make_place("{p_c}_spare", app, pc.type_tuple.clone(), RoleHint::Other);
                        for (tok, n) in net.initial_marking.place_tokens(&pc.id) {
                            r.tokens.extend(std::iter::repeat_n((spare.id.clone(), tok.clone()), n as usize));
                        }
                        r.arcs.push(arc(&spare.id, &entry.id, x.clone()));
                        r.arcs.push(arc(&undo.id, &spare.id, x.clone()));
                        r.places.push(spare);
                        r.arcs.push(arc(&pc.id, &entry.id, x.clone()));
                        r.arcs.push(arc(&entry.id, &pc.id, x.clone()));
                        r.arcs.push(arc(&entry.id, &pc.id, x.clone()));
                        r.arcs.push(arc(&entry.id, &mem.id, x.clone()));
                        r.arcs.push(arc(&mem.id, &undo.id, x.clone()));
                        r.arcs.push(arc(&pc.id, &undo.id, x.clone()));
                    }
                }
                entry.provenance.responsible = x.iter().map(|v| v.name.clone()).collect();
                r.places.push(mem);
                r.transitions.extend([entry, undo]);
            }
            SwitchRoles => {
                let r1 = p_of("p_r1");
                let r2 = p_of("p_r2");
                let (t1, t2) = (&r1.type_tuple[0], &r2.type_tuple[0]);
                let mem = self.make_place(
                    "p_role-{p_r1}-{p_r2}",
                    app,
                    vec![t1.clone(), t2.clone()],
                    RoleHint::Correlation,
                );
                let mut switch = self.make_transition(net, app, "tau_switch_role-{p_r1}-{p_r2}");
                let back = self.make_transition(net, app, "tau_switch_role_back-{p_r1}-{p_r2}");
                r.arcs.push(arc(&r1.id, &switch.id, vec![Variable::new("r", t1)]));
                r.arcs.push(arc(&switch.id, &r2.id, vec![Variable::fresh("alias", t2)]));
                r.arcs.push(arc(&switch.id, &mem.id, vec![Variable::new("r", t1), Variable::fresh("alias", t2)]));
                r.arcs.push(arc(&mem.id, &back.id, vec![Variable::new("r", t1), Variable::new("alias", t2)]));
                r.arcs.push(arc(&r2.id, &back.id, vec![Variable::new("alias", t2)]));
                r.arcs.push(arc(&back.id, &r1.id, vec![Variable::new("r", t1)]));
                switch.provenance.responsible = vec![s("r")];
                r.places.push(mem);
                r.transitions.extend([switch, back]);
            }
            ResourceMemory => {
                let pm = p_of("p_m");
                let pr = p_of("p_r");
                let ty = &pr.type_tuple[0];
                let slot = position_of(pm, ty);
                let others: Vec<usize> = (0..pm.type_tuple.len()).filter(|&i| i != slot).collect();
                let permit = self.make_place(
                    "{p_m}_reroutable",
                    app,
                    others.iter().map(|&i| pm.type_tuple[i].clone()).collect(),
                    RoleHint::Other,
                );
                let mut t = self.make_transition(net, app, "tau_reroute-{p_m}-{p_r}");
                let old_vars = tuple_vars(pm, Some((slot, "r_old")));
                r.arcs.push(arc(&permit.id, &t.id, others.iter().map(|&i| old_vars[i].clone()).collect()));
                // Each memorized interaction can be rerouted once.
                for a in net.arcs.iter().filter(|a| a.target == pm.id && net.transition(&a.source).is_some()) {
                    r.arcs.push(arc(&a.source, &permit.id, others.iter().map(|&i| a.inscription[i].clone()).collect()));
                }
                r.places.push(permit);
                r.arcs.push(arc(&pm.id, &t.id, old_vars));
                r.arcs.push(arc(&pr.id, &t.id, vec![Variable::new("r_new", ty)]));
                r.arcs.push(arc(&t.id, &pm.id, tuple_vars(pm, Some((slot, "r_new")))));
                r.arcs.push(arc(&t.id, &pr.id, vec![Variable::new("r_new", ty)]));
                t.distinct.push((s("r_old"), s("r_new")));
                t.provenance.responsible = vec![s("r_old"), s("r_new")];
                r.transitions.push(t);
            }
            IgnoreBatching => {
                let from = p_of("p_from");
                let to = p_of("p_to");
                let x = tuple_vars(from, None);
                let mut t = self.make_transition(net, app, "tau_ignore_batch-{p_from}-{p_to}");
                r.arcs.push(arc(&from.id, &t.id, x.clone()));
                r.arcs.push(arc(&t.id, &to.id, x.clone()));
                t.provenance.responsible = x.iter().map(|v| v.name.clone()).collect();
                r.transitions.push(t);
            }
        }

        for o in &self.timing_overrides {
            let targets: Vec<String> = if self.created_transitions.iter().any(|t| t.name == o.target) {
                vec![created_id(&o.target, app)]
            } else {
                app.items(&o.target).into_iter().map(s).collect()
            };
            for transition in targets {
                r.timing.push(TimingAnnotation {
                    application_id: app.application_id.clone(),
                    code: self.code.to_string(),
                    transition,
                    effect: o.effect.clone(),
                });
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_params() -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }

    #[test]
    fn catalog_lists_sixteen_patterns() {
        let cat = catalog();
        assert_eq!(cat.len(), 16);
        let codes: BTreeSet<&str> = cat.iter().map(|c| c.code.as_str()).collect();
        for code in [
            "RI_mi^e", "RI_in^e", "RI_in^a", "RI_mi^o", "RI_in^o", "RI_in^p", "RI_mi^p", "BI_1", "BI_2", "BI_3",
            "BI_5", "BI_6", "BI_7", "BI_9", "BI_10", "BI_11",
        ] {
            assert!(codes.contains(code), "{code} missing");
        }
    }

    #[test]
    fn missing_object_signature() {
        let entry = catalog().into_iter().find(|c| c.code == PatternCode::MissingObject).unwrap();
        assert_eq!(entry.wildcards, vec![wc("t", WildcardKind::Transition), wc("objects", WildcardKind::ObjectSet)]);
    }

    #[test]
    fn capacity_has_both_variants() {
        for (variant, name, places) in [("increase", "tau_increase-{p_c}", 2), ("decrease", "tau_decrease-{p_c}", 1)] {
            let params = BTreeMap::from([(s("variant"), serde_json::json!(variant))]);
            let f = instantiate(PatternCode::Capacity, &params).unwrap();
            assert_eq!(f.created_transitions[0].name, name);
            assert_eq!(f.created_transitions.len(), 2);
            assert_eq!(f.created_places.len(), places);
        }
        assert_eq!(
            instantiate(PatternCode::Capacity, &no_params()),
            Err(PatternError::MissingParam { code: s("BI_6"), param: s("variant") })
        );
    }

    #[test]
    fn overtaking_creates_one_silent_transition_and_a_guard() {
        let f = instantiate(PatternCode::Overtaking, &no_params()).unwrap();
        assert_eq!(f.created_transitions.len(), 1);
        assert_eq!(f.created_transitions[0].label, LabelRule::Silent);
        assert_eq!(f.created_places.len(), 1);
    }

    #[test]
    fn incorrect_activity_creates_one_labeled_transition() {
        let params = BTreeMap::from([(s("label"), serde_json::json!("deliver home"))]);
        let f = instantiate(PatternCode::IncorrectActivity, &params).unwrap();
        assert_eq!(f.created_transitions.len(), 1);
        assert_ne!(f.created_transitions[0].label, LabelRule::Silent);
        assert!(f.created_places.is_empty());
    }

    #[test]
    fn timing_only_patterns_have_one_override_and_no_structure() {
        for code in [PatternCode::MissingPosition, PatternCode::LongDuration] {
            let f = instantiate(code, &no_params()).unwrap();
            assert!(f.created_places.is_empty() && f.created_transitions.is_empty());
            assert_eq!(f.timing_overrides.len(), 1);
        }
        let params = BTreeMap::from([(s("window"), serde_json::json!(3600))]);
        let f = instantiate(PatternCode::MissingPosition, &params).unwrap();
        assert_eq!(f.timing_overrides[0].effect, TimingEffect::Coarsen { window: 3600.0 });
    }

    #[test]
    fn structural_patterns_create_something() {
        let params = BTreeMap::from([(s("variant"), serde_json::json!("increase"))]);
        for code in PatternCode::ALL.into_iter().filter(|c| !c.is_timing_only()) {
            let f = instantiate(code, &params).unwrap();
            assert!(!f.created_transitions.is_empty(), "{code}");
        }
    }

    #[test]
    fn requirement_examples() {
        let bi1 = wildcard_requirements(PatternCode::ChangeCorrelation);
        assert!(bi1.contains(&Requirement::PlaceRole { place: s("p_r"), roles: vec![RoleHint::ResourceIdle] }));
        assert!(bi1.contains(&Requirement::ContainsTypeOf { place: s("p"), of: s("p_r") }));
        assert!(bi1.contains(&Requirement::ArityAtLeast { place: s("p"), arity: 2 }));
        assert_eq!(wildcard_requirements(PatternCode::SkipActivity), vec![Requirement::Labeled { transition: s("t") }]);
        assert!(wildcard_requirements(PatternCode::MissingObject)
            .contains(&Requirement::BypassableObjects { objects: s("objects"), transition: s("t") }));
        let bi2 = wildcard_requirements(PatternCode::Multitasking);
        assert!(bi2.contains(&Requirement::PlaceRole {
            place: s("p1"),
            roles: vec![RoleHint::Correlation, RoleHint::ResourceBusy]
        }));
    }

    #[test]
    fn codes_parse_and_reject_unknown() {
        for c in PatternCode::ALL {
            assert_eq!(c.as_str().parse::<PatternCode>().unwrap(), c);
        }
        assert_eq!("BI_4".parse::<PatternCode>(), Err(PatternError::UnknownPattern(s("BI_4"))));
    }

    #[test]
    fn created_ids_depend_on_application() {
        let a = PatternApplication::new("a1", PatternCode::SkipActivity, &[("t", "ring")]);
        let b = PatternApplication::new("a2", PatternCode::SkipActivity, &[("t", "ring")]);
        assert_eq!(created_id("tau_skip-{t}", &a), "tau_skip-ring#a1");
        assert_ne!(created_id("tau_skip-{t}", &a), created_id("tau_skip-{t}", &b));
    }
}
