//! Typed Petri nets with identifiers: places typed by tuples of object types,
//! tokens that are identifier tuples, and variable-inscribed arcs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Identifier = String;
pub type Token = Vec<Identifier>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RoleHint {
    #[default]
    Regular,
    ResourceIdle,
    ResourceBusy,
    Queue,
    Correlation,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub id: String,
    pub type_tuple: Vec<String>,
    #[serde(default)]
    pub role_hint: RoleHint,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Base,
    Behavioral { application_id: String },
    Recording { application_id: String },
}

impl Origin {
    pub fn application_id(&self) -> Option<&str> {
        match self {
            Origin::Base => None,
            Origin::Behavioral { application_id } | Origin::Recording { application_id } => {
                Some(application_id)
            }
        }
    }
}

/// Where a transition came from. Created transitions point at the single
/// pattern application that introduced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceTag {
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_code: Option<String>,
    /// The base activity this created transition stands in for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_of: Option<String>,
    /// Firings of this transition count as occurrences of the deviation
    /// (as opposed to helper steps such as undo or repair transitions).
    #[serde(default, skip_serializing_if = "is_false")]
    pub marks_occurrence: bool,
    /// Arc variables naming the objects responsible for the deviation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responsible: Vec<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ProvenanceTag {
    pub fn base() -> Self {
        ProvenanceTag {
            origin: Origin::Base,
            pattern_code: None,
            shadow_of: None,
            marks_occurrence: false,
            responsible: Vec::new(),
        }
    }

    pub fn is_base(&self) -> bool {
        self.origin == Origin::Base
    }
}

impl Default for ProvenanceTag {
    fn default() -> Self {
        Self::base()
    }
}

fn default_weight() -> f64 {
    1.0
}

fn is_unit_weight(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    /// `None` for silent transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_label: Option<String>,
    #[serde(default)]
    pub provenance: ProvenanceTag,
    /// Arc variables whose bound identifiers are written into the emitted event.
    #[serde(default)]
    pub record_spec: Vec<String>,
    /// Pairs of variables that must bind to different identifiers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distinct: Vec<(String, String)>,
    /// Default sampling weight; simulation configs may override it.
    #[serde(default = "default_weight", skip_serializing_if = "is_unit_weight")]
    pub weight: f64,
}

impl Transition {
    pub fn is_silent(&self) -> bool {
        self.activity_label.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub object_type: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fresh: bool,
}

impl Variable {
    pub fn new(name: &str, object_type: &str) -> Self {
        Variable { name: name.to_string(), object_type: object_type.to_string(), fresh: false }
    }

    pub fn fresh(name: &str, object_type: &str) -> Self {
        Variable { name: name.to_string(), object_type: object_type.to_string(), fresh: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub source: String,
    pub target: String,
    pub inscription: Vec<Variable>,
}

/// Timing behaviour attached to transitions by timing-only or partly timing
/// deviation patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimingEffect {
    /// Recorded timestamps are floored to a multiple of `window` seconds.
    Coarsen { window: f64 },
    /// Replaces the configured production delay of the transition.
    Delay { delay: crate::sim::Dist },
    /// With `probability`, the production delay is drawn from `delay` instead.
    LongDuration { probability: f64, delay: crate::sim::Dist },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingAnnotation {
    pub application_id: String,
    pub code: String,
    pub transition: String,
    pub effect: TimingEffect,
}

/// A marking: per place, a multiset of identifier tuples.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marking {
    tokens: BTreeMap<String, BTreeMap<Token, u32>>,
}

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, place: &str, token: Token, count: u32) {
        if count == 0 {
            return;
        }
        *self.tokens.entry(place.to_string()).or_default().entry(token).or_insert(0) += count;
    }

    pub fn with(mut self, place: &str, tokens: &[&[&str]]) -> Self {
        for t in tokens {
            self.add(place, t.iter().map(|s| s.to_string()).collect(), 1);
        }
        self
    }

    /// Removes `count` copies; returns false (and leaves the marking intact)
    /// if fewer are present.
    pub fn remove(&mut self, place: &str, token: &Token, count: u32) -> bool {
        let Some(bag) = self.tokens.get_mut(place) else { return count == 0 };
        let Some(n) = bag.get_mut(token) else { return count == 0 };
        if *n < count {
            return false;
        }
        *n -= count;
        if *n == 0 {
            bag.remove(token);
            if bag.is_empty() {
                self.tokens.remove(place);
            }
        }
        true
    }

    pub fn count(&self, place: &str, token: &Token) -> u32 {
        self.tokens.get(place).and_then(|b| b.get(token)).copied().unwrap_or(0)
    }

    pub fn place_tokens(&self, place: &str) -> impl Iterator<Item = (&Token, u32)> {
        self.tokens.get(place).into_iter().flat_map(|b| b.iter().map(|(t, n)| (t, *n)))
    }

    pub fn places(&self) -> impl Iterator<Item = &String> {
        self.tokens.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Token, u32)> {
        self.tokens.iter().flat_map(|(p, bag)| bag.iter().map(move |(t, n)| (p, t, *n)))
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.iter().map(|(_, _, n)| n as u64).sum()
    }

    pub fn identifiers(&self) -> BTreeSet<Identifier> {
        self.iter().flat_map(|(_, t, _)| t.iter().cloned()).collect()
    }
}

impl Serialize for Marking {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flat: BTreeMap<&String, Vec<&Token>> = self
            .tokens
            .iter()
            .map(|(p, bag)| {
                let list = bag.iter().flat_map(|(t, n)| std::iter::repeat_n(t, *n as usize)).collect();
                (p, list)
            })
            .collect();
        flat.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Marking {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flat: BTreeMap<String, Vec<Token>> = BTreeMap::deserialize(d)?;
        let mut m = Marking::new();
        for (p, list) in flat {
            for t in list {
                m.add(&p, t, 1);
            }
        }
        Ok(m)
    }
}

pub const SCHEMA_VERSION: &str = "1";

fn schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    #[serde(default = "schema_version")]
    pub schema_version: String,
    #[serde(default)]
    pub name: String,
    pub object_types: Vec<String>,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    pub initial_marking: Marking,
    #[serde(default)]
    pub final_marking: Option<Marking>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing: Vec<TimingAnnotation>,
}

impl Net {
    pub fn new(name: &str) -> Self {
        Net {
            schema_version: schema_version(),
            name: name.to_string(),
            object_types: Vec::new(),
            places: Vec::new(),
            transitions: Vec::new(),
            arcs: Vec::new(),
            initial_marking: Marking::new(),
            final_marking: None,
            timing: Vec::new(),
        }
    }

    pub fn place(&self, id: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id)
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn is_place(&self, id: &str) -> bool {
        self.place(id).is_some()
    }

    /// Arcs from places into `t`, in declaration order.
    pub fn input_arcs<'a>(&'a self, t: &'a str) -> impl Iterator<Item = &'a Arc> + 'a {
        self.arcs.iter().filter(move |a| a.target == t && self.is_place(&a.source))
    }

    pub fn output_arcs<'a>(&'a self, t: &'a str) -> impl Iterator<Item = &'a Arc> + 'a {
        self.arcs.iter().filter(move |a| a.source == t && self.is_place(&a.target))
    }

    pub fn preset(&self, t: &str) -> BTreeSet<String> {
        self.input_arcs(t).map(|a| a.source.clone()).collect()
    }

    pub fn postset(&self, t: &str) -> BTreeSet<String> {
        self.output_arcs(t).map(|a| a.target.clone()).collect()
    }

    /// All variables on the arcs of `t`, keyed by name.
    pub fn variables(&self, t: &str) -> BTreeMap<String, Variable> {
        let mut vars = BTreeMap::new();
        for a in self.arcs.iter().filter(|a| a.source == t || a.target == t) {
            for v in &a.inscription {
                vars.entry(v.name.clone()).or_insert_with(|| v.clone());
            }
        }
        vars
    }

    /// Index of transitions by id, used by the simulation hot path.
    pub fn transition_index(&self) -> BTreeMap<&str, &Transition> {
        self.transitions.iter().map(|t| (t.id.as_str(), t)).collect()
    }

    pub fn element_ids(&self) -> BTreeSet<String> {
        self.places.iter().map(|p| p.id.clone()).chain(self.transitions.iter().map(|t| t.id.clone())).collect()
    }

    /// Element-order-independent normal form, used for isomorphism checks
    /// between nets that differ only in the order elements were added.
    pub fn canonical(&self) -> Net {
        let mut n = self.clone();
        n.places.sort_by(|a, b| a.id.cmp(&b.id));
        n.transitions.sort_by(|a, b| a.id.cmp(&b.id));
        n.arcs.sort_by(|a, b| {
            (&a.source, &a.target, &a.inscription).cmp(&(&b.source, &b.target, &b.inscription))
        });
        n.object_types.sort();
        n.timing.sort_by(|a, b| (&a.application_id, &a.transition).cmp(&(&b.application_id, &b.transition)));
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    DuplicateId { id: String },
    DuplicateObjectType { name: String },
    UnknownObjectType { element: String, name: String },
    EmptyTypeTuple { place: String },
    UnresolvedElement { element: String, id: String },
    NotBipartite { source: String, target: String },
    ArityMismatch { source: String, target: String, expected: usize, found: usize },
    TypeMismatch { source: String, target: String, variable: String, expected: String, found: String },
    FreshOnInputArc { source: String, target: String, variable: String },
    InconsistentVariableType { transition: String, variable: String },
    UnboundOutputVariable { transition: String, variable: String },
    UnknownRecordVariable { transition: String, variable: String },
    IsolatedTransition { transition: String },
    NegativeWeight { transition: String },
    MarkingNonConformant { place: String, detail: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

fn check_marking(net: &Net, m: &Marking, out: &mut Vec<Diagnostic>) {
    for (p, t, _) in m.iter() {
        match net.place(p) {
            None => out.push(Diagnostic::UnresolvedElement { element: "marking".into(), id: p.clone() }),
            Some(place) if place.type_tuple.len() != t.len() => out.push(Diagnostic::MarkingNonConformant {
                place: p.clone(),
                detail: format!("token {:?} has arity {}, place arity {}", t, t.len(), place.type_tuple.len()),
            }),
            _ => {}
        }
    }
}

/// Checks every structural invariant of a net. An empty result means the
/// net is well-formed.
pub fn validate_net(net: &Net) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut types = BTreeSet::new();
    for ty in &net.object_types {
        if !types.insert(ty.as_str()) {
            out.push(Diagnostic::DuplicateObjectType { name: ty.clone() });
        }
    }

    let mut ids = BTreeSet::new();
    for id in net.places.iter().map(|p| &p.id).chain(net.transitions.iter().map(|t| &t.id)) {
        if !ids.insert(id.as_str()) {
            out.push(Diagnostic::DuplicateId { id: id.clone() });
        }
    }

    for p in &net.places {
        if p.type_tuple.is_empty() {
            out.push(Diagnostic::EmptyTypeTuple { place: p.id.clone() });
        }
        for ty in &p.type_tuple {
            if !types.contains(ty.as_str()) {
                out.push(Diagnostic::UnknownObjectType { element: p.id.clone(), name: ty.clone() });
            }
        }
    }

    for a in &net.arcs {
        let (place_id, transition_id, into_transition) = match (
            net.place(&a.source).is_some(),
            net.transition(&a.source).is_some(),
            net.place(&a.target).is_some(),
            net.transition(&a.target).is_some(),
        ) {
            (true, _, _, true) => (&a.source, &a.target, true),
            (_, true, true, _) => (&a.target, &a.source, false),
            (false, false, _, _) => {
                out.push(Diagnostic::UnresolvedElement { element: "arc".into(), id: a.source.clone() });
                continue;
            }
            (_, _, false, false) => {
                out.push(Diagnostic::UnresolvedElement { element: "arc".into(), id: a.target.clone() });
                continue;
            }
            _ => {
                out.push(Diagnostic::NotBipartite { source: a.source.clone(), target: a.target.clone() });
                continue;
            }
        };
        let _ = transition_id;
        let place = net.place(place_id).expect("resolved above");
        if place.type_tuple.len() != a.inscription.len() {
            out.push(Diagnostic::ArityMismatch {
                source: a.source.clone(),
                target: a.target.clone(),
                expected: place.type_tuple.len(),
                found: a.inscription.len(),
            });
            continue;
        }
        for (v, ty) in a.inscription.iter().zip(&place.type_tuple) {
            if &v.object_type != ty {
                out.push(Diagnostic::TypeMismatch {
                    source: a.source.clone(),
                    target: a.target.clone(),
                    variable: v.name.clone(),
                    expected: ty.clone(),
                    found: v.object_type.clone(),
                });
            }
            if v.fresh && into_transition {
                out.push(Diagnostic::FreshOnInputArc {
                    source: a.source.clone(),
                    target: a.target.clone(),
                    variable: v.name.clone(),
                });
            }
        }
    }

    for t in &net.transitions {
        if t.weight < 0.0 || t.weight.is_nan() {
            out.push(Diagnostic::NegativeWeight { transition: t.id.clone() });
        }
        let touching: Vec<&Arc> = net.arcs.iter().filter(|a| a.source == t.id || a.target == t.id).collect();
        if touching.is_empty() {
            out.push(Diagnostic::IsolatedTransition { transition: t.id.clone() });
        }
        let mut seen: BTreeMap<&str, (&str, bool)> = BTreeMap::new();
        let mut inconsistent = BTreeSet::new();
        for v in touching.iter().flat_map(|a| a.inscription.iter()) {
            match seen.get(v.name.as_str()) {
                Some((ty, fresh)) if *ty != v.object_type || *fresh != v.fresh => {
                    inconsistent.insert(v.name.clone());
                }
                Some(_) => {}
                None => {
                    seen.insert(&v.name, (&v.object_type, v.fresh));
                }
            }
        }
        for variable in inconsistent {
            out.push(Diagnostic::InconsistentVariableType { transition: t.id.clone(), variable });
        }
        let bound: BTreeSet<&str> =
            net.input_arcs(&t.id).flat_map(|a| a.inscription.iter().map(|v| v.name.as_str())).collect();
        let mut unbound = BTreeSet::new();
        for v in net.output_arcs(&t.id).flat_map(|a| a.inscription.iter()) {
            if !v.fresh && !bound.contains(v.name.as_str()) {
                unbound.insert(v.name.clone());
            }
        }
        for variable in unbound {
            out.push(Diagnostic::UnboundOutputVariable { transition: t.id.clone(), variable });
        }
        for r in t.record_spec.iter().chain(t.distinct.iter().flat_map(|(a, b)| [a, b])) {
            if !seen.contains_key(r.as_str()) {
                out.push(Diagnostic::UnknownRecordVariable { transition: t.id.clone(), variable: r.clone() });
            }
        }
    }

    check_marking(net, &net.initial_marking, &mut out);
    if let Some(f) = &net.final_marking {
        check_marking(net, f, &mut out);
    }
    out.sort();
    out.dedup();
    out
}

/// Small builder used by fixtures and tests.
pub struct NetBuilder {
    net: Net,
}

impl NetBuilder {
    pub fn new(name: &str) -> Self {
        NetBuilder { net: Net::new(name) }
    }

    pub fn object_type(mut self, name: &str) -> Self {
        self.net.object_types.push(name.to_string());
        self
    }

    pub fn place(mut self, id: &str, types: &[&str], role: RoleHint) -> Self {
        self.net.places.push(Place {
            id: id.to_string(),
            type_tuple: types.iter().map(|s| s.to_string()).collect(),
            role_hint: role,
        });
        self
    }

    /// Labeled transition recording the listed variables.
    pub fn transition(mut self, id: &str, label: Option<&str>, record: &[&str]) -> Self {
        self.net.transitions.push(Transition {
            id: id.to_string(),
            activity_label: label.map(str::to_string),
            provenance: ProvenanceTag::base(),
            record_spec: record.iter().map(|s| s.to_string()).collect(),
            distinct: Vec::new(),
            weight: 1.0,
        });
        self
    }

    pub fn silent(self, id: &str) -> Self {
        self.transition(id, None, &[])
    }

    /// Sets the weight of the most recently added transition.
    pub fn weight(mut self, weight: f64) -> Self {
        if let Some(t) = self.net.transitions.last_mut() {
            t.weight = weight;
        }
        self
    }

    /// Arc whose inscription is given as `name:type` pairs, with a leading
    /// `!` marking a fresh variable.
    pub fn arc(mut self, source: &str, target: &str, vars: &[&str]) -> Self {
        let inscription = vars
            .iter()
            .map(|spec| {
                let (fresh, spec) = match spec.strip_prefix('!') {
                    Some(rest) => (true, rest),
                    None => (false, *spec),
                };
                let (name, ty) = spec.split_once(':').unwrap_or((spec, spec));
                Variable { name: name.to_string(), object_type: ty.to_string(), fresh }
            })
            .collect();
        self.net.arcs.push(Arc { source: source.to_string(), target: target.to_string(), inscription });
        self
    }

    pub fn tokens(mut self, place: &str, tokens: &[&[&str]]) -> Self {
        self.net.initial_marking = std::mem::take(&mut self.net.initial_marking).with(place, tokens);
        self
    }

    pub fn build(self) -> Net {
        self.net
    }
}
