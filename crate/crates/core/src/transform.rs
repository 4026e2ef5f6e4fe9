//! Additive model transformations: M' = M ∪ h(π).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::Net;
use crate::patterns::{
    instantiate, wildcard_requirements, MappingDiagnostic, MappingTarget, PatternApplication, PatternError,
    PatternFragment, WildcardKind,
};

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("application {index} ({application_id}) has an invalid mapping: {}", render(diagnostics))]
    InvalidMapping { index: usize, application_id: String, diagnostics: Vec<MappingDiagnostic> },
    #[error("application {index}: {source}")]
    Pattern { index: usize, source: PatternError },
    #[error("recording application {index} ({application_id}) precedes a behavioral one")]
    OrderViolation { index: usize, application_id: String },
}

fn render(diags: &[MappingDiagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Checks that `app` maps every wildcard of `fragment` to a suitable element
/// of `net`. An empty result means the application can be applied.
pub fn validate_mapping(net: &Net, fragment: &PatternFragment, app: &PatternApplication) -> Vec<MappingDiagnostic> {
    let mut out = Vec::new();
    if fragment.code != app.code {
        out.push(MappingDiagnostic::CodeMismatch { fragment: fragment.code.to_string(), application: app.code.to_string() });
        return out;
    }
    for key in app.mapping.keys() {
        if !fragment.wildcards.iter().any(|w| &w.name == key) {
            out.push(MappingDiagnostic::UnknownWildcard { wildcard: key.clone() });
        }
    }
    let kind_mismatch =
        |w: &str, expected: &str| MappingDiagnostic::KindMismatch { wildcard: w.to_string(), expected: expected.to_string() };
    let mut by_kind: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
    for w in &fragment.wildcards {
        let Some(target) = app.mapping.get(&w.name) else {
            out.push(MappingDiagnostic::MissingWildcard { wildcard: w.name.clone() });
            continue;
        };
        let single = |expected: &str| match target {
            MappingTarget::One(id) => Ok(id.as_str()),
            MappingTarget::Many(_) => Err(kind_mismatch(&w.name, expected)),
        };
        match w.kind {
            WildcardKind::Place | WildcardKind::Transition => {
                let expected = if w.kind == WildcardKind::Place { "place" } else { "transition" };
                match single(expected) {
                    Err(d) => out.push(d),
                    Ok(id) => {
                        let is_place = net.place(id).is_some();
                        let is_transition = net.transition(id).is_some();
                        let right = if w.kind == WildcardKind::Place { is_place } else { is_transition };
                        if right {
                            by_kind.entry(expected).or_default().push((&w.name, id));
                        } else if is_place || is_transition {
                            out.push(kind_mismatch(&w.name, expected));
                        } else {
                            out.push(MappingDiagnostic::UnresolvedElement { wildcard: w.name.clone(), id: id.to_string() });
                        }
                    }
                }
            }
            WildcardKind::TransitionSet => {
                let items = target.items();
                if items.is_empty() {
                    out.push(kind_mismatch(&w.name, "non-empty transition set"));
                }
                for id in items {
                    if net.transition(id).is_none() {
                        out.push(MappingDiagnostic::UnresolvedElement { wildcard: w.name.clone(), id: id.to_string() });
                    }
                }
            }
            WildcardKind::ObjectSet => {}
            WildcardKind::Variable | WildcardKind::Label => {
                if let Err(d) = single("single value") {
                    out.push(d);
                }
            }
        }
    }
    for (_, mapped) in by_kind {
        for (i, (wa, id)) in mapped.iter().enumerate() {
            if let Some((wb, _)) = mapped[i + 1..].iter().find(|(_, other)| other == id) {
                out.push(MappingDiagnostic::NotInjective { wildcards: vec![wa.to_string(), wb.to_string()], id: id.to_string() });
            }
        }
    }
    if !out.is_empty() {
        out.sort();
        return out;
    }
    for req in wildcard_requirements(fragment.code) {
        out.extend(req.check(net, app));
    }
    if out.is_empty() {
        let realized = fragment.realize(net, app);
        let existing = net.element_ids();
        let mut seen = std::collections::BTreeSet::new();
        let created = realized.places.iter().map(|p| &p.id).chain(realized.transitions.iter().map(|t| &t.id));
        for id in created {
            if existing.contains(id) || !seen.insert(id.clone()) {
                out.push(MappingDiagnostic::IdCollision { id: id.clone() });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Adds the elements created by `app` to a copy of `net`. Elements of `net`
/// are left untouched.
pub fn apply(net: &Net, fragment: &PatternFragment, app: &PatternApplication) -> Result<Net, TransformError> {
    apply_at(net, fragment, app, 0)
}

fn apply_at(net: &Net, fragment: &PatternFragment, app: &PatternApplication, index: usize) -> Result<Net, TransformError> {
    let diagnostics = validate_mapping(net, fragment, app);
    if !diagnostics.is_empty() {
        return Err(TransformError::InvalidMapping { index, application_id: app.application_id.clone(), diagnostics });
    }
    let realized = fragment.realize(net, app);
    let mut out = net.clone();
    for p in &realized.places {
        for ty in &p.type_tuple {
            if !out.object_types.contains(ty) {
                out.object_types.push(ty.clone());
            }
        }
    }
    out.places.extend(realized.places);
    out.transitions.extend(realized.transitions);
    out.arcs.extend(realized.arcs);
    out.timing.extend(realized.timing);
    for (place, token) in realized.tokens {
        out.initial_marking.add(&place, token, 1);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Place,
    Transition,
    Arc,
    Timing,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub element: String,
    pub kind: ElementKind,
    pub application_id: String,
    pub code: String,
}

/// Which application created which element.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceLedger {
    pub entries: Vec<LedgerEntry>,
}

impl ProvenanceLedger {
    /// Applications that created the place or transition `element`.
    pub fn attribution(&self, element: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.element == element && matches!(e.kind, ElementKind::Place | ElementKind::Transition))
            .map(|e| e.application_id.as_str())
            .collect()
    }
}

fn arc_key(source: &str, target: &str) -> String {
    format!("{source}->{target}")
}

/// Applies `apps` left to right. Behavioral applications must all come
/// before recording ones.
pub fn apply_sequence(net: &Net, apps: &[PatternApplication]) -> Result<(Net, ProvenanceLedger), TransformError> {
    let mut seen_recording = false;
    for (index, app) in apps.iter().enumerate() {
        if app.code.is_recording() {
            seen_recording = true;
        } else if seen_recording {
            return Err(TransformError::OrderViolation { index, application_id: app.application_id.clone() });
        }
    }
    let mut current = net.clone();
    let mut ledger = ProvenanceLedger::default();
    for (index, app) in apps.iter().enumerate() {
        let fragment = instantiate(app.code, &app.params).map_err(|source| TransformError::Pattern { index, source })?;
        let next = apply_at(&current, &fragment, app, index)?;
        let entry = |element: String, kind| LedgerEntry {
            element,
            kind,
            application_id: app.application_id.clone(),
            code: app.code.to_string(),
        };
        for p in &next.places[current.places.len()..] {
            ledger.entries.push(entry(p.id.clone(), ElementKind::Place));
        }
        for t in &next.transitions[current.transitions.len()..] {
            ledger.entries.push(entry(t.id.clone(), ElementKind::Transition));
        }
        for a in &next.arcs[current.arcs.len()..] {
            ledger.entries.push(entry(arc_key(&a.source, &a.target), ElementKind::Arc));
        }
        for t in &next.timing[current.timing.len()..] {
            ledger.entries.push(entry(t.transition.clone(), ElementKind::Timing));
        }
        current = next;
    }
    Ok((current, ledger))
}
