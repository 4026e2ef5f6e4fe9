//! Firing semantics: binding enumeration, fresh identifiers, atomic firing,
//! trace replay and bounded language enumeration.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Arc, Identifier, Marking, Net, Token, Transition};

#[derive(Debug, Error, PartialEq)]
pub enum SemanticsError {
    #[error("transition {transition} is not enabled under the given binding")]
    NotEnabled { transition: String },
    #[error("unknown transition {0}")]
    UnknownTransition(String),
    #[error("state space exceeded {cap} states")]
    ExplosionGuard { cap: usize },
    #[error("depth {0} exceeds the supported maximum of 12")]
    DepthTooLarge(usize),
}

/// An assignment of identifiers to the arc variables of one transition.
/// Fresh variables are listed in `fresh`; their values only appear in
/// `values` once the firing has happened.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub values: BTreeMap<String, Identifier>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub fresh: BTreeSet<String>,
}

impl Binding {
    pub fn get(&self, var: &str) -> Option<&Identifier> {
        self.values.get(var)
    }

    fn tuple(&self, arc: &Arc) -> Option<Token> {
        arc.inscription.iter().map(|v| self.values.get(&v.name).cloned()).collect()
    }

    /// The binding without its fresh assignments, as it was when enabled.
    pub fn unresolved(&self) -> Binding {
        let mut b = self.clone();
        for f in &self.fresh {
            b.values.remove(f);
        }
        b
    }
}

/// Type-prefixed counters ("courier_3"). Identifiers already in use are
/// skipped, so generated names never collide with existing objects.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdGenerator {
    counters: BTreeMap<String, u64>,
    used: BTreeSet<Identifier>,
}

impl IdGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_net(net: &Net) -> Self {
        let mut g = Self::new();
        g.used = net.initial_marking.identifiers();
        g
    }

    pub fn reserve(&mut self, id: &str) {
        self.used.insert(id.to_string());
    }

    pub fn is_used(&self, id: &str) -> bool {
        self.used.contains(id)
    }

    pub fn next(&mut self, object_type: &str) -> Identifier {
        let c = self.counters.entry(object_type.to_string()).or_insert(0);
        loop {
            *c += 1;
            let candidate = format!("{object_type}_{c}");
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiringRecord {
    pub transition: String,
    pub binding: Binding,
    pub consumed: Vec<(String, Token)>,
    pub produced: Vec<(String, Token)>,
}

fn enumerate_inputs(
    net: &Net,
    marking: &Marking,
    inputs: &[&Arc],
    idx: usize,
    binding: &mut BTreeMap<String, Identifier>,
    taken: &mut Vec<(String, Token)>,
    out: &mut BTreeSet<BTreeMap<String, Identifier>>,
) {
    let Some(arc) = inputs.get(idx) else {
        out.insert(binding.clone());
        return;
    };
    let place = &arc.source;
    let used = |taken: &Vec<(String, Token)>, tok: &Token| {
        taken.iter().filter(|(p, t)| p == place && t == tok).count() as u32
    };

    // Fully determined tuple: a direct multiplicity check.
    let determined: Option<Token> = arc.inscription.iter().map(|v| binding.get(&v.name).cloned()).collect();
    if let Some(tok) = determined {
        if marking.count(place, &tok) > used(taken, &tok) {
            taken.push((place.clone(), tok));
            enumerate_inputs(net, marking, inputs, idx + 1, binding, taken, out);
            taken.pop();
        }
        return;
    }

    for (tok, n) in marking.place_tokens(place) {
        if n <= used(taken, tok) || tok.len() != arc.inscription.len() {
            continue;
        }
        let mut added = Vec::new();
        let mut ok = true;
        for (v, id) in arc.inscription.iter().zip(tok) {
            match binding.get(&v.name) {
                Some(existing) if existing != id => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    binding.insert(v.name.clone(), id.clone());
                    added.push(v.name.clone());
                }
            }
        }
        if ok {
            taken.push((place.clone(), tok.clone()));
            enumerate_inputs(net, marking, inputs, idx + 1, binding, taken, out);
            taken.pop();
        }
        for name in added {
            binding.remove(&name);
        }
    }
}

fn fresh_vars(net: &Net, t: &str) -> BTreeSet<String> {
    net.output_arcs(t).flat_map(|a| a.inscription.iter()).filter(|v| v.fresh).map(|v| v.name.clone()).collect()
}

fn satisfies_guard(t: &Transition, values: &BTreeMap<String, Identifier>) -> bool {
    t.distinct.iter().all(|(a, b)| match (values.get(a), values.get(b)) {
        (Some(x), Some(y)) => x != y,
        _ => true,
    })
}

/// Enabled bindings of a single transition, sorted.
pub fn transition_bindings(net: &Net, marking: &Marking, t: &Transition) -> Vec<Binding> {
    let inputs: Vec<&Arc> = net.input_arcs(&t.id).collect();
    let mut found = BTreeSet::new();
    enumerate_inputs(net, marking, &inputs, 0, &mut BTreeMap::new(), &mut Vec::new(), &mut found);
    let fresh = fresh_vars(net, &t.id);
    found
        .into_iter()
        .filter(|values| satisfies_guard(t, values))
        .map(|values| Binding { values, fresh: fresh.clone() })
        .collect()
}

/// Every enabled (transition, binding) pair, sorted by transition id and
/// then binding.
pub fn enabled_bindings(net: &Net, marking: &Marking) -> Vec<(String, Binding)> {
    let mut ts: Vec<&Transition> = net.transitions.iter().collect();
    ts.sort_by(|a, b| a.id.cmp(&b.id));
    ts.into_iter()
        .flat_map(|t| transition_bindings(net, marking, t).into_iter().map(move |b| (t.id.clone(), b)))
        .collect()
}

/// Computes the tokens a firing consumes and produces. Fresh variables
/// without a value are assigned by `id_gen`.
pub fn plan_firing(
    net: &Net,
    transition: &str,
    binding: &Binding,
    id_gen: &mut IdGenerator,
) -> Result<FiringRecord, SemanticsError> {
    if net.transition(transition).is_none() {
        return Err(SemanticsError::UnknownTransition(transition.to_string()));
    }
    let mut b = binding.clone();
    for a in net.output_arcs(transition) {
        for v in a.inscription.iter().filter(|v| v.fresh) {
            b.fresh.insert(v.name.clone());
            if !b.values.contains_key(&v.name) {
                let id = id_gen.next(&v.object_type);
                b.values.insert(v.name.clone(), id);
            }
        }
    }
    let not_enabled = || SemanticsError::NotEnabled { transition: transition.to_string() };
    let consumed = net
        .input_arcs(transition)
        .map(|a| b.tuple(a).map(|t| (a.source.clone(), t)).ok_or_else(not_enabled))
        .collect::<Result<Vec<_>, _>>()?;
    let produced = net
        .output_arcs(transition)
        .map(|a| b.tuple(a).map(|t| (a.target.clone(), t)).ok_or_else(not_enabled))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FiringRecord { transition: transition.to_string(), binding: b, consumed, produced })
}

/// Removes the consumed tokens of a planned firing; fails without changing
/// the marking if any is missing.
pub fn consume(marking: &mut Marking, record: &FiringRecord) -> bool {
    let mut next = marking.clone();
    for (p, t) in &record.consumed {
        if !next.remove(p, t, 1) {
            return false;
        }
    }
    *marking = next;
    true
}

fn guard_holds(net: &Net, transition: &str, binding: &Binding) -> bool {
    net.transition(transition).is_some_and(|t| satisfies_guard(t, &binding.values))
}

/// Fires one enabled binding atomically.
pub fn fire(
    net: &Net,
    marking: &Marking,
    transition: &str,
    binding: &Binding,
    id_gen: &mut IdGenerator,
) -> Result<(Marking, FiringRecord), SemanticsError> {
    let mut trial_gen = id_gen.clone();
    let record = plan_firing(net, transition, binding, &mut trial_gen)?;
    if !guard_holds(net, transition, &record.binding) {
        return Err(SemanticsError::NotEnabled { transition: transition.to_string() });
    }
    // Bound variables must all come from consumed tokens.
    let input_vars: BTreeSet<&str> =
        net.input_arcs(transition).flat_map(|a| a.inscription.iter().map(|v| v.name.as_str())).collect();
    if binding.values.keys().any(|k| !input_vars.contains(k.as_str()) && !record.binding.fresh.contains(k)) {
        return Err(SemanticsError::NotEnabled { transition: transition.to_string() });
    }
    let mut next = marking.clone();
    if !consume(&mut next, &record) {
        return Err(SemanticsError::NotEnabled { transition: transition.to_string() });
    }
    for (p, t) in &record.produced {
        next.add(p, t.clone(), 1);
    }
    *id_gen = trial_gen;
    Ok((next, record))
}

/// True iff the sequence fires from the initial marking. Fresh identifiers
/// are taken from the bindings and must be new to the run.
pub fn replay(net: &Net, trace: &[(String, Binding)]) -> bool {
    let mut marking = net.initial_marking.clone();
    let mut seen: HashSet<Identifier> = marking.identifiers().into_iter().collect();
    for (t, b) in trace {
        for f in &b.fresh {
            match b.values.get(f) {
                Some(id) if !seen.contains(id) => {}
                _ => return false,
            }
        }
        let mut gen = IdGenerator::new();
        match fire(net, &marking, t, b, &mut gen) {
            Ok((next, record)) => {
                // A fresh variable left unassigned by the trace would have been generated here.
                if record.binding != *b {
                    return false;
                }
                seen.extend(b.values.values().cloned());
                marking = next;
            }
            Err(_) => return false,
        }
    }
    true
}

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

pub type FiringSequence = Vec<(String, Binding)>;

/// All firing sequences of length at most `depth` from the initial marking.
/// Fresh identifiers are generated deterministically along each path, so
/// equal paths in different nets get equal names.
pub fn bounded_language(net: &Net, depth: usize) -> Result<BTreeSet<FiringSequence>, SemanticsError> {
    bounded_language_capped(net, depth, DEFAULT_STATE_CAP)
}

pub fn bounded_language_capped(
    net: &Net,
    depth: usize,
    cap: usize,
) -> Result<BTreeSet<FiringSequence>, SemanticsError> {
    if depth > 12 {
        return Err(SemanticsError::DepthTooLarge(depth));
    }
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Marking, IdGenerator, FiringSequence)> =
        vec![(net.initial_marking.clone(), IdGenerator::for_net(net), Vec::new())];
    let mut states = 0usize;
    while let Some((marking, gen, seq)) = stack.pop() {
        states += 1;
        if states > cap {
            return Err(SemanticsError::ExplosionGuard { cap });
        }
        if seq.len() < depth {
            for (t, b) in enabled_bindings(net, &marking) {
                let mut g = gen.clone();
                let (next, record) = fire(net, &marking, &t, &b, &mut g)?;
                let mut s = seq.clone();
                s.push((t, record.binding));
                stack.push((next, g, s));
            }
        }
        out.insert(seq);
    }
    Ok(out)
}
