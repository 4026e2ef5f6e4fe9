//! Assessment targets derived from ground-truth traces: alignments, deviation
//! reports and a distance for scoring candidate alignments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::occurrence_counts;
use crate::logio::{event_id, project_observed, IoError, ObservedLog};
use crate::net::{Net, Origin};
use crate::patterns::PatternCode;
use crate::sim::{GroundTruthTrace, TraceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("log is not the projection of the trace: {0}")]
    LogTraceMismatch(String),
    #[error("alignments cover different events: {0}")]
    CoverageMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Synchronous,
    Log,
    Model,
    SilentModel,
}

impl MoveKind {
    pub fn has_log_side(self) -> bool {
        matches!(self, MoveKind::Synchronous | MoveKind::Log)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cause {
    pub code: String,
    pub application_id: String,
}

/// Objects the log recorded versus the objects actually involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDiscrepancy {
    pub recorded: Vec<String>,
    pub actual: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub kind: MoveKind,
    pub activity: String,
    pub objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_event_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_transition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<Cause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<ObjectDiscrepancy>,
}

impl Move {
    fn key(&self) -> (MoveKind, &str, BTreeSet<&str>) {
        (self.kind, self.activity.as_str(), self.objects.iter().map(String::as_str).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GtAlignment {
    pub system: Vec<Move>,
    pub per_object: BTreeMap<String, Vec<Move>>,
}

impl GtAlignment {
    fn from_system(system: Vec<Move>) -> Self {
        let mut per_object: BTreeMap<String, Vec<Move>> = BTreeMap::new();
        for m in &system {
            for o in m.objects.iter().collect::<BTreeSet<_>>() {
                per_object.entry(o.clone()).or_default().push(m.clone());
            }
        }
        GtAlignment { system, per_object }
    }

    /// True when every move is synchronous.
    pub fn is_clean(&self) -> bool {
        self.system.iter().all(|m| m.kind == MoveKind::Synchronous && m.cause.is_none())
    }

    fn covered_events(&self) -> BTreeSet<&str> {
        self.per_object.values().flatten().filter_map(|m| m.source_event_id.as_deref()).collect()
    }
}

struct Shadow<'a> {
    activity: String,
    objects: Vec<String>,
    transition: &'a str,
}

/// The base transition a created copy stands in for, with the objects it
/// would have recorded under the record's binding.
fn shadow<'a>(m0: &Net, r: &'a TraceRecord) -> Option<Shadow<'a>> {
    let id = r.provenance.shadow_of.as_deref()?;
    let base = m0.transition(id);
    let activity = base.and_then(|t| t.activity_label.clone()).unwrap_or_else(|| id.to_string());
    let objects = match base {
        Some(t) if !t.record_spec.is_empty() => t.record_spec.iter().filter_map(|v| r.binding.get(v).cloned()).collect(),
        _ => r.binding.values.values().cloned().collect(),
    };
    Some(Shadow { activity, objects, transition: id })
}

fn moves_for(m0: &Net, run_id: &str, r: &TraceRecord) -> Vec<Move> {
    let recorded: Vec<String> = r.recorded_objects.iter().map(|o| o.id.clone()).collect();
    let event = r.activity_label.as_ref().map(|_| event_id(run_id, r.seq_no));
    let cause = match (r.provenance.origin.application_id(), &r.provenance.pattern_code) {
        (Some(app), Some(code)) => Some(Cause { code: code.clone(), application_id: app.to_string() }),
        _ => None,
    };
    let code: Option<PatternCode> = r.provenance.pattern_code.as_deref().and_then(|c| c.parse().ok());
    let bound = || -> Vec<String> {
        let fresh = &r.binding.fresh;
        r.binding.values.iter().filter(|(v, _)| !fresh.contains(*v)).map(|(_, id)| id.clone()).collect()
    };
    let log_side = |kind: MoveKind, cause: Option<Cause>| Move {
        kind,
        activity: r.activity_label.clone().unwrap_or_default(),
        objects: recorded.clone(),
        source_event_id: event.clone(),
        source_transition: (kind == MoveKind::Synchronous).then(|| r.transition.clone()),
        cause,
        discrepancy: None,
    };
    let model_side = |s: Shadow, cause: Option<Cause>| Move {
        kind: MoveKind::Model,
        activity: s.activity,
        objects: s.objects,
        source_event_id: None,
        source_transition: Some(s.transition.to_string()),
        cause,
        discrepancy: None,
    };

    use PatternCode::*;
    match (&r.provenance.origin, &r.activity_label) {
        (Origin::Base, Some(_)) => vec![log_side(MoveKind::Synchronous, None)],
        (Origin::Base, None) => Vec::new(),
        (_, Some(_)) => match (code, shadow(m0, r)) {
            (Some(IncorrectEvent | IncorrectActivity), Some(s)) => {
                vec![log_side(MoveKind::Log, cause.clone()), model_side(s, cause)]
            }
            (Some(IncorrectObject | MissingObject), Some(s)) => {
                let mut m = log_side(MoveKind::Synchronous, cause);
                m.discrepancy = Some(ObjectDiscrepancy { recorded: recorded.clone(), actual: s.objects });
                vec![m]
            }
            (_, Some(_)) => vec![log_side(MoveKind::Synchronous, cause)],
            (_, None) => vec![log_side(MoveKind::Log, cause)],
        },
        (Origin::Recording { .. }, None) => match (code, shadow(m0, r)) {
            (Some(MissingEvent), Some(s)) => vec![model_side(s, cause)],
            // Bypass helpers of object-level errors have no counterpart.
            _ => Vec::new(),
        },
        (Origin::Behavioral { .. }, None) => match shadow(m0, r) {
            Some(s) => vec![model_side(s, cause)],
            None => vec![Move {
                kind: MoveKind::SilentModel,
                activity: r.transition.clone(),
                objects: bound(),
                source_event_id: None,
                source_transition: Some(r.transition.clone()),
                cause,
                discrepancy: None,
            }],
        },
    }
}

/// Ground-truth alignment of `log` against the base model. Moves with a log
/// side follow the log order; model-only moves follow the log move of the
/// latest earlier firing.
pub fn gt_alignment(m0: &Net, trace: &GroundTruthTrace, log: &ObservedLog) -> Result<GtAlignment, OracleError> {
    let expected = project_observed(trace, &log.run_id);
    if expected != *log {
        let detail = if expected.events.len() != log.events.len() {
            format!("expected {} events, log has {}", expected.events.len(), log.events.len())
        } else {
            match expected.events.iter().zip(&log.events).position(|(a, b)| a != b) {
                Some(i) => format!("event {i} differs ({} vs {})", expected.events[i].event_id, log.events[i].event_id),
                None => "object table differs".to_string(),
            }
        };
        return Err(OracleError::LogTraceMismatch(detail));
    }
    let position: BTreeMap<&str, usize> = log.events.iter().enumerate().map(|(i, e)| (e.event_id.as_str(), i)).collect();

    let mut keyed: Vec<((usize, u8, u64, usize), Move)> = Vec::new();
    let mut last = 0usize;
    let mut seen = false;
    for r in &trace.records {
        for (i, m) in moves_for(m0, &log.run_id, r).into_iter().enumerate() {
            let key = match m.source_event_id.as_deref().and_then(|e| position.get(e)) {
                Some(&p) => {
                    last = last.max(p);
                    seen = true;
                    (p, 0, r.seq_no, i)
                }
                None if seen => (last, 1, r.seq_no, i),
                None => (0, 0, r.seq_no, i),
            };
            keyed.push((key, m));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(GtAlignment::from_system(keyed.into_iter().map(|(_, m)| m).collect()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationReport {
    pub code: String,
    pub occurrences: u64,
    pub responsible: BTreeSet<String>,
    pub affected: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub applications: BTreeMap<String, ApplicationReport>,
}

/// Per application: how often it occurred, which objects caused it and which
/// were drawn into the same firings. Identifiers created by the firing (a
/// role alias, say) are neither.
pub fn deviation_report(trace: &GroundTruthTrace) -> DeviationReport {
    let mut applications: BTreeMap<String, ApplicationReport> = occurrence_counts(trace)
        .into_iter()
        .map(|(app, (code, n))| {
            (app, ApplicationReport { code, occurrences: n, responsible: BTreeSet::new(), affected: BTreeSet::new() })
        })
        .collect();
    for r in &trace.records {
        let bound = r.binding.values.iter().filter(|(v, _)| !r.binding.fresh.contains(*v));
        if let Some(app) = r.provenance.origin.application_id() {
            if let Some(rep) = applications.get_mut(app) {
                if r.provenance.marks_occurrence {
                    for (v, id) in bound.clone() {
                        if r.provenance.responsible.contains(v) {
                            rep.responsible.insert(id.clone());
                        }
                    }
                    for (v, id) in bound.clone() {
                        if !r.provenance.responsible.contains(v) && !rep.responsible.contains(id) {
                            rep.affected.insert(id.clone());
                        }
                    }
                }
            }
        }
        for tag in &r.timing_tags {
            if let Some(rep) = applications.get_mut(&tag.application_id) {
                rep.affected.extend(bound.clone().map(|(_, id)| id.clone()));
            }
        }
    }
    for rep in applications.values_mut() {
        let responsible = rep.responsible.clone();
        rep.affected.retain(|o| !responsible.contains(o));
    }
    DeviationReport { applications }
}

fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Per-object edit distance over (kind, activity, object set), normalized by
/// the longer sequence and averaged over objects. 0 iff identical.
pub fn move_distance(candidate: &GtAlignment, gt: &GtAlignment) -> Result<f64, OracleError> {
    let (c, g) = (candidate.covered_events(), gt.covered_events());
    if c != g {
        let missing = g.difference(&c).count();
        let extra = c.difference(&g).count();
        return Err(OracleError::CoverageMismatch(format!("{missing} events missing, {extra} unknown")));
    }
    let objects: BTreeSet<&String> = candidate.per_object.keys().chain(gt.per_object.keys()).collect();
    if objects.is_empty() {
        return Ok(0.0);
    }
    let empty = Vec::new();
    let total: f64 = objects
        .iter()
        .map(|o| {
            let a: Vec<_> = candidate.per_object.get(*o).unwrap_or(&empty).iter().map(Move::key).collect();
            let b: Vec<_> = gt.per_object.get(*o).unwrap_or(&empty).iter().map(Move::key).collect();
            let longest = a.len().max(b.len());
            if longest == 0 {
                0.0
            } else {
                edit_distance(&a, &b) as f64 / longest as f64
            }
        })
        .sum();
    Ok(total / objects.len() as f64)
}

/// One line of the alignment interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterchangeMove {
    pub object: String,
    pub kind: MoveKind,
    pub activity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<String>,
    /// All objects of the move; defaults to `[object]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<Cause>,
}

pub fn write_alignment_jsonl(alignment: &GtAlignment) -> String {
    let mut out = String::new();
    for (object, moves) in &alignment.per_object {
        for m in moves {
            let line = InterchangeMove {
                object: object.clone(),
                kind: m.kind,
                activity: m.activity.clone(),
                event_id: m.source_event_id.clone(),
                transition: m.source_transition.clone(),
                objects: Some(m.objects.clone()),
                cause: m.cause.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
    }
    out
}

/// Reads per-object moves; the system view is left empty.
pub fn read_alignment_jsonl(text: &str) -> Result<GtAlignment, IoError> {
    let mut per_object: BTreeMap<String, Vec<Move>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: InterchangeMove = serde_json::from_str(line)
            .map_err(|e| IoError::Parse { line: i + 1, column: e.column(), message: e.to_string() })?;
        let objects = m.objects.unwrap_or_else(|| vec![m.object.clone()]);
        per_object.entry(m.object).or_default().push(Move {
            kind: m.kind,
            activity: m.activity,
            objects,
            source_event_id: m.event_id,
            source_transition: m.transition,
            cause: m.cause,
            discrepancy: None,
        });
    }
    Ok(GtAlignment { system: Vec::new(), per_object })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(kind: MoveKind, activity: &str, event: Option<&str>) -> Move {
        Move {
            kind,
            activity: activity.into(),
            objects: vec!["o1".into()],
            source_event_id: event.map(String::from),
            source_transition: None,
            cause: None,
            discrepancy: None,
        }
    }

    fn sync_run(n: usize) -> GtAlignment {
        let ids: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        GtAlignment::from_system(ids.iter().map(|e| mv(MoveKind::Synchronous, e, Some(e))).collect())
    }

    #[test]
    fn edit_distance_matches_hand_counts() {
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
        assert_eq!(edit_distance::<u8>(b"", b"abc"), 3);
        assert_eq!(edit_distance(b"abc", b"abc"), 0);
    }

    #[test]
    fn identical_alignments_have_distance_zero() {
        let gt = sync_run(5);
        assert_eq!(move_distance(&gt, &gt), Ok(0.0));
    }

    #[test]
    fn replacing_a_synchronous_move_by_a_pair_costs_two() {
        let gt = sync_run(4);
        let mut moves = gt.system.clone();
        moves[1].kind = MoveKind::Log;
        moves.insert(2, mv(MoveKind::Model, "e1", None));
        let cand = GtAlignment::from_system(moves);
        assert_eq!(move_distance(&cand, &gt), Ok(2.0 / 5.0));
    }

    #[test]
    fn all_log_moves_score_one() {
        let gt = sync_run(10);
        let moves = gt.system.iter().map(|m| Move { kind: MoveKind::Log, ..m.clone() }).collect();
        assert_eq!(move_distance(&GtAlignment::from_system(moves), &gt), Ok(1.0));
    }

    #[test]
    fn coverage_must_match() {
        let gt = sync_run(3);
        let cand = sync_run(2);
        assert!(matches!(move_distance(&cand, &gt), Err(OracleError::CoverageMismatch(_))));
    }

    #[test]
    fn interchange_round_trips() {
        let mut gt = sync_run(3);
        gt.system[0].cause = Some(Cause { code: "RI_in^e".into(), application_id: "a1".into() });
        gt = GtAlignment::from_system(gt.system);
        let back = read_alignment_jsonl(&write_alignment_jsonl(&gt)).unwrap();
        assert_eq!(back.per_object, gt.per_object);
        assert_eq!(move_distance(&back, &gt), Ok(0.0));
    }

    #[test]
    fn interchange_rejects_bad_lines() {
        assert!(matches!(read_alignment_jsonl("{\"object\": 1}\n"), Err(IoError::Parse { line: 1, .. })));
    }
}
