//! Stochastic, timed play-out of a net.
//!
//! Enabled firings are sampled from a categorical distribution over
//! transition weights; the weight of a transition is split uniformly across
//! its enabled bindings. Produced tokens may become available only after a
//! sampled delay. Arrivals and schedules fire designated transitions at fixed
//! instants instead of competing in the sampling.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::net::{Identifier, Marking, Net, ProvenanceTag, TimingEffect, Token, Transition};
use crate::semantics::{consume, plan_firing, transition_bindings, Binding, IdGenerator};

/// Name of the random generator and seeding scheme; part of every trace.
pub const RNG_NAME: &str = "chacha8-v1";
pub const DEFAULT_EPOCH: &str = "2024-01-01T00:00:00Z";

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("all enabled firings have weight zero")]
    AllWeightsZero,
}

/// Duration distribution in seconds. Samples are never negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist {
    Constant { value: f64 },
    /// Normal with the given variance; negative samples clamp to 0.
    Normal { mean: f64, variance: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Dist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match *self {
            Dist::Constant { value } => value,
            Dist::Normal { mean, variance } => match Normal::new(mean, variance.sqrt()) {
                Ok(d) => d.sample(rng),
                Err(_) => mean,
            },
            Dist::Exponential { rate } => match Exp::new(rate) {
                Ok(d) => d.sample(rng),
                Err(_) => 0.0,
            },
            Dist::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            Dist::LogNormal { mu, sigma } => match LogNormal::new(mu, sigma) {
                Ok(d) => d.sample(rng),
                Err(_) => mu.exp(),
            },
        };
        if x.is_finite() {
            x.max(0.0)
        } else {
            0.0
        }
    }

    fn check(&self) -> Result<(), String> {
        let ok = match *self {
            Dist::Constant { value } => value >= 0.0,
            Dist::Normal { mean, variance } => mean.is_finite() && variance >= 0.0,
            Dist::Exponential { rate } => rate > 0.0,
            Dist::Uniform { low, high } => low >= 0.0 && high >= low,
            Dist::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid distribution {self:?}"))
        }
    }
}

/// One piece of a piecewise-constant weight: `weight` applies from
/// `from_time` until the next piece starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPiece {
    pub from_time: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRule {
    pub transition: String,
    /// Restricts the rule to tokens produced into this place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
    pub delay: Dist,
}

/// Spontaneous arrivals: `transition` fires `count` times, the first at
/// `start`, then after each sampled inter-arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalStream {
    pub transition: String,
    #[serde(default)]
    pub start: f64,
    pub inter_arrival: Dist,
    pub count: u64,
}

/// `transition` fires at each of the listed instants (start/stop of a
/// resource shift, for example).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub transition: String,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Independent random stream for the same seed (grid cell index).
    #[serde(default)]
    pub stream: u64,
    /// Time-dependent weights; transitions not listed use their model weight.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, Vec<WeightPiece>>,
    /// Replaces the model weight of every deviation entry transition
    /// (non-base transitions whose weight differs from 1), and sets the
    /// probability of long durations to ε/(1+ε).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delays: Vec<DelayRule>,
    /// Production delay of created transitions that have no delay of their
    /// own and do not copy a base transition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_delay: Option<Dist>,
    /// Weight of waiting for the next timed event. It competes in the draw
    /// only while every enabled transition weighs less and such an event
    /// exists, so a lone low-weight firing is not forced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arrivals: Vec<ArrivalStream>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedules: Vec<Schedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firing_limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_horizon: Option<f64>,
    #[serde(default = "default_epoch")]
    pub timestamp_epoch: String,
}

fn default_epoch() -> String {
    DEFAULT_EPOCH.to_string()
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            seed,
            stream: 0,
            weights: BTreeMap::new(),
            deviation_weight: None,
            delays: Vec::new(),
            deviation_delay: None,
            idle_weight: None,
            arrivals: Vec::new(),
            schedules: Vec::new(),
            firing_limit: None,
            time_horizon: None,
            timestamp_epoch: default_epoch(),
        }
    }

    /// Checks the config against the net it will drive.
    pub fn validate(&self, net: &Net) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::ConfigInvalid(msg));
        if self.firing_limit.is_none() && self.time_horizon.is_none() && net.final_marking.is_none() {
            return bad("one of firing_limit, time_horizon or a final marking is required".into());
        }
        if self.time_horizon.is_some_and(|h| !(h >= 0.0)) {
            return bad("time_horizon must be >= 0".into());
        }
        if chrono::DateTime::parse_from_rfc3339(&self.timestamp_epoch).is_err() {
            return bad(format!("timestamp_epoch {} is not an RFC 3339 datetime", self.timestamp_epoch));
        }
        if self.deviation_weight.is_some_and(|w| !(w >= 0.0)) {
            return bad("deviation_weight must be >= 0".into());
        }
        if self.idle_weight.is_some_and(|w| !(w > 0.0) || !w.is_finite()) {
            return bad("idle_weight must be > 0".into());
        }
        let known = |t: &str| net.transition(t).is_some();
        for (t, pieces) in &self.weights {
            if !known(t) {
                return bad(format!("weights refer to unknown transition {t}"));
            }
            if pieces.iter().any(|p| !(p.weight >= 0.0) || !p.from_time.is_finite()) {
                return bad(format!("weights of {t} must be finite and >= 0"));
            }
            if pieces.windows(2).any(|w| w[0].from_time > w[1].from_time) {
                return bad(format!("weight pieces of {t} are not sorted by from_time"));
            }
        }
        for d in &self.delays {
            if !known(&d.transition) {
                return bad(format!("delay refers to unknown transition {}", d.transition));
            }
            d.delay.check().map_err(SimError::ConfigInvalid)?;
        }
        if let Some(d) = &self.deviation_delay {
            d.check().map_err(SimError::ConfigInvalid)?;
        }
        for a in &self.arrivals {
            if !known(&a.transition) {
                return bad(format!("arrival refers to unknown transition {}", a.transition));
            }
            a.inter_arrival.check().map_err(SimError::ConfigInvalid)?;
        }
        for s in &self.schedules {
            if !known(&s.transition) {
                return bad(format!("schedule refers to unknown transition {}", s.transition));
            }
            if s.times.iter().any(|t| !(*t >= 0.0)) {
                return bad(format!("schedule of {} has a negative time", s.transition));
            }
        }
        Ok(())
    }
}

/// Picks one entry of `enabled` with probability w(t)/Σw(t′), where the
/// weight of a transition is shared uniformly by its bindings.
pub fn sample_firing<R: Rng + ?Sized>(
    enabled: &[(String, Binding)],
    weight: impl Fn(&str) -> f64,
    rng: &mut R,
) -> Result<usize, SimError> {
    let mut per_transition: BTreeMap<&str, usize> = BTreeMap::new();
    for (t, _) in enabled {
        *per_transition.entry(t.as_str()).or_default() += 1;
    }
    let shares: Vec<f64> = enabled.iter().map(|(t, _)| weight(t).max(0.0) / per_transition[t.as_str()] as f64).collect();
    let total: f64 = shares.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::AllWeightsZero);
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in shares.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedObject {
    pub id: Identifier,
    pub object_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimingTag {
    pub application_id: String,
    pub code: String,
}

/// One firing of the play-out, linked to the model element that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq_no: u64,
    pub time: f64,
    /// Timestamp as it will be recorded (differs from `time` under coarsening).
    pub recorded_time: f64,
    pub transition: String,
    pub activity_label: Option<String>,
    pub binding: Binding,
    pub provenance: ProvenanceTag,
    pub consumed: Vec<(String, Token)>,
    pub produced: Vec<(String, Token)>,
    pub recorded_objects: Vec<RecordedObject>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing_tags: Vec<TimingTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalMarking,
    FiringLimit,
    TimeHorizon,
    Deadlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
    pub config_digest: String,
    /// Digest of the simulated model.
    pub model_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviating_model_digest: Option<String>,
    pub timestamp_epoch: String,
    pub termination: Termination,
    pub end_time: f64,
    /// Tokens still waiting for their delay to pass when the run stopped.
    pub pending_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrace {
    pub metadata: TraceMetadata,
    pub records: Vec<TraceRecord>,
}

impl GroundTruthTrace {
    /// The (transition, binding) sequence, as accepted by replay.
    pub fn firing_sequence(&self) -> Vec<(String, Binding)> {
        self.records.iter().map(|r| (r.transition.clone(), r.binding.clone())).collect()
    }
}

/// Non-negative f64 as an order-preserving integer key.
fn time_key(t: f64) -> u64 {
    t.max(0.0).to_bits()
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: f64,
    pub marking: Marking,
    /// (available_at, insertion order) → (place, token).
    pub pending: BTreeMap<(u64, u64), (String, Token)>,
    pub id_gen: IdGenerator,
    pub firings: u64,
    externals: BTreeMap<(u64, u64), String>,
    inserted: u64,
    rng: ChaCha8Rng,
}

/// Precomputed, per-run view of the net and config.
struct Engine<'a> {
    net: &'a Net,
    config: &'a SimConfig,
    external: BTreeSet<&'a str>,
    breakpoints: Vec<f64>,
    var_types: BTreeMap<&'a str, BTreeMap<String, String>>,
    timing: BTreeMap<&'a str, Vec<&'a crate::net::TimingAnnotation>>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Net, config: &'a SimConfig) -> Self {
        let external = config
            .arrivals
            .iter()
            .map(|a| a.transition.as_str())
            .chain(config.schedules.iter().map(|s| s.transition.as_str()))
            .collect();
        let mut breakpoints: Vec<f64> = config.weights.values().flatten().map(|p| p.from_time).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let var_types = net
            .transitions
            .iter()
            .map(|t| {
                let types = net.variables(&t.id).into_iter().map(|(k, v)| (k, v.object_type)).collect();
                (t.id.as_str(), types)
            })
            .collect();
        let mut timing: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for a in &net.timing {
            timing.entry(a.transition.as_str()).or_default().push(a);
        }
        Engine { net, config, external, breakpoints, var_types, timing }
    }

    fn model_weight(&self, t: &Transition) -> f64 {
        match self.config.deviation_weight {
            Some(eps) if !t.provenance.is_base() && t.weight != 1.0 => eps,
            _ => t.weight,
        }
    }

    fn weight(&self, t: &str, now: f64) -> f64 {
        let Some(tr) = self.net.transition(t) else { return 0.0 };
        match self.config.weights.get(t) {
            Some(pieces) => {
                pieces.iter().rev().find(|p| p.from_time <= now).map(|p| p.weight).unwrap_or_else(|| self.model_weight(tr))
            }
            None => self.model_weight(tr),
        }
    }

    /// `read` marks a token the firing consumed from and returns to `place`;
    /// such tokens never take the default deviation delay.
    fn configured_delay(&self, t: &Transition, place: &str, read: bool) -> Option<&'a Dist> {
        let lookup = |tid: &str| {
            let rules = self.config.delays.iter().filter(|d| d.transition == tid);
            let specific = rules.clone().find(|d| d.place.as_deref() == Some(place));
            specific.or_else(|| rules.clone().find(|d| d.place.is_none())).map(|d| &d.delay)
        };
        // Created copies inherit the delays configured for the original.
        lookup(&t.id).or_else(|| match t.provenance.shadow_of.as_deref() {
            Some(original) => lookup(original),
            None if !t.provenance.is_base() && !read => self.config.deviation_delay.as_ref(),
            None => None,
        })
    }

    fn start(&self) -> SimState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.config.stream);
        let mut state = SimState {
            clock: 0.0,
            marking: self.net.initial_marking.clone(),
            pending: BTreeMap::new(),
            id_gen: IdGenerator::for_net(self.net),
            firings: 0,
            externals: BTreeMap::new(),
            inserted: 0,
            rng,
        };
        for a in &self.config.arrivals {
            let mut t = a.start;
            for i in 0..a.count {
                if i > 0 {
                    t += a.inter_arrival.sample(&mut state.rng);
                }
                state.push_external(t, &a.transition);
            }
        }
        for s in &self.config.schedules {
            for &t in &s.times {
                state.push_external(t, &s.transition);
            }
        }
        state
    }

    fn fire(&self, state: &mut SimState, transition: &str, binding: &Binding) -> TraceRecord {
        let t = self.net.transition(transition).expect("enabled transition exists");
        let record = plan_firing(self.net, transition, binding, &mut state.id_gen).expect("enabled binding plans");
        let consumed_ok = consume(&mut state.marking, &record);
        debug_assert!(consumed_ok);
        let now = state.clock;

        let mut tags = BTreeSet::new();
        let mut recorded_time = now;
        let mut override_delay = None;
        let mut long = None;
        for a in self.timing.get(transition).into_iter().flatten() {
            let tag = TimingTag { application_id: a.application_id.clone(), code: a.code.clone() };
            match &a.effect {
                TimingEffect::Coarsen { window } => {
                    recorded_time = (recorded_time / window).floor() * window;
                    tags.insert(tag);
                }
                TimingEffect::Delay { delay } => {
                    override_delay = Some(delay);
                    tags.insert(tag);
                }
                TimingEffect::LongDuration { probability, delay } => {
                    let p = match self.config.deviation_weight {
                        Some(eps) => eps / (1.0 + eps),
                        None => *probability,
                    };
                    if state.rng.random::<f64>() < p {
                        long = Some(delay);
                        tags.insert(tag);
                    }
                }
            }
        }
        // One extra delay per firing, shared by all produced tokens.
        let extra = long.map(|d| d.sample(&mut state.rng)).unwrap_or(0.0);
        let mut reads: BTreeMap<(&str, &Token), usize> = BTreeMap::new();
        for (p, tok) in &record.consumed {
            *reads.entry((p.as_str(), tok)).or_default() += 1;
        }
        for (place, token) in &record.produced {
            let read = match reads.get_mut(&(place.as_str(), token)) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    true
                }
                _ => false,
            };
            let dist = override_delay.or_else(|| self.configured_delay(t, place, read));
            let delay = dist.map(|d| d.sample(&mut state.rng)).unwrap_or(0.0) + extra;
            if delay > 0.0 {
                let key = (time_key(now + delay), state.inserted);
                state.inserted += 1;
                state.pending.insert(key, (place.clone(), token.clone()));
            } else {
                state.marking.add(place, token.clone(), 1);
            }
        }

        let types = &self.var_types[transition];
        let recorded_objects = t
            .record_spec
            .iter()
            .filter_map(|v| {
                record.binding.get(v).map(|id| RecordedObject {
                    id: id.clone(),
                    object_type: types.get(v).cloned().unwrap_or_default(),
                })
            })
            .collect();
        let seq_no = state.firings;
        state.firings += 1;
        TraceRecord {
            seq_no,
            time: now,
            recorded_time,
            transition: transition.to_string(),
            activity_label: t.activity_label.clone(),
            binding: record.binding,
            provenance: t.provenance.clone(),
            consumed: record.consumed,
            produced: record.produced,
            recorded_objects,
            timing_tags: tags.into_iter().collect(),
        }
    }

    fn sampling_candidates(&self, marking: &Marking) -> Vec<(String, Binding)> {
        let mut ts: Vec<&Transition> =
            self.net.transitions.iter().filter(|t| !self.external.contains(t.id.as_str())).collect();
        ts.sort_by(|a, b| a.id.cmp(&b.id));
        ts.into_iter()
            .flat_map(|t| transition_bindings(self.net, marking, t).into_iter().map(move |b| (t.id.clone(), b)))
            .collect()
    }

    /// Advances the run by one firing or one clock jump.
    fn step(&self, state: &mut SimState) -> Step {
        state.materialize();
        if let Some(fm) = &self.net.final_marking {
            if state.pending.is_empty() && state.marking == *fm {
                return Step::Done(Termination::FinalMarking);
            }
        }
        if self.config.firing_limit.is_some_and(|l| state.firings >= l) {
            return Step::Done(Termination::FiringLimit);
        }
        if let Some((&key, _)) = state.externals.first_key_value() {
            if f64::from_bits(key.0) <= state.clock {
                let transition = state.externals.remove(&key).expect("key exists");
                let t = self.net.transition(&transition).expect("validated transition");
                let bindings = transition_bindings(self.net, &state.marking, t);
                if bindings.is_empty() {
                    return Step::Idle;
                }
                let pick = state.rng.random_range(0..bindings.len());
                return Step::Fired(Box::new(self.fire(state, &transition, &bindings[pick])));
            }
        }
        let enabled = self.sampling_candidates(&state.marking);
        let next_pending = state.pending.keys().next().map(|k| f64::from_bits(k.0));
        let next_external = state.externals.keys().next().map(|k| f64::from_bits(k.0));
        if !enabled.is_empty() {
            let now = state.clock;
            let idle = self.config.idle_weight.filter(|&w| {
                (next_pending.is_some() || next_external.is_some())
                    && enabled.iter().all(|(t, _)| self.weight(t, now) < w)
            });
            let waits = idle.is_some_and(|w| {
                let weights: BTreeMap<&str, f64> =
                    enabled.iter().map(|(t, _)| (t.as_str(), self.weight(t, now).max(0.0))).collect();
                let total: f64 = weights.values().sum();
                state.rng.random::<f64>() * (total + w) >= total
            });
            if !waits {
                if let Ok(i) = sample_firing(&enabled, |t| self.weight(t, now), &mut state.rng) {
                    let (t, b) = &enabled[i];
                    return Step::Fired(Box::new(self.fire(state, t, b)));
                }
            }
        }
        let next_breakpoint = if enabled.is_empty() {
            None
        } else {
            self.breakpoints.iter().copied().find(|b| *b > state.clock)
        };
        let next = [next_pending, next_external, next_breakpoint].into_iter().flatten().min_by(f64::total_cmp);
        match next {
            None => Step::Done(Termination::Deadlock),
            Some(t) if self.config.time_horizon.is_some_and(|h| t > h) => Step::Done(Termination::TimeHorizon),
            Some(t) => {
                state.clock = state.clock.max(t);
                Step::Idle
            }
        }
    }
}

enum Step {
    Fired(Box<TraceRecord>),
    Idle,
    Done(Termination),
}

impl SimState {
    fn push_external(&mut self, time: f64, transition: &str) {
        self.externals.insert((time_key(time), self.inserted), transition.to_string());
        self.inserted += 1;
    }

    fn materialize(&mut self) {
        while let Some(entry) = self.pending.first_entry() {
            if f64::from_bits(entry.key().0) > self.clock {
                break;
            }
            let (place, token) = entry.remove();
            self.marking.add(&place, token, 1);
        }
    }
}

/// Plays out `net` under `config` until a stopping condition holds.
pub fn run(net: &Net, config: &SimConfig) -> Result<GroundTruthTrace, SimError> {
    config.validate(net)?;
    let engine = Engine::new(net, config);
    let mut state = engine.start();
    let mut records = Vec::new();
    let termination = loop {
        match engine.step(&mut state) {
            Step::Fired(r) => records.push(*r),
            Step::Idle => {}
            Step::Done(t) => break t,
        }
    };
    Ok(GroundTruthTrace {
        metadata: TraceMetadata {
            seed: config.seed,
            stream: config.stream,
            rng: RNG_NAME.to_string(),
            config_digest: digest::of(config),
            model_digest: digest::of(&net.canonical()),
            base_model_digest: None,
            deviating_model_digest: None,
            timestamp_epoch: config.timestamp_epoch.clone(),
            termination,
            end_time: state.clock,
            pending_tokens: state.pending.len() as u64,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetBuilder, RoleHint};
    use crate::semantics::replay;

    fn b() -> Binding {
        Binding::default()
    }

    #[test]
    fn single_enabled_firing_is_always_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enabled = vec![("a".to_string(), b())];
        for _ in 0..100 {
            assert_eq!(sample_firing(&enabled, |_| 0.3, &mut rng), Ok(0));
        }
    }

    #[test]
    fn zero_weights_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enabled = vec![("a".to_string(), b())];
        assert_eq!(sample_firing(&enabled, |_| 0.0, &mut rng), Err(SimError::AllWeightsZero));
    }

    #[test]
    fn weights_one_to_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let enabled = vec![("a".to_string(), b()), ("b".to_string(), b())];
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| sample_firing(&enabled, |t| if t == "a" { 1.0 } else { 3.0 }, &mut rng) == Ok(0))
            .count();
        let p = hits as f64 / n as f64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((p - 0.25).abs() < 4.0 * sigma, "p(a) = {p}");
    }

    #[test]
    fn negative_normal_samples_clamp_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dist::Normal { mean: -10.0, variance: 1.0 };
        assert!((0..100).all(|_| d.sample(&mut rng) == 0.0));
        let d = Dist::Normal { mean: 900.0, variance: 360.0 * 360.0 };
        assert!((0..1000).all(|_| d.sample(&mut rng) >= 0.0));
    }

    fn pick_net() -> Net {
        NetBuilder::new("pick")
            .object_type("package")
            .object_type("warehouse_employee")
            .place("p_new", &["package"], RoleHint::Regular)
            .place("p_we", &["warehouse_employee"], RoleHint::ResourceIdle)
            .place("p_picked", &["package", "warehouse_employee"], RoleHint::Correlation)
            .transition("pick", Some("pick package"), &["p", "w"])
            .arc("p_new", "pick", &["p:package"])
            .arc("p_we", "pick", &["w:warehouse_employee"])
            .arc("pick", "p_picked", &["p:package", "w:warehouse_employee"])
            .tokens("p_new", &[&["p1"]])
            .tokens("p_we", &[&["we1"]])
            .build()
    }

    #[test]
    fn config_needs_a_stopping_condition() {
        let net = pick_net();
        let cfg = SimConfig::new(1);
        assert!(matches!(run(&net, &cfg), Err(SimError::ConfigInvalid(_))));
    }

    #[test]
    fn firing_limit_zero_gives_empty_trace() {
        let mut cfg = SimConfig::new(1);
        cfg.firing_limit = Some(0);
        let trace = run(&pick_net(), &cfg).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.metadata.termination, Termination::FiringLimit);
    }

    #[test]
    fn delayed_token_is_pending_then_available() {
        let mut cfg = SimConfig::new(5);
        cfg.firing_limit = Some(10);
        cfg.delays.push(DelayRule {
            transition: "pick".into(),
            place: None,
            delay: Dist::Normal { mean: 900.0, variance: 360.0 * 360.0 },
        });
        let net = pick_net();
        let engine = Engine::new(&net, &cfg);
        let mut state = engine.start();
        assert!(matches!(engine.step(&mut state), Step::Fired(_)));
        assert_eq!(state.pending.len() + state.marking.place_tokens("p_picked").count(), 1);
        if let Some((&(k, _), _)) = state.pending.first_key_value() {
            assert!(f64::from_bits(k) >= 0.0);
            // Nothing enabled: the clock jumps to the availability time.
            assert!(matches!(engine.step(&mut state), Step::Idle));
            assert_eq!(state.clock, f64::from_bits(k));
            state.materialize();
            assert_eq!(state.marking.count("p_picked", &vec!["p1".into(), "we1".into()]), 1);
        }
    }

    #[test]
    fn clock_jumps_to_pending_without_record() {
        let mut cfg = SimConfig::new(5);
        cfg.firing_limit = Some(10);
        let net = pick_net();
        let engine = Engine::new(&net, &cfg);
        let mut state = engine.start();
        state.marking = Marking::new();
        state.pending.insert((time_key(30.0), 0), ("p_new".into(), vec!["p9".into()]));
        assert!(matches!(engine.step(&mut state), Step::Idle));
        assert_eq!(state.clock, 30.0);
    }

    #[test]
    fn zero_weight_window_disables_transition() {
        let mut cfg = SimConfig::new(2);
        cfg.firing_limit = Some(1);
        cfg.weights.insert("pick".into(), vec![WeightPiece { from_time: 0.0, weight: 0.0 }, WeightPiece {
            from_time: 3600.0,
            weight: 1.0,
        }]);
        let trace = run(&pick_net(), &cfg).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].time, 3600.0);
    }

    #[test]
    fn arrivals_fire_source_transitions() {
        let net = NetBuilder::new("arrive")
            .object_type("package")
            .place("p_new", &["package"], RoleHint::Regular)
            .silent("arrive")
            .arc("arrive", "p_new", &["!p:package"])
            .build();
        let mut cfg = SimConfig::new(4);
        cfg.time_horizon = Some(1e6);
        cfg.arrivals.push(ArrivalStream {
            transition: "arrive".into(),
            start: 10.0,
            inter_arrival: Dist::Exponential { rate: 0.01 },
            count: 3,
        });
        let trace = run(&net, &cfg).unwrap();
        assert_eq!(trace.records.len(), 3);
        assert_eq!(trace.records[0].time, 10.0);
        assert!(trace.records.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(trace.metadata.termination, Termination::Deadlock);
        assert!(replay(&net, &trace.firing_sequence()));
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = SimConfig::new(7);
        cfg.firing_limit = Some(5);
        let a = serde_json::to_vec(&run(&pick_net(), &cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&run(&pick_net(), &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
