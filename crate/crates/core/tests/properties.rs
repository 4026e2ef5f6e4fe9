use std::collections::{BTreeMap, BTreeSet};

use groundtruth::dataset::{enumerate_cells, run_cell};
use groundtruth::fixtures;
use groundtruth::logio::{event_id, project_observed};
use groundtruth::net::Transition;
use groundtruth::patterns::instantiate;
use groundtruth::semantics::transition_bindings;
use groundtruth::sim::{self, sample_firing, SimError};
use groundtruth::transform::{apply, apply_sequence, ElementKind};
use groundtruth::{enabled_bindings, fire, Binding, IdGenerator, Marking, Net};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every variable assignment over the marking's identifiers of the right
/// type, kept when all input tuples are present with enough multiplicity.
fn naive_bindings(net: &Net, marking: &Marking, t: &Transition) -> BTreeSet<BTreeMap<String, String>> {
    let inputs: Vec<_> = net.input_arcs(&t.id).collect();
    let mut vars: BTreeMap<String, String> = BTreeMap::new();
    for a in &inputs {
        for v in &a.inscription {
            vars.insert(v.name.clone(), v.object_type.clone());
        }
    }
    let mut by_type: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (p, tok, _) in marking.iter() {
        let place = net.place(p).unwrap();
        for (ty, id) in place.type_tuple.iter().zip(tok) {
            by_type.entry(ty.clone()).or_default().insert(id.clone());
        }
    }
    let names: Vec<&String> = vars.keys().collect();
    let mut out = BTreeSet::new();
    let mut assignment = BTreeMap::new();
    fn go(
        i: usize,
        names: &[&String],
        vars: &BTreeMap<String, String>,
        by_type: &BTreeMap<String, BTreeSet<String>>,
        assignment: &mut BTreeMap<String, String>,
        check: &dyn Fn(&BTreeMap<String, String>) -> bool,
        out: &mut BTreeSet<BTreeMap<String, String>>,
    ) {
        if i == names.len() {
            if check(assignment) {
                out.insert(assignment.clone());
            }
            return;
        }
        for id in by_type.get(&vars[names[i]]).into_iter().flatten() {
            assignment.insert(names[i].clone(), id.clone());
            go(i + 1, names, vars, by_type, assignment, check, out);
        }
        assignment.remove(names[i]);
    }
    let check = |asg: &BTreeMap<String, String>| {
        let mut need: BTreeMap<(String, Vec<String>), u32> = BTreeMap::new();
        for a in &inputs {
            let tok: Vec<String> = a.inscription.iter().map(|v| asg[&v.name].clone()).collect();
            *need.entry((a.source.clone(), tok)).or_default() += 1;
        }
        need.iter().all(|((p, tok), n)| marking.count(p, tok) >= *n)
            && t.distinct.iter().all(|(x, y)| asg.get(x) != asg.get(y))
    };
    go(0, &names, &vars, &by_type, &mut assignment, &check, &mut out);
    out
}

fn small_nets() -> Vec<Net> {
    let mut nets = Vec::new();
    for case in fixtures::additivity_cases() {
        let f = instantiate(case.application.code, &case.application.params).unwrap();
        nets.push(apply(&case.net, &f, &case.application).unwrap());
        nets.push(case.net);
    }
    nets
}

/// Follows `choices` through the net, checking conservation, types and
/// freshness at each firing.
fn walk(net: &Net, choices: &[usize]) -> Vec<Marking> {
    let mut marking = net.initial_marking.clone();
    let mut id_gen = IdGenerator::for_net(net);
    let initial_ids = marking.identifiers();
    let mut fresh_seen = BTreeSet::new();
    let mut visited = vec![marking.clone()];
    for &c in choices {
        let enabled = enabled_bindings(net, &marking);
        if enabled.is_empty() {
            break;
        }
        let (t, b) = &enabled[c % enabled.len()];
        let (next, record) = fire(net, &marking, t, b, &mut id_gen).unwrap();

        let mut expected = marking.clone();
        for (p, tok) in &record.consumed {
            assert!(expected.remove(p, tok, 1), "consumed token missing");
        }
        for (p, tok) in &record.produced {
            expected.add(p, tok.clone(), 1);
        }
        assert_eq!(next, expected, "conservation");
        for (p, tok, _) in next.iter() {
            assert_eq!(net.place(p).unwrap().type_tuple.len(), tok.len(), "type tuple arity");
        }
        for v in &record.binding.fresh {
            let id = &record.binding.values[v];
            assert!(!initial_ids.contains(id), "fresh id {id} reuses an initial identifier");
            assert!(fresh_seen.insert(id.clone()), "fresh id {id} generated twice");
        }
        marking = next;
        visited.push(marking.clone());
    }
    visited
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn firing_conserves_tokens_types_and_freshness(choices in prop::collection::vec(0usize..64, 1..40)) {
        let (pkg, _) = fixtures::fixture("package_delivery").unwrap();
        walk(&pkg, &choices);
        walk(&fixtures::energy_contract(), &choices);
    }

    #[test]
    fn bindings_match_naive_enumeration(net_index in 0usize..34, choices in prop::collection::vec(0usize..16, 0..6)) {
        let nets = small_nets();
        let net = &nets[net_index % nets.len()];
        for marking in walk(net, &choices) {
            for t in &net.transitions {
                let fast: BTreeSet<_> = transition_bindings(net, &marking, t).into_iter().map(|b| b.values).collect();
                prop_assert_eq!(fast, naive_bindings(net, &marking, t), "transition {}", t.id);
            }
            prop_assert_eq!(enabled_bindings(net, &marking), enabled_bindings(net, &marking));
        }
    }

    #[test]
    fn sampling_only_picks_positive_weights(weights in prop::collection::vec(0.0f64..4.0, 1..8), seed in any::<u64>()) {
        let enabled: Vec<(String, Binding)> = (0..weights.len()).map(|i| (format!("t{i}"), Binding::default())).collect();
        let w = |t: &str| weights[t[1..].parse::<usize>().unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match sample_firing(&enabled, w, &mut rng) {
            Ok(i) => prop_assert!(weights[i] > 0.0),
            Err(e) => {
                prop_assert_eq!(e, SimError::AllWeightsZero);
                prop_assert!(weights.iter().all(|w| *w == 0.0));
            }
        }
    }

    #[test]
    fn simulation_is_seed_deterministic_and_monotone(seed in 0u64..500) {
        let (net, grid) = fixtures::fixture("package_delivery").unwrap();
        let mut cfg = grid.sim_configs[0].config.clone();
        cfg.seed = seed;
        let a = sim::run(&net, &cfg).unwrap();
        let b = sim::run(&net, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.records.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert!(groundtruth::replay(&net, &a.firing_sequence()));
    }
}

#[test]
fn observed_events_are_sound_projections() {
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    for cell in enumerate_cells(&grid) {
        let out = run_cell(&net, grid.master_seed, &cell).unwrap();
        let by_id: BTreeMap<String, _> = out.trace.records.iter().map(|r| (event_id(&cell.id, r.seq_no), r)).collect();
        for e in &out.log.events {
            let r = by_id[&e.event_id];
            assert_eq!(r.activity_label.as_deref(), Some(e.activity.as_str()));
            let bound: BTreeSet<&String> = r.binding.values.values().collect();
            assert!(e.objects.iter().all(|o| bound.contains(o)), "{}: objects outside binding", e.event_id);
        }
        assert_eq!(project_observed(&out.trace, &cell.id), out.log);
    }
}

#[test]
fn every_created_element_is_attributed_once() {
    for name in fixtures::FIXTURE_NAMES {
        let (net, grid) = fixtures::fixture(name).unwrap();
        for cell in enumerate_cells(&grid) {
            let apps: Vec<_> =
                cell.behavioral.applications.iter().chain(&cell.recording.applications).cloned().collect();
            let (out, ledger) = apply_sequence(&net, &apps).unwrap();
            let base = net.element_ids();
            for id in out.element_ids().difference(&base) {
                assert_eq!(ledger.attribution(id).len(), 1, "{}: {id}", cell.id);
            }
            for e in ledger.entries.iter().filter(|e| e.kind == ElementKind::Transition) {
                let t = out.transition(&e.element).unwrap();
                assert_eq!(t.provenance.origin.application_id(), Some(e.application_id.as_str()));
            }
        }
    }
}

#[test]
fn created_provenance_matches_pattern_class() {
    for case in fixtures::additivity_cases() {
        let code = case.application.code;
        let f = instantiate(code, &case.application.params).unwrap();
        if code.is_timing_only() {
            assert!(f.created_places.is_empty() && f.created_transitions.is_empty(), "{code}");
        } else {
            assert!(!f.created_places.is_empty() || !f.created_transitions.is_empty(), "{code}");
        }
        let out = apply(&case.net, &f, &case.application).unwrap();
        let prefix = if code.is_recording() { "RI_" } else { "BI_" };
        for t in out.transitions.iter().filter(|t| !t.provenance.is_base()) {
            assert_eq!(t.provenance.pattern_code.as_deref(), Some(code.to_string().as_str()));
            assert!(code.to_string().starts_with(prefix));
            let recording = matches!(t.provenance.origin, groundtruth::net::Origin::Recording { .. });
            assert_eq!(recording, code.is_recording(), "{}", t.id);
        }
    }
}

#[test]
fn reapplying_under_another_id_creates_disjoint_elements() {
    for case in fixtures::additivity_cases() {
        let f = instantiate(case.application.code, &case.application.params).unwrap();
        let mut other = case.application.clone();
        other.application_id = format!("{}_again", other.application_id);
        let first = apply(&case.net, &f, &case.application).unwrap();
        let second = apply(&case.net, &f, &other).unwrap();
        let base = case.net.element_ids();
        let a: BTreeSet<_> = first.element_ids().difference(&base).cloned().collect();
        let b: BTreeSet<_> = second.element_ids().difference(&base).cloned().collect();
        assert!(a.is_disjoint(&b), "{}", case.name);
        assert_eq!(a.len(), b.len());
    }
}
