//! Acceptance suite: every criterion runs in sequence, prints one PASS/FAIL
//! line with its runtime, and the test fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use groundtruth::dataset::{self, enumerate_cells, generate, GenerateOptions};
use groundtruth::fixtures::{self, ENERGY_CONTRACTS, ENERGY_DEVIATION_WEIGHT};
use groundtruth::logio::{self, project_observed};
use groundtruth::oracle::{self, MoveKind};
use groundtruth::patterns::{instantiate, PatternApplication, PatternCode};
use groundtruth::sim::{self, sample_firing, GroundTruthTrace};
use groundtruth::transform::{apply, apply_sequence};
use groundtruth::{bounded_language, replay, Binding, Net};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn designated(cell: &dataset::Cell<'_>) -> PatternApplication {
    let apps: Vec<_> = cell.behavioral.applications.iter().chain(&cell.recording.applications).collect();
    assert_eq!(apps.len(), 1, "cell {} should carry one application", cell.id);
    apps[0].clone()
}

fn codes_in(trace: &GroundTruthTrace) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in &trace.records {
        if let Some(c) = &r.provenance.pattern_code {
            out.insert(c.clone());
        }
        out.extend(r.timing_tags.iter().map(|t| t.code.clone()));
    }
    out
}

fn package_dataset(dir: &Path) -> dataset::DatasetManifest {
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    generate(&net, &grid, dir, GenerateOptions { jobs: 0, keep_going: false }).unwrap()
}

fn dataset_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = package_dataset(dir.path());
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    let cells = enumerate_cells(&grid);
    assert_eq!(manifest.cells.len(), 12);
    assert_eq!(cells.len(), 12);
    for (cell, entry) in cells.iter().zip(&manifest.cells) {
        let log_text = fs::read_to_string(dir.path().join(&entry.files.log_jsonl)).unwrap();
        let log = logio::read_log_jsonl(&log_text).unwrap();
        let packages = log.objects.values().filter(|t| t.as_str() == "package").count();
        assert_eq!(packages, 2, "{}: packages", cell.id);

        let app = designated(cell);
        assert!(entry.occurrences[&app.application_id] >= 1, "{}: designated pattern never occurred", cell.id);
        let trace_text = fs::read_to_string(dir.path().join(&entry.files.trace)).unwrap();
        let trace = logio::read_trace(&trace_text, None).unwrap();
        let others: BTreeSet<_> = codes_in(&trace).into_iter().filter(|c| *c != app.code.to_string()).collect();
        assert!(others.is_empty(), "{}: foreign patterns {others:?}", cell.id);
    }
    drop(net);
}

fn sampling_law() {
    let enabled: Vec<(String, Binding)> =
        ["a", "b", "c"].iter().map(|t| (t.to_string(), Binding::default())).collect();
    let weights = BTreeMap::from([("a", 1.0), ("b", 1.0), ("c", 2.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000usize;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[sample_firing(&enabled, |t| weights[t], &mut rng).unwrap()] += 1;
    }
    let expected = [0.25, 0.25, 0.5];
    let mut chi2 = 0.0;
    for (c, p) in counts.iter().zip(expected) {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "frequency {freq} vs {p}");
        let e = p * n as f64;
        chi2 += (*c as f64 - e).powi(2) / e;
    }
    let p_value = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
    assert!(p_value > 0.001, "chi-square p = {p_value}");
}

fn additivity() {
    let cases = fixtures::additivity_cases();
    let covered: BTreeSet<PatternCode> = cases.iter().map(|c| c.application.code).collect();
    assert_eq!(covered.len(), 16, "every catalog pattern has a case");
    for case in cases {
        assert!(fixtures::identifier_count(&case.net.initial_marking) <= 6, "{}: too many identifiers", case.name);
        let fragment = instantiate(case.application.code, &case.application.params).unwrap();
        let after = apply(&case.net, &fragment, &case.application).unwrap();
        let before_lang = bounded_language(&case.net, 4).unwrap();
        let after_lang = bounded_language(&after, 4).unwrap();
        assert!(before_lang.len() > 1, "{}: base language is trivial", case.name);
        let missing = before_lang.difference(&after_lang).count();
        assert_eq!(missing, 0, "{}: {missing} sequences lost", case.name);
    }
}

fn is_element_superset(before: &Net, after: &Net) -> bool {
    before.places.iter().all(|p| after.places.contains(p))
        && before.transitions.iter().all(|t| after.transitions.contains(t))
        && before.arcs.iter().all(|a| after.arcs.contains(a))
        && before.initial_marking.iter().all(|(p, t, n)| after.initial_marking.count(p, t) >= n)
}

fn superset_and_isolation() {
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    let apps = fixtures::grid_applications(&grid);
    for app in apps.values() {
        let fragment = instantiate(app.code, &app.params).unwrap();
        let after = apply(&net, &fragment, app).unwrap();
        assert!(is_element_superset(&net, &after), "{} is not additive", app.application_id);
    }
    let (energy, energy_grid) = fixtures::fixture("energy_contract").unwrap();
    let energy_apps = fixtures::grid_applications(&energy_grid);
    let mut m = energy.clone();
    for app in energy_grid.behavioral_sets[0].applications.iter().chain(&energy_grid.recording_sets[0].applications) {
        let next = apply(&m, &instantiate(app.code, &app.params).unwrap(), app).unwrap();
        assert!(is_element_superset(&m, &next), "{} is not additive", app.application_id);
        m = next;
    }

    let pairs = [
        (&net, &apps, "bi3_skip_ring", "bi10_leave_half_loaded"),
        (&net, &apps, "ri_in_e_1", "ri_mi_e_load"),
        (&energy, &energy_apps, "bi2_agent_multitask", "bi11_slow_meter"),
    ];
    for (base, apps, a, b) in pairs {
        let (x, y) = (apps[a].clone(), apps[b].clone());
        let (ab, _) = apply_sequence(base, &[x.clone(), y.clone()]).unwrap();
        let (ba, _) = apply_sequence(base, &[y, x]).unwrap();
        assert_eq!(ab.canonical(), ba.canonical(), "{a} and {b} do not commute");
    }
}

fn collect_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir.join("cells")).unwrap() {
        let cell = entry.unwrap().path();
        for name in ["log.jsonl", "log.csv", "trace.gt.jsonl"] {
            let key = format!("{}/{name}", cell.file_name().unwrap().to_string_lossy());
            out.insert(key, fs::read(cell.join(name)).unwrap());
        }
    }
    out.insert("manifest.json".into(), fs::read(dir.join("manifest.json")).unwrap());
    out
}

fn determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    package_dataset(a.path());
    package_dataset(b.path());
    let (fa, fb) = (collect_outputs(a.path()), collect_outputs(b.path()));
    assert_eq!(fa.len(), 12 * 3 + 1);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert_eq!(
            groundtruth::digest::bytes_digest(bytes),
            groundtruth::digest::bytes_digest(&fb[name]),
            "{name} differs between runs"
        );
    }
}

fn frequency_control() {
    let (net, grid) = fixtures::fixture("energy_contract").unwrap();
    let cell = &enumerate_cells(&grid)[0];
    assert!(ENERGY_CONTRACTS >= 2000);
    assert_eq!(cell.config.config.deviation_weight, Some(ENERGY_DEVIATION_WEIGHT));
    let out = dataset::run_cell(&net, grid.master_seed, cell).unwrap();
    let receive = out.trace.records.iter().filter(|r| r.transition == "receive").count();
    assert_eq!(receive as u64, ENERGY_CONTRACTS);

    let mut fired: BTreeMap<&str, usize> = BTreeMap::new();
    let mut long_meter = 0usize;
    for r in &out.trace.records {
        *fired.entry(r.transition.as_str()).or_default() += 1;
        if r.transition == "add_meter" && r.timing_tags.iter().any(|t| t.code == "BI_11") {
            long_meter += 1;
        }
    }
    let created = |prefix: &str| -> usize {
        fired.iter().filter(|(t, _)| t.starts_with(prefix) && t.contains('#')).map(|(_, n)| *n).sum()
    };
    let base = |t: &str| fired.get(t).copied().unwrap_or(0);
    // (deviation firings, alternative firings) at each binary choice point.
    let points = [
        ("RI_mi^e add_customer", created("tau_missing-add_customer"), base("add_customer")),
        ("RI_in^o open_file", created("open_file_incorrect"), base("open_file")),
        ("RI_in^o cancel_phase1", created("cancel_phase1_incorrect"), base("cancel_phase1")),
        ("RI_in^p approve_first", created("approve_first_batch-log"), base("approve_first")),
        ("BI_2 reopened file", created("tau_early_release-p_reopened"), base("cancel_phase2")),
        ("BI_11 add_meter", long_meter, base("add_meter") - long_meter),
    ];
    let eps = ENERGY_DEVIATION_WEIGHT;
    let target = eps / (1.0 + eps);
    for (name, dev, alt) in points {
        assert!(dev + alt > 0, "{name}: choice point never reached");
        let frac = dev as f64 / (dev + alt) as f64;
        println!("    {name}: {dev}/{} = {frac:.4} (target {target:.4})", dev + alt);
        assert!((frac - target).abs() <= 0.02, "{name}: fraction {frac:.4} outside ±0.02 of {target:.4}");
    }
}

fn oracle_coverage() {
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    let mut clean_seen = 0;
    for cell in enumerate_cells(&grid) {
        let out = dataset::run_cell(&net, grid.master_seed, &cell).unwrap();
        let gt = oracle::gt_alignment(&net, &out.trace, &out.log).unwrap();
        let covered: Vec<&str> = gt
            .system
            .iter()
            .filter(|m| m.kind.has_log_side())
            .filter_map(|m| m.source_event_id.as_deref())
            .collect();
        let unique: BTreeSet<&str> = covered.iter().copied().collect();
        assert_eq!(covered.len(), unique.len(), "{}: an event is covered twice", cell.id);
        let events: BTreeSet<&str> = out.log.events.iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(unique, events, "{}: coverage", cell.id);

        let codes = codes_in(&out.trace);
        let timing_only = codes.iter().all(|c| c.parse::<PatternCode>().is_ok_and(|p| p.is_timing_only()));
        if timing_only {
            clean_seen += 1;
            assert!(gt.is_clean(), "{}: clean cell has non-synchronous moves", cell.id);
            assert_eq!(oracle::move_distance(&gt, &gt), Ok(0.0));
        }
        if cell.id == "none__ri_in_e_1__base" {
            let log_moves: Vec<_> = gt.system.iter().filter(|m| m.kind == MoveKind::Log).collect();
            let model_moves: Vec<_> = gt.system.iter().filter(|m| m.kind == MoveKind::Model).collect();
            assert_eq!(log_moves.len(), 1);
            assert_eq!(model_moves.len(), 1);
            assert_eq!(log_moves[0].activity, "order depot");
            assert_eq!(model_moves[0].activity, "order home");
            assert_eq!(log_moves[0].objects, model_moves[0].objects);
            assert!(log_moves[0].objects[0].starts_with("package"));
        }
    }

    // The base model alone is the canonical clean run.
    let (_, cfg_grid) = fixtures::fixture("package_delivery").unwrap();
    let mut cfg = cfg_grid.sim_configs[0].config.clone();
    cfg.seed = grid.master_seed;
    let trace = sim::run(&net, &cfg).unwrap();
    let log = project_observed(&trace, "base");
    let gt = oracle::gt_alignment(&net, &trace, &log).unwrap();
    assert!(gt.is_clean());
    assert_eq!(gt.system.len(), log.events.len());
    assert_eq!(oracle::move_distance(&gt, &gt), Ok(0.0));
    assert!(clean_seen >= 1);
}

fn replayability() {
    let (net, grid) = fixtures::fixture("package_delivery").unwrap();
    for cell in enumerate_cells(&grid) {
        let out = dataset::run_cell(&net, grid.master_seed, &cell).unwrap();
        assert!(replay(&out.m_l, &out.trace.firing_sequence()), "{}: trace does not replay", cell.id);
        assert_eq!(out.log, project_observed(&out.trace, &cell.id), "{}: log is not the projection", cell.id);
        let labeled = out.trace.records.iter().filter(|r| r.activity_label.is_some()).count();
        assert_eq!(out.log.events.len(), labeled, "{}: count law", cell.id);
    }
}

#[test]
fn acceptance_suite() {
    let criteria: [(&str, fn(), Duration); 8] = [
        ("1 dataset reproduction", dataset_reproduction, Duration::from_secs(10)),
        ("2 sampling law", sampling_law, Duration::from_secs(1)),
        ("3 additivity", additivity, Duration::from_secs(60)),
        ("4 superset and isolation", superset_and_isolation, Duration::from_secs(5)),
        ("5 determinism", determinism, Duration::from_secs(20)),
        ("6 frequency control", frequency_control, Duration::from_secs(60)),
        ("7 oracle coverage", oracle_coverage, Duration::from_secs(10)),
        ("8 replayability", replayability, Duration::from_secs(10)),
    ];
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let took = start.elapsed();
        let verdict = match (&result, took <= budget) {
            (Ok(()), true) => "PASS",
            (Ok(()), false) => "FAIL (too slow)",
            (Err(_), _) => "FAIL",
        };
        println!("criterion {name}: {verdict} in {:.2}s (limit {}s)", took.as_secs_f64(), budget.as_secs());
        if verdict != "PASS" {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
