//! Dataset generation over a grid of behavioral sets × recording sets ×
//! simulation configs.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::digest;
use crate::logio::{self, project_observed, ObservedLog};
use crate::net::Net;
use crate::patterns::PatternApplication;
use crate::sim::{self, GroundTruthTrace, SimConfig, Termination};
use crate::transform::{apply_sequence, ProvenanceLedger};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cell {cell}: {message}")]
    Cell { cell: String, message: String },
    #[error(transparent)]
    Io(#[from] logio::IoError),
    #[error("{0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSet {
    pub id: String,
    #[serde(default)]
    pub applications: Vec<PatternApplication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSet {
    pub id: String,
    #[serde(default)]
    pub applications: Vec<PatternApplication>,
    /// Behavioral set ids this set is combined with; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applies_to: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub id: String,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub master_seed: u64,
    pub behavioral_sets: Vec<ApplicationSet>,
    pub recording_sets: Vec<RecordingSet>,
    pub sim_configs: Vec<ConfigEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell<'a> {
    pub index: usize,
    pub id: String,
    pub behavioral: &'a ApplicationSet,
    pub recording: &'a RecordingSet,
    pub config: &'a ConfigEntry,
}

impl Cell<'_> {
    /// Random stream of the cell: a function of its id only, so adding sets
    /// or configs leaves existing cells unchanged.
    pub fn stream(&self) -> u64 {
        let h = Sha256::digest(self.id.as_bytes());
        u64::from_be_bytes(h[..8].try_into().expect("8 bytes"))
    }

    pub fn sim_config(&self, master_seed: u64) -> SimConfig {
        let mut cfg = self.config.config.clone();
        cfg.seed = master_seed;
        cfg.stream = self.stream();
        cfg
    }
}

/// Cells in (behavioral, recording, config) order, skipping recording sets
/// restricted to other behavioral sets.
pub fn enumerate_cells(grid: &GridSpec) -> Vec<Cell<'_>> {
    let mut out = Vec::new();
    for b in &grid.behavioral_sets {
        for r in &grid.recording_sets {
            if r.applies_to.as_ref().is_some_and(|ids| !ids.contains(&b.id)) {
                continue;
            }
            for c in &grid.sim_configs {
                out.push(Cell { index: out.len(), id: format!("{}__{}__{}", b.id, r.id, c.id), behavioral: b, recording: r, config: c });
            }
        }
    }
    out
}

/// Everything produced for one cell, in memory.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub cell_id: String,
    pub index: usize,
    pub m_s: Net,
    pub m_l: Net,
    pub ledger: ProvenanceLedger,
    pub trace: GroundTruthTrace,
    pub log: ObservedLog,
    /// Occurrences per application id (every application of the cell listed).
    pub occurrences: BTreeMap<String, u64>,
    /// Occurrences per pattern code.
    pub code_occurrences: BTreeMap<String, u64>,
}

/// Deviation occurrences per application: firings of occurrence-marking
/// created transitions plus timing effects that were applied.
pub fn occurrence_counts(trace: &GroundTruthTrace) -> BTreeMap<String, (String, u64)> {
    let mut out: BTreeMap<String, (String, u64)> = BTreeMap::new();
    for r in &trace.records {
        if r.provenance.marks_occurrence {
            if let (Some(app), Some(code)) = (r.provenance.origin.application_id(), &r.provenance.pattern_code) {
                out.entry(app.to_string()).or_insert_with(|| (code.clone(), 0)).1 += 1;
            }
        }
        for tag in &r.timing_tags {
            out.entry(tag.application_id.clone()).or_insert_with(|| (tag.code.clone(), 0)).1 += 1;
        }
    }
    out
}

pub fn run_cell(m0: &Net, master_seed: u64, cell: &Cell<'_>) -> Result<CellOutput, DatasetError> {
    let fail = |message: String| DatasetError::Cell { cell: cell.id.clone(), message };
    let (m_s, mut ledger) = apply_sequence(m0, &cell.behavioral.applications).map_err(|e| fail(e.to_string()))?;
    let (m_l, rec_ledger) = apply_sequence(&m_s, &cell.recording.applications).map_err(|e| fail(e.to_string()))?;
    ledger.entries.extend(rec_ledger.entries);
    let cfg = cell.sim_config(master_seed);
    let mut trace = sim::run(&m_l, &cfg).map_err(|e| fail(e.to_string()))?;
    trace.metadata.base_model_digest = Some(digest::of(&m0.canonical()));
    trace.metadata.deviating_model_digest = Some(digest::of(&m_s.canonical()));
    let log = project_observed(&trace, &cell.id);

    let mut occurrences: BTreeMap<String, u64> = BTreeMap::new();
    let mut code_occurrences: BTreeMap<String, u64> = BTreeMap::new();
    for app in cell.behavioral.applications.iter().chain(&cell.recording.applications) {
        occurrences.insert(app.application_id.clone(), 0);
        code_occurrences.insert(app.code.to_string(), 0);
    }
    for (app, (code, n)) in occurrence_counts(&trace) {
        *occurrences.entry(app).or_default() += n;
        *code_occurrences.entry(code).or_default() += n;
    }
    Ok(CellOutput { cell_id: cell.id.clone(), index: cell.index, m_s, m_l, ledger, trace, log, occurrences, code_occurrences })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFiles {
    pub model_ms: String,
    pub model_ml: String,
    pub ledger: String,
    pub trace: String,
    pub log_jsonl: String,
    pub log_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub cell_id: String,
    pub behavioral_set: String,
    pub recording_set: String,
    pub config: String,
    pub seed: u64,
    pub stream: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Digests of M0, M^S, M^L and of every written file.
    #[serde(default)]
    pub digests: BTreeMap<String, String>,
    #[serde(default)]
    pub files: CellFiles,
    #[serde(default)]
    pub events: usize,
    #[serde(default)]
    pub firings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default)]
    pub occurrences: BTreeMap<String, u64>,
    #[serde(default)]
    pub code_occurrences: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub master_seed: u64,
    pub rng: String,
    pub m0_digest: String,
    pub grid_digest: String,
    pub cells: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub keep_going: bool,
}

fn write_cell(out_dir: &Path, out: &CellOutput) -> Result<(CellFiles, BTreeMap<String, String>), DatasetError> {
    let rel = |name: &str| format!("cells/{}/{}", out.cell_id, name);
    let files = CellFiles {
        model_ms: rel("model_ms.json"),
        model_ml: rel("model_ml.json"),
        ledger: rel("ledger.json"),
        trace: rel("trace.gt.jsonl"),
        log_jsonl: rel("log.jsonl"),
        log_csv: rel("log.csv"),
    };
    let contents = [
        ("model_ms", &files.model_ms, logio::write_net(&out.m_s)),
        ("model_ml", &files.model_ml, logio::write_net(&out.m_l)),
        ("ledger", &files.ledger, serde_json::to_string_pretty(&out.ledger).expect("serializable") + "\n"),
        ("trace", &files.trace, logio::write_trace(&out.trace)),
        ("log_jsonl", &files.log_jsonl, logio::write_log_jsonl(&out.log)),
        ("log_csv", &files.log_csv, logio::write_log_csv(&out.log)),
    ];
    let mut digests = BTreeMap::new();
    for (key, path, text) in contents {
        logio::write_atomic(&out_dir.join(path), text.as_bytes())?;
        digests.insert(format!("{key}_file"), digest::bytes_digest(text.as_bytes()));
    }
    digests.insert("m_s".into(), digest::of(&out.m_s.canonical()));
    digests.insert("m_l".into(), digest::of(&out.m_l.canonical()));
    Ok((files, digests))
}

/// Runs every cell and writes models, traces, logs and `manifest.json`
/// under `out_dir`.
pub fn generate(m0: &Net, grid: &GridSpec, out_dir: &Path, opts: GenerateOptions) -> Result<DatasetManifest, DatasetError> {
    let cells = enumerate_cells(grid);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().map_err(|e| DatasetError::Pool(e.to_string()))?;
    let results: Vec<Result<ManifestEntry, DatasetError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let mut entry = ManifestEntry {
                    index: cell.index,
                    cell_id: cell.id.clone(),
                    behavioral_set: cell.behavioral.id.clone(),
                    recording_set: cell.recording.id.clone(),
                    config: cell.config.id.clone(),
                    seed: grid.master_seed,
                    stream: cell.stream(),
                    status: CellStatus::Ok,
                    error: None,
                    digests: BTreeMap::new(),
                    files: CellFiles::default(),
                    events: 0,
                    firings: 0,
                    termination: None,
                    occurrences: BTreeMap::new(),
                    code_occurrences: BTreeMap::new(),
                };
                let out = run_cell(m0, grid.master_seed, cell).and_then(|out| {
                    let written = write_cell(out_dir, &out)?;
                    Ok((out, written))
                });
                match out {
                    Ok((out, (files, digests))) => {
                        entry.digests = digests;
                        entry.digests.insert("m0".into(), digest::of(&m0.canonical()));
                        entry.files = files;
                        entry.events = out.log.events.len();
                        entry.firings = out.trace.records.len();
                        entry.termination = Some(out.trace.metadata.termination);
                        entry.occurrences = out.occurrences;
                        entry.code_occurrences = out.code_occurrences;
                        Ok(entry)
                    }
                    Err(e) if opts.keep_going => {
                        entry.status = CellStatus::Failed;
                        entry.error = Some(e.to_string());
                        Ok(entry)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let mut entries = Vec::with_capacity(results.len());
    for r in results {
        entries.push(r?);
    }
    let manifest = DatasetManifest {
        schema_version: crate::net::SCHEMA_VERSION.to_string(),
        master_seed: grid.master_seed,
        rng: sim::RNG_NAME.to_string(),
        m0_digest: digest::of(&m0.canonical()),
        grid_digest: digest::of(grid),
        cells: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    logio::write_atomic(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetBuilder, RoleHint};
    use crate::patterns::PatternCode;

    fn set(id: &str, apps: Vec<PatternApplication>) -> ApplicationSet {
        ApplicationSet { id: id.into(), applications: apps }
    }

    fn rec(id: &str, apps: Vec<PatternApplication>, applies_to: Option<Vec<&str>>) -> RecordingSet {
        RecordingSet {
            id: id.into(),
            applications: apps,
            applies_to: applies_to.map(|v| v.into_iter().map(String::from).collect()),
        }
    }

    fn cfg(id: &str) -> ConfigEntry {
        let mut c = SimConfig::new(0);
        c.firing_limit = Some(50);
        ConfigEntry { id: id.into(), config: c }
    }

    fn grid(n: usize, m: usize, k: usize) -> GridSpec {
        GridSpec {
            master_seed: 1,
            behavioral_sets: (0..n).map(|i| set(&format!("b{i}"), vec![])).collect(),
            recording_sets: (0..m).map(|i| rec(&format!("r{i}"), vec![], None)).collect(),
            sim_configs: (0..k).map(|i| cfg(&format!("c{i}"))).collect(),
        }
    }

    #[test]
    fn cells_are_the_product() {
        let g = grid(7, 2, 1);
        let cells = enumerate_cells(&g);
        assert_eq!(cells.len(), 14);
        assert_eq!(cells[0].id, "b0__r0__c0");
        assert_eq!(cells[1].id, "b0__r1__c0");
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn restricted_recording_sets_skip_other_behaviors() {
        let mut g = grid(3, 1, 1);
        g.recording_sets.push(rec("only_b0", vec![], Some(vec!["b0"])));
        assert_eq!(enumerate_cells(&g).len(), 4);
    }

    #[test]
    fn adding_a_config_keeps_existing_streams() {
        let g1 = grid(2, 1, 1);
        let g2 = grid(2, 1, 2);
        let s1: Vec<u64> = enumerate_cells(&g1).iter().map(Cell::stream).collect();
        let c2 = enumerate_cells(&g2);
        for (i, c) in enumerate_cells(&g1).iter().enumerate() {
            let same = c2.iter().find(|x| x.id == c.id).unwrap();
            assert_eq!(same.stream(), s1[i]);
        }
    }

    fn net() -> Net {
        NetBuilder::new("d")
            .object_type("package")
            .place("a", &["package"], RoleHint::Regular)
            .place("b", &["package"], RoleHint::Regular)
            .transition("ring", Some("ring"), &["p"])
            .arc("a", "ring", &["p:package"])
            .arc("ring", "b", &["p:package"])
            .tokens("a", &[&["p1"], &["p2"]])
            .build()
    }

    #[test]
    fn empty_cell_is_clean() {
        let g = grid(1, 1, 1);
        let cells = enumerate_cells(&g);
        let out = run_cell(&net(), 1, &cells[0]).unwrap();
        assert_eq!(out.log.events.len(), 2);
        assert!(out.occurrences.is_empty());
    }

    #[test]
    fn generate_writes_manifest_and_files() {
        let mut g = grid(1, 1, 1);
        let mut skip = PatternApplication::new("skip", PatternCode::SkipActivity, &[("t", "ring")]);
        skip.params.insert("weight".into(), serde_json::json!(100.0));
        g.behavioral_sets.push(set("skip", vec![skip]));
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&net(), &g, dir.path(), GenerateOptions { jobs: 2, keep_going: false }).unwrap();
        assert_eq!(m.cells.len(), 2);
        assert!(dir.path().join("manifest.json").exists());
        for c in &m.cells {
            let text = std::fs::read_to_string(dir.path().join(&c.files.log_jsonl)).unwrap();
            assert_eq!(c.digests["log_jsonl_file"], digest::bytes_digest(text.as_bytes()));
        }
        assert!(m.cells[1].occurrences["skip"] >= 1);
    }

    #[test]
    fn failing_cell_aborts_unless_keep_going() {
        let mut g = grid(1, 1, 1);
        g.behavioral_sets.push(set("bad", vec![PatternApplication::new("x", PatternCode::SkipActivity, &[("t", "nope")])]));
        let dir = tempfile::tempdir().unwrap();
        assert!(generate(&net(), &g, dir.path(), GenerateOptions::default()).is_err());
        let m = generate(&net(), &g, dir.path(), GenerateOptions { jobs: 1, keep_going: true }).unwrap();
        assert_eq!(m.cells[1].status, CellStatus::Failed);
        assert_eq!(m.cells[0].status, CellStatus::Ok);
    }
}
