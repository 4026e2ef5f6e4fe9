//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation or diagnostic failure, 2 I/O or
//! schema error. Diagnostics go to stderr, one JSON object per line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{generate, DatasetError, GenerateOptions, GridSpec};
use crate::fixtures;
use crate::logio::{self, read_json, write_atomic, IoError};
use crate::net::{validate_net, Net, SCHEMA_VERSION};
use crate::oracle;
use crate::patterns::PatternApplication;
use crate::sim::{self, SimConfig};
use crate::transform::{apply_sequence, TransformError};

#[derive(Debug, Parser)]
#[command(name = "groundtruth", version = SCHEMA_VERSION, about = "Ground-truth process data generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Default)]
struct Common {
    /// Overrides the seed of the config or grid.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for dataset cells (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model for structural problems.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply pattern applications to a model; writes model.json and ledger.json.
    Transform {
        #[arg(long)]
        model: PathBuf,
        /// JSON array of pattern applications.
        #[arg(long)]
        applications: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Play out a model; writes trace.gt.jsonl, log.jsonl and log.csv.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "run")]
        run_id: String,
        #[command(flatten)]
        common: Common,
    },
    /// Generate every cell of a grid plus manifest.json.
    Dataset {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Record failed cells in the manifest instead of aborting.
        #[arg(long)]
        keep_going: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write a bundled model (model.json) and its grid (grid.json).
    Fixture {
        #[arg(long)]
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Ground-truth assessment targets.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
}

#[derive(Debug, Subcommand)]
enum OracleCommand {
    /// Writes alignment.jsonl for a trace and its observed log.
    Align {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Writes report.json with responsible and affected objects.
    Report {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Prints the distance between a candidate and the ground-truth alignment.
    Score {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// A failed command: exit code plus the diagnostics to print.
struct Failure {
    code: i32,
    lines: Vec<Value>,
}

impl Failure {
    fn invalid(lines: Vec<Value>) -> Self {
        Failure { code: 1, lines }
    }

    fn io(kind: &str, message: impl ToString) -> Self {
        Failure { code: 2, lines: vec![json!({"level": "error", "kind": kind, "message": message.to_string()})] }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let kind = match e {
            IoError::SchemaVersionMismatch { .. } => "schema_version_mismatch",
            IoError::Parse { .. } => "parse",
            _ => "io",
        };
        Failure::io(kind, e)
    }
}

fn diag<T: Serialize>(d: &T) -> Value {
    let mut v = serde_json::to_value(d).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("level".into(), json!("error"));
    }
    v
}

fn message(kind: &str, text: impl ToString) -> Value {
    json!({"level": "error", "kind": kind, "message": text.to_string()})
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io("io", format!("{}: {e}", path.display())))
}

fn load_net(path: &Path) -> Result<Net, Failure> {
    let net = logio::read_net(&read_text(path)?)?;
    let diags = validate_net(&net);
    if diags.is_empty() {
        Ok(net)
    } else {
        Err(Failure::invalid(diags.iter().map(diag).collect()))
    }
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    let dir = common.out.as_deref().ok_or_else(|| Failure::invalid(vec![message("missing_flag", "--out is required")]))?;
    fs::create_dir_all(dir).map_err(|e| Failure::io("io", format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    write_atomic(&dir.join(name), text.as_bytes()).map_err(Failure::from)
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn transform_failure(e: TransformError) -> Failure {
    match e {
        TransformError::InvalidMapping { index, application_id, diagnostics } => Failure::invalid(
            diagnostics
                .iter()
                .map(|d| {
                    let mut v = diag(d);
                    v["application"] = json!(application_id);
                    v["index"] = json!(index);
                    v
                })
                .collect(),
        ),
        other => Failure::invalid(vec![message("transform", other)]),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { model, .. } => {
            load_net(&model)?;
        }
        Command::Transform { model, applications, common } => {
            let net = load_net(&model)?;
            let apps: Vec<PatternApplication> = read_json(&read_text(&applications)?)?;
            let (out, ledger) = apply_sequence(&net, &apps).map_err(transform_failure)?;
            let dir = out_dir(&common)?;
            write(dir, "model.json", &logio::write_net(&out))?;
            write(dir, "ledger.json", &pretty(&ledger))?;
        }
        Command::Simulate { model, config, run_id, common } => {
            let net = load_net(&model)?;
            let mut cfg: SimConfig = read_json(&read_text(&config)?)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let trace = sim::run(&net, &cfg).map_err(|e| Failure::invalid(vec![message("simulation", e)]))?;
            let log = logio::project_observed(&trace, &run_id);
            let dir = out_dir(&common)?;
            write(dir, "trace.gt.jsonl", &logio::write_trace(&trace))?;
            write(dir, "log.jsonl", &logio::write_log_jsonl(&log))?;
            write(dir, "log.csv", &logio::write_log_csv(&log))?;
        }
        Command::Dataset { model, grid, keep_going, common } => {
            let net = load_net(&model)?;
            let mut spec: GridSpec = read_json(&read_text(&grid)?)?;
            if let Some(seed) = common.seed {
                spec.master_seed = seed;
            }
            let dir = out_dir(&common)?;
            let manifest = generate(&net, &spec, dir, GenerateOptions { jobs: common.jobs, keep_going })
                .map_err(|e| match e {
                    DatasetError::Io(io) => Failure::from(io),
                    other => Failure::invalid(vec![message("dataset", other)]),
                })?;
            let failed: Vec<Value> = manifest
                .cells
                .iter()
                .filter_map(|c| c.error.as_ref().map(|e| json!({"level": "error", "kind": "cell", "cell": c.cell_id, "message": e})))
                .collect();
            if !failed.is_empty() {
                return Err(Failure::invalid(failed));
            }
        }
        Command::Fixture { name, common } => {
            let (net, mut grid) = fixtures::fixture(&name).map_err(|e| Failure::invalid(vec![message("fixture", e)]))?;
            if let Some(seed) = common.seed {
                grid.master_seed = seed;
            }
            let dir = out_dir(&common)?;
            write(dir, "model.json", &logio::write_net(&net))?;
            write(dir, "grid.json", &pretty(&grid))?;
        }
        Command::Oracle { command } => run_oracle(command)?,
    }
    Ok(())
}

fn run_oracle(command: OracleCommand) -> Result<(), Failure> {
    let oracle_failure = |e: oracle::OracleError| Failure::invalid(vec![message("oracle", e)]);
    match command {
        OracleCommand::Align { model, trace, log, common } => {
            let net = load_net(&model)?;
            let trace = logio::read_trace(&read_text(&trace)?, None)?;
            let log = logio::read_log_jsonl(&read_text(&log)?)?;
            let alignment = oracle::gt_alignment(&net, &trace, &log).map_err(oracle_failure)?;
            write(out_dir(&common)?, "alignment.jsonl", &oracle::write_alignment_jsonl(&alignment))?;
        }
        OracleCommand::Report { trace, common } => {
            let trace = logio::read_trace(&read_text(&trace)?, None)?;
            write(out_dir(&common)?, "report.json", &pretty(&oracle::deviation_report(&trace)))?;
        }
        OracleCommand::Score { candidate, gt, common } => {
            let candidate = oracle::read_alignment_jsonl(&read_text(&candidate)?)?;
            let gt = oracle::read_alignment_jsonl(&read_text(&gt)?)?;
            let distance = oracle::move_distance(&candidate, &gt).map_err(oracle_failure)?;
            let result = json!({ "distance": distance });
            println!("{result}");
            if common.out.is_some() {
                write(out_dir(&common)?, "score.json", &pretty(&result))?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            for line in f.lines {
                eprintln!("{line}");
            }
            f.code
        }
    }
}
