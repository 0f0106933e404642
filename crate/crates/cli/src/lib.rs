//! Command-line front end: configuration merging, seeded execution and
//! atomic report emission.
//!
//! Exit codes: `0` when every criterion passed, `2` when the run completed
//! with failed criteria, `1` when the run could not be carried out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use permlaw::experiments::config::{ExperimentConfig, ExperimentKind};
use permlaw::experiments::suites::selftest;
use permlaw::experiments::{run, Criterion, RunOptions};
use serde_json::{json, Map, Value};
use tempfile::NamedTempFile;
use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED_CRITERIA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(permlaw::Error),

    #[error("cannot read {path}: {source}", path = .path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}", path = .path.display())]
    Write { path: PathBuf, source: std::io::Error },

    #[error("run failed: {0}")]
    Run(permlaw::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "permlaw",
    version,
    about = "Spectral experiments on sums of random permutation matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalue clouds against the uniform law on the disk
    Esd(RunArgs),
    /// Finite-n Stieltjes transform against its limit over a (d, eta) grid
    Locallaw(RunArgs),
    /// Loop-equation residual against its envelope
    Loopres(RunArgs),
    /// Smallest singular value of the shifted matrix
    Ssv(RunArgs),
    /// Fixed points and trace moments
    Traces(RunArgs),
    /// Edge counts on large submatrices
    Noholes(RunArgs),
    /// Resolvent-trace variance and the transposition Lipschitz bound
    Concentration(RunArgs),
    /// Rademacher small-ball probabilities
    Smallball(RunArgs),
    /// Expectation of PMPM entries
    Pmpm(RunArgs),
    /// Hermitization pipeline and Ginibre replacement
    Girko(RunArgs),
    /// Flat-distance heuristic and bimodal locator
    Flatcheck(RunArgs),
    /// Exact-identity and oracle suites plus small runs of most experiments
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

/// Inline values that replace the corresponding config-file fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Complex shift such as 0.3+0.2i
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One value or a comma-separated grid
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, env = "PERMLAW_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for selftest_report.json; nothing is written when absent
    #[arg(long, env = "PERMLAW_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Loads `path` (if any), pins `kind`, applies `overrides` and validates.
/// A file whose `kind` differs from the requested one is rejected.
pub fn parse_config(
    path: Option<&Path>,
    kind: ExperimentKind,
    overrides: &Overrides,
) -> Result<ExperimentConfig, CliError> {
    let mut obj = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Read {
                path: p.to_path_buf(),
                source,
            })?;
            let value: Value = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(permlaw::Error::Config(vec![format!(
                    "{} is not valid JSON: {e}",
                    p.display()
                )]))
            })?;
            match value {
                Value::Object(m) => m,
                _ => {
                    return Err(CliError::Config(permlaw::Error::Config(vec![
                        "config must be a JSON object".into(),
                    ])))
                }
            }
        }
        None => Map::new(),
    };
    if let Some(Value::String(k)) = obj.get("kind") {
        if k != kind.as_str() {
            return Err(CliError::Config(permlaw::Error::Config(vec![format!(
                "config kind \"{k}\" does not match subcommand \"{kind}\""
            )])));
        }
    }
    obj.insert("kind".into(), json!(kind.as_str()));
    if let Some(n) = overrides.n {
        obj.insert("n".into(), json!(n));
    }
    if let Some(d) = overrides.d {
        obj.insert("d".into(), json!(d));
    }
    if let Some(z) = &overrides.z {
        obj.insert("z".into(), json!(z));
    }
    if let Some(t) = overrides.trials {
        obj.insert("trials".into(), json!(t));
    }
    if let Some(s) = overrides.seed {
        obj.insert("master_seed".into(), json!(s));
    }
    if let Some(eta) = &overrides.eta {
        obj.insert("eta_grid".into(), json!(eta));
    }
    ExperimentConfig::from_value(&Value::Object(obj)).map_err(CliError::Config)
}

/// What a completed invocation produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub criteria: Vec<Criterion>,
    pub written: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl Outcome {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            EXIT_PASS
        } else {
            EXIT_FAILED_CRITERIA
        }
    }
}

/// Writes every file to a temporary sibling first and renames only once all
/// of them are complete, so a failed run never leaves a truncated report.
pub fn write_atomically(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let target = dir.join(name);
        let err = |source| CliError::Write {
            path: target.clone(),
            source,
        };
        let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
        tmp.write_all(contents.as_bytes()).map_err(err)?;
        tmp.as_file().sync_all().map_err(err)?;
        staged.push((tmp, target));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| CliError::Write {
            path: target.clone(),
            source: e.error,
        })?;
        written.push(target);
    }
    Ok(written)
}

fn kind_of(command: &Command) -> Option<(ExperimentKind, &RunArgs)> {
    use ExperimentKind as K;
    Some(match command {
        Command::Esd(a) => (K::Esd, a),
        Command::Locallaw(a) => (K::Locallaw, a),
        Command::Loopres(a) => (K::Loopres, a),
        Command::Ssv(a) => (K::Ssv, a),
        Command::Traces(a) => (K::Traces, a),
        Command::Noholes(a) => (K::Noholes, a),
        Command::Concentration(a) => (K::Concentration, a),
        Command::Smallball(a) => (K::Smallball, a),
        Command::Pmpm(a) => (K::Pmpm, a),
        Command::Girko(a) => (K::Girko, a),
        Command::Flatcheck(a) => (K::Flatcheck, a),
        Command::Selftest(_) => return None,
    })
}

/// Runs one experiment and writes its report files.
pub fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<Outcome, CliError> {
    let cfg = parse_config(args.config.as_deref(), kind, &args.overrides)?;
    let start = Instant::now();
    let report = run(&cfg, RunOptions { threads: args.threads }).map_err(|e| match e {
        permlaw::Error::Config(_) => CliError::Config(e),
        other => CliError::Run(other),
    })?;
    let mut files = Vec::new();
    if args.format != Format::Csv {
        files.push((format!("{kind}_report.json"), report.to_json()));
    }
    if args.format != Format::Json {
        files.push((format!("{kind}_trials.csv"), report.trials.to_csv()));
        files.extend(
            report
                .attachments
                .iter()
                .map(|a| (a.file_name.clone(), a.contents.clone())),
        );
    }
    let written = write_atomically(&args.out_dir, &files)?;
    Ok(Outcome {
        criteria: report.criteria,
        written,
        notes: report.notes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_selftest(args: &SelftestArgs) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let criteria = selftest(args.threads).map_err(CliError::Run)?;
    let mut written = Vec::new();
    if let Some(dir) = &args.out_dir {
        let mut body = serde_json::to_string_pretty(&json!({
            "schema_version": "1",
            "kind": "selftest",
            "criteria": criteria,
        }))
        .expect("criteria serialise");
        body.push('\n');
        written = write_atomically(dir, &[("selftest_report.json".into(), body)])?;
    }
    Ok(Outcome {
        criteria,
        written,
        notes: Vec::new(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    match (&cli.command, kind_of(&cli.command)) {
        (Command::Selftest(args), _) => run_selftest(args),
        (_, Some((kind, args))) => run_experiment(kind, args),
        (_, None) => unreachable!("every non-selftest command names an experiment"),
    }
}

/// Runs the invocation, prints criteria to stdout and diagnostics to stderr,
/// and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(outcome) => {
            for c in &outcome.criteria {
                println!("{c}");
            }
            for note in &outcome.notes {
                eprintln!("note: {note}");
            }
            for path in &outcome.written {
                eprintln!("wrote {}", path.display());
            }
            let failed = outcome.criteria.iter().filter(|c| !c.passed).count();
            eprintln!(
                "{} criteria, {failed} failed, {:.1}s",
                outcome.criteria.len(),
                outcome.seconds
            );
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
