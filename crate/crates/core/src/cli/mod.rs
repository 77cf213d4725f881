//! Command-line front end: `fit`, `select`, `bench` and `replay`.
//!
//! Exit codes are 0 on success, 1 on runtime failure and 2 on usage or
//! validation errors. Every command writes a [`RunManifest`] next to its
//! output, and `replay` reruns a manifest.

mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use io::{read_dataset, LoadedData, ResolvedCommand, RunManifest};

use crate::criterion::{select, SelectOptions, Selector, DEFAULT_FOLDS, DEFAULT_MC_SAMPLES};
use crate::error::Error;
use crate::family::Family;
use crate::fitter::{default_lambda_grid, fit, FitConfig, FitResult};
use crate::penalty::{PenaltyKind, PenaltySpec, DEFAULT_MCP_R, DEFAULT_SCAD_R};
use crate::rng::RngStream;
use crate::simbench::{
    penalty_label, preset, presets, run_experiment, standard_cases, Case, Design, SimulationConfig,
    DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO,
};
use io::{ensure_dir, num, parse_json, write_csv, write_json};

pub const SEED_ENV: &str = "PQS_SEED";
const DEFAULT_Q: f64 = 0.2;

pub const PATH_COLUMNS: [&str; 7] = [
    "lambda",
    "loglik",
    "active_count",
    "k_hat",
    "k_hat_stderr",
    "cv_deviance",
    "score",
];
pub const REP_COLUMNS: [&str; 12] = [
    "model", "penalty", "case", "p", "k", "n", "selector", "rep", "lambda_hat", "kl", "fp", "fn",
];
pub const SUMMARY_COLUMNS: [&str; 13] = [
    "model", "penalty", "case", "p", "k", "n", "selector", "kl_mean", "kl_sd", "fp_mean", "fn_mean",
    "reps_ok", "failures",
];

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidPenalty(_)
            | Error::InvalidConfig(_)
            | Error::InvalidDataset(_)
            | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pqs", version, about = "Penalized GLM fitting and tuning-parameter selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit at a single lambda and write the coefficients as JSON.
    Fit(FitArgs),
    /// Fit a lambda grid, score it, and write the path table and chosen fit.
    Select(SelectArgs),
    /// Run the simulation bench and write per-replication and summary tables.
    Bench(BenchArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Linear,
    Logistic,
}

impl From<ModelArg> for Family {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Linear => Family::GaussianLinear,
            ModelArg::Logistic => Family::Logistic,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PenaltyArg {
    Bridge,
    Scad,
    Mcp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SelectorArg {
    Aic,
    Cv,
}

impl From<SelectorArg> for Selector {
    fn from(s: SelectorArg) -> Self {
        match s {
            SelectorArg::Aic => Selector::Aic,
            SelectorArg::Cv => Selector::Cv,
        }
    }
}

#[derive(Args, Debug)]
struct PenaltyFlags {
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    /// Bridge exponent [default: 0.2]
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// SCAD/MCP shape [default: 2.7 for SCAD, 3 for MCP]
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
}

impl PenaltyFlags {
    /// Resolves the penalty, filling unset parts from `base`.
    fn resolve(&self, base: Option<PenaltyKind>) -> Result<PenaltyKind, Failure> {
        let which = match (self.penalty, base) {
            (Some(p), _) => p,
            (None, Some(PenaltyKind::Bridge { .. })) => PenaltyArg::Bridge,
            (None, Some(PenaltyKind::Scad { .. })) => PenaltyArg::Scad,
            (None, Some(PenaltyKind::Mcp { .. })) => PenaltyArg::Mcp,
            (None, None) => return Err(Failure::Usage("--penalty is required".into())),
        };
        let kind = match (which, base) {
            (PenaltyArg::Bridge, Some(PenaltyKind::Bridge { q })) => {
                PenaltyKind::Bridge { q: self.q.unwrap_or(q) }
            }
            (PenaltyArg::Scad, Some(PenaltyKind::Scad { r })) => PenaltyKind::Scad { r: self.r.unwrap_or(r) },
            (PenaltyArg::Mcp, Some(PenaltyKind::Mcp { r })) => PenaltyKind::Mcp { r: self.r.unwrap_or(r) },
            (PenaltyArg::Bridge, _) => PenaltyKind::Bridge {
                q: self.q.unwrap_or(DEFAULT_Q),
            },
            (PenaltyArg::Scad, _) => PenaltyKind::Scad {
                r: self.r.unwrap_or(DEFAULT_SCAD_R),
            },
            (PenaltyArg::Mcp, _) => PenaltyKind::Mcp {
                r: self.r.unwrap_or(DEFAULT_MCP_R),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    penalty: PenaltyFlags,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// CSV with a header row and a `y` column
    #[arg(long)]
    data: PathBuf,
    /// Output JSON file
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the manifest; fitting itself draws no random numbers
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    penalty: PenaltyFlags,
    /// Comma-separated lambdas [default: log-spaced grid below lambda_max]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "aic")]
    selector: SelectorArg,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Named preset; an unknown name lists the available ones
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON simulation config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[command(flatten)]
    penalty: PenaltyFlags,
    /// Design as p,k,n
    #[arg(long, value_delimiter = ',', num_args = 1)]
    design: Option<Vec<usize>>,
    /// True coefficients as beta1,beta2
    #[arg(long = "case", value_delimiter = ',', num_args = 1, allow_negative_numbers = true)]
    case_values: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    kl_copies: Option<usize>,
    /// Selectors to compare, comma-separated
    #[arg(long, value_enum, value_delimiter = ',')]
    selector: Option<Vec<SelectorArg>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output file for `fit` manifests, directory otherwise
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

/// `--seed`, then a config file's seed, then `PQS_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn cmd_fit(a: FitArgs) -> Result<(), Failure> {
    let kind = a.penalty.resolve(None)?;
    let penalty = PenaltySpec::new(kind, a.lambda)?;
    let seed = resolve_seed(a.seed, None)?;
    let resolved = ResolvedCommand::Fit {
        model: a.model.into(),
        penalty,
        data: a.data,
    };
    execute(&resolved, seed, &a.out, None)
}

fn cmd_select(a: SelectArgs) -> Result<(), Failure> {
    let model: Family = a.model.into();
    let kind = a.penalty.resolve(None)?;
    let seed = resolve_seed(a.seed, None)?;
    let lambdas = match a.lambda_grid {
        Some(mut grid) => {
            if grid.is_empty() {
                return Err(Failure::Usage("--lambda-grid is empty".into()));
            }
            for &l in &grid {
                PenaltySpec::new(kind, l)?;
            }
            grid.sort_by(|x, y| y.total_cmp(x));
            grid.dedup();
            grid
        }
        None => {
            let loaded = read_dataset(&a.data, model)?;
            default_lambda_grid(model, &loaded.data, kind, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO)
        }
    };
    let resolved = ResolvedCommand::Select {
        model,
        penalty: kind,
        lambdas,
        selector: a.selector.into(),
        folds: a.folds,
        mc_samples: a.mc_samples,
        data: a.data,
    };
    execute(&resolved, seed, &a.out, a.threads)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let (mut config, from_file) = match (&a.preset, &a.config) {
        (Some(name), _) => match preset(name) {
            Some(c) => (c, false),
            None => {
                let names: Vec<String> = presets().into_iter().map(|(n, _)| n).collect();
                return Err(Failure::Usage(format!(
                    "unknown preset `{name}`; available presets:\n  {}",
                    names.join("\n  ")
                )));
            }
        },
        (None, Some(path)) => (parse_json::<SimulationConfig>(path)?, true),
        (None, None) => {
            let model: Family = a.model.unwrap_or(ModelArg::Linear).into();
            let kind = a.penalty.resolve(Some(PenaltyKind::Bridge { q: DEFAULT_Q }))?;
            let design = Design { p: 8, k: 2, n: 100 };
            (SimulationConfig::new(model, kind, standard_cases(model)[0], design, 50), false)
        }
    };
    if let Some(m) = a.model {
        let model: Family = m.into();
        if model != config.model && a.case_values.is_none() {
            config.case = standard_cases(model)[0];
        }
        config.model = model;
    }
    config.penalty = a.penalty.resolve(Some(config.penalty))?;
    if let Some(d) = &a.design {
        let [p, k, n] = d[..] else {
            return Err(Failure::Usage("--design takes p,k,n".into()));
        };
        config.design = Design { p, k, n };
    }
    if let Some(c) = &a.case_values {
        let [beta1, beta2] = c[..] else {
            return Err(Failure::Usage("--case takes beta1,beta2".into()));
        };
        config.case = Case { beta1, beta2 };
    }
    if let Some(v) = a.reps {
        config.reps = v;
    }
    if let Some(v) = a.kl_copies {
        config.kl_copies = v;
    }
    if let Some(v) = &a.selector {
        config.selectors = v.iter().map(|&s| s.into()).collect();
    }
    if let Some(v) = a.folds {
        config.folds = v;
    }
    if let Some(v) = a.mc_samples {
        config.mc_samples = v;
    }
    config.seed = resolve_seed(a.seed, from_file.then_some(config.seed))?;
    config.validate()?;
    let seed = config.seed;
    execute(&ResolvedCommand::Bench { config }, seed, &a.out, a.threads)
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Failure> {
    let manifest: RunManifest = parse_json(&a.manifest)?;
    if manifest.tool != io::TOOL {
        return Err(Failure::Usage(format!("manifest was written by `{}`", manifest.tool)));
    }
    if let ResolvedCommand::Bench { config } = &manifest.resolved {
        config.validate()?;
    }
    execute(&manifest.resolved, manifest.seed, &a.out, a.threads)
}

/// Runs a resolved command and writes its outputs and manifest.
fn execute(resolved: &ResolvedCommand, seed: u64, out: &Path, threads: Option<usize>) -> Result<(), Failure> {
    let manifest = RunManifest::new(resolved.clone(), seed);
    match resolved {
        ResolvedCommand::Fit { model, penalty, data } => {
            let loaded = read_dataset(data, *model)?;
            let result = fit(*model, &loaded.data, penalty, &FitConfig::default())?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(dir)?;
            }
            write_json(out, &FitOutput::new(*model, &loaded.columns, &result))?;
            write_json(&manifest_path_for(out), &manifest)
        }
        ResolvedCommand::Select {
            model,
            penalty,
            lambdas,
            selector,
            folds,
            mc_samples,
            data,
        } => {
            let loaded = read_dataset(data, *model)?;
            let options = SelectOptions {
                mc_samples: *mc_samples,
                folds: *folds,
            };
            let rng = RngStream::new(seed);
            let selection = with_threads(threads, || {
                select(*selector, *model, &loaded.data, *penalty, lambdas, &FitConfig::default(), &options, &rng)
            })??;
            ensure_dir(out)?;
            let rows: Vec<Vec<String>> = selection
                .fits
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let aic = selection.aic.as_ref().map(|r| &r[i]);
                    let cv = selection.cv.as_ref().map(|r| &r[i]);
                    vec![
                        num(f.penalty.lambda()),
                        num(f.loglik),
                        f.active_count().to_string(),
                        aic.map_or(String::new(), |r| num(r.k_hat)),
                        aic.map_or(String::new(), |r| num(r.k_hat_stderr)),
                        cv.map_or(String::new(), |r| num(r.deviance)),
                        num(selection.scores[i]),
                    ]
                })
                .collect();
            write_csv(&out.join("path.csv"), &PATH_COLUMNS, &rows)?;
            let chosen = SelectedOutput {
                selector: *selector,
                lambda_hat: selection.lambda_hat(),
                fit: FitOutput::new(*model, &loaded.columns, selection.chosen_fit()),
            };
            write_json(&out.join("selected.json"), &chosen)?;
            write_json(&out.join("manifest.json"), &manifest)
        }
        ResolvedCommand::Bench { config } => {
            let output = with_threads(threads, || run_experiment(config))??;
            for (rep, msg) in &output.failures {
                eprintln!("warning: replication {rep} excluded: {msg}");
            }
            ensure_dir(out)?;
            let d = config.design;
            let prefix = vec![
                config.model.name().to_string(),
                penalty_label(&config.penalty),
                config.case_label(),
                d.p.to_string(),
                d.k.to_string(),
                d.n.to_string(),
            ];
            let rep_rows: Vec<Vec<String>> = output
                .rows
                .iter()
                .map(|r| {
                    let mut row = prefix.clone();
                    row.extend([
                        r.selector.name().to_string(),
                        r.rep.to_string(),
                        num(r.lambda_hat),
                        num(r.kl),
                        r.fp.to_string(),
                        r.fn_.to_string(),
                    ]);
                    row
                })
                .collect();
            let summary_rows: Vec<Vec<String>> = output
                .reports
                .iter()
                .map(|m| {
                    let mut row = prefix.clone();
                    row.extend([
                        m.selector.name().to_string(),
                        num(m.kl_mean),
                        num(m.kl_sd),
                        num(m.fp_mean),
                        num(m.fn_mean),
                        m.reps_ok.to_string(),
                        m.failures.to_string(),
                    ]);
                    row
                })
                .collect();
            write_csv(&out.join("reps.csv"), &REP_COLUMNS, &rep_rows)?;
            write_csv(&out.join("summary.csv"), &SUMMARY_COLUMNS, &summary_rows)?;
            write_json(&out.join("manifest.json"), &manifest)
        }
    }
}

#[derive(Serialize)]
struct FitOutput<'a> {
    model: Family,
    columns: &'a [String],
    #[serde(flatten)]
    fit: &'a FitResult,
}

impl<'a> FitOutput<'a> {
    fn new(model: Family, columns: &'a [String], fit: &'a FitResult) -> Self {
        Self { model, columns, fit }
    }
}

#[derive(Serialize)]
struct SelectedOutput<'a> {
    selector: Selector,
    lambda_hat: f64,
    #[serde(flatten)]
    fit: FitOutput<'a>,
}
