//! The `dslt` command line: argument parsing, config resolution, run manifests
//! and replay.
//!
//! Values resolve as command-line flag, then `DSLT_*` environment variable,
//! then `--config` file, then built-in default.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dslt::{alpha_eps_multi, chaos_projections};
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, ExperimentConfig, ExperimentKind, Tolerances};
use crate::integrate::QuadratureOptions;
use crate::model::HurstModel;
use crate::quadrature::ConstantsTable;
use crate::sim::{read_binary, write_binary, write_csv, FbmPath, GridSpec, Method, Sampler};

/// Version of the manifest and report layouts.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const DEFAULT_HURST: f64 = 0.7;
pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_STEPS: usize = 2048;
pub const DEFAULT_EXPERIMENT_PATHS: usize = 2000;
pub const DEFAULT_DUMP_PATHS: usize = 100;
pub const DEFAULT_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const DEFAULT_SEED: u64 = 20_151_014;

#[derive(Debug, Parser)]
#[command(name = "dslt", version, about = "Derivative of self-intersection local time of fBm: simulation, quadrature and experiments")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "DSLT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, env = "DSLT_OUT_DIR", default_value = "dslt-out")]
    pub out_dir: PathBuf,
    /// JSON file with default values for any flag.
    #[arg(long, global = true, env = "DSLT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Re-run the command recorded in a manifest and verify output checksums.
    #[arg(long, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample fBm paths and write them to disk.
    Simulate(SimulateArgs),
    /// Evaluate α_ε and chaos components on sampled or dumped paths.
    Estimate(EstimateArgs),
    /// Limit constants and exact variances by quadrature.
    Constants(ConstantsArgs),
    /// Monte Carlo check of a limit theorem.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    /// Path dumps only.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    AlphaClt,
    ChaosL2,
    ChaosClt,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::AlphaClt => ExperimentKind::AlphaClt,
            KindArg::ChaosL2 => ExperimentKind::ChaosL2,
            KindArg::ChaosClt => ExperimentKind::ChaosClt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Circulant,
    Cholesky,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Circulant => Method::Circulant,
            MethodArg::Cholesky => Method::Cholesky,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, env = "DSLT_HURST")]
    pub hurst: Option<f64>,
    #[arg(long, env = "DSLT_HORIZON")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    /// Grid steps n.
    #[arg(long, env = "DSLT_STEPS")]
    pub steps: Option<usize>,
    #[arg(long, env = "DSLT_PATHS")]
    pub paths: Option<usize>,
    #[arg(long, env = "DSLT_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "DSLT_METHOD")]
    pub method: Option<MethodArg>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long, env = "DSLT_FORMAT")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub paths: PathArgs,
    /// Repeatable; also accepts a comma separated list.
    #[arg(long, env = "DSLT_EPS", value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Also evaluate the chaos component of order 2q-1.
    #[arg(long, env = "DSLT_Q")]
    pub q: Option<u32>,
    /// Binary path dump to read instead of sampling.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, env = "DSLT_FORMAT")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "DSLT_Q")]
    pub q: Option<u32>,
    #[arg(long, env = "DSLT_EPS", value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long, env = "DSLT_REL_TOL")]
    pub rel_tol: Option<f64>,
    #[arg(long, env = "DSLT_FORMAT")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: KindArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub paths: PathArgs,
    #[arg(long, env = "DSLT_EPS", value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Repeatable chaos index.
    #[arg(long, env = "DSLT_Q", value_delimiter = ',')]
    pub q: Vec<u32>,
    #[arg(long, env = "DSLT_FORMAT")]
    pub format: Option<Format>,
    /// Also write an SVG plot.
    #[arg(long, env = "DSLT_PLOT")]
    pub plot: bool,
    /// Allow dt > sqrt(ε).
    #[arg(long)]
    pub allow_underresolved: bool,
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub hurst: Option<f64>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub q: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub format: Option<Format>,
    pub plot: Option<bool>,
    pub allow_underresolved: Option<bool>,
    pub rel_tol: Option<f64>,
    pub tolerances: Option<Tolerances>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved command, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum ResolvedCommand {
    Simulate {
        hurst: f64,
        horizon: f64,
        steps: usize,
        paths: usize,
        seed: u64,
        method: Method,
        format: Format,
    },
    Estimate {
        hurst: f64,
        horizon: f64,
        steps: usize,
        paths: usize,
        seed: u64,
        method: Method,
        eps: Vec<f64>,
        q: Option<u32>,
        input: Option<PathBuf>,
        format: Format,
    },
    Constants {
        hurst: f64,
        horizon: f64,
        q: u32,
        eps: Vec<f64>,
        rel_tol: f64,
        format: Format,
    },
    Experiment {
        config: ExperimentConfig,
        format: Format,
        plot: bool,
    },
}

impl ResolvedCommand {
    pub fn name(&self) -> String {
        match self {
            ResolvedCommand::Simulate { .. } => "simulate".into(),
            ResolvedCommand::Estimate { .. } => "estimate".into(),
            ResolvedCommand::Constants { .. } => "constants".into(),
            ResolvedCommand::Experiment { config, .. } => format!("experiment {}", config.kind),
        }
    }

    pub fn master_seed(&self) -> Option<u64> {
        match self {
            ResolvedCommand::Simulate { seed, .. } | ResolvedCommand::Estimate { seed, .. } => Some(*seed),
            ResolvedCommand::Constants { .. } => None,
            ResolvedCommand::Experiment { config, .. } => Some(config.master_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub command: String,
    pub config: ResolvedCommand,
    pub master_seed: Option<u64>,
    pub workers: Option<usize>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Result of executing a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// False when an experiment check failed or a replay did not reproduce its outputs.
    pub passed: bool,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn pick_vec<T: Clone>(flag: &[T], file: &Option<Vec<T>>, default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn resolve(command: Command, file: &FileConfig) -> Result<ResolvedCommand> {
    let model = |m: &ModelArgs| -> Result<(f64, f64)> {
        let h = pick(m.hurst, file.hurst, DEFAULT_HURST);
        let t = pick(m.horizon, file.horizon, DEFAULT_HORIZON);
        HurstModel::new(h, t)?;
        Ok((h, t))
    };
    let method = |p: &PathArgs| pick(p.method.map(Method::from), file.method, Method::Circulant);
    Ok(match command {
        Command::Simulate(a) => {
            let (hurst, horizon) = model(&a.model)?;
            ResolvedCommand::Simulate {
                hurst,
                horizon,
                steps: pick(a.paths.steps, file.steps, DEFAULT_STEPS),
                paths: pick(a.paths.paths, file.paths, DEFAULT_DUMP_PATHS),
                seed: pick(a.paths.seed, file.seed, DEFAULT_SEED),
                method: method(&a.paths),
                format: pick(a.format, file.format, Format::Csv),
            }
        }
        Command::Estimate(a) => {
            let (hurst, horizon) = model(&a.model)?;
            ResolvedCommand::Estimate {
                hurst,
                horizon,
                steps: pick(a.paths.steps, file.steps, DEFAULT_STEPS),
                paths: pick(a.paths.paths, file.paths, DEFAULT_DUMP_PATHS),
                seed: pick(a.paths.seed, file.seed, DEFAULT_SEED),
                method: method(&a.paths),
                eps: pick_vec(&a.eps, &file.eps, &DEFAULT_EPS),
                q: a.q.or_else(|| file.q.as_ref().and_then(|v| v.first().copied())),
                input: a.input,
                format: pick(a.format, file.format, Format::Json),
            }
        }
        Command::Constants(a) => {
            let (hurst, horizon) = model(&a.model)?;
            ResolvedCommand::Constants {
                hurst,
                horizon,
                q: pick(a.q, file.q.as_ref().and_then(|v| v.first().copied()), 1),
                eps: pick_vec(&a.eps, &file.eps, &DEFAULT_EPS),
                rel_tol: pick(a.rel_tol, file.rel_tol, QuadratureOptions::default().rel_tol),
                format: pick(a.format, file.format, Format::Json),
            }
        }
        Command::Experiment(a) => {
            let kind = ExperimentKind::from(a.kind);
            let (hurst, horizon) = model(&a.model)?;
            let mut cfg = ExperimentConfig::new(kind, hurst)?;
            cfg.model = HurstModel::new(hurst, horizon)?;
            cfg.grid = GridSpec::new(pick(a.paths.steps, file.steps, DEFAULT_STEPS), horizon)?;
            cfg.n_paths = pick(a.paths.paths, file.paths, DEFAULT_EXPERIMENT_PATHS);
            cfg.eps_schedule = pick_vec(&a.eps, &file.eps, &DEFAULT_EPS);
            cfg.q_list = pick_vec(&a.q, &file.q, &[2]);
            cfg.master_seed = pick(a.paths.seed, file.seed, DEFAULT_SEED);
            cfg.method = method(&a.paths);
            cfg.tolerances = file.tolerances.unwrap_or(cfg.tolerances);
            cfg.allow_underresolved = a.allow_underresolved || file.allow_underresolved.unwrap_or(false);
            cfg.quadrature_rel_tol = file.rel_tol.unwrap_or(cfg.quadrature_rel_tol);
            cfg.validate()?;
            let plot = a.plot || file.plot.unwrap_or(false);
            ResolvedCommand::Experiment { config: cfg, format: pick(a.format, file.format, Format::Json), plot }
        }
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = OsString::from(".");
    name.push(path.file_name().unwrap_or_default());
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes via a temporary file in the same directory and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<OutputRecord>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.dir.join(name), bytes)?;
        self.outputs.push(OutputRecord { path: name.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn put_file(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let tmp = tmp_path(&path);
        write(&tmp)?;
        std::fs::rename(&tmp, &path)?;
        let bytes = std::fs::read(&path)?;
        self.outputs.push(OutputRecord { path: name.into(), sha256: sha256_hex(&bytes) });
        Ok(())
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Serialize)]
struct EstimateRow {
    path: usize,
    eps: f64,
    alpha_raw: f64,
    alpha_scaled: f64,
    chaos_q: Option<u32>,
    chaos_raw: Option<f64>,
    chaos_scaled: Option<f64>,
}

fn estimate_paths(paths: &[FbmPath], eps: &[f64], q: Option<u32>) -> Result<Vec<EstimateRow>> {
    use rayon::prelude::*;
    let per_path: Vec<Result<Vec<EstimateRow>>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let alpha = alpha_eps_multi(p, eps)?;
            alpha
                .into_iter()
                .map(|a| {
                    let chaos = match q {
                        Some(q) => Some(chaos_projections(p, a.eps, q)?[q as usize - 1]),
                        None => None,
                    };
                    Ok(EstimateRow {
                        path: i,
                        eps: a.eps,
                        alpha_raw: a.raw,
                        alpha_scaled: a.scaled,
                        chaos_q: q,
                        chaos_raw: chaos.map(|c| c.raw),
                        chaos_scaled: chaos.map(|c| c.scaled),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_path {
        rows.extend(r?);
    }
    Ok(rows)
}

fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from("path,eps,alpha_raw,alpha_scaled,chaos_q,chaos_raw,chaos_scaled\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{},{},{}",
            r.path,
            r.eps,
            r.alpha_raw,
            r.alpha_scaled,
            r.chaos_q.map(|q| q.to_string()).unwrap_or_default(),
            opt(r.chaos_raw),
            opt(r.chaos_scaled)
        );
    }
    out
}

fn constants_csv(table: &ConstantsTable) -> String {
    let mut out = String::from("name,hurst,horizon,eps,q,value,abs_err_est,converged\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{}",
            r.name,
            r.hurst,
            r.horizon,
            r.eps.map(|e| format!("{e:e}")).unwrap_or_default(),
            r.q.map(|q| q.to_string()).unwrap_or_default(),
            r.value,
            r.abs_err_est,
            r.converged
        );
    }
    out
}

fn checks_csv(report: &crate::experiments::ExperimentReport) -> String {
    let mut out = String::from("name,value,threshold,pass\n");
    for c in &report.checks {
        let _ = writeln!(out, "\"{}\",{:e},{:e},{}", c.name.replace('"', "'"), c.value, c.threshold, c.pass);
    }
    out
}

/// Runs a resolved command, writing outputs and the manifest into `out_dir`.
pub fn execute(cmd: &ResolvedCommand, workers: Option<usize>, out_dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir, outputs: Vec::new() };
    let mut passed = true;
    match cmd {
        ResolvedCommand::Simulate { hurst, horizon, steps, paths, seed, method, format } => {
            let model = HurstModel::new(*hurst, *horizon)?;
            let grid = GridSpec::new(*steps, *horizon)?;
            let sampler = Sampler::new(&model, &grid, *method)?;
            let ensemble = with_pool(workers, || sampler.map_paths(*seed, *paths, |p| p.clone()))?;
            match format {
                Format::Csv => w.put_file("paths.csv", |p| write_csv(&ensemble, p))?,
                Format::Binary => w.put_file("paths.bin", |p| write_binary(&ensemble, p))?,
                Format::Json => {
                    let values: Vec<&Vec<f64>> = ensemble.iter().map(|p| &p.values).collect();
                    let doc = serde_json::json!({
                        "schema_version": SCHEMA_VERSION,
                        "hurst": hurst,
                        "horizon": horizon,
                        "n": steps,
                        "master_seed": seed,
                        "method": method,
                        "paths": values,
                    });
                    w.put("paths.json", serde_json::to_string(&doc)?.as_bytes())?;
                }
            }
        }
        ResolvedCommand::Estimate { hurst, horizon, steps, paths, seed, method, eps, q, input, format } => {
            if eps.is_empty() {
                return Err(Error::Config("at least one --eps is required".into()));
            }
            let model = HurstModel::new(*hurst, *horizon)?;
            if let Some(q) = q {
                model.ensure_not_critical(Some(*q))?;
            }
            let ensemble: Vec<FbmPath> = match input {
                Some(file) => {
                    let (header, rows) = read_binary(file)?;
                    let model = HurstModel::new(header.hurst, header.horizon)?;
                    let grid = GridSpec::new(header.n, header.horizon)?;
                    rows.into_iter().map(|v| FbmPath::from_values(model, grid, v)).collect::<Result<_>>()?
                }
                None => {
                    let grid = GridSpec::new(*steps, *horizon)?;
                    let sampler = Sampler::new(&model, &grid, *method)?;
                    with_pool(workers, || sampler.map_paths(*seed, *paths, |p| p.clone()))?
                }
            };
            let rows = with_pool(workers, || estimate_paths(&ensemble, eps, *q))??;
            match format {
                Format::Csv => w.put("estimates.csv", estimates_csv(&rows).as_bytes())?,
                Format::Json => w.put("estimates.json", serde_json::to_string_pretty(&rows)?.as_bytes())?,
                Format::Binary => return Err(Error::Config("binary output is only available for simulate".into())),
            }
        }
        ResolvedCommand::Constants { hurst, horizon, q, eps, rel_tol, format } => {
            let model = HurstModel::new(*hurst, *horizon)?;
            let table = ConstantsTable::build(&model, *q, eps, &QuadratureOptions::with_rel_tol(*rel_tol))?;
            match format {
                Format::Csv => w.put("constants.csv", constants_csv(&table).as_bytes())?,
                Format::Json => w.put("constants.json", table.to_json()?.as_bytes())?,
                Format::Binary => return Err(Error::Config("binary output is only available for simulate".into())),
            }
        }
        ResolvedCommand::Experiment { config, format, plot } => {
            let report = run_experiment(config, workers)?;
            passed = report.passed;
            match format {
                Format::Csv => {
                    w.put("report.csv", report.to_csv().as_bytes())?;
                    w.put("checks.csv", checks_csv(&report).as_bytes())?;
                }
                Format::Json => w.put("report.json", report.to_json()?.as_bytes())?,
                Format::Binary => return Err(Error::Config("binary output is only available for simulate".into())),
            }
            if *plot {
                w.put("report.svg", report.to_svg().as_bytes())?;
            }
        }
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        command: cmd.name(),
        config: cmd.clone(),
        master_seed: cmd.master_seed(),
        workers,
        outputs: w.outputs,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    atomic_write(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(Outcome { manifest, manifest_path, passed })
}

/// Re-runs a manifest into `out_dir` and compares output checksums.
///
/// `passed` is false when any checksum differs or the command itself failed a check.
pub fn replay(manifest_path: &Path, workers: Option<usize>, out_dir: &Path) -> Result<Outcome> {
    let recorded = RunManifest::load(manifest_path)?;
    let mut outcome = execute(&recorded.config, workers, out_dir)?;
    for old in &recorded.outputs {
        match outcome.manifest.outputs.iter().find(|o| o.path == old.path) {
            Some(new) if new.sha256 == old.sha256 => log::info!("{}: checksum reproduced", old.path),
            Some(_) => {
                eprintln!("{}: checksum differs from the manifest", old.path);
                outcome.passed = false;
            }
            None => {
                eprintln!("{}: not produced by the replay", old.path);
                outcome.passed = false;
            }
        }
    }
    Ok(outcome)
}

/// Parses `args` (including the program name), runs, and returns the process exit code:
/// 0 when everything passed, 1 when a check failed or a runtime error occurred, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match (&cli.from_manifest, cli.command) {
        (Some(m), None) => replay(m, cli.workers, &cli.out_dir),
        (Some(_), Some(_)) => Err(Error::Config("--from-manifest cannot be combined with a subcommand".into())),
        (None, None) => Err(Error::Config("a subcommand or --from-manifest is required (see --help)".into())),
        (None, Some(command)) => {
            let file = match &cli.config {
                Some(p) => FileConfig::load(p),
                None => Ok(FileConfig::default()),
            };
            file.and_then(|f| resolve(command, &f)).and_then(|c| execute(&c, cli.workers, &cli.out_dir))
        }
    };
    match result {
        Ok(outcome) => {
            for o in &outcome.manifest.outputs {
                println!("{}", cli.out_dir.join(&o.path).display());
            }
            println!("{}", outcome.manifest_path.display());
            if outcome.passed {
                0
            } else {
                eprintln!("{}: one or more checks failed", outcome.manifest.command);
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
