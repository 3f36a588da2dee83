use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use densfda::density::{DensityFn, GridFunction, DEFAULT_FLOOR};
use densfda::error::DensError;
use densfda::frechet::{
    cross_sectional_density_mean, fve_curve_for, wasserstein_frechet_mean, FittedModel, FrechetReport, MethodKind,
    Metric,
};
use densfda::grid::Grid;
use densfda::io::{align_responses, format_num, read_responses, read_samples, GridTable};
use densfda::kde::{default_bandwidth, estimate_density, KdeConfig, KernelSpec};
use densfda::regression::{drop_missing, regression_table, RegressionRow, ScoreMethod};
use densfda::simulation::{run_comparison, Observation, SettingId, SettingSpec, DEFAULT_GRID_POINTS};
use densfda::sphere::fisher_rao_mean;
use densfda::transform::{TransformSpec, TransformedFn};

#[derive(Parser)]
#[command(name = "densfda", version, about = "Functional data analysis for samples of densities")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DENSFDA_THREADS")]
    threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Points of the output grid.
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Positivity floor applied to densities.
    #[arg(long, global = true, default_value_t = DEFAULT_FLOOR)]
    floor: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel density estimates from raw samples.
    Estimate(EstimateArgs),
    /// Log quantile density or log hazard transforms, or their inverses.
    Transform(TransformArgs),
    /// Decomposition, FVE curve, truncation choice and modes.
    Analyze(AnalyzeArgs),
    /// Modes of variation as a density table.
    Modes(ModesArgs),
    /// Fréchet mean under one metric.
    Mean(MeanArgs),
    /// FVE curve and truncation choice.
    Fve(FveArgs),
    /// Method comparison on a simulated truncated-normal family.
    Simulate(SimulateArgs),
    /// Cross-validated regression of a scalar response on density scores.
    Regress(RegressArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV with columns subject_id,value.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bandwidth in units of the support (default N^(-1/3) times its width).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelSpec,
    /// Support as `a,b` (default: range of all observations).
    #[arg(long, allow_hyphen_values = true)]
    support: Option<String>,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, default_value = "lqd")]
    kind: String,
    #[arg(long, default_value_t = TransformSpec::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Map transformed functions back to densities.
    #[arg(long)]
    inverse: bool,
    /// Support of the densities produced by `--inverse`, as `a,b`.
    #[arg(long, allow_hyphen_values = true, default_value = "0,1")]
    support: String,
}

#[derive(Args)]
struct MethodArgs {
    /// lqd, fpca, hs or loghazard.
    #[arg(long, default_value = "lqd")]
    method: String,
    /// Delta of the log hazard transform.
    #[arg(long, default_value_t = TransformSpec::DEFAULT_DELTA)]
    delta: f64,
}

impl MethodArgs {
    fn method(&self) -> Result<MethodKind, DensError> {
        let m: MethodKind = self.method.parse()?;
        Ok(match m {
            MethodKind::Transform { transform: TransformSpec::LogHazard { .. } } => {
                MethodKind::Transform { transform: TransformSpec::log_hazard(self.delta)? }
            }
            other => other,
        })
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    /// Largest K on the FVE curve (default: numerical rank, at most 20).
    #[arg(long = "K-max", alias = "k-max")]
    k_max: Option<usize>,
    #[arg(long, allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
    modes_alpha: String,
    /// Number of modes written.
    #[arg(long, default_value_t = 2)]
    modes_k: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModesArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Components, e.g. `1,2` or `1..3`.
    #[arg(long = "K", alias = "k", default_value = "1,2")]
    k: String,
    #[arg(long, allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
    alpha: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeanArgs {
    /// l2, wasserstein or fisher-rao.
    #[arg(long, default_value = "wasserstein")]
    metric: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FveArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long = "K-max", alias = "k-max")]
    k_max: Option<usize>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "2")]
    setting: SettingId,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// full or sampled.
    #[arg(long, default_value = "full")]
    observed: String,
    /// Observations per density when sampled.
    #[arg(long, default_value_t = 100)]
    n_obs: usize,
    /// Kernel bandwidth when sampled, in units of the support.
    #[arg(long, default_value_t = 0.2)]
    bandwidth: f64,
    /// Components (default: the true dimension of the setting).
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    #[arg(long, default_value = "l2")]
    metric: Metric,
    #[arg(long, default_value = "lqd,fpca,hs")]
    methods: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    /// lqd, fpca, or both as `lqd,fpca`.
    #[arg(long, default_value = "lqd,fpca")]
    method: String,
    /// Truncation levels, e.g. `1..4`.
    #[arg(long = "K", alias = "k", default_value = "1..4")]
    k: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long)]
    densities: PathBuf,
    /// CSV with columns subject_id,y.
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl From<DensError> for CliError {
    fn from(e: DensError) -> Self {
        Self { kind: e.kind(), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { kind: "Io", message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self { kind: "Json", message: e.to_string() }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    DensError::InvalidArgument(msg.into()).into()
}

type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command_line: &'a [String],
    seed: u64,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
    version: &'static str,
    timestamp: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tracks the files a command reads and writes, for the manifest.
struct Run {
    argv: Vec<String>,
    seed: u64,
    floor: f64,
    grid_points: Option<usize>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(path, bytes).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(path, s.as_bytes())
    }

    fn write_table(&mut self, path: &Path, table: &GridTable) -> CliResult<()> {
        let mut buf = Vec::new();
        table.write(&mut buf)?;
        self.write(path, &buf)
    }

    fn read_densities(&mut self, path: &Path) -> CliResult<(Vec<String>, Vec<DensityFn>)> {
        let bytes = self.read(path)?;
        let table = GridTable::read(bytes.as_slice())?;
        let d = table.densities(self.floor)?;
        Ok((table.ids, d))
    }

    fn finish(&self, primary: &Path) -> CliResult<()> {
        let manifest = Manifest {
            command_line: &self.argv,
            seed: self.seed,
            inputs: &self.inputs,
            outputs: &self.outputs,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(manifest_path(primary), s)?;
        Ok(())
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `dir/stem.suffix` next to `out`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn parse_pair(s: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(invalid(format!("expected `a,b`, got '{s}'")));
    }
    let a = parts[0].parse::<f64>().map_err(|_| invalid(format!("bad number '{}'", parts[0])))?;
    let b = parts[1].parse::<f64>().map_err(|_| invalid(format!("bad number '{}'", parts[1])))?;
    Ok((a, b))
}

fn parse_floats(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| invalid(format!("bad number '{p}'")))).collect()
}

/// `1,2,5` or the inclusive range `1..4`.
fn parse_ks(s: &str) -> CliResult<Vec<usize>> {
    let bad = || invalid(format!("bad component list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let ks: Vec<usize> = s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

fn estimate(run: &mut Run, a: &EstimateArgs) -> CliResult<()> {
    let bytes = run.read(&a.input)?;
    let samples = read_samples(bytes.as_slice())?;
    let (lo, hi) = match &a.support {
        Some(s) => parse_pair(s)?,
        None => {
            let all = samples.iter().flat_map(|s| s.values.iter().copied());
            all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)))
        }
    };
    let grid = Grid::new(lo, hi, run.grid_points.unwrap_or(DEFAULT_GRID_POINTS))?;
    let densities = samples
        .iter()
        .map(|s| {
            let h = a.bandwidth.unwrap_or_else(|| default_bandwidth(s.values.len()) * grid.width());
            let cfg = KdeConfig::new(h, grid).with_kernel(a.kernel).with_floor(run.floor);
            estimate_density(&s.values, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ids = samples.iter().map(|s| s.id.clone()).collect();
    run.write_table(&a.out, &GridTable::from_functions("x", ids, &densities)?)
}

fn transform(run: &mut Run, a: &TransformArgs) -> CliResult<()> {
    let spec = match a.kind.to_ascii_lowercase().as_str() {
        "lqd" => TransformSpec::lqd(),
        "loghazard" | "log-hazard" => TransformSpec::log_hazard(a.delta)?,
        other => return Err(invalid(format!("unknown transform '{other}'"))),
    };
    if a.inverse {
        let bytes = run.read(&a.input)?;
        let table = GridTable::read(bytes.as_slice())?;
        let (lo, hi) = parse_pair(&a.support)?;
        let grid = Grid::new(lo, hi, run.grid_points.unwrap_or(table.grid.len()))?;
        let densities = table
            .columns
            .iter()
            .map(|c| {
                let x = TransformedFn::new(table.grid, c.clone(), spec)?;
                spec.inverse_with_floor(&x, &grid, run.floor)
            })
            .collect::<Result<Vec<_>, _>>()?;
        return run.write_table(&a.out, &GridTable::from_functions("x", table.ids, &densities)?);
    }
    let (ids, densities) = run.read_densities(&a.input)?;
    let xs = densities.iter().map(|f| spec.forward(f)).collect::<Result<Vec<_>, _>>()?;
    run.write_table(&a.out, &GridTable::from_functions("t", ids, &xs)?)
}

fn mode_table(model: &FittedModel, ks: &[usize], alphas: &[f64]) -> CliResult<GridTable> {
    let mut ids = Vec::new();
    let mut modes = Vec::new();
    for &k in ks {
        for &alpha in alphas {
            ids.push(format!("k{k}_alpha{alpha}"));
            modes.push(model.mode(k, alpha)?);
        }
    }
    Ok(GridTable::from_functions("x", ids, &modes)?)
}

fn fve_csv(report: &FrechetReport) -> String {
    let mut s = String::from("K,v_k,fve\n");
    for (i, (v, f)) in report.v_k.iter().zip(&report.fve).enumerate() {
        s.push_str(&format!("{},{},{}\n", i + 1, format_num(*v), format_num(*f)));
    }
    s
}

fn analyze(run: &mut Run, a: &AnalyzeArgs) -> CliResult<()> {
    let (_, densities) = run.read_densities(&a.input)?;
    let method = a.method.method()?;
    let model = FittedModel::fit_with_floor(&densities, method, run.floor)?;
    let report = fve_curve_for(&densities, &model, a.metric, a.k_max, a.p)?;
    let alphas = parse_floats(&a.modes_alpha)?;
    let ks: Vec<usize> = (1..=a.modes_k.min(model.n_components())).collect();
    let system = model.system();
    let out = json!({
        "report": report,
        "decomposition": {
            "eigenvalues": system.eigenvalues,
            "fve_l2": system.fve(),
            "mean": { "grid": system.mean.grid(), "values": system.mean.values() },
            "eigenfunctions": system.eigenfunctions.iter().map(|e| e.values().to_vec()).collect::<Vec<_>>(),
            "scores": system.scores,
        },
        "modes": { "components": ks, "alphas": alphas },
    });
    run.write_json(&a.out, &out)?;
    run.write(&sibling(&a.out, "fve.csv"), fve_csv(&report).as_bytes())?;
    if !ks.is_empty() {
        let table = mode_table(&model, &ks, &alphas)?;
        run.write_table(&sibling(&a.out, "modes.csv"), &table)?;
    }
    Ok(())
}

fn modes(run: &mut Run, a: &ModesArgs) -> CliResult<()> {
    let (_, densities) = run.read_densities(&a.input)?;
    let model = FittedModel::fit_with_floor(&densities, a.method.method()?, run.floor)?;
    let table = mode_table(&model, &parse_ks(&a.k)?, &parse_floats(&a.alpha)?)?;
    run.write_table(&a.out, &table)
}

fn mean(run: &mut Run, a: &MeanArgs) -> CliResult<()> {
    let (_, densities) = run.read_densities(&a.input)?;
    let (name, m) = match a.metric.to_ascii_lowercase().as_str() {
        "l2" => ("l2", cross_sectional_density_mean(&densities)?),
        "wasserstein" | "w" => ("wasserstein", wasserstein_frechet_mean(&densities)?),
        "fisher-rao" | "fisher_rao" | "fr" => ("fisher_rao", fisher_rao_mean(&densities)?),
        other => return Err(invalid(format!("unknown metric '{other}'"))),
    };
    run.write_table(&a.out, &GridTable::from_functions("x", vec![name.to_string()], &[m])?)
}

fn fve(run: &mut Run, a: &FveArgs) -> CliResult<()> {
    let (_, densities) = run.read_densities(&a.input)?;
    let model = FittedModel::fit_with_floor(&densities, a.method.method()?, run.floor)?;
    let report = fve_curve_for(&densities, &model, a.metric, a.k_max, a.p)?;
    run.write_json(&a.out, &report)?;
    run.write(&sibling(&a.out, "csv"), fve_csv(&report).as_bytes())
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> CliResult<()> {
    let observed = match a.observed.to_ascii_lowercase().as_str() {
        "full" => Observation::Full,
        "sampled" | "estimated" => Observation::Sampled { n_obs: a.n_obs, bandwidth: a.bandwidth },
        other => return Err(invalid(format!("unknown observation mode '{other}'"))),
    };
    let spec = SettingSpec::new(a.setting, a.n, observed, run.seed)?
        .with_grid_points(run.grid_points.unwrap_or(DEFAULT_GRID_POINTS));
    let methods = a.methods.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<MethodKind>, _>>()?;
    let k = a.k.unwrap_or(a.setting.true_k());
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    let result = run_comparison(&spec, &methods, k, a.metric, a.reps)?;
    run.write_json(&a.out, &result)?;
    let mut csv = String::from("rep,method,fve\n");
    for (rep, method, v) in result.fve_rows() {
        csv.push_str(&format!("{rep},{method},{}\n", format_num(v)));
    }
    run.write(&sibling(&a.out, "fve.csv"), csv.as_bytes())
}

fn regress(run: &mut Run, a: &RegressArgs) -> CliResult<()> {
    let (ids, densities) = run.read_densities(&a.densities)?;
    let bytes = run.read(&a.y)?;
    let responses = read_responses(bytes.as_slice())?;
    let y = align_responses(&ids, &responses);
    let dropped: Vec<&String> = ids.iter().zip(&y).filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect();
    if !dropped.is_empty() {
        log::warn!("dropping {} subjects without a response", dropped.len());
    }
    let dropped: Vec<String> = dropped.into_iter().cloned().collect();
    let (densities, y) = drop_missing(densities, &y)?;
    let methods = a.method.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<ScoreMethod>, _>>()?;
    let ks = parse_ks(&a.k)?;
    let mut rows: Vec<RegressionRow> = Vec::new();
    for method in methods {
        rows.extend(regression_table(&densities, &y, method, &ks, a.folds, a.repeats, run.seed)?);
    }
    let out = json!({
        "n": y.len(),
        "dropped": dropped,
        "folds": a.folds,
        "repeats": a.repeats,
        "rows": rows,
    });
    run.write_json(&a.out, &out)?;
    let mut csv = String::from("method,K,cv_mse,r_squared\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.method, r.k, format_num(r.cv_mse), format_num(r.r_squared)));
    }
    run.write(&sibling(&a.out, "csv"), csv.as_bytes())
}

fn execute(cli: &Cli, run: &mut Run) -> CliResult<()> {
    if !(cli.floor >= 0.0) {
        return Err(invalid(format!("floor {} must be nonnegative", cli.floor)));
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(invalid("threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| invalid(e.to_string()))?;
    }
    let out = match &cli.command {
        Command::Estimate(a) => {
            estimate(run, a)?;
            &a.out
        }
        Command::Transform(a) => {
            transform(run, a)?;
            &a.out
        }
        Command::Analyze(a) => {
            analyze(run, a)?;
            &a.out
        }
        Command::Modes(a) => {
            modes(run, a)?;
            &a.out
        }
        Command::Mean(a) => {
            mean(run, a)?;
            &a.out
        }
        Command::Fve(a) => {
            fve(run, a)?;
            &a.out
        }
        Command::Simulate(a) => {
            simulate(run, a)?;
            &a.out
        }
        Command::Regress(a) => {
            regress(run, a)?;
            &a.out
        }
    };
    run.finish(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut run = Run {
        argv: std::env::args().collect(),
        seed: cli.seed,
        floor: cli.floor,
        grid_points: cli.grid_points,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match execute(&cli, &mut run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind, "message": e.message }));
            ExitCode::from(1)
        }
    }
}
