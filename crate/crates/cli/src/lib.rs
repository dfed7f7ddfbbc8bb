//! Command-line driver: catalog -> fit -> forecast -> evaluate, plus
//! synthetic catalogs and principal-axis partitions.
//!
//! Every command is a pure function of its inputs; outputs are written
//! atomically (temporary file + rename) and `evaluate` records a manifest of
//! its resolved configuration and input digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime, Timelike};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use quake_hmm::catalog::{assign_regions, compute_principal_axes, load_catalog, to_observations, PartitionMode};
use quake_hmm::estimation::{fit, location_grid, sort_states};
use quake_hmm::evaluation::{export_series, run_rolling_forecasts, summarize, summary_csv, summary_table};
use quake_hmm::forecasting::{forecast_probability, scheduled_weights, weights_from_filter};
use quake_hmm::hmm::ForwardFilter;
use quake_hmm::simulation::simulate;
use quake_hmm::{Catalog, EvalConfig, FitConfig64, ForecastQuery, HmmParams64, RegionPartition, SimConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<quake_hmm::Error> for CliError {
    fn from(e: quake_hmm::Error) -> Self {
        use quake_hmm::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. }
            | E::CatalogRow { .. }
            | E::Json(_)
            | E::Csv(_)
            | E::InvalidParams(_)
            | E::Configuration(_) => CliError::Input(msg),
            E::FitFailure(_) | E::DegenerateState { .. } | E::TooLarge { .. } => CliError::Numerical(msg),
            _ => CliError::Domain(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "quake-hmm", version, about = "Fit, forecast and evaluate HMMs of earthquake interevent times")]
pub struct Cli {
    /// Random seed for commands that sample.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// JSON file overriding the command's configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an HMM to a catalog.
    Fit(FitArgs),
    /// Print forecast probabilities for one date.
    Forecast(ForecastArgs),
    /// Run daily forecasts over a window and summarize them.
    Evaluate(EvaluateArgs),
    /// Draw a synthetic catalog from a parameter file.
    Simulate(SimulateArgs),
    /// Compute the principal-axis region partition of a catalog.
    Regions(RegionsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    /// No region labels.
    None,
    /// Use the catalog's `region` column.
    Column,
    /// Principal-axis quadrants merged East/West.
    EastWest,
    /// Principal-axis quadrants merged North/South.
    NorthSouth,
    /// Sign of the major-axis projection.
    HalfPlane,
    /// Partition read from `--partition`.
    Partition,
}

#[derive(Debug, Clone, Args)]
pub struct CatalogArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    pub min_magnitude: f64,
    #[arg(long, value_enum, default_value_t = RegionMode::None)]
    pub region_mode: RegionMode,
    #[arg(long)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: CatalogArgs,
    #[arg(long)]
    pub n_states: usize,
    /// First date of the training window (inclusive).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// End of the training window (exclusive).
    #[arg(long)]
    pub to: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: CatalogArgs,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    /// Issue time of day, HH:MM:SS.
    #[arg(long)]
    pub time: Option<NaiveTime>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0, 10.0])]
    pub horizons: Vec<f64>,
    /// Region labels to forecast separately.
    #[arg(long, value_delimiter = ',')]
    pub region: Vec<usize>,
    /// Keep only the most recent interevent times.
    #[arg(long)]
    pub history: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: CatalogArgs,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub eval_config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub n_events: usize,
    /// Output CSV; defaults to `<out-dir>/catalog.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Calendar date of time zero.
    #[arg(long, default_value = "2000-01-01")]
    pub start_date: NaiveDate,
}

#[derive(Debug, Args)]
pub struct RegionsArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    pub min_magnitude: f64,
    #[arg(long, value_enum, default_value_t = RegionMode::EastWest)]
    pub mode: RegionMode,
    /// Output JSON; printed to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Record of an `evaluate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by role.
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn digest(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let io = |e: std::io::Error| CliError::Input(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn partition_for(catalog: &Catalog, mode: RegionMode, file: Option<&Path>) -> CliResult<Option<RegionPartition>> {
    let axes = || compute_principal_axes(catalog).map_err(CliError::from);
    Ok(match mode {
        RegionMode::None | RegionMode::Column => None,
        RegionMode::EastWest => Some(axes()?),
        RegionMode::NorthSouth => Some(axes()?.with_merge_map(RegionPartition::north_south_map())),
        RegionMode::HalfPlane => Some(axes()?.with_mode(PartitionMode::HalfPlane)),
        RegionMode::Partition => {
            let path = file.ok_or_else(|| CliError::Input("--region-mode partition needs --partition".into()))?;
            Some(read_json(path)?)
        }
    })
}

/// Loads the catalog and applies the requested region labelling.
pub fn load_labeled(args: &CatalogArgs) -> CliResult<Catalog> {
    let (mut cat, _) = load_catalog(&args.catalog, args.min_magnitude)?;
    match args.region_mode {
        RegionMode::None => cat.events.iter_mut().for_each(|e| e.region = None),
        RegionMode::Column => {
            if let Some(i) = cat.events.iter().position(|e| e.region.is_none()) {
                return Err(CliError::Input(format!("catalog row {} has no region", i + 1)));
            }
        }
        mode => {
            let p = partition_for(&cat, mode, args.partition.as_deref())?.expect("partition mode");
            cat = assign_regions(&cat, &p)?;
        }
    }
    Ok(cat)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Forecast(a) => cmd_forecast(cli, a).map(|text| print!("{text}")),
        Command::Evaluate(a) => cmd_evaluate(cli, a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Regions(a) => cmd_regions(cli, a),
    }
}

pub fn cmd_fit(cli: &Cli, args: &FitArgs) -> CliResult<()> {
    let full = load_labeled(&args.input)?;
    let window = full.between(args.from, args.to);
    let obs = to_observations::<f64>(&window)?;
    let mut config: FitConfig64 = match &cli.config {
        Some(p) => read_json(p)?,
        None => FitConfig64::default(),
    };
    if config.init_grid.is_empty() {
        if let Some(r) = obs.regions.as_ref().and_then(|r| r.iter().copied().max()) {
            if args.n_states == 2 * r && r > 1 {
                config.init_grid = location_grid(&obs, r, &config)?;
            }
        }
    }
    let mut result = fit(&obs, args.n_states, &config)?;
    result.params = sort_states(&result.params);
    say(
        cli.quiet,
        format!(
            "fit {} states on {} interevent times: log-likelihood {:.6}, {} iterations, converged={}",
            args.n_states,
            obs.len(),
            result.log_likelihood,
            result.iterations,
            result.converged
        ),
    );
    write_atomic(&cli.out_dir.join("params.json"), &to_json(&result.params))?;
    write_atomic(&cli.out_dir.join("fit.json"), &to_json(&result))?;
    write_atomic(&cli.out_dir.join("trace.csv"), result.trace_csv().as_bytes())?;
    Ok(())
}

/// Forecast text for one date, as printed by `forecast`.
pub fn cmd_forecast(_cli: &Cli, args: &ForecastArgs) -> CliResult<String> {
    let params: HmmParams64 = read_json(&args.params)?;
    params.validate()?;
    let cat = load_labeled(&args.input)?;
    let tod = args.time.map_or(0.0, |t| t.num_seconds_from_midnight() as f64 / 86_400.0);
    let now = cat.time_of(args.date, tod);
    let seen = cat.events.partition_point(|e| e.time <= now);
    if seen == 0 {
        return Err(CliError::Domain(format!("no events on or before {}", args.date)));
    }
    let first = match args.history {
        Some(h) => seen.saturating_sub(h + 1),
        None => 0,
    };
    let mut filter = ForwardFilter::new(&params);
    for k in first + 1..seen {
        let region = if params.region_dist.is_some() {
            Some(cat.events[k].region.ok_or_else(|| CliError::Input("region model needs region labels".into()))?)
        } else {
            None
        };
        filter.push(cat.events[k].time - cat.events[k - 1].time, region)?;
    }
    let w = now - cat.events[seen - 1].time;
    let d = scheduled_weights(&weights_from_filter(&filter, 0.0), &params, w)?;

    let mut out = format!("t={} w={:.6}\n", d.history_len, w);
    let weights: Vec<String> = d.weights.iter().map(|x| format!("{x:.6}")).collect();
    out.push_str(&format!("d=[{}]\n", weights.join(", ")));
    for &n in &args.horizons {
        let p = forecast_probability(&d, &params, &ForecastQuery::new(n))?;
        out.push_str(&format!("N={n} P={p:.6}\n"));
        for &v in &args.region {
            let p = forecast_probability(&d, &params, &ForecastQuery::in_region(n, v))?;
            out.push_str(&format!("N={n} region={v} P={p:.6}\n"));
        }
    }
    Ok(out)
}

/// Runs the rolling evaluation and returns the manifest it wrote.
pub fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> CliResult<RunManifest> {
    let params: HmmParams64 = read_json(&args.params)?;
    params.validate()?;
    let config: EvalConfig = read_json(&args.eval_config)?;
    let cat = load_labeled(&args.input)?;
    let forecasts = run_rolling_forecasts(&cat, &params, &config)?;
    let out = &cli.out_dir;

    let series = export_series(&forecasts, &cat);
    write_atomic(&out.join("daily_forecasts.csv"), series.daily_csv.as_bytes())?;
    for (label, csv) in &series.sorted_csv {
        write_atomic(&out.join(format!("sorted_{label}.csv")), csv.as_bytes())?;
    }

    let mut text = String::new();
    let regions: Vec<Option<usize>> =
        std::iter::once(None).chain(config.regions.iter().flatten().map(|&v| Some(v))).collect();
    for &n in &config.horizons {
        for &r in &regions {
            let (low, high) = summarize(&forecasts, n, config.split_low_count, r)?;
            let label = match r {
                None => format!("N{n}"),
                Some(v) => format!("N{n}_r{v}"),
            };
            write_atomic(
                &out.join(format!("summary_{label}.csv")),
                summary_csv(&[low.clone(), high.clone()]).as_bytes(),
            )?;
            let title = match r {
                None => format!("{n}-day forecasts, whole region"),
                Some(v) => format!("{n}-day forecasts, region {v}"),
            };
            text.push_str(&summary_table(&title, &[low, high]));
            text.push('\n');
        }
    }
    write_atomic(&out.join("summary.txt"), text.as_bytes())?;

    let manifest = RunManifest {
        command: "evaluate".into(),
        config: serde_json::json!({
            "eval": config,
            "min_magnitude": args.input.min_magnitude,
            "region_mode": args.input.region_mode,
        }),
        input_digests: BTreeMap::from([
            ("catalog".to_string(), digest(&args.input.catalog)?),
            ("eval_config".to_string(), digest(&args.eval_config)?),
            ("params".to_string(), digest(&args.params)?),
        ]),
        tool_version: VERSION.into(),
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest))?;
    say(cli.quiet, format!("{} daily forecasts written to {}", forecasts.len(), out.display()));
    Ok(manifest)
}

pub fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<()> {
    let params: HmmParams64 = read_json(&args.params)?;
    let config = SimConfig { epoch: args.start_date, ..SimConfig::new(params, args.n_events, cli.seed) };
    let sim = simulate(&config)?;
    let path = args.out.clone().unwrap_or_else(|| cli.out_dir.join("catalog.csv"));
    write_atomic(&path, sim.to_csv().as_bytes())?;
    say(cli.quiet, format!("{} events written to {}", args.n_events, path.display()));
    Ok(())
}

pub fn cmd_regions(_cli: &Cli, args: &RegionsArgs) -> CliResult<()> {
    let (cat, _) = load_catalog(&args.catalog, args.min_magnitude)?;
    let partition = match args.mode {
        RegionMode::None | RegionMode::Column => RegionPartition::single_region(),
        mode => partition_for(&cat, mode, None)?.expect("partition mode"),
    };
    let json = to_json(&partition);
    match &args.out {
        Some(p) => write_atomic(p, &json)?,
        None => print!("{}", String::from_utf8(json).expect("utf-8")),
    }
    Ok(())
}
