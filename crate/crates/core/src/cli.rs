//! Batch front end: `simulate`, `train`, `forecast` and `evaluate`.
//!
//! Every setting can come from a flag or from a `--config` file of
//! `key = value` lines; flags win. Keys match the long flag names.
//! Exit codes: 0 success, 2 usage, 3 data, 4 numerical failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::distributions::Rng;
use crate::error::{Error, Result};
use crate::forecaster::{forecast_one_step, propagate_trend, rolling_evaluate, ForecastOptions, RollingMode};
use crate::io::{
    parse_key_values, read_draws, read_frame, write_coefficients, write_dataset, write_draws, write_evaluation,
    write_forecasts, write_inclusion, DrawsMeta,
};
use crate::model::QuantileSpec;
use crate::sampler::WExponent;
use crate::simdata::{generate, SimConfig, TruthRecord};
use crate::trainer::{
    inclusion_probabilities, posterior_coefficient_summary, train_chains, McmcConfig, PosteriorSample,
};

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "MQBSTS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mqbsts", version, about = "Multivariate quantile structural time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic three-series benchmark.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and write draws, inclusion and coefficient tables.
    Train(TrainArgs),
    /// One-step-ahead forecasts from stored draws.
    Forecast(ForecastArgs),
    /// Rolling one-step-ahead evaluation against the empirical-quantile baseline.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// `key = value` settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $MQBSTS_OUT_DIR or `.`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated quantile levels, one per series.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct McmcArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated initial diagonal of Φ.
    #[arg(long = "phi-init")]
    pub phi_init: Option<String>,
    #[arg(long = "phi-step")]
    pub phi_step: Option<f64>,
    #[arg(long = "inclusion-prior")]
    pub inclusion_prior: Option<f64>,
    #[arg(long = "slab-mean", allow_hyphen_values = true)]
    pub slab_mean: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long = "r-squared")]
    pub r_squared: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long = "nu-alpha")]
    pub nu_alpha: Option<f64>,
    #[arg(long = "v-alpha")]
    pub v_alpha: Option<f64>,
    /// `joint` (1 - mn/2) or `literal` (1 - n/2).
    #[arg(long = "w-exponent")]
    pub w_exponent: Option<String>,
    /// `on` or `off`.
    #[arg(long)]
    pub trend: Option<String>,
    /// Comma-separated long-run slopes.
    #[arg(long = "long-run-slope", allow_hyphen_values = true)]
    pub long_run_slope: Option<String>,
    /// Comma-separated slope learning rates.
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<String>,
    /// Divide the trend residual cross-product by W (`on` or `off`).
    #[arg(long = "trend-scale-by-w")]
    pub trend_scale_by_w: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated quantile levels, or one level for every series.
    #[arg(long)]
    pub tau: Option<String>,
    /// Independent chains run concurrently; outputs go to `chain<c>/` when above one.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Truth sidecar from `simulate`, adds normalized errors to the coefficient table.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    /// Draws table written by `train` (its `.json` sidecar must sit next to it).
    #[arg(long)]
    pub draws: Option<PathBuf>,
    /// CSV of future rows; `y.*` columns are optional and enable the loss columns.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// `refit` (expanding window) or `fixed` (train once).
    #[arg(long)]
    pub mode: Option<String>,
}

const COMMON_KEYS: &[&str] = &["out", "seed"];
const SIM_KEYS: &[&str] = &["n", "tau", "rho"];
const MCMC_KEYS: &[&str] = &[
    "iterations",
    "burn-in",
    "threshold",
    "phi-init",
    "phi-step",
    "inclusion-prior",
    "slab-mean",
    "kappa",
    "r-squared",
    "v0",
    "nu-alpha",
    "v-alpha",
    "w-exponent",
    "trend",
    "long-run-slope",
    "learning-rate",
    "trend-scale-by-w",
];

/// Flag values layered over config-file values.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(config: Option<&Path>, allowed: &[&[&str]]) -> Result<Self> {
        let values = match config {
            None => BTreeMap::new(),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::invalid(format!("cannot read config `{}`: {e}", path.display())))?;
                parse_key_values(&text)?
            }
        };
        for key in values.keys() {
            if !allowed.iter().any(|set| set.contains(&key.as_str())) {
                return Err(Error::invalid(format!("unknown config key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    fn set<T: ToString>(&mut self, key: &str, flag: &Option<T>) {
        if let Some(v) = flag {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::invalid(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.values
            .get(key)
            .map(|v| parse_list(key, v))
            .transpose()
    }

    fn switch(&self, key: &str) -> Result<Option<bool>> {
        self.values
            .get(key)
            .map(|v| match v.as_str() {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                other => Err(Error::invalid(format!("`{key}`: expected on/off, got `{other}`"))),
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::invalid(format!("missing required `--{key}`")))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .path("out")
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn common(&mut self, common: &Common) {
        self.set("out", &common.out.as_ref().map(|p| p.display().to_string()));
        self.set("seed", &common.seed);
    }

    fn mcmc_flags(&mut self, a: &McmcArgs) {
        self.set("iterations", &a.iterations);
        self.set("burn-in", &a.burn_in);
        self.set("threshold", &a.threshold);
        self.set("phi-init", &a.phi_init);
        self.set("phi-step", &a.phi_step);
        self.set("inclusion-prior", &a.inclusion_prior);
        self.set("slab-mean", &a.slab_mean);
        self.set("kappa", &a.kappa);
        self.set("r-squared", &a.r_squared);
        self.set("v0", &a.v0);
        self.set("nu-alpha", &a.nu_alpha);
        self.set("v-alpha", &a.v_alpha);
        self.set("w-exponent", &a.w_exponent);
        self.set("trend", &a.trend);
        self.set("long-run-slope", &a.long_run_slope);
        self.set("learning-rate", &a.learning_rate);
        self.set("trend-scale-by-w", &a.trend_scale_by_w);
    }

    fn mcmc_config(&self) -> Result<McmcConfig> {
        let mut c = McmcConfig::default();
        if let Some(v) = self.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = self.get("iterations")? {
            c.iterations = v;
        }
        if let Some(v) = self.get("burn-in")? {
            c.burn_in = v;
        }
        if let Some(v) = self.get("threshold")? {
            c.threshold_inclusion = v;
        }
        if let Some(v) = self.list("phi-init")? {
            c.phi_init = v;
        }
        if let Some(v) = self.get("phi-step")? {
            c.phi_step = v;
        }
        if let Some(v) = self.get("inclusion-prior")? {
            c.inclusion_prior = v;
        }
        if let Some(v) = self.get("slab-mean")? {
            c.slab_mean = v;
        }
        if let Some(v) = self.get("kappa")? {
            c.kappa = v;
        }
        if let Some(v) = self.get("r-squared")? {
            c.r_squared = v;
        }
        if let Some(v) = self.get("v0")? {
            c.v0 = v;
        }
        if let Some(v) = self.get("nu-alpha")? {
            c.nu_alpha = v;
        }
        if let Some(v) = self.get("v-alpha")? {
            c.v_alpha = v;
        }
        if let Some(v) = self.values.get("w-exponent") {
            c.w_exponent = match v.as_str() {
                "joint" => WExponent::Joint,
                "literal" => WExponent::Literal,
                other => return Err(Error::invalid(format!("`w-exponent`: expected joint or literal, got `{other}`"))),
            };
        }
        if let Some(v) = self.switch("trend")? {
            c.trend.enabled = v;
        }
        if let Some(v) = self.list("long-run-slope")? {
            c.trend.long_run_slope = v;
        }
        if let Some(v) = self.list("learning-rate")? {
            c.trend.learning_rate = v;
        }
        if let Some(v) = self.switch("trend-scale-by-w")? {
            c.trend.scale_by_w = v;
        }
        Ok(c)
    }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("`{key}`: `{s}` is not a number")))
        })
        .collect()
}

/// A single level is broadcast to every series.
fn quantiles(settings: &Settings, m: usize) -> Result<QuantileSpec> {
    let levels = settings
        .list("tau")?
        .ok_or_else(|| Error::invalid("missing required `--tau`"))?;
    match levels.len() {
        1 => QuantileSpec::uniform(m, levels[0]),
        l if l == m => QuantileSpec::new(levels),
        l => Err(Error::invalid(format!("{l} quantile levels for {m} series"))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::data(format!("cannot open `{}`: {e}", path.display())))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref(), &[COMMON_KEYS, SIM_KEYS])?;
    s.common(&args.common);
    s.set("n", &args.n);
    s.set("tau", &args.tau);
    s.set("rho", &args.rho);
    let defaults = SimConfig::default();
    let config = SimConfig {
        n: s.get("n")?.unwrap_or(defaults.n),
        tau: s.list("tau")?.unwrap_or(defaults.tau),
        rho: s.get("rho")?.unwrap_or(defaults.rho),
        seed: s.get("seed")?.unwrap_or(defaults.seed),
    };
    let (data, truth) = generate(&config)?;
    let dir = s.out_dir()?;
    write_dataset(create(&dir.join("data.csv"))?, &data, None)?;
    serde_json::to_writer_pretty(create(&dir.join("truth.json"))?, &truth)?;
    println!(
        "wrote {} rows x {} series ({} predictors each) to {}",
        data.n(),
        data.m(),
        crate::simdata::PREDICTORS,
        dir.display()
    );
    Ok(())
}

fn write_train_outputs(dir: &Path, sample: &PosteriorSample, threshold: f64, truth: Option<&[f64]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_draws(create(&dir.join("draws.csv"))?, sample)?;
    serde_json::to_writer_pretty(create(&dir.join("draws.json"))?, &DrawsMeta::from_sample(sample))?;
    let inclusion = inclusion_probabilities(sample)?;
    write_inclusion(create(&dir.join("inclusion.csv"))?, &inclusion, threshold)?;
    let summary = posterior_coefficient_summary(sample, truth)?;
    write_coefficients(create(&dir.join("coefficients.csv"))?, &summary)?;

    let selected: Vec<&str> = inclusion
        .labels
        .iter()
        .zip(inclusion.selected(threshold))
        .filter(|(_, s)| *s)
        .map(|(l, _)| l.as_str())
        .collect();
    println!("  phi acceptance: {:?}", sample.phi_acceptance);
    println!("  selected ({} of {}): {}", selected.len(), inclusion.labels.len(), selected.join(" "));
    println!("  outputs in {}", dir.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut s = Settings::load(
        args.common.config.as_deref(),
        &[COMMON_KEYS, MCMC_KEYS, &["data", "tau", "chains", "truth"]],
    )?;
    s.common(&args.common);
    s.mcmc_flags(&args.mcmc);
    s.set("data", &args.data.as_ref().map(|p| p.display().to_string()));
    s.set("tau", &args.tau);
    s.set("chains", &args.chains);
    s.set("truth", &args.truth.as_ref().map(|p| p.display().to_string()));

    let config = s.mcmc_config()?;
    let chains: usize = s.get("chains")?.unwrap_or(1);
    let data = read_frame(open(&s.required_path("data")?)?)?.into_dataset()?;
    let tau = quantiles(&s, data.m())?;
    let truth: Option<TruthRecord> = s
        .path("truth")
        .map(|p| serde_json::from_reader(open(&p)?).map_err(Error::from))
        .transpose()?;
    let truth_beta = truth.as_ref().map(|t| t.beta.as_slice());
    let dir = s.out_dir()?;

    println!(
        "iterations = {}, burn_in = {}, threshold = {}, seed = {}, chains = {chains}",
        config.iterations, config.burn_in, config.threshold_inclusion, config.seed
    );
    let samples = train_chains(&data, &tau, &config, chains)?;
    for (c, sample) in samples.iter().enumerate() {
        let target = if chains == 1 { dir.clone() } else { dir.join(format!("chain{}", c + 1)) };
        println!("chain {}:", c + 1);
        write_train_outputs(&target, sample, config.threshold_inclusion, truth_beta)?;
    }
    Ok(())
}

pub fn cmd_forecast(args: &ForecastArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref(), &[COMMON_KEYS, &["draws", "data"]])?;
    s.common(&args.common);
    s.set("draws", &args.draws.as_ref().map(|p| p.display().to_string()));
    s.set("data", &args.data.as_ref().map(|p| p.display().to_string()));

    let draws_path = s.required_path("draws")?;
    let meta: DrawsMeta = serde_json::from_reader(open(&draws_path.with_extension("json"))?)?;
    let mut sample = read_draws(open(&draws_path)?, &meta)?;
    let frame = read_frame(open(&s.required_path("data")?)?)?;
    if frame.series != sample.series_names {
        return Err(Error::data(format!(
            "forecast file has series {:?}, the draws were trained on {:?}",
            frame.series, sample.series_names
        )));
    }
    let counts: Vec<usize> = frame.predictors.iter().map(|x| x.ncols()).collect();
    if counts != sample.predictor_counts {
        return Err(Error::data(format!(
            "forecast file has {counts:?} predictors per series, the draws expect {:?}",
            sample.predictor_counts
        )));
    }

    let mut rng = Rng::new(s.get("seed")?.unwrap_or(1));
    let mut results = Vec::with_capacity(frame.rows());
    for r in 0..frame.rows() {
        let mut result = forecast_one_step(&sample, &frame.predictor_row(r), ForecastOptions::default(), &mut rng)?;
        let realized = frame.y.as_ref().map(|y| DVector::from_iterator(y.ncols(), y.row(r).iter().copied()));
        if let Some(y) = &realized {
            result.score(y, &sample.tau)?;
        }
        results.push((frame.time[r], result, realized));
        propagate_trend(&mut sample, &mut rng)?;
    }
    let dir = s.out_dir()?;
    write_forecasts(create(&dir.join("forecast.csv"))?, &sample.series_names, &results)?;
    println!("wrote {} forecast rows to {}", results.len(), dir.join("forecast.csv").display());
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut s = Settings::load(
        args.common.config.as_deref(),
        &[COMMON_KEYS, MCMC_KEYS, &["data", "tau", "steps", "mode"]],
    )?;
    s.common(&args.common);
    s.mcmc_flags(&args.mcmc);
    s.set("data", &args.data.as_ref().map(|p| p.display().to_string()));
    s.set("tau", &args.tau);
    s.set("steps", &args.steps);
    s.set("mode", &args.mode);

    let config = s.mcmc_config()?;
    let steps: usize = s.get("steps")?.unwrap_or(10);
    let mode = match s.values.get("mode").map(String::as_str) {
        None | Some("refit") => RollingMode::Refit,
        Some("fixed") => RollingMode::Fixed,
        Some(other) => return Err(Error::invalid(format!("`mode`: expected refit or fixed, got `{other}`"))),
    };
    let frame = read_frame(open(&s.required_path("data")?)?)?;
    let time = frame.time.clone();
    let data = frame.into_dataset()?;
    let tau = quantiles(&s, data.m())?;
    let trajectory = rolling_evaluate(&data, &tau, &config, steps, mode)?;
    let dir = s.out_dir()?;
    write_evaluation(create(&dir.join("evaluation.csv"))?, data.series_names(), &trajectory, &time)?;
    if let Some(last) = trajectory.last() {
        println!(
            "after {steps} steps: cumulative loss {:.4}, baseline {:.4}",
            last.cumulative_loss, last.cumulative_baseline_loss
        );
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
        Error::Decomposition { .. } | Error::Numerical { .. } => 4,
        Error::Kernel { source, .. } => exit_code(source),
    }
}

/// Parses `args` (program name first), runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
