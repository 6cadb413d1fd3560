//! Command-line front end: compile structured specs to models, simulate
//! runs, filter observation logs, sweep thresholds, and tune thresholds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::RngCore;
use serde::Deserialize;

use hmmqcd::detector::DetectorConfig;
use hmmqcd::filter::{filter_init, filter_step};
use hmmqcd::io::{
    model_digest, read_observation_csv, write_optimizer_csv, write_sweep_csv,
    write_trace_csv, write_trajectory_csv, ModelDoc, ProblemDoc, ReportRowDoc,
};
use hmmqcd::model::{build_augmented, AugmentedModel, Model};
use hmmqcd::scenarios;
use hmmqcd::simulate::{
    cost_curve, inverse_sigmoid, monte_carlo_grid, optimize_threshold, run_rng, sample_trajectory,
    GradientSign, MonteCarloReport, OptimizerConfig,
};

#[derive(Parser)]
#[command(name = "hmmqcd", about = "Bayesian quickest change detection in HMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Master RNG seed; drawn and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo batches (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output format for report files.
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a structured problem spec into a plain model JSON.
    Build {
        /// Problem spec JSON (kind-tagged).
        #[arg(long)]
        spec: PathBuf,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one run: trajectory CSV, filter trace CSV, and the
    /// alarm/change summary.
    Simulate(CommonOpts),
    /// Filter a provided observation CSV against a model and threshold.
    Detect(CommonOpts),
    /// Monte Carlo threshold sweep (optionally the built-in batch study).
    Sweep(CommonOpts),
    /// Tune the threshold by stochastic finite differences.
    Optimize(CommonOpts),
    /// Empirical cost versus threshold over a grid.
    CostCurve(CommonOpts),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    version: u32,
    model: ModelSource,
    #[serde(default)]
    detector: Option<DetectorDoc>,
    #[serde(default)]
    experiment: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSource {
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    spec: Option<PathBuf>,
    #[serde(default)]
    builtin: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorDoc {
    h: f64,
    c: f64,
    horizon: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectExperiment {
    observations: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepExperiment {
    #[serde(default)]
    h_grid: Vec<f64>,
    runs: usize,
    /// Run the eight built-in study configurations instead of the
    /// configured model.
    #[serde(default)]
    batch: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeExperiment {
    n_steps: usize,
    eta0: f64,
    decay: f64,
    delta: f64,
    samples_per_eval: usize,
    h0: f64,
    #[serde(default)]
    sign: Option<GradientSign>,
    #[serde(default)]
    common_random_numbers: Option<bool>,
    /// Optional overlay grid evaluated after the solver finishes.
    #[serde(default)]
    cost_curve_grid: Option<Vec<f64>>,
    #[serde(default)]
    cost_curve_runs: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveExperiment {
    h_grid: Vec<f64>,
    runs: usize,
}

/// Config/validation failure (exit 2) vs runtime failure (exit 1).
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))
}

fn load_config(path: &Path) -> Result<ConfigDoc, CliError> {
    let cfg: ConfigDoc = read_json(path)?;
    if cfg.version != 1 {
        return Err(CliError::Config(format!(
            "unsupported config version {}",
            cfg.version
        )));
    }
    Ok(cfg)
}

fn load_model(source: &ModelSource) -> Result<(Model, Vec<String>), CliError> {
    let sources = [
        source.path.is_some(),
        source.spec.is_some(),
        source.builtin.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if sources != 1 {
        return Err(CliError::Config(
            "model must name exactly one of `path`, `spec`, `builtin`".into(),
        ));
    }
    if let Some(path) = &source.path {
        let doc: ModelDoc = read_json(path)?;
        return Ok((doc.to_model().map_err(config_err)?, Vec::new()));
    }
    if let Some(path) = &source.spec {
        let doc: ProblemDoc = read_json(path)?;
        return doc.build().map_err(config_err);
    }
    let name = source.builtin.as_ref().unwrap();
    scenarios::builtin(name)
        .map(|m| (m, Vec::new()))
        .ok_or_else(|| CliError::Config(format!("unknown builtin model {name:?}")))
}

fn detector_config(cfg: &ConfigDoc) -> Result<DetectorConfig, CliError> {
    let doc = cfg
        .detector
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing `detector`".into()))?;
    DetectorConfig::new(doc.h, doc.c, doc.horizon).map_err(config_err)
}

fn experiment<T: serde::de::DeserializeOwned>(cfg: &ConfigDoc) -> Result<T, CliError> {
    let value = cfg
        .experiment
        .clone()
        .unwrap_or(serde_json::Value::Object(Default::default()));
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("experiment: {e}")))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s = rand::thread_rng().next_u64();
            println!("seed {s} (pass --seed {s} to replay)");
            s
        }
    }
}

fn setup(opts: &CommonOpts) -> Result<(ConfigDoc, u64), CliError> {
    if let Some(workers) = opts.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(runtime_err)?;
    }
    fs::create_dir_all(&opts.out)
        .map_err(|e| CliError::Config(format!("{}: {}", opts.out.display(), e)))?;
    let cfg = load_config(&opts.config)?;
    Ok((cfg, resolve_seed(opts.seed)))
}

fn augmented(cfg: &ConfigDoc) -> Result<(AugmentedModel, String), CliError> {
    let (model, warnings) = load_model(&cfg.model)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let digest = model_digest(&model).map_err(runtime_err)?;
    let aug = build_augmented(&model).map_err(config_err)?;
    Ok((aug, digest))
}

fn cmd_build(spec: &Path, out: &Path) -> Result<(), CliError> {
    let doc: ProblemDoc = read_json(spec)?;
    let (model, warnings) = doc.build().map_err(config_err)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let model_doc = ModelDoc::from_model(&model).map_err(runtime_err)?;
    let json = serde_json::to_string_pretty(&model_doc).map_err(runtime_err)?;
    fs::write(out, json).map_err(runtime_err)?;
    let aug = build_augmented(&model).map_err(runtime_err)?;
    let n = aug.n();
    let zeros = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .filter(|&(i, j)| aug.a.entry(i, j) == 0.0)
        .count();
    println!(
        "wrote {} (N = {}, n_alpha = {}, n_beta = {}, zero entries {}/{})",
        out.display(),
        n,
        model.spaces.n_alpha,
        model.spaces.n_beta,
        zeros,
        n * n
    );
    Ok(())
}

fn cmd_simulate(opts: &CommonOpts) -> Result<(), CliError> {
    let (cfg, seed) = setup(opts)?;
    let det = detector_config(&cfg)?;
    let (aug, digest) = augmented(&cfg)?;

    let mut rng = run_rng(seed, 0);
    let traj = sample_trajectory(&aug, det.max_horizon, &mut rng).map_err(runtime_err)?;

    let traj_path = opts.out.join("trajectory.csv");
    let file = fs::File::create(&traj_path).map_err(runtime_err)?;
    write_trajectory_csv(file, &traj, seed, Some(&digest)).map_err(runtime_err)?;

    let mut belief = filter_init(&aug);
    let mut rows = Vec::with_capacity(det.max_horizon);
    let mut m2_trace = vec![belief.m2];
    for y in traj.observations() {
        belief = filter_step(&belief, y, &aug).map_err(runtime_err)?;
        m2_trace.push(belief.m2);
        rows.push((belief.k, y.to_vec(), belief.z.clone(), belief.m2));
    }
    let trace_path = opts.out.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(runtime_err)?;
    write_trace_csv(
        file,
        traj.obs_dim,
        aug.n(),
        rows.into_iter(),
        seed,
        Some(&digest),
    )
    .map_err(runtime_err)?;

    let tau = hmmqcd::stopping_time(m2_trace.iter().copied(), det.h);
    match (traj.nu, tau) {
        (Some(nu), Some(tau)) => println!(
            "nu {nu} tau {tau} delay {}{}",
            tau.saturating_sub(nu),
            if tau < nu { " (false alarm)" } else { "" }
        ),
        (Some(nu), None) => println!("nu {nu} tau censored at {}", det.max_horizon),
        (None, Some(tau)) => println!("nu none tau {tau} (false alarm)"),
        (None, None) => println!("nu none tau censored at {}", det.max_horizon),
    }
    println!(
        "wrote {} and {}",
        traj_path.display(),
        trace_path.display()
    );
    Ok(())
}

fn cmd_detect(opts: &CommonOpts) -> Result<(), CliError> {
    let (cfg, seed) = setup(opts)?;
    let det = detector_config(&cfg)?;
    let exp: DetectExperiment = experiment(&cfg)?;
    let (aug, digest) = augmented(&cfg)?;

    let text = fs::read_to_string(&exp.observations)
        .map_err(|e| CliError::Config(format!("{}: {}", exp.observations.display(), e)))?;
    let observations = read_observation_csv(&text).map_err(config_err)?;

    let mut belief = filter_init(&aug);
    let mut m2_trace = vec![belief.m2];
    let mut rows = Vec::with_capacity(observations.len());
    for y in &observations {
        belief = filter_step(&belief, y, &aug).map_err(runtime_err)?;
        m2_trace.push(belief.m2);
        rows.push((belief.k, y.clone(), belief.z.clone(), belief.m2));
    }
    let trace_path = opts.out.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(runtime_err)?;
    let obs_dim = observations.first().map_or(1, Vec::len);
    write_trace_csv(file, obs_dim, aug.n(), rows.into_iter(), seed, Some(&digest))
        .map_err(runtime_err)?;

    match hmmqcd::stopping_time(m2_trace.iter().copied(), det.h) {
        Some(tau) => println!("alarm at k = {tau} (m2 = {})", m2_trace[tau]),
        None => println!(
            "no alarm within {} observations (final m2 = {})",
            observations.len(),
            m2_trace.last().unwrap()
        ),
    }
    println!("wrote {}", trace_path.display());
    Ok(())
}

fn write_reports(
    opts: &CommonOpts,
    stem: &str,
    reports: &[(Option<String>, MonteCarloReport)],
    digest: Option<&str>,
) -> Result<(), CliError> {
    let csv_path = opts.out.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv_path).map_err(runtime_err)?;
    write_sweep_csv(file, reports, digest).map_err(runtime_err)?;
    println!("wrote {}", csv_path.display());

    if opts.format == Format::Json {
        let mut docs = Vec::new();
        for (tag, report) in reports {
            for row in &report.rows {
                let mut value =
                    serde_json::to_value(ReportRowDoc::new(row, report.c, report.seed))
                        .map_err(runtime_err)?;
                if let Some(tag) = tag {
                    value["tag"] = serde_json::Value::String(tag.clone());
                }
                docs.push(value);
            }
        }
        let json_path = opts.out.join(format!("{stem}.json"));
        fs::write(
            &json_path,
            serde_json::to_string_pretty(&docs).map_err(runtime_err)?,
        )
        .map_err(runtime_err)?;
        println!("wrote {}", json_path.display());
    }
    Ok(())
}

fn cmd_sweep(opts: &CommonOpts) -> Result<(), CliError> {
    let (cfg, seed) = setup(opts)?;
    let det = detector_config(&cfg)?;
    let exp: SweepExperiment = experiment(&cfg)?;
    if exp.h_grid.is_empty() {
        return Err(CliError::Config("sweep requires a nonempty h_grid".into()));
    }

    if exp.batch {
        let mut reports = Vec::new();
        let mut digest = None;
        for row in scenarios::study_rows() {
            let model = row.model();
            digest.get_or_insert(model_digest(&model).map_err(runtime_err)?);
            let aug = build_augmented(&model).map_err(runtime_err)?;
            let report =
                monte_carlo_grid(&aug, &exp.h_grid, det.c, det.max_horizon, exp.runs, seed)
                    .map_err(runtime_err)?;
            reports.push((Some(row.tag.to_string()), report));
        }
        write_reports(opts, "sweep", &reports, digest.as_deref())
    } else {
        let (aug, digest) = augmented(&cfg)?;
        let report = monte_carlo_grid(&aug, &exp.h_grid, det.c, det.max_horizon, exp.runs, seed)
            .map_err(runtime_err)?;
        write_reports(opts, "sweep", &[(None, report)], Some(&digest))
    }
}

fn cmd_optimize(opts: &CommonOpts) -> Result<(), CliError> {
    let (cfg, seed) = setup(opts)?;
    let det = detector_config(&cfg)?;
    let exp: OptimizeExperiment = experiment(&cfg)?;
    let (aug, digest) = augmented(&cfg)?;

    let opt = OptimizerConfig {
        n_steps: exp.n_steps,
        eta0: exp.eta0,
        decay: exp.decay,
        delta: exp.delta,
        samples_per_eval: exp.samples_per_eval,
        phi0: inverse_sigmoid(exp.h0).map_err(config_err)?,
        horizon: det.max_horizon,
        sign: exp.sign.unwrap_or_default(),
        common_random_numbers: exp.common_random_numbers.unwrap_or(true),
        seed,
    };
    let result = optimize_threshold(&aug, det.c, &opt).map_err(runtime_err)?;

    let trace_path = opts.out.join("optimizer_trace.csv");
    let file = fs::File::create(&trace_path).map_err(runtime_err)?;
    write_optimizer_csv(file, &result.trace, seed, Some(&digest)).map_err(runtime_err)?;
    println!("h_star {}", result.h_star);
    println!("wrote {}", trace_path.display());

    if let Some(grid) = exp.cost_curve_grid {
        let runs = exp.cost_curve_runs.unwrap_or(1000);
        let report = cost_curve(&aug, det.c, &grid, runs, det.max_horizon, seed)
            .map_err(runtime_err)?;
        write_reports(opts, "cost_curve", &[(None, report)], Some(&digest))?;
    }
    Ok(())
}

fn cmd_cost_curve(opts: &CommonOpts) -> Result<(), CliError> {
    let (cfg, seed) = setup(opts)?;
    let det = detector_config(&cfg)?;
    let exp: CurveExperiment = experiment(&cfg)?;
    if exp.h_grid.is_empty() {
        return Err(CliError::Config("cost-curve requires a nonempty h_grid".into()));
    }
    let (aug, digest) = augmented(&cfg)?;
    let report = cost_curve(&aug, det.c, &exp.h_grid, exp.runs, det.max_horizon, seed)
        .map_err(runtime_err)?;
    write_reports(opts, "cost_curve", &[(None, report)], Some(&digest))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build { spec, out } => cmd_build(spec, out),
        Command::Simulate(opts) => cmd_simulate(opts),
        Command::Detect(opts) => cmd_detect(opts),
        Command::Sweep(opts) => cmd_sweep(opts),
        Command::Optimize(opts) => cmd_optimize(opts),
        Command::CostCurve(opts) => cmd_cost_curve(opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
