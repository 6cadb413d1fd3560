//! Trajectory generation, Monte Carlo delay/false-alarm estimation, and
//! finite-difference threshold optimization.
//!
//! All randomness is counter-based: every simulated run draws its own RNG
//! from `(master seed, run index)`, so serial and parallel execution
//! produce identical results.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{mean_se, stopping_time, DetectionOutcome, DetectorConfig, Estimate};
use crate::filter::{filter_init, filter_step, FilterError};
use crate::model::{AugmentedModel, Density};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("cannot sample from a callback density (state {state})")]
    SampleUnsupported { state: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("empty threshold grid")]
    EmptyGrid,
    #[error("invalid optimizer config: {0}")]
    BadOptimizerConfig(&'static str),
    #[error("every simulated run failed; first error: {0}")]
    AllRunsFailed(String),
}

/// Identifies the RNG stream a trajectory was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub master: u64,
    pub run_index: u64,
}

/// One simulated realization of the augmented chain.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Augmented state indices for `k = 0..=horizon`.
    pub states: Vec<usize>,
    /// First `k >= 1` with the state in the post-change set, if any.
    pub nu: Option<usize>,
    /// Observations for `k = 1..=horizon`, flattened row-major.
    pub y: Vec<f64>,
    /// Components per observation.
    pub obs_dim: usize,
    pub seed: Option<TrajectorySeed>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// Observation at step `k` (1-based).
    pub fn observation(&self, k: usize) -> &[f64] {
        &self.y[(k - 1) * self.obs_dim..k * self.obs_dim]
    }

    pub fn observations(&self) -> impl Iterator<Item = &[f64]> {
        self.y.chunks_exact(self.obs_dim)
    }
}

fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn sample_observation(
    density: &Density,
    state: usize,
    out: &mut Vec<f64>,
    rng: &mut impl Rng,
) -> Result<(), SimError> {
    match density {
        Density::Gaussian { mean, variance } => {
            let normal = Normal::new(*mean, variance.sqrt()).expect("validated variance");
            out.push(normal.sample(rng));
            Ok(())
        }
        Density::ProductGaussian { means, variances } => {
            for (&m, &v) in means.iter().zip(variances) {
                let normal = Normal::new(m, v.sqrt()).expect("validated variance");
                out.push(normal.sample(rng));
            }
            Ok(())
        }
        Density::LogDensity(_) => Err(SimError::SampleUnsupported { state }),
    }
}

/// RNG for run `run_index` under `master` seed. SplitMix64 whitens the
/// pair into the ChaCha key so nearby indices do not correlate.
pub fn run_rng(master: u64, run_index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut x = master ^ run_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for chunk in seed.chunks_exact_mut(8) {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Simulate states and observations out to `horizon`.
pub fn sample_trajectory(
    aug: &AugmentedModel,
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory, SimError> {
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    let obs_dim = aug.obs.dim().unwrap_or(1);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon * obs_dim);
    let mut nu = None;

    let mut state = sample_categorical(&aug.initial, rng);
    states.push(state);
    for k in 1..=horizon {
        state = sample_categorical(aug.a.column(state), rng);
        states.push(state);
        if nu.is_none() && !aug.spaces.is_pre_change(state) {
            nu = Some(k);
        }
        sample_observation(aug.obs.density(state), state, &mut y, rng)?;
    }
    Ok(Trajectory {
        states,
        nu,
        y,
        obs_dim,
        seed: None,
    })
}

/// Simulate only the change time, stopping as soon as the chain leaves the
/// pre-change set or the cap is reached. Much cheaper than a full
/// trajectory when no observations are needed.
pub fn sample_change_time(
    aug: &AugmentedModel,
    cap: usize,
    rng: &mut impl Rng,
) -> Option<usize> {
    let mut state = sample_categorical(&aug.initial, rng);
    for k in 1..=cap {
        state = sample_categorical(aug.a.column(state), rng);
        if !aug.spaces.is_pre_change(state) {
            return Some(k);
        }
    }
    None
}

/// Logistic squashing of the unconstrained threshold parameter.
pub fn sigmoid(phi: f64) -> f64 {
    1.0 / (1.0 + (-phi).exp())
}

/// Inverse of [`sigmoid`]; defined only on the open interval (0,1).
pub fn inverse_sigmoid(h: f64) -> Result<f64, SimError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(SimError::BadOptimizerConfig("initial threshold must be in (0,1)"));
    }
    Ok((h / (1.0 - h)).ln())
}

/// Aggregated Monte Carlo estimates for one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub h: f64,
    pub runs: usize,
    /// Mean `(tau - nu)^+` over all runs, censored runs included.
    pub add: Estimate,
    /// Mean delay over runs that alarmed at or after the change.
    pub add_conditional: f64,
    /// Fraction of runs alarming strictly before the change.
    pub pfa_frac: Estimate,
    /// Posterior-based estimate `1 - mean(m2 at alarm)`.
    pub pfa_stat: Estimate,
    /// Mean `c * delay + 1{false alarm}`.
    pub cost: Estimate,
    /// Lower-variance cost estimate from the statistic traces.
    pub mode_cost: Estimate,
    pub censored: usize,
    /// Runs dropped because the filter underflowed.
    pub failed: usize,
}

/// Full sweep output: one row per threshold plus the provenance needed to
/// replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub rows: Vec<ThresholdReport>,
    pub seed: u64,
    pub c: f64,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_digest: Option<String>,
}

struct RunRecord {
    outcome: DetectionOutcome,
    mode_cost: f64,
}

/// Per-run evaluation shared by every threshold in the grid: simulate one
/// trajectory, filter it once, then read each stopping time off the same
/// statistic trace (common random numbers).
fn evaluate_run(
    aug: &AugmentedModel,
    h_grid: &[f64],
    c: f64,
    horizon: usize,
    master_seed: u64,
    run_index: u64,
) -> Result<Vec<RunRecord>, SimError> {
    let mut rng = run_rng(master_seed, run_index);
    let traj = sample_trajectory(aug, horizon, &mut rng)?;

    // m2 trace indexed by k = 0..=horizon, with the running prefix sum for
    // the mode-form cost.
    let mut m2 = Vec::with_capacity(horizon + 1);
    let mut prefix = Vec::with_capacity(horizon + 2);
    let belief0 = filter_init(aug);
    m2.push(belief0.m2);
    prefix.push(0.0);
    let mut belief = belief0;
    for y in traj.observations() {
        prefix.push(prefix.last().unwrap() + belief.m2);
        belief = filter_step(&belief, y, aug)?;
        m2.push(belief.m2);
    }
    prefix.push(prefix.last().unwrap() + belief.m2);

    let records = h_grid
        .iter()
        .map(|&h| {
            let tau = stopping_time(m2.iter().copied(), h);
            let t = tau.unwrap_or(horizon);
            let outcome = DetectionOutcome::new(tau, horizon, traj.nu, m2[t]);
            let mode_cost = c * prefix[t] + (1.0 - m2[t]);
            RunRecord { outcome, mode_cost }
        })
        .collect();
    Ok(records)
}

fn aggregate(h: f64, c: f64, records: &[RunRecord], failed: usize) -> ThresholdReport {
    let runs = records.len();
    let delays: Vec<f64> = records.iter().map(|r| r.outcome.delay as f64).collect();
    let add = mean_se(&delays);
    let detected: Vec<f64> = records
        .iter()
        .filter(|r| !r.outcome.false_alarm)
        .map(|r| r.outcome.delay as f64)
        .collect();
    let add_conditional = if detected.is_empty() {
        f64::NAN
    } else {
        detected.iter().sum::<f64>() / detected.len() as f64
    };
    let fa: Vec<f64> = records
        .iter()
        .map(|r| if r.outcome.false_alarm { 1.0 } else { 0.0 })
        .collect();
    let pre_mass: Vec<f64> = records.iter().map(|r| 1.0 - r.outcome.m2_at_tau).collect();
    let costs: Vec<f64> = records
        .iter()
        .map(|r| {
            c * r.outcome.delay as f64 + if r.outcome.false_alarm { 1.0 } else { 0.0 }
        })
        .collect();
    let mode_costs: Vec<f64> = records.iter().map(|r| r.mode_cost).collect();
    ThresholdReport {
        h,
        runs,
        add,
        add_conditional,
        pfa_frac: mean_se(&fa),
        pfa_stat: mean_se(&pre_mass),
        cost: mean_se(&costs),
        mode_cost: mean_se(&mode_costs),
        censored: records.iter().filter(|r| r.outcome.censored).count(),
        failed,
    }
}

/// Run `n_runs` independent trajectories and estimate delay, false-alarm,
/// and cost statistics for every threshold in `h_grid` with common random
/// numbers. Rows come back sorted by threshold.
pub fn monte_carlo_grid(
    aug: &AugmentedModel,
    h_grid: &[f64],
    c: f64,
    horizon: usize,
    n_runs: usize,
    seed: u64,
) -> Result<MonteCarloReport, SimError> {
    if h_grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    let mut grid: Vec<f64> = h_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let results: Vec<Result<Vec<RunRecord>, SimError>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|run| evaluate_run(aug, &grid, c, horizon, seed, run))
        .collect();

    let mut per_h: Vec<Vec<RunRecord>> = grid.iter().map(|_| Vec::new()).collect();
    let mut failed = 0usize;
    let mut first_err: Option<String> = None;
    for res in results {
        match res {
            Ok(records) => {
                for (bucket, rec) in per_h.iter_mut().zip(records) {
                    bucket.push(rec);
                }
            }
            Err(e) => {
                failed += 1;
                first_err.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if per_h[0].is_empty() {
        return Err(SimError::AllRunsFailed(
            first_err.unwrap_or_else(|| "no runs".into()),
        ));
    }
    let rows = grid
        .iter()
        .zip(&per_h)
        .map(|(&h, records)| aggregate(h, c, records, failed))
        .collect();
    Ok(MonteCarloReport {
        rows,
        seed,
        c,
        horizon,
        model_digest: None,
    })
}

/// Single-threshold convenience wrapper around [`monte_carlo_grid`].
pub fn monte_carlo(
    aug: &AugmentedModel,
    config: &DetectorConfig,
    n_runs: usize,
    seed: u64,
) -> Result<ThresholdReport, SimError> {
    let report = monte_carlo_grid(
        aug,
        &[config.h],
        config.c,
        config.max_horizon,
        n_runs,
        seed,
    )?;
    Ok(report.rows.into_iter().next().unwrap())
}

/// Sweep an explicit grid, `runs_per_h` trajectories shared across the
/// grid via common random numbers.
pub fn cost_curve(
    aug: &AugmentedModel,
    c: f64,
    h_grid: &[f64],
    runs_per_h: usize,
    horizon: usize,
    seed: u64,
) -> Result<MonteCarloReport, SimError> {
    monte_carlo_grid(aug, h_grid, c, horizon, runs_per_h, seed)
}

/// Direction of the finite-difference update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSign {
    /// Step against the gradient estimate (minimizes the cost). Default.
    CostDecreasing,
    /// Step along the gradient estimate.
    Ascent,
}

impl Default for GradientSign {
    fn default() -> Self {
        GradientSign::CostDecreasing
    }
}

/// Finite-difference solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Solver iterations.
    pub n_steps: usize,
    /// Initial learning rate.
    pub eta0: f64,
    /// Exponential decay rate of the learning rate.
    pub decay: f64,
    /// Finite-difference half-width, in unconstrained parameter space.
    pub delta: f64,
    /// Simulated runs per cost evaluation.
    pub samples_per_eval: usize,
    /// Initial unconstrained parameter (0 corresponds to h = 0.5).
    pub phi0: f64,
    /// Simulation horizon per run.
    pub horizon: usize,
    #[serde(default)]
    pub sign: GradientSign,
    /// Reuse trajectories between the two sides of each finite difference.
    #[serde(default = "default_true")]
    pub common_random_numbers: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl OptimizerConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.n_steps == 0 {
            return Err(SimError::BadOptimizerConfig("n_steps must be at least 1"));
        }
        if !(self.eta0 >= 0.0) {
            return Err(SimError::BadOptimizerConfig("eta0 must be nonnegative"));
        }
        if !(self.delta > 0.0) {
            return Err(SimError::BadOptimizerConfig("delta must be positive"));
        }
        if self.samples_per_eval == 0 {
            return Err(SimError::BadOptimizerConfig(
                "samples_per_eval must be at least 1",
            ));
        }
        if self.horizon == 0 {
            return Err(SimError::BadOptimizerConfig("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// One recorded solver iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerStep {
    pub n: usize,
    pub phi: f64,
    pub h: f64,
    pub eta: f64,
    pub j_plus: f64,
    pub j_minus: f64,
    pub g_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub h_star: f64,
    pub phi_final: f64,
    pub trace: Vec<OptimizerStep>,
}

/// Core finite-difference loop over an arbitrary noisy objective.
/// `objective(eval_seed, phi)` returns an estimate of the cost at the
/// threshold `sigmoid(phi)`; the two sides of each difference receive the
/// same seed when common random numbers are enabled.
pub fn optimize_with_objective<F>(
    opt: &OptimizerConfig,
    mut objective: F,
) -> Result<OptimizerResult, SimError>
where
    F: FnMut(u64, f64) -> Result<f64, SimError>,
{
    opt.validate()?;
    let n_total = opt.n_steps;
    let mut phi = opt.phi0;
    let mut trace = Vec::with_capacity(n_total);
    for n in 0..n_total {
        let eta = opt.eta0 * (-opt.decay * n as f64 / n_total as f64).exp();
        let seed_plus = opt.seed.wrapping_add(2 * n as u64);
        let seed_minus = if opt.common_random_numbers {
            seed_plus
        } else {
            opt.seed.wrapping_add(2 * n as u64 + 1)
        };
        let j_plus = objective(seed_plus, phi + opt.delta)?;
        let j_minus = objective(seed_minus, phi - opt.delta)?;
        let g_hat = (j_plus - j_minus) / (2.0 * opt.delta);
        let step = match opt.sign {
            GradientSign::CostDecreasing => -eta * g_hat,
            GradientSign::Ascent => eta * g_hat,
        };
        trace.push(OptimizerStep {
            n,
            phi,
            h: sigmoid(phi),
            eta,
            j_plus,
            j_minus,
            g_hat,
        });
        phi += step;
    }
    Ok(OptimizerResult {
        h_star: sigmoid(phi),
        phi_final: phi,
        trace,
    })
}

/// Tune the detection threshold by stochastic finite differences on the
/// simulated cost.
pub fn optimize_threshold(
    aug: &AugmentedModel,
    c: f64,
    opt: &OptimizerConfig,
) -> Result<OptimizerResult, SimError> {
    let samples = opt.samples_per_eval;
    let horizon = opt.horizon;
    optimize_with_objective(opt, |eval_seed, phi| {
        let h = sigmoid(phi);
        let report = monte_carlo_grid(aug, &[h], c, horizon, samples, eval_seed)?;
        Ok(report.rows[0].cost.mean)
    })
}
