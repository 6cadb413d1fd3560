//! Bayesian quickest change detection in hidden Markov models.
//!
//! A two-regime HMM (a pre-change chain that jumps, at a random time, into
//! an absorbing post-change chain) is compiled into a single augmented
//! Markov chain. A normalized forward filter tracks the posterior
//! probability that the change has occurred, and an alarm is raised the
//! first time that statistic strictly exceeds a threshold. The crate also
//! ships four structured problem builders that reduce to the same form,
//! Monte Carlo evaluation of delay/false-alarm tradeoffs, and a stochastic
//! finite-difference tuner for the threshold.
//!
//! Transition matrices are column-stochastic throughout: entry `(i, j)` is
//! `P(next = i | current = j)`.

pub mod detector;
pub mod filter;
pub mod io;
pub mod model;
pub mod problems;
pub mod scenarios;
pub mod simulate;

pub use detector::{
    empirical_cost, empirical_pfa, mode_form_cost, pfa_bound, stopping_time, DetectionOutcome,
    DetectorConfig,
};
pub use filter::{filter_init, filter_run, filter_step, filter_stream, Belief};
pub use model::{
    build_augmented, constant_rho_mode_chain, mode_marginal, AugmentedModel, ChangePrior, Density,
    Model, ModelError, ObservationModel, StateSpacePair, TransitionMatrix,
};
pub use simulate::{
    cost_curve, inverse_sigmoid, monte_carlo, monte_carlo_grid, optimize_threshold, run_rng,
    sample_trajectory, sigmoid, MonteCarloReport, OptimizerConfig, OptimizerResult,
    ThresholdReport, Trajectory,
};
