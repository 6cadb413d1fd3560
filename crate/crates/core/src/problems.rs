//! Builders that compile four structured detection problems into plain
//! two-regime models: periodic observation statistics, a moving target in
//! a sensor network, a change sweeping across a sensor array, and a change
//! in an unknown subset of data streams.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    ChangePrior, Density, Model, ModelError, ObservationModel, StateSpacePair, TransitionMatrix,
};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context} must be nonempty")]
    Empty { context: &'static str },
    #[error("{context}: expected length {expected}, got {got}")]
    Length {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("stream count {got} exceeds the cap of {cap} (2^d - 1 states)")]
    StreamCountOverCap { got: usize, cap: usize },
    #[error("subset probability assigned to the empty set")]
    EmptySubsetMass,
    #[error("subset bitmask {mask:#b} out of range for {streams} streams")]
    SubsetMaskOutOfRange { mask: u32, streams: usize },
    #[error("subset probabilities sum to {sum}, not 1")]
    SubsetMassNotOne { sum: f64 },
}

/// Deterministic cyclic-shift matrix: state `j` moves to `(j + 1) mod n`.
fn cyclic_shift(name: &'static str, n: usize) -> Result<TransitionMatrix, ModelError> {
    let mut cols = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter_mut().enumerate() {
        col[(j + 1) % n] = 1.0;
    }
    TransitionMatrix::from_columns(name, &cols)
}

/// Combine scalar per-channel densities into one density over the
/// observation vector. All-Gaussian factors compose into a product
/// Gaussian; anything else falls back to a summed log-density closure
/// evaluating factor `i` on component `i`.
pub fn product_density(factors: Vec<Density>) -> Density {
    let mut means = Vec::with_capacity(factors.len());
    let mut variances = Vec::with_capacity(factors.len());
    for f in &factors {
        if let Density::Gaussian { mean, variance } = f {
            means.push(*mean);
            variances.push(*variance);
        } else {
            let factors = factors.clone();
            return Density::LogDensity(Arc::new(move |y: &[f64]| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f.log_density(&y[i..i + 1]))
                    .sum()
            }));
        }
    }
    Density::ProductGaussian { means, variances }
}

/// A process whose per-step densities repeat with a fixed period, changing
/// at an unknown time to a second periodic family.
#[derive(Debug, Clone)]
pub struct PeriodicSpec {
    /// Pre-change densities, one per phase (the period is the length).
    pub f: Vec<Density>,
    /// Post-change densities, one per phase.
    pub g: Vec<Density>,
    /// Entry-phase distribution of the post-change cycle.
    pub p_g: Vec<f64>,
    pub rho: f64,
}

impl PeriodicSpec {
    /// Detection is impossible when both families are identical; that is a
    /// degenerate-but-valid input, so it is reported as a warning.
    pub fn lint(&self) -> Vec<String> {
        if self.f.len() == self.g.len() {
            let all_same = self.f.iter().zip(&self.g).all(|(a, b)| match (a, b) {
                (
                    Density::Gaussian { mean: m1, variance: v1 },
                    Density::Gaussian { mean: m2, variance: v2 },
                ) => m1 == m2 && v1 == v2,
                _ => false,
            });
            if all_same {
                return vec![
                    "every post-change density equals its pre-change counterpart; \
                     the change is undetectable"
                        .to_string(),
                ];
            }
        }
        Vec::new()
    }
}

/// Compile a periodic-statistics problem: both regimes cycle
/// deterministically through their phases, and the change enters the
/// post-change cycle at a random phase.
pub fn build_periodic(spec: &PeriodicSpec) -> Result<Model, ProblemError> {
    let t1 = spec.f.len();
    let t2 = spec.g.len();
    if t1 == 0 {
        return Err(ProblemError::Empty { context: "f" });
    }
    if t2 == 0 {
        return Err(ProblemError::Empty { context: "g" });
    }
    if spec.p_g.len() != t2 {
        return Err(ProblemError::Length {
            context: "p_g",
            expected: t2,
            got: spec.p_g.len(),
        });
    }
    let a_alpha = cyclic_shift("A_alpha", t1)?;
    let a_beta = cyclic_shift("A_beta", t2)?;
    // Every column of A_nu is the entry-phase distribution.
    let a_nu = TransitionMatrix::from_columns("A_nu", &vec![spec.p_g.clone(); t1])?;
    let mut densities = spec.f.clone();
    densities.extend(spec.g.iter().cloned());
    let model = Model::new(
        StateSpacePair::new(t1, t2)?,
        a_alpha,
        a_beta,
        a_nu,
        ChangePrior::constant(spec.rho, t1)?,
        ObservationModel::new(densities)?,
        None,
    )?;
    Ok(model)
}

/// A target appears at a random sensor and moves through the network;
/// exactly one sensor is affected at a time.
#[derive(Debug, Clone)]
pub struct MovingTargetSpec {
    /// Per-sensor nominal densities (scalar, one per sensor).
    pub f_alpha: Vec<Density>,
    /// Per-sensor affected densities.
    pub f_beta: Vec<Density>,
    /// Initial-location distribution of the target over sensors.
    pub p_l: Vec<f64>,
    /// Column-stochastic target-motion matrix (columns given per sensor).
    pub a_target: Vec<Vec<f64>>,
    pub rho: f64,
}

/// Compile a moving-target problem: a single nominal state and one
/// post-change state per possible target location.
pub fn build_moving_target(spec: &MovingTargetSpec) -> Result<Model, ProblemError> {
    let l = spec.f_alpha.len();
    if l == 0 {
        return Err(ProblemError::Empty { context: "f_alpha" });
    }
    if spec.f_beta.len() != l {
        return Err(ProblemError::Length {
            context: "f_beta",
            expected: l,
            got: spec.f_beta.len(),
        });
    }
    if spec.p_l.len() != l {
        return Err(ProblemError::Length {
            context: "p_l",
            expected: l,
            got: spec.p_l.len(),
        });
    }
    let a_alpha = TransitionMatrix::from_columns("A_alpha", &[vec![1.0]])?;
    let a_beta = TransitionMatrix::from_columns("A_beta", &spec.a_target)?;
    let a_nu = TransitionMatrix::from_columns("A_nu", &[spec.p_l.clone()])?;

    let mut densities = vec![product_density(spec.f_alpha.clone())];
    for affected in 0..l {
        let mut factors = spec.f_alpha.clone();
        factors[affected] = spec.f_beta[affected].clone();
        densities.push(product_density(factors));
    }
    let model = Model::new(
        StateSpacePair::new(1, l)?,
        a_alpha,
        a_beta,
        a_nu,
        ChangePrior::constant(spec.rho, 1)?,
        ObservationModel::new(densities)?,
        None,
    )?;
    Ok(model)
}

/// A disruption hits sensor 1 and then propagates down the array, each
/// affected prefix extending to the next sensor with its own probability.
#[derive(Debug, Clone)]
pub struct SensorArraySpec {
    pub f_alpha: Vec<Density>,
    pub f_beta: Vec<Density>,
    /// Change probability for the first sensor.
    pub rho: f64,
    /// Propagation probabilities, one per gap between adjacent sensors
    /// (length `l - 1`).
    pub rho_chain: Vec<f64>,
}

/// Compile a sensor-array problem: post-change state `m` means the first
/// `m + 1` sensors are affected; transitions are lower-bidiagonal with an
/// absorbing final state.
pub fn build_sensor_array(spec: &SensorArraySpec) -> Result<Model, ProblemError> {
    let l = spec.f_alpha.len();
    if l == 0 {
        return Err(ProblemError::Empty { context: "f_alpha" });
    }
    if spec.f_beta.len() != l {
        return Err(ProblemError::Length {
            context: "f_beta",
            expected: l,
            got: spec.f_beta.len(),
        });
    }
    if spec.rho_chain.len() != l - 1 {
        return Err(ProblemError::Length {
            context: "rho_chain",
            expected: l - 1,
            got: spec.rho_chain.len(),
        });
    }
    for (i, &r) in spec.rho_chain.iter().enumerate() {
        // Reuse the open-interval validation from the change prior.
        ChangePrior::new(vec![r]).map_err(|_| ModelError::RhoOutOfRange {
            index: i,
            value: r,
        })?;
    }
    let mut beta_cols = vec![vec![0.0; l]; l];
    for i in 0..l - 1 {
        beta_cols[i][i] = 1.0 - spec.rho_chain[i];
        beta_cols[i][i + 1] = spec.rho_chain[i];
    }
    beta_cols[l - 1][l - 1] = 1.0;

    let a_alpha = TransitionMatrix::from_columns("A_alpha", &[vec![1.0]])?;
    let a_beta = TransitionMatrix::from_columns("A_beta", &beta_cols)?;
    // The change always begins at sensor 1.
    let mut nu_col = vec![0.0; l];
    nu_col[0] = 1.0;
    let a_nu = TransitionMatrix::from_columns("A_nu", &[nu_col])?;

    let mut densities = vec![product_density(spec.f_alpha.clone())];
    for affected_prefix in 1..=l {
        let mut factors = spec.f_alpha.clone();
        for (slot, beta) in factors[..affected_prefix]
            .iter_mut()
            .zip(&spec.f_beta)
        {
            *slot = beta.clone();
        }
        densities.push(product_density(factors));
    }
    let model = Model::new(
        StateSpacePair::new(1, l)?,
        a_alpha,
        a_beta,
        a_nu,
        ChangePrior::constant(spec.rho, 1)?,
        ObservationModel::new(densities)?,
        None,
    )?;
    Ok(model)
}

/// Default cap on stream count: `2^12 - 1` post-change states.
pub const DEFAULT_STREAM_CAP: usize = 12;

/// A change hits an unknown nonempty subset of data streams and the
/// affected subset then stays fixed.
#[derive(Debug, Clone)]
pub struct MultistreamSpec {
    pub f_alpha: Vec<Density>,
    pub f_beta: Vec<Density>,
    /// Probability per nonempty subset, keyed by bitmask (stream `j`,
    /// 1-based, is bit `j - 1`). Missing masks get probability zero.
    pub p_subset: BTreeMap<u32, f64>,
    pub rho: f64,
    /// Optional post-change subset dynamics; identity when absent.
    pub a_beta: Option<Vec<Vec<f64>>>,
    /// Optional override of the stream-count cap.
    pub cap: Option<usize>,
}

/// Streams affected by a post-change state, from its bitmask.
pub fn subset_from_state(state: usize) -> u32 {
    (state + 1) as u32
}

/// Post-change state index for an affected-stream bitmask.
pub fn state_from_subset(mask: u32) -> usize {
    debug_assert!(mask > 0);
    (mask - 1) as usize
}

/// Compile a multistream problem with one post-change state per nonempty
/// subset of streams, in bitmask order.
pub fn build_multistream(spec: &MultistreamSpec) -> Result<Model, ProblemError> {
    let d = spec.f_alpha.len();
    if d == 0 {
        return Err(ProblemError::Empty { context: "f_alpha" });
    }
    if spec.f_beta.len() != d {
        return Err(ProblemError::Length {
            context: "f_beta",
            expected: d,
            got: spec.f_beta.len(),
        });
    }
    let cap = spec.cap.unwrap_or(DEFAULT_STREAM_CAP);
    if d > cap {
        return Err(ProblemError::StreamCountOverCap { got: d, cap });
    }
    let n_beta = (1usize << d) - 1;

    let mut nu_col = vec![0.0; n_beta];
    let mut sum = 0.0;
    for (&mask, &p) in &spec.p_subset {
        if mask == 0 {
            return Err(ProblemError::EmptySubsetMass);
        }
        if mask as usize > n_beta {
            return Err(ProblemError::SubsetMaskOutOfRange { mask, streams: d });
        }
        nu_col[state_from_subset(mask)] = p;
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ProblemError::SubsetMassNotOne { sum });
    }

    let a_alpha = TransitionMatrix::from_columns("A_alpha", &[vec![1.0]])?;
    let a_beta = match &spec.a_beta {
        Some(cols) => TransitionMatrix::from_columns("A_beta", cols)?,
        None => {
            let mut cols = vec![vec![0.0; n_beta]; n_beta];
            for (j, col) in cols.iter_mut().enumerate() {
                col[j] = 1.0;
            }
            TransitionMatrix::from_columns("A_beta", &cols)?
        }
    };
    let a_nu = TransitionMatrix::from_columns("A_nu", &[nu_col])?;

    let mut densities = vec![product_density(spec.f_alpha.clone())];
    for state in 0..n_beta {
        let mask = subset_from_state(state);
        let factors: Vec<Density> = (0..d)
            .map(|stream| {
                if mask & (1 << stream) != 0 {
                    spec.f_beta[stream].clone()
                } else {
                    spec.f_alpha[stream].clone()
                }
            })
            .collect();
        densities.push(product_density(factors));
    }
    let model = Model::new(
        StateSpacePair::new(1, n_beta)?,
        a_alpha,
        a_beta,
        a_nu,
        ChangePrior::constant(spec.rho, 1)?,
        ObservationModel::new(densities)?,
        None,
    )?;
    Ok(model)
}
