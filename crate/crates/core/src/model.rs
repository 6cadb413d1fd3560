//! Two-regime HMM problem statement and its compilation into a single
//! augmented Markov chain with an absorbing post-change block.
//!
//! All transition matrices here are **column**-stochastic: entry `(i, j)`
//! is the probability of moving to state `i` given the current state `j`.
//! Most HMM libraries use the row convention; conversions happen at the
//! I/O boundary, never inside the math.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for column sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Numeric open interval used to validate change probabilities.
const RHO_MIN: f64 = 1e-12;
const RHO_MAX: f64 = 1.0 - 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix {name} column {column} sums to {sum}, not 1")]
    NotStochastic {
        name: &'static str,
        column: usize,
        sum: f64,
    },
    #[error("matrix {name} entry ({row},{column}) = {value} outside [0,1]")]
    EntryOutOfRange {
        name: &'static str,
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("rho[{index}] = {value} outside the open interval (0,1)")]
    RhoOutOfRange { index: usize, value: f64 },
    #[error("variance for state {index} must be strictly positive, got {value}")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("probability vector {context} sums to {sum}, not 1")]
    NotAProbabilityVector { context: &'static str, sum: f64 },
    #[error("probability vector {context} entry {index} = {value} outside [0,1]")]
    ProbabilityOutOfRange {
        context: &'static str,
        index: usize,
        value: f64,
    },
    #[error("observation dimension mismatch: state {index} has dimension {got}, expected {expected}")]
    ObservationDimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// Sizes of the pre-change and post-change state spaces.
///
/// Augmented indices `0..n_alpha` address pre-change states and
/// `n_alpha..n_alpha+n_beta` address post-change states (0-based
/// internally; serialized formats are 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpacePair {
    pub n_alpha: usize,
    pub n_beta: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl StateSpacePair {
    pub fn new(n_alpha: usize, n_beta: usize) -> Result<Self, ModelError> {
        if n_alpha == 0 {
            return Err(ModelError::DimensionMismatch {
                context: "n_alpha",
                expected: 1,
                got: 0,
            });
        }
        if n_beta == 0 {
            return Err(ModelError::DimensionMismatch {
                context: "n_beta",
                expected: 1,
                got: 0,
            });
        }
        Ok(Self {
            n_alpha,
            n_beta,
            labels: None,
        })
    }

    /// Total augmented dimension `N = n_alpha + n_beta`.
    pub fn total(&self) -> usize {
        self.n_alpha + self.n_beta
    }

    /// Whether an augmented (0-based) index addresses a pre-change state.
    pub fn is_pre_change(&self, index: usize) -> bool {
        index < self.n_alpha
    }
}

/// Dense column-major matrix with column-stochastic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_to: usize,
    n_from: usize,
    /// Column-major: entry (i,j) at `data[j * n_to + i]`.
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Build from columns, validating entries and column sums.
    pub fn from_columns(name: &'static str, columns: &[Vec<f64>]) -> Result<Self, ModelError> {
        if columns.is_empty() {
            return Err(ModelError::DimensionMismatch {
                context: name,
                expected: 1,
                got: 0,
            });
        }
        let n_to = columns[0].len();
        let n_from = columns.len();
        let mut data = Vec::with_capacity(n_to * n_from);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_to {
                return Err(ModelError::DimensionMismatch {
                    context: name,
                    expected: n_to,
                    got: col.len(),
                });
            }
            let mut sum = 0.0;
            for (i, &v) in col.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::EntryOutOfRange {
                        name,
                        row: i,
                        column: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::NotStochastic {
                    name,
                    column: j,
                    sum,
                });
            }
            data.extend_from_slice(col);
        }
        Ok(Self { n_to, n_from, data })
    }

    /// Construct without the stochastic check (internal assembly only).
    fn from_raw(n_to: usize, n_from: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_to * n_from);
        Self { n_to, n_from, data }
    }

    pub fn n_to(&self) -> usize {
        self.n_to
    }

    pub fn n_from(&self) -> usize {
        self.n_from
    }

    /// Entry `(i, j)` = P(next = i | current = j).
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_to + i]
    }

    /// Column `j` as a slice (the outgoing distribution of state `j`).
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_to..(j + 1) * self.n_to]
    }

    /// Matrix-vector product `A x` (x indexed over `n_from`).
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_from);
        debug_assert_eq!(out.len(), self.n_to);
        out.fill(0.0);
        for j in 0..self.n_from {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            for i in 0..self.n_to {
                out[i] += col[i] * xj;
            }
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_from).map(move |j| self.column(j))
    }
}

/// Per-pre-change-state change probabilities `rho(e_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePrior {
    rho: Vec<f64>,
}

impl ChangePrior {
    pub fn new(rho: Vec<f64>) -> Result<Self, ModelError> {
        for (i, &r) in rho.iter().enumerate() {
            if !(RHO_MIN..=RHO_MAX).contains(&r) {
                return Err(ModelError::RhoOutOfRange { index: i, value: r });
            }
        }
        Ok(Self { rho })
    }

    /// Constant rho replicated over `n_alpha` states (the geometric prior).
    pub fn constant(rho: f64, n_alpha: usize) -> Result<Self, ModelError> {
        Self::new(vec![rho; n_alpha])
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// True when every entry is equal: the prior is then the plain
    /// geometric change-time law with that single parameter.
    pub fn is_constant(&self) -> bool {
        self.rho.windows(2).all(|w| w[0] == w[1])
    }
}

/// Observation density attached to one augmented state.
#[derive(Clone)]
pub enum Density {
    /// Scalar Gaussian N(mean, variance).
    Gaussian { mean: f64, variance: f64 },
    /// Independent product of scalar Gaussians over a vector observation.
    ProductGaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// User-supplied log-density over the observation vector.
    LogDensity(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Gaussian { mean, variance } => f
                .debug_struct("Gaussian")
                .field("mean", mean)
                .field("variance", variance)
                .finish(),
            Density::ProductGaussian { means, variances } => f
                .debug_struct("ProductGaussian")
                .field("means", means)
                .field("variances", variances)
                .finish(),
            Density::LogDensity(_) => f.write_str("LogDensity(..)"),
        }
    }
}

const LN_2PI: f64 = 1.8378770664093453;

fn gaussian_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

impl Density {
    /// Log-density at `y`; `-inf` is legal (zero density), NaN is not.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        match self {
            Density::Gaussian { mean, variance } => gaussian_log_density(y[0], *mean, *variance),
            Density::ProductGaussian { means, variances } => means
                .iter()
                .zip(variances)
                .zip(y)
                .map(|((&m, &v), &yi)| gaussian_log_density(yi, m, v))
                .sum(),
            Density::LogDensity(f) => f(y),
        }
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        self.log_density(y).exp()
    }

    /// Observation dimension, when determined by the density kind.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Density::Gaussian { .. } => Some(1),
            Density::ProductGaussian { means, .. } => Some(means.len()),
            Density::LogDensity(_) => None,
        }
    }

    fn validate(&self, index: usize) -> Result<(), ModelError> {
        match self {
            Density::Gaussian { variance, .. } => {
                if *variance <= 0.0 {
                    return Err(ModelError::NonPositiveVariance {
                        index,
                        value: *variance,
                    });
                }
            }
            Density::ProductGaussian { means, variances } => {
                if means.len() != variances.len() {
                    return Err(ModelError::DimensionMismatch {
                        context: "product_gaussian means/variances",
                        expected: means.len(),
                        got: variances.len(),
                    });
                }
                for &v in variances {
                    if v <= 0.0 {
                        return Err(ModelError::NonPositiveVariance { index, value: v });
                    }
                }
            }
            Density::LogDensity(_) => {}
        }
        Ok(())
    }
}

/// Observation densities, one per augmented state index.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    densities: Vec<Density>,
    /// Common observation dimension, when the kinds pin one down.
    dim: Option<usize>,
}

impl ObservationModel {
    pub fn new(densities: Vec<Density>) -> Result<Self, ModelError> {
        let mut dim: Option<usize> = None;
        for (i, d) in densities.iter().enumerate() {
            d.validate(i)?;
            if let Some(k) = d.dim() {
                match dim {
                    None => dim = Some(k),
                    Some(expected) if expected != k => {
                        return Err(ModelError::ObservationDimMismatch {
                            index: i,
                            expected,
                            got: k,
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { densities, dim })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn density(&self, state: usize) -> &Density {
        &self.densities[state]
    }

    pub fn densities(&self) -> &[Density] {
        &self.densities
    }

    /// Observation dimension when determined by parametric kinds.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }
}

fn validate_probability_vector(
    context: &'static str,
    v: &[f64],
    tol: f64,
) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for (i, &p) in v.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::ProbabilityOutOfRange {
                context,
                index: i,
                value: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tol {
        return Err(ModelError::NotAProbabilityVector { context, sum });
    }
    Ok(())
}

/// The two-regime HMM problem statement.
#[derive(Debug, Clone)]
pub struct Model {
    pub spaces: StateSpacePair,
    pub a_alpha: TransitionMatrix,
    pub a_beta: TransitionMatrix,
    pub a_nu: TransitionMatrix,
    pub prior: ChangePrior,
    pub obs: ObservationModel,
    pub initial_alpha: Vec<f64>,
}

impl Model {
    /// Validate all cross-field invariants. `initial_alpha = None` defaults
    /// to uniform over the pre-change states.
    pub fn new(
        spaces: StateSpacePair,
        a_alpha: TransitionMatrix,
        a_beta: TransitionMatrix,
        a_nu: TransitionMatrix,
        prior: ChangePrior,
        obs: ObservationModel,
        initial_alpha: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let na = spaces.n_alpha;
        let nb = spaces.n_beta;
        let check_dims = |context, expected, got| {
            if expected != got {
                Err(ModelError::DimensionMismatch {
                    context,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check_dims("A_alpha rows", na, a_alpha.n_to())?;
        check_dims("A_alpha columns", na, a_alpha.n_from())?;
        check_dims("A_beta rows", nb, a_beta.n_to())?;
        check_dims("A_beta columns", nb, a_beta.n_from())?;
        check_dims("A_nu rows", nb, a_nu.n_to())?;
        check_dims("A_nu columns", na, a_nu.n_from())?;
        check_dims("rho length", na, prior.len())?;
        check_dims("observation table length", na + nb, obs.len())?;
        let initial_alpha =
            initial_alpha.unwrap_or_else(|| vec![1.0 / na as f64; na]);
        check_dims("initial_alpha length", na, initial_alpha.len())?;
        validate_probability_vector("initial_alpha", &initial_alpha, 1e-9)?;
        Ok(Self {
            spaces,
            a_alpha,
            a_beta,
            a_nu,
            prior,
            obs,
            initial_alpha,
        })
    }
}

/// The compiled `N`-state chain: pre-change block scaled by survival
/// probabilities, change transitions scaled by `rho`, absorbing
/// post-change block, and a zero block preventing escape.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub a: TransitionMatrix,
    pub spaces: StateSpacePair,
    pub obs: ObservationModel,
    /// Initial augmented distribution: all mass on pre-change states.
    pub initial: Vec<f64>,
}

impl AugmentedModel {
    pub fn n(&self) -> usize {
        self.spaces.total()
    }
}

/// Assemble the augmented transition matrix block-by-block.
///
/// Column `j < n_alpha` carries `(1 - rho_j) * A_alpha[:,j]` on top and
/// `rho_j * A_nu[:,j]` below; column `j >= n_alpha` carries zeros on top
/// and `A_beta[:, j - n_alpha]` below.
pub fn build_augmented(model: &Model) -> Result<AugmentedModel, ModelError> {
    let na = model.spaces.n_alpha;
    let nb = model.spaces.n_beta;
    let n = na + nb;
    let rho = model.prior.values();

    let mut data = vec![0.0; n * n];
    for j in 0..na {
        let col = &mut data[j * n..(j + 1) * n];
        let survive = 1.0 - rho[j];
        for i in 0..na {
            col[i] = survive * model.a_alpha.entry(i, j);
        }
        for i in 0..nb {
            col[na + i] = rho[j] * model.a_nu.entry(i, j);
        }
    }
    for j in 0..nb {
        let col = &mut data[(na + j) * n..(na + j + 1) * n];
        for i in 0..nb {
            col[na + i] = model.a_beta.entry(i, j);
        }
    }
    let a = TransitionMatrix::from_raw(n, n, data);

    let mut initial = vec![0.0; n];
    initial[..na].copy_from_slice(&model.initial_alpha);

    Ok(AugmentedModel {
        a,
        spaces: model.spaces.clone(),
        obs: model.obs.clone(),
        initial,
    })
}

/// Split a belief over the augmented states into its (pre-change,
/// post-change) mode masses.
pub fn mode_marginal(belief: &[f64], spaces: &StateSpacePair) -> (f64, f64) {
    let m1: f64 = belief[..spaces.n_alpha].iter().sum();
    (m1, 1.0 - m1)
}

/// The two-state mode chain of the constant-rho case:
/// `[[1-rho, 0], [rho, 1]]`.
pub fn constant_rho_mode_chain(rho: f64) -> Result<TransitionMatrix, ModelError> {
    if !(RHO_MIN..=RHO_MAX).contains(&rho) {
        return Err(ModelError::RhoOutOfRange {
            index: 0,
            value: rho,
        });
    }
    Ok(TransitionMatrix::from_raw(
        2,
        2,
        vec![1.0 - rho, rho, 0.0, 1.0],
    ))
}
