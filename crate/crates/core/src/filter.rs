//! Normalized forward filter over the augmented chain.
//!
//! Each step is predict (`A z`), weight by the observation densities, and
//! renormalize. The normalizer keeps the belief in the linear domain; the
//! log of its reciprocal accumulates into a log-likelihood diagnostic.

use thiserror::Error;

use crate::model::{mode_marginal, AugmentedModel};

/// Below this total weight the step is reported as an underflow instead of
/// renormalizing noise.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("all observation densities vanished at step {k} (total weight {weight:e})")]
    DensityUnderflow { k: usize, weight: f64 },
    #[error("non-finite observation component at step {k}")]
    NonFiniteObservation { k: usize },
    #[error("observation at step {k} has dimension {got}, model expects {expected}")]
    ObservationDim {
        k: usize,
        expected: usize,
        got: usize,
    },
}

/// Posterior over the augmented states at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// Posterior probabilities, one per augmented state.
    pub z: Vec<f64>,
    /// Posterior probability that the change has occurred.
    pub m2: f64,
    /// Time index (0 = before the first observation).
    pub k: usize,
    /// Accumulated log marginal likelihood of the observations so far.
    pub log_norm_sum: f64,
}

/// Belief at `k = 0`: the augmented initial distribution.
pub fn filter_init(aug: &AugmentedModel) -> Belief {
    let z = aug.initial.clone();
    let (_, m2) = mode_marginal(&z, &aug.spaces);
    Belief {
        z,
        m2,
        k: 0,
        log_norm_sum: 0.0,
    }
}

/// One measurement update: returns the belief at `k + 1`.
pub fn filter_step(belief: &Belief, y: &[f64], aug: &AugmentedModel) -> Result<Belief, FilterError> {
    let k = belief.k + 1;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NonFiniteObservation { k });
    }
    if let Some(expected) = aug.obs.dim() {
        if y.len() != expected {
            return Err(FilterError::ObservationDim {
                k,
                expected,
                got: y.len(),
            });
        }
    }
    let n = aug.n();
    let mut predicted = vec![0.0; n];
    aug.a.apply(&belief.z, &mut predicted);

    let mut total = 0.0;
    for (i, w) in predicted.iter_mut().enumerate() {
        *w *= aug.obs.density(i).density(y);
        total += *w;
    }
    if !(total > WEIGHT_FLOOR) {
        return Err(FilterError::DensityUnderflow { k, weight: total });
    }
    let inv = 1.0 / total;
    for w in &mut predicted {
        *w *= inv;
    }
    let (_, m2) = mode_marginal(&predicted, &aug.spaces);
    Ok(Belief {
        z: predicted,
        m2,
        k,
        log_norm_sum: belief.log_norm_sum + total.ln(),
    })
}

/// Filter a whole observation sequence, returning the beliefs for
/// `k = 1..=T`. The initial belief is not included.
pub fn filter_run(
    aug: &AugmentedModel,
    y_seq: &[Vec<f64>],
) -> Result<Vec<Belief>, FilterError> {
    let mut out = Vec::with_capacity(y_seq.len());
    let mut belief = filter_init(aug);
    for y in y_seq {
        belief = filter_step(&belief, y, aug)?;
        out.push(belief.clone());
    }
    Ok(out)
}

/// Streaming variant: invokes `sink` with each successive belief instead of
/// collecting them. Useful for long horizons where only a statistic of the
/// trace is needed.
pub fn filter_stream<F>(
    aug: &AugmentedModel,
    y_seq: impl Iterator<Item = impl AsRef<[f64]>>,
    mut sink: F,
) -> Result<Belief, FilterError>
where
    F: FnMut(&Belief),
{
    let mut belief = filter_init(aug);
    for y in y_seq {
        belief = filter_step(&belief, y.as_ref(), aug)?;
        sink(&belief);
    }
    Ok(belief)
}
