//! Threshold stopping rule, Bayesian cost, and the false-alarm bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("threshold h = {0} outside [0,1]")]
    ThresholdOutOfRange(f64),
    #[error("delay penalty c = {0} must be positive")]
    NonPositivePenalty(f64),
    #[error("max_horizon must be at least 1")]
    ZeroHorizon,
    #[error("empty outcome collection")]
    EmptyCollection,
    #[error("statistic trace of length {len} does not cover stopping time {tau}")]
    TraceTooShort { len: usize, tau: usize },
}

/// Threshold rule parameters plus the simulation censoring horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Alarm threshold on the change statistic.
    pub h: f64,
    /// Per-step delay penalty.
    pub c: f64,
    /// Censoring horizon for simulated runs.
    pub max_horizon: usize,
}

impl DetectorConfig {
    pub fn new(h: f64, c: f64, max_horizon: usize) -> Result<Self, DetectorError> {
        if !(0.0..=1.0).contains(&h) {
            return Err(DetectorError::ThresholdOutOfRange(h));
        }
        if !(c > 0.0) {
            return Err(DetectorError::NonPositivePenalty(c));
        }
        if max_horizon == 0 {
            return Err(DetectorError::ZeroHorizon);
        }
        Ok(Self { h, c, max_horizon })
    }
}

/// Result of running the stopping rule on one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    /// Alarm time, or the horizon when censored.
    pub tau: usize,
    /// No alarm was raised before the horizon.
    pub censored: bool,
    /// True change time; `None` if the change never occurred in the run.
    pub nu: Option<usize>,
    /// Statistic value at the alarm (or at the horizon when censored).
    pub m2_at_tau: f64,
    /// `(tau - nu)^+`.
    pub delay: usize,
    /// An alarm was raised strictly before the change.
    pub false_alarm: bool,
}

impl DetectionOutcome {
    /// Classify an alarm (or censoring) against a known change time.
    pub fn new(tau: Option<usize>, horizon: usize, nu: Option<usize>, m2_at_tau: f64) -> Self {
        let (tau, censored) = match tau {
            Some(t) => (t, false),
            None => (horizon, true),
        };
        let delay = match nu {
            Some(nu) => tau.saturating_sub(nu),
            None => 0,
        };
        let false_alarm = !censored && nu.map_or(true, |nu| tau < nu);
        Self {
            tau,
            censored,
            nu,
            m2_at_tau,
            delay,
            false_alarm,
        }
    }
}

/// First index whose statistic strictly exceeds `h`; `None` if never.
///
/// The trace is indexed from `k = 0` (the initial belief), so the returned
/// index is directly the stopping time.
pub fn stopping_time(m2_trace: impl IntoIterator<Item = f64>, h: f64) -> Option<usize> {
    m2_trace.into_iter().position(|m2| m2 > h)
}

/// A mean together with its sample standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Mean and standard error of a sample, summed in index order so results
/// do not depend on how the sample was produced.
pub fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Estimate { mean, se }
}

/// Monte Carlo estimate of the Bayesian cost: mean of
/// `c * delay + 1{false alarm}` over the outcomes.
pub fn empirical_cost(
    outcomes: &[DetectionOutcome],
    c: f64,
) -> Result<Estimate, DetectorError> {
    if outcomes.is_empty() {
        return Err(DetectorError::EmptyCollection);
    }
    let per_run: Vec<f64> = outcomes
        .iter()
        .map(|o| c * o.delay as f64 + if o.false_alarm { 1.0 } else { 0.0 })
        .collect();
    Ok(mean_se(&per_run))
}

/// Mode-marginal form of the cost: mean over runs of
/// `c * sum_{l < tau} m2_l + m1_tau`, computed from the statistic traces.
/// Agrees with [`empirical_cost`] in expectation but with lower variance.
pub fn mode_form_cost(
    m2_traces: &[Vec<f64>],
    taus: &[usize],
    c: f64,
) -> Result<Estimate, DetectorError> {
    if m2_traces.is_empty() || m2_traces.len() != taus.len() {
        return Err(DetectorError::EmptyCollection);
    }
    let mut per_run = Vec::with_capacity(taus.len());
    for (trace, &tau) in m2_traces.iter().zip(taus) {
        if tau >= trace.len() {
            return Err(DetectorError::TraceTooShort {
                len: trace.len(),
                tau,
            });
        }
        let running: f64 = trace[..tau].iter().sum();
        per_run.push(c * running + (1.0 - trace[tau]));
    }
    Ok(mean_se(&per_run))
}

/// Upper bound `1 - h` on the probability of false alarm.
pub fn pfa_bound(h: f64) -> f64 {
    1.0 - h
}

/// Two Monte Carlo false-alarm estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfaEstimates {
    /// Fraction of runs with an alarm strictly before the change.
    pub frac: Estimate,
    /// `1 - mean(m2 at alarm)`, the posterior-based estimate.
    pub stat: Estimate,
}

/// Estimate the probability of false alarm two ways from the outcomes.
pub fn empirical_pfa(outcomes: &[DetectionOutcome]) -> Result<PfaEstimates, DetectorError> {
    if outcomes.is_empty() {
        return Err(DetectorError::EmptyCollection);
    }
    let fa: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.false_alarm { 1.0 } else { 0.0 })
        .collect();
    let pre_mass: Vec<f64> = outcomes.iter().map(|o| 1.0 - o.m2_at_tau).collect();
    Ok(PfaEstimates {
        frac: mean_se(&fa),
        stat: mean_se(&pre_mass),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_is_strict() {
        // h equal to an attained value must not stop there.
        assert_eq!(stopping_time([0.0, 0.5, 0.5, 0.6], 0.5), Some(3));
        assert_eq!(stopping_time([0.0, 0.2, 1.0], 1.0), None);
        assert_eq!(stopping_time([0.0, 0.1, 0.2], 0.0), Some(1));
        assert_eq!(stopping_time([0.0, 0.0], 0.5), None);
    }

    #[test]
    fn outcome_classification() {
        let o = DetectionOutcome::new(Some(5), 100, Some(10), 0.4);
        assert!(o.false_alarm);
        assert_eq!(o.delay, 0);
        let o = DetectionOutcome::new(Some(15), 100, Some(10), 0.9);
        assert!(!o.false_alarm);
        assert_eq!(o.delay, 5);
        let o = DetectionOutcome::new(None, 100, Some(10), 0.3);
        assert!(o.censored);
        assert!(!o.false_alarm);
        assert_eq!(o.tau, 100);
        assert_eq!(o.delay, 90);
    }

    #[test]
    fn pure_false_alarm_costs_one() {
        let outcomes: Vec<_> = (0..10)
            .map(|_| DetectionOutcome::new(Some(0), 100, Some(5), 0.0))
            .collect();
        let est = empirical_cost(&outcomes, 0.01).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn alarm_at_change_costs_zero() {
        let outcomes: Vec<_> = (0..10)
            .map(|_| DetectionOutcome::new(Some(5), 100, Some(5), 1.0))
            .collect();
        let est = empirical_cost(&outcomes, 0.01).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn mode_form_cost_substitution() {
        // Statistic pinned at 1 from k0 on, stopping exactly at k0.
        let trace = vec![0.0, 0.1, 0.2, 1.0, 1.0];
        let est = mode_form_cost(&[trace.clone()], &[3], 0.5).unwrap();
        assert!((est.mean - 0.5 * 0.3).abs() < 1e-15);
        // tau = 0 contributes m1 at time zero = 1 for the standard init.
        let est = mode_form_cost(&[vec![0.0]], &[0], 0.5).unwrap();
        assert_eq!(est.mean, 1.0);
        assert!(matches!(
            mode_form_cost(&[vec![0.0]], &[3], 0.5),
            Err(DetectorError::TraceTooShort { .. })
        ));
    }

    #[test]
    fn pfa_bound_values() {
        assert!((pfa_bound(0.7) - 0.3).abs() < 1e-15);
        assert_eq!(pfa_bound(1.0), 0.0);
        assert_eq!(pfa_bound(0.0), 1.0);
    }

    #[test]
    fn pfa_estimates() {
        let good: Vec<_> = (0..4)
            .map(|_| DetectionOutcome::new(Some(20), 100, Some(10), 1.0))
            .collect();
        let est = empirical_pfa(&good).unwrap();
        assert_eq!(est.frac.mean, 0.0);
        assert_eq!(est.stat.mean, 0.0);
        let bad: Vec<_> = (0..4)
            .map(|_| DetectionOutcome::new(Some(0), 100, Some(10), 0.0))
            .collect();
        let est = empirical_pfa(&bad).unwrap();
        assert_eq!(est.frac.mean, 1.0);
        assert!(empirical_pfa(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::new(0.7, 0.001, 10_000).is_ok());
        assert!(DetectorConfig::new(-0.1, 0.001, 10).is_err());
        assert!(DetectorConfig::new(1.1, 0.001, 10).is_err());
        assert!(DetectorConfig::new(0.5, 0.0, 10).is_err());
        assert!(DetectorConfig::new(0.5, 0.1, 0).is_err());
    }
}
