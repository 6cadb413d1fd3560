#![allow(dead_code)] // shared between test targets; each uses a subset

//! Test-only oracles, independent of the library's filtering and
//! augmentation code paths: exhaustive path enumeration of the two-regime
//! joint density, a direct change-time law, random model generation, and a
//! chi-square goodness-of-fit helper.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use hmmqcd::model::{
    ChangePrior, Density, Model, ObservationModel, StateSpacePair, TransitionMatrix,
};

/// Posterior over the augmented states after observing `ys`, together with
/// the marginal likelihood of the observation sequence, computed by
/// summing the joint density over every change time and state path.
pub fn enumeration_posterior(model: &Model, ys: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let k = ys.len();
    let na = model.spaces.n_alpha;
    let nb = model.spaces.n_beta;
    let rho = model.prior.values();
    let b = |aug_state: usize, y: &[f64]| model.obs.density(aug_state).density(y);

    let mut posterior = vec![0.0; na + nb];
    let mut total = 0.0;

    // ν > k: the whole path stays pre-change and survives every change
    // opportunity.
    {
        let mut stack: Vec<(usize, usize, f64)> = (0..na)
            .map(|x0| (0usize, x0, model.initial_alpha[x0]))
            .collect();
        while let Some((step, x, w)) = stack.pop() {
            if w == 0.0 {
                continue;
            }
            if step == k {
                posterior[x] += w;
                total += w;
                continue;
            }
            let survive = 1.0 - rho[x];
            for x_next in 0..na {
                let wt = w
                    * survive
                    * model.a_alpha.entry(x_next, x)
                    * b(x_next, &ys[step]);
                stack.push((step + 1, x_next, wt));
            }
        }
    }

    // ν = 1..=k: pre-change up to ν-1, change transition at ν, post-change
    // afterwards. Post-change states carry augmented indices na..na+nb.
    for nu in 1..=k {
        let mut stack: Vec<(usize, usize, f64)> = (0..na)
            .map(|x0| (0usize, x0, model.initial_alpha[x0]))
            .collect();
        while let Some((step, x, w)) = stack.pop() {
            if w == 0.0 {
                continue;
            }
            if step + 1 < nu {
                // next state still pre-change, survival factor applies
                let survive = 1.0 - rho[x];
                for x_next in 0..na {
                    let wt = w
                        * survive
                        * model.a_alpha.entry(x_next, x)
                        * b(x_next, &ys[step]);
                    // step + 1 < nu <= k, so this never lands on the final step
                    stack.push((step + 1, x_next, wt));
                }
            } else if step + 1 == nu {
                // change transition into the post-change set
                for x_next in 0..nb {
                    let wt = w
                        * rho[x]
                        * model.a_nu.entry(x_next, x)
                        * b(na + x_next, &ys[step]);
                    if step + 1 == k {
                        posterior[na + x_next] += wt;
                        total += wt;
                    } else {
                        stack.push((step + 1, na + x_next, wt));
                    }
                }
            } else {
                // post-change self-transition; x here is an augmented index
                let xb = x - na;
                for x_next in 0..nb {
                    let wt = w * model.a_beta.entry(x_next, xb) * b(na + x_next, &ys[step]);
                    if step + 1 == k {
                        posterior[na + x_next] += wt;
                        total += wt;
                    } else {
                        stack.push((step + 1, na + x_next, wt));
                    }
                }
            }
        }
    }

    let inv = 1.0 / total;
    for p in &mut posterior {
        *p *= inv;
    }
    (posterior, total)
}

/// Change-time law `P(nu = t)` for `t = 1..=horizon`, plus the survival
/// probability `P(nu > horizon)`, computed directly from the pre-change
/// chain and the state-dependent prior.
pub fn change_time_law(model: &Model, horizon: usize) -> (Vec<f64>, f64) {
    let na = model.spaces.n_alpha;
    let rho = model.prior.values();
    // w[x] = P(X_{t-1} = x, nu > t-1)
    let mut w = model.initial_alpha.clone();
    let mut pmf = Vec::with_capacity(horizon);
    for _ in 1..=horizon {
        let p_change: f64 = (0..na).map(|x| rho[x] * w[x]).sum();
        pmf.push(p_change);
        let mut next = vec![0.0; na];
        for x in 0..na {
            let survive = (1.0 - rho[x]) * w[x];
            for (x_next, nv) in next.iter_mut().enumerate() {
                *nv += survive * model.a_alpha.entry(x_next, x);
            }
        }
        w = next;
    }
    let tail: f64 = w.iter().sum();
    (pmf, tail)
}

/// Pearson chi-square statistic against expected bin probabilities; the
/// caller supplies raw counts summing to the sample size.
pub fn chi_square_p_value(observed: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let expected = p * n as f64;
        assert!(expected >= 5.0, "bin too small for chi-square ({expected})");
        let d = o as f64 - expected;
        stat += d * d / expected;
    }
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

fn random_stochastic_columns(n_to: usize, n_from: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n_from)
        .map(|_| {
            let mut col: Vec<f64> = (0..n_to).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = col.iter().sum();
            for v in &mut col {
                *v /= sum;
            }
            // Force the column sum to exactly 1 by assigning the residual to
            // the largest entry.
            let s: f64 = col.iter().sum();
            let imax = (0..n_to)
                .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
                .unwrap();
            col[imax] += 1.0 - s;
            col
        })
        .collect()
}

/// A random valid model with `n_alpha`, `n_beta` pre/post states, Gaussian
/// observation densities, and (optionally state-dependent) change
/// probabilities.
pub fn random_model(
    n_alpha: usize,
    n_beta: usize,
    state_dependent_rho: bool,
    rng: &mut impl Rng,
) -> Model {
    let a_alpha = TransitionMatrix::from_columns(
        "A_alpha",
        &random_stochastic_columns(n_alpha, n_alpha, rng),
    )
    .unwrap();
    let a_beta = TransitionMatrix::from_columns(
        "A_beta",
        &random_stochastic_columns(n_beta, n_beta, rng),
    )
    .unwrap();
    let a_nu = TransitionMatrix::from_columns(
        "A_nu",
        &random_stochastic_columns(n_beta, n_alpha, rng),
    )
    .unwrap();
    let prior = if state_dependent_rho {
        ChangePrior::new((0..n_alpha).map(|_| rng.gen_range(0.05..0.6)).collect()).unwrap()
    } else {
        ChangePrior::constant(rng.gen_range(0.05..0.6), n_alpha).unwrap()
    };
    let obs = ObservationModel::new(
        (0..n_alpha + n_beta)
            .map(|_| Density::Gaussian {
                mean: rng.gen_range(-2.0..2.0),
                variance: rng.gen_range(0.3..2.0),
            })
            .collect(),
    )
    .unwrap();
    let initial: Vec<f64> = {
        let cols = random_stochastic_columns(n_alpha, 1, rng);
        cols.into_iter().next().unwrap()
    };
    Model::new(
        StateSpacePair::new(n_alpha, n_beta).unwrap(),
        a_alpha,
        a_beta,
        a_nu,
        prior,
        obs,
        Some(initial),
    )
    .unwrap()
}
