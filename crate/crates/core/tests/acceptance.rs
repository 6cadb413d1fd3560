//! Acceptance suite: one test per contract criterion, each printing a
//! single pass/FAIL line (visible under `--nocapture`; cargo shows the
//! output automatically when a criterion fails).
//!
//! Every check here targets a distributional or structural property;
//! single-realization values are deliberately never used as targets
//! (see `criterion_9`).

mod common;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use hmmqcd::filter::filter_run;
use hmmqcd::model::{build_augmented, mode_marginal, Density, Model};
use hmmqcd::problems::{
    build_moving_target, build_multistream, build_periodic, build_sensor_array,
    state_from_subset, MovingTargetSpec, MultistreamSpec, PeriodicSpec, SensorArraySpec,
};
use hmmqcd::scenarios::{demo_model, study_rows, DEMO_DELAY_PENALTY, DEMO_HORIZON};
use hmmqcd::simulate::{
    monte_carlo_grid, optimize_threshold, run_rng, sample_change_time, GradientSign,
    OptimizerConfig,
};

fn verdict(n: usize, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("acceptance criterion {n} ({name}): pass - {detail}"),
        Err(detail) => {
            println!("acceptance criterion {n} ({name}): FAIL - {detail}");
            panic!("criterion {n} ({name}) failed: {detail}");
        }
    }
}

#[test]
fn criterion_1_filter_matches_enumeration_oracle() {
    let run = || -> Result<String, String> {
        let mut max_err: f64 = 0.0;
        let mut max_lik_rel: f64 = 0.0;
        let n_models = 120u64;
        for model_idx in 0..n_models {
            let mut rng = run_rng(0xacce_0001, model_idx);
            let na = rng.gen_range(1..=3);
            let nb = rng.gen_range(1..=3);
            let model = common::random_model(na, nb, model_idx % 2 == 0, &mut rng);
            let t = rng.gen_range(1..=6);
            let ys: Vec<Vec<f64>> =
                (0..t).map(|_| vec![rng.gen_range(-2.5..2.5)]).collect();

            let aug = build_augmented(&model).map_err(|e| e.to_string())?;
            let beliefs = filter_run(&aug, &ys).map_err(|e| e.to_string())?;
            let last = beliefs.last().unwrap();
            let (oracle_z, likelihood) = common::enumeration_posterior(&model, &ys);
            for (a, b) in last.z.iter().zip(&oracle_z) {
                max_err = max_err.max((a - b).abs());
            }
            let (_, oracle_m2) = mode_marginal(&oracle_z, &model.spaces);
            max_err = max_err.max((last.m2 - oracle_m2).abs());
            max_lik_rel =
                max_lik_rel.max((last.log_norm_sum.exp() - likelihood).abs() / likelihood);
        }
        if max_err >= 1e-10 {
            return Err(format!(
                "max posterior error {max_err:e} over {n_models} models (limit 1e-10)"
            ));
        }
        if max_lik_rel > 1e-8 {
            return Err(format!("max likelihood rel error {max_lik_rel:e}"));
        }
        Ok(format!(
            "{n_models} random models, max posterior error {max_err:.2e}, \
             max likelihood rel error {max_lik_rel:.2e}"
        ))
    };
    verdict(1, "filter vs path-enumeration oracle", run());
}

#[test]
fn criterion_2_augmented_chain_structure() {
    let run = || -> Result<String, String> {
        let n_models = 1000u64;
        for model_idx in 0..n_models {
            let mut rng = run_rng(0xacce_0002, model_idx);
            let na = rng.gen_range(1..=5);
            let nb = rng.gen_range(1..=5);
            let constant_rho = model_idx % 2 == 0;
            let model = common::random_model(na, nb, !constant_rho, &mut rng);
            let aug = build_augmented(&model).map_err(|e| e.to_string())?;
            let n = na + nb;
            let rho = model.prior.values();

            for j in 0..n {
                let mut sum = 0.0;
                for i in 0..n {
                    let v = aug.a.entry(i, j);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(format!("model {model_idx}: entry ({i},{j}) = {v}"));
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(format!("model {model_idx}: column {j} sums to {sum}"));
                }
            }
            // Block structure: survival-scaled pre-change block, rho-scaled
            // change block, zero escape block, untouched post-change block.
            for j in 0..na {
                for i in 0..na {
                    let want = (1.0 - rho[j]) * model.a_alpha.entry(i, j);
                    if aug.a.entry(i, j).to_bits() != want.to_bits() {
                        return Err(format!("model {model_idx}: alpha block ({i},{j})"));
                    }
                }
                for i in 0..nb {
                    let want = rho[j] * model.a_nu.entry(i, j);
                    if aug.a.entry(na + i, j).to_bits() != want.to_bits() {
                        return Err(format!("model {model_idx}: change block ({i},{j})"));
                    }
                }
            }
            for j in 0..nb {
                for i in 0..na {
                    if aug.a.entry(i, na + j) != 0.0 {
                        return Err(format!("model {model_idx}: escape block ({i},{j})"));
                    }
                }
                for i in 0..nb {
                    if aug.a.entry(na + i, na + j).to_bits()
                        != model.a_beta.entry(i, j).to_bits()
                    {
                        return Err(format!("model {model_idx}: beta block ({i},{j})"));
                    }
                }
            }
            // Constant-rho case: the per-column assembly must be bitwise
            // identical to scaling whole blocks by the scalars 1-rho and rho.
            if constant_rho {
                let r = rho[0];
                for j in 0..na {
                    for i in 0..na {
                        let scalar_form = (1.0 - r) * model.a_alpha.entry(i, j);
                        if aug.a.entry(i, j).to_bits() != scalar_form.to_bits() {
                            return Err(format!(
                                "model {model_idx}: constant-rho scalar form ({i},{j})"
                            ));
                        }
                    }
                    for i in 0..nb {
                        let scalar_form = r * model.a_nu.entry(i, j);
                        if aug.a.entry(na + i, j).to_bits() != scalar_form.to_bits() {
                            return Err(format!(
                                "model {model_idx}: constant-rho scalar form ({i},{j})"
                            ));
                        }
                    }
                }
            }
        }
        Ok(format!(
            "{n_models} random models: blocks, zero escape, column sums, \
             and constant-rho bitwise form all hold"
        ))
    };
    verdict(2, "augmented chain structure", run());
}

#[test]
fn criterion_3_change_time_is_geometric() {
    let run = || -> Result<String, String> {
        let rho = 0.0005f64;
        let aug = build_augmented(&demo_model()).map_err(|e| e.to_string())?;
        let n_runs = 100_000u64;
        let n_bins = 20usize;

        // Equal-probability bin boundaries of the geometric law; the last
        // bin is the tail beyond the final boundary.
        let q = 1.0 - rho;
        let mut bounds = Vec::with_capacity(n_bins - 1);
        for i in 1..n_bins {
            let b = ((1.0 - i as f64 / n_bins as f64).ln() / q.ln()).ceil() as usize;
            bounds.push(b);
        }
        let cap = *bounds.last().unwrap();
        let mut probs = Vec::with_capacity(n_bins);
        let mut prev = 0usize;
        for &b in &bounds {
            probs.push(q.powi(prev as i32) - q.powi(b as i32));
            prev = b;
        }
        probs.push(q.powi(cap as i32));

        let counts = (0..n_runs)
            .into_par_iter()
            .fold(
                || vec![0u64; n_bins],
                |mut acc, run| {
                    let mut rng = run_rng(0xacce_0003, run);
                    let bin = match sample_change_time(&aug, cap, &mut rng) {
                        Some(nu) => bounds.partition_point(|&b| b < nu),
                        None => n_bins - 1,
                    };
                    acc[bin] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; n_bins],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );

        let p = common::chi_square_p_value(&counts, &probs);
        if p <= 0.01 {
            return Err(format!(
                "chi-square p-value {p:.4} <= 0.01 over {n_runs} runs, {n_bins} bins"
            ));
        }
        Ok(format!(
            "{n_runs} simulated change times, {n_bins} equal-probability bins, \
             chi-square p-value {p:.3}"
        ))
    };
    verdict(3, "geometric change-time law", run());
}

#[test]
fn criterion_4_pfa_bound() {
    let run = || -> Result<String, String> {
        let aug = build_augmented(&demo_model()).map_err(|e| e.to_string())?;
        let grid = [0.5, 0.7, 0.9];
        let report = monte_carlo_grid(
            &aug,
            &grid,
            DEMO_DELAY_PENALTY,
            DEMO_HORIZON,
            2000,
            0xacce_0004,
        )
        .map_err(|e| e.to_string())?;
        let mut detail = String::new();
        for row in &report.rows {
            let bound = 1.0 - row.h;
            let est = row.pfa_stat.mean;
            if est > bound + 3.0 * row.pfa_stat.se {
                return Err(format!(
                    "h = {}: statistic-based PFA {est:.4} exceeds {bound} + 3*{:.4}",
                    row.h, row.pfa_stat.se
                ));
            }
            detail.push_str(&format!(
                "h={}: pfa_stat={:.4}<=bound {:.1}; ",
                row.h, est, bound
            ));
        }
        Ok(format!("2000 runs per threshold; {detail}"))
    };
    verdict(4, "false-alarm bound 1 - h", run());
}

#[test]
fn criterion_5_threshold_optimum() {
    let run = || -> Result<String, String> {
        let aug = build_augmented(&demo_model()).map_err(|e| e.to_string())?;
        let mut hits = 0usize;
        let mut found = Vec::with_capacity(10);
        for seed in 0..10u64 {
            let opt = OptimizerConfig {
                n_steps: 200,
                eta0: 3.0,
                decay: 1.5,
                delta: 1.0,
                samples_per_eval: 10,
                phi0: 0.0, // h0 = 0.5
                horizon: DEMO_HORIZON,
                sign: GradientSign::CostDecreasing,
                common_random_numbers: true,
                seed: 0xacce_0005 ^ (seed << 32),
            };
            let res = optimize_threshold(&aug, DEMO_DELAY_PENALTY, &opt)
                .map_err(|e| e.to_string())?;
            if (0.55..=0.85).contains(&res.h_star) {
                hits += 1;
            }
            found.push(format!("{:.3}", res.h_star));
        }
        if hits < 8 {
            return Err(format!(
                "h* in [0.55, 0.85] for only {hits}/10 seeds: [{}]",
                found.join(", ")
            ));
        }
        Ok(format!(
            "h* in [0.55, 0.85] for {hits}/10 seeds: [{}]",
            found.join(", ")
        ))
    };
    verdict(5, "optimized threshold near 0.7", run());
}

#[test]
fn criterion_6_cost_curve_minimum() {
    let run = || -> Result<String, String> {
        let aug = build_augmented(&demo_model()).map_err(|e| e.to_string())?;
        let mut grid: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        grid.push(0.7);
        let report = monte_carlo_grid(
            &aug,
            &grid,
            DEMO_DELAY_PENALTY,
            DEMO_HORIZON,
            1000,
            0xacce_0006,
        )
        .map_err(|e| e.to_string())?;
        let at_07 = report
            .rows
            .iter()
            .find(|r| (r.h - 0.7).abs() < 1e-12)
            .ok_or("missing h = 0.7 row")?;
        let min_row = report
            .rows
            .iter()
            .filter(|r| (r.h - 0.7).abs() > 1e-12)
            .min_by(|a, b| a.cost.mean.partial_cmp(&b.cost.mean).unwrap())
            .unwrap();
        let combined = (at_07.cost.se.powi(2) + min_row.cost.se.powi(2)).sqrt();
        let gap = at_07.cost.mean - min_row.cost.mean;
        if gap > 2.0 * combined {
            return Err(format!(
                "cost({:.2}) = {:.5} exceeds grid min {:.5} at h = {:.2} by {gap:.5} \
                 > 2 * combined SE {combined:.5}",
                at_07.h, at_07.cost.mean, min_row.cost.mean, min_row.h
            ));
        }
        Ok(format!(
            "cost(0.7) = {:.5} +- {:.5}, grid min {:.5} at h = {:.2}, gap {gap:.5} \
             <= 2 * combined SE {:.5}",
            at_07.cost.mean,
            at_07.cost.se,
            min_row.cost.mean,
            min_row.h,
            2.0 * combined
        ))
    };
    verdict(6, "cost-curve minimum near 0.7", run());
}

#[test]
fn criterion_7_delay_false_alarm_frontier() {
    let run = || -> Result<String, String> {
        let grid: Vec<f64> = (1..10).map(|i| 0.1 * i as f64).collect();
        let n_runs = 500;
        let rows = study_rows();
        let mut reports = BTreeMap::new();
        for row in &rows {
            let aug = build_augmented(&row.model()).map_err(|e| e.to_string())?;
            let report = monte_carlo_grid(
                &aug,
                &grid,
                DEMO_DELAY_PENALTY,
                DEMO_HORIZON,
                n_runs,
                0xacce_0007,
            )
            .map_err(|e| e.to_string())?;
            // (a) monotone frontier under common random numbers
            for pair in report.rows.windows(2) {
                if pair[1].add.mean < pair[0].add.mean {
                    return Err(format!(
                        "{}: ADD decreased from h = {} to h = {}",
                        row.tag, pair[0].h, pair[1].h
                    ));
                }
                if pair[1].pfa_frac.mean > pair[0].pfa_frac.mean {
                    return Err(format!(
                        "{}: PFA increased from h = {} to h = {}",
                        row.tag, pair[0].h, pair[1].h
                    ));
                }
            }
            reports.insert(row.tag, report);
        }
        // (b) halving the observation variance must not worsen the frontier
        // beyond statistical noise.
        for pair in [
            ("blue_x", "blue_dot"),
            ("red_x", "red_dot"),
            ("black_x", "black_dot"),
            ("green_x", "green_dot"),
        ] {
            let high = &reports[pair.0];
            let low = &reports[pair.1];
            for (a, b) in high.rows.iter().zip(&low.rows) {
                let slack = 2.0 * (a.add.se + b.add.se);
                if b.add.mean > a.add.mean + slack {
                    return Err(format!(
                        "{} vs {} at h = {}: ADD {:.2} > {:.2} + {slack:.2}",
                        pair.1, pair.0, a.h, b.add.mean, a.add.mean
                    ));
                }
                let slack = 2.0 * (a.pfa_frac.se + b.pfa_frac.se);
                if b.pfa_frac.mean > a.pfa_frac.mean + slack {
                    return Err(format!(
                        "{} vs {} at h = {}: PFA {:.4} > {:.4} + {slack:.4}",
                        pair.1, pair.0, a.h, b.pfa_frac.mean, a.pfa_frac.mean
                    ));
                }
            }
        }
        Ok(format!(
            "8 study rows x {} thresholds x {n_runs} runs: ADD nondecreasing, \
             PFA nonincreasing, and variance 0.5 weakly dominates variance 1",
            grid.len()
        ))
    };
    verdict(7, "delay/false-alarm frontier", run());
}

fn gpdf(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    (-(d * d) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

fn check_density(
    model: &Model,
    state: usize,
    y: &[f64],
    factors: &[(f64, f64)],
    context: &str,
) -> Result<(), String> {
    let expect: f64 = y
        .iter()
        .zip(factors)
        .map(|(&yi, &(m, v))| gpdf(yi, m, v))
        .product();
    let got = model.obs.density(state).density(y);
    let tol = 1e-12 * expect.max(1e-30);
    if (got - expect).abs() > tol {
        return Err(format!(
            "{context}: state {state} density {got:e} vs factor product {expect:e}"
        ));
    }
    Ok(())
}

#[test]
fn criterion_8_structured_problem_reductions() {
    let run = || -> Result<String, String> {
        let mut rng = run_rng(0xacce_0008, 0);
        let mut checked = 0usize;

        // Periodic statistics: deterministic cycles through the phases and
        // an entry-phase distribution repeated across A_nu columns.
        for t1 in 1..=6usize {
            for t2 in 1..=6usize {
                let f: Vec<(f64, f64)> = (0..t1)
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)))
                    .collect();
                let g: Vec<(f64, f64)> = (0..t2)
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)))
                    .collect();
                let mut p_g: Vec<f64> = (0..t2).map(|_| rng.gen_range(0.1..1.0)).collect();
                let s: f64 = p_g.iter().sum();
                p_g.iter_mut().for_each(|p| *p /= s);
                let spec = PeriodicSpec {
                    f: f.iter()
                        .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                        .collect(),
                    g: g.iter()
                        .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                        .collect(),
                    p_g: p_g.clone(),
                    rho: 0.01,
                };
                let model = build_periodic(&spec).map_err(|e| e.to_string())?;
                for j in 0..t1 {
                    for i in 0..t1 {
                        let want = if i == (j + 1) % t1 { 1.0 } else { 0.0 };
                        if model.a_alpha.entry(i, j) != want {
                            return Err(format!("periodic {t1}x{t2}: A_alpha ({i},{j})"));
                        }
                    }
                    for (i, &p) in p_g.iter().enumerate() {
                        if model.a_nu.entry(i, j) != p {
                            return Err(format!("periodic {t1}x{t2}: A_nu ({i},{j})"));
                        }
                    }
                }
                for j in 0..t2 {
                    for i in 0..t2 {
                        let want = if i == (j + 1) % t2 { 1.0 } else { 0.0 };
                        if model.a_beta.entry(i, j) != want {
                            return Err(format!("periodic {t1}x{t2}: A_beta ({i},{j})"));
                        }
                    }
                }
                let y = [rng.gen_range(-2.0..2.0)];
                for (phase, &fac) in f.iter().enumerate() {
                    check_density(&model, phase, &y, &[fac], "periodic pre")?;
                }
                for (phase, &fac) in g.iter().enumerate() {
                    check_density(&model, t1 + phase, &y, &[fac], "periodic post")?;
                }
                checked += 1;
            }
        }

        // Moving target: product densities with exactly one affected sensor.
        for l in 1..=6usize {
            let fa: Vec<(f64, f64)> = (0..l)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)))
                .collect();
            let fb: Vec<(f64, f64)> = (0..l)
                .map(|_| (rng.gen_range(1.0..3.0), rng.gen_range(0.5..1.5)))
                .collect();
            let mut p_l: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = p_l.iter().sum();
            p_l.iter_mut().for_each(|p| *p /= s);
            let a_target: Vec<Vec<f64>> = (0..l)
                .map(|_| {
                    let mut col: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let s: f64 = col.iter().sum();
                    col.iter_mut().for_each(|v| *v /= s);
                    let s: f64 = col.iter().sum();
                    col[0] += 1.0 - s;
                    col
                })
                .collect();
            let spec = MovingTargetSpec {
                f_alpha: fa
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                f_beta: fb
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                p_l: p_l.clone(),
                a_target: a_target.clone(),
                rho: 0.01,
            };
            let model = build_moving_target(&spec).map_err(|e| e.to_string())?;
            if model.a_alpha.entry(0, 0) != 1.0 {
                return Err(format!("moving target l = {l}: A_alpha"));
            }
            for (i, &p) in p_l.iter().enumerate() {
                if model.a_nu.entry(i, 0) != p {
                    return Err(format!("moving target l = {l}: A_nu row {i}"));
                }
            }
            for (j, col) in a_target.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    if model.a_beta.entry(i, j) != v {
                        return Err(format!("moving target l = {l}: A_beta ({i},{j})"));
                    }
                }
            }
            let y: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..3.0)).collect();
            check_density(&model, 0, &y, &fa, "moving target nominal")?;
            for affected in 0..l {
                let mut factors = fa.clone();
                factors[affected] = fb[affected];
                check_density(&model, 1 + affected, &y, &factors, "moving target")?;
            }
            checked += 1;
        }

        // Sensor array: lower-bidiagonal propagation with an absorbing last
        // state, densities switching per affected prefix.
        for l in 1..=6usize {
            let fa: Vec<(f64, f64)> = (0..l)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)))
                .collect();
            let fb: Vec<(f64, f64)> = (0..l)
                .map(|_| (rng.gen_range(1.0..3.0), rng.gen_range(0.5..1.5)))
                .collect();
            let rho_chain: Vec<f64> = (0..l.saturating_sub(1))
                .map(|_| rng.gen_range(0.1..0.9))
                .collect();
            let spec = SensorArraySpec {
                f_alpha: fa
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                f_beta: fb
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                rho: 0.01,
                rho_chain: rho_chain.clone(),
            };
            let model = build_sensor_array(&spec).map_err(|e| e.to_string())?;
            for j in 0..l {
                for i in 0..l {
                    let want = if j == l - 1 {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else if i == j {
                        1.0 - rho_chain[j]
                    } else if i == j + 1 {
                        rho_chain[j]
                    } else {
                        0.0
                    };
                    if model.a_beta.entry(i, j) != want {
                        return Err(format!("sensor array l = {l}: A_beta ({i},{j})"));
                    }
                }
            }
            for i in 0..l {
                let want = if i == 0 { 1.0 } else { 0.0 };
                if model.a_nu.entry(i, 0) != want {
                    return Err(format!("sensor array l = {l}: A_nu row {i}"));
                }
            }
            let y: Vec<f64> = (0..l).map(|_| rng.gen_range(-2.0..3.0)).collect();
            check_density(&model, 0, &y, &fa, "sensor array nominal")?;
            for prefix in 1..=l {
                let mut factors = fa.clone();
                factors[..prefix].copy_from_slice(&fb[..prefix]);
                check_density(&model, prefix, &y, &factors, "sensor array")?;
            }
            checked += 1;
        }

        // Multistream: one post-change state per nonempty subset in bitmask
        // order, identity post-change dynamics by default.
        for d in 1..=6usize {
            let n_beta = (1usize << d) - 1;
            let fa: Vec<(f64, f64)> = (0..d)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)))
                .collect();
            let fb: Vec<(f64, f64)> = (0..d)
                .map(|_| (rng.gen_range(1.0..3.0), rng.gen_range(0.5..1.5)))
                .collect();
            let mut p: Vec<f64> = (0..n_beta).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            let p_subset: BTreeMap<u32, f64> =
                (0..n_beta).map(|i| ((i + 1) as u32, p[i])).collect();
            let spec = MultistreamSpec {
                f_alpha: fa
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                f_beta: fb
                    .iter()
                    .map(|&(mean, variance)| Density::Gaussian { mean, variance })
                    .collect(),
                p_subset,
                rho: 0.01,
                a_beta: None,
                cap: None,
            };
            let model = build_multistream(&spec).map_err(|e| e.to_string())?;
            if model.spaces.n_beta != n_beta {
                return Err(format!("multistream d = {d}: n_beta"));
            }
            for mask in 1..=n_beta as u32 {
                let state = state_from_subset(mask);
                if model.a_nu.entry(state, 0) != p[state] {
                    return Err(format!("multistream d = {d}: A_nu mask {mask:#b}"));
                }
                for j in 0..n_beta {
                    let want = if j == state { 1.0 } else { 0.0 };
                    if model.a_beta.entry(state, j) != want {
                        return Err(format!("multistream d = {d}: A_beta row {state}"));
                    }
                }
            }
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..3.0)).collect();
            check_density(&model, 0, &y, &fa, "multistream nominal")?;
            for mask in 1..=n_beta as u32 {
                let factors: Vec<(f64, f64)> = (0..d)
                    .map(|stream| {
                        if mask & (1 << stream) != 0 {
                            fb[stream]
                        } else {
                            fa[stream]
                        }
                    })
                    .collect();
                check_density(
                    &model,
                    1 + state_from_subset(mask),
                    &y,
                    &factors,
                    "multistream",
                )?;
            }
            checked += 1;
        }

        Ok(format!(
            "{checked} structured problems verified factor-by-factor to 1e-12 \
             (periods, sensor counts, and stream counts up to 6)"
        ))
    };
    verdict(8, "structured problem reductions", run());
}

#[test]
fn criterion_9_single_realizations_are_not_targets() {
    // The contract pins distributions, not individual random draws: two
    // master seeds must give different per-run alarm times while their
    // Monte Carlo summaries agree within sampling error. Nothing anywhere
    // in this suite asserts a specific simulated change or alarm time.
    let run = || -> Result<String, String> {
        let aug = build_augmented(&demo_model()).map_err(|e| e.to_string())?;
        let a = monte_carlo_grid(&aug, &[0.7], DEMO_DELAY_PENALTY, DEMO_HORIZON, 400, 1)
            .map_err(|e| e.to_string())?;
        let b = monte_carlo_grid(&aug, &[0.7], DEMO_DELAY_PENALTY, DEMO_HORIZON, 400, 2)
            .map_err(|e| e.to_string())?;
        let (ra, rb) = (&a.rows[0], &b.rows[0]);
        if ra.add.mean == rb.add.mean {
            return Err("independent seeds produced identical delay estimates".into());
        }
        let gap = (ra.add.mean - rb.add.mean).abs();
        let slack = 4.0 * (ra.add.se + rb.add.se);
        if gap > slack {
            return Err(format!(
                "seed-to-seed ADD gap {gap:.2} exceeds {slack:.2}; estimates are \
                 not distribution-stable"
            ));
        }
        Ok(format!(
            "per-seed estimates differ (ADD {:.1} vs {:.1}) yet agree within \
             sampling error; only distributional checks are asserted",
            ra.add.mean, rb.add.mean
        ))
    };
    verdict(9, "single realizations are not targets", run());
}
