//! Acceptance suite: one test per verification criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`, and always on failure).
//!
//! Every tolerance is pinned in code. Several criteria probe Monte Carlo
//! error magnitudes of the reproduced study; where they fail, the printed
//! line carries the measured values.

use censim::dataset;
use censim::estimate::{fit, FitConfig, IndexParam, Method};
use censim::simulate::{calibrate_censoring, dgp_sample, run_monte_carlo, ConfigId, SimulationConfig};
use censim::smooth::{index_density, link_fit, link_gradient, BandwidthRule, Kernel};
use censim::survival::{empirical_cdf, km_fit, km_weights, Cdf, KmTarget, Observation};
use censim::transform::synthetic_transform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::process::Command;
use std::time::Instant;

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Criterion 1: on 1000 random censored samples the Kaplan-Meier weights
/// match n⁻¹ δ_i / (1 − G-hat(T_i−)) to 1e−12.
#[test]
fn criterion_01_weight_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let sample: Vec<Observation> = (0..n)
            .map(|_| {
                let t: f64 = rng.random_range(0.01..10.0);
                let event = rng.random_range(0.0..1.0) < 0.7;
                Observation::new(t, event, vec![0.0])
            })
            .collect();
        let weights = km_weights(&sample).unwrap();
        let g_hat = km_fit(&sample, KmTarget::Censoring).unwrap();
        for (obs, &w) in sample.iter().zip(&weights.weights) {
            let reference = if obs.event {
                1.0 / (n as f64 * (1.0 - g_hat.value_minus(obs.time)))
            } else {
                0.0
            };
            worst = worst.max((w - reference).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-12 && elapsed.as_secs_f64() < 5.0;
    assert!(
        verdict("1 (weight identity)", pass, &format!("max |W_in − formula| = {worst:.3e}, {elapsed:.2?}")),
        "max deviation {worst:.3e}, runtime {elapsed:?}"
    );
}

/// Criterion 2: with no censoring, F-hat is exactly the empirical CDF, the
/// censored link estimator reduces to classical Nadaraya-Watson within
/// 1e−12, and the fit recovers a noiseless linear index within 1e−4.
#[test]
fn criterion_02_no_censoring_degeneracy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    // Product-limit collapses to the empirical CDF, bit for bit.
    let mut cdf_exact = true;
    for _ in 0..50 {
        let n = rng.random_range(1..=60);
        let sample: Vec<Observation> = (0..n)
            .map(|_| Observation::new(rng.random_range(0.0..5.0), true, vec![0.0]))
            .collect();
        cdf_exact &= km_fit(&sample, KmTarget::Event).unwrap() == empirical_cdf(&sample).unwrap();
        let w = km_weights(&sample).unwrap();
        cdf_exact &= w.weights.iter().all(|&wi| wi == 1.0 / n as f64);
    }

    // Link estimator equals the textbook smoother on uncensored data.
    let pts: Vec<(f64, f64)> = (0..80)
        .map(|_| {
            let x: f64 = rng.random_range(0.0..2.0);
            (x, (3.0 * x).cos() + rng.random_range(-0.3..0.3))
        })
        .collect();
    let observations: Vec<Observation> =
        pts.iter().map(|&(x, y)| Observation::new(y, true, vec![x])).collect();
    let synth = synthetic_transform(&observations, &censim::survival::StepCdf::zero()).unwrap();
    let theta = IndexParam::new(vec![1.0]).unwrap();
    let h = 0.3;
    let link = link_fit(&theta, &synth, h, Kernel::Triweight).unwrap();
    let mut nw_gap = 0.0f64;
    for k in 0..40 {
        let u = 0.2 + k as f64 * 0.04;
        let mut num = 0.0;
        let mut den = 0.0;
        for &(x, y) in &pts {
            let kv = Kernel::Triweight.eval((x - u) / h);
            num += kv * y;
            den += kv;
        }
        if let Some(v) = link.value(u) {
            nw_gap = nw_gap.max((v - num / den).abs());
        }
    }

    // Noiseless linear model on a balanced design.
    let mut lattice = Vec::new();
    for i in 0..20 {
        for j in 0..20 {
            let x1 = (i as f64 + 0.5) / 20.0;
            let x2 = (j as f64 + 0.5) / 20.0;
            lattice.push(Observation::new(x1 + x2, true, vec![x1, x2]));
        }
    }
    let mut fit_err = 0.0f64;
    for method in [Method::Wls, Method::Sd] {
        let r = fit(&lattice, method, &FitConfig::default()).unwrap();
        fit_err = fit_err.max((r.theta_hat.free()[0] - 1.0).abs());
    }

    let elapsed = start.elapsed();
    let pass = cdf_exact && nw_gap < 1e-12 && fit_err < 1e-4 && elapsed.as_secs_f64() < 10.0;
    assert!(
        verdict(
            "2 (no-censoring degeneracy)",
            pass,
            &format!("cdf exact = {cdf_exact}, NW gap = {nw_gap:.2e}, fit error = {fit_err:.2e}, {elapsed:.2?}")
        ),
        "cdf {cdf_exact}, nw {nw_gap:.3e}, fit {fit_err:.3e}"
    );
}

/// Criterion 3: with the true censoring law, the synthetic responses match
/// the latent responses in mean within 3 Monte Carlo standard errors in at
/// least 47 of 50 replications (config 2, n = 2000).
#[test]
fn criterion_03_synthetic_unbiasedness() {
    let start = Instant::now();
    let lambda = calibrate_censoring(ConfigId::Config2, 0.3, 303).unwrap();
    let law = ConfigId::Config2.censoring_law(lambda);
    let mut hits = 0;
    for rep in 0..50u64 {
        let config = SimulationConfig::new(ConfigId::Config2, lambda, 2000);
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        rng.set_stream(rep + 1);
        let s = dgp_sample(&config, &mut rng);
        let synth = synthetic_transform(&s.observations, &law).unwrap();
        let n = s.observations.len() as f64;
        let diffs: Vec<f64> = synth
            .y_star
            .iter()
            .zip(&s.latent_response)
            .map(|(ys, y)| ys - y)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        if mean.abs() <= 3.0 * se {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = hits >= 47 && elapsed.as_secs_f64() < 30.0;
    assert!(
        verdict("3 (synthetic unbiasedness)", pass, &format!("{hits}/50 within 3 SE, {elapsed:.2?}")),
        "{hits}/50"
    );
}

/// Criterion 4: the analytic gradient of the link estimate matches central
/// finite differences (step 1e−5·h) to relative error 1e−5 at 20 interior
/// points on each of 10 random fits.
#[test]
fn criterion_04_gradient_check() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_rel = 0.0f64;
    let mut fits_checked = 0;
    for _ in 0..10 {
        let n = 150;
        let sample: Vec<Observation> = (0..n)
            .map(|_| {
                let x1: f64 = rng.random_range(0.0..1.0);
                let x2: f64 = rng.random_range(0.0..1.0);
                let y = (x1 + 2.0 * x2).exp() + rng.random_range(-0.3..0.3);
                let c: f64 = rng.random_range(0.5..12.0);
                Observation::new(y.min(c), y <= c, vec![x1, x2])
            })
            .collect();
        let g_hat = km_fit(&sample, KmTarget::Censoring).unwrap();
        let synth = synthetic_transform(&sample, &g_hat).unwrap();
        let t2: f64 = rng.random_range(1.0..3.0);
        let theta = IndexParam::from_free(&[t2]);
        let h = BandwidthRule::default().bandwidth(&theta.index_values(&sample)).unwrap();
        let link = link_fit(&theta, &synth, h, Kernel::Triweight).unwrap();
        let step = 1e-5 * h;

        let mut checked = 0;
        let mut attempts = 0;
        while checked < 20 && attempts < 400 {
            attempts += 1;
            let x = vec![rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)];
            let Ok(grad) = link_gradient(&link, &x) else { continue };
            let value_at = |t: f64| {
                let th = IndexParam::from_free(&[t]);
                link_fit(&th, &synth, h, Kernel::Triweight)
                    .ok()
                    .and_then(|l| l.value(th.index_value(&x)))
            };
            let (Some(up), Some(dn)) = (value_at(t2 + step), value_at(t2 - step)) else {
                continue;
            };
            let fd = (up - dn) / (2.0 * step);
            if fd.abs() < 1e-6 {
                continue;
            }
            let rel = (grad[1] - fd).abs() / fd.abs();
            worst_rel = worst_rel.max(rel);
            checked += 1;
        }
        assert_eq!(checked, 20, "could not find 20 interior points");
        fits_checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = worst_rel < 1e-5 && fits_checked == 10 && elapsed.as_secs_f64() < 10.0;
    assert!(
        verdict("4 (gradient check)", pass, &format!("worst relative error = {worst_rel:.3e}, {elapsed:.2?}")),
        "worst rel {worst_rel:.3e}"
    );
}

/// Criteria 5 and 6, sharing one Monte Carlo run: over n ∈ {50, 100, 200,
/// 400} at ≈30% censoring in config 2, the median error must decrease
/// strictly for both methods, and the log-log slope of median error against
/// n must lie in [−0.75, −0.25].
#[test]
fn criterion_05_06_consistency_and_rate() {
    let start = Instant::now();
    let lambda = calibrate_censoring(ConfigId::Config2, 0.3, 0).unwrap();
    let sizes = [50usize, 100, 200, 400];
    let mut medians = vec![Vec::new(); 2];
    for &n in &sizes {
        let config = SimulationConfig {
            replications: 200,
            seed: 1,
            ..SimulationConfig::new(ConfigId::Config2, lambda, n)
        };
        let report = run_monte_carlo(&config).unwrap();
        for (k, m) in report.methods.iter().enumerate() {
            medians[k].push(m.median_error);
        }
    }
    let elapsed = start.elapsed();

    let mut monotone = true;
    let mut slopes = Vec::new();
    for (k, med) in medians.iter().enumerate() {
        for w in med.windows(2) {
            monotone &= w[1] < w[0];
        }
        // Least-squares slope of log median error on log n.
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = med.iter().map(|m| m.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 4.0;
        let ym = ys.iter().sum::<f64>() / 4.0;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        slopes.push(sxy / sxx);
        println!(
            "  method {}: medians {:?} slope {:.3}",
            ["wls", "sd"][k],
            med.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>(),
            slopes[k]
        );
    }
    let slopes_ok = slopes.iter().all(|s| (-0.75..=-0.25).contains(s));

    let pass5 = verdict(
        "5 (consistency)",
        monotone && elapsed.as_secs_f64() < 900.0,
        &format!("strict decrease over n {sizes:?} for both methods = {monotone}, {elapsed:.2?}"),
    );
    let pass6 = verdict(
        "6 (rate check)",
        slopes_ok,
        &format!("log-log slopes {slopes:.3?} vs required [-0.75, -0.25]"),
    );
    assert!(pass5 && pass6, "medians {medians:?}, slopes {slopes:?}");
}

/// Criterion 7: desk-scale table reproduction; config 1 (λ₁ = 2.4, n = 100)
/// must reach MSE < 1e−3 and config 3 (λ₃ = 2, n = 100) MSE < 1e−2 for both
/// methods, with measured censoring fractions reported.
#[test]
fn criterion_07_table_reproduction() {
    let start = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (config_id, lambda, bound) in
        [(ConfigId::Config1, 2.4, 1e-3), (ConfigId::Config3, 2.0, 1e-2)]
    {
        let config = SimulationConfig {
            replications: 200,
            seed: 7,
            ..SimulationConfig::new(config_id, lambda, 100)
        };
        let report = run_monte_carlo(&config).unwrap();
        for m in &report.methods {
            pass &= m.mse < bound;
            details.push(format!(
                "config {} {}: mse {:.4e} (bound {bound:.0e}), censoring {:.1}%",
                report.config_id,
                m.method.name(),
                m.mse,
                100.0 * m.mean_censoring_fraction
            ));
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed.as_secs_f64() < 1200.0;
    assert!(
        verdict("7 (table reproduction)", pass, &format!("{}; {elapsed:.2?}", details.join("; "))),
        "{details:?}"
    );
}

/// Criterion 8: the plug-in link estimate converges to the ideal estimator
/// built with the true censoring law; the median sup-difference over the
/// trimmed region at n = 800 is at most half its value at n = 200.
#[test]
fn criterion_08_oracle_equivalence() {
    let start = Instant::now();
    let lambda = calibrate_censoring(ConfigId::Config2, 0.3, 808).unwrap();
    let law = ConfigId::Config2.censoring_law(lambda);
    let theta0 = ConfigId::Config2.true_theta();
    let medians: Vec<f64> = [200usize, 800]
        .iter()
        .map(|&n| {
            let mut sups: Vec<f64> = (0..100u64)
                .into_par_iter()
                .map(|rep| {
                    let config = SimulationConfig::new(ConfigId::Config2, lambda, n);
                    let mut rng = ChaCha8Rng::seed_from_u64(808);
                    rng.set_stream(rep + 1);
                    let s = dgp_sample(&config, &mut rng);
                    let g_hat = km_fit(&s.observations, KmTarget::Censoring).unwrap();
                    let synth_hat = synthetic_transform(&s.observations, &g_hat).unwrap();
                    let synth_star = synthetic_transform(&s.observations, &law).unwrap();
                    let index = theta0.index_values(&s.observations);
                    let h = BandwidthRule::default().bandwidth(&index).unwrap();
                    let f_hat = link_fit(&theta0, &synth_hat, h, Kernel::Triweight).unwrap();
                    let f_star = link_fit(&theta0, &synth_star, h, Kernel::Triweight).unwrap();
                    let dens: Vec<f64> = index
                        .iter()
                        .map(|&u| {
                            index_density(Kernel::Triweight, &theta0, &s.observations, h, u)
                        })
                        .collect();
                    let threshold = 0.1 * dens.iter().cloned().fold(0.0f64, f64::max);
                    let mut sup = 0.0f64;
                    for (i, &u) in index.iter().enumerate() {
                        if dens[i] >= threshold {
                            if let (Some(a), Some(b)) = (f_hat.value(u), f_star.value(u)) {
                                sup = sup.max((a - b).abs());
                            }
                        }
                    }
                    sup
                })
                .collect();
            sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
            0.5 * (sups[49] + sups[50])
        })
        .collect();
    let elapsed = start.elapsed();
    let ratio = medians[1] / medians[0];
    let pass = ratio <= 0.5 && elapsed.as_secs_f64() < 300.0;
    assert!(
        verdict(
            "8 (oracle equivalence)",
            pass,
            &format!(
                "median sup |f-hat − f*|: n=200 → {:.4e}, n=800 → {:.4e}, ratio {ratio:.3} (need ≤ 0.5); {elapsed:.2?}",
                medians[0], medians[1]
            )
        ),
        "ratio {ratio}"
    );
}

/// Criterion 9: 95% Wald intervals from the sandwich plug-in cover the free
/// coordinate in 85–99% of 200 replications (config 2, n = 200).
#[test]
fn criterion_09_variance_coverage() {
    let start = Instant::now();
    let lambda = calibrate_censoring(ConfigId::Config2, 0.3, 909).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for method in [Method::Wls, Method::Sd] {
        let outcomes: Vec<Option<bool>> = (0..200u64)
            .into_par_iter()
            .map(|rep| {
                let config = SimulationConfig::new(ConfigId::Config2, lambda, 200);
                let mut rng = ChaCha8Rng::seed_from_u64(909);
                rng.set_stream(rep + 1);
                let s = dgp_sample(&config, &mut rng);
                let fc = FitConfig { seed: rep, ..FitConfig::default() };
                fit(&s.observations, method, &fc).ok().map(|r| {
                    let se = r.standard_errors()[0];
                    (r.theta_hat.free()[0] - 2.0).abs() <= 1.959963984540054 * se
                })
            })
            .collect();
        let successes = outcomes.iter().flatten().count();
        let covered = outcomes.iter().flatten().filter(|c| **c).count();
        let rate = covered as f64 / successes.max(1) as f64;
        pass &= (0.85..=0.99).contains(&rate);
        details.push(format!("{}: {covered}/{successes} = {rate:.3}", method.name()));
    }
    let elapsed = start.elapsed();
    pass &= elapsed.as_secs_f64() < 600.0;
    assert!(
        verdict("9 (variance coverage)", pass, &format!("{}; {elapsed:.2?}", details.join(", "))),
        "{details:?}"
    );
}

/// Criterion 10: the simulation command is byte-deterministic across runs
/// and across worker-pool sizes.
#[test]
fn criterion_10_determinism() {
    let run = |threads: &str, format: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_censim"))
            .args([
                "simulate", "--config", "2", "--cens-param", "0.15", "--n", "40,60", "--reps",
                "6", "--seed", "5", "--output", format,
            ])
            .env("CENSIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let table_a = run("1", "table");
    let table_b = run("1", "table");
    let table_c = run("4", "table");
    let json_a = run("1", "json");
    let json_c = run("4", "json");
    let pass = table_a == table_b && table_a == table_c && json_a == json_c;
    assert!(
        verdict(
            "10 (determinism)",
            pass,
            "byte-identical reports across two runs and 1 vs 4 worker threads"
        ),
        "outputs differ"
    );
}

/// Round trip between the file format and the in-process pipeline: fitting a
/// dataset exported from the generator matches the in-process fit exactly.
#[test]
fn cli_round_trip_matches_in_process() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let config = SimulationConfig::new(ConfigId::Config2, 0.15, 100);
    let sample = dgp_sample(&config, &mut rng).observations;
    let dir = std::env::temp_dir().join("censim_acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("export.csv");
    dataset::write_csv(&path, &sample).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_censim"))
        .args(["fit", "--input"])
        .arg(&path)
        .args(["--method", "wls", "--seed", "3", "--output", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reference =
        fit(&sample, Method::Wls, &FitConfig { seed: 3, ..FitConfig::default() }).unwrap();
    let theta: Vec<f64> = json["theta_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(theta, reference.theta_hat.as_slice());
}
