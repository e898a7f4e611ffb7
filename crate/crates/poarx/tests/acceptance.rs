//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`). Criterion 10
//! (command-line golden-file determinism) lives in the CLI crate's own
//! acceptance suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poarx::copula::{rectangle_pmf, Dependence, FrankCopula};
use poarx::dists::Poisson;
use poarx::estimation::{
    fit_ifm, marginal_log_lik, marginal_score, pack_params, unpack_params, FitOptions,
};
use poarx::evaluation::holdout_log_score;
use poarx::forecasting::{forecast_replicates, two_step_pmf_exact, two_step_pmf_from_parts, ForecastContext};
use poarx::model::{
    Covariates, DependenceKind, InitPolicy, MarginParams, MarginSpec, ModelSpec, SeriesData,
    ThetaFull,
};
use poarx::simulation::{simulate_poarx, CovariateSource, SimConfig};

fn report(criterion: u32, name: &str, started: Instant, budget_s: f64, pass: bool, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    let in_budget = elapsed < budget_s;
    let status = if pass && in_budget { "PASS" } else { "FAIL" };
    println!(
        "acceptance criterion {criterion:2} [{status}] {name}: {detail} ({elapsed:.2}s of {budget_s:.0}s budget)"
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
    assert!(in_budget, "criterion {criterion} ({name}) exceeded its {budget_s}s budget: {elapsed:.2}s");
}

/// Rectangle-pmf normalization over a truncated grid, with marginal CDFs
/// precomputed once per margin.
fn pmf_grid_sum(lambdas: &[f64], rho: f64, cap: u64) -> f64 {
    let dep = Dependence::Frank(FrankCopula::new(rho).unwrap());
    let tables: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&l| {
            let d = Poisson::new(l).unwrap();
            (0..=cap).map(|y| d.cdf(y)).collect()
        })
        .collect();
    let k = lambdas.len();
    let mut indices = vec![0u64; k];
    let mut hi = vec![0.0; k];
    let mut lo = vec![0.0; k];
    let mut sum = 0.0;
    loop {
        for j in 0..k {
            let y = indices[j];
            hi[j] = tables[j][y as usize];
            lo[j] = if y == 0 { 0.0 } else { tables[j][y as usize - 1] };
        }
        sum += rectangle_pmf(&hi, &lo, &dep).unwrap().prob;
        // Odometer over the grid.
        let mut j = 0;
        loop {
            indices[j] += 1;
            if indices[j] <= cap {
                break;
            }
            indices[j] = 0;
            j += 1;
            if j == k {
                return sum;
            }
        }
    }
}

#[test]
fn criterion_01_copula_normalization() {
    let started = Instant::now();
    let sum2 = pmf_grid_sum(&[2.0, 3.0], 2.5, 60);
    let sum3 = pmf_grid_sum(&[1.0, 2.0, 3.0], 2.0, 40);
    let pass = (sum2 - 1.0).abs() <= 1e-8 && (sum3 - 1.0).abs() <= 1e-8;
    report(
        1,
        "copula pmf normalization",
        started,
        10.0,
        pass,
        &format!("K=2 sum={sum2:.12}, K=3 sum={sum3:.12}"),
    );
}

#[test]
fn criterion_02_independence_limit() {
    let started = Instant::now();
    let c = FrankCopula::new(1e-6).unwrap();
    let mut max_dev = 0.0f64;
    for i in 1..=9 {
        for j in 1..=9 {
            let (u, v) = (i as f64 / 10.0, j as f64 / 10.0);
            let dev = (c.cdf(&[u, v]).unwrap() - u * v).abs();
            max_dev = max_dev.max(dev);
        }
    }
    report(
        2,
        "independence limit of the copula",
        started,
        1.0,
        max_dev < 1e-5,
        &format!("max |C - uv| = {max_dev:.3e} on the 9x9 grid"),
    );
}

#[test]
fn criterion_03_generator_roundtrip() {
    let started = Instant::now();
    let mut max_err = 0.0f64;
    for &rho in &[-20.0, -2.0, -0.1, 0.1, 2.0, 20.0] {
        let c = FrankCopula::new(rho).unwrap();
        for i in 1..=99 {
            let t = i as f64 / 100.0;
            let back = c.generator_inverse(c.generator(t).unwrap()).unwrap();
            max_err = max_err.max((back - t).abs());
        }
    }
    report(
        3,
        "generator/inverse roundtrip",
        started,
        1.0,
        max_err < 1e-10,
        &format!("max roundtrip error {max_err:.3e}"),
    );
}

#[test]
fn criterion_04_score_matches_finite_differences() {
    let started = Instant::now();
    let spec = MarginSpec {
        obs_lags: vec![1, 2],
        mean_lags: vec![1],
        n_covariates: 1,
        intercept: true,
    };
    // One fixed data set; twenty random stable parameter points.
    let sim = simulate_poarx(&SimConfig {
        spec: ModelSpec { margins: vec![spec.clone()], dependence: DependenceKind::Independence },
        theta: ThetaFull {
            margins: vec![MarginParams {
                omega: 0.8,
                alpha: vec![0.25, 0.1],
                beta: vec![0.2],
                eta: vec![0.3],
            }],
            rho: None,
        },
        n: 200,
        covariates: CovariateSource::Synthetic,
        init: InitPolicy::SampleMean,
        burn_in: 100,
        seed: 99,
    })
    .unwrap();
    let y = &sim.data.y[0];
    let x = &sim.data.x[0];
    let init = InitPolicy::SampleMean;

    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let total = 0.1 + 0.75 * rng.random::<f64>();
        let weights: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let wsum: f64 = weights.iter().sum();
        let params = MarginParams {
            omega: 0.1 + 1.9 * rng.random::<f64>(),
            alpha: vec![total * weights[0] / wsum, total * weights[1] / wsum],
            beta: vec![total * weights[2] / wsum],
            eta: vec![0.5 * rng.random::<f64>()],
        };
        let analytic = marginal_score(&spec, &params, y, x, &init).unwrap();
        let theta = pack_params(&spec, &params);
        for i in 0..theta.len() {
            let h = 1e-6 * theta[i].max(1e-2);
            let mut hi = theta.clone();
            hi[i] += h;
            let mut lo = theta.clone();
            lo[i] -= h;
            let f_hi = marginal_log_lik(&spec, &unpack_params(&spec, &hi), y, x, &init).unwrap();
            let f_lo = marginal_log_lik(&spec, &unpack_params(&spec, &lo), y, x, &init).unwrap();
            let fd = (f_hi - f_lo) / (2.0 * h);
            worst = worst.max((analytic[i] - fd).abs() / (1.0 + fd.abs()));
        }
    }
    report(
        4,
        "analytic score vs central differences",
        started,
        30.0,
        worst < 1e-4,
        &format!("worst relative deviation {worst:.3e} over 20 points"),
    );
}

#[test]
fn criterion_05_parameter_recovery() {
    let started = Instant::now();
    let margin_spec =
        MarginSpec { obs_lags: vec![1], mean_lags: vec![1], n_covariates: 0, intercept: true };
    let spec = ModelSpec {
        margins: vec![margin_spec.clone(), margin_spec.clone()],
        dependence: DependenceKind::Frank,
    };
    let truth = MarginParams { omega: 1.0, alpha: vec![0.3], beta: vec![0.4], eta: vec![] };
    let truth_vec = pack_params(&margin_spec, &truth);
    let true_rho = 2.5;
    let options = FitOptions::default();

    let seeds = 50u64;
    let mut pairs_total = 0usize;
    let mut pairs_within = 0usize;
    let mut rho_inside = 0usize;
    for seed in 0..seeds {
        let sim = simulate_poarx(&SimConfig {
            spec: spec.clone(),
            theta: ThetaFull {
                margins: vec![truth.clone(), truth.clone()],
                rho: Some(true_rho),
            },
            n: 5000,
            covariates: CovariateSource::None,
            init: InitPolicy::SampleMean,
            burn_in: 300,
            seed: 10_000 + seed,
        })
        .unwrap();
        let fit = fit_ifm(&spec, &sim.data, &options).unwrap();
        for margin in &fit.margins {
            let est = pack_params(&margin_spec, &margin.params);
            let se = margin.se.as_ref().expect("regular data gives invertible information");
            for i in 0..est.len() {
                pairs_total += 1;
                if (est[i] - truth_vec[i]).abs() <= 3.0 * se[i] {
                    pairs_within += 1;
                }
            }
        }
        let rho = fit.rho.unwrap().rho;
        if (1.8..=3.2).contains(&rho) {
            rho_inside += 1;
        }
    }
    let coord_rate = pairs_within as f64 / pairs_total as f64;
    let rho_rate = rho_inside as f64 / seeds as f64;
    report(
        5,
        "IFM parameter recovery",
        started,
        600.0,
        coord_rate >= 0.85 && rho_rate >= 0.90,
        &format!(
            "{pairs_within}/{pairs_total} coordinates within 3 se ({:.1}%), rho in [1.8, 3.2] in {rho_inside}/{seeds} seeds",
            100.0 * coord_rate
        ),
    );
}

#[test]
fn criterion_06_two_step_forecast_is_not_poisson() {
    let started = Instant::now();
    let (alpha1, lambda1, c) = (0.4, 3.0, 1.0);
    let pmf = two_step_pmf_from_parts(alpha1, lambda1, c, None).unwrap();
    let mean: f64 = pmf.iter().enumerate().map(|(y, &p)| y as f64 * p).sum();
    let ex2: f64 = pmf.iter().enumerate().map(|(y, &p)| (y as f64).powi(2) * p).sum();
    let ratio = (ex2 - mean * mean) / mean;
    let mean_ok = (mean - (c + alpha1 * lambda1)).abs() < 1e-8;
    let mut pgf_dev = 0.0f64;
    for z in [0.1f64, 0.5, 0.9] {
        let pgf: f64 = pmf.iter().enumerate().map(|(y, &p)| p * z.powi(y as i32)).sum();
        let want = ((z - 1.0) * c).exp() * (lambda1 * (((z - 1.0) * alpha1).exp() - 1.0)).exp();
        pgf_dev = pgf_dev.max((pgf - want).abs());
    }
    report(
        6,
        "exact two-step predictive law",
        started,
        1.0,
        ratio > 1.05 && mean_ok && pgf_dev < 1e-10,
        &format!("var/mean = {ratio:.4}, mean error {:.2e}, max PGF deviation {pgf_dev:.2e}",
            (mean - 2.2f64).abs()),
    );
}

#[test]
fn criterion_07_interval_simulation_matches_exact_two_step() {
    let started = Instant::now();
    let spec = ModelSpec {
        margins: vec![MarginSpec {
            obs_lags: vec![1],
            mean_lags: vec![1],
            n_covariates: 0,
            intercept: true,
        }],
        dependence: DependenceKind::Independence,
    };
    let theta = ThetaFull {
        margins: vec![MarginParams { omega: 1.0, alpha: vec![0.4], beta: vec![0.2], eta: vec![] }],
        rho: None,
    };
    let history =
        SeriesData::new(vec![vec![2, 4, 1, 3, 5, 2, 0, 3]], vec![Covariates::empty(8)]).unwrap();
    let ctx = ForecastContext::new(
        &spec,
        &theta,
        &history,
        vec![Covariates::empty(0)],
        &InitPolicy::SampleMean,
    )
    .unwrap();
    let exact = two_step_pmf_exact(&ctx, 0, None).unwrap();
    let b = 10_000usize;
    let draws = forecast_replicates(&ctx, 2, b, 123).unwrap();
    let mut freq = vec![0u64; exact.len()];
    let mut overflow = 0u64;
    for &d in &draws[0][1] {
        if (d as usize) < freq.len() {
            freq[d as usize] += 1;
        } else {
            overflow += 1;
        }
    }
    let mut tv = 0.0;
    for (y, &p) in exact.iter().enumerate() {
        tv += (freq[y] as f64 / b as f64 - p).abs();
    }
    tv = 0.5 * (tv + overflow as f64 / b as f64);
    report(
        7,
        "simulated intervals vs exact two-step pmf",
        started,
        30.0,
        tv < 0.02,
        &format!("total variation distance {tv:.4} at B={b}"),
    );
}

#[test]
fn criterion_08_stationarity_smoke_test() {
    let started = Instant::now();
    let spec = ModelSpec {
        margins: vec![MarginSpec {
            obs_lags: vec![1],
            mean_lags: vec![1],
            n_covariates: 0,
            intercept: true,
        }],
        dependence: DependenceKind::Independence,
    };
    let theta = ThetaFull {
        margins: vec![MarginParams { omega: 1.0, alpha: vec![0.3], beta: vec![0.4], eta: vec![] }],
        rho: None,
    };
    let run = |init: InitPolicy| {
        let sim = simulate_poarx(&SimConfig {
            spec: spec.clone(),
            theta: theta.clone(),
            n: 100_000,
            covariates: CovariateSource::None,
            init,
            burn_in: 1_000,
            seed: 321,
        })
        .unwrap();
        let lam = &sim.intensities.lambda[0];
        lam.iter().sum::<f64>() / lam.len() as f64
    };
    let target = 10.0 / 3.0;
    let mean_low = run(InitPolicy::Fixed { y: 0.0, lambda: 0.0 });
    let mean_high = run(InitPolicy::Fixed { y: 20.0, lambda: 20.0 });
    let dev_low = (mean_low - target).abs() / target;
    let dev_high = (mean_high - target).abs() / target;
    let cross = (mean_low - mean_high).abs() / target;
    report(
        8,
        "stationary mean of the intensity",
        started,
        30.0,
        dev_low < 0.02 && dev_high < 0.02 && cross < 0.02,
        &format!(
            "means {mean_low:.4} / {mean_high:.4} vs {target:.4} (deviations {:.2}% / {:.2}%)",
            100.0 * dev_low,
            100.0 * dev_high
        ),
    );
}

#[test]
fn criterion_09_four_model_menu_ranks_dependence_plus_covariates_first() {
    let started = Instant::now();
    let margin_cov =
        MarginSpec { obs_lags: vec![1], mean_lags: vec![1], n_covariates: 1, intercept: true };
    let margin_nocov = MarginSpec { n_covariates: 0, ..margin_cov.clone() };
    let specs = [
        ModelSpec {
            margins: vec![margin_nocov.clone(), margin_nocov.clone()],
            dependence: DependenceKind::Independence,
        },
        ModelSpec {
            margins: vec![margin_nocov.clone(), margin_nocov.clone()],
            dependence: DependenceKind::Frank,
        },
        ModelSpec {
            margins: vec![margin_cov.clone(), margin_cov.clone()],
            dependence: DependenceKind::Independence,
        },
        ModelSpec {
            margins: vec![margin_cov.clone(), margin_cov.clone()],
            dependence: DependenceKind::Frank,
        },
    ];
    let truth = MarginParams { omega: 0.5, alpha: vec![0.3], beta: vec![0.3], eta: vec![0.8] };
    let options = FitOptions::default();
    let (n, burn, train_len) = (5000usize, 300usize, 4000usize);

    let seeds = 20u64;
    let mut frank_cov_wins = 0usize;
    for seed in 0..seeds {
        // One shared covariate column, identical across the two series.
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed);
        let mut state = 1.0f64;
        let shared: Vec<f64> = (0..n + burn)
            .map(|_| {
                let eps: f64 = rng.random::<f64>() - 0.5;
                state = (0.3 + 0.7 * state + 1.2 * eps).max(0.0);
                state
            })
            .collect();
        let x = Covariates::new(n + burn, 1, shared).unwrap();
        let sim = simulate_poarx(&SimConfig {
            spec: specs[3].clone(),
            theta: ThetaFull {
                margins: vec![truth.clone(), truth.clone()],
                rho: Some(3.0),
            },
            n,
            covariates: CovariateSource::Supplied(vec![x.clone(), x]),
            init: InitPolicy::SampleMean,
            burn_in: burn,
            seed: 50_000 + seed,
        })
        .unwrap();

        let data_cov = sim.data.clone();
        let data_nocov = SeriesData::new(
            data_cov.y.clone(),
            vec![Covariates::empty(n), Covariates::empty(n)],
        )
        .unwrap();

        let mut scores = [0.0f64; 4];
        for (i, spec) in specs.iter().enumerate() {
            let data = if i < 2 { &data_nocov } else { &data_cov };
            let train = data.slice(0, train_len);
            let test = data.slice(train_len, n);
            let fit = fit_ifm(spec, &train, &options).unwrap();
            scores[i] = holdout_log_score(&fit, &train, &test).unwrap().value;
        }
        let best = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        if best == 3 {
            frank_cov_wins += 1;
        }
    }
    report(
        9,
        "four-model menu holdout ranking",
        started,
        900.0,
        frank_cov_wins * 10 >= seeds as usize * 8,
        &format!("dependence+covariates model won {frank_cov_wins}/{seeds} holdouts"),
    );
}
