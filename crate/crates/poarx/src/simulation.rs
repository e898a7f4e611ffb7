//! Trajectory generation for PoARX processes.
//!
//! Each step computes the intensities from the recursion, draws a uniform
//! vector (Frank-coupled or independent), and inverts the Poisson CDF per
//! margin. The independence case coincides with counting unit-intensity
//! Poisson arrivals on [0, λ].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::copula::{Dependence, FrankCopula};
use crate::dists::Poisson;
use crate::error::{Error, Result};
use crate::model::{
    check_stability, unconditional_mean, Covariates, DependenceKind, InitPolicy, IntensityPath,
    ModelSpec, SeriesData, ThetaFull,
};

/// Where the simulator gets covariate rows from.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSource {
    /// No covariates; every margin must declare r = 0.
    None,
    /// Caller-supplied matrices covering burn-in and sample:
    /// `n + burn_in` rows per series.
    Supplied(Vec<Covariates>),
    /// Built-in stationary AR(1) generator clipped at zero, for test
    /// scaffolding only; flagged in the output.
    Synthetic,
}

/// Everything needed to generate one trajectory deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub theta: ThetaFull,
    pub n: usize,
    pub covariates: CovariateSource,
    pub init: InitPolicy,
    pub burn_in: usize,
    pub seed: u64,
}

/// Simulated counts, their intensity paths, and provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub data: SeriesData,
    pub intensities: IntensityPath,
    pub synthetic_covariates: bool,
}

// AR(1) used by the synthetic covariate generator:
// x_t = max(0, c + phi x_{t-1} + sd eps_t).
const SYNTH_AR: f64 = 0.7;
const SYNTH_CONST: f64 = 0.3;
const SYNTH_SD: f64 = 0.5;

/// One synthetic covariate column of the kind [`CovariateSource::Synthetic`]
/// produces: a stationary AR(1) clipped at zero, drawn on an independent
/// stream so several columns (or callers) can share one seed.
pub fn synthetic_covariate_column(rows: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, SYNTH_SD).expect("constant sd is valid");
    let mut state = SYNTH_CONST / (1.0 - SYNTH_AR);
    (0..rows)
        .map(|_| {
            state = (SYNTH_CONST + SYNTH_AR * state + normal.sample(&mut rng)).max(0.0);
            state
        })
        .collect()
}

/// Generate `n` post-burn-in observations of the configured process.
pub fn simulate_poarx(config: &SimConfig) -> Result<SimOutput> {
    let spec = &config.spec;
    spec.validate()?;
    let k = spec.n_series();
    if config.theta.margins.len() != k {
        return Err(Error::invalid("theta must carry one parameter set per series"));
    }
    for (m, params) in spec.margins.iter().zip(&config.theta.margins) {
        params.check_shape(m)?;
        if !check_stability(params).stable {
            return Err(Error::domain(format!(
                "refusing to simulate with unstable parameters (coefficient sum {})",
                params.coefficient_sum()
            )));
        }
    }
    let dependence = match spec.dependence {
        DependenceKind::Independence => Dependence::Independence,
        DependenceKind::Frank => {
            let rho = config.theta.rho.ok_or_else(|| {
                Error::invalid("Frank dependence requires rho in the parameter vector")
            })?;
            Dependence::Frank(FrankCopula::new(rho)?)
        }
    };

    let total = config.n + config.burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (x_full, synthetic) = resolve_covariates(config, total, &mut rng)?;

    // Pre-sample values: explicit when fixed, the covariate-free fixed point
    // of the recursion otherwise (burn-in absorbs the approximation).
    let presample: Vec<(f64, f64)> = config
        .theta
        .margins
        .iter()
        .map(|p| match config.init {
            InitPolicy::Fixed { y, lambda } => Ok((y, lambda)),
            _ => {
                let m = unconditional_mean(p, 0.0)?;
                Ok((m, m))
            }
        })
        .collect::<Result<_>>()?;

    let mut y: Vec<Vec<u64>> = vec![Vec::with_capacity(total); k];
    let mut lambda: Vec<Vec<f64>> = vec![Vec::with_capacity(total); k];
    let mut uniforms = vec![0.0f64; k];
    for t in 0..total {
        for j in 0..k {
            let m = &spec.margins[j];
            let p = &config.theta.margins[j];
            let (y0, l0) = presample[j];
            let mut v = p.omega;
            for (&lag, &a) in m.obs_lags.iter().zip(&p.alpha) {
                v += a * if t >= lag { y[j][t - lag] as f64 } else { y0 };
            }
            for (&lag, &b) in m.mean_lags.iter().zip(&p.beta) {
                v += b * if t >= lag { lambda[j][t - lag] } else { l0 };
            }
            for (&e, &xv) in p.eta.iter().zip(x_full[j].row(t)) {
                v += e * xv;
            }
            if !v.is_finite() {
                return Err(Error::numerical(format!(
                    "simulated intensity became non-finite at t = {t}, series {j}"
                )));
            }
            lambda[j].push(v);
        }
        draw_uniforms(&dependence, &mut uniforms, &mut rng)?;
        for j in 0..k {
            let l = lambda[j][t];
            let draw = if l == 0.0 { 0 } else { Poisson::new(l)?.quantile(uniforms[j])? };
            y[j].push(draw);
        }
    }

    let b = config.burn_in;
    let data = SeriesData::new(
        y.into_iter().map(|s| s[b..].to_vec()).collect(),
        x_full.iter().map(|m| m.slice_rows(b, total)).collect(),
    )?;
    let intensities =
        IntensityPath { lambda: lambda.into_iter().map(|s| s[b..].to_vec()).collect() };
    Ok(SimOutput { data, intensities, synthetic_covariates: synthetic })
}

fn draw_uniforms<R: Rng + ?Sized>(dep: &Dependence, out: &mut [f64], rng: &mut R) -> Result<()> {
    match dep {
        _ if dep.is_independent() => {
            for u in out.iter_mut() {
                *u = rng.random();
            }
        }
        Dependence::Frank(c) => {
            let draw = c.sample(out.len(), rng)?;
            out.copy_from_slice(&draw);
        }
        Dependence::Independence => unreachable!(),
    }
    Ok(())
}

fn resolve_covariates(
    config: &SimConfig,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Covariates>, bool)> {
    let spec = &config.spec;
    match &config.covariates {
        CovariateSource::None => {
            for m in &spec.margins {
                if m.n_covariates != 0 {
                    return Err(Error::invalid(
                        "margin declares covariates but the simulation supplies none",
                    ));
                }
            }
            Ok((spec.margins.iter().map(|_| Covariates::empty(total)).collect(), false))
        }
        CovariateSource::Supplied(xs) => {
            if xs.len() != spec.n_series() {
                return Err(Error::invalid("need one covariate matrix per series"));
            }
            for (m, x) in spec.margins.iter().zip(xs) {
                if x.cols() != m.n_covariates {
                    return Err(Error::invalid("covariate width does not match the margin spec"));
                }
                if x.rows() != total {
                    return Err(Error::invalid(format!(
                        "supplied covariates must cover burn-in: need {total} rows, got {}",
                        x.rows()
                    )));
                }
            }
            Ok((xs.clone(), false))
        }
        CovariateSource::Synthetic => {
            let normal = Normal::new(0.0, SYNTH_SD).expect("constant sd is valid");
            let mats = spec
                .margins
                .iter()
                .map(|m| {
                    let r = m.n_covariates;
                    let mut values = Vec::with_capacity(total * r);
                    let mut state = vec![SYNTH_CONST / (1.0 - SYNTH_AR); r];
                    for _ in 0..total {
                        for s in state.iter_mut() {
                            *s = (SYNTH_CONST + SYNTH_AR * *s + normal.sample(rng)).max(0.0);
                            values.push(*s);
                        }
                    }
                    Covariates::new(total, r, values)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((mats, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarginParams, MarginSpec};

    fn poarx11(omega: f64, alpha: f64, beta: f64) -> (MarginSpec, MarginParams) {
        (
            MarginSpec { obs_lags: vec![1], mean_lags: vec![1], n_covariates: 0, intercept: true },
            MarginParams { omega, alpha: vec![alpha], beta: vec![beta], eta: vec![] },
        )
    }

    fn univariate_config(omega: f64, alpha: f64, beta: f64, n: usize, seed: u64) -> SimConfig {
        let (spec, params) = poarx11(omega, alpha, beta);
        SimConfig {
            spec: ModelSpec { margins: vec![spec], dependence: DependenceKind::Independence },
            theta: ThetaFull { margins: vec![params], rho: None },
            n,
            covariates: CovariateSource::None,
            init: InitPolicy::SampleMean,
            burn_in: 0,
            seed,
        }
    }

    #[test]
    fn zero_is_absorbing_without_intercept_or_covariates() {
        let mut config = univariate_config(0.0, 0.5, 0.0, 200, 1);
        config.init = InitPolicy::Fixed { y: 0.0, lambda: 0.0 };
        let out = simulate_poarx(&config).unwrap();
        assert!(out.data.y[0].iter().all(|&v| v == 0));
        assert!(out.intensities.lambda[0].iter().all(|&l| l == 0.0));
    }

    #[test]
    fn constant_intensity_sample_mean_converges() {
        let config = univariate_config(2.0, 0.0, 0.0, 100_000, 2);
        let out = simulate_poarx(&config).unwrap();
        let n = out.data.len() as f64;
        let mean = out.data.y[0].iter().map(|&v| v as f64).sum::<f64>() / n;
        let tol = 3.0 * (2.0 / n).sqrt();
        assert!((mean - 2.0).abs() < tol, "mean={mean}");
    }

    #[test]
    fn intensity_mean_approaches_the_fixed_point() {
        let mut config = univariate_config(1.0, 0.3, 0.4, 100_000, 3);
        config.burn_in = 1_000;
        let out = simulate_poarx(&config).unwrap();
        let lam = &out.intensities.lambda[0];
        let mean = lam.iter().sum::<f64>() / lam.len() as f64;
        let target = 1.0 / 0.3;
        assert!((mean - target).abs() / target < 0.02, "mean={mean}");
    }

    #[test]
    fn margins_stay_poisson_under_strong_dependence() {
        let (spec, params) = poarx11(3.0, 0.0, 0.0);
        let config = SimConfig {
            spec: ModelSpec {
                margins: vec![spec.clone(), spec],
                dependence: DependenceKind::Frank,
            },
            theta: ThetaFull { margins: vec![params.clone(), params], rho: Some(5.0) },
            n: 100_000,
            covariates: CovariateSource::None,
            init: InitPolicy::SampleMean,
            burn_in: 0,
            seed: 4,
        };
        let out = simulate_poarx(&config).unwrap();
        let d = Poisson::new(3.0).unwrap();
        for series in &out.data.y {
            let n = series.len() as f64;
            let mut freq = vec![0u64; 40];
            for &v in series {
                if (v as usize) < freq.len() {
                    freq[v as usize] += 1;
                }
            }
            let tv = 0.5
                * freq
                    .iter()
                    .enumerate()
                    .map(|(y, &c)| (c as f64 / n - d.pmf(y as u64)).abs())
                    .sum::<f64>();
            assert!(tv < 0.01, "tv={tv}");
        }
    }

    #[test]
    fn count_correlation_increases_with_rho() {
        let correlation = |rho: Option<f64>| {
            let (spec, params) = poarx11(2.0, 0.2, 0.2);
            let dependence =
                if rho.is_some() { DependenceKind::Frank } else { DependenceKind::Independence };
            let config = SimConfig {
                spec: ModelSpec { margins: vec![spec.clone(), spec], dependence },
                theta: ThetaFull { margins: vec![params.clone(), params], rho },
                n: 100_000,
                covariates: CovariateSource::None,
                init: InitPolicy::SampleMean,
                burn_in: 200,
                seed: 5,
            };
            let out = simulate_poarx(&config).unwrap();
            let a: Vec<f64> = out.data.y[0].iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = out.data.y[1].iter().map(|&v| v as f64).collect();
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
            let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
            cov / (va * vb).sqrt()
        };
        let neg = correlation(Some(-5.0));
        let ind = correlation(None);
        let pos = correlation(Some(5.0));
        assert!(neg < ind && ind < pos, "neg={neg} ind={ind} pos={pos}");
        assert!(neg < -0.1 && pos > 0.1);
    }

    #[test]
    fn identical_configs_give_identical_output() {
        let config = univariate_config(1.0, 0.3, 0.4, 500, 77);
        let a = simulate_poarx(&config).unwrap();
        let b = simulate_poarx(&config).unwrap();
        assert_eq!(a, b);
        let mut other = config;
        other.seed = 78;
        let c = simulate_poarx(&other).unwrap();
        assert_ne!(a.data.y, c.data.y);
    }

    #[test]
    fn unstable_parameters_are_refused() {
        let config = univariate_config(1.0, 0.6, 0.5, 100, 1);
        assert!(simulate_poarx(&config).is_err());
    }

    #[test]
    fn synthetic_covariates_are_flagged_and_shaped() {
        let spec =
            MarginSpec { obs_lags: vec![1], mean_lags: vec![], n_covariates: 2, intercept: true };
        let params =
            MarginParams { omega: 1.0, alpha: vec![0.3], beta: vec![], eta: vec![0.1, 0.2] };
        let config = SimConfig {
            spec: ModelSpec { margins: vec![spec], dependence: DependenceKind::Independence },
            theta: ThetaFull { margins: vec![params], rho: None },
            n: 50,
            covariates: CovariateSource::Synthetic,
            init: InitPolicy::SampleMean,
            burn_in: 10,
            seed: 6,
        };
        let out = simulate_poarx(&config).unwrap();
        assert!(out.synthetic_covariates);
        assert_eq!(out.data.x[0].rows(), 50);
        assert_eq!(out.data.x[0].cols(), 2);
    }

    #[test]
    fn supplied_covariates_must_cover_burn_in() {
        let spec =
            MarginSpec { obs_lags: vec![], mean_lags: vec![], n_covariates: 1, intercept: true };
        let params = MarginParams { omega: 1.0, alpha: vec![], beta: vec![], eta: vec![0.5] };
        let mut config = SimConfig {
            spec: ModelSpec { margins: vec![spec], dependence: DependenceKind::Independence },
            theta: ThetaFull { margins: vec![params], rho: None },
            n: 20,
            covariates: CovariateSource::Supplied(vec![
                Covariates::new(20, 1, vec![1.0; 20]).unwrap()
            ]),
            init: InitPolicy::SampleMean,
            burn_in: 5,
            seed: 6,
        };
        assert!(simulate_poarx(&config).is_err());
        config.covariates =
            CovariateSource::Supplied(vec![Covariates::new(25, 1, vec![1.0; 25]).unwrap()]);
        let out = simulate_poarx(&config).unwrap();
        assert_eq!(out.data.len(), 20);
    }
}
