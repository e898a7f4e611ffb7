//! Intensity forecasts and predictive distributions.
//!
//! One-step predictive laws are Poisson at the predicted intensity. Beyond
//! one step they are not: the two-step law is an exact Poisson mixture over
//! the unobserved next count, computed here in closed form. Longer horizons
//! are covered by simulated trajectories and empirical quantiles.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::copula::{Dependence, FrankCopula};
use crate::dists::Poisson;
use crate::error::{Error, Result};
use crate::model::{
    filter_intensities, Covariates, DependenceKind, InitPolicy, ModelSpec, SeriesData, ThetaFull,
};

/// Tail mass below which predictive pmf vectors are truncated.
const PMF_TAIL: f64 = 1e-12;

/// Fitted model, observed history, and the future covariate rows needed to
/// run the forecast recursion.
#[derive(Debug, Clone)]
pub struct ForecastContext<'a> {
    spec: &'a ModelSpec,
    theta: &'a ThetaFull,
    history: &'a SeriesData,
    future_x: Vec<Covariates>,
    /// Filtered intensities over the history.
    lambda: Vec<Vec<f64>>,
    presample: Vec<(f64, f64)>,
}

impl<'a> ForecastContext<'a> {
    /// Filter the history under `init` and validate the future covariates
    /// (one matrix per series; rows bound the available horizon).
    pub fn new(
        spec: &'a ModelSpec,
        theta: &'a ThetaFull,
        history: &'a SeriesData,
        future_x: Vec<Covariates>,
        init: &InitPolicy,
    ) -> Result<Self> {
        spec.validate()?;
        if theta.margins.len() != spec.n_series() {
            return Err(Error::invalid("theta must carry one parameter set per series"));
        }
        if history.n_series() != spec.n_series() {
            return Err(Error::invalid("history has a different number of series than the spec"));
        }
        if future_x.len() != spec.n_series() {
            return Err(Error::invalid("need one future covariate matrix per series"));
        }
        let max_lag = spec.margins.iter().map(|m| m.max_lag()).max().unwrap_or(0);
        if history.len() < max_lag {
            return Err(Error::invalid(format!(
                "history of length {} does not cover the maximum lag {max_lag}",
                history.len()
            )));
        }
        for (j, m) in spec.margins.iter().enumerate() {
            if future_x[j].cols() != m.n_covariates {
                return Err(Error::invalid(format!(
                    "series {j}: future covariates have width {}, margin expects {}",
                    future_x[j].cols(),
                    m.n_covariates
                )));
            }
        }
        let mut lambda = Vec::with_capacity(spec.n_series());
        let mut presample = Vec::with_capacity(spec.n_series());
        for j in 0..spec.n_series() {
            lambda.push(filter_intensities(
                &spec.margins[j],
                &theta.margins[j],
                &history.y[j],
                &history.x[j],
                init,
            )?);
            presample.push(init.presample(&history.y[j]));
        }
        Ok(Self { spec, theta, history, future_x, lambda, presample })
    }

    pub fn n_series(&self) -> usize {
        self.spec.n_series()
    }

    /// Largest horizon the supplied covariate rows can serve.
    pub fn max_horizon(&self) -> usize {
        self.spec
            .margins
            .iter()
            .zip(&self.future_x)
            .map(|(m, x)| if m.n_covariates == 0 { usize::MAX } else { x.rows() })
            .min()
            .unwrap_or(0)
    }

    fn require_horizon(&self, h: usize) -> Result<()> {
        if h < 1 {
            return Err(Error::domain("forecast horizon must be at least 1"));
        }
        for (j, m) in self.spec.margins.iter().enumerate() {
            if m.n_covariates > 0 && self.future_x[j].rows() < h {
                return Err(Error::invalid(format!(
                    "series {j}: horizon {h} needs {h} future covariate rows, got {}",
                    self.future_x[j].rows()
                )));
            }
        }
        Ok(())
    }

    /// λ for series j at forecast step k ≥ 1 (position n−1+k), where counts
    /// beyond the history are replaced by `future_y[j]` values.
    fn step_intensity(&self, j: usize, k: usize, future_y: &[Vec<f64>], future_lambda: &[Vec<f64>]) -> f64 {
        let m = &self.spec.margins[j];
        let p = &self.theta.margins[j];
        let n = self.history.len();
        let i = n + k - 1; // 0-based position of time t+k
        let (y0, l0) = self.presample[j];
        let mut v = p.omega;
        for (&lag, &a) in m.obs_lags.iter().zip(&p.alpha) {
            let value = match (i as i64 - lag as i64, i >= lag) {
                (_, false) => y0,
                (pos, true) => {
                    let pos = pos as usize;
                    if pos < n {
                        self.history.y[j][pos] as f64
                    } else {
                        future_y[j][pos - n]
                    }
                }
            };
            v += a * value;
        }
        for (&lag, &b) in m.mean_lags.iter().zip(&p.beta) {
            let value = match (i as i64 - lag as i64, i >= lag) {
                (_, false) => l0,
                (pos, true) => {
                    let pos = pos as usize;
                    if pos < n {
                        self.lambda[j][pos]
                    } else {
                        future_lambda[j][pos - n]
                    }
                }
            };
            v += b * value;
        }
        for (&e, &xv) in p.eta.iter().zip(self.future_x[j].row(k - 1)) {
            v += e * xv;
        }
        v
    }
}

/// λ_{t+1|t} per series: the recursion applied once past the history.
pub fn one_step_intensity(ctx: &ForecastContext) -> Result<Vec<f64>> {
    Ok(h_step_intensity(ctx, 1)?.into_iter().map(|row| row[0]).collect())
}

/// λ_{t+k|t} for k = 1..=h, substituting predicted intensities for counts
/// that have not been observed yet.
pub fn h_step_intensity(ctx: &ForecastContext, h: usize) -> Result<Vec<Vec<f64>>> {
    ctx.require_horizon(h)?;
    let k_series = ctx.n_series();
    let mut future_lambda: Vec<Vec<f64>> = vec![Vec::with_capacity(h); k_series];
    let mut future_y: Vec<Vec<f64>> = vec![Vec::with_capacity(h); k_series];
    for k in 1..=h {
        for j in 0..k_series {
            let v = ctx.step_intensity(j, k, &future_y, &future_lambda);
            future_lambda[j].push(v);
            future_y[j].push(v); // E(Y | intensity) = intensity
        }
    }
    Ok(future_lambda)
}

fn pmf_vector(lambda: f64, y_max: Option<u64>) -> Result<Vec<f64>> {
    if lambda == 0.0 {
        return Ok(vec![1.0]);
    }
    let dist = Poisson::new(lambda)?;
    let cap = y_max.unwrap_or_else(|| dist.truncation_point(PMF_TAIL));
    Ok((0..=cap).map(|y| dist.pmf(y)).collect())
}

/// One-step predictive pmf of series j: Poisson at λ_{t+1|t}, truncated where
/// the tail falls below 1e−12 (or at `y_max`).
pub fn one_step_pmf(ctx: &ForecastContext, j: usize, y_max: Option<u64>) -> Result<Vec<f64>> {
    let lambdas = one_step_intensity(ctx)?;
    pmf_vector(lambdas[j], y_max)
}

/// Exact two-step predictive pmf from its building blocks: the unobserved
/// next count enters λ_{t+2} only through α₁, so the law is the Poisson
/// mixture Σ_k Poisson(k; λ_{t+1|t}) · Poisson(y; c_{t+2} + α₁k).
pub fn two_step_pmf_from_parts(
    alpha1: f64,
    lambda_next: f64,
    c_next: f64,
    y_max: Option<u64>,
) -> Result<Vec<f64>> {
    if alpha1 < 0.0 || c_next < 0.0 {
        return Err(Error::domain("mixture components need non-negative parameters"));
    }
    if alpha1 == 0.0 {
        return pmf_vector(c_next, y_max);
    }
    let mixing = Poisson::new(lambda_next)?;
    let k_max = mixing.truncation_point(PMF_TAIL);
    let cap = match y_max {
        Some(c) => c,
        None => {
            let widest = c_next + alpha1 * k_max as f64;
            if widest == 0.0 {
                0
            } else {
                Poisson::new(widest)?.truncation_point(PMF_TAIL)
            }
        }
    };
    let mut out = vec![0.0f64; cap as usize + 1];
    for k in 0..=k_max {
        let w = mixing.pmf(k);
        let component = c_next + alpha1 * k as f64;
        if component == 0.0 {
            out[0] += w;
            continue;
        }
        let dist = Poisson::new(component)?;
        for (y, slot) in out.iter_mut().enumerate() {
            *slot += w * dist.pmf(y as u64);
        }
    }
    Ok(out)
}

/// Exact two-step predictive pmf of series j in a forecast context.
pub fn two_step_pmf_exact(ctx: &ForecastContext, j: usize, y_max: Option<u64>) -> Result<Vec<f64>> {
    ctx.require_horizon(2)?;
    let lambda_next = one_step_intensity(ctx)?[j];
    let m = &ctx.spec.margins[j];
    let p = &ctx.theta.margins[j];
    let alpha1 = m
        .obs_lags
        .iter()
        .position(|&l| l == 1)
        .map(|i| p.alpha[i])
        .unwrap_or(0.0);
    // c_{t+2}: every term of the recursion at t+2 except α₁·y_{t+1}. Lags
    // ≥ 2 reference observed counts; the lag-1 intensity is λ_{t+1|t}.
    let n = ctx.history.len();
    let (y0, l0) = ctx.presample[j];
    let mut c = p.omega;
    for (&lag, &a) in m.obs_lags.iter().zip(&p.alpha) {
        if lag == 1 {
            continue;
        }
        let i = n as i64 + 1 - lag as i64; // position of y_{t+2-lag}
        let value = if i < 0 {
            y0
        } else {
            ctx.history.y[j][i as usize] as f64
        };
        c += a * value;
    }
    for (&lag, &b) in m.mean_lags.iter().zip(&p.beta) {
        let i = n as i64 + 1 - lag as i64; // position of λ_{t+2-lag}
        let value = if i < 0 {
            l0
        } else if (i as usize) < n {
            ctx.lambda[j][i as usize]
        } else {
            lambda_next
        };
        c += b * value;
    }
    for (&e, &xv) in p.eta.iter().zip(ctx.future_x[j].row(1)) {
        c += e * xv;
    }
    two_step_pmf_from_parts(alpha1, lambda_next, c, y_max)
}

/// Simulated forward trajectories: counts indexed as [series][horizon][replicate].
/// Replicate i runs on an independent stream derived from (seed, i).
pub fn forecast_replicates(
    ctx: &ForecastContext,
    h: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<u64>>>> {
    ctx.require_horizon(h)?;
    let k_series = ctx.n_series();
    let dependence = match ctx.spec.dependence {
        DependenceKind::Independence => Dependence::Independence,
        DependenceKind::Frank => {
            let rho = ctx
                .theta
                .rho
                .ok_or_else(|| Error::invalid("Frank dependence requires rho"))?;
            Dependence::Frank(FrankCopula::new(rho)?)
        }
    };
    // Replicates run in parallel on independent streams; the scatter into
    // the output keeps replicate order, so results match a serial run.
    let paths: Vec<Vec<Vec<u64>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<u64>>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut uniforms = vec![0.0f64; k_series];
            let mut path: Vec<Vec<u64>> = vec![Vec::with_capacity(h); k_series];
            let mut future_y: Vec<Vec<f64>> = vec![Vec::with_capacity(h); k_series];
            let mut future_lambda: Vec<Vec<f64>> = vec![Vec::with_capacity(h); k_series];
            for k in 1..=h {
                for j in 0..k_series {
                    let v = ctx.step_intensity(j, k, &future_y, &future_lambda);
                    future_lambda[j].push(v);
                }
                match &dependence {
                    d if d.is_independent() => {
                        for u in uniforms.iter_mut() {
                            *u = rng.random();
                        }
                    }
                    Dependence::Frank(c) => {
                        let u = c.sample(k_series, &mut rng)?;
                        uniforms.copy_from_slice(&u);
                    }
                    Dependence::Independence => unreachable!(),
                }
                for j in 0..k_series {
                    let l = future_lambda[j][k - 1];
                    let draw =
                        if l == 0.0 { 0 } else { Poisson::new(l)?.quantile(uniforms[j])? };
                    future_y[j].push(draw as f64);
                    path[j].push(draw);
                }
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let mut draws = vec![vec![vec![0u64; replicates]; h]; k_series];
    for (rep, path) in paths.iter().enumerate() {
        for (j, series) in path.iter().enumerate() {
            for (k, &draw) in series.iter().enumerate() {
                draws[j][k][rep] = draw;
            }
        }
    }
    Ok(draws)
}

/// Marginal prediction intervals per series and horizon from `replicates`
/// simulated trajectories; nearest-rank quantiles at levels a/2 and 1 − a/2.
pub fn prediction_intervals(
    ctx: &ForecastContext,
    h: usize,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<Vec<(u64, u64)>>> {
    if replicates < 100 {
        return Err(Error::invalid("prediction intervals need at least 100 replicates"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::domain(format!("interval level must lie in (0, 1), got {level}")));
    }
    let draws = forecast_replicates(ctx, h, replicates, seed)?;
    let a = 1.0 - level;
    let mut intervals = vec![Vec::with_capacity(h); ctx.n_series()];
    for (j, series) in draws.into_iter().enumerate() {
        for mut sample in series {
            sample.sort_unstable();
            let lower = sample[nearest_rank(a / 2.0, replicates)];
            let upper = sample[nearest_rank(1.0 - a / 2.0, replicates)];
            intervals[j].push((lower, upper));
        }
    }
    Ok(intervals)
}

fn nearest_rank(q: f64, n: usize) -> usize {
    let rank = (q * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// Knobs for the combined [`forecast`] convenience entry point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastOptions {
    pub horizon: usize,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub with_intervals: bool,
    pub with_exact_pmfs: bool,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            horizon: 1,
            replicates: 1000,
            level: 0.95,
            seed: 0,
            with_intervals: true,
            with_exact_pmfs: false,
        }
    }
}

/// Bundle of forecast outputs for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// λ_{t+k|t}, indexed [series][horizon−1].
    pub intensities: Vec<Vec<f64>>,
    /// Conditional-mean point forecasts (equal to the intensities).
    pub point_forecasts: Vec<Vec<f64>>,
    pub intervals: Option<Vec<Vec<(u64, u64)>>>,
    pub level: f64,
    pub pmf_1step: Option<Vec<Vec<f64>>>,
    pub pmf_2step_exact: Option<Vec<Vec<f64>>>,
}

/// Run the full forecasting pipeline described by `options`.
pub fn forecast(ctx: &ForecastContext, options: &ForecastOptions) -> Result<ForecastResult> {
    let intensities = h_step_intensity(ctx, options.horizon)?;
    let intervals = options
        .with_intervals
        .then(|| {
            prediction_intervals(ctx, options.horizon, options.replicates, options.level, options.seed)
        })
        .transpose()?;
    let (pmf_1step, pmf_2step_exact) = if options.with_exact_pmfs {
        let one: Vec<Vec<f64>> = (0..ctx.n_series())
            .map(|j| one_step_pmf(ctx, j, None))
            .collect::<Result<_>>()?;
        let two = if options.horizon >= 2 {
            Some(
                (0..ctx.n_series())
                    .map(|j| two_step_pmf_exact(ctx, j, None))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        (Some(one), two)
    } else {
        (None, None)
    };
    Ok(ForecastResult {
        point_forecasts: intensities.clone(),
        intensities,
        intervals,
        level: options.level,
        pmf_1step,
        pmf_2step_exact,
    })
}
