//! Two-stage estimation by the method of inference functions.
//!
//! Stage (a) maximizes each margin's Poisson log-likelihood independently;
//! stage (b) maximizes the joint copula log-likelihood over the scalar
//! dependence parameter with the margins held fixed. Standard errors come
//! from numerical observed information, and the joint asymptotic covariance
//! from a sandwich of stacked inference functions.
//!
//! Non-negative coefficients are optimized on a log scale, with stability
//! (Σα + Σβ < 1) enforced through a −∞ objective sentinel.

mod optim;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::copula::{rectangle_pmf, Dependence, FrankCopula, JointPmf, RHO_EPS, RHO_MAX};
use crate::dists::{ln_factorial, Poisson};
use crate::error::{Error, Result};
use crate::model::{
    filter_intensities, Covariates, DependenceKind, InitPolicy, MarginParams, MarginSpec,
    ModelSpec, SeriesData, ThetaFull,
};
use optim::{bfgs_maximize, golden_section_max};

/// Lower floor for the intercept (the parameter space keeps ω ≥ ω_L > 0).
pub const OMEGA_MIN: f64 = 1e-8;

/// The objective returns −∞ once Σα + Σβ ≥ 1 − STAB_EPS.
pub const STAB_EPS: f64 = 1e-6;

/// Options shared by the fitting entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub init: InitPolicy,
    /// Relative objective-change tolerance for the margin maximizer.
    pub tol: f64,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Absolute tolerance for the ρ search.
    pub rho_tol: f64,
    /// Whether `fit_ifm` also assembles the sandwich covariance.
    pub compute_sandwich: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: InitPolicy::SampleMean,
            tol: 1e-8,
            max_iters: 500,
            rho_tol: 1e-6,
            compute_sandwich: false,
        }
    }
}

/// Optimizer termination summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
}

/// One fitted margin: estimates, likelihood, and curvature information.
#[derive(Debug, Clone, PartialEq)]
pub struct FitMargin {
    pub params: MarginParams,
    pub loglik: f64,
    /// Standard errors in (ω, α, β, η) order; None when the observed
    /// information was not positive definite.
    pub se: Option<Vec<f64>>,
    pub hessian_inverse: Option<DMatrix<f64>>,
    pub convergence: Convergence,
    pub init_policy: InitPolicy,
    pub warnings: Vec<String>,
}

/// Stage-(b) output for the dependence parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoFit {
    pub rho: f64,
    pub se: Option<f64>,
    pub profile_loglik: f64,
    pub at_boundary: bool,
    pub independence_recommended: bool,
}

/// Joint log-likelihood value and the number of floored pmf evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLogLik {
    pub value: f64,
    pub clamped: u64,
}

/// Sandwich covariance of the stacked estimator (θ¹, …, θ^K, ρ).
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    pub matrix: DMatrix<f64>,
    pub used_pseudo_inverse: bool,
}

/// Full IFM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub margins: Vec<FitMargin>,
    pub rho: Option<RhoFit>,
    pub joint_loglik: f64,
    pub clamped_pmf: u64,
    pub n_params: usize,
    /// Number of jointly scored time points.
    pub n_obs: usize,
    pub init_policy: InitPolicy,
    pub sandwich: Option<SandwichCovariance>,
}

impl FitResult {
    /// Collect the point estimates into a parameter vector.
    pub fn theta(&self) -> ThetaFull {
        ThetaFull {
            margins: self.margins.iter().map(|m| m.params.clone()).collect(),
            rho: self.rho.as_ref().map(|r| r.rho),
        }
    }
}

fn poisson_term(y: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if y == 0 {
        -lambda
    } else {
        -lambda + y as f64 * lambda.ln() - ln_factorial(y)
    }
}

/// Marginal log-likelihood Σ_t [−λ_t + y_t log λ_t − log y_t!], with λ from
/// the filtering recursion. Returns −∞ when the parameters violate the
/// stability restriction (consumed by the optimizer as a rejection).
pub fn marginal_log_lik(
    spec: &MarginSpec,
    params: &MarginParams,
    y: &[u64],
    x: &Covariates,
    init: &InitPolicy,
) -> Result<f64> {
    if params.coefficient_sum() >= 1.0 - STAB_EPS {
        return Ok(f64::NEG_INFINITY);
    }
    let lambda = filter_intensities(spec, params, y, x, init)?;
    let start = init.loglik_start(spec);
    Ok(y[start..]
        .iter()
        .zip(&lambda[start..])
        .map(|(&yt, &lt)| poisson_term(yt, lt))
        .sum())
}

/// λ path plus score information on the natural scale.
struct ScorePass {
    lambda: Vec<f64>,
    gradient: Vec<f64>,
    /// Per-observation contributions (zero rows before the likelihood start);
    /// only filled on request.
    contributions: Option<Vec<Vec<f64>>>,
}

fn score_pass(
    spec: &MarginSpec,
    params: &MarginParams,
    y: &[u64],
    x: &Covariates,
    init: &InitPolicy,
    want_contributions: bool,
) -> Result<ScorePass> {
    let lambda = filter_intensities(spec, params, y, x, init)?;
    let n = y.len();
    let dim = spec.n_params();
    let n_alpha = spec.obs_lags.len();
    let a0 = usize::from(spec.intercept);
    let b0 = a0 + n_alpha;
    let e0 = b0 + spec.mean_lags.len();
    let (y0, lambda0) = init.presample(y);
    let start = init.loglik_start(spec);

    // ∂λ_t/∂θ propagates through the β feedback; pre-sample values are
    // constants with derivative zero.
    let mut dlambda: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut gradient = vec![0.0; dim];
    let mut contributions = if want_contributions { Some(vec![vec![0.0; dim]; n]) } else { None };
    for t in 0..n {
        let mut row = vec![0.0; dim];
        if spec.intercept {
            row[0] = 1.0;
        }
        for (i, &lag) in spec.obs_lags.iter().enumerate() {
            row[a0 + i] = if t >= lag { y[t - lag] as f64 } else { y0 };
        }
        for (k, &xv) in x.row(t).iter().enumerate() {
            row[e0 + k] = xv;
        }
        // The feedback term touches every coordinate, so the direct terms
        // above must be in place first.
        for (i, (&lag, &b)) in spec.mean_lags.iter().zip(&params.beta).enumerate() {
            row[b0 + i] += if t >= lag { lambda[t - lag] } else { lambda0 };
            if t >= lag {
                let past = &dlambda[t - lag];
                for (r, p) in row.iter_mut().zip(past) {
                    *r += b * p;
                }
            }
        }
        if t >= start {
            let lt = lambda[t];
            if lt <= 0.0 {
                return Err(Error::numerical(format!(
                    "score undefined at t = {t}: intensity is {lt}"
                )));
            }
            let w = y[t] as f64 / lt - 1.0;
            for (g, r) in gradient.iter_mut().zip(&row) {
                *g += w * r;
            }
            if let Some(c) = contributions.as_mut() {
                for (cv, r) in c[t].iter_mut().zip(&row) {
                    *cv = w * r;
                }
            }
        }
        dlambda.push(row);
    }
    Ok(ScorePass { lambda, gradient, contributions })
}

/// Analytic score of the marginal log-likelihood, Σ_t (y_t/λ_t − 1)·∂λ_t/∂θ,
/// in (ω, α, β, η) packing order.
pub fn marginal_score(
    spec: &MarginSpec,
    params: &MarginParams,
    y: &[u64],
    x: &Covariates,
    init: &InitPolicy,
) -> Result<Vec<f64>> {
    Ok(score_pass(spec, params, y, x, init, false)?.gradient)
}

/// Pack (ω, α, β, η) into a flat vector following the margin spec.
pub fn pack_params(spec: &MarginSpec, params: &MarginParams) -> Vec<f64> {
    let mut v = Vec::with_capacity(spec.n_params());
    if spec.intercept {
        v.push(params.omega);
    }
    v.extend_from_slice(&params.alpha);
    v.extend_from_slice(&params.beta);
    v.extend_from_slice(&params.eta);
    v
}

/// Inverse of [`pack_params`]; intercept-free margins get ω = 0.
pub fn unpack_params(spec: &MarginSpec, v: &[f64]) -> MarginParams {
    let mut it = v.iter().copied();
    let omega = if spec.intercept { it.next().unwrap_or(0.0) } else { 0.0 };
    let alpha: Vec<f64> = it.by_ref().take(spec.obs_lags.len()).collect();
    let beta: Vec<f64> = it.by_ref().take(spec.mean_lags.len()).collect();
    let eta: Vec<f64> = it.collect();
    MarginParams { omega, alpha, beta, eta }
}

fn coordinate_floors(spec: &MarginSpec) -> Vec<f64> {
    let mut floors = vec![0.0; spec.n_params()];
    if spec.intercept {
        floors[0] = OMEGA_MIN;
    }
    floors
}

struct MarginProblem<'a> {
    spec: &'a MarginSpec,
    y: &'a [u64],
    x: &'a Covariates,
    init: InitPolicy,
    floors: Vec<f64>,
}

impl MarginProblem<'_> {
    fn natural(&self, t: &[f64]) -> Vec<f64> {
        t.iter().zip(&self.floors).map(|(&ti, &fl)| fl + ti.exp()).collect()
    }

    fn transformed(&self, natural: &[f64]) -> Vec<f64> {
        natural.iter().zip(&self.floors).map(|(&p, &fl)| (p - fl).max(1e-10).ln()).collect()
    }

    /// Objective and gradient on the unconstrained log scale.
    fn value_grad(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let natural = self.natural(t);
        let params = unpack_params(self.spec, &natural);
        if params.coefficient_sum() >= 1.0 - STAB_EPS {
            return (f64::NEG_INFINITY, vec![0.0; t.len()]);
        }
        let pass = match score_pass(self.spec, &params, self.y, self.x, &self.init, false) {
            Ok(p) => p,
            Err(_) => return (f64::NEG_INFINITY, vec![0.0; t.len()]),
        };
        let start = self.init.loglik_start(self.spec);
        let mut value = 0.0;
        for (yt, lt) in self.y[start..].iter().zip(&pass.lambda[start..]) {
            value += poisson_term(*yt, *lt);
        }
        if !value.is_finite() {
            return (f64::NEG_INFINITY, vec![0.0; t.len()]);
        }
        let grad = pass
            .gradient
            .iter()
            .zip(&natural)
            .zip(&self.floors)
            .map(|((&g, &p), &fl)| g * (p - fl))
            .collect();
        (value, grad)
    }
}

/// Deterministic multi-start points: moment-matched, small-coefficients, and
/// magnitudes in the range typical for fitted count models.
fn starting_points(spec: &MarginSpec, y: &[u64], x: &Covariates) -> Vec<Vec<f64>> {
    let n = y.len().max(1);
    let ybar = (y.iter().map(|&v| v as f64).sum::<f64>() / n as f64).max(1e-3);
    let xbar = x.column_means();
    let p = spec.obs_lags.len();
    let q = spec.mean_lags.len();
    let mut starts = Vec::with_capacity(3);

    let assemble = |alpha: Vec<f64>, beta: Vec<f64>, eta: Vec<f64>| -> Vec<f64> {
        let used: f64 = alpha.iter().sum::<f64>() + beta.iter().sum::<f64>();
        let cov_effect: f64 = eta.iter().zip(&xbar).map(|(e, m)| e * m).sum();
        let omega = (ybar * (1.0 - used) - cov_effect).max(100.0 * OMEGA_MIN);
        let params =
            MarginParams { omega: if spec.intercept { omega } else { 0.0 }, alpha, beta, eta };
        pack_params(spec, &params)
    };

    starts.push(assemble(
        vec![0.3 / p.max(1) as f64; p],
        vec![0.2 / q.max(1) as f64; q],
        vec![0.01; spec.n_covariates],
    ));
    starts.push(assemble(vec![0.01; p], vec![0.01; q], vec![0.01; spec.n_covariates]));
    let mut alpha = vec![0.0; p];
    if p > 0 {
        alpha[0] = 0.35;
        for a in alpha.iter_mut().skip(1) {
            *a = 0.15 / (p - 1).max(1) as f64;
        }
    }
    starts.push(assemble(alpha, vec![0.14 / q.max(1) as f64; q], vec![0.1; spec.n_covariates]));
    starts
}

/// Stage (a): maximize one margin's log-likelihood.
pub fn fit_margin(
    spec: &MarginSpec,
    y: &[u64],
    x: &Covariates,
    options: &FitOptions,
) -> Result<FitMargin> {
    spec.validate()?;
    if y.len() <= spec.max_lag() {
        return Err(Error::invalid(format!(
            "need more than max_lag = {} observations, got {}",
            spec.max_lag(),
            y.len()
        )));
    }
    if spec.n_params() == 0 {
        return Err(Error::invalid("margin has no free parameters to fit"));
    }
    let problem = MarginProblem { spec, y, x, init: options.init, floors: coordinate_floors(spec) };

    let mut best: Option<optim::BfgsOutcome> = None;
    for natural0 in starting_points(spec, y, x) {
        let t0 = problem.transformed(&natural0);
        let outcome = bfgs_maximize(|t| problem.value_grad(t), &t0, options.tol, options.max_iters);
        let better = match &best {
            None => true,
            Some(b) => {
                outcome.value > b.value
                    || (outcome.value == b.value && outcome.converged && !b.converged)
            }
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start is always attempted");
    let natural = problem.natural(&best.x);
    let params = unpack_params(spec, &natural);
    if !best.value.is_finite() {
        return Err(Error::NonConvergence(format!(
            "no feasible parameter point found; best objective {}",
            best.value
        )));
    }
    if !best.converged {
        return Err(Error::NonConvergence(format!(
            "margin fit did not converge in {} iterations; best loglik {:.6} at {:?}",
            best.iterations, best.value, params
        )));
    }

    debug_assert!(
        best.trace.windows(2).all(|w| w[1] >= w[0]),
        "line search accepted a descent step"
    );
    let mut warnings = Vec::new();
    if spec.intercept && params.omega - OMEGA_MIN < 1e-9 * (1.0 + params.omega) {
        warnings.push("omega estimate is at its lower bound".to_string());
    }
    let gnorm = best.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if gnorm > 1e-3 * (1.0 + best.value.abs()) {
        warnings.push(format!(
            "optimizer stopped with gradient norm {gnorm:.3e}; the optimum may sit on a ridge"
        ));
    }

    let (se, hessian_inverse) = match observed_information(spec, &params, y, x, &options.init) {
        Ok(info) => match info.cholesky() {
            Some(chol) => {
                let inv = chol.inverse();
                let se = (0..inv.nrows()).map(|i| inv[(i, i)].max(0.0).sqrt()).collect();
                (Some(se), Some(inv))
            }
            None => {
                warnings.push(
                    "observed information is not positive definite; standard errors unavailable"
                        .to_string(),
                );
                (None, None)
            }
        },
        Err(e) => {
            warnings.push(format!("observed information unavailable: {e}"));
            (None, None)
        }
    };

    Ok(FitMargin {
        params,
        loglik: best.value,
        se,
        hessian_inverse,
        convergence: Convergence { converged: best.converged, iterations: best.iterations },
        init_policy: options.init,
        warnings,
    })
}

/// Observed information −∂²l/∂θ∂θᵀ by central differences of the analytic
/// score on the natural scale (relative step 1e−4, floored for coordinates
/// near zero).
fn observed_information(
    spec: &MarginSpec,
    params: &MarginParams,
    y: &[u64],
    x: &Covariates,
    init: &InitPolicy,
) -> Result<DMatrix<f64>> {
    let theta = pack_params(spec, params);
    let floors = coordinate_floors(spec);
    let dim = theta.len();
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let step = 1e-4 * theta[i].abs().max(1e-2);
        let hi_v = theta[i] + step;
        let lo_v = (theta[i] - step).max(floors[i]);
        let mut hi_t = theta.clone();
        hi_t[i] = hi_v;
        let mut lo_t = theta.clone();
        lo_t[i] = lo_v;
        let g_hi = marginal_score(spec, &unpack_params(spec, &hi_t), y, x, init)?;
        let g_lo = marginal_score(spec, &unpack_params(spec, &lo_t), y, x, init)?;
        let denom = hi_v - lo_v;
        for j in 0..dim {
            h[(i, j)] = -(g_hi[j] - g_lo[j]) / denom;
        }
    }
    // Symmetrize differencing noise away.
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// Joint conditional log-likelihood Σ_t log Pr(y_t | λ_t, ρ). Under
/// independence this is exactly the sum of the marginal log-likelihoods.
pub fn joint_log_lik(
    spec: &ModelSpec,
    theta: &ThetaFull,
    data: &SeriesData,
    init: &InitPolicy,
) -> Result<JointLogLik> {
    spec.validate()?;
    check_data(spec, data)?;
    if theta.margins.len() != spec.n_series() {
        return Err(Error::invalid("theta must carry one parameter set per series"));
    }
    match spec.dependence {
        DependenceKind::Independence => {
            let mut value = 0.0;
            for (j, m) in spec.margins.iter().enumerate() {
                value += marginal_log_lik(m, &theta.margins[j], &data.y[j], &data.x[j], init)?;
            }
            Ok(JointLogLik { value, clamped: 0 })
        }
        DependenceKind::Frank => {
            let rho = theta.rho.ok_or_else(|| Error::invalid("Frank dependence requires rho"))?;
            let profile = RhoProfile::new(spec, &theta.margins, data, init)?;
            profile.loglik(rho)
        }
    }
}

/// Marginal CDF pairs cached per observation so the joint likelihood can be
/// re-evaluated across ρ without refiltering.
struct RhoProfile {
    /// hi[t][j] = F_j(y_t^j), lo[t][j] = F_j(y_t^j − 1).
    hi: Vec<Vec<f64>>,
    lo: Vec<Vec<f64>>,
    start: usize,
}

impl RhoProfile {
    fn new(
        spec: &ModelSpec,
        margins: &[MarginParams],
        data: &SeriesData,
        init: &InitPolicy,
    ) -> Result<Self> {
        let k = spec.n_series();
        let n = data.len();
        let mut lambdas = Vec::with_capacity(k);
        #[allow(clippy::needless_range_loop)]
        for j in 0..k {
            lambdas.push(filter_intensities(
                &spec.margins[j],
                &margins[j],
                &data.y[j],
                &data.x[j],
                init,
            )?);
        }
        let start = spec.margins.iter().map(|m| init.loglik_start(m)).max().unwrap_or(0);
        let mut hi = vec![vec![0.0; k]; n];
        let mut lo = vec![vec![0.0; k]; n];
        for t in start..n {
            for j in 0..k {
                let dist = Poisson::new(lambdas[j][t])?;
                let yt = data.y[j][t];
                hi[t][j] = dist.cdf(yt);
                lo[t][j] = dist.cdf_signed(yt as i64 - 1);
            }
        }
        Ok(Self { hi, lo, start })
    }

    fn pmf_at(&self, t: usize, dep: &Dependence) -> Result<JointPmf> {
        rectangle_pmf(&self.hi[t], &self.lo[t], dep)
    }

    fn loglik(&self, rho: f64) -> Result<JointLogLik> {
        let dep = Dependence::Frank(FrankCopula::new(rho)?);
        let mut value = 0.0;
        let mut clamped = 0u64;
        for t in self.start..self.hi.len() {
            let pmf = self.pmf_at(t, &dep)?;
            value += pmf.prob.ln();
            clamped += u64::from(pmf.clamped);
        }
        Ok(JointLogLik { value, clamped })
    }

    /// Objective for the ρ search; evaluation failures count as rejection.
    fn objective(&self, rho: f64) -> f64 {
        self.loglik(rho).map(|l| l.value).unwrap_or(f64::NEG_INFINITY)
    }
}

const RHO_GRID: [f64; 21] = [
    RHO_EPS, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 14.0,
    20.0, 30.0, 40.0, RHO_MAX,
];

/// Stage (b): maximize the profile joint log-likelihood over ρ with the
/// fitted margins held fixed. Both sign branches are searched in two
/// dimensions; only ρ > 0 is admissible beyond that.
pub fn fit_rho(
    spec: &ModelSpec,
    fitted_margins: &[FitMargin],
    data: &SeriesData,
    options: &FitOptions,
) -> Result<RhoFit> {
    if spec.n_series() < 2 {
        return Err(Error::invalid("dependence estimation needs at least two series"));
    }
    let params: Vec<MarginParams> = fitted_margins.iter().map(|m| m.params.clone()).collect();
    let profile = RhoProfile::new(spec, &params, data, &options.init)?;

    let search_branch = |sign: f64| -> (f64, f64) {
        let values: Vec<f64> = RHO_GRID.iter().map(|&r| profile.objective(sign * r)).collect();
        let mut best_idx = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if v > best_val {
                best_val = v;
                best_idx = i;
            }
        }
        let lo = RHO_GRID[best_idx.saturating_sub(1)];
        let hi = RHO_GRID[(best_idx + 1).min(RHO_GRID.len() - 1)];
        let (r, v) = golden_section_max(|r| profile.objective(sign * r), lo, hi, options.rho_tol);
        (sign * r, v)
    };

    let (mut rho, mut value) = search_branch(1.0);
    if spec.n_series() == 2 {
        let (rho_neg, value_neg) = search_branch(-1.0);
        if value_neg > value {
            rho = rho_neg;
            value = value_neg;
        }
    }
    if !value.is_finite() {
        return Err(Error::NonConvergence(
            "profile likelihood for rho is degenerate everywhere".to_string(),
        ));
    }

    let at_boundary = RHO_MAX - rho.abs() < 10.0 * options.rho_tol;
    let independence_recommended = rho.abs() <= 2.0 * RHO_EPS;

    // Observed-information standard error from a central second difference,
    // keeping the stencil inside the admissible ρ range.
    let h = 1e-3 * rho.abs().max(0.1);
    let center = rho.clamp(-(RHO_MAX - h), RHO_MAX - h);
    let se = {
        let l_hi = profile.objective(center + h);
        let l_lo = profile.objective(center - h);
        let l_mid = profile.objective(center);
        let info = -(l_hi - 2.0 * l_mid + l_lo) / (h * h);
        (info > 0.0).then(|| (1.0 / info).sqrt())
    };

    Ok(RhoFit { rho, se, profile_loglik: value, at_boundary, independence_recommended })
}

fn check_data(spec: &ModelSpec, data: &SeriesData) -> Result<()> {
    if data.n_series() != spec.n_series() {
        return Err(Error::invalid(format!(
            "data has {} series, spec has {}",
            data.n_series(),
            spec.n_series()
        )));
    }
    for (j, m) in spec.margins.iter().enumerate() {
        if data.x[j].cols() != m.n_covariates {
            return Err(Error::invalid(format!(
                "series {j}: covariate matrix width {} does not match spec ({})",
                data.x[j].cols(),
                m.n_covariates
            )));
        }
    }
    Ok(())
}

/// Warn about exactly collinear covariate columns (the mechanically
/// checkable part of the identifiability assumptions).
fn collinearity_warnings(data: &SeriesData) -> Vec<String> {
    let mut warnings = Vec::new();
    for (j, x) in data.x.iter().enumerate() {
        let cols = x.cols();
        for a in 0..cols {
            for b in (a + 1)..cols {
                let mut ratio: Option<f64> = None;
                let mut collinear = true;
                for t in 0..x.rows() {
                    let (va, vb) = (x.row(t)[a], x.row(t)[b]);
                    if va == 0.0 && vb == 0.0 {
                        continue;
                    }
                    if va == 0.0 || vb == 0.0 {
                        collinear = false;
                        break;
                    }
                    let r = vb / va;
                    match ratio {
                        None => ratio = Some(r),
                        Some(prev) if (r - prev).abs() > 1e-12 * prev.abs() => {
                            collinear = false;
                            break;
                        }
                        _ => {}
                    }
                }
                if collinear && x.rows() > 0 {
                    warnings.push(format!(
                        "series {j}: covariate columns {a} and {b} are exactly collinear"
                    ));
                }
            }
        }
    }
    warnings
}

/// Run the full two-stage fit: independent margin maximizations (in
/// parallel), then the ρ profile when the spec couples the series.
pub fn fit_ifm(spec: &ModelSpec, data: &SeriesData, options: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    check_data(spec, data)?;
    let collinear = collinearity_warnings(data);

    let mut margins: Vec<FitMargin> = spec
        .margins
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            fit_margin(m, &data.y[j], &data.x[j], options).map_err(|e| match e {
                Error::NonConvergence(m) => Error::NonConvergence(format!("series {j}: {m}")),
                Error::Numerical(m) => Error::Numerical(format!("series {j}: {m}")),
                Error::Domain(m) => Error::Domain(format!("series {j}: {m}")),
                Error::Invalid(m) => Error::Invalid(format!("series {j}: {m}")),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(first) = margins.first_mut() {
        first.warnings.extend(collinear);
    }

    let start = spec.margins.iter().map(|m| options.init.loglik_start(m)).max().unwrap_or(0);
    let n_obs = data.len() - start;

    let (rho, joint_loglik, clamped_pmf) = match spec.dependence {
        DependenceKind::Independence => {
            let total = margins.iter().map(|m| m.loglik).sum();
            (None, total, 0)
        }
        DependenceKind::Frank => {
            let rho_fit = fit_rho(spec, &margins, data, options)?;
            let value = rho_fit.profile_loglik;
            let params: Vec<MarginParams> = margins.iter().map(|m| m.params.clone()).collect();
            let profile = RhoProfile::new(spec, &params, data, &options.init)?;
            let clamped = profile.loglik(rho_fit.rho)?.clamped;
            (Some(rho_fit), value, clamped)
        }
    };

    let mut fit = FitResult {
        spec: spec.clone(),
        margins,
        rho,
        joint_loglik,
        clamped_pmf,
        n_params: spec.n_params(),
        n_obs,
        init_policy: options.init,
        sandwich: None,
    };
    if options.compute_sandwich {
        fit.sandwich = Some(sandwich_covariance(&fit, data)?);
    }
    Ok(fit)
}

/// Assemble the sandwich covariance V = (−D_g)⁻¹ M_g (−D_g)⁻ᵀ of the stacked
/// inference functions, ordered (θ¹, …, θ^K, ρ).
///
/// Under independence this degenerates to the block-diagonal matrix of
/// inverse marginal informations. The blocks coupling margin scores with the
/// ρ score inside M_g are structurally zero and set to zero.
pub fn sandwich_covariance(fit: &FitResult, data: &SeriesData) -> Result<SandwichCovariance> {
    let spec = &fit.spec;
    check_data(spec, data)?;
    let init = fit.init_policy;
    let k = spec.n_series();
    let dims: Vec<usize> = spec.margins.iter().map(|m| m.n_params()).collect();
    let theta_dim: usize = dims.iter().sum();

    if spec.dependence == DependenceKind::Independence {
        let mut v = DMatrix::zeros(theta_dim, theta_dim);
        let mut used_pseudo = false;
        let mut offset = 0;
        #[allow(clippy::needless_range_loop)]
        for j in 0..k {
            let info = observed_information(
                &spec.margins[j],
                &fit.margins[j].params,
                &data.y[j],
                &data.x[j],
                &init,
            )?;
            let (inv, pseudo) = invert_spd(info)?;
            used_pseudo |= pseudo;
            v.view_mut((offset, offset), (dims[j], dims[j])).copy_from(&inv);
            offset += dims[j];
        }
        return Ok(SandwichCovariance { matrix: v, used_pseudo_inverse: used_pseudo });
    }

    let rho_fit =
        fit.rho.as_ref().ok_or_else(|| Error::invalid("Frank fit carries no rho estimate"))?;
    let rho = rho_fit.rho;
    let params: Vec<MarginParams> = fit.margins.iter().map(|m| m.params.clone()).collect();
    let dim = theta_dim + 1;

    // −D_g: marginal informations on the diagonal, the ρ row coupling below.
    let mut neg_d = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    let mut offsets = Vec::with_capacity(k);
    #[allow(clippy::needless_range_loop)]
    for j in 0..k {
        offsets.push(offset);
        let info = observed_information(
            &spec.margins[j],
            &fit.margins[j].params,
            &data.y[j],
            &data.x[j],
            &init,
        )?;
        neg_d.view_mut((offset, offset), (dims[j], dims[j])).copy_from(&info);
        offset += dims[j];
    }

    let profile = RhoProfile::new(spec, &params, data, &init)?;
    let h_rho = 1e-3 * rho.abs().max(0.1);
    let dl_drho = |prof: &RhoProfile| -> Result<f64> {
        let hi = prof.loglik(rho + h_rho)?.value;
        let lo = prof.loglik(rho - h_rho)?.value;
        Ok((hi - lo) / (2.0 * h_rho))
    };

    // I_mm = −∂²l/∂ρ².
    let l_hi = profile.loglik(rho + h_rho)?.value;
    let l_lo = profile.loglik(rho - h_rho)?.value;
    let l_mid = profile.loglik(rho)?.value;
    neg_d[(theta_dim, theta_dim)] = -(l_hi - 2.0 * l_mid + l_lo) / (h_rho * h_rho);

    // I_mk = −∂²l/∂θ^k∂ρ via nested central differences.
    for j in 0..k {
        let theta_hat = pack_params(&spec.margins[j], &params[j]);
        let floors = coordinate_floors(&spec.margins[j]);
        for i in 0..dims[j] {
            let step = 1e-4 * theta_hat[i].abs().max(1e-2);
            let mut perturbed = params.clone();
            let mut hi_t = theta_hat.clone();
            hi_t[i] += step;
            perturbed[j] = unpack_params(&spec.margins[j], &hi_t);
            let prof_hi = RhoProfile::new(spec, &perturbed, data, &init)?;
            let mut lo_t = theta_hat.clone();
            lo_t[i] = (lo_t[i] - step).max(floors[i]);
            perturbed[j] = unpack_params(&spec.margins[j], &lo_t);
            let prof_lo = RhoProfile::new(spec, &perturbed, data, &init)?;
            let denom = hi_t[i] - lo_t[i];
            neg_d[(theta_dim, offsets[j] + i)] = -(dl_drho(&prof_hi)? - dl_drho(&prof_lo)?) / denom;
        }
    }

    // M_g: outer products of per-observation inference-function contributions.
    let start = spec.margins.iter().map(|m| init.loglik_start(m)).max().unwrap_or(0);
    let n = data.len();
    let mut contributions: Vec<Vec<Vec<f64>>> = Vec::with_capacity(k);
    #[allow(clippy::needless_range_loop)]
    for j in 0..k {
        let pass = score_pass(&spec.margins[j], &params[j], &data.y[j], &data.x[j], &init, true)?;
        contributions.push(pass.contributions.expect("requested contributions"));
    }
    let mut m_g = DMatrix::zeros(dim, dim);
    #[allow(clippy::needless_range_loop)]
    for t in start..n {
        for j in 0..k {
            for l in 0..k {
                for a in 0..dims[j] {
                    for b in 0..dims[l] {
                        m_g[(offsets[j] + a, offsets[l] + b)] +=
                            contributions[j][t][a] * contributions[l][t][b];
                    }
                }
            }
        }
    }
    // J_mm from per-observation ρ scores at fixed marginal CDFs.
    let dep_hi = Dependence::Frank(FrankCopula::new(rho + h_rho)?);
    let dep_lo = Dependence::Frank(FrankCopula::new(rho - h_rho)?);
    let mut j_mm = 0.0;
    for t in start..n {
        let p_hi = profile.pmf_at(t, &dep_hi)?.prob.ln();
        let p_lo = profile.pmf_at(t, &dep_lo)?.prob.ln();
        let s = (p_hi - p_lo) / (2.0 * h_rho);
        j_mm += s * s;
    }
    m_g[(theta_dim, theta_dim)] = j_mm;

    let (inv, used_pseudo) = invert_square(neg_d)?;
    let v = &inv * m_g * inv.transpose();
    Ok(SandwichCovariance { matrix: v, used_pseudo_inverse: used_pseudo })
}

fn invert_spd(m: DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok((chol.inverse(), false));
    }
    pseudo_inverse(m).map(|inv| (inv, true))
}

fn invert_square(m: DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if let Some(inv) = m.clone().try_inverse() {
        if inv.iter().all(|v| v.is_finite()) {
            return Ok((inv, false));
        }
    }
    pseudo_inverse(m).map(|inv| (inv, true))
}

fn pseudo_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::numerical(format!("pseudo-inverse failed: {e}")))
}
