//! Model specification and the deterministic intensity recursion.
//!
//! Each margin's intensity follows
//! λ_t = ω + Σ_{l ∈ obs_lags} α_l·y_{t−l} + Σ_{l ∈ mean_lags} β_l·λ_{t−l} + η·x_{t−1},
//! with pre-sample values supplied by an [`InitPolicy`]. Covariate rows are
//! stored already aligned: row t of the matrix feeds λ at position t, and the
//! filter never re-lags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fallback pre-sample value for all-zero series under mean initialization.
const ALL_ZERO_INIT: f64 = 1e-3;

/// Lag sets and covariate arity for one margin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginSpec {
    /// Lags of past observations with nonzero α, strictly increasing.
    pub obs_lags: Vec<usize>,
    /// Lags of past intensities with nonzero β, strictly increasing.
    pub mean_lags: Vec<usize>,
    /// Number of exogenous covariates r.
    pub n_covariates: usize,
    /// Whether an intercept ω is estimated.
    pub intercept: bool,
}

impl MarginSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, lags) in [("obs_lags", &self.obs_lags), ("mean_lags", &self.mean_lags)] {
            if lags.contains(&0) {
                return Err(Error::invalid(format!("{name} must contain positive lags")));
            }
            if lags.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "{name} must be strictly increasing without duplicates"
                )));
            }
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.obs_lags
            .iter()
            .chain(self.mean_lags.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Number of free parameters: intercept + |α| + |β| + r.
    pub fn n_params(&self) -> usize {
        usize::from(self.intercept) + self.obs_lags.len() + self.mean_lags.len() + self.n_covariates
    }
}

/// How the margins are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceKind {
    Independence,
    Frank,
}

/// Full model shape: one [`MarginSpec`] per series plus the coupling choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub margins: Vec<MarginSpec>,
    pub dependence: DependenceKind,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.margins.is_empty() {
            return Err(Error::invalid("a model needs at least one margin"));
        }
        if self.dependence == DependenceKind::Frank && self.margins.len() < 2 {
            return Err(Error::invalid("Frank dependence needs at least two series"));
        }
        for m in &self.margins {
            m.validate()?;
        }
        Ok(())
    }

    pub fn n_series(&self) -> usize {
        self.margins.len()
    }

    /// Total parameter count including ρ when the coupling is Frank.
    pub fn n_params(&self) -> usize {
        self.margins.iter().map(MarginSpec::n_params).sum::<usize>()
            + usize::from(self.dependence == DependenceKind::Frank)
    }
}

/// Coefficients of one margin, ordered as (ω, α, β, η).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginParams {
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl MarginParams {
    /// Shape and sign checks against a spec; stability is checked separately.
    pub fn check_shape(&self, spec: &MarginSpec) -> Result<()> {
        if self.alpha.len() != spec.obs_lags.len()
            || self.beta.len() != spec.mean_lags.len()
            || self.eta.len() != spec.n_covariates
        {
            return Err(Error::invalid(
                "parameter vector lengths do not match the margin specification",
            ));
        }
        if !spec.intercept && self.omega != 0.0 {
            return Err(Error::invalid("intercept-free margin requires omega = 0"));
        }
        let all = std::iter::once(self.omega)
            .chain(self.alpha.iter().copied())
            .chain(self.beta.iter().copied())
            .chain(self.eta.iter().copied());
        for v in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(format!(
                    "margin coefficients must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }
}

/// Stability verdict for one margin: Σα + Σβ < 1 and the distance to the
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stable: bool,
    pub margin: f64,
}

/// Σα + Σβ < 1, returning 1 − (Σα + Σβ) as the margin to the boundary.
pub fn check_stability(params: &MarginParams) -> Stability {
    let sum = params.coefficient_sum();
    Stability { stable: sum < 1.0, margin: 1.0 - sum }
}

/// Fixed point of the recursion, (ω + mean covariate effect) / (1 − Σα − Σβ).
pub fn unconditional_mean(params: &MarginParams, mean_covariate_effect: f64) -> Result<f64> {
    let st = check_stability(params);
    if !st.stable {
        return Err(Error::domain(format!(
            "unconditional mean requires stability, coefficient sum is {}",
            params.coefficient_sum()
        )));
    }
    Ok((params.omega + mean_covariate_effect) / st.margin)
}

/// All margins' parameters plus the dependence parameter when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFull {
    pub margins: Vec<MarginParams>,
    pub rho: Option<f64>,
}

/// Row-major covariate matrix: row t feeds λ at position t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Covariates {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "covariate matrix needs {rows}x{cols} = {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("covariates must be finite and non-negative"));
        }
        Ok(Self { values, rows, cols })
    }

    /// A matrix with no columns, for margins without covariates.
    pub fn empty(rows: usize) -> Self {
        Self { values: Vec::new(), rows, cols: 0 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.cols..(t + 1) * self.cols]
    }

    /// Column means, used for unconditional-mean style summaries.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        if self.rows == 0 {
            return means;
        }
        for t in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(t)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= self.rows as f64;
        }
        means
    }

    /// The sub-matrix of rows [start, end).
    pub fn slice_rows(&self, start: usize, end: usize) -> Covariates {
        Covariates {
            values: self.values[start * self.cols..end * self.cols].to_vec(),
            rows: end - start,
            cols: self.cols,
        }
    }

    /// Rows of `other` appended below `self`.
    pub fn vstack(&self, other: &Covariates) -> Result<Covariates> {
        if self.cols != other.cols {
            return Err(Error::invalid("cannot stack covariate matrices of unequal width"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Covariates { values, rows: self.rows + other.rows, cols: self.cols })
    }
}

/// Aligned observations for K series: counts and covariate matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    pub y: Vec<Vec<u64>>,
    pub x: Vec<Covariates>,
}

impl SeriesData {
    pub fn new(y: Vec<Vec<u64>>, x: Vec<Covariates>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("series data needs at least one series"));
        }
        if x.len() != y.len() {
            return Err(Error::invalid(
                "number of covariate matrices must match number of series",
            ));
        }
        let n = y[0].len();
        if y.iter().any(|s| s.len() != n) {
            return Err(Error::invalid("all series must have equal length"));
        }
        if x.iter().any(|m| m.rows() != n) {
            return Err(Error::invalid("covariate matrices must have one row per observation"));
        }
        Ok(Self { y, x })
    }

    pub fn n_series(&self) -> usize {
        self.y.len()
    }

    pub fn len(&self) -> usize {
        self.y[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The sub-sample of observations [start, end).
    pub fn slice(&self, start: usize, end: usize) -> SeriesData {
        SeriesData {
            y: self.y.iter().map(|s| s[start..end].to_vec()).collect(),
            x: self.x.iter().map(|m| m.slice_rows(start, end)).collect(),
        }
    }

    /// `other` appended in time after `self`.
    pub fn concat(&self, other: &SeriesData) -> Result<SeriesData> {
        if other.n_series() != self.n_series() {
            return Err(Error::invalid("cannot concatenate data with different series counts"));
        }
        let y = self
            .y
            .iter()
            .zip(&other.y)
            .map(|(a, b)| {
                let mut s = a.clone();
                s.extend_from_slice(b);
                s
            })
            .collect();
        let x = self
            .x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| a.vstack(b))
            .collect::<Result<Vec<_>>>()?;
        SeriesData::new(y, x)
    }
}

/// Filtered intensity paths, one per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityPath {
    pub lambda: Vec<Vec<f64>>,
}

/// How pre-sample observations and intensities are chosen, and where the
/// likelihood starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Pre-sample y and λ equal the sample mean of the observed series
    /// (1e−3 for an all-zero series); every observation is scored.
    SampleMean,
    /// Explicit pre-sample values.
    Fixed { y: f64, lambda: f64 },
    /// Same pre-sample values as [`InitPolicy::SampleMean`], but the
    /// likelihood sums from t = max_lag + 1 onward.
    SkipBurnIn,
}

impl InitPolicy {
    /// Pre-sample (y, λ) pair for a series.
    pub fn presample(&self, y: &[u64]) -> (f64, f64) {
        match *self {
            InitPolicy::SampleMean | InitPolicy::SkipBurnIn => {
                let n = y.len();
                if n == 0 {
                    return (ALL_ZERO_INIT, ALL_ZERO_INIT);
                }
                let mean = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
                let mean = if mean > 0.0 { mean } else { ALL_ZERO_INIT };
                (mean, mean)
            }
            InitPolicy::Fixed { y, lambda } => (y, lambda),
        }
    }

    /// First 0-based index contributing to the likelihood.
    pub fn loglik_start(&self, spec: &MarginSpec) -> usize {
        match self {
            InitPolicy::SkipBurnIn => spec.max_lag(),
            _ => 0,
        }
    }
}

/// Run the intensity recursion for one margin over the full sample.
///
/// Covariate row t feeds λ at position t; callers supply matrices already
/// aligned that way. Returns one intensity per observation.
pub fn filter_intensities(
    spec: &MarginSpec,
    params: &MarginParams,
    y: &[u64],
    x: &Covariates,
    init: &InitPolicy,
) -> Result<Vec<f64>> {
    spec.validate()?;
    params.check_shape(spec)?;
    if x.rows() != y.len() {
        return Err(Error::invalid(format!(
            "covariate matrix has {} rows for {} observations",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() != spec.n_covariates {
        return Err(Error::invalid(format!(
            "covariate matrix has {} columns, margin expects {}",
            x.cols(),
            spec.n_covariates
        )));
    }
    let (y0, lambda0) = init.presample(y);
    let n = y.len();
    let mut lambda = Vec::with_capacity(n);
    for t in 0..n {
        let mut v = params.omega;
        for (&lag, &a) in spec.obs_lags.iter().zip(&params.alpha) {
            let past = if t >= lag { y[t - lag] as f64 } else { y0 };
            v += a * past;
        }
        for (&lag, &b) in spec.mean_lags.iter().zip(&params.beta) {
            let past = if t >= lag { lambda[t - lag] } else { lambda0 };
            v += b * past;
        }
        for (&e, &xv) in params.eta.iter().zip(x.row(t)) {
            v += e * xv;
        }
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "intensity recursion produced a non-finite value at t = {t}"
            )));
        }
        lambda.push(v);
    }
    Ok(lambda)
}
