//! Scoring and model comparison: log scores, information criteria,
//! overlapping-fold time-series cross-validation, and holdout evaluation.
//!
//! Scores are assigned to joint events: one probability per time point, the
//! product (or copula rectangle) over series. Folds are contiguous training
//! windows at evenly spaced offsets; each fold scores every observation
//! outside its window, per-observation scores are averaged over the folds
//! that scored them, and the averages are summed.

use rayon::prelude::*;

use crate::copula::{rectangle_pmf, Dependence, FrankCopula, PMF_FLOOR};
use crate::dists::Poisson;
use crate::error::{Error, Result};
use crate::estimation::{fit_ifm, FitOptions, FitResult};
use crate::model::{filter_intensities, DependenceKind, InitPolicy, ModelSpec, SeriesData, ThetaFull};

/// A summed log score together with the number of floored probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScore {
    pub value: f64,
    pub floored: u64,
}

/// Σ log r_i over event probabilities; zeros are floored at [`PMF_FLOOR`]
/// and counted rather than propagated as −∞.
pub fn log_score(probs: &[f64]) -> Result<LogScore> {
    let mut value = 0.0;
    let mut floored = 0u64;
    for (i, &r) in probs.iter().enumerate() {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!(
                "event probability {i} must lie in [0, 1], got {r}"
            )));
        }
        if r < PMF_FLOOR {
            floored += 1;
            value += PMF_FLOOR.ln();
        } else {
            value += r.ln();
        }
    }
    Ok(LogScore { value, floored })
}

/// (AIC, BIC) = (2k − 2ℓ, k·ln n − 2ℓ).
pub fn information_criteria(loglik: f64, n_params: usize, n_obs: usize) -> (f64, f64) {
    let k = n_params as f64;
    let aic = 2.0 * k - 2.0 * loglik;
    let bic = k * (n_obs as f64).ln() - 2.0 * loglik;
    (aic, bic)
}

/// Per-observation log joint one-step predictive probabilities of the
/// observed counts, with intensities filtered over the whole sample.
/// Returns one entry per time point plus the floored-probability count.
pub fn one_step_log_scores(
    spec: &ModelSpec,
    theta: &ThetaFull,
    data: &SeriesData,
    init: &InitPolicy,
) -> Result<(Vec<f64>, u64)> {
    spec.validate()?;
    let k = spec.n_series();
    let n = data.len();
    let mut lambdas = Vec::with_capacity(k);
    for j in 0..k {
        lambdas.push(filter_intensities(
            &spec.margins[j],
            &theta.margins[j],
            &data.y[j],
            &data.x[j],
            init,
        )?);
    }
    let dependence = match spec.dependence {
        DependenceKind::Independence => Dependence::Independence,
        DependenceKind::Frank => {
            let rho = theta.rho.ok_or_else(|| Error::invalid("Frank dependence requires rho"))?;
            Dependence::Frank(FrankCopula::new(rho)?)
        }
    };
    let mut scores = Vec::with_capacity(n);
    let mut floored = 0u64;
    match dependence {
        Dependence::Independence => {
            let mut totals = vec![0.0f64; n];
            for (lam_j, y_j) in lambdas.iter().zip(&data.y) {
                for (s, (&l, &yv)) in totals.iter_mut().zip(lam_j.iter().zip(y_j)) {
                    *s += Poisson::new(l)?.log_pmf(yv);
                }
            }
            for mut s in totals {
                if s < PMF_FLOOR.ln() {
                    s = PMF_FLOOR.ln();
                    floored += 1;
                }
                scores.push(s);
            }
        }
        dep => {
            let mut hi = vec![0.0; k];
            let mut lo = vec![0.0; k];
            for t in 0..n {
                for (j, (lam_j, y_j)) in lambdas.iter().zip(&data.y).enumerate() {
                    let dist = Poisson::new(lam_j[t])?;
                    hi[j] = dist.cdf(y_j[t]);
                    lo[j] = dist.cdf_signed(y_j[t] as i64 - 1);
                }
                let pmf = rectangle_pmf(&hi, &lo, &dep)?;
                floored += u64::from(pmf.clamped);
                scores.push(pmf.prob.ln());
            }
        }
    }
    Ok((scores, floored))
}

/// One fold of the cross-validation: its training window and score share.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub fold: usize,
    pub train_start: usize,
    pub train_end: usize,
    pub log_score: f64,
    pub n_scored: usize,
    /// Present when the fold's fit failed and the fold was skipped.
    pub error: Option<String>,
}

/// Cross-validation report; information criteria come from a fit on the full
/// sample and are labeled separately from the cross-validated score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub log_score: f64,
    pub aic: f64,
    pub bic: f64,
    /// Number of scored time points (the n used in the BIC).
    pub n_obs: usize,
    pub n_params: usize,
    pub per_fold: Option<Vec<FoldScore>>,
    /// How many folds scored each observation.
    pub multiplicity: Option<Vec<u32>>,
    pub floored: u64,
}

/// Overlapping-fold cross-validation: `n_folds` contiguous windows of
/// `fold_length` at evenly spaced offsets. Each fold fits on its window and
/// scores all other observations; a fold covering the whole sample scores
/// itself in-sample.
pub fn cv_log_score(
    spec: &ModelSpec,
    data: &SeriesData,
    n_folds: usize,
    fold_length: usize,
    options: &FitOptions,
) -> Result<ScoreReport> {
    spec.validate()?;
    let n = data.len();
    if n_folds == 0 {
        return Err(Error::invalid("cross-validation needs at least one fold"));
    }
    if fold_length == 0 || fold_length > n {
        return Err(Error::invalid(format!(
            "fold length {fold_length} must lie in 1..={n}"
        )));
    }
    let offsets: Vec<usize> = if n_folds == 1 {
        vec![0]
    } else {
        (0..n_folds)
            .map(|i| ((i * (n - fold_length)) as f64 / (n_folds - 1) as f64).round() as usize)
            .collect()
    };

    let fold_runs: Vec<(FoldScore, Option<Vec<f64>>)> = offsets
        .par_iter()
        .enumerate()
        .map(|(fold, &start)| {
            let end = start + fold_length;
            let train = data.slice(start, end);
            match fit_ifm(spec, &train, options) {
                Ok(fit) => {
                    let theta = fit.theta();
                    match one_step_log_scores(spec, &theta, data, &options.init) {
                        Ok((scores, _)) => {
                            let fs = FoldScore {
                                fold,
                                train_start: start,
                                train_end: end,
                                log_score: 0.0,
                                n_scored: 0,
                                error: None,
                            };
                            (fs, Some(scores))
                        }
                        Err(e) => (
                            FoldScore {
                                fold,
                                train_start: start,
                                train_end: end,
                                log_score: f64::NAN,
                                n_scored: 0,
                                error: Some(e.to_string()),
                            },
                            None,
                        ),
                    }
                }
                Err(e) => (
                    FoldScore {
                        fold,
                        train_start: start,
                        train_end: end,
                        log_score: f64::NAN,
                        n_scored: 0,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut sums = vec![0.0f64; n];
    let mut multiplicity = vec![0u32; n];
    let mut per_fold = Vec::with_capacity(fold_runs.len());
    for (mut fs, scores) in fold_runs {
        if let Some(scores) = scores {
            let (start, end) = (fs.train_start, fs.train_end);
            // A fold spanning everything has no complement; score in-sample.
            let whole = end - start == n;
            let mut fold_total = 0.0;
            let mut scored = 0usize;
            for (t, &s) in scores.iter().enumerate() {
                let outside = t < start || t >= end;
                if outside || whole {
                    sums[t] += s;
                    multiplicity[t] += 1;
                    fold_total += s;
                    scored += 1;
                }
            }
            fs.log_score = fold_total;
            fs.n_scored = scored;
        }
        per_fold.push(fs);
    }
    if per_fold.iter().all(|f| f.error.is_some()) {
        return Err(Error::NonConvergence("every cross-validation fold failed to fit".into()));
    }

    let total: f64 = sums
        .iter()
        .zip(&multiplicity)
        .filter(|(_, &m)| m > 0)
        .map(|(&s, &m)| s / m as f64)
        .sum();

    // Information criteria from the full-sample fit, reported alongside.
    let full_fit = fit_ifm(spec, data, options)?;
    let (aic, bic) = information_criteria(full_fit.joint_loglik, full_fit.n_params, full_fit.n_obs);
    Ok(ScoreReport {
        log_score: total,
        aic,
        bic,
        n_obs: full_fit.n_obs,
        n_params: full_fit.n_params,
        per_fold: Some(per_fold),
        multiplicity: Some(multiplicity),
        floored: 0,
    })
}

/// Out-of-sample log score: the fitted model filters forward through the
/// concatenated history and scores the joint one-step predictive pmf of each
/// test observation. Test rows must continue the training sample without
/// gaps.
pub fn holdout_log_score(
    fit: &FitResult,
    train: &SeriesData,
    test: &SeriesData,
) -> Result<LogScore> {
    if test.n_series() != train.n_series() {
        return Err(Error::invalid("test data has a different number of series"));
    }
    if test.is_empty() {
        return Ok(LogScore { value: 0.0, floored: 0 });
    }
    let full = train.concat(test)?;
    // Pre-sample values come from the training sample only, so test points
    // never influence their own predictions.
    let theta = fit.theta();
    let spec = &fit.spec;
    let mut scores_total = 0.0;
    let mut floored = 0u64;
    let presample: Vec<(f64, f64)> =
        train.y.iter().map(|y| fit.init_policy.presample(y)).collect();
    let k = spec.n_series();
    let n_train = train.len();
    let mut lambdas = Vec::with_capacity(k);
    for (j, &(y0, l0)) in presample.iter().enumerate() {
        lambdas.push(filter_intensities(
            &spec.margins[j],
            &theta.margins[j],
            &full.y[j],
            &full.x[j],
            &InitPolicy::Fixed { y: y0, lambda: l0 },
        )?);
    }
    let dependence = match spec.dependence {
        DependenceKind::Independence => Dependence::Independence,
        DependenceKind::Frank => {
            let rho = theta.rho.ok_or_else(|| Error::invalid("Frank dependence requires rho"))?;
            Dependence::Frank(FrankCopula::new(rho)?)
        }
    };
    let mut hi = vec![0.0; k];
    let mut lo = vec![0.0; k];
    for t in n_train..full.len() {
        match &dependence {
            Dependence::Independence => {
                for (lam_j, y_j) in lambdas.iter().zip(&full.y) {
                    scores_total += Poisson::new(lam_j[t])?.log_pmf(y_j[t]);
                }
            }
            dep => {
                for (j, (lam_j, y_j)) in lambdas.iter().zip(&full.y).enumerate() {
                    let dist = Poisson::new(lam_j[t])?;
                    hi[j] = dist.cdf(y_j[t]);
                    lo[j] = dist.cdf_signed(y_j[t] as i64 - 1);
                }
                let pmf = rectangle_pmf(&hi, &lo, dep)?;
                floored += u64::from(pmf.clamped);
                scores_total += pmf.prob.ln();
            }
        }
    }
    Ok(LogScore { value: scores_total, floored })
}
