//! Structured report documents and atomic file output.
//!
//! Reports are TOML with the resolved configuration embedded, so every
//! output file is self-describing and re-runnable. Fit reports double as
//! model files: `forecast` reconstructs the spec and parameters from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use poarx::estimation::FitResult;
use poarx::model::{InitPolicy, MarginParams, ModelSpec, ThetaFull};

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Provenance block shared by all reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub init_policy: InitPolicy,
    pub n_obs: usize,
    pub n_params: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub meta: Meta,
    pub config: Config,
    pub margins: Vec<MarginReport>,
    /// Absent under independence (the dash column of the coefficient table).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependence_fit: Option<DependenceReport>,
    pub criteria: Criteria,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginReport {
    pub name: String,
    pub loglik: f64,
    pub stability_margin: f64,
    pub converged: bool,
    pub iterations: usize,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_se: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_se: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_se: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceReport {
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_se: Option<f64>,
    pub at_boundary: bool,
    pub independence_recommended: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Criteria {
    pub joint_loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub clamped_pmf: u64,
}

impl FitReport {
    pub fn from_fit(config: &Config, fit: &FitResult, seed: u64) -> Self {
        let margins = config
            .series
            .iter()
            .zip(&fit.margins)
            .map(|(series, m)| {
                // Split the packed se vector back into (omega, alpha, beta, eta).
                let (mut omega_se, mut alpha_se, mut beta_se, mut eta_se) = (None, None, None, None);
                if let Some(se) = &m.se {
                    let mut it = se.iter().copied();
                    if series.intercept {
                        omega_se = it.next();
                    }
                    alpha_se = Some(it.by_ref().take(m.params.alpha.len()).collect());
                    beta_se = Some(it.by_ref().take(m.params.beta.len()).collect());
                    eta_se = Some(it.collect());
                }
                MarginReport {
                    name: series.name.clone(),
                    loglik: m.loglik,
                    stability_margin: poarx::model::check_stability(&m.params).margin,
                    converged: m.convergence.converged,
                    iterations: m.convergence.iterations,
                    omega: m.params.omega,
                    alpha: m.params.alpha.clone(),
                    beta: m.params.beta.clone(),
                    eta: m.params.eta.clone(),
                    omega_se,
                    alpha_se,
                    beta_se,
                    eta_se,
                    warnings: m.warnings.clone(),
                }
            })
            .collect();
        let dependence_fit = fit.rho.as_ref().map(|r| DependenceReport {
            rho: r.rho,
            rho_se: r.se,
            at_boundary: r.at_boundary,
            independence_recommended: r.independence_recommended,
        });
        let (aic, bic) =
            poarx::evaluation::information_criteria(fit.joint_loglik, fit.n_params, fit.n_obs);
        FitReport {
            meta: Meta {
                command: "fit".to_string(),
                seed,
                init_policy: fit.init_policy,
                n_obs: fit.n_obs,
                n_params: fit.n_params,
            },
            config: config.clone(),
            margins,
            dependence_fit,
            criteria: Criteria {
                joint_loglik: fit.joint_loglik,
                aic,
                bic,
                clamped_pmf: fit.clamped_pmf,
            },
        }
    }

    pub fn load(path: &Path) -> CliResult<FitReport> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read model file {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::data(format!("cannot parse model file {}: {e}", path.display())))
    }

    /// Rebuild the model shape and point estimates carried by this report.
    pub fn model(&self) -> (ModelSpec, ThetaFull) {
        let spec = self.config.model_spec();
        let theta = ThetaFull {
            margins: self
                .margins
                .iter()
                .map(|m| MarginParams {
                    omega: m.omega,
                    alpha: m.alpha.clone(),
                    beta: m.beta.clone(),
                    eta: m.eta.clone(),
                })
                .collect(),
            rho: self.dependence_fit.as_ref().map(|d| d.rho),
        };
        (spec, theta)
    }

    /// Coefficient table in the style of a fitted-models summary; absent
    /// dependence shows as a dash.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<10} {:>12} {:>12}\n",
            "series", "parameter", "estimate", "se"
        ));
        let fmt = |v: f64| format!("{v:.6}");
        let fmt_se = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |s| format!("{s:.6}"));
        for m in &self.margins {
            if self.config.series.iter().any(|s| s.name == m.name && s.intercept) {
                out.push_str(&format!(
                    "{:<12} {:<10} {:>12} {:>12}\n",
                    m.name,
                    "omega",
                    fmt(m.omega),
                    fmt_se(m.omega_se)
                ));
            }
            for (i, &a) in m.alpha.iter().enumerate() {
                let se = m.alpha_se.as_ref().and_then(|v| v.get(i).copied());
                out.push_str(&format!(
                    "{:<12} {:<10} {:>12} {:>12}\n",
                    m.name,
                    format!("alpha{}", i + 1),
                    fmt(a),
                    fmt_se(se)
                ));
            }
            for (i, &b) in m.beta.iter().enumerate() {
                let se = m.beta_se.as_ref().and_then(|v| v.get(i).copied());
                out.push_str(&format!(
                    "{:<12} {:<10} {:>12} {:>12}\n",
                    m.name,
                    format!("beta{}", i + 1),
                    fmt(b),
                    fmt_se(se)
                ));
            }
            for (i, &e) in m.eta.iter().enumerate() {
                let se = m.eta_se.as_ref().and_then(|v| v.get(i).copied());
                out.push_str(&format!(
                    "{:<12} {:<10} {:>12} {:>12}\n",
                    m.name,
                    format!("eta{}", i + 1),
                    fmt(e),
                    fmt_se(se)
                ));
            }
        }
        match &self.dependence_fit {
            Some(d) => out.push_str(&format!(
                "{:<12} {:<10} {:>12} {:>12}\n",
                "",
                "rho",
                fmt(d.rho),
                fmt_se(d.rho_se)
            )),
            None => out.push_str(&format!(
                "{:<12} {:<10} {:>12} {:>12}\n",
                "", "rho", "-", "-"
            )),
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub meta: Meta,
    pub config: Config,
    pub models: Vec<ModelScores>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelScores {
    pub name: String,
    pub dependence: String,
    pub covariates: bool,
    pub n_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loglik: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_log_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_log_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_fold: Vec<FoldReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_start: usize,
    pub train_end: usize,
    pub log_score: f64,
    pub n_scored: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Serialize a report to TOML and write it atomically.
pub fn write_toml<T: Serialize>(path: &Path, report: &T) -> CliResult<()> {
    let text = toml::to_string_pretty(report)
        .map_err(|e| CliError::data(format!("cannot serialize report: {e}")))?;
    atomic_write(path, text.as_bytes())
}

/// Write bytes to a temporary sibling, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::data(format!("cannot move output into {}: {e}", path.display())))
}
