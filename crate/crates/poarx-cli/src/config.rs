//! Configuration file schema and its resolution to model structures.
//!
//! One TOML document drives every subcommand: series-to-column bindings and
//! lag sets, the dependence choice, estimation options, forecast options,
//! evaluation splits, and explicit parameters for simulation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use poarx::estimation::FitOptions;
use poarx::model::{DependenceKind, InitPolicy, MarginParams, MarginSpec, ModelSpec, ThetaFull};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Optional name of a strictly increasing time column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
    pub series: Vec<SeriesConfig>,
    pub dependence: DependenceConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub name: String,
    pub count_column: String,
    #[serde(default)]
    pub obs_lags: Vec<usize>,
    #[serde(default)]
    pub mean_lags: Vec<usize>,
    #[serde(default)]
    pub covariate_columns: Vec<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceConfig {
    pub kind: DependenceKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_init")]
    pub init_policy: InitPolicy,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rho_tol")]
    pub rho_tol: f64,
    #[serde(default)]
    pub sandwich: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_init() -> InitPolicy {
    InitPolicy::SampleMean
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    500
}
fn default_rho_tol() -> f64 {
    1e-6
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            init_policy: default_init(),
            tol: default_tol(),
            max_iters: default_max_iters(),
            rho_tol: default_rho_tol(),
            sandwich: false,
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            init: self.init_policy,
            tol: self.tol,
            max_iters: self.max_iters,
            rho_tol: self.rho_tol,
            compute_sandwich: self.sandwich,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Number of leading data rows that are observed history; later rows
    /// supply future covariates only. Defaults to the whole file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_length: Option<usize>,
}

fn default_horizon() -> usize {
    1
}
fn default_replicates() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            replicates: default_replicates(),
            level: default_level(),
            history_length: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Leading rows used for training; the rest form the holdout test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_length: Option<usize>,
    /// Overlapping-fold cross-validation on the training range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_folds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_length: Option<usize>,
    /// Evaluate the four-model menu (independence/Frank with and without
    /// covariates) instead of just the configured model.
    #[serde(default)]
    pub menu: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub margins: Vec<SimulateMargin>,
    #[serde(default)]
    pub covariates: SimulateCovariates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateMargin {
    pub omega: f64,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateCovariates {
    #[default]
    None,
    Synthetic,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
        let config: Config = toml::from_str(&text)
            .map_err(|e| CliError::data(format!("cannot parse config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.series.is_empty() {
            return Err(CliError::data("config declares no series"));
        }
        let spec = self.model_spec();
        spec.validate().map_err(CliError::from)?;
        if let Some(eval) = &self.evaluate {
            if eval.n_folds.is_some() != eval.fold_length.is_some() {
                return Err(CliError::data(
                    "evaluate.n_folds and evaluate.fold_length must be given together",
                ));
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.margins.len() != self.series.len() {
                return Err(CliError::data(
                    "simulate.margins must list one parameter set per series",
                ));
            }
            if self.dependence.kind == DependenceKind::Frank && sim.rho.is_none() {
                return Err(CliError::data("simulate.rho is required under Frank dependence"));
            }
        }
        Ok(())
    }

    /// The margin/dependence shape implied by the series bindings.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            margins: self
                .series
                .iter()
                .map(|s| MarginSpec {
                    obs_lags: s.obs_lags.clone(),
                    mean_lags: s.mean_lags.clone(),
                    n_covariates: s.covariate_columns.len(),
                    intercept: s.intercept,
                })
                .collect(),
            dependence: self.dependence.kind,
        }
    }

    /// Explicit simulation parameters, when the config carries them.
    pub fn simulation_theta(&self) -> CliResult<ThetaFull> {
        let sim = self
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::data("config has no [simulate] section"))?;
        Ok(ThetaFull {
            margins: sim
                .margins
                .iter()
                .map(|m| MarginParams {
                    omega: m.omega,
                    alpha: m.alpha.clone(),
                    beta: m.beta.clone(),
                    eta: m.eta.clone(),
                })
                .collect(),
            rho: sim.rho,
        })
    }
}
