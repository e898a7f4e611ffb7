//! The four subcommands. Each is a pure function of (config, input files,
//! seed): reruns produce byte-identical outputs.

use std::path::Path;

use poarx::estimation::fit_ifm;
use poarx::evaluation::{cv_log_score, holdout_log_score, information_criteria};
use poarx::forecasting::{forecast, ForecastContext, ForecastOptions};
use poarx::model::{Covariates, DependenceKind, SeriesData};
use poarx::simulation::{
    simulate_poarx, synthetic_covariate_column, CovariateSource, SimConfig,
};

use crate::config::{Config, SimulateCovariates};
use crate::data::{format_float, load_dataset, load_dataset_split, write_dataset};
use crate::error::{CliError, CliResult};
use crate::report::{
    atomic_write, write_toml, EvaluateReport, FitReport, FoldReport, Meta, ModelScores,
};

pub fn cmd_fit(config: &Config, data_path: &Path, out: &Path, seed: u64) -> CliResult<FitReport> {
    let data = load_dataset(data_path, config)?;
    let spec = config.model_spec();
    let options = config.estimation.fit_options();
    let fit = fit_ifm(&spec, &data, &options)?;
    let report = FitReport::from_fit(config, &fit, seed);
    write_toml(out, &report)?;
    print!("{}", report.table());
    println!(
        "loglik {:.4}  aic {:.4}  bic {:.4}  ({} observations, {} parameters)",
        report.criteria.joint_loglik,
        report.criteria.aic,
        report.criteria.bic,
        report.meta.n_obs,
        report.meta.n_params
    );
    Ok(report)
}

pub fn cmd_forecast(
    config: &Config,
    data_path: &Path,
    model_path: &Path,
    horizon: Option<usize>,
    out: &Path,
    seed: u64,
) -> CliResult<()> {
    let model = FitReport::load(model_path)?;
    let (spec, theta) = model.model();
    let h = horizon.unwrap_or(config.forecast.horizon);
    let dataset = load_dataset_split(data_path, config, config.forecast.history_length)?;

    let needs_covariates = spec.margins.iter().any(|m| m.n_covariates > 0);
    if needs_covariates {
        let available = dataset.future_x.iter().map(|x| x.rows()).min().unwrap_or(0);
        if available < h {
            return Err(CliError::data(format!(
                "horizon {h} needs {h} future covariate rows beyond the history; {available} present \
                 (add rows or lower forecast.history_length)"
            )));
        }
    }

    let ctx = ForecastContext::new(
        &spec,
        &theta,
        &dataset.data,
        dataset.future_x,
        &model.meta.init_policy,
    )?;
    let result = forecast(
        &ctx,
        &ForecastOptions {
            horizon: h,
            replicates: config.forecast.replicates,
            level: config.forecast.level,
            seed,
            with_intervals: true,
            with_exact_pmfs: false,
        },
    )?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["series", "horizon", "intensity", "lower", "upper"])
        .map_err(|e| CliError::data(format!("cannot write forecast header: {e}")))?;
    let intervals = result.intervals.as_ref().expect("intervals requested");
    for (j, series) in config.series.iter().enumerate() {
        for (k, (&(lo, hi), &intensity)) in
            intervals[j].iter().zip(&result.intensities[j]).enumerate()
        {
            writer
                .write_record([
                    series.name.as_str(),
                    &(k + 1).to_string(),
                    &format_float(intensity),
                    &lo.to_string(),
                    &hi.to_string(),
                ])
                .map_err(|e| CliError::data(format!("cannot write forecast row: {e}")))?;
        }
    }
    let bytes =
        writer.into_inner().map_err(|e| CliError::data(format!("cannot flush forecast: {e}")))?;
    atomic_write(out, &bytes)?;
    println!(
        "wrote {h}-step forecasts for {} series to {}",
        config.series.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_simulate(
    config: &Config,
    n_override: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let sim_cfg = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::data("config has no [simulate] section"))?;
    let spec = config.model_spec();
    let theta = config.simulation_theta()?;
    let n = n_override.unwrap_or(sim_cfg.n);
    let covariates = match sim_cfg.covariates {
        SimulateCovariates::None => CovariateSource::None,
        // Columns are generated per unique name so a column bound to
        // several series carries one shared stream, as in the data files
        // the loader accepts.
        SimulateCovariates::Synthetic => {
            CovariateSource::Supplied(synthetic_covariates(config, n + sim_cfg.burn_in, seed))
        }
    };
    let output = simulate_poarx(&SimConfig {
        spec,
        theta,
        n,
        covariates,
        init: config.estimation.init_policy,
        burn_in: sim_cfg.burn_in,
        seed,
    })?;
    write_dataset(out, config, &output.data)?;
    let synthetic = output.synthetic_covariates
        || sim_cfg.covariates == SimulateCovariates::Synthetic;
    println!(
        "wrote {} simulated observations of {} series to {}{}",
        output.data.len(),
        output.data.n_series(),
        out.display(),
        if synthetic { " (synthetic covariates)" } else { "" }
    );
    Ok(())
}

/// Synthetic covariate matrices with one AR(1) stream per unique column
/// name; streams are offset away from the simulator's count stream.
fn synthetic_covariates(config: &Config, rows: usize, seed: u64) -> Vec<Covariates> {
    let mut names: Vec<&str> = Vec::new();
    for s in &config.series {
        for c in &s.covariate_columns {
            if !names.contains(&c.as_str()) {
                names.push(c);
            }
        }
    }
    let columns: Vec<Vec<f64>> = names
        .iter()
        .enumerate()
        .map(|(i, _)| synthetic_covariate_column(rows, seed, 1_000 + i as u64))
        .collect();
    config
        .series
        .iter()
        .map(|s| {
            let indices: Vec<usize> = s
                .covariate_columns
                .iter()
                .map(|c| names.iter().position(|n| n == c).expect("name collected above"))
                .collect();
            let mut values = Vec::with_capacity(rows * indices.len());
            #[allow(clippy::needless_range_loop)]
            for t in 0..rows {
                for &idx in &indices {
                    values.push(columns[idx][t]);
                }
            }
            Covariates::new(rows, indices.len(), values)
                .expect("generated covariates are finite and non-negative")
        })
        .collect()
}

/// The four-model comparison menu: independence/Frank, each with and without
/// the configured covariates.
fn menu_variants(config: &Config) -> Vec<(String, Config)> {
    let strip = |config: &Config| {
        let mut stripped = config.clone();
        for s in &mut stripped.series {
            s.covariate_columns.clear();
        }
        stripped
    };
    let with_kind = |config: &Config, kind: DependenceKind| {
        let mut c = config.clone();
        c.dependence.kind = kind;
        c
    };
    vec![
        ("model1_independence".into(), with_kind(&strip(config), DependenceKind::Independence)),
        ("model2_frank".into(), with_kind(&strip(config), DependenceKind::Frank)),
        ("model3_independence_covariates".into(), with_kind(config, DependenceKind::Independence)),
        ("model4_frank_covariates".into(), with_kind(config, DependenceKind::Frank)),
    ]
}

pub fn cmd_evaluate(
    config: &Config,
    data_path: &Path,
    out: &Path,
    csv_out: Option<&Path>,
    seed: u64,
) -> CliResult<EvaluateReport> {
    let eval = config
        .evaluate
        .as_ref()
        .ok_or_else(|| CliError::data("config has no [evaluate] section"))?;
    let data = load_dataset(data_path, config)?;
    let n = data.len();
    let train_len = eval.train_length.unwrap_or(n);
    if train_len == 0 || train_len > n {
        return Err(CliError::data(format!(
            "train_length {train_len} is outside the data range 1..={n}"
        )));
    }
    let options = config.estimation.fit_options();

    let candidates: Vec<(String, Config)> = if eval.menu {
        menu_variants(config)
    } else {
        vec![("configured".to_string(), config.clone())]
    };

    let mut models = Vec::with_capacity(candidates.len());
    for (name, variant) in &candidates {
        let spec = variant.model_spec();
        let has_covariates = spec.margins.iter().any(|m| m.n_covariates > 0);
        let variant_data = if has_covariates {
            data.clone()
        } else {
            SeriesData::new(
                data.y.clone(),
                (0..data.n_series()).map(|_| Covariates::empty(n)).collect(),
            )?
        };
        let train = variant_data.slice(0, train_len);
        let test = variant_data.slice(train_len, n);

        let mut row = ModelScores {
            name: name.clone(),
            dependence: match spec.dependence {
                DependenceKind::Independence => "independence".to_string(),
                DependenceKind::Frank => "frank".to_string(),
            },
            covariates: has_covariates,
            n_params: spec.n_params(),
            train_loglik: None,
            aic: None,
            bic: None,
            cv_log_score: None,
            holdout_log_score: None,
            error: None,
            per_fold: Vec::new(),
        };

        let outcome: CliResult<()> = (|| {
            let fit = fit_ifm(&spec, &train, &options)?;
            let (aic, bic) = information_criteria(fit.joint_loglik, fit.n_params, fit.n_obs);
            row.train_loglik = Some(fit.joint_loglik);
            row.aic = Some(aic);
            row.bic = Some(bic);
            if let (Some(folds), Some(len)) = (eval.n_folds, eval.fold_length) {
                let cv = cv_log_score(&spec, &train, folds, len, &options)?;
                row.cv_log_score = Some(cv.log_score);
                row.per_fold = cv
                    .per_fold
                    .unwrap_or_default()
                    .into_iter()
                    .map(|f| FoldReport {
                        fold: f.fold,
                        train_start: f.train_start,
                        train_end: f.train_end,
                        log_score: f.log_score,
                        n_scored: f.n_scored,
                        error: f.error,
                    })
                    .collect();
            }
            if !test.is_empty() {
                row.holdout_log_score = Some(holdout_log_score(&fit, &train, &test)?.value);
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            if candidates.len() == 1 {
                return Err(e);
            }
            row.error = Some(e.to_string());
        }
        models.push(row);
    }

    let report = EvaluateReport {
        meta: Meta {
            command: "evaluate".to_string(),
            seed,
            init_policy: config.estimation.init_policy,
            n_obs: n,
            n_params: config.model_spec().n_params(),
        },
        config: config.clone(),
        models,
    };
    write_toml(out, &report)?;
    if let Some(csv_path) = csv_out {
        write_scores_csv(csv_path, &report)?;
    }

    println!(
        "{:<32} {:>12} {:>12} {:>12} {:>12}",
        "model", "cv_logscore", "aic", "bic", "holdout"
    );
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    for m in &report.models {
        println!(
            "{:<32} {:>12} {:>12} {:>12} {:>12}",
            m.name,
            cell(m.cv_log_score),
            cell(m.aic),
            cell(m.bic),
            cell(m.holdout_log_score)
        );
    }
    Ok(report)
}

/// Tidy long-format companion file: one (model, metric, value) row per
/// available score, ready for any plotting tool.
fn write_scores_csv(path: &Path, report: &EvaluateReport) -> CliResult<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["model", "metric", "value"])
        .map_err(|e| CliError::data(format!("cannot write score header: {e}")))?;
    for m in &report.models {
        let metrics = [
            ("train_loglik", m.train_loglik),
            ("aic", m.aic),
            ("bic", m.bic),
            ("cv_log_score", m.cv_log_score),
            ("holdout_log_score", m.holdout_log_score),
        ];
        for (name, value) in metrics {
            if let Some(v) = value {
                writer
                    .write_record([m.name.as_str(), name, &format_float(v)])
                    .map_err(|e| CliError::data(format!("cannot write score row: {e}")))?;
            }
        }
    }
    let bytes =
        writer.into_inner().map_err(|e| CliError::data(format!("cannot flush scores: {e}")))?;
    atomic_write(path, &bytes)
}
