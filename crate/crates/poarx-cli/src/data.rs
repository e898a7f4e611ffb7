//! CSV dataset ingestion and emission (RFC-4180, header row, UTF-8).
//!
//! Counts must parse as non-negative integers and covariates as finite
//! non-negative reals; parse failures name the offending row. An optional
//! time column is validated to be strictly increasing and otherwise ignored.

use std::collections::HashMap;
use std::path::Path;

use poarx::model::{Covariates, SeriesData};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::report::atomic_write;

/// A parsed data file: observed history plus any trailing rows that carry
/// covariates for forecasting beyond the sample.
pub struct Dataset {
    pub data: SeriesData,
    pub future_x: Vec<Covariates>,
}

/// Read the whole file as observed history.
pub fn load_dataset(path: &Path, config: &Config) -> CliResult<SeriesData> {
    Ok(load_dataset_split(path, config, None)?.data)
}

/// Read a file whose first `history_length` rows are observations; rows
/// beyond that only need covariate values (their count cells are ignored).
pub fn load_dataset_split(
    path: &Path,
    config: &Config,
    history_length: Option<usize>,
) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let index: HashMap<&str, usize> =
        headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| -> CliResult<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| CliError::data(format!("missing column '{name}' in {}", path.display())))
    };

    let time_idx = config.time_column.as_deref().map(column).transpose()?;
    let count_idx: Vec<usize> = config
        .series
        .iter()
        .map(|s| column(&s.count_column))
        .collect::<CliResult<_>>()?;
    let cov_idx: Vec<Vec<usize>> = config
        .series
        .iter()
        .map(|s| s.covariate_columns.iter().map(|c| column(c)).collect())
        .collect::<CliResult<_>>()?;

    let k = config.series.len();
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); k];
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut prev_time: Option<f64> = None;
    let mut n_rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        // Row numbering matches the file: header is line 1.
        let line = row + 2;
        let record =
            record.map_err(|e| CliError::data(format!("parse failure at line {line}: {e}")))?;
        let observed = history_length.is_none_or(|h| row < h);
        if let Some(ti) = time_idx {
            let t: f64 = record
                .get(ti)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| CliError::data(format!("unreadable time value at line {line}")))?;
            if let Some(prev) = prev_time {
                if t <= prev {
                    return Err(CliError::data(format!(
                        "time column must be strictly increasing; violated at line {line}"
                    )));
                }
            }
            prev_time = Some(t);
        }
        for (j, &ci) in count_idx.iter().enumerate() {
            let cell = record.get(ci).unwrap_or("").trim();
            if observed {
                let value: i64 = cell.parse().map_err(|_| {
                    CliError::data(format!(
                        "count column '{}' unreadable at line {line}: '{cell}'",
                        config.series[j].count_column
                    ))
                })?;
                if value < 0 {
                    return Err(CliError::data(format!(
                        "negative count {value} in column '{}' at line {line}",
                        config.series[j].count_column
                    )));
                }
                counts[j].push(value as u64);
            }
        }
        for (j, cols) in cov_idx.iter().enumerate() {
            for &ci in cols {
                let cell = record.get(ci).unwrap_or("").trim();
                let value: f64 = cell.parse().map_err(|_| {
                    CliError::data(format!("covariate unreadable at line {line}: '{cell}'"))
                })?;
                if !value.is_finite() || value < 0.0 {
                    return Err(CliError::data(format!(
                        "covariates must be finite and non-negative; got {value} at line {line}"
                    )));
                }
                covariates[j].push(value);
            }
        }
        n_rows += 1;
    }

    let n_hist = history_length.map_or(n_rows, |h| h.min(n_rows));
    if let Some(h) = history_length {
        if h > n_rows {
            return Err(CliError::data(format!(
                "history_length {h} exceeds the {n_rows} rows in {}",
                path.display()
            )));
        }
    }
    let mut hist_x = Vec::with_capacity(k);
    let mut future_x = Vec::with_capacity(k);
    for (j, values) in covariates.into_iter().enumerate() {
        let r = cov_idx[j].len();
        let split = n_hist * r;
        hist_x.push(Covariates::new(n_hist, r, values[..split].to_vec())?);
        future_x.push(Covariates::new(n_rows - n_hist, r, values[split..].to_vec())?);
    }
    let data = SeriesData::new(counts, hist_x)?;
    Ok(Dataset { data, future_x })
}

/// Write counts and covariates back to CSV in the config's column layout.
/// Shared covariate columns (the same name bound to several series) are
/// written once and must agree across series.
pub fn write_dataset(path: &Path, config: &Config, data: &SeriesData) -> CliResult<()> {
    let n = data.len();
    let mut writer = csv::Writer::from_writer(Vec::new());

    let time_name = config.time_column.clone().unwrap_or_else(|| "t".to_string());
    let mut header = vec![time_name];
    for s in &config.series {
        header.push(s.count_column.clone());
    }
    // Unique covariate columns in first-appearance order; a name bound to
    // several series must carry identical values everywhere.
    let mut cov_layout: Vec<(String, usize, usize)> = Vec::new();
    for (j, s) in config.series.iter().enumerate() {
        for (c, name) in s.covariate_columns.iter().enumerate() {
            match cov_layout.iter().find(|(existing, _, _)| existing == name) {
                Some(&(_, j0, c0)) => {
                    for t in 0..n {
                        if data.x[j].row(t)[c] != data.x[j0].row(t)[c0] {
                            return Err(CliError::data(format!(
                                "covariate column '{name}' is bound to several series with different values"
                            )));
                        }
                    }
                }
                None => {
                    cov_layout.push((name.clone(), j, c));
                    header.push(name.clone());
                }
            }
        }
    }
    writer
        .write_record(&header)
        .map_err(|e| CliError::data(format!("cannot write header: {e}")))?;

    for t in 0..n {
        let mut row = vec![t.to_string()];
        for j in 0..data.n_series() {
            row.push(data.y[j][t].to_string());
        }
        for (_, j, c) in &cov_layout {
            row.push(format_float(data.x[*j].row(t)[*c]));
        }
        writer
            .write_record(&row)
            .map_err(|e| CliError::data(format!("cannot write row {t}: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::data(format!("cannot flush CSV: {e}")))?;
    atomic_write(path, &bytes)
}

/// Shortest-roundtrip float formatting (what `Display` gives for f64).
pub fn format_float(v: f64) -> String {
    format!("{v}")
}
