//! CSV ingestion for the Bayesian logistic regression posterior.
//!
//! Encoding: `use` "Y" → 1 else 0; `livch` "0"/"1"/"2" numeric and "3+" → 3;
//! `urban` "Y" → 1 else 0; `age` parsed as a real and centred to sample mean
//! zero. Design matrix rows are `[1, livch, age_centred, urban]`.

use std::path::Path;

use adhmc_core::models::{BlrPosterior, GaussianDensity};

use crate::CliError;

/// Header names of the four source columns.
#[derive(Debug, Clone)]
pub struct BlrSchema {
    pub use_col: String,
    pub livch_col: String,
    pub age_col: String,
    pub urban_col: String,
}

/// Ingestion output: the posterior plus bookkeeping for reporting.
#[derive(Debug)]
pub struct BlrDataset {
    pub posterior: BlrPosterior,
    pub n_rows: usize,
    pub age_mean: f64,
    pub positive_labels: usize,
}

pub fn blr_from_csv(
    path: &Path,
    schema: &BlrSchema,
    prior_sd: f64,
) -> Result<BlrDataset, CliError> {
    if prior_sd <= 0.0 {
        return Err(CliError::Config("prior sd must be positive".into()));
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Runtime(format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column `{name}` not found in header")))
    };
    let use_idx = col(&schema.use_col)?;
    let livch_idx = col(&schema.livch_col)?;
    let age_idx = col(&schema.age_col)?;
    let urban_idx = col(&schema.urban_col)?;

    let mut labels: Vec<f64> = Vec::new();
    let mut livch: Vec<f64> = Vec::new();
    let mut age: Vec<f64> = Vec::new();
    let mut urban: Vec<f64> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::Runtime(format!("row {}: {e}", row_no + 2)))?;
        let field = |idx: usize, name: &str| -> Result<&str, CliError> {
            record.get(idx).map(str::trim).ok_or_else(|| {
                CliError::Runtime(format!("row {}: missing column `{name}`", row_no + 2))
            })
        };
        labels.push(if field(use_idx, &schema.use_col)? == "Y" { 1.0 } else { 0.0 });
        let livch_raw = field(livch_idx, &schema.livch_col)?;
        livch.push(match livch_raw {
            "3+" => 3.0,
            other => other.parse().map_err(|_| {
                CliError::Runtime(format!(
                    "row {}: bad `{}` value `{other}`",
                    row_no + 2,
                    schema.livch_col
                ))
            })?,
        });
        let age_raw = field(age_idx, &schema.age_col)?;
        age.push(age_raw.parse().map_err(|_| {
            CliError::Runtime(format!(
                "row {}: bad `{}` value `{age_raw}`",
                row_no + 2,
                schema.age_col
            ))
        })?);
        urban.push(if field(urban_idx, &schema.urban_col)? == "Y" { 1.0 } else { 0.0 });
    }
    let n = labels.len();
    if n == 0 {
        return Err(CliError::Runtime("dataset has no rows".into()));
    }
    let age_mean = age.iter().sum::<f64>() / n as f64;

    let mut design = Vec::with_capacity(4 * n);
    for i in 0..n {
        design.push(1.0);
        design.push(livch[i]);
        design.push(age[i] - age_mean);
        design.push(urban[i]);
    }
    let prior = GaussianDensity::isotropic(vec![0.0; 4], prior_sd)
        .map_err(|e| CliError::Config(format!("bad prior: {e}")))?;
    let posterior = BlrPosterior::new(design, labels.clone(), prior)
        .map_err(|e| CliError::Runtime(format!("cannot build posterior: {e}")))?;
    Ok(BlrDataset {
        posterior,
        n_rows: n,
        age_mean,
        positive_labels: labels.iter().filter(|&&y| y == 1.0).count(),
    })
}
