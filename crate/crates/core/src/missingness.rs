//! Descriptive summaries of missing values, per variable and stratum.
//!
//! Variables are every dataset column except the stratifying ones (method
//! and DGM factors). A cell in a numeric role is missing when it does not
//! read as a finite number; other cells are missing when they hold one of
//! the missing markers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    is_missing_marker, parse_numeric, ColumnKind, Dataset, DgmKey, MethodKey, StratumKey,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissingError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumericVariable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSummary {
    pub variable: String,
    pub stratum: StratumKey,
    pub stratum_size: usize,
    pub n_missing: usize,
    pub prop_missing: f64,
    pub n_cumulative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarGrouping {
    Method,
    Dgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingBar {
    pub variable: String,
    pub group: String,
    pub n_total: usize,
    pub n_missing: usize,
    pub prop_missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingTile {
    pub method: String,
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub n_total: usize,
    pub n_missing: usize,
    pub percent_missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowPoint {
    pub row: usize,
    pub x: f64,
    pub y: f64,
    pub x_missing: bool,
    pub y_missing: bool,
}

/// Cell-level missingness over the whole dataset, in blocks of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingMatrix {
    pub variables: Vec<String>,
    pub block_rows: usize,
    /// Half-open row ranges, one per block.
    pub blocks: Vec<(usize, usize)>,
    /// `proportions[v][b]`: share of missing cells of variable `v` in block `b`.
    pub proportions: Vec<Vec<f64>>,
    pub overall: Vec<f64>,
}

/// Columns summarised for missingness, in dataset order.
pub fn summary_variables(dataset: &Dataset) -> Vec<String> {
    let strat = dataset.mapping.stratifying_columns();
    dataset
        .raw
        .header
        .iter()
        .filter(|h| !strat.contains(&h.as_str()))
        .cloned()
        .collect()
}

fn missing_flags(dataset: &Dataset, variable: &str) -> Result<Vec<bool>, MissingError> {
    let idx = dataset
        .raw
        .column_index(variable)
        .map_err(|_| MissingError::UnknownColumn(variable.to_string()))?;
    let numeric_role = dataset.mapping.numeric_columns().contains(&variable);
    Ok(dataset
        .raw
        .column(idx)
        .map(|cell| {
            if numeric_role {
                parse_numeric(cell).is_none()
            } else {
                is_missing_marker(cell)
            }
        })
        .collect())
}

/// Dataset-wide count of missing cells for one variable.
pub fn total_missing(dataset: &Dataset, variable: &str) -> Result<usize, MissingError> {
    Ok(missing_flags(dataset, variable)?
        .iter()
        .filter(|m| **m)
        .count())
}

pub fn missing_table(dataset: &Dataset) -> Vec<MissingSummary> {
    let strata = dataset.strata();
    let mut out = Vec::new();
    for variable in summary_variables(dataset) {
        let flags = missing_flags(dataset, &variable).expect("variable comes from the header");
        let mut cumulative = 0;
        for (key, idx) in &strata {
            let n_missing = idx.iter().filter(|&&i| flags[i]).count();
            cumulative += n_missing;
            out.push(MissingSummary {
                variable: variable.clone(),
                stratum: key.clone(),
                stratum_size: idx.len(),
                n_missing,
                prop_missing: n_missing as f64 / idx.len() as f64,
                n_cumulative: cumulative,
            });
        }
    }
    out
}

pub fn missing_bar_data(dataset: &Dataset, by: BarGrouping) -> Vec<MissingBar> {
    let mut out = Vec::new();
    for variable in summary_variables(dataset) {
        let flags = missing_flags(dataset, &variable).expect("variable comes from the header");
        let mut groups: BTreeMap<(DgmKey, MethodKey), (usize, usize)> = BTreeMap::new();
        for (i, r) in dataset.records.iter().enumerate() {
            let key = match by {
                BarGrouping::Method => (DgmKey(Vec::new()), MethodKey(r.method.clone())),
                BarGrouping::Dgm => (DgmKey(r.dgm.clone()), MethodKey(String::new())),
            };
            let e = groups.entry(key).or_default();
            e.0 += 1;
            e.1 += usize::from(flags[i]);
        }
        for ((dgm, method), (n_total, n_missing)) in groups {
            let group = match by {
                BarGrouping::Method => method.0,
                BarGrouping::Dgm => StratumKey::new(dgm.0, "").dgm_label(),
            };
            out.push(MissingBar {
                variable: variable.clone(),
                group,
                n_total,
                n_missing,
                prop_missing: n_missing as f64 / n_total as f64,
            });
        }
    }
    out
}

/// One tile per stratum with the percentage of missing cells of `variable`.
pub fn missing_heat_data(
    dataset: &Dataset,
    variable: &str,
) -> Result<Vec<MissingTile>, MissingError> {
    let flags = missing_flags(dataset, variable)?;
    Ok(dataset
        .strata()
        .into_iter()
        .map(|(key, idx)| {
            let n_missing = idx.iter().filter(|&&i| flags[i]).count();
            MissingTile {
                dgm_label: key.dgm_label(),
                method: key.method,
                dgm: key.dgm,
                n_total: idx.len(),
                n_missing,
                percent_missing: 100.0 * n_missing as f64 / idx.len() as f64,
            }
        })
        .collect())
}

/// Display value for missing entries of a variable with the given observed
/// values: below the minimum by 10% of the observed range (1.0 when the
/// range is zero).
pub fn shadow_fill_value(observed: &[f64]) -> f64 {
    if observed.is_empty() {
        return 0.0;
    }
    let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let offset = if range > 0.0 { 0.10 * range } else { 1.0 };
    min - offset
}

fn numeric_values(dataset: &Dataset, variable: &str) -> Result<Vec<Option<f64>>, MissingError> {
    let col = dataset
        .column(variable)
        .ok_or_else(|| MissingError::UnknownColumn(variable.to_string()))?;
    let numeric_role = dataset.mapping.numeric_columns().contains(&variable);
    if col.kind != ColumnKind::Numeric && !numeric_role {
        return Err(MissingError::NonNumericVariable(variable.to_string()));
    }
    let idx = dataset.raw.column_index(variable).expect("column exists");
    Ok(dataset.raw.column(idx).map(parse_numeric).collect())
}

pub fn shadow_scatter_data(
    dataset: &Dataset,
    xvar: &str,
    yvar: &str,
) -> Result<Vec<ShadowPoint>, MissingError> {
    let xs = numeric_values(dataset, xvar)?;
    let ys = numeric_values(dataset, yvar)?;
    let fill =
        |v: &[Option<f64>]| shadow_fill_value(&v.iter().flatten().copied().collect::<Vec<_>>());
    let (fx, fy) = (fill(&xs), fill(&ys));
    Ok(xs
        .iter()
        .zip(&ys)
        .enumerate()
        .map(|(row, (x, y))| ShadowPoint {
            row,
            x: x.unwrap_or(fx),
            y: y.unwrap_or(fy),
            x_missing: x.is_none(),
            y_missing: y.is_none(),
        })
        .collect())
}

/// Missing-cell proportions for every column over consecutive row blocks.
pub fn missing_matrix(dataset: &Dataset, block_rows: usize) -> MissingMatrix {
    let n = dataset.raw.n_rows();
    let block_rows = block_rows.max(1);
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(block_rows)
        .map(|s| (s, (s + block_rows).min(n)))
        .collect();
    let variables = dataset.raw.header.clone();
    let mut proportions = Vec::with_capacity(variables.len());
    let mut overall = Vec::with_capacity(variables.len());
    for v in &variables {
        let flags = missing_flags(dataset, v).expect("variable comes from the header");
        proportions.push(
            blocks
                .iter()
                .map(|&(s, e)| flags[s..e].iter().filter(|m| **m).count() as f64 / (e - s) as f64)
                .collect(),
        );
        let total = flags.iter().filter(|m| **m).count();
        overall.push(if n == 0 { 0.0 } else { total as f64 / n as f64 });
    }
    MissingMatrix {
        variables,
        block_rows,
        blocks,
        proportions,
        overall,
    }
}
