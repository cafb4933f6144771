//! Canonical tidy dataset: raw table, variable mapping, records and strata.
//!
//! A [`Dataset`] is built once from a [`RawTable`] and a [`VariableMapping`]
//! and never mutated afterwards. Cells that cannot be read as numbers in a
//! numeric role become missing values; only structural problems (unknown
//! columns, ragged rows, unassignable records) are errors.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label of the synthetic method used when no method column is mapped.
pub const IMPLICIT_METHOD: &str = "all";

/// Default nominal level for tests and confidence intervals.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row} has {found} cells, header has {expected}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("reference method `{0}` is not a level of the method column")]
    UnknownReferenceMethod(String),
    #[error("reference method requires a method column")]
    ReferenceWithoutMethod,
    #[error("confidence-bound columns and a degrees-of-freedom column are mutually exclusive")]
    ConflictingIntervalSources,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("row {row}: stratification column `{column}` is missing")]
    MissingStratumValue { row: usize, column: String },
}

/// Parsed table prior to mapping: header plus row-major cells, verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, ModelError> {
        let table = Self { header, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, name) in self.header.iter().enumerate() {
            if self.header[..i].contains(name) {
                return Err(ModelError::DuplicateColumn(name.clone()));
            }
        }
        for (row, cells) in self.rows.iter().enumerate() {
            if cells.len() != self.header.len() {
                return Err(ModelError::ArityMismatch {
                    row,
                    expected: self.header.len(),
                    found: cells.len(),
                });
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize, ModelError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelError::UnknownColumn(name.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[idx].as_str())
    }

    /// Header names with inferred kinds: numeric when every non-missing
    /// cell parses as a number.
    pub fn columns(&self) -> Vec<Column> {
        self.header
            .iter()
            .enumerate()
            .map(|(i, name)| Column {
                name: name.clone(),
                kind: infer_kind(self.column(i)),
            })
            .collect()
    }
}

/// True for the missing-value markers accepted in numeric roles:
/// empty, `NA`, `NaN` and `.` (case-insensitive, surrounding space ignored).
pub fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "." || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Reads a cell in a numeric role. Missing markers and unparseable or
/// non-finite text both yield `None`.
pub fn parse_numeric(cell: &str) -> Option<f64> {
    if is_missing_marker(cell) {
        return None;
    }
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

fn infer_kind<'a>(cells: impl Iterator<Item = &'a str>) -> ColumnKind {
    let mut kind = ColumnKind::Numeric;
    for cell in cells {
        if !is_missing_marker(cell) && parse_numeric(cell).is_none() {
            kind = ColumnKind::String;
            break;
        }
    }
    kind
}

/// Where the true value of the estimand comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Fixed(f64),
    Column(String),
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Which dataset columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMapping {
    pub estimate: String,
    #[serde(default)]
    pub se: Option<String>,
    #[serde(default)]
    pub truth: Option<Truth>,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub reference_method: Option<String>,
    #[serde(default)]
    pub dgm: Vec<String>,
    #[serde(default)]
    pub rep: Option<String>,
    #[serde(default)]
    pub ci: Option<(String, String)>,
    #[serde(default)]
    pub df: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl VariableMapping {
    pub fn new(estimate: impl Into<String>) -> Self {
        Self {
            estimate: estimate.into(),
            se: None,
            truth: None,
            method: None,
            reference_method: None,
            dgm: Vec::new(),
            rep: None,
            ci: None,
            df: None,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn with_se(mut self, col: impl Into<String>) -> Self {
        self.se = Some(col.into());
        self
    }

    pub fn with_truth(mut self, truth: Truth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_method(mut self, col: impl Into<String>) -> Self {
        self.method = Some(col.into());
        self
    }

    pub fn with_reference(mut self, level: impl Into<String>) -> Self {
        self.reference_method = Some(level.into());
        self
    }

    pub fn with_dgm<I, S>(mut self, cols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.dgm = cols.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_rep(mut self, col: impl Into<String>) -> Self {
        self.rep = Some(col.into());
        self
    }

    pub fn with_ci(mut self, lower: impl Into<String>, upper: impl Into<String>) -> Self {
        self.ci = Some((lower.into(), upper.into()));
        self
    }

    pub fn with_df(mut self, col: impl Into<String>) -> Self {
        self.df = Some(col.into());
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Columns read as numbers (estimate, SE, truth, bounds, df).
    pub fn numeric_columns(&self) -> Vec<&str> {
        let mut cols = vec![self.estimate.as_str()];
        cols.extend(self.se.as_deref());
        if let Some(Truth::Column(c)) = &self.truth {
            cols.push(c);
        }
        if let Some((l, u)) = &self.ci {
            cols.push(l);
            cols.push(u);
        }
        cols.extend(self.df.as_deref());
        cols
    }

    /// Columns that define strata (DGM factors and method).
    pub fn stratifying_columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = self.dgm.iter().map(String::as_str).collect();
        cols.extend(self.method.as_deref());
        cols
    }

    pub fn has_truth(&self) -> bool {
        self.truth.is_some()
    }
}

/// One repetition of one method under one data-generating mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub rep_id: Option<String>,
    pub dgm: Vec<String>,
    pub method: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub truth: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub df: Option<f64>,
}

/// Ordering of factor levels: numeric-looking levels compare numerically and
/// sort before non-numeric ones, which compare lexicographically.
pub fn compare_levels(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => x
            .partial_cmp(&y)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(b)),
        (Ok(x), Err(_)) if x.is_finite() => Ordering::Less,
        (Err(_), Ok(y)) if y.is_finite() => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn compare_tuples(a: &[String], b: &[String]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match compare_levels(x, y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// One (DGM combination × method) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub dgm: Vec<String>,
    pub method: String,
}

impl StratumKey {
    pub fn new(dgm: Vec<String>, method: impl Into<String>) -> Self {
        Self {
            dgm,
            method: method.into(),
        }
    }

    pub fn dgm_label(&self) -> String {
        if self.dgm.is_empty() {
            "all".to_string()
        } else {
            self.dgm.join(", ")
        }
    }
}

impl Ord for StratumKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_tuples(&self.dgm, &other.dgm)
            .then_with(|| compare_levels(&self.method, &other.method))
    }
}

impl PartialOrd for StratumKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dgm=({}) method={}", self.dgm.join(","), self.method)
    }
}

/// A DGM combination used as an ordered map key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DgmKey(pub Vec<String>);

impl Ord for DgmKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_tuples(&self.0, &other.0)
    }
}

impl PartialOrd for DgmKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A method level used as an ordered map key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodKey(pub String);

impl Ord for MethodKey {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_levels(&self.0, &other.0)
    }
}

impl PartialOrd for MethodKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumCount {
    #[serde(flatten)]
    pub key: StratumKey,
    pub count: usize,
}

/// Immutable mapped dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<Column>,
    pub raw: RawTable,
    pub mapping: VariableMapping,
    pub records: Vec<RepetitionRecord>,
}

/// Builds records from a raw table.
pub fn apply_mapping(raw: RawTable, mapping: VariableMapping) -> Result<Dataset, ModelError> {
    raw.validate()?;
    if !(mapping.alpha > 0.0 && mapping.alpha < 1.0) {
        return Err(ModelError::InvalidAlpha(mapping.alpha));
    }
    if mapping.ci.is_some() && mapping.df.is_some() {
        return Err(ModelError::ConflictingIntervalSources);
    }

    let est = raw.column_index(&mapping.estimate)?;
    let opt = |c: &Option<String>| c.as_deref().map(|n| raw.column_index(n)).transpose();
    let se = opt(&mapping.se)?;
    let method = opt(&mapping.method)?;
    let rep = opt(&mapping.rep)?;
    let df = opt(&mapping.df)?;
    let truth_col = match &mapping.truth {
        Some(Truth::Column(c)) => Some(raw.column_index(c)?),
        _ => None,
    };
    let ci = match &mapping.ci {
        Some((l, u)) => Some((raw.column_index(l)?, raw.column_index(u)?)),
        None => None,
    };
    let dgm = mapping
        .dgm
        .iter()
        .map(|c| raw.column_index(c))
        .collect::<Result<Vec<_>, _>>()?;

    let num = |row: &[String], idx: Option<usize>| idx.and_then(|i| parse_numeric(&row[i]));
    let label = |row_idx: usize, row: &[String], idx: usize| {
        let cell = row[idx].trim();
        if cell.is_empty() {
            Err(ModelError::MissingStratumValue {
                row: row_idx,
                column: raw.header[idx].clone(),
            })
        } else {
            Ok(cell.to_string())
        }
    };

    let mut records = Vec::with_capacity(raw.rows.len());
    for (i, row) in raw.rows.iter().enumerate() {
        let dgm_values = dgm
            .iter()
            .map(|&c| label(i, row, c))
            .collect::<Result<Vec<_>, _>>()?;
        let method_value = match method {
            Some(c) => label(i, row, c)?,
            None => IMPLICIT_METHOD.to_string(),
        };
        let truth = match &mapping.truth {
            Some(Truth::Fixed(v)) => Some(*v),
            Some(Truth::Column(_)) => num(row, truth_col),
            None => None,
        };
        let (mut lower, mut upper) = match ci {
            Some((l, u)) => (num(row, Some(l)), num(row, Some(u))),
            None => (None, None),
        };
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                lower = None;
                upper = None;
            }
        }
        records.push(RepetitionRecord {
            rep_id: rep
                .map(|c| row[c].trim().to_string())
                .filter(|s| !is_missing_marker(s)),
            dgm: dgm_values,
            method: method_value,
            estimate: num(row, Some(est)),
            se: num(row, se).filter(|v| *v >= 0.0),
            truth,
            lower,
            upper,
            df: num(row, df).filter(|v| *v > 0.0),
        });
    }

    if let Some(reference) = &mapping.reference_method {
        if method.is_none() {
            return Err(ModelError::ReferenceWithoutMethod);
        }
        if !records.iter().any(|r| &r.method == reference) {
            return Err(ModelError::UnknownReferenceMethod(reference.clone()));
        }
    }

    let columns = raw.columns();

    Ok(Dataset {
        columns,
        raw,
        mapping,
        records,
    })
}

impl Dataset {
    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Record indices grouped by stratum, in deterministic stratum order.
    /// Indices inside a stratum keep file order.
    pub fn strata(&self) -> BTreeMap<StratumKey, Vec<usize>> {
        let mut map: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            map.entry(StratumKey::new(r.dgm.clone(), r.method.clone()))
                .or_default()
                .push(i);
        }
        map
    }

    pub fn stratum_records(&self, key: &StratumKey) -> Vec<&RepetitionRecord> {
        self.records
            .iter()
            .filter(|r| r.dgm == key.dgm && r.method == key.method)
            .collect()
    }

    /// Distinct method levels, sorted.
    pub fn methods(&self) -> Vec<String> {
        let mut set: BTreeMap<MethodKey, ()> = BTreeMap::new();
        for r in &self.records {
            set.insert(MethodKey(r.method.clone()), ());
        }
        set.into_keys().map(|k| k.0).collect()
    }

    /// Distinct DGM combinations, sorted.
    pub fn dgms(&self) -> Vec<Vec<String>> {
        let mut set: BTreeMap<DgmKey, ()> = BTreeMap::new();
        for r in &self.records {
            set.insert(DgmKey(r.dgm.clone()), ());
        }
        set.into_keys().map(|k| k.0).collect()
    }

    /// Reference method for relative precision: the mapped one, else the
    /// first method level.
    pub fn reference_method(&self) -> Option<String> {
        self.mapping.method.as_ref()?;
        self.mapping
            .reference_method
            .clone()
            .or_else(|| self.methods().into_iter().next())
    }
}

/// Strata with their record counts, in deterministic order.
pub fn enumerate_strata(dataset: &Dataset) -> Vec<StratumCount> {
    dataset
        .strata()
        .into_iter()
        .map(|(key, idx)| StratumCount {
            key,
            count: idx.len(),
        })
        .collect()
}
