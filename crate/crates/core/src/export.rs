//! Table formatting and serialisation: LaTeX tables, tidy and wide
//! delimited tables, and raw dataset export.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::ingest::Format;
use crate::measures::{Measure, PerformanceEstimate};
use crate::model::{parse_numeric, DgmKey, MethodKey, RawTable, StratumKey};

pub const DEFAULT_SIG_DIGITS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("cannot format non-finite value {0}")]
    NonFinite(f64),
    #[error("nothing selected for export")]
    EmptySelection,
    #[error("significant digits must be at least 1")]
    InvalidDigits,
    #[error("unknown export format `{0}`")]
    UnknownFormat(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("serialisation failed: {0}")]
    Write(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Measures as rows, methods as columns, formatted cells.
    Wide,
    /// One row per (measure, stratum) at full precision.
    #[default]
    Tidy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableStyle {
    pub sig_digits: usize,
    pub include_mcse: bool,
    pub caption: Option<String>,
    pub orientation: Orientation,
}

impl Default for TableStyle {
    fn default() -> Self {
        Self {
            sig_digits: DEFAULT_SIG_DIGITS,
            include_mcse: true,
            caption: None,
            orientation: Orientation::Tidy,
        }
    }
}

impl TableStyle {
    pub fn validate(&self) -> Result<(), ExportError> {
        if self.sig_digits == 0 {
            Err(ExportError::InvalidDigits)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Latex,
    Csv,
    Tsv,
    Json,
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Latex => "application/x-latex; charset=utf-8",
            ExportFormat::Csv => "text/csv; charset=utf-8",
            ExportFormat::Tsv => "text/tab-separated-values; charset=utf-8",
            ExportFormat::Json => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Latex => "tex",
            ExportFormat::Csv => "csv",
            ExportFormat::Tsv => "tsv",
            ExportFormat::Json => "json",
        }
    }

    /// The delimited format, or `None` for LaTeX.
    pub fn delimited(self) -> Option<Format> {
        match self {
            ExportFormat::Latex => None,
            ExportFormat::Csv => Some(Format::Csv),
            ExportFormat::Tsv => Some(Format::Tsv),
            ExportFormat::Json => Some(Format::JsonRecords),
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "latex" | "tex" => Ok(ExportFormat::Latex),
            "csv" => Ok(ExportFormat::Csv),
            "tsv" | "tab" => Ok(ExportFormat::Tsv),
            "json" | "json-records" => Ok(ExportFormat::Json),
            _ => Err(ExportError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Latex => "latex",
            ExportFormat::Csv => "csv",
            ExportFormat::Tsv => "tsv",
            ExportFormat::Json => "json",
        })
    }
}

/// Decimal places used to show `value` with `sig` significant figures,
/// never more than `sig` places.
pub fn decimal_places(value: f64, sig: usize) -> usize {
    if value == 0.0 {
        return sig - 1;
    }
    // The exponent after rounding, so 9.99996 counts as 10.
    let sci = format!("{:.*e}", sig - 1, value.abs());
    let exp: i64 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    (sig as i64 - 1 - exp).clamp(0, sig as i64) as usize
}

fn fixed(value: f64, places: usize) -> String {
    let s = format!("{:.*}", places, value);
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// A table cell: the value to `sig_digits` significant figures, padded
/// with trailing zeros, and the MCSE in parentheses at the same number of
/// decimal places.
pub fn format_cell(
    value: f64,
    mcse: Option<f64>,
    style: &TableStyle,
) -> Result<String, ExportError> {
    style.validate()?;
    if !value.is_finite() {
        return Err(ExportError::NonFinite(value));
    }
    let places = decimal_places(value, style.sig_digits);
    let mut out = fixed(value, places);
    if let (Some(m), true) = (mcse, style.include_mcse) {
        if !m.is_finite() {
            return Err(ExportError::NonFinite(m));
        }
        out.push_str(&format!(" ({})", fixed(m, places)));
    }
    Ok(out)
}

/// Escapes LaTeX special characters in plain text.
pub fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            _ => out.push(c),
        }
    }
    out
}

type Grid<'a> = BTreeMap<DgmKey, BTreeMap<Measure, BTreeMap<MethodKey, &'a PerformanceEstimate>>>;

fn grid(estimates: &[PerformanceEstimate]) -> Grid<'_> {
    let mut g: Grid = BTreeMap::new();
    for e in estimates {
        g.entry(DgmKey(e.stratum.dgm.clone()))
            .or_default()
            .entry(e.measure)
            .or_default()
            .insert(MethodKey(e.stratum.method.clone()), e);
    }
    g
}

fn methods_of(rows: &BTreeMap<Measure, BTreeMap<MethodKey, &PerformanceEstimate>>) -> Vec<String> {
    let mut set: Vec<MethodKey> = rows.values().flat_map(|r| r.keys().cloned()).collect();
    set.sort();
    set.dedup();
    set.into_iter().map(|m| m.0).collect()
}

fn keep(e: &PerformanceEstimate, dgm: Option<&[String]>) -> bool {
    dgm.is_none_or(|d| e.stratum.dgm == d)
}

/// LaTeX tables (booktabs) with measures as rows and methods as columns,
/// one table per DGM combination in the selection.
pub fn to_latex(
    estimates: &[PerformanceEstimate],
    dgm: Option<&[String]>,
    style: &TableStyle,
    alpha: f64,
) -> Result<String, ExportError> {
    style.validate()?;
    let selected: Vec<PerformanceEstimate> =
        estimates.iter().filter(|e| keep(e, dgm)).cloned().collect();
    if selected.is_empty() {
        return Err(ExportError::EmptySelection);
    }
    let mut tables = Vec::new();
    for (dgm_key, rows) in grid(&selected) {
        let methods = methods_of(&rows);
        let label = StratumKey::new(dgm_key.0.clone(), "").dgm_label();
        let caption = style
            .caption
            .clone()
            .unwrap_or_else(|| format!("Estimated performance measures, DGM: {label}"));
        let mut header = vec!["Performance Measure".to_string()];
        header.extend(methods.iter().cloned());
        let mut body = Vec::new();
        for (measure, cells) in &rows {
            let mut line = vec![measure.label(alpha)];
            for m in &methods {
                line.push(match cells.get(&MethodKey(m.clone())) {
                    Some(e) => format_cell(e.value, e.mcse, style)?,
                    None => String::new(),
                });
            }
            body.push(line);
        }
        tables.push(latex_table(&caption, &header, &body));
    }
    Ok(tables.join("\n"))
}

/// One booktabs table, scaled to the line width. Header and cells are
/// escaped here.
pub fn latex_table(caption: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let line = |cells: &[String]| {
        let escaped: Vec<String> = cells.iter().map(|c| latex_escape(c)).collect();
        format!("{}\\\\\n", escaped.join(" & "))
    };
    let mut t = String::new();
    t.push_str("\\begin{table}\n\\centering\n");
    t.push_str(&format!("\\caption{{{}}}\n", latex_escape(caption)));
    t.push_str("\\resizebox{\\linewidth}{!}{\n");
    t.push_str(&format!(
        "\\begin{{tabular}}[t]{{{}}}\n",
        "l".repeat(header.len())
    ));
    t.push_str("\\toprule\n");
    t.push_str(&line(header));
    t.push_str("\\midrule\n");
    for r in rows {
        t.push_str(&line(r));
    }
    t.push_str("\\bottomrule\n\\end{tabular}\n}\n\\end{table}\n");
    t
}

/// Shortest decimal text that reads back as the same `f64`.
pub fn full_precision(x: f64) -> String {
    format!("{x:?}")
}

fn write_rows(
    header: &[String],
    rows: &[Vec<String>],
    format: Format,
) -> Result<Vec<u8>, ExportError> {
    match format.delimiter() {
        Some(delim) => {
            let mut w = csv::WriterBuilder::new()
                .delimiter(delim)
                .terminator(csv::Terminator::CRLF)
                .from_writer(Vec::new());
            w.write_record(header)
                .map_err(|e| ExportError::Write(e.to_string()))?;
            for r in rows {
                w.write_record(r)
                    .map_err(|e| ExportError::Write(e.to_string()))?;
            }
            w.into_inner()
                .map_err(|e| ExportError::Write(e.to_string()))
        }
        None => unreachable!("json rows are written by the callers"),
    }
}

fn json_bytes(records: Vec<Map<String, Value>>) -> Result<Vec<u8>, ExportError> {
    serde_json::to_vec_pretty(&Value::Array(
        records.into_iter().map(Value::Object).collect(),
    ))
    .map_err(|e| ExportError::Write(e.to_string()))
}

fn json_number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn tidy_header(dgm_names: &[String]) -> Vec<String> {
    let mut h = vec!["measure".to_string()];
    h.extend(dgm_names.iter().cloned());
    h.extend(["method", "value", "mcse", "n_used"].map(String::from));
    h
}

/// One row per estimate: measure, DGM factor levels, method, value, MCSE
/// and the number of repetitions used. Numbers are written at full
/// precision.
pub fn tidy_table(
    estimates: &[PerformanceEstimate],
    dgm_names: &[String],
    format: Format,
) -> Result<Vec<u8>, ExportError> {
    if estimates.is_empty() {
        return Err(ExportError::EmptySelection);
    }
    if format == Format::JsonRecords {
        let records = estimates
            .iter()
            .map(|e| {
                let mut m = Map::new();
                m.insert("measure".into(), Value::String(e.measure.name().into()));
                for (name, level) in dgm_names.iter().zip(&e.stratum.dgm) {
                    m.insert(name.clone(), Value::String(level.clone()));
                }
                m.insert("method".into(), Value::String(e.stratum.method.clone()));
                m.insert("value".into(), json_number(e.value));
                m.insert("mcse".into(), e.mcse.map_or(Value::Null, json_number));
                m.insert("n_used".into(), Value::from(e.n_used));
                m
            })
            .collect();
        return json_bytes(records);
    }
    let rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|e| {
            let mut r = vec![e.measure.name().to_string()];
            r.extend(e.stratum.dgm.iter().cloned());
            r.push(e.stratum.method.clone());
            r.push(full_precision(e.value));
            r.push(e.mcse.map(full_precision).unwrap_or_default());
            r.push(e.n_used.to_string());
            r
        })
        .collect();
    write_rows(&tidy_header(dgm_names), &rows, format)
}

/// Reads a tidy table written by [`tidy_table`] back into estimates.
pub fn estimates_from_tidy(
    raw: &RawTable,
    dgm_names: &[String],
) -> Result<Vec<PerformanceEstimate>, ExportError> {
    let col = |name: &str| {
        raw.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ExportError::MissingColumn(name.to_string()))
    };
    let measure_i = col("measure")?;
    let method_i = col("method")?;
    let value_i = col("value")?;
    let mcse_i = col("mcse")?;
    let n_i = col("n_used")?;
    let dgm_i = dgm_names
        .iter()
        .map(|d| col(d))
        .collect::<Result<Vec<_>, _>>()?;
    raw.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let bad = |message: String| ExportError::BadRow {
                row: i + 1,
                message,
            };
            let measure: Measure = r[measure_i].parse().map_err(|e| bad(format!("{e}")))?;
            let value = parse_numeric(&r[value_i])
                .ok_or_else(|| bad(format!("value `{}` is not a number", r[value_i])))?;
            let n_used = r[n_i]
                .trim()
                .parse()
                .map_err(|_| bad(format!("n_used `{}` is not a count", r[n_i])))?;
            Ok(PerformanceEstimate {
                measure,
                stratum: StratumKey::new(
                    dgm_i.iter().map(|&j| r[j].clone()).collect(),
                    r[method_i].clone(),
                ),
                value,
                mcse: parse_numeric(&r[mcse_i]),
                n_used,
            })
        })
        .collect()
}

/// The table as displayed: a label column, the DGM factor columns when
/// more than one DGM combination is selected, then one formatted column
/// per method.
pub fn wide_table(
    estimates: &[PerformanceEstimate],
    dgm_names: &[String],
    style: &TableStyle,
    alpha: f64,
    format: Format,
) -> Result<Vec<u8>, ExportError> {
    style.validate()?;
    if estimates.is_empty() {
        return Err(ExportError::EmptySelection);
    }
    let g = grid(estimates);
    let show_dgm = g.len() > 1;
    let mut methods: Vec<MethodKey> = g
        .values()
        .flat_map(|rows| methods_of(rows).into_iter().map(MethodKey))
        .collect();
    methods.sort();
    methods.dedup();
    let mut header = vec!["Performance Measure".to_string()];
    if show_dgm {
        header.extend(dgm_names.iter().cloned());
    }
    header.extend(methods.iter().map(|m| m.0.clone()));
    let mut rows = Vec::new();
    for (dgm, measures) in &g {
        for (measure, cells) in measures {
            let mut r = vec![measure.label(alpha)];
            if show_dgm {
                r.extend(dgm.0.iter().cloned());
            }
            for m in &methods {
                r.push(match cells.get(m) {
                    Some(e) => format_cell(e.value, e.mcse, style)?,
                    None => String::new(),
                });
            }
            rows.push(r);
        }
    }
    if format == Format::JsonRecords {
        let records = rows
            .into_iter()
            .map(|r| {
                header
                    .iter()
                    .cloned()
                    .zip(r.into_iter().map(Value::String))
                    .collect()
            })
            .collect();
        return json_bytes(records);
    }
    write_rows(&header, &rows, format)
}

/// Raw dataset cells, verbatim, in the given format.
pub fn dataset_to_delimited(raw: &RawTable, format: Format) -> Result<Vec<u8>, ExportError> {
    if format == Format::JsonRecords {
        let records = raw
            .rows
            .iter()
            .map(|r| {
                raw.header
                    .iter()
                    .cloned()
                    .zip(r.iter().cloned().map(Value::String))
                    .collect()
            })
            .collect();
        return json_bytes(records);
    }
    write_rows(&raw.header, &raw.rows, format)
}
