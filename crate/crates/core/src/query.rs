//! Request-level operations shared by the command line and the HTTP
//! service, so both produce the same bytes for the same request.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::export::{self, ExportError, ExportFormat, Orientation, TableStyle};
use crate::ingest::Format;
use crate::measures::{compute_all, Computed, Measure, MeasureError, PerformanceEstimate};
use crate::missingness::{self, MissingError};
use crate::model::Dataset;
use crate::plotdata::{self, PlotData, PlotError, PlotSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown DGM `{0}`")]
    UnknownDgm(String),
    #[error("{measure} cannot be computed: {reason}")]
    Unavailable {
        measure: Measure,
        reason: MeasureError,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error(transparent)]
    Missing(#[from] MissingError),
    #[error("invalid value `{value}` for `{name}`")]
    InvalidParameter { name: String, value: String },
}

/// Resolves a DGM selector: factor levels separated by commas, in mapping
/// order (`2`, or `50,low` for two factors).
pub fn parse_dgm(dataset: &Dataset, selector: &str) -> Result<Vec<String>, QueryError> {
    let wanted: Vec<String> = if selector.trim().is_empty() {
        Vec::new()
    } else {
        selector.split(',').map(|s| s.trim().to_string()).collect()
    };
    dataset
        .dgms()
        .into_iter()
        .find(|d| *d == wanted)
        .ok_or_else(|| QueryError::UnknownDgm(selector.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceQuery {
    pub dgm: Option<Vec<String>>,
    /// `None` means every measure the data supports.
    pub measures: Option<Vec<Measure>>,
}

/// Computes the selected measures. A measure requested explicitly that
/// cannot be computed for any stratum is an error; unrequested measures
/// that do not apply are dropped silently.
pub fn performance(dataset: &Dataset, query: &PerformanceQuery) -> Result<Computed, QueryError> {
    let selected = query
        .measures
        .clone()
        .unwrap_or_else(|| Measure::ALL.to_vec());
    let mut computed = compute_all(dataset, &selected);
    if let Some(d) = &query.dgm {
        computed.estimates.retain(|e| &e.stratum.dgm == d);
        computed.skipped.retain(|s| &s.stratum.dgm == d);
    }
    if query.measures.is_some() {
        for m in &selected {
            if !computed.estimates.iter().any(|e| e.measure == *m) {
                if let Some(s) = computed.skipped.iter().find(|s| s.measure == *m) {
                    return Err(QueryError::Unavailable {
                        measure: *m,
                        reason: s.reason.clone(),
                    });
                }
            }
        }
    }
    Ok(computed)
}

/// The performance table in the requested format: LaTeX tables per DGM,
/// or a tidy or wide delimited table.
pub fn render_performance(
    dataset: &Dataset,
    estimates: &[PerformanceEstimate],
    format: ExportFormat,
    style: &TableStyle,
) -> Result<Vec<u8>, QueryError> {
    let alpha = dataset.mapping.alpha;
    let out = match format.delimited() {
        None => export::to_latex(estimates, None, style, alpha)?.into_bytes(),
        Some(f) => match style.orientation {
            Orientation::Tidy => export::tidy_table(estimates, &dataset.mapping.dgm, f)?,
            Orientation::Wide => {
                export::wide_table(estimates, &dataset.mapping.dgm, style, alpha, f)?
            }
        },
    };
    Ok(out)
}

/// Missing-value table with the DGM factors and the method spelled out as
/// columns.
pub fn render_missing(dataset: &Dataset, format: Format) -> Result<Vec<u8>, QueryError> {
    let table = missingness::missing_table(dataset);
    let dgm_names = &dataset.mapping.dgm;
    let mut header = vec!["variable".to_string()];
    header.extend(dgm_names.iter().cloned());
    header.extend(
        [
            "method",
            "stratum_size",
            "n_missing",
            "prop_missing",
            "n_cumulative",
        ]
        .map(String::from),
    );
    let rows: Vec<Vec<Value>> = table
        .iter()
        .map(|s| {
            let mut r = vec![Value::String(s.variable.clone())];
            r.extend(s.stratum.dgm.iter().cloned().map(Value::String));
            r.push(Value::String(s.stratum.method.clone()));
            r.push(Value::from(s.stratum_size));
            r.push(Value::from(s.n_missing));
            r.push(Value::from(s.prop_missing));
            r.push(Value::from(s.n_cumulative));
            r
        })
        .collect();
    rows_to_bytes(&header, rows, format)
}

/// Missing-value table as a single LaTeX table. Proportions follow the
/// style's significant digits.
pub fn render_missing_latex(dataset: &Dataset, style: &TableStyle) -> Result<Vec<u8>, QueryError> {
    style.validate()?;
    let plain = TableStyle {
        include_mcse: false,
        ..style.clone()
    };
    let mut header = vec!["Variable".to_string()];
    header.extend(dataset.mapping.dgm.iter().cloned());
    header.extend(["Method", "N", "Missing", "Proportion", "Cumulative"].map(String::from));
    let mut rows = Vec::new();
    for s in missingness::missing_table(dataset) {
        let mut r = vec![s.variable.clone()];
        r.extend(s.stratum.dgm.iter().cloned());
        r.push(s.stratum.method.clone());
        r.push(s.stratum_size.to_string());
        r.push(s.n_missing.to_string());
        r.push(export::format_cell(s.prop_missing, None, &plain)?);
        r.push(s.n_cumulative.to_string());
        rows.push(r);
    }
    let caption = style
        .caption
        .clone()
        .unwrap_or_else(|| "Missing values".to_string());
    Ok(export::latex_table(&caption, &header, &rows).into_bytes())
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => export::full_precision(f),
            _ => n.to_string(),
        },
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn rows_to_bytes(
    header: &[String],
    rows: Vec<Vec<Value>>,
    format: Format,
) -> Result<Vec<u8>, QueryError> {
    match format.delimiter() {
        None => {
            let records: Vec<Value> = rows
                .into_iter()
                .map(|r| Value::Object(header.iter().cloned().zip(r).collect::<Map<_, _>>()))
                .collect();
            Ok(to_json(&records)?)
        }
        Some(delim) => {
            let mut w = csv::WriterBuilder::new()
                .delimiter(delim)
                .terminator(csv::Terminator::CRLF)
                .from_writer(Vec::new());
            let werr = |e: csv::Error| ExportError::Write(e.to_string());
            w.write_record(header).map_err(werr)?;
            for r in &rows {
                w.write_record(r.iter().map(cell_text)).map_err(werr)?;
            }
            Ok(w.into_inner()
                .map_err(|e| ExportError::Write(e.to_string()))?)
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, ExportError> {
    let mut out =
        serde_json::to_vec_pretty(value).map_err(|e| ExportError::Write(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Plot data for a spec. Performance plots compute the one measure they
/// need over the whole dataset first.
pub fn plot(dataset: &Dataset, spec: &PlotSpec) -> Result<PlotData, QueryError> {
    let estimates = match (spec.kind.needs_measure(), spec.measure) {
        (true, Some(m)) => compute_all(dataset, &[m]).estimates,
        _ => Vec::new(),
    };
    Ok(plotdata::plot_data(dataset, &estimates, spec)?)
}

fn number<T: FromStr>(name: &str, value: &str) -> Result<T, QueryError> {
    value.parse().map_err(|_| QueryError::InvalidParameter {
        name: name.to_string(),
        value: value.to_string(),
    })
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Builds a plot spec from named string parameters, as they arrive in a
/// query string or on the command line. Empty values are ignored, as are
/// names the spec does not know.
pub fn plot_spec_from_params(
    dataset: &Dataset,
    kind: &str,
    params: &BTreeMap<String, String>,
) -> Result<PlotSpec, QueryError> {
    let mut spec = PlotSpec::new(kind.parse()?);
    for (name, value) in params {
        let value = value.trim();
        if value.is_empty() {
            continue;
        }
        match name.as_str() {
            "measure" => spec.measure = Some(value.parse()?),
            "dgm" => spec.dgm = Some(parse_dgm(dataset, value)?),
            "methods" => spec.methods = list(value),
            "method_a" => spec.method_a = Some(value.to_string()),
            "method_b" => spec.method_b = Some(value.to_string()),
            "quantity" => spec.quantity = value.parse()?,
            "level" => spec.level = number(name, value)?,
            "factor_order" => spec.factor_order = list(value),
            "title" => spec.title = Some(value.to_string()),
            "xlab" => spec.xlab = Some(value.to_string()),
            "ylab" => spec.ylab = Some(value.to_string()),
            "theme" => spec.theme = value.parse()?,
            "width" => spec.width = number(name, value)?,
            "height" => spec.height = number(name, value)?,
            "dpi" => spec.dpi = number(name, value)?,
            _ => {}
        }
    }
    Ok(spec)
}

pub fn plot_json(dataset: &Dataset, spec: &PlotSpec) -> Result<Vec<u8>, QueryError> {
    Ok(to_json(&plot(dataset, spec)?)?)
}

pub fn plot_svg(dataset: &Dataset, spec: &PlotSpec) -> Result<Vec<u8>, QueryError> {
    Ok(plotdata::render_svg(spec, &plot(dataset, spec)?)?)
}
