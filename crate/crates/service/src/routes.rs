//! Request handlers. Each one parses parameters, takes the session lock
//! and delegates to the engine; nothing statistical happens here.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use simexplore_core::export::{self, ExportFormat, Orientation, TableStyle};
use simexplore_core::ingest::fetch::{fetch_url, FetchLimits};
use simexplore_core::ingest::{read_source, Format, SourceSpec};
use simexplore_core::measures::parse_measure_list;
use simexplore_core::missingness::{self, BarGrouping};
use simexplore_core::model::{apply_mapping, enumerate_strata, Column, VariableMapping};
use simexplore_core::plotdata::{self, PlotSpec};
use simexplore_core::query::{self, PerformanceQuery, QueryError};

use crate::error::ApiError;
use crate::session::{Session, SessionOptions};
use crate::AppState;

type Params = Query<BTreeMap<String, String>>;
type ApiResult<T> = Result<T, ApiError>;

/// Extra room for multipart framing and JSON quoting around a payload.
pub const BODY_SLACK: usize = 1 << 20;
const DEFAULT_PAGE: usize = 100;
const MAX_PAGE: usize = 10_000;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn param<'a>(params: &'a BTreeMap<String, String>, name: &str) -> Option<&'a str> {
    params.get(name).map(|s| s.trim()).filter(|s| !s.is_empty())
}

fn parse_param<T: std::str::FromStr>(
    params: &BTreeMap<String, String>,
    name: &str,
) -> ApiResult<Option<T>> {
    param(params, name)
        .map(|v| {
            v.parse().map_err(|_| {
                ApiError::bad_request(
                    "invalid_parameter",
                    format!("invalid value `{v}` for `{name}`"),
                )
                .with_detail(json!({ "name": name, "value": v }))
            })
        })
        .transpose()
}

fn bytes_response(content_type: &str, body: Vec<u8>) -> Response {
    (
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_str(content_type).unwrap(),
        )],
        body,
    )
        .into_response()
}

fn json_bytes(body: Vec<u8>) -> Response {
    bytes_response("application/json", body)
}

fn to_json<T: Serialize>(value: &T) -> ApiResult<Response> {
    Ok(json_bytes(query::to_json(value)?))
}

pub async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UploadBody {
    url: Option<String>,
    pasted: Option<String>,
    /// File name for the pasted text; selects csv or json instead of tsv.
    name: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct UploadReply {
    pub session_id: String,
    pub columns: Vec<Column>,
    pub n_rows: usize,
    pub source_name: Option<String>,
}

async fn read_multipart(req: Request, limit: usize) -> ApiResult<(SourceSpec, Vec<u8>)> {
    let multipart_error = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(limit)
        } else {
            ApiError::bad_request("invalid_request", e.body_text())
        }
    };
    let mut mp = Multipart::from_request(req, &())
        .await
        .map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    while let Some(mut field) = mp.next_field().await.map_err(multipart_error)? {
        let Some(name) = field.file_name().map(String::from) else {
            continue;
        };
        let mut data = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
            if data.len() + chunk.len() > limit {
                return Err(ApiError::too_large(limit));
            }
            data.extend_from_slice(&chunk);
        }
        return Ok((SourceSpec::file(name).with_max_bytes(limit), data));
    }
    Err(ApiError::bad_request(
        "invalid_request",
        "multipart body has no file part",
    ))
}

pub async fn upload(
    State(state): State<Arc<AppState>>,
    req: Request,
) -> ApiResult<Json<UploadReply>> {
    let limit = state.config.max_upload;
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (source, bytes) = if is_multipart {
        read_multipart(req, limit).await?
    } else {
        let body = to_bytes(req.into_body(), limit + BODY_SLACK)
            .await
            .map_err(|_| ApiError::too_large(limit))?;
        let body: UploadBody = serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
        match (body.url, body.pasted) {
            (Some(url), None) => {
                let limits = FetchLimits {
                    max_bytes: limit,
                    timeout: state.config.fetch_timeout,
                    ..FetchLimits::default()
                };
                let fetched = fetch_url(&url, &limits).await?;
                let name = body.name.or(fetched.declared_name);
                (SourceSpec::url(name).with_max_bytes(limit), fetched.bytes)
            }
            (None, Some(text)) => {
                let source = match body.name {
                    Some(n) => SourceSpec::file(n),
                    None => SourceSpec::pasted(),
                };
                (source.with_max_bytes(limit), text.into_bytes())
            }
            _ => {
                return Err(ApiError::bad_request(
                    "invalid_request",
                    "expected exactly one of `url` or `pasted`",
                ))
            }
        }
    };
    let name = source.declared_name.clone();
    let session = blocking(move || Ok(Session::new(read_source(&source, &bytes)?, name))).await?;
    let reply = UploadReply {
        session_id: String::new(),
        columns: session.columns.clone(),
        n_rows: session.raw.n_rows(),
        source_name: session.source_name.clone(),
    };
    let session_id = state.store.insert(session);
    Ok(Json(UploadReply {
        session_id,
        ..reply
    }))
}

pub async fn summary(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let s = lock.read().await;
    to_json(&json!({
        "session_id": s.id,
        "source_name": s.source_name,
        "columns": s.columns,
        "n_rows": s.raw.n_rows(),
        "mapping": s.mapping,
        "options": s.options,
    }))
}

pub async fn delete(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    if state.store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::session_not_found(&id))
    }
}

fn mapping_reply(ds: &simexplore_core::Dataset) -> Value {
    json!({
        "mapping": ds.mapping,
        "strata": enumerate_strata(ds),
        "n_records": ds.n_records(),
        "methods": ds.methods(),
        "dgms": ds.dgms(),
        "reference_method": ds.reference_method(),
    })
}

pub async fn put_mapping(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let mapping: VariableMapping = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
    let mut s = lock.write().await;
    let raw = s.raw.clone();
    let ds = blocking(move || Ok(apply_mapping((*raw).clone(), mapping)?)).await?;
    let reply = mapping_reply(&ds);
    s.mapping = Some(ds.mapping.clone());
    s.dataset = Some(Arc::new(ds));
    state.store.persist(&s);
    to_json(&reply)
}

pub async fn preview(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Response> {
    let offset: usize = parse_param(&params, "offset")?.unwrap_or(0);
    let limit: usize = parse_param(&params, "limit")?
        .unwrap_or(DEFAULT_PAGE)
        .min(MAX_PAGE);
    let lock = state.store.get(&id)?;
    let s = lock.read().await;
    let total = s.raw.n_rows();
    let rows = &s.raw.rows[offset.min(total)..offset.saturating_add(limit).min(total)];
    to_json(&json!({
        "offset": offset,
        "limit": limit,
        "total": total,
        "header": s.raw.header,
        "rows": rows,
    }))
}

fn performance_query(
    ds: &simexplore_core::Dataset,
    options: &SessionOptions,
    params: &BTreeMap<String, String>,
) -> ApiResult<PerformanceQuery> {
    let dgm = param(params, "dgm")
        .map(|d| query::parse_dgm(ds, d))
        .transpose()?;
    let measures = match param(params, "measures") {
        Some(list) => Some(parse_measure_list(list).map_err(QueryError::from)?),
        None => options.measures.clone(),
    };
    Ok(PerformanceQuery { dgm, measures })
}

/// The tidy JSON of the estimates; `simexplore analyze --format json`
/// writes the same bytes.
pub async fn performance(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let s = lock.read().await;
    let ds = s.dataset()?;
    let q = performance_query(&ds, &s.options, &params)?;
    let style = TableStyle {
        orientation: Orientation::Tidy,
        ..s.options.table.clone()
    };
    drop(s);
    let body = blocking(move || {
        let computed = query::performance(&ds, &q)?;
        Ok(query::render_performance(
            &ds,
            &computed.estimates,
            ExportFormat::Json,
            &style,
        )?)
    })
    .await?;
    Ok(json_bytes(body))
}

pub async fn missing(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let ds = lock.read().await.dataset()?;
    let body = blocking(move || Ok(query::render_missing(&ds, Format::JsonRecords)?)).await?;
    Ok(json_bytes(body))
}

pub async fn missing_view(
    State(state): State<Arc<AppState>>,
    Path((id, view)): Path<(String, String)>,
    Query(params): Params,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let ds = lock.read().await.dataset()?;
    let body = blocking(move || {
        let out = match view.as_str() {
            "bar" => {
                let by = match param(&params, "by").unwrap_or("method") {
                    "method" => BarGrouping::Method,
                    "dgm" => BarGrouping::Dgm,
                    other => {
                        return Err(ApiError::bad_request(
                            "invalid_parameter",
                            format!("invalid value `{other}` for `by`"),
                        ))
                    }
                };
                query::to_json(&missingness::missing_bar_data(&ds, by))?
            }
            "heat" => {
                let variable = param(&params, "variable").unwrap_or(&ds.mapping.estimate);
                query::to_json(&missingness::missing_heat_data(&ds, variable)?)?
            }
            "shadow" => {
                let x = param(&params, "x")
                    .unwrap_or(&ds.mapping.estimate)
                    .to_string();
                let y = match (param(&params, "y"), &ds.mapping.se) {
                    (Some(y), _) => y.to_string(),
                    (None, Some(se)) => se.clone(),
                    (None, None) => {
                        return Err(ApiError::bad_request(
                            "missing_parameter",
                            "`y` is required",
                        ))
                    }
                };
                query::to_json(&missingness::shadow_scatter_data(&ds, &x, &y)?)?
            }
            "matrix" => {
                let block_rows: usize = parse_param(&params, "block_rows")?.unwrap_or(1);
                query::to_json(&missingness::missing_matrix(&ds, block_rows))?
            }
            other => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_view",
                    format!("no missing-data view `{other}`"),
                ))
            }
        };
        Ok(out)
    })
    .await?;
    Ok(json_bytes(body))
}

pub async fn plot(
    State(state): State<Arc<AppState>>,
    Path((id, kind)): Path<(String, String)>,
    Query(params): Params,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let ds = lock.read().await.dataset()?;
    let body = blocking(move || {
        let spec = query::plot_spec_from_params(&ds, &kind, &params)?;
        Ok(query::plot_json(&ds, &spec)?)
    })
    .await?;
    Ok(json_bytes(body))
}

fn image_content_type(format: &str) -> &'static str {
    match format {
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "pdf" => "application/pdf",
        "jpeg" | "jpg" => "image/jpeg",
        "eps" | "ps" => "application/postscript",
        _ => "application/octet-stream",
    }
}

/// SVG of a plot, or another format through the configured converter.
/// The spec comes from a JSON body when one is sent, otherwise from the
/// query string; the kind in the path wins either way.
pub async fn render(
    State(state): State<Arc<AppState>>,
    Path((id, kind)): Path<(String, String)>,
    Query(mut params): Params,
    body: Bytes,
) -> ApiResult<Response> {
    let format = params
        .remove("format")
        .unwrap_or_else(|| "svg".to_string())
        .to_ascii_lowercase();
    if format.is_empty() || format.len() > 8 || !format.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(ApiError::bad_request(
            "invalid_parameter",
            format!("invalid format `{format}`"),
        ));
    }
    let converter = state.config.converter.clone();
    if format != "svg" && converter.is_none() {
        return Err(ApiError::new(
            StatusCode::NOT_IMPLEMENTED,
            "converter_unavailable",
            format!("no converter is configured for `{format}`"),
        ));
    }
    let lock = state.store.get(&id)?;
    let ds = lock.read().await.dataset()?;
    let content_type = image_content_type(&format);
    let out = blocking(move || {
        let spec = if body.iter().all(u8::is_ascii_whitespace) {
            query::plot_spec_from_params(&ds, &kind, &params)?
        } else {
            let kind = kind.parse().map_err(QueryError::from)?;
            let mut spec: PlotSpec = serde_json::from_slice(&body)
                .map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
            spec.kind = kind;
            spec
        };
        let svg = query::plot_svg(&ds, &spec)?;
        match converter {
            Some(cmd) if format != "svg" => {
                Ok(plotdata::convert_svg(&cmd, &svg, &format, spec.dpi)?)
            }
            _ => Ok(svg),
        }
    })
    .await?;
    Ok(bytes_response(content_type, out))
}

pub async fn export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Response> {
    let what = param(&params, "what").unwrap_or("table").to_string();
    let lock = state.store.get(&id)?;
    let s = lock.read().await;
    let default_format = match what.as_str() {
        "table" | "missing" => "latex",
        _ => "csv",
    };
    let format: ExportFormat = param(&params, "format")
        .unwrap_or(default_format)
        .parse()
        .map_err(|e: export::ExportError| {
            ApiError::bad_request("invalid_parameter", e.to_string())
        })?;
    let mut style = s.options.table.clone();
    if let Some(o) = param(&params, "orientation") {
        style.orientation = match o {
            "tidy" => Orientation::Tidy,
            "wide" => Orientation::Wide,
            other => {
                return Err(ApiError::bad_request(
                    "invalid_parameter",
                    format!("invalid value `{other}` for `orientation`"),
                ))
            }
        };
    }
    let stem;
    let body = match what.as_str() {
        "table" | "estimates" => {
            if what == "table" && format != ExportFormat::Latex {
                // The displayed table: measures by methods.
                style.orientation = Orientation::Wide;
            }
            let ds = s.dataset()?;
            let q = performance_query(&ds, &s.options, &params)?;
            stem = if what == "table" {
                "performance-table"
            } else {
                "performance-estimates"
            };
            blocking(move || {
                let computed = query::performance(&ds, &q)?;
                Ok(query::render_performance(
                    &ds,
                    &computed.estimates,
                    format,
                    &style,
                )?)
            })
            .await?
        }
        "missing" => {
            let ds = s.dataset()?;
            stem = "missing";
            blocking(move || match format.delimited() {
                None => Ok(query::render_missing_latex(&ds, &style)?),
                Some(f) => Ok(query::render_missing(&ds, f)?),
            })
            .await?
        }
        "data" => {
            let Some(f) = format.delimited() else {
                return Err(ApiError::bad_request(
                    "invalid_parameter",
                    "the dataset exports as csv, tsv or json",
                ));
            };
            let raw = s.raw.clone();
            stem = "data";
            blocking(move || Ok(export::dataset_to_delimited(&raw, f)?)).await?
        }
        other => {
            return Err(ApiError::bad_request(
                "invalid_parameter",
                format!("invalid value `{other}` for `what`"),
            ))
        }
    };
    let disposition = format!("attachment; filename=\"{stem}.{}\"", format.extension());
    Ok((
        [
            (
                header::CONTENT_TYPE,
                HeaderValue::from_static(format.content_type()),
            ),
            (
                header::CONTENT_DISPOSITION,
                HeaderValue::from_str(&disposition).unwrap(),
            ),
        ],
        body,
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsBody {
    #[serde(default)]
    table: Option<TableStyle>,
    /// Measure names or aliases; `null` restores the default of all.
    #[serde(default)]
    measures: Option<Option<Vec<String>>>,
    /// Rewrites the mapping's nominal level; needs a mapping.
    #[serde(default)]
    alpha: Option<f64>,
}

pub async fn get_options(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let s = lock.read().await;
    options_reply(&s)
}

fn options_reply(s: &Session) -> ApiResult<Response> {
    to_json(&json!({
        "table": s.options.table,
        "measures": s.options.measures,
        "alpha": s.mapping.as_ref().map(|m| m.alpha),
    }))
}

pub async fn put_options(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let lock = state.store.get(&id)?;
    let update: OptionsBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
    if let Some(t) = &update.table {
        t.validate()?;
    }
    let measures = match &update.measures {
        Some(Some(names)) => Some(Some(
            parse_measure_list(&names.join(",")).map_err(QueryError::from)?,
        )),
        Some(None) => Some(None),
        None => None,
    };
    let mut s = lock.write().await;
    if let Some(alpha) = update.alpha {
        let Some(mapping) = s.mapping.clone() else {
            return Err(ApiError::no_mapping());
        };
        let raw = s.raw.clone();
        let ds =
            blocking(move || Ok(apply_mapping((*raw).clone(), mapping.with_alpha(alpha))?)).await?;
        s.mapping = Some(ds.mapping.clone());
        s.dataset = Some(Arc::new(ds));
    }
    if let Some(t) = update.table {
        s.options.table = t;
    }
    if let Some(m) = measures {
        s.options.measures = m;
    }
    state.store.persist(&s);
    options_reply(&s)
}

pub const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>simexplore</title></head>\n<body><h1>simexplore</h1><p>The web interface is not installed. The JSON API is served under <code>/api</code>; see <code>/health</code>.</p></body></html>\n";

pub async fn placeholder() -> Response {
    (
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("text/html; charset=utf-8"),
        )],
        Body::from(PLACEHOLDER_INDEX),
    )
        .into_response()
}

pub async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}
