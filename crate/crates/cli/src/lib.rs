//! Batch front end mirroring the HTTP service.
//!
//! Tables and plot data go through the same `query` functions the service
//! uses, so `analyze --format json` writes exactly the body of
//! `GET /api/datasets/{id}/performance` for the same data and mapping.
//! The `simexplore` binary parses arguments and calls [`run`].

pub mod args;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use simexplore_core::export::{ExportFormat, Orientation, TableStyle};
use simexplore_core::ingest::fetch::{fetch_url, FetchError, FetchLimits};
use simexplore_core::ingest::{read_source, Format, IngestError, SourceSpec};
use simexplore_core::model::{apply_mapping, Dataset, ModelError};
use simexplore_core::plotdata::PlotSpec;
use simexplore_core::query::{self, PerformanceQuery, QueryError};
use simexplore_service::{AppState, ServiceConfig};

pub use args::Cli;
use args::{
    AnalyzeArgs, Command, Input, InputFormat, MissingArgs, PlotArgs, ServeArgs, TableFormat,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Mapping(#[from] ModelError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } | CliError::Serve(_) => 1,
            CliError::Read { .. }
            | CliError::Ingest(_)
            | CliError::Fetch(_)
            | CliError::Mapping(_) => 3,
            CliError::Query(_) => 4,
            CliError::Bind { .. } => 5,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Missing(m) => missing(m),
        Command::Plot(p) => plot(p),
        Command::Serve(s) => serve(s),
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
}

fn read_input(input: &Input) -> Result<Dataset, CliError> {
    let declared = input.input_format.map(|f| match f {
        InputFormat::Csv => "input.csv",
        InputFormat::Tsv => "input.tsv",
        InputFormat::Json => "input.json",
    });
    let (source, bytes) = if input.file.starts_with("http://") || input.file.starts_with("https://")
    {
        let fetched = runtime().block_on(fetch_url(&input.file, &FetchLimits::default()))?;
        let name = declared.map(String::from).or(fetched.declared_name);
        (SourceSpec::url(name), fetched.bytes)
    } else if input.file == "-" {
        let mut bytes = Vec::new();
        std::io::stdin()
            .read_to_end(&mut bytes)
            .map_err(|source| CliError::Read {
                path: "standard input".into(),
                source,
            })?;
        let source = match declared {
            Some(n) => SourceSpec::file(n),
            None => SourceSpec::pasted(),
        };
        (source, bytes)
    } else {
        let bytes = std::fs::read(&input.file).map_err(|source| CliError::Read {
            path: input.file.clone(),
            source,
        })?;
        let name = declared.map(String::from).unwrap_or_else(|| {
            Path::new(&input.file)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        (SourceSpec::file(name), bytes)
    };
    let raw = read_source(&source, &bytes)?;
    Ok(apply_mapping(raw, input.mapping())?)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| CliError::Write {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                // A closed pipe (`| head`) is the reader's choice, not a failure.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(|source| CliError::Write {
                    path: "standard output".into(),
                    source,
                }),
            }
        }
    }
}

fn export_format(f: TableFormat) -> ExportFormat {
    match f {
        TableFormat::Csv => ExportFormat::Csv,
        TableFormat::Tsv => ExportFormat::Tsv,
        TableFormat::Json => ExportFormat::Json,
        TableFormat::Latex => ExportFormat::Latex,
    }
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let bytes = analyze_output(&a)?;
    write_output(a.out.as_deref(), &bytes)
}

/// The bytes `analyze` writes.
pub fn analyze_output(a: &AnalyzeArgs) -> Result<Vec<u8>, CliError> {
    let ds = read_input(&a.input)?;
    let dgm = a
        .dgm
        .as_deref()
        .map(|d| query::parse_dgm(&ds, d))
        .transpose()?;
    let measures = a.measures.clone().map(|m| m.0);
    let computed = query::performance(&ds, &PerformanceQuery { dgm, measures })?;
    let style = TableStyle {
        sig_digits: a.sig_digits as usize,
        include_mcse: !a.no_mcse,
        caption: a.caption.clone(),
        orientation: if a.wide {
            Orientation::Wide
        } else {
            Orientation::Tidy
        },
    };
    let bytes =
        query::render_performance(&ds, &computed.estimates, export_format(a.format), &style)?;
    for s in &computed.skipped {
        log::info!("{} skipped for {:?}: {}", s.measure, s.stratum, s.reason);
    }
    Ok(bytes)
}

fn missing(m: MissingArgs) -> Result<(), CliError> {
    let ds = read_input(&m.input)?;
    let bytes = match m.format {
        TableFormat::Csv => query::render_missing(&ds, Format::Csv)?,
        TableFormat::Tsv => query::render_missing(&ds, Format::Tsv)?,
        TableFormat::Json => query::render_missing(&ds, Format::JsonRecords)?,
        TableFormat::Latex => {
            let style = TableStyle {
                sig_digits: m.sig_digits as usize,
                ..TableStyle::default()
            };
            query::render_missing_latex(&ds, &style)?
        }
    };
    write_output(m.out.as_deref(), &bytes)
}

/// The plot flags as the named parameters the service accepts, so both
/// build the spec the same way.
fn plot_params(p: &PlotArgs) -> BTreeMap<String, String> {
    let mut params = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            params.insert(k.to_string(), v);
        }
    };
    put("measure", p.measure.map(|m| m.name().to_string()));
    put("dgm", p.dgm.clone());
    put(
        "methods",
        (!p.methods.is_empty()).then(|| p.methods.join(",")),
    );
    put("method_a", p.method_a.clone());
    put("method_b", p.method_b.clone());
    put(
        "quantity",
        p.quantity.map(|q| format!("{q:?}").to_lowercase()),
    );
    put("level", p.level.map(|v| v.to_string()));
    put(
        "factor_order",
        (!p.factor_order.is_empty()).then(|| p.factor_order.join(",")),
    );
    put("title", p.title.clone());
    put("xlab", p.xlab.clone());
    put("ylab", p.ylab.clone());
    put("theme", p.theme.map(|t| format!("{t:?}").to_lowercase()));
    put("width", p.width.map(|v| v.to_string()));
    put("height", p.height.map(|v| v.to_string()));
    put("dpi", p.dpi.map(|v| v.to_string()));
    params
}

fn plot(p: PlotArgs) -> Result<(), CliError> {
    let ds = read_input(&p.input)?;
    let spec: PlotSpec = query::plot_spec_from_params(&ds, p.kind.name(), &plot_params(&p))?;
    if let Some(path) = &p.svg {
        write_output(Some(path), &query::plot_svg(&ds, &spec)?)?;
    }
    match (&p.data, &p.svg) {
        (Some(path), _) => write_output(Some(path), &query::plot_json(&ds, &spec)?),
        (None, None) => write_output(None, &query::plot_json(&ds, &spec)?),
        (None, Some(_)) => Ok(()),
    }
}

fn serve(s: ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        bind: s.bind,
        port: s.port,
        max_upload: s.max_upload,
        session_ttl: Duration::from_secs(s.ttl),
        max_sessions: s.max_sessions,
        spill_dir: s.spill,
        converter: s.converter,
        static_dir: s.static_dir,
        ..ServiceConfig::default()
    };
    let addr = config.addr();
    let state = Arc::new(AppState::new(config.clone()).map_err(CliError::Serve)?);
    runtime().block_on(async move {
        let listener =
            simexplore_service::bind(&config)
                .await
                .map_err(|source| CliError::Bind {
                    addr: addr.to_string(),
                    source,
                })?;
        eprintln!(
            "simexplore: listening on http://{}",
            listener.local_addr().map_err(CliError::Serve)?
        );
        simexplore_service::serve(listener, state)
            .await
            .map_err(CliError::Serve)
    })
}
