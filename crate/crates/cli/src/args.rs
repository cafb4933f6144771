use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simexplore_core::measures::{parse_measure_list, Measure};
use simexplore_core::model::{Truth, VariableMapping};
use simexplore_core::plotdata::{PlotKind, Quantity, Theme};

#[derive(Debug, Parser)]
#[command(
    name = "simexplore",
    version,
    about = "Explore and summarise Monte Carlo simulation-study results"
)]
#[command(
    after_help = "Exit codes: 0 success, 1 output error, 2 usage, 3 unreadable input or mapping, \
4 analysis error, 5 cannot bind the server address."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

// Parsed once per process; boxing the variants buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute performance measures and write a table.
    Analyze(AnalyzeArgs),
    /// Tabulate missing values by variable, DGM and method.
    Missing(MissingArgs),
    /// Write plot data as JSON or render an SVG.
    Plot(PlotArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Tsv,
    Json,
}

/// Input file and the variable mapping; one flag per mapping field.
#[derive(Debug, Args)]
pub struct Input {
    /// Results file (csv, tsv, json, optionally .gz or .zip), an http(s)
    /// URL, or `-` for standard input.
    pub file: String,
    /// Format of the input when its name does not say (stdin is tsv).
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
    /// Column with the point estimates.
    #[arg(long)]
    pub estimate: String,
    /// Column with the standard errors.
    #[arg(long)]
    pub se: Option<String>,
    /// Fixed true value of the estimand.
    #[arg(
        long = "true",
        value_name = "VALUE",
        allow_hyphen_values = true,
        conflicts_with = "true_col"
    )]
    pub truth: Option<f64>,
    /// Column with per-repetition true values.
    #[arg(long)]
    pub true_col: Option<String>,
    /// Column identifying the method.
    #[arg(long)]
    pub method: Option<String>,
    /// Reference method for relative precision (default: first level).
    #[arg(long)]
    pub reference: Option<String>,
    /// Columns identifying the data-generating mechanism.
    #[arg(long, value_delimiter = ',')]
    pub by: Vec<String>,
    /// Column with the repetition number.
    #[arg(long)]
    pub rep: Option<String>,
    /// Columns with interval bounds, used instead of estimate ± z·SE.
    #[arg(long, requires = "upper")]
    pub lower: Option<String>,
    #[arg(long, requires = "lower")]
    pub upper: Option<String>,
    /// Column with degrees of freedom for t-based intervals.
    #[arg(long)]
    pub df: Option<String>,
    /// Nominal significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

impl Input {
    pub fn mapping(&self) -> VariableMapping {
        let mut m = VariableMapping::new(&self.estimate).with_alpha(self.alpha);
        m.se = self.se.clone();
        m.truth = match (self.truth, &self.true_col) {
            (Some(v), _) => Some(Truth::Fixed(v)),
            (None, Some(c)) => Some(Truth::Column(c.clone())),
            (None, None) => None,
        };
        m.method = self.method.clone();
        m.reference_method = self.reference.clone();
        m.dgm = self.by.clone();
        m.rep = self.rep.clone();
        m.ci = self.lower.clone().zip(self.upper.clone());
        m.df = self.df.clone();
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Tsv,
    Json,
    Latex,
}

/// Comma-separated measure names or aliases, kept as one clap value.
#[derive(Debug, Clone)]
pub struct MeasureList(pub Vec<Measure>);

fn measure_list(s: &str) -> Result<MeasureList, String> {
    parse_measure_list(s)
        .map(MeasureList)
        .map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: Input,
    /// Comma-separated measures (default: all that apply).
    #[arg(long, value_parser = measure_list)]
    pub measures: Option<MeasureList>,
    /// Restrict to one DGM, given as its factor levels separated by commas.
    #[arg(long)]
    pub dgm: Option<String>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Delimited output as displayed (measures by methods) instead of tidy.
    #[arg(long)]
    pub wide: bool,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..=17))]
    pub sig_digits: u16,
    #[arg(long)]
    pub no_mcse: bool,
    /// LaTeX caption (default names the DGM).
    #[arg(long)]
    pub caption: Option<String>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MissingArgs {
    #[command(flatten)]
    pub input: Input,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..=17))]
    pub sig_digits: u16,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn plot_kind(s: &str) -> Result<PlotKind, String> {
    s.parse()
        .map_err(|e: simexplore_core::plotdata::PlotError| e.to_string())
}

fn measure(s: &str) -> Result<Measure, String> {
    s.parse()
        .map_err(|e: simexplore_core::MeasureError| e.to_string())
}

fn theme(s: &str) -> Result<Theme, String> {
    s.parse()
        .map_err(|e: simexplore_core::plotdata::PlotError| e.to_string())
}

fn quantity(s: &str) -> Result<Quantity, String> {
    s.parse()
        .map_err(|e: simexplore_core::plotdata::PlotError| e.to_string())
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub input: Input,
    /// scatter, bland-altman, ridgeline, density-pairs, forest, lolly,
    /// heat, zip or nested-loop.
    #[arg(long, value_parser = plot_kind)]
    pub kind: PlotKind,
    /// Performance measure for forest, lolly, heat and nested-loop plots.
    #[arg(long, value_parser = measure)]
    pub measure: Option<Measure>,
    #[arg(long)]
    pub dgm: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub method_a: Option<String>,
    #[arg(long)]
    pub method_b: Option<String>,
    #[arg(long, value_parser = quantity)]
    pub quantity: Option<Quantity>,
    /// Confidence level of forest and lolly intervals.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub factor_order: Vec<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub xlab: Option<String>,
    #[arg(long)]
    pub ylab: Option<String>,
    #[arg(long, value_parser = theme)]
    pub theme: Option<Theme>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    #[arg(long)]
    pub dpi: Option<f64>,
    /// Write the rendered SVG here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Write the plot data JSON here (the default, to standard output,
    /// when neither --svg nor --data is given).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SIMEXPLORE_PORT", default_value_t = simexplore_service::config::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = "SIMEXPLORE_BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// Largest accepted upload in bytes.
    #[arg(long, env = "SIMEXPLORE_MAX_UPLOAD", default_value_t = simexplore_core::ingest::DEFAULT_MAX_BYTES)]
    pub max_upload: usize,
    /// Idle session lifetime in seconds.
    #[arg(long, env = "SIMEXPLORE_TTL", default_value_t = 86_400)]
    pub ttl: u64,
    #[arg(long, env = "SIMEXPLORE_MAX_SESSIONS", default_value_t = 64)]
    pub max_sessions: usize,
    /// Keep sessions on disk here so they survive restarts.
    #[arg(long, env = "SIMEXPLORE_SPILL")]
    pub spill: Option<PathBuf>,
    /// Command converting SVG (stdin) to another format (stdout), with
    /// `{format}` and `{dpi}` placeholders.
    #[arg(long, env = "SIMEXPLORE_CONVERTER")]
    pub converter: Option<String>,
    /// Directory with the web UI build.
    #[arg(long, env = "SIMEXPLORE_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}
