//! Renderer-agnostic data for the estimate-level and performance-level
//! plot families, plus a static SVG emitter in [`svg`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::normal_quantile;
use crate::measures::{
    build_intervals, coverage_indicators, stratum_inputs, CriticalValueRule, Measure, MeasureError,
    PerformanceEstimate,
};
use crate::model::{compare_levels, Dataset, DgmKey, MethodKey, RepetitionRecord, StratumKey};

pub mod svg;

pub use svg::{convert_svg, render_svg};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("unknown plot kind `{0}`")]
    UnknownKind(String),
    #[error("unknown theme `{0}`")]
    UnknownTheme(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("the dataset has fewer than two methods to compare")]
    NeedTwoMethods,
    #[error("the two methods share no repetitions")]
    NoCommonRepetitions,
    #[error("{0} is not available for plotting")]
    MeasureUnavailable(Measure),
    #[error("this plot needs a performance measure")]
    MeasureRequired,
    #[error("confidence intervals cannot be built: {0}")]
    NoIntervals(MeasureError),
    #[error("nested loop plots need at least one DGM factor")]
    NoDgmFactors,
    #[error("unknown DGM factor `{0}`")]
    UnknownFactor(String),
    #[error("confidence level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("nothing to plot")]
    EmptyPlot,
    #[error("invalid plot size")]
    InvalidSize,
    #[error("svg conversion failed: {0}")]
    Converter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Scatter,
    BlandAltman,
    Ridgeline,
    DensityPairs,
    Forest,
    Lolly,
    Heat,
    Zip,
    NestedLoop,
}

impl PlotKind {
    pub const ALL: [PlotKind; 9] = [
        PlotKind::Scatter,
        PlotKind::BlandAltman,
        PlotKind::Ridgeline,
        PlotKind::DensityPairs,
        PlotKind::Forest,
        PlotKind::Lolly,
        PlotKind::Heat,
        PlotKind::Zip,
        PlotKind::NestedLoop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Scatter => "scatter",
            PlotKind::BlandAltman => "bland-altman",
            PlotKind::Ridgeline => "ridgeline",
            PlotKind::DensityPairs => "density-pairs",
            PlotKind::Forest => "forest",
            PlotKind::Lolly => "lolly",
            PlotKind::Heat => "heat",
            PlotKind::Zip => "zip",
            PlotKind::NestedLoop => "nested-loop",
        }
    }

    /// Kinds drawn from performance estimates rather than raw records.
    pub fn needs_measure(self) -> bool {
        matches!(
            self,
            PlotKind::Forest | PlotKind::Lolly | PlotKind::Heat | PlotKind::NestedLoop
        )
    }
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PlotError::UnknownKind(s.to_string()))
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theme {
    #[default]
    Default,
    Minimal,
    Dark,
}

impl FromStr for Theme {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Theme::Default),
            "minimal" => Ok(Theme::Minimal),
            "dark" => Ok(Theme::Dark),
            _ => Err(PlotError::UnknownTheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    #[default]
    Estimate,
    Se,
}

impl Quantity {
    fn of(self, r: &RepetitionRecord) -> Option<f64> {
        match self {
            Quantity::Estimate => r.estimate,
            Quantity::Se => r.se,
        }
    }
}

impl FromStr for Quantity {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "estimate" | "est" => Ok(Quantity::Estimate),
            "se" => Ok(Quantity::Se),
            _ => Err(PlotError::UnknownKind(s.to_string())),
        }
    }
}

/// What to plot and how it should look. Styling fields never change the
/// data, only the rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub measure: Option<Measure>,
    pub dgm: Option<Vec<String>>,
    pub methods: Vec<String>,
    pub method_a: Option<String>,
    pub method_b: Option<String>,
    pub quantity: Quantity,
    pub level: f64,
    pub factor_order: Vec<String>,
    pub title: Option<String>,
    pub xlab: Option<String>,
    pub ylab: Option<String>,
    pub theme: Theme,
    /// Device units (pixels at 96 dpi).
    pub width: f64,
    pub height: f64,
    pub dpi: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            kind: PlotKind::Scatter,
            measure: None,
            dgm: None,
            methods: Vec::new(),
            method_a: None,
            method_b: None,
            quantity: Quantity::Estimate,
            level: 0.95,
            factor_order: Vec::new(),
            title: None,
            xlab: None,
            ylab: None,
            theme: Theme::Default,
            width: 720.0,
            height: 480.0,
            dpi: 96.0,
        }
    }
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn with_measure(mut self, m: Measure) -> Self {
        self.measure = Some(m);
        self
    }

    pub fn with_dgm(mut self, dgm: Vec<String>) -> Self {
        self.dgm = Some(dgm);
        self
    }

    fn keeps(&self, key: &StratumKey) -> bool {
        self.dgm.as_ref().is_none_or(|d| &key.dgm == d)
            && (self.methods.is_empty() || self.methods.contains(&key.method))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    pub rep: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGroup {
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub points: Vec<PairPoint>,
    /// Repetitions of either method without a usable partner.
    pub n_unpaired: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsData {
    pub quantity: Quantity,
    pub method_a: String,
    pub method_b: String,
    pub groups: Vec<PairGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanPoint {
    pub rep: String,
    pub mean: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanGroup {
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub points: Vec<BlandAltmanPoint>,
    pub mean_diff: f64,
    pub sd_diff: Option<f64>,
    pub lower_limit: Option<f64>,
    pub upper_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanData {
    pub quantity: Quantity,
    pub method_a: String,
    pub method_b: String,
    pub groups: Vec<BlandAltmanGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeGroup {
    pub method: String,
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub sample: Vec<f64>,
    /// Absent when the group is too small or constant.
    pub density: Option<Density>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalItem {
    pub method: String,
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalData {
    pub measure: Measure,
    pub level: f64,
    pub items: Vec<IntervalItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatTile {
    pub method: String,
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatData {
    pub measure: Measure,
    pub tiles: Vec<HeatTile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipStripe {
    pub method: String,
    pub dgm: Vec<String>,
    pub rep: String,
    pub rank_percentile: f64,
    pub z: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub covers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipStratum {
    pub method: String,
    pub dgm: Vec<String>,
    pub dgm_label: String,
    pub n: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipData {
    pub strata: Vec<ZipStratum>,
    pub stripes: Vec<ZipStripe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSeries {
    pub method: String,
    /// One value per DGM position; `None` where the measure is missing.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRibbon {
    pub factor: String,
    pub levels: Vec<String>,
    /// Level of the factor at each position.
    pub level_at: Vec<String>,
    /// Step heights in data units, inside the band below the series.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedLoopSeries {
    pub measure: Measure,
    pub factors: Vec<String>,
    /// DGM combinations in plotting order, levels in `factors` order.
    pub dgm_order: Vec<Vec<String>>,
    pub value_steps: Vec<MethodSeries>,
    pub factor_ribbons: Vec<FactorRibbon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlotData {
    Scatter(PairsData),
    BlandAltman(BlandAltmanData),
    Ridgeline {
        quantity: Quantity,
        groups: Vec<RidgeGroup>,
    },
    DensityPairs(PairsData),
    Forest(IntervalData),
    Lolly(IntervalData),
    Heat(HeatData),
    Zip(ZipData),
    NestedLoop(NestedLoopSeries),
}

impl PlotData {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotData::Scatter(_) => PlotKind::Scatter,
            PlotData::BlandAltman(_) => PlotKind::BlandAltman,
            PlotData::Ridgeline { .. } => PlotKind::Ridgeline,
            PlotData::DensityPairs(_) => PlotKind::DensityPairs,
            PlotData::Forest(_) => PlotKind::Forest,
            PlotData::Lolly(_) => PlotKind::Lolly,
            PlotData::Heat(_) => PlotKind::Heat,
            PlotData::Zip(_) => PlotKind::Zip,
            PlotData::NestedLoop(_) => PlotKind::NestedLoop,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            PlotData::Scatter(p) | PlotData::DensityPairs(p) => {
                p.groups.iter().all(|g| g.points.is_empty())
            }
            PlotData::BlandAltman(b) => b.groups.iter().all(|g| g.points.is_empty()),
            PlotData::Ridgeline { groups, .. } => groups.iter().all(|g| g.sample.is_empty()),
            PlotData::Forest(d) | PlotData::Lolly(d) => d.items.is_empty(),
            PlotData::Heat(h) => h.tiles.is_empty(),
            PlotData::Zip(z) => z.stripes.is_empty(),
            PlotData::NestedLoop(n) => n.dgm_order.is_empty(),
        }
    }
}

fn rep_label(r: &RepetitionRecord, position: usize) -> String {
    r.rep_id
        .clone()
        .unwrap_or_else(|| (position + 1).to_string())
}

fn check_method(dataset: &Dataset, m: &str) -> Result<(), PlotError> {
    if dataset.methods().iter().any(|x| x == m) {
        Ok(())
    } else {
        Err(PlotError::UnknownMethod(m.to_string()))
    }
}

/// Pairs the values of two methods repetition by repetition within each
/// DGM. Repetitions are matched by id, or by position when the dataset has
/// no repetition column.
pub fn estimate_pairs(
    dataset: &Dataset,
    method_a: &str,
    method_b: &str,
    quantity: Quantity,
    dgm: Option<&[String]>,
) -> Result<PairsData, PlotError> {
    check_method(dataset, method_a)?;
    check_method(dataset, method_b)?;
    let strata = dataset.strata();
    let mut groups = Vec::new();
    for d in dataset.dgms() {
        if dgm.is_some_and(|f| f != d.as_slice()) {
            continue;
        }
        let recs = |m: &str| -> Vec<&RepetitionRecord> {
            strata
                .get(&StratumKey::new(d.clone(), m))
                .map(|idx| idx.iter().map(|&i| &dataset.records[i]).collect())
                .unwrap_or_default()
        };
        let (ra, rb) = (recs(method_a), recs(method_b));
        let mut lookup: HashMap<String, Option<f64>> = HashMap::new();
        for (i, r) in rb.iter().enumerate() {
            lookup
                .entry(rep_label(r, i))
                .or_insert_with(|| quantity.of(r));
        }
        let mut points = Vec::new();
        for (i, r) in ra.iter().enumerate() {
            let rep = rep_label(r, i);
            if let (Some(a), Some(Some(b))) = (quantity.of(r), lookup.get(&rep)) {
                points.push(PairPoint { rep, a, b: *b });
            }
        }
        let n_unpaired = ra.len() + rb.len() - 2 * points.len();
        groups.push(PairGroup {
            dgm_label: StratumKey::new(d.clone(), "").dgm_label(),
            dgm: d,
            points,
            n_unpaired,
        });
    }
    if groups.iter().all(|g| g.points.is_empty()) {
        return Err(PlotError::NoCommonRepetitions);
    }
    Ok(PairsData {
        quantity,
        method_a: method_a.to_string(),
        method_b: method_b.to_string(),
        groups,
    })
}

/// Mean/difference points with the mean difference and 1.96 SD limits of
/// agreement (limits need at least two pairs).
pub fn bland_altman(pairs: &PairsData) -> BlandAltmanData {
    let groups = pairs
        .groups
        .iter()
        .map(|g| {
            let points: Vec<BlandAltmanPoint> = g
                .points
                .iter()
                .map(|p| BlandAltmanPoint {
                    rep: p.rep.clone(),
                    mean: 0.5 * (p.a + p.b),
                    diff: p.a - p.b,
                })
                .collect();
            let diffs: Vec<f64> = points.iter().map(|p| p.diff).collect();
            let n = diffs.len();
            let mean_diff = if n == 0 {
                0.0
            } else {
                crate::measures::mean(&diffs)
            };
            let sd_diff = (n >= 2).then(|| crate::measures::sample_var(&diffs).sqrt());
            BlandAltmanGroup {
                dgm: g.dgm.clone(),
                dgm_label: g.dgm_label.clone(),
                points,
                mean_diff,
                sd_diff,
                lower_limit: sd_diff.map(|s| mean_diff - 1.96 * s),
                upper_limit: sd_diff.map(|s| mean_diff + 1.96 * s),
            }
        })
        .collect();
    BlandAltmanData {
        quantity: pairs.quantity,
        method_a: pairs.method_a.clone(),
        method_b: pairs.method_b.clone(),
        groups,
    }
}

pub const KDE_POINTS: usize = 128;

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5); the IQR term
/// is dropped when it is zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    if n < 2 {
        return None;
    }
    let sd = crate::measures::sample_var(sorted).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    (h > 0.0 && h.is_finite()).then_some(h)
}

/// Gaussian kernel density estimate on a 128-point grid spanning the
/// sample extended by four bandwidths on each side.
pub fn kde(sample: &[f64]) -> Option<Density> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = silverman_bandwidth(&sorted)?;
    let lo = sorted[0] - 4.0 * h;
    let hi = sorted[sorted.len() - 1] + 4.0 * h;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..KDE_POINTS).map(|i| lo + i as f64 * step).collect();
    let y = x
        .iter()
        .map(|&g| {
            sorted
                .iter()
                .map(|&s| {
                    let u = (g - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Some(Density { bandwidth: h, x, y })
}

/// Sorted sample and density for each (method × DGM) stratum.
pub fn ridgeline_data(dataset: &Dataset, quantity: Quantity, spec: &PlotSpec) -> Vec<RidgeGroup> {
    dataset
        .strata()
        .into_iter()
        .filter(|(key, _)| spec.keeps(key))
        .map(|(key, idx)| {
            let mut sample: Vec<f64> = idx
                .iter()
                .filter_map(|&i| quantity.of(&dataset.records[i]))
                .collect();
            sample.sort_by(f64::total_cmp);
            let density = kde(&sample);
            RidgeGroup {
                dgm_label: key.dgm_label(),
                method: key.method,
                dgm: key.dgm,
                sample,
                density,
            }
        })
        .collect()
}

/// Half-width close to `h` for which `value ± h'` are both exact, so the
/// interval is symmetric in floating point.
fn symmetric_half_width(value: f64, h: f64) -> f64 {
    let m = value.abs() + h;
    if m == 0.0 || !m.is_finite() {
        return h;
    }
    // Spacing of doubles just above `m`: value, h' and the bounds are all
    // multiples of it and below the next binade, hence representable.
    let e = m.log2().floor() as i32 + 1;
    let q = 2f64.powi(e - 52);
    (h / q).round() * q
}

/// Estimates of one measure with Monte Carlo confidence intervals
/// value ± z·mcse.
pub fn forest_lolly_data(
    estimates: &[PerformanceEstimate],
    measure: Measure,
    level: f64,
    spec: &PlotSpec,
) -> Result<IntervalData, PlotError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PlotError::InvalidLevel(level));
    }
    if !measure.has_mcse() {
        return Err(PlotError::MeasureUnavailable(measure));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let items: Vec<IntervalItem> = estimates
        .iter()
        .filter(|e| e.measure == measure && spec.keeps(&e.stratum))
        .filter_map(|e| {
            let h = symmetric_half_width(e.value, z * e.mcse?);
            Some(IntervalItem {
                method: e.stratum.method.clone(),
                dgm: e.stratum.dgm.clone(),
                dgm_label: e.stratum.dgm_label(),
                value: e.value,
                lower: e.value - h,
                upper: e.value + h,
            })
        })
        .collect();
    if items.is_empty() {
        return Err(PlotError::MeasureUnavailable(measure));
    }
    Ok(IntervalData {
        measure,
        level,
        items,
    })
}

pub fn heat_data(
    estimates: &[PerformanceEstimate],
    measure: Measure,
    spec: &PlotSpec,
) -> Result<HeatData, PlotError> {
    let tiles: Vec<HeatTile> = estimates
        .iter()
        .filter(|e| e.measure == measure && spec.keeps(&e.stratum))
        .map(|e| HeatTile {
            method: e.stratum.method.clone(),
            dgm: e.stratum.dgm.clone(),
            dgm_label: e.stratum.dgm_label(),
            value: e.value,
        })
        .collect();
    if tiles.is_empty() {
        return Err(PlotError::MeasureUnavailable(measure));
    }
    Ok(HeatData { measure, tiles })
}

/// Confidence intervals of every repetition, ranked within each stratum by
/// |estimate − truth| / SE, most extreme first (percentile 100). Without a
/// standard error the SE is recovered from the interval width.
pub fn zip_data(dataset: &Dataset, spec: &PlotSpec) -> Result<ZipData, PlotError> {
    let rule = CriticalValueRule::from_mapping(&dataset.mapping);
    let z_crit = normal_quantile(1.0 - dataset.mapping.alpha / 2.0);
    let mut strata = Vec::new();
    let mut stripes = Vec::new();
    for input in stratum_inputs(dataset) {
        if !spec.keeps(&input.stratum) {
            continue;
        }
        let intervals = build_intervals(&input, rule).map_err(PlotError::NoIntervals)?;
        let flags = coverage_indicators(&input, rule).map_err(PlotError::NoIntervals)?;
        let mut rows: Vec<ZipStripe> = Vec::new();
        for (i, covers) in flags.iter().enumerate() {
            let (Some(covers), Some((lower, upper))) = (*covers, intervals[i]) else {
                continue;
            };
            let truth = input.truth_at(i).expect("covered flag implies truth");
            let se = input
                .ses
                .as_ref()
                .and_then(|s| s[i])
                .unwrap_or((upper - lower) / (2.0 * z_crit));
            // A supplied interval may lack a point estimate; use its centre.
            let estimate = input.estimates[i].unwrap_or(0.5 * (lower + upper));
            let z = if se > 0.0 {
                (estimate - truth).abs() / se
            } else if estimate == truth {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(ZipStripe {
                method: input.stratum.method.clone(),
                dgm: input.stratum.dgm.clone(),
                rep: input.rep_ids[i]
                    .clone()
                    .unwrap_or_else(|| (i + 1).to_string()),
                rank_percentile: 0.0,
                z,
                estimate,
                lower,
                upper,
                truth,
                covers,
            });
        }
        // Stable sort keeps repetition order among ties.
        rows.sort_by(|a, b| b.z.total_cmp(&a.z));
        let n = rows.len();
        for (k, r) in rows.iter_mut().enumerate() {
            r.rank_percentile = (n - k) as f64 / n as f64 * 100.0;
        }
        let hits = rows.iter().filter(|r| r.covers).count();
        strata.push(ZipStratum {
            method: input.stratum.method.clone(),
            dgm: input.stratum.dgm.clone(),
            dgm_label: input.stratum.dgm_label(),
            n,
            coverage: if n == 0 {
                f64::NAN
            } else {
                hits as f64 / n as f64
            },
        });
        stripes.extend(rows);
    }
    Ok(ZipData { strata, stripes })
}

/// Series for a nested loop plot. DGM combinations are ordered
/// lexicographically with the factors in `factor_order` (the mapping order
/// when empty); the first factor varies slowest.
pub fn nested_loop_data(
    estimates: &[PerformanceEstimate],
    measure: Measure,
    dgm_names: &[String],
    factor_order: &[String],
    spec: &PlotSpec,
) -> Result<NestedLoopSeries, PlotError> {
    if dgm_names.is_empty() {
        return Err(PlotError::NoDgmFactors);
    }
    let factors: Vec<String> = if factor_order.is_empty() {
        dgm_names.to_vec()
    } else {
        factor_order.to_vec()
    };
    let perm: Vec<usize> = factors
        .iter()
        .map(|f| {
            dgm_names
                .iter()
                .position(|d| d == f)
                .ok_or_else(|| PlotError::UnknownFactor(f.clone()))
        })
        .collect::<Result<_, _>>()?;
    if perm.len() != dgm_names.len() {
        return Err(PlotError::UnknownFactor(format!(
            "factor order must list each of {} exactly once",
            dgm_names.join(", ")
        )));
    }
    let mut by_pos: BTreeMap<DgmKey, BTreeMap<MethodKey, f64>> = BTreeMap::new();
    for e in estimates
        .iter()
        .filter(|e| e.measure == measure && spec.keeps(&e.stratum))
    {
        let reordered: Vec<String> = perm.iter().map(|&j| e.stratum.dgm[j].clone()).collect();
        by_pos
            .entry(DgmKey(reordered))
            .or_default()
            .insert(MethodKey(e.stratum.method.clone()), e.value);
    }
    if by_pos.is_empty() {
        return Err(PlotError::MeasureUnavailable(measure));
    }
    let dgm_order: Vec<Vec<String>> = by_pos.keys().map(|k| k.0.clone()).collect();
    let mut methods: Vec<MethodKey> = by_pos.values().flat_map(|m| m.keys().cloned()).collect();
    methods.sort();
    methods.dedup();
    let value_steps: Vec<MethodSeries> = methods
        .iter()
        .map(|m| MethodSeries {
            method: m.0.clone(),
            values: by_pos.values().map(|row| row.get(m).copied()).collect(),
        })
        .collect();

    let all: Vec<f64> = value_steps
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .copied()
        .collect();
    let vmin = all.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut range = vmax - vmin;
    if range <= 0.0 {
        range = vmin.abs().max(1.0);
    }
    let band = 0.25 * range;
    let sub = band / factors.len() as f64;
    let factor_ribbons = factors
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let mut levels: Vec<String> = dgm_order.iter().map(|d| d[f].clone()).collect();
            levels.sort_by(|a, b| compare_levels(a, b));
            levels.dedup();
            let bottom = vmin - (f + 1) as f64 * sub;
            let level_at: Vec<String> = dgm_order.iter().map(|d| d[f].clone()).collect();
            let values = level_at
                .iter()
                .map(|l| {
                    let j = levels.iter().position(|x| x == l).expect("level listed");
                    if levels.len() == 1 {
                        bottom + 0.4 * sub
                    } else {
                        bottom + 0.1 * sub + 0.8 * sub * j as f64 / (levels.len() - 1) as f64
                    }
                })
                .collect();
            FactorRibbon {
                factor: name.clone(),
                levels,
                level_at,
                values,
            }
        })
        .collect();
    Ok(NestedLoopSeries {
        measure,
        factors,
        dgm_order,
        value_steps,
        factor_ribbons,
    })
}

fn default_methods(dataset: &Dataset, spec: &PlotSpec) -> Result<(String, String), PlotError> {
    let methods = dataset.methods();
    let a = match &spec.method_a {
        Some(a) => a.clone(),
        None => methods.first().cloned().ok_or(PlotError::NeedTwoMethods)?,
    };
    let b = match &spec.method_b {
        Some(b) => b.clone(),
        None => methods
            .iter()
            .find(|m| **m != a)
            .cloned()
            .ok_or(PlotError::NeedTwoMethods)?,
    };
    Ok((a, b))
}

/// Builds the data for `spec.kind`. Performance kinds read `estimates`,
/// which the caller computes from the same dataset.
pub fn plot_data(
    dataset: &Dataset,
    estimates: &[PerformanceEstimate],
    spec: &PlotSpec,
) -> Result<PlotData, PlotError> {
    let measure = || spec.measure.ok_or(PlotError::MeasureRequired);
    let dgm = spec.dgm.as_deref();
    Ok(match spec.kind {
        PlotKind::Scatter | PlotKind::DensityPairs | PlotKind::BlandAltman => {
            let (a, b) = default_methods(dataset, spec)?;
            let pairs = estimate_pairs(dataset, &a, &b, spec.quantity, dgm)?;
            match spec.kind {
                PlotKind::Scatter => PlotData::Scatter(pairs),
                PlotKind::DensityPairs => PlotData::DensityPairs(pairs),
                _ => PlotData::BlandAltman(bland_altman(&pairs)),
            }
        }
        PlotKind::Ridgeline => PlotData::Ridgeline {
            quantity: spec.quantity,
            groups: ridgeline_data(dataset, spec.quantity, spec),
        },
        PlotKind::Forest => {
            PlotData::Forest(forest_lolly_data(estimates, measure()?, spec.level, spec)?)
        }
        PlotKind::Lolly => {
            PlotData::Lolly(forest_lolly_data(estimates, measure()?, spec.level, spec)?)
        }
        PlotKind::Heat => PlotData::Heat(heat_data(estimates, measure()?, spec)?),
        PlotKind::Zip => PlotData::Zip(zip_data(dataset, spec)?),
        PlotKind::NestedLoop => PlotData::NestedLoop(nested_loop_data(
            estimates,
            measure()?,
            &dataset.mapping.dgm,
            &spec.factor_order,
            spec,
        )?),
    })
}
