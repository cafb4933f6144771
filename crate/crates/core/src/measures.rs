//! Performance measures and their Monte Carlo standard errors.
//!
//! Every measure works on one stratum's [`PerformanceInput`]. Missing
//! entries are dropped pairwise per measure and the number of contributing
//! repetitions is reported as `n_used`. With a single contributing
//! repetition, point summaries are still returned but every spread and MCSE
//! is withheld (`None`).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist;
use crate::model::{Dataset, RepetitionRecord, StratumKey, Truth, VariableMapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Bias,
    EmpSe,
    ModSe,
    Mse,
    Coverage,
    Becover,
    Power,
    Relprec,
    MeanEst,
    MedianEst,
    MeanSqErr,
    MedianSqErr,
}

impl Measure {
    /// All measures in output order.
    pub const ALL: [Measure; 12] = [
        Measure::Bias,
        Measure::EmpSe,
        Measure::ModSe,
        Measure::Mse,
        Measure::Coverage,
        Measure::Becover,
        Measure::Power,
        Measure::Relprec,
        Measure::MeanEst,
        Measure::MedianEst,
        Measure::MeanSqErr,
        Measure::MedianSqErr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Bias => "bias",
            Measure::EmpSe => "emp_se",
            Measure::ModSe => "mod_se",
            Measure::Mse => "mse",
            Measure::Coverage => "coverage",
            Measure::Becover => "becover",
            Measure::Power => "power",
            Measure::Relprec => "relprec",
            Measure::MeanEst => "mean_est",
            Measure::MedianEst => "median_est",
            Measure::MeanSqErr => "mean_sq_err",
            Measure::MedianSqErr => "median_sq_err",
        }
    }

    /// Human-readable row label for tables.
    pub fn label(self, alpha: f64) -> String {
        let level = trim_number((1.0 - alpha) * 100.0);
        let test = trim_number(alpha * 100.0);
        match self {
            Measure::Bias => "Bias in point estimate".into(),
            Measure::EmpSe => "Empirical standard error".into(),
            Measure::ModSe => "Model-based standard error".into(),
            Measure::Mse => "Mean squared error".into(),
            Measure::Coverage => format!("Coverage of nominal {level}% confidence interval"),
            Measure::Becover => {
                format!("Bias-eliminated coverage of nominal {level}% confidence interval")
            }
            Measure::Power => format!("Power of {test}% level test"),
            Measure::Relprec => "% gain in precision relative to reference method".into(),
            Measure::MeanEst => "Mean estimate".into(),
            Measure::MedianEst => "Median estimate".into(),
            Measure::MeanSqErr => "Mean squared error of estimates".into(),
            Measure::MedianSqErr => "Median squared error of estimates".into(),
        }
    }

    /// Measures for which an MCSE is defined.
    pub fn has_mcse(self) -> bool {
        !matches!(self, Measure::MedianEst | Measure::MedianSqErr)
    }

    pub fn is_proportion(self) -> bool {
        matches!(self, Measure::Coverage | Measure::Becover | Measure::Power)
    }
}

fn trim_number(x: f64) -> String {
    let s = format!("{:.6}", x);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "empse" => "emp_se",
            "modelse" | "modse" | "model_se" => "mod_se",
            "cover" => "coverage",
            "relative_precision" => "relprec",
            "mean" => "mean_est",
            "median" => "median_est",
            other => other,
        };
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| MeasureError::UnknownMeasure(s.to_string()))
    }
}

/// Parses a comma-separated measure list.
pub fn parse_measure_list(list: &str) -> Result<Vec<Measure>, MeasureError> {
    let mut out: Vec<Measure> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = item.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("no true value available")]
    NoTruth,
    #[error("no standard errors available")]
    NoSes,
    #[error("confidence intervals cannot be constructed")]
    NoIntervals,
    #[error("ingredients for {0} are missing")]
    MissingIngredient(Measure),
    #[error("no reference method available")]
    NoReference,
    #[error("no repetitions pair up with the reference method")]
    UnpairedRepetitions,
    #[error("{measure} is undefined with {n} usable repetitions")]
    Undefined { measure: Measure, n: usize },
    #[error("aligned input `{0}` has the wrong length")]
    LengthMismatch(&'static str),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("unknown performance measure `{0}`")]
    UnknownMeasure(String),
}

/// How per-repetition confidence intervals are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalValueRule {
    Normal,
    TPerRepetition,
    SuppliedBounds,
}

impl CriticalValueRule {
    pub fn from_mapping(mapping: &VariableMapping) -> Self {
        if mapping.ci.is_some() {
            CriticalValueRule::SuppliedBounds
        } else if mapping.df.is_some() {
            CriticalValueRule::TPerRepetition
        } else {
            CriticalValueRule::Normal
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthValues {
    Unknown,
    Fixed(f64),
    PerRepetition(Vec<Option<f64>>),
}

/// One stratum's aligned per-repetition inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceInput {
    pub stratum: StratumKey,
    pub rep_ids: Vec<Option<String>>,
    pub estimates: Vec<Option<f64>>,
    pub ses: Option<Vec<Option<f64>>>,
    pub truth: TruthValues,
    pub lowers: Option<Vec<Option<f64>>>,
    pub uppers: Option<Vec<Option<f64>>>,
    pub dfs: Option<Vec<Option<f64>>>,
    pub alpha: f64,
}

impl PerformanceInput {
    pub fn new(estimates: Vec<Option<f64>>) -> Self {
        let n = estimates.len();
        Self {
            stratum: StratumKey::new(Vec::new(), crate::model::IMPLICIT_METHOD),
            rep_ids: vec![None; n],
            estimates,
            ses: None,
            truth: TruthValues::Unknown,
            lowers: None,
            uppers: None,
            dfs: None,
            alpha: crate::model::DEFAULT_ALPHA,
        }
    }

    /// Convenience constructor from complete estimates.
    pub fn from_values(estimates: &[f64]) -> Self {
        Self::new(estimates.iter().copied().map(Some).collect())
    }

    pub fn with_ses(mut self, ses: &[f64]) -> Self {
        self.ses = Some(ses.iter().copied().map(Some).collect());
        self
    }

    pub fn with_truth(mut self, theta: f64) -> Self {
        self.truth = TruthValues::Fixed(theta);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_rep_ids<S: ToString>(mut self, ids: &[S]) -> Self {
        self.rep_ids = ids.iter().map(|s| Some(s.to_string())).collect();
        self
    }

    pub fn with_stratum(mut self, stratum: StratumKey) -> Self {
        self.stratum = stratum;
        self
    }

    /// Builds the input for one stratum from mapped records.
    pub fn from_records(
        stratum: StratumKey,
        records: &[&RepetitionRecord],
        mapping: &VariableMapping,
    ) -> Self {
        let col = |f: fn(&RepetitionRecord) -> Option<f64>| records.iter().map(|r| f(r)).collect();
        Self {
            stratum,
            rep_ids: records.iter().map(|r| r.rep_id.clone()).collect(),
            estimates: col(|r| r.estimate),
            ses: mapping.se.as_ref().map(|_| col(|r| r.se)),
            truth: match &mapping.truth {
                None => TruthValues::Unknown,
                Some(Truth::Fixed(v)) => TruthValues::Fixed(*v),
                Some(Truth::Column(_)) => TruthValues::PerRepetition(col(|r| r.truth)),
            },
            lowers: mapping.ci.as_ref().map(|_| col(|r| r.lower)),
            uppers: mapping.ci.as_ref().map(|_| col(|r| r.upper)),
            dfs: mapping.df.as_ref().map(|_| col(|r| r.df)),
            alpha: mapping.alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let n = self.len();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MeasureError::InvalidAlpha(self.alpha));
        }
        let check = |v: &Option<Vec<Option<f64>>>, name| match v {
            Some(v) if v.len() != n => Err(MeasureError::LengthMismatch(name)),
            _ => Ok(()),
        };
        check(&self.ses, "ses")?;
        check(&self.lowers, "lowers")?;
        check(&self.uppers, "uppers")?;
        check(&self.dfs, "dfs")?;
        if self.rep_ids.len() != n {
            return Err(MeasureError::LengthMismatch("rep_ids"));
        }
        if let TruthValues::PerRepetition(t) = &self.truth {
            if t.len() != n {
                return Err(MeasureError::LengthMismatch("truth"));
            }
        }
        Ok(())
    }

    fn has_truth(&self) -> bool {
        !matches!(self.truth, TruthValues::Unknown)
    }

    pub fn truth_at(&self, i: usize) -> Option<f64> {
        match &self.truth {
            TruthValues::Unknown => None,
            TruthValues::Fixed(v) => Some(*v),
            TruthValues::PerRepetition(t) => t[i],
        }
    }

    fn at(v: &Option<Vec<Option<f64>>>, i: usize) -> Option<f64> {
        v.as_ref().and_then(|v| v[i])
    }

    fn observed_estimates(&self) -> Vec<f64> {
        self.estimates.iter().flatten().copied().collect()
    }

    /// Estimation errors θ̂_i − θ_i over repetitions where both exist.
    fn errors(&self) -> Result<Vec<f64>, MeasureError> {
        if !self.has_truth() {
            return Err(MeasureError::NoTruth);
        }
        Ok((0..self.len())
            .filter_map(|i| Some(self.estimates[i]? - self.truth_at(i)?))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    pub measure: Measure,
    pub stratum: StratumKey,
    pub value: f64,
    pub mcse: Option<f64>,
    pub n_used: usize,
}

/// Arithmetic mean with one refinement pass, so identical values give
/// their own value back exactly.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    m + xs.iter().map(|x| x - m).sum::<f64>() / n
}

/// Sample variance with the n−1 denominator (two-pass).
pub(crate) fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn estimate(
    input: &PerformanceInput,
    measure: Measure,
    value: f64,
    mcse: Option<f64>,
    n_used: usize,
) -> PerformanceEstimate {
    PerformanceEstimate {
        measure,
        stratum: input.stratum.clone(),
        value,
        mcse,
        n_used,
    }
}

fn require(measure: Measure, n: usize, min: usize) -> Result<(), MeasureError> {
    if n < min {
        Err(MeasureError::Undefined { measure, n })
    } else {
        Ok(())
    }
}

pub fn bias(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let (value, spread_base, n) = match &input.truth {
        TruthValues::Unknown => return Err(MeasureError::NoTruth),
        TruthValues::Fixed(theta) => {
            let est = input.observed_estimates();
            require(Measure::Bias, est.len(), 1)?;
            (mean(&est) - theta, est.clone(), est.len())
        }
        TruthValues::PerRepetition(_) => {
            let err = input.errors()?;
            require(Measure::Bias, err.len(), 1)?;
            (mean(&err), err.clone(), err.len())
        }
    };
    let mcse = (n >= 2).then(|| (sample_var(&spread_base) / n as f64).sqrt());
    Ok(estimate(input, Measure::Bias, value, mcse, n))
}

pub fn empirical_se(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let est = input.observed_estimates();
    let n = est.len();
    require(Measure::EmpSe, n, 2)?;
    let s = sample_var(&est).sqrt();
    let mcse = s / (2.0 * (n as f64 - 1.0)).sqrt();
    Ok(estimate(input, Measure::EmpSe, s, Some(mcse), n))
}

pub fn model_se(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let ses = input.ses.as_ref().ok_or(MeasureError::NoSes)?;
    let sq: Vec<f64> = ses.iter().flatten().map(|s| s * s).collect();
    let n = sq.len();
    require(Measure::ModSe, n, 1)?;
    let value = mean(&sq).sqrt();
    let mcse = (n >= 2).then(|| {
        let var = sample_var(&sq);
        if var == 0.0 {
            0.0
        } else {
            (var / (4.0 * n as f64 * value * value)).sqrt()
        }
    });
    Ok(estimate(input, Measure::ModSe, value, mcse, n))
}

fn mse_parts(input: &PerformanceInput) -> Result<(f64, Option<f64>, usize), MeasureError> {
    let err = input.errors()?;
    let n = err.len();
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    if n == 0 {
        return Ok((f64::NAN, None, 0));
    }
    let value = mean(&sq);
    let mcse = (n >= 2).then(|| {
        let ss: f64 = sq.iter().map(|s| (s - value) * (s - value)).sum();
        (ss / (n as f64 * (n as f64 - 1.0))).sqrt()
    });
    Ok((value, mcse, n))
}

pub fn mse(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let (value, mcse, n) = mse_parts(input)?;
    require(Measure::Mse, n, 1)?;
    Ok(estimate(input, Measure::Mse, value, mcse, n))
}

/// Mean and median estimate plus mean and median squared error. Summaries
/// whose ingredients are missing are returned as errors in their slot.
pub fn mean_median_summaries(
    input: &PerformanceInput,
) -> [Result<PerformanceEstimate, MeasureError>; 4] {
    [
        mean_estimate(input),
        median_estimate(input),
        mean_squared_error(input),
        median_squared_error(input),
    ]
}

pub fn mean_estimate(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let est = input.observed_estimates();
    let n = est.len();
    require(Measure::MeanEst, n, 1)?;
    let mcse = (n >= 2).then(|| (sample_var(&est) / n as f64).sqrt());
    Ok(estimate(input, Measure::MeanEst, mean(&est), mcse, n))
}

pub fn median_estimate(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let est = input.observed_estimates();
    require(Measure::MedianEst, est.len(), 1)?;
    Ok(estimate(
        input,
        Measure::MedianEst,
        median(&est),
        None,
        est.len(),
    ))
}

pub fn mean_squared_error(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let (value, mcse, n) = mse_parts(input)?;
    require(Measure::MeanSqErr, n, 1)?;
    Ok(estimate(input, Measure::MeanSqErr, value, mcse, n))
}

pub fn median_squared_error(input: &PerformanceInput) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let sq: Vec<f64> = input.errors()?.iter().map(|e| e * e).collect();
    require(Measure::MedianSqErr, sq.len(), 1)?;
    Ok(estimate(
        input,
        Measure::MedianSqErr,
        median(&sq),
        None,
        sq.len(),
    ))
}

/// Per-repetition intervals; `None` where an ingredient is missing.
pub fn build_intervals(
    input: &PerformanceInput,
    rule: CriticalValueRule,
) -> Result<Vec<Option<(f64, f64)>>, MeasureError> {
    input.validate()?;
    let n = input.len();
    match rule {
        CriticalValueRule::Normal => {
            if input.ses.is_none() {
                return Err(MeasureError::NoIntervals);
            }
            let z = dist::critical_value(input.alpha, None);
            Ok((0..n)
                .map(|i| {
                    let est = input.estimates[i]?;
                    let se = PerformanceInput::at(&input.ses, i)?;
                    Some((est - z * se, est + z * se))
                })
                .collect())
        }
        CriticalValueRule::TPerRepetition => {
            if input.ses.is_none() || input.dfs.is_none() {
                return Err(MeasureError::NoIntervals);
            }
            let mut cache: HashMap<u64, f64> = HashMap::new();
            Ok((0..n)
                .map(|i| {
                    let est = input.estimates[i]?;
                    let se = PerformanceInput::at(&input.ses, i)?;
                    let df = PerformanceInput::at(&input.dfs, i)?;
                    let t = *cache
                        .entry(df.to_bits())
                        .or_insert_with(|| dist::critical_value(input.alpha, Some(df)));
                    Some((est - t * se, est + t * se))
                })
                .collect())
        }
        CriticalValueRule::SuppliedBounds => {
            if input.lowers.is_none() || input.uppers.is_none() {
                return Err(MeasureError::NoIntervals);
            }
            Ok((0..n)
                .map(|i| {
                    Some((
                        PerformanceInput::at(&input.lowers, i)?,
                        PerformanceInput::at(&input.uppers, i)?,
                    ))
                })
                .collect())
        }
    }
}

/// Whether a closed interval contains `target`.
pub fn covers(interval: (f64, f64), target: f64) -> bool {
    interval.0 <= target && target <= interval.1
}

fn proportion(
    input: &PerformanceInput,
    measure: Measure,
    hits: usize,
    n: usize,
) -> Result<PerformanceEstimate, MeasureError> {
    require(measure, n, 1)?;
    let p = hits as f64 / n as f64;
    let mcse = (n >= 2).then(|| (p * (1.0 - p) / n as f64).sqrt());
    Ok(estimate(input, measure, p, mcse, n))
}

/// Per-repetition coverage indicators against the truth, aligned with the
/// input; `None` where the interval or truth is missing.
pub fn coverage_indicators(
    input: &PerformanceInput,
    rule: CriticalValueRule,
) -> Result<Vec<Option<bool>>, MeasureError> {
    if !input.has_truth() {
        return Err(MeasureError::NoTruth);
    }
    let intervals = build_intervals(input, rule)?;
    Ok(intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| Some(covers((*iv)?, input.truth_at(i)?)))
        .collect())
}

pub fn coverage(
    input: &PerformanceInput,
    rule: CriticalValueRule,
) -> Result<PerformanceEstimate, MeasureError> {
    let flags = coverage_indicators(input, rule)?;
    let used: Vec<bool> = flags.into_iter().flatten().collect();
    let hits = used.iter().filter(|c| **c).count();
    proportion(input, Measure::Coverage, hits, used.len())
}

pub fn bias_eliminated_coverage(
    input: &PerformanceInput,
    rule: CriticalValueRule,
) -> Result<PerformanceEstimate, MeasureError> {
    let intervals = build_intervals(input, rule)?;
    let est = input.observed_estimates();
    require(Measure::Becover, est.len(), 1)?;
    let centre = mean(&est);
    let used: Vec<bool> = intervals
        .iter()
        .flatten()
        .map(|iv| covers(*iv, centre))
        .collect();
    let hits = used.iter().filter(|c| **c).count();
    proportion(input, Measure::Becover, hits, used.len())
}

/// Two-sided test of θ = 0 at level α. With supplied bounds the null is
/// rejected when the interval excludes zero.
pub fn power(
    input: &PerformanceInput,
    rule: CriticalValueRule,
) -> Result<PerformanceEstimate, MeasureError> {
    input.validate()?;
    let n = input.len();
    let decisions: Vec<bool> = match rule {
        CriticalValueRule::SuppliedBounds => build_intervals(input, rule)
            .map_err(|_| MeasureError::MissingIngredient(Measure::Power))?
            .into_iter()
            .flatten()
            .map(|(l, u)| l > 0.0 || u < 0.0)
            .collect(),
        CriticalValueRule::Normal | CriticalValueRule::TPerRepetition => {
            let ses = input
                .ses
                .as_ref()
                .ok_or(MeasureError::MissingIngredient(Measure::Power))?;
            let t_rule = rule == CriticalValueRule::TPerRepetition;
            if t_rule && input.dfs.is_none() {
                return Err(MeasureError::MissingIngredient(Measure::Power));
            }
            let z = dist::critical_value(input.alpha, None);
            (0..n)
                .filter_map(|i| {
                    let est = input.estimates[i]?;
                    let se = ses[i]?;
                    let c = if t_rule {
                        dist::critical_value(
                            input.alpha,
                            Some(PerformanceInput::at(&input.dfs, i)?),
                        )
                    } else {
                        z
                    };
                    Some(est.abs() >= c * se)
                })
                .collect()
        }
    };
    let hits = decisions.iter().filter(|d| **d).count();
    proportion(input, Measure::Power, hits, decisions.len())
}

/// Percentage gain in precision of `method` relative to `reference`,
/// pairing repetitions by id (by position when neither side has ids).
pub fn relative_precision(
    method: &PerformanceInput,
    reference: &PerformanceInput,
) -> Result<PerformanceEstimate, MeasureError> {
    method.validate()?;
    reference.validate()?;
    let pairs = pair_estimates(method, reference)?;
    let n = pairs.len();
    if n == 0 {
        return Err(MeasureError::UnpairedRepetitions);
    }
    require(Measure::Relprec, n, 2)?;
    let b: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let a: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let var_b = sample_var(&b);
    let var_a = sample_var(&a);
    if var_b == 0.0 {
        return Err(MeasureError::Undefined {
            measure: Measure::Relprec,
            n,
        });
    }
    let ratio = var_a / var_b;
    let value = 100.0 * (ratio - 1.0);
    let mcse = if var_a == 0.0 {
        None
    } else {
        let (mb, ma) = (mean(&b), mean(&a));
        let cov = b
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - mb) * (y - ma))
            .sum::<f64>()
            / (n - 1) as f64;
        let rho = cov / (var_a * var_b).sqrt();
        let one_minus = (1.0 - rho * rho).max(0.0);
        Some(200.0 * ratio * (one_minus / (n - 1) as f64).sqrt())
    };
    Ok(estimate(method, Measure::Relprec, value, mcse, n))
}

/// Pairs (method, reference) estimates by repetition id.
pub fn pair_estimates(
    method: &PerformanceInput,
    reference: &PerformanceInput,
) -> Result<Vec<(f64, f64)>, MeasureError> {
    let no_ids = |x: &PerformanceInput| x.rep_ids.iter().all(Option::is_none);
    if no_ids(method) && no_ids(reference) {
        return Ok(method
            .estimates
            .iter()
            .zip(&reference.estimates)
            .filter_map(|(b, a)| Some(((*b)?, (*a)?)))
            .collect());
    }
    let mut by_id: HashMap<&str, f64> = HashMap::new();
    for (id, est) in reference.rep_ids.iter().zip(&reference.estimates) {
        if let (Some(id), Some(est)) = (id, est) {
            if by_id.insert(id.as_str(), *est).is_some() {
                return Err(MeasureError::UnpairedRepetitions);
            }
        }
    }
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut pairs = Vec::new();
    for (id, est) in method.rep_ids.iter().zip(&method.estimates) {
        if let (Some(id), Some(est)) = (id, est) {
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(MeasureError::UnpairedRepetitions);
            }
            if let Some(a) = by_id.get(id.as_str()) {
                pairs.push((*est, *a));
            }
        }
    }
    Ok(pairs)
}

/// Evaluates one measure on one stratum. `reference` is the reference
/// method's input for the same DGM (needed by relative precision only).
pub fn evaluate(
    measure: Measure,
    input: &PerformanceInput,
    rule: CriticalValueRule,
    reference: Option<&PerformanceInput>,
) -> Result<PerformanceEstimate, MeasureError> {
    match measure {
        Measure::Bias => bias(input),
        Measure::EmpSe => empirical_se(input),
        Measure::ModSe => model_se(input),
        Measure::Mse => mse(input),
        Measure::Coverage => coverage(input, rule),
        Measure::Becover => bias_eliminated_coverage(input, rule),
        Measure::Power => power(input, rule),
        Measure::Relprec => relative_precision(input, reference.ok_or(MeasureError::NoReference)?),
        Measure::MeanEst => mean_estimate(input),
        Measure::MedianEst => median_estimate(input),
        Measure::MeanSqErr => mean_squared_error(input),
        Measure::MedianSqErr => median_squared_error(input),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub measure: Measure,
    pub stratum: StratumKey,
    pub reason: MeasureError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Computed {
    pub estimates: Vec<PerformanceEstimate>,
    pub skipped: Vec<Skipped>,
}

/// Inputs for every stratum of a dataset, in stratum order.
pub fn stratum_inputs(dataset: &Dataset) -> Vec<PerformanceInput> {
    dataset
        .strata()
        .into_iter()
        .map(|(key, idx)| {
            let recs: Vec<&RepetitionRecord> = idx.iter().map(|&i| &dataset.records[i]).collect();
            PerformanceInput::from_records(key, &recs, &dataset.mapping)
        })
        .collect()
}

/// Every selected measure over every stratum. Measures that cannot be
/// computed for a stratum are left out and reported in `skipped`.
pub fn compute_all(dataset: &Dataset, selected: &[Measure]) -> Computed {
    let inputs = stratum_inputs(dataset);
    let rule = CriticalValueRule::from_mapping(&dataset.mapping);
    let reference = dataset.reference_method();
    let order: Vec<Measure> = Measure::ALL
        .into_iter()
        .filter(|m| selected.contains(m))
        .collect();

    let per_stratum: Vec<Vec<Result<PerformanceEstimate, Skipped>>> = inputs
        .par_iter()
        .map(|input| {
            let ref_input = reference.as_ref().and_then(|r| {
                inputs
                    .iter()
                    .find(|x| x.stratum.dgm == input.stratum.dgm && &x.stratum.method == r)
            });
            order
                .iter()
                .map(|&m| {
                    evaluate(m, input, rule, ref_input).map_err(|reason| Skipped {
                        measure: m,
                        stratum: input.stratum.clone(),
                        reason,
                    })
                })
                .collect()
        })
        .collect();

    let mut out = Computed::default();
    for r in per_stratum.into_iter().flatten() {
        match r {
            Ok(e) => out.estimates.push(e),
            Err(s) => {
                log::debug!("{} skipped for {}: {}", s.measure, s.stratum, s.reason);
                out.skipped.push(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    fn three() -> PerformanceInput {
        PerformanceInput::from_values(&[-0.4, -0.5, -0.6]).with_truth(-0.5)
    }

    #[test]
    fn bias_hand_example() {
        let b = bias(&three()).unwrap();
        assert!(b.value.abs() < 1e-15);
        assert!(close(b.mcse.unwrap(), 0.1 / 3f64.sqrt(), TOL));
        assert_eq!(b.n_used, 3);
    }

    #[test]
    fn bias_all_equal_truth() {
        let b = bias(&PerformanceInput::from_values(&[2.0; 5]).with_truth(2.0)).unwrap();
        assert_eq!((b.value, b.mcse), (0.0, Some(0.0)));
    }

    #[test]
    fn bias_needs_truth() {
        assert_eq!(
            bias(&PerformanceInput::from_values(&[1.0])).unwrap_err(),
            MeasureError::NoTruth
        );
    }

    #[test]
    fn single_repetition_withholds_mcse() {
        let input = PerformanceInput::from_values(&[1.5])
            .with_truth(1.0)
            .with_ses(&[0.2]);
        let b = bias(&input).unwrap();
        assert_eq!((b.value, b.mcse), (0.5, None));
        assert!(matches!(
            empirical_se(&input),
            Err(MeasureError::Undefined { n: 1, .. })
        ));
        assert_eq!(model_se(&input).unwrap().mcse, None);
        assert_eq!(
            coverage(&input, CriticalValueRule::Normal).unwrap().mcse,
            None
        );
    }

    #[test]
    fn empirical_se_examples() {
        let e = empirical_se(&three()).unwrap();
        assert!(close(e.value, 0.1, TOL));
        assert!(close(e.mcse.unwrap(), 0.1 / 2f64.sqrt() / 2f64.sqrt(), TOL));
        let c = empirical_se(&PerformanceInput::from_values(&[3.0; 4])).unwrap();
        assert_eq!((c.value, c.mcse), (0.0, Some(0.0)));
    }

    #[test]
    fn model_se_examples() {
        let m =
            model_se(&PerformanceInput::from_values(&[0.0, 0.0]).with_ses(&[0.1, 0.2])).unwrap();
        assert!(close(m.value, 0.025f64.sqrt(), TOL));
        let c = model_se(&PerformanceInput::from_values(&[0.0; 3]).with_ses(&[0.3; 3])).unwrap();
        assert!(close(c.value, 0.3, TOL));
        assert_eq!(c.mcse, Some(0.0));
        let z = model_se(&PerformanceInput::from_values(&[0.0; 3]).with_ses(&[0.0; 3])).unwrap();
        assert_eq!((z.value, z.mcse), (0.0, Some(0.0)));
        assert_eq!(
            model_se(&PerformanceInput::from_values(&[0.0])).unwrap_err(),
            MeasureError::NoSes
        );
    }

    #[test]
    fn mse_examples() {
        let m = mse(&three()).unwrap();
        assert!(close(m.value, 0.02 / 3.0, TOL));
        let z = mse(&PerformanceInput::from_values(&[1.0; 3]).with_truth(1.0)).unwrap();
        assert_eq!((z.value, z.mcse), (0.0, Some(0.0)));
    }

    #[test]
    fn mean_median_examples() {
        let [mean, median, _, _] = mean_median_summaries(&three());
        assert!(close(mean.unwrap().value, -0.5, TOL));
        assert!(close(median.as_ref().unwrap().value, -0.5, TOL));
        assert_eq!(median.unwrap().mcse, None);

        let single = PerformanceInput::from_values(&[7.25]);
        assert_eq!(mean_estimate(&single).unwrap().value, 7.25);
        assert_eq!(median_estimate(&single).unwrap().value, 7.25);

        let sq = PerformanceInput::from_values(&[1.0, 2.0, 4.0]).with_truth(0.0);
        assert_eq!(median_squared_error(&sq).unwrap().value, 4.0);
        assert!(matches!(
            median_squared_error(&PerformanceInput::from_values(&[1.0])),
            Err(MeasureError::NoTruth)
        ));
    }

    #[test]
    fn interval_examples() {
        let input = PerformanceInput::from_values(&[0.0]).with_ses(&[1.0]);
        let iv = build_intervals(&input, CriticalValueRule::Normal).unwrap()[0].unwrap();
        assert!((iv.0 + 1.959964).abs() < 1e-6 && (iv.1 - 1.959964).abs() < 1e-6);

        let mut t = input.clone();
        t.dfs = Some(vec![Some(10.0)]);
        let iv = build_intervals(&t, CriticalValueRule::TPerRepetition).unwrap()[0].unwrap();
        assert!((iv.0 + 2.228139).abs() < 1e-6 && (iv.1 - 2.228139).abs() < 1e-6);

        let mut s = PerformanceInput::from_values(&[0.0, 1.0]);
        s.lowers = Some(vec![Some(-0.3), None]);
        s.uppers = Some(vec![Some(0.7), Some(2.0)]);
        let ivs = build_intervals(&s, CriticalValueRule::SuppliedBounds).unwrap();
        assert_eq!(ivs, vec![Some((-0.3, 0.7)), None]);

        assert_eq!(
            build_intervals(
                &PerformanceInput::from_values(&[0.0]),
                CriticalValueRule::Normal
            ),
            Err(MeasureError::NoIntervals)
        );
    }

    #[test]
    fn coverage_becover_power_examples() {
        let input = PerformanceInput::from_values(&[0.0, 0.5])
            .with_ses(&[0.1, 0.1])
            .with_truth(0.0);
        let c = coverage(&input, CriticalValueRule::Normal).unwrap();
        assert_eq!(c.value, 0.5);
        assert!(close(c.mcse.unwrap(), 0.353_553_390_593_273_8, 1e-12));

        let b = bias_eliminated_coverage(&input, CriticalValueRule::Normal).unwrap();
        assert_eq!((b.value, b.mcse), (0.0, Some(0.0)));

        let p = power(&input, CriticalValueRule::Normal).unwrap();
        assert_eq!(p.value, 0.5);
        assert!(close(p.mcse.unwrap(), 0.353_553_390_593_273_8, 1e-12));

        let zero = PerformanceInput::from_values(&[0.0; 4]).with_ses(&[1.0; 4]);
        assert_eq!(power(&zero, CriticalValueRule::Normal).unwrap().value, 0.0);

        let all = PerformanceInput::from_values(&[0.0; 3])
            .with_ses(&[1.0; 3])
            .with_truth(0.0);
        let c = coverage(&all, CriticalValueRule::Normal).unwrap();
        assert_eq!((c.value, c.mcse), (1.0, Some(0.0)));
    }

    #[test]
    fn unbiased_becover_equals_coverage() {
        let input = PerformanceInput::from_values(&[-1.0, 1.0, -0.2, 0.2])
            .with_ses(&[0.6, 0.6, 0.6, 0.6])
            .with_truth(0.0);
        assert_eq!(
            coverage(&input, CriticalValueRule::Normal).unwrap().value,
            bias_eliminated_coverage(&input, CriticalValueRule::Normal)
                .unwrap()
                .value
        );
    }

    #[test]
    fn power_from_supplied_bounds() {
        let mut input = PerformanceInput::from_values(&[1.0, 1.0, 1.0]);
        input.lowers = Some(vec![Some(0.1), Some(-0.1), Some(-3.0)]);
        input.uppers = Some(vec![Some(2.0), Some(2.0), Some(-1.0)]);
        let p = power(&input, CriticalValueRule::SuppliedBounds).unwrap();
        assert!(close(p.value, 2.0 / 3.0, TOL));
    }

    #[test]
    fn relative_precision_examples() {
        // s_A = 0.2, s_B = 0.1 and zero correlation.
        let a = PerformanceInput::from_values(&[0.2, -0.2, 0.2, -0.2]).with_rep_ids(&[1, 2, 3, 4]);
        let b = PerformanceInput::from_values(&[0.1, 0.1, -0.1, -0.1]).with_rep_ids(&[1, 2, 3, 4]);
        let r = relative_precision(&b, &a).unwrap();
        assert!(close(r.value, 300.0, 1e-9));
        assert!(close(
            r.mcse.unwrap(),
            200.0 * 4.0 * (1.0f64 / 3.0).sqrt(),
            1e-9
        ));

        let self_cmp = relative_precision(&a, &a).unwrap();
        assert_eq!((self_cmp.value, self_cmp.mcse), (0.0, Some(0.0)));
    }

    #[test]
    fn relative_precision_pairs_by_id() {
        let a = PerformanceInput::from_values(&[1.0, 2.0, 3.0]).with_rep_ids(&["x", "y", "z"]);
        let b = PerformanceInput::from_values(&[3.0, 1.0, 2.0]).with_rep_ids(&["z", "x", "y"]);
        let r = relative_precision(&b, &a).unwrap();
        assert_eq!((r.value, r.mcse), (0.0, Some(0.0)));
        let c = PerformanceInput::from_values(&[1.0, 2.0]).with_rep_ids(&["p", "q"]);
        assert_eq!(
            relative_precision(&c, &a).unwrap_err(),
            MeasureError::UnpairedRepetitions
        );
    }

    #[test]
    fn length_mismatch_is_reported() {
        let mut input = three();
        input.ses = Some(vec![Some(1.0)]);
        assert_eq!(
            model_se(&input).unwrap_err(),
            MeasureError::LengthMismatch("ses")
        );
    }

    #[test]
    fn missing_values_dropped_pairwise() {
        let mut input =
            PerformanceInput::new(vec![Some(1.0), None, Some(3.0), Some(5.0)]).with_truth(0.0);
        input.ses = Some(vec![Some(1.0), Some(1.0), None, Some(1.0)]);
        assert_eq!(bias(&input).unwrap().n_used, 3);
        assert_eq!(model_se(&input).unwrap().n_used, 3);
        assert_eq!(
            coverage(&input, CriticalValueRule::Normal).unwrap().n_used,
            2
        );
    }

    #[test]
    fn measure_names_round_trip() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
        }
        assert_eq!("empse".parse::<Measure>().unwrap(), Measure::EmpSe);
        assert!("nonsense".parse::<Measure>().is_err());
        assert_eq!(
            parse_measure_list("bias, coverage,bias").unwrap(),
            vec![Measure::Bias, Measure::Coverage]
        );
    }

    #[test]
    fn labels_follow_alpha() {
        assert_eq!(
            Measure::Coverage.label(0.05),
            "Coverage of nominal 95% confidence interval"
        );
        assert_eq!(Measure::Power.label(0.1), "Power of 10% level test");
    }
}
