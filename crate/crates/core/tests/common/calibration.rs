//! Repeated toy studies for comparing reported MCSEs with the spread seen
//! across replicates, and seeded missingness injection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simexplore_core::measures::{evaluate, CriticalValueRule, Measure, PerformanceInput};
use simexplore_core::missingness::{
    missing_bar_data, missing_heat_data, missing_table, BarGrouping,
};
use simexplore_core::model::apply_mapping;

pub const THETA: f64 = 0.3;
pub const N_REP: usize = 200;

pub const CALIBRATED: [Measure; 9] = [
    Measure::Bias,
    Measure::EmpSe,
    Measure::ModSe,
    Measure::Mse,
    Measure::Coverage,
    Measure::Power,
    Measure::Relprec,
    Measure::MeanEst,
    Measure::MeanSqErr,
];

/// One toy study: method B is correlated with the reference method A and
/// noisier, with reported SEs scattered around the true SD.
pub fn toy_study(rng: &mut ChaCha8Rng) -> (PerformanceInput, PerformanceInput) {
    let z = Normal::new(0.0, 1.0).unwrap();
    let (mut a, mut b, mut sa, mut sb) = (vec![], vec![], vec![], vec![]);
    for _ in 0..N_REP {
        let ea = 0.5 * z.sample(rng);
        a.push(THETA + 0.05 + ea);
        b.push(THETA + 0.6 * ea + 0.45 * z.sample(rng));
        sa.push(0.5 * (1.0 + 0.1 * z.sample(rng)));
        sb.push(0.55 * (1.0 + 0.1 * z.sample(rng)));
    }
    let ids: Vec<usize> = (0..N_REP).collect();
    let ia = PerformanceInput::from_values(&a)
        .with_ses(&sa)
        .with_truth(THETA)
        .with_rep_ids(&ids);
    let ib = PerformanceInput::from_values(&b)
        .with_ses(&sb)
        .with_truth(THETA)
        .with_rep_ids(&ids);
    (ia, ib)
}

pub fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Mean reported MCSE and observed SD of the estimates over `replicates`
/// toy studies, per measure.
pub fn calibration(seed: u64, replicates: usize, measures: &[Measure]) -> Vec<(Measure, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![Vec::new(); measures.len()];
    let mut mcses = vec![Vec::new(); measures.len()];
    for _ in 0..replicates {
        let (a, b) = toy_study(&mut rng);
        for (k, m) in measures.iter().enumerate() {
            let e = evaluate(*m, &b, CriticalValueRule::Normal, Some(&a)).unwrap();
            values[k].push(e.value);
            mcses[k].push(e.mcse.unwrap());
        }
    }
    measures
        .iter()
        .enumerate()
        .map(|(k, m)| {
            (
                *m,
                mcses[k].iter().sum::<f64>() / replicates as f64,
                sd(&values[k]),
            )
        })
        .collect()
}

/// Blanks a share `rate` of estimates at random in a 1600-repetition,
/// 2 × 3 study and checks the missingness summaries recover it.
pub fn check_injected_missingness(seed: u64, rate: f64) -> Result<(), String> {
    let raw = super::synth_raw(seed, 1600, 2, 3, rate);
    let ds = apply_mapping(raw, super::mapping()).map_err(|e| e.to_string())?;
    let table = missing_table(&ds);
    let theta_rows: Vec<_> = table.iter().filter(|s| s.variable == "theta").collect();
    if theta_rows.len() != 6 {
        return Err(format!("{} strata for theta, expected 6", theta_rows.len()));
    }
    let band = 3.0 * (1600.0 * rate * (1.0 - rate)).sqrt();
    for s in &theta_rows {
        if s.stratum_size != 1600 || (s.n_missing as f64 - 1600.0 * rate).abs() > band {
            return Err(format!(
                "{:?}: {} of {} missing",
                s.stratum, s.n_missing, s.stratum_size
            ));
        }
    }
    if table.iter().any(|s| s.variable == "se" && s.n_missing != 0) {
        return Err("missing SEs reported where none were blanked".into());
    }
    for by in [BarGrouping::Method, BarGrouping::Dgm] {
        for bar in missing_bar_data(&ds, by)
            .iter()
            .filter(|b| b.variable == "theta")
        {
            let want: usize = theta_rows
                .iter()
                .filter(|s| match by {
                    BarGrouping::Method => s.stratum.method == bar.group,
                    BarGrouping::Dgm => s.stratum.dgm_label() == bar.group,
                })
                .map(|s| s.n_missing)
                .sum();
            if bar.n_missing != want {
                return Err(format!(
                    "bar {by:?} {}: {} vs table {want}",
                    bar.group, bar.n_missing
                ));
            }
        }
    }
    for tile in missing_heat_data(&ds, "theta").map_err(|e| e.to_string())? {
        let s = theta_rows
            .iter()
            .find(|s| s.stratum.method == tile.method && s.stratum.dgm == tile.dgm)
            .ok_or("heat tile without a table row")?;
        if tile.n_missing != s.n_missing
            || (tile.percent_missing - 100.0 * s.prop_missing).abs() > 1e-12
        {
            return Err(format!(
                "heat tile {} {:?} disagrees with the table",
                tile.method, tile.dgm
            ));
        }
    }
    Ok(())
}
