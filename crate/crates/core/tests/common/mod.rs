//! Seeded synthetic studies shaped like a typical results file.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simexplore_core::model::{apply_mapping, Dataset, RawTable, Truth, VariableMapping};

pub const THETA: f64 = -0.5;

/// `n_rep` repetitions for each DGM (`1..=n_dgm`) and method (`1..=n_method`).
/// Method `m` has bias `0.02 (m − 1)` and standard deviation `0.1 + 0.02 m`;
/// each reported SE is the true SD perturbed by a few percent. A share
/// `missing` of estimates is replaced by "NA" at random.
pub fn synth_raw(seed: u64, n_rep: usize, n_dgm: usize, n_method: usize, missing: f64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    for d in 1..=n_dgm {
        for m in 1..=n_method {
            let sd = 0.1 + 0.02 * m as f64 + 0.01 * d as f64;
            let bias = 0.02 * (m as f64 - 1.0);
            for r in 1..=n_rep {
                let est = THETA + bias + sd * z.sample(&mut rng);
                let se = sd * (1.0 + 0.05 * z.sample(&mut rng));
                let est = if rng.random::<f64>() < missing {
                    "NA".to_string()
                } else {
                    format!("{est}")
                };
                rows.push(vec![
                    r.to_string(),
                    d.to_string(),
                    m.to_string(),
                    est,
                    format!("{se}"),
                ]);
            }
        }
    }
    RawTable::new(
        ["idrep", "dgm", "method", "theta", "se"]
            .map(String::from)
            .to_vec(),
        rows,
    )
    .unwrap()
}

pub fn mapping() -> VariableMapping {
    VariableMapping::new("theta")
        .with_se("se")
        .with_truth(Truth::Fixed(THETA))
        .with_method("method")
        .with_dgm(["dgm"])
        .with_rep("idrep")
}

pub fn synth(seed: u64, n_rep: usize, n_dgm: usize, n_method: usize) -> Dataset {
    apply_mapping(synth_raw(seed, n_rep, n_dgm, n_method, 0.0), mapping()).unwrap()
}

pub mod calibration;
pub mod oracle;
pub mod props;
