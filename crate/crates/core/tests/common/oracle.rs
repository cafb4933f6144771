//! Brute-force recomputation of every measure: plain loops, quantiles
//! from statrs, nothing shared with the engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simexplore_core::measures::{
    evaluate, CriticalValueRule, Measure, PerformanceInput, TruthValues,
};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

struct Case {
    est: Vec<Option<f64>>,
    se: Vec<Option<f64>>,
    df: Vec<Option<f64>>,
    theta: f64,
    alpha: f64,
    rule: CriticalValueRule,
    ids: Vec<String>,
    ref_est: Vec<Option<f64>>,
    ref_ids: Vec<String>,
}

fn maybe(rng: &mut ChaCha8Rng, v: f64) -> Option<f64> {
    (rng.random::<f64>() >= 0.15).then_some(v)
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..=6);
    let theta = rng.random_range(-2.0..2.0);
    let est = (0..n)
        .map(|_| {
            let v = theta + rng.random_range(-1.5..1.5);
            maybe(rng, v)
        })
        .collect();
    let se = (0..n)
        .map(|_| {
            let v = rng.random_range(0.05..1.0);
            maybe(rng, v)
        })
        .collect();
    let df = (0..n)
        .map(|_| {
            let v = rng.random_range(1..60) as f64;
            maybe(rng, v)
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    // The reference method shares some repetitions and has its own extras.
    let m = rng.random_range(1..=6);
    let offset = rng.random_range(0..3);
    let ref_ids: Vec<String> = (0..m).map(|i| format!("r{}", i + offset)).collect();
    let ref_est = (0..m)
        .map(|_| {
            let v = theta + rng.random_range(-1.0..1.0);
            maybe(rng, v)
        })
        .collect();
    let alpha = [0.01, 0.05, 0.1, 0.2][rng.random_range(0..4)];
    let rule = if rng.random::<bool>() {
        CriticalValueRule::Normal
    } else {
        CriticalValueRule::TPerRepetition
    };
    Case {
        est,
        se,
        df,
        theta,
        alpha,
        rule,
        ids,
        ref_est,
        ref_ids,
    }
}

pub fn crit(alpha: f64, df: Option<f64>) -> f64 {
    let p = 1.0 - alpha / 2.0;
    match df {
        None => Normal::new(0.0, 1.0).unwrap().inverse_cdf(p),
        Some(df) => StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(p),
    }
}

fn avg(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = avg(v);
    let mut s = 0.0;
    for x in v {
        s += (x - m) * (x - m);
    }
    s / (v.len() as f64 - 1.0)
}

fn med(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        (s[k / 2 - 1] + s[k / 2]) / 2.0
    }
}

/// (value, mcse) or `None` when undefined.
type Expect = Option<(f64, Option<f64>)>;

thread_local! {
    /// Conditioning of the last MCSE computed, for tolerance scaling.
    static COND: std::cell::Cell<f64> = const { std::cell::Cell::new(1.0) };
}

fn proportion(hits: usize, n: usize) -> Expect {
    if n == 0 {
        return None;
    }
    let p = hits as f64 / n as f64;
    Some((
        p,
        if n >= 2 {
            Some((p * (1.0 - p) / n as f64).sqrt())
        } else {
            None
        },
    ))
}

fn oracle(c: &Case, m: Measure) -> Expect {
    let n = c.est.len();
    let e: Vec<f64> = c.est.iter().flatten().copied().collect();
    let k = e.len();
    let use_t = c.rule == CriticalValueRule::TPerRepetition;
    let mut intervals = Vec::new();
    for i in 0..n {
        if let (Some(x), Some(s)) = (c.est[i], c.se[i]) {
            let df = if use_t {
                match c.df[i] {
                    Some(d) => Some(d),
                    None => continue,
                }
            } else {
                None
            };
            let q = crit(c.alpha, df);
            intervals.push((x, s, x - q * s, x + q * s, q));
        }
    }
    match m {
        Measure::Bias | Measure::MeanEst => {
            if k == 0 {
                return None;
            }
            let shift = if m == Measure::Bias { c.theta } else { 0.0 };
            Some((
                avg(&e) - shift,
                (k >= 2).then(|| (var(&e) / k as f64).sqrt()),
            ))
        }
        Measure::EmpSe => {
            if k < 2 {
                return None;
            }
            let s = var(&e).sqrt();
            Some((s, Some(s / (2.0 * (k as f64 - 1.0)).sqrt())))
        }
        Measure::ModSe => {
            let sq: Vec<f64> = c.se.iter().flatten().map(|s| s * s).collect();
            if sq.is_empty() {
                return None;
            }
            let v = avg(&sq).sqrt();
            let mcse = (sq.len() >= 2).then(|| (var(&sq) / (4.0 * sq.len() as f64 * v * v)).sqrt());
            Some((v, mcse))
        }
        Measure::Mse | Measure::MeanSqErr => {
            if k == 0 {
                return None;
            }
            let d2: Vec<f64> = e.iter().map(|x| (x - c.theta) * (x - c.theta)).collect();
            let v = avg(&d2);
            let mcse = (k >= 2).then(|| {
                let mut ss = 0.0;
                for x in &d2 {
                    ss += (x - v) * (x - v);
                }
                (ss / (k as f64 * (k as f64 - 1.0))).sqrt()
            });
            Some((v, mcse))
        }
        Measure::MedianEst => (k > 0).then(|| (med(&e), None)),
        Measure::MedianSqErr => {
            let d2: Vec<f64> = e.iter().map(|x| (x - c.theta) * (x - c.theta)).collect();
            (k > 0).then(|| (med(&d2), None))
        }
        Measure::Coverage => {
            let hits = intervals
                .iter()
                .filter(|iv| iv.2 <= c.theta && c.theta <= iv.3)
                .count();
            proportion(hits, intervals.len())
        }
        Measure::Becover => {
            if k == 0 {
                return None;
            }
            let centre = avg(&e);
            let hits = intervals
                .iter()
                .filter(|iv| iv.2 <= centre && centre <= iv.3)
                .count();
            proportion(hits, intervals.len())
        }
        Measure::Power => {
            let hits = intervals
                .iter()
                .filter(|iv| iv.0.abs() >= iv.4 * iv.1)
                .count();
            proportion(hits, intervals.len())
        }
        Measure::Relprec => {
            let mut b = Vec::new();
            let mut a = Vec::new();
            for (i, id) in c.ids.iter().enumerate() {
                if let Some(x) = c.est[i] {
                    if let Some(j) = c.ref_ids.iter().position(|r| r == id) {
                        if let Some(y) = c.ref_est[j] {
                            b.push(x);
                            a.push(y);
                        }
                    }
                }
            }
            let p = b.len();
            if p < 2 {
                return None;
            }
            let (vb, va) = (var(&b), var(&a));
            if vb == 0.0 {
                return None;
            }
            let r = va / vb;
            let mcse = if va == 0.0 {
                None
            } else {
                let (mb, ma) = (avg(&b), avg(&a));
                let mut cov = 0.0;
                for i in 0..p {
                    cov += (b[i] - mb) * (a[i] - ma);
                }
                cov /= p as f64 - 1.0;
                let rho = cov / (va * vb).sqrt();
                // 1 - rho^2 loses digits as |rho| approaches 1.
                COND.with(|c| c.set(1.0 / (1.0 - rho * rho).max(1e-300)));
                Some(200.0 * r * ((1.0 - rho * rho).max(0.0) / (p as f64 - 1.0)).sqrt())
            };
            Some((100.0 * (r - 1.0), mcse))
        }
    }
}

fn input_of(c: &Case) -> (PerformanceInput, PerformanceInput) {
    let mut inp = PerformanceInput::new(c.est.clone()).with_alpha(c.alpha);
    inp.rep_ids = c.ids.iter().cloned().map(Some).collect();
    inp.ses = Some(c.se.clone());
    inp.dfs = Some(c.df.clone());
    inp.truth = TruthValues::Fixed(c.theta);
    let mut r = PerformanceInput::new(c.ref_est.clone()).with_alpha(c.alpha);
    r.rep_ids = c.ref_ids.iter().cloned().map(Some).collect();
    (inp, r)
}

fn close(a: f64, b: f64) -> bool {
    close_within(a, b, 1e-12)
}

fn close_within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Compares every measure with the brute-force version on `cases` random
/// strata. Returns how many (measure, stratum) pairs had a defined value.
pub fn check_oracle(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for case_no in 0..cases {
        let c = random_case(&mut rng);
        let (inp, reference) = input_of(&c);
        for m in Measure::ALL {
            let got = evaluate(m, &inp, c.rule, Some(&reference));
            COND.with(|c| c.set(1.0));
            let want = oracle(&c, m);
            let cond = COND.with(|c| c.get());
            match (got, want) {
                (Ok(g), Some((v, mcse))) => {
                    if !close(g.value, v) {
                        return Err(format!("case {case_no} {m}: {} vs {v}", g.value));
                    }
                    match (g.mcse, mcse) {
                        (Some(a), Some(b)) if !close_within(a, b, 1e-12 * cond) => {
                            return Err(format!("case {case_no} {m} mcse: {a} vs {b}"));
                        }
                        (Some(_), Some(_)) => {}
                        (a, b) if a != b => {
                            return Err(format!(
                                "case {case_no} {m} mcse: engine {a:?}, oracle {b:?}"
                            ));
                        }
                        _ => {}
                    }
                    compared += 1;
                }
                (Err(_), None) => {}
                (g, w) => return Err(format!("case {case_no} {m}: engine {g:?}, oracle {w:?}")),
            }
        }
    }
    Ok(compared)
}
