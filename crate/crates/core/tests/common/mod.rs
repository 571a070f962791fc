#![allow(dead_code)]

use costeff_core::data::*;

/// Record with a flat utility trajectory, so its QALY equals `e` on a
/// one-year grid, and the total cost split evenly over the follow-ups.
pub fn flat_record(
    id: &str,
    arm: Arm,
    e: Option<f64>,
    c: Option<f64>,
    n_follow: usize,
) -> IndividualRecord {
    IndividualRecord {
        id: id.to_string(),
        arm,
        utilities: vec![e; n_follow + 1],
        costs: vec![c.map(|v| v / n_follow as f64); n_follow],
        age: Some(40.0),
        ethnicity: Some(1),
        employment: Some(1),
    }
}

pub fn quarterly() -> TimeGrid {
    TimeGrid::quarterly_year()
}

/// Hurdle-generated trial with age-driven MAR dropout of whole records.
pub fn hurdle_trial(seed: u64, n: usize, missing: bool) -> TrialDataset {
    let mut cfg = SyntheticTrialConfig::example(seed);
    for a in cfg.arms.iter_mut() {
        a.n = n;
        if missing {
            a.whole_record = true;
            a.missingness = MissingnessMechanism::Mar {
                intercept: -0.85,
                baseline_slope: 0.0,
                age_slope: 0.5,
            };
        }
    }
    generate_synthetic_trial(&cfg).expect("valid config")
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}
