use serde::{Deserialize, Serialize};

use super::{diagnostics, PosteriorDraws, Quantity};

/// HPD widths below this are reported as having no discernible interval.
const DEGENERATE_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hpd_low: Option<f64>,
    pub hpd_high: Option<f64>,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

/// Posterior mean, SD, HPD interval and convergence diagnostics for every
/// monitored column.
pub fn summarize(draws: &PosteriorDraws, mass: f64) -> Vec<ParamSummary> {
    draws
        .columns
        .iter()
        .map(|name| {
            let chains = draws.chain_series(name).expect("known column");
            let pooled: Vec<f64> = chains.concat();
            let (mean, sd) = mean_sd(&pooled);
            let hpd = diagnostics::hpd_interval(&pooled, mass).ok();
            ParamSummary {
                name: name.clone(),
                mean,
                sd,
                hpd_low: hpd.map(|h| h.0),
                hpd_high: hpd.map(|h| h.1),
                rhat: diagnostics::rhat(&chains).ok(),
                ess: diagnostics::ess_chains(&chains).ok(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSummary {
    pub id: String,
    pub arm: u8,
    pub quantity: String,
    pub baseline_observed: bool,
    pub mean: f64,
    pub hpd_low: Option<f64>,
    pub hpd_high: Option<f64>,
    /// The imputed value is effectively fixed, e.g. a structural one.
    pub no_interval: bool,
}

/// One row per missing QALY and per missing cost: posterior mean and 90%
/// HPD of the imputed value. Records with observed baseline utility come
/// first. Empty when the draws were run without stored imputations or
/// nothing was missing.
pub fn imputation_summaries(draws: &PosteriorDraws) -> Vec<ImputationSummary> {
    let mut rows: Vec<ImputationSummary> = draws
        .imputations
        .iter()
        .filter(|s| matches!(s.quantity, Quantity::Qaly | Quantity::Cost))
        .map(|s| {
            let pooled = s.pooled();
            let (mean, _) = mean_sd(&pooled);
            let hpd = diagnostics::hpd_interval(&pooled, 0.9).ok();
            let width = hpd.map(|(lo, hi)| hi - lo);
            ImputationSummary {
                id: s.id.clone(),
                arm: s.arm.code(),
                quantity: s.quantity.label().to_string(),
                baseline_observed: s.baseline_observed,
                mean,
                hpd_low: hpd.map(|h| h.0),
                hpd_high: hpd.map(|h| h.1),
                no_interval: width.is_some_and(|w| w < DEGENERATE_WIDTH),
            }
        })
        .collect();
    rows.sort_by_key(|r| (!r.baseline_observed, r.arm, r.quantity.clone()));
    rows
}
