//! Decision outputs from posterior increments (Δe, Δc): ICER, the
//! cost-effectiveness plane and the acceptability curve.
//!
//! A draw is cost-effective at willingness to pay `k` when the incremental
//! net benefit `k·Δe − Δc` is strictly positive. Draws exactly on the line
//! count as not cost-effective.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::PosteriorDraws;

/// |E[Δe]| below this leaves the ICER undefined.
pub const ICER_TOLERANCE: f64 = 1e-12;
/// Minimum number of draws for an acceptability curve.
pub const MIN_CEAC_DRAWS: usize = 100;
pub const DEFAULT_K_REF: f64 = 20_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum EconError {
    #[error("willingness-to-pay grid is empty")]
    EmptyGrid,
    #[error("invalid willingness-to-pay grid: {0}")]
    InvalidGrid(String),
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("Δe and Δc have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite increment at draw {0}")]
    NonFinite(usize),
    #[error("reference threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EconError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for EconError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Willingness-to-pay thresholds, currency per QALY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WtpGrid {
    values: Vec<f64>,
}

impl WtpGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, EconError> {
        if values.is_empty() {
            return Err(EconError::EmptyGrid);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(EconError::InvalidGrid(format!(
                "value {v} is negative or not finite"
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EconError::InvalidGrid(
                "values must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `0, step, 2·step, …` up to and including `max` when it falls on the grid.
    pub fn regular(max: f64, step: f64) -> Result<Self, EconError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(EconError::InvalidGrid(format!(
                "step must be positive, got {step}"
            )));
        }
        if !(max >= 0.0 && max.is_finite()) {
            return Err(EconError::InvalidGrid(format!(
                "maximum must be non-negative, got {max}"
            )));
        }
        // integer stepping avoids drift from repeated addition
        let n = (max / step + 1e-9).floor() as usize;
        Self::new((0..=n).map(|i| i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for WtpGrid {
    fn default() -> Self {
        Self::regular(30_000.0, 100.0).expect("static grid")
    }
}

impl TryFrom<Vec<f64>> for WtpGrid {
    type Error = EconError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<WtpGrid> for Vec<f64> {
    fn from(g: WtpGrid) -> Self {
        g.values
    }
}

#[inline]
fn cost_effective(k: f64, de: f64, dc: f64) -> bool {
    k * de - dc > 0.0
}

fn check_pairs(de: &[f64], dc: &[f64]) -> Result<(), EconError> {
    if de.len() != dc.len() {
        return Err(EconError::LengthMismatch(de.len(), dc.len()));
    }
    if let Some(i) = (0..de.len()).find(|&i| !de[i].is_finite() || !dc[i].is_finite()) {
        return Err(EconError::NonFinite(i));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Icer {
    Defined {
        value: f64,
        mean_delta_e: f64,
        mean_delta_c: f64,
    },
    /// E[Δe] is too close to zero for the ratio to mean anything.
    Undefined {
        mean_delta_e: f64,
        mean_delta_c: f64,
    },
}

impl Icer {
    pub fn value(&self) -> Option<f64> {
        match self {
            Icer::Defined { value, .. } => Some(*value),
            Icer::Undefined { .. } => None,
        }
    }
}

/// Ratio of posterior means E[Δc]/E[Δe], not the mean of ratios.
pub fn icer(de: &[f64], dc: &[f64]) -> Result<Icer, EconError> {
    check_pairs(de, dc)?;
    if de.is_empty() {
        return Err(EconError::TooFewDraws { need: 1, got: 0 });
    }
    let (me, mc) = (mean(de), mean(dc));
    Ok(if me.abs() < ICER_TOLERANCE {
        Icer::Undefined {
            mean_delta_e: me,
            mean_delta_c: mc,
        }
    } else {
        Icer::Defined {
            value: mc / me,
            mean_delta_e: me,
            mean_delta_c: mc,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeacPoint {
    pub k: f64,
    pub probability: f64,
}

/// Acceptability curve: at each `k` the share of draws with `k·Δe − Δc > 0`.
///
/// For a fixed draw the net benefit is monotone in `k`, so the thresholds
/// where it is positive form a prefix or a suffix of the sorted grid. Each
/// draw is located with a binary search on the exact predicate and the
/// counts are accumulated in a single pass, giving the same answer as a
/// full recount at every `k`.
pub fn ceac(de: &[f64], dc: &[f64], grid: &WtpGrid) -> Result<Vec<CeacPoint>, EconError> {
    check_pairs(de, dc)?;
    if grid.is_empty() {
        return Err(EconError::EmptyGrid);
    }
    if de.len() < MIN_CEAC_DRAWS {
        return Err(EconError::TooFewDraws {
            need: MIN_CEAC_DRAWS,
            got: de.len(),
        });
    }
    let ks = grid.values();
    let m = ks.len();
    // starts[i]: draws that become cost-effective at ks[i]
    // ends[i]: draws that stop being cost-effective at ks[i]
    let mut starts = vec![0usize; m + 1];
    let mut ends = vec![0usize; m + 1];
    for (&e, &c) in de.iter().zip(dc) {
        if e > 0.0 {
            let first = ks.partition_point(|&k| !cost_effective(k, e, c));
            starts[first] += 1;
        } else if e < 0.0 {
            let stop = ks.partition_point(|&k| cost_effective(k, e, c));
            starts[0] += 1;
            ends[stop] += 1;
        } else if cost_effective(0.0, e, c) {
            starts[0] += 1;
        }
    }
    let n = de.len() as f64;
    let mut active = 0isize;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            active += starts[i] as isize - ends[i] as isize;
            CeacPoint {
                k,
                probability: active as f64 / n,
            }
        })
        .collect())
}

/// Shares of draws in each quadrant of the cost-effectiveness plane. East
/// means Δe > 0 and north means Δc > 0; draws on an axis go west or south,
/// so the four shares always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrants {
    pub north_east: f64,
    pub north_west: f64,
    pub south_east: f64,
    pub south_west: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CepSummary {
    pub k_ref: f64,
    pub quadrants: Quadrants,
    /// Share of draws below the line `Δc = k_ref·Δe`; equals the CEAC at `k_ref`.
    pub sustainability_fraction: f64,
}

pub fn cep_summary(de: &[f64], dc: &[f64], k_ref: f64) -> Result<CepSummary, EconError> {
    check_pairs(de, dc)?;
    if !(k_ref >= 0.0 && k_ref.is_finite()) {
        return Err(EconError::InvalidThreshold(k_ref));
    }
    if de.is_empty() {
        return Err(EconError::TooFewDraws { need: 1, got: 0 });
    }
    let mut counts = [0usize; 4];
    let mut sustainable = 0usize;
    for (&e, &c) in de.iter().zip(dc) {
        let idx = match (c > 0.0, e > 0.0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[idx] += 1;
        sustainable += cost_effective(k_ref, e, c) as usize;
    }
    let n = de.len() as f64;
    Ok(CepSummary {
        k_ref,
        quadrants: Quadrants {
            north_east: counts[0] as f64 / n,
            north_west: counts[1] as f64 / n,
            south_east: counts[2] as f64 / n,
            south_west: counts[3] as f64 / n,
        },
        sustainability_fraction: sustainable as f64 / n,
    })
}

/// Incremental net benefit `k·Δe − Δc` summarised over draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetBenefit {
    pub k: f64,
    pub mean: f64,
    pub probability_positive: f64,
}

pub fn net_benefit(de: &[f64], dc: &[f64], k: f64) -> Result<NetBenefit, EconError> {
    let cep = cep_summary(de, dc, k)?;
    Ok(NetBenefit {
        k,
        mean: k * mean(de) - mean(dc),
        probability_positive: cep.sustainability_fraction,
    })
}

/// Everything derived from one set of increment draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeaResult {
    pub icer: Icer,
    pub cep: CepSummary,
    pub net_benefit: NetBenefit,
    pub ceac: Vec<CeacPoint>,
    /// (Δe, Δc) per draw, in pooled chain order.
    pub cep_points: Vec<(f64, f64)>,
}

/// The JSON summary: ICER, quadrant shares and net benefit at `k_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeaSummary {
    pub icer: Icer,
    pub k_ref: f64,
    pub quadrants: Quadrants,
    pub sustainability_fraction: f64,
    pub net_benefit: NetBenefit,
    pub n_draws: usize,
}

impl CeaResult {
    pub fn from_increments(
        de: &[f64],
        dc: &[f64],
        grid: &WtpGrid,
        k_ref: f64,
    ) -> Result<Self, EconError> {
        Ok(Self {
            icer: icer(de, dc)?,
            cep: cep_summary(de, dc, k_ref)?,
            net_benefit: net_benefit(de, dc, k_ref)?,
            ceac: ceac(de, dc, grid)?,
            cep_points: de.iter().copied().zip(dc.iter().copied()).collect(),
        })
    }

    pub fn summary(&self) -> CeaSummary {
        CeaSummary {
            icer: self.icer,
            k_ref: self.cep.k_ref,
            quadrants: self.cep.quadrants,
            sustainability_fraction: self.cep.sustainability_fraction,
            net_benefit: self.net_benefit,
            n_draws: self.cep_points.len(),
        }
    }

    pub fn write_ceac_csv<W: Write>(&self, writer: W) -> Result<(), EconError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "probability"])?;
        for p in &self.ceac {
            wtr.write_record([p.k.to_string(), p.probability.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_cep_csv<W: Write>(&self, writer: W) -> Result<(), EconError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["draw", "delta_e", "delta_c"])?;
        for (i, (e, c)) in self.cep_points.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), e.to_string(), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Economic evaluation of a fitted model from its pooled Δe and Δc draws.
pub fn evaluate(
    draws: &PosteriorDraws,
    grid: &WtpGrid,
    k_ref: f64,
) -> Result<CeaResult, EconError> {
    CeaResult::from_increments(&draws.delta_e(), &draws.delta_c(), grid, k_ref)
}
