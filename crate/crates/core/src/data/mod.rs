//! Trial data: longitudinal utilities and costs per individual, their
//! aggregation into QALYs and total costs, and classification of
//! structural-one status.

mod aggregate;
mod csv_io;
mod grid;
mod synth;

pub use aggregate::{
    aggregate, classify_structural_status, compute_qaly, compute_total_cost, AggregatedOutcomes,
    StructuralStatus,
};
pub use csv_io::{load_trial_csv, read_trial_csv, write_trial_csv, write_trial_csv_to};
pub use grid::TimeGrid;
pub use synth::{
    generate_synthetic_trial, ArmTruth, CovariateConfig, MissingnessMechanism, SyntheticTrialConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("utility {value} at position {index} outside [0, 1]")]
    UtilityOutOfRange { index: usize, value: f64 },
    #[error("cost {value} at position {index} is negative")]
    NegativeCost { index: usize, value: f64 },
    #[error("value at position {index} is missing")]
    MissingValue { index: usize },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
}

impl From<std::io::Error> for DataError {
    fn from(err: std::io::Error) -> Self {
        DataError::Io(err.to_string())
    }
}

impl From<csv::Error> for DataError {
    fn from(err: csv::Error) -> Self {
        DataError::Csv(err.to_string())
    }
}

/// Treatment arm. Control is arm 1, intervention arm 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Intervention,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Intervention];

    pub fn code(self) -> u8 {
        match self {
            Arm::Control => 1,
            Arm::Intervention => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Arm> {
        match code {
            1 => Some(Arm::Control),
            2 => Some(Arm::Intervention),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One participant. `utilities` holds baseline plus one value per follow-up
/// time, `costs` one value per follow-up interval (no baseline cost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: String,
    pub arm: Arm,
    pub utilities: Vec<Option<f64>>,
    pub costs: Vec<Option<f64>>,
    pub age: Option<f64>,
    pub ethnicity: Option<u32>,
    pub employment: Option<u32>,
}

impl IndividualRecord {
    /// Checks the per-record invariants against a number of follow-up times.
    pub fn validate(&self, n_followups: usize) -> Result<(), DataError> {
        if self.utilities.len() != n_followups + 1 {
            return Err(DataError::LengthMismatch {
                expected: n_followups + 1,
                found: self.utilities.len(),
            });
        }
        if self.costs.len() != n_followups {
            return Err(DataError::LengthMismatch {
                expected: n_followups,
                found: self.costs.len(),
            });
        }
        for (index, u) in self.utilities.iter().enumerate() {
            if let Some(value) = *u {
                if !(0.0..=1.0).contains(&value) {
                    return Err(DataError::UtilityOutOfRange { index, value });
                }
            }
        }
        for (index, c) in self.costs.iter().enumerate() {
            if let Some(value) = *c {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(DataError::NegativeCost { index, value });
                }
            }
        }
        Ok(())
    }

    pub fn baseline_utility(&self) -> Option<f64> {
        self.utilities.first().copied().flatten()
    }

    pub fn is_complete(&self) -> bool {
        self.utilities.iter().all(Option::is_some) && self.costs.iter().all(Option::is_some)
    }
}

/// A two-arm trial: records plus the number of follow-up measurements `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub n_followups: usize,
    pub records: Vec<IndividualRecord>,
}

impl TrialDataset {
    pub fn new(n_followups: usize, records: Vec<IndividualRecord>) -> Result<Self, DataError> {
        for (row, record) in records.iter().enumerate() {
            record.validate(n_followups).map_err(|err| DataError::Row {
                row: row + 1,
                message: err.to_string(),
            })?;
        }
        Ok(Self {
            n_followups,
            records,
        })
    }

    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &IndividualRecord> {
        self.records.iter().filter(move |r| r.arm == arm)
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        self.arm(arm).count()
    }

    /// Records with every utility and cost observed.
    pub fn complete_cases(&self) -> TrialDataset {
        TrialDataset {
            n_followups: self.n_followups,
            records: self
                .records
                .iter()
                .filter(|r| r.is_complete())
                .cloned()
                .collect(),
        }
    }

    /// Per-arm count of complete records.
    pub fn completeness_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for r in self.records.iter().filter(|r| r.is_complete()) {
            counts[r.arm.index()] += 1;
        }
        counts
    }

    /// Observed counts per time point and arm: row 0 is baseline utility,
    /// row `j` counts records with both `u_j` and `c_j` observed.
    pub fn observed_counts(&self) -> Vec<[usize; 2]> {
        let mut table = vec![[0usize; 2]; self.n_followups + 1];
        for r in &self.records {
            let a = r.arm.index();
            if r.utilities[0].is_some() {
                table[0][a] += 1;
            }
            for j in 1..=self.n_followups {
                if r.utilities[j].is_some() && r.costs[j - 1].is_some() {
                    table[j][a] += 1;
                }
            }
        }
        table
    }
}
