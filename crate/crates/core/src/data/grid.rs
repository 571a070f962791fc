use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

fn default_time_unit() -> f64 {
    12.0
}

/// Measurement times (months from baseline) and the time unit used to turn
/// intervals into fractions. Serialized as the sidecar JSON descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    times: Vec<f64>,
    unit: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    measurement_times: Vec<f64>,
    #[serde(default = "default_time_unit")]
    time_unit: f64,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = DataError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        TimeGrid::new(raw.measurement_times, raw.time_unit)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(grid: TimeGrid) -> Self {
        RawGrid {
            measurement_times: grid.times,
            time_unit: grid.unit,
        }
    }
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, unit: f64) -> Result<Self, DataError> {
        if times.len() < 2 {
            return Err(DataError::InvalidGrid(
                "need a baseline and at least one follow-up time".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(DataError::InvalidGrid("first time must be 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(DataError::InvalidGrid(
                "times must be finite and strictly increasing".into(),
            ));
        }
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(DataError::InvalidGrid("time unit must be positive".into()));
        }
        Ok(Self { times, unit })
    }

    /// The 0/3/6/12-month grid with a 12-month unit.
    pub fn quarterly_year() -> Self {
        Self::new(vec![0.0, 3.0, 6.0, 12.0], 12.0).expect("static grid")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::InvalidGrid(e.to_string()))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time_unit(&self) -> f64 {
        self.unit
    }

    /// Number of follow-up measurements `J`.
    pub fn n_followups(&self) -> usize {
        self.times.len() - 1
    }

    /// Interval fractions `δ_j`, one per follow-up.
    pub fn deltas(&self) -> Vec<f64> {
        self.times
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.unit)
            .collect()
    }

    /// Total horizon in time units, `Σ δ_j`.
    pub fn horizon(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / self.unit
    }

    /// Trapezoid weight on each utility (baseline first). The weights sum
    /// to the horizon.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let deltas = self.deltas();
        let mut w = vec![0.0; self.times.len()];
        for (j, d) in deltas.iter().enumerate() {
            w[j] += d / 2.0;
            w[j + 1] += d / 2.0;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltas_sum_to_horizon() {
        let g = TimeGrid::quarterly_year();
        assert_eq!(g.deltas(), vec![0.25, 0.25, 0.5]);
        assert_eq!(g.horizon(), 1.0);
        assert!((g.trapezoid_weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![1.0, 3.0], 12.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 3.0, 3.0], 12.0).is_err());
        assert!(TimeGrid::new(vec![0.0], 12.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 6.0], 0.0).is_err());
    }

    #[test]
    fn json_descriptor_defaults_unit() {
        let g: TimeGrid = serde_json::from_str(r#"{"measurement_times":[0,3,6,12]}"#).unwrap();
        assert_eq!(g, TimeGrid::quarterly_year());
        let bad: Result<TimeGrid, _> = serde_json::from_str(r#"{"measurement_times":[2,3]}"#);
        assert!(bad.is_err());
    }
}
