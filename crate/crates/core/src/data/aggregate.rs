use serde::{Deserialize, Serialize};

use super::{DataError, IndividualRecord, TimeGrid};

/// Whether a participant's QALY is known to be a structural one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructuralStatus {
    /// Every utility observed and equal to 1.
    Known1,
    /// Some observed utility is below 1.
    Known0,
    /// Every observed utility equals 1 but at least one is missing.
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedOutcomes {
    pub qaly: Option<f64>,
    pub total_cost: Option<f64>,
    pub structural_status: StructuralStatus,
}

/// Area under the utility curve by the trapezoid rule.
pub fn compute_qaly(utilities: &[f64], grid: &TimeGrid) -> Result<f64, DataError> {
    if utilities.len() != grid.times().len() {
        return Err(DataError::LengthMismatch {
            expected: grid.times().len(),
            found: utilities.len(),
        });
    }
    if let Some((index, &value)) = utilities
        .iter()
        .enumerate()
        .find(|(_, u)| !(0.0..=1.0).contains(*u))
    {
        return Err(DataError::UtilityOutOfRange { index, value });
    }
    Ok(grid
        .deltas()
        .iter()
        .zip(utilities.windows(2))
        .map(|(d, u)| (u[1] + u[0]) * d / 2.0)
        .sum())
}

pub fn compute_total_cost(costs: &[f64]) -> Result<f64, DataError> {
    if let Some((index, &value)) = costs.iter().enumerate().find(|(_, c)| !(**c >= 0.0)) {
        return Err(DataError::NegativeCost { index, value });
    }
    Ok(costs.iter().sum())
}

pub fn classify_structural_status(utilities: &[Option<f64>]) -> StructuralStatus {
    let mut any_missing = utilities.is_empty();
    for u in utilities {
        match u {
            Some(v) if *v < 1.0 => return StructuralStatus::Known0,
            Some(_) => {}
            None => any_missing = true,
        }
    }
    if any_missing {
        StructuralStatus::Ambiguous
    } else {
        StructuralStatus::Known1
    }
}

fn all_present(values: &[Option<f64>]) -> Option<Vec<f64>> {
    values.iter().copied().collect()
}

pub fn aggregate(
    record: &IndividualRecord,
    grid: &TimeGrid,
) -> Result<AggregatedOutcomes, DataError> {
    record.validate(grid.n_followups())?;
    let qaly = all_present(&record.utilities)
        .map(|u| compute_qaly(&u, grid))
        .transpose()?;
    let total_cost = all_present(&record.costs)
        .map(|c| compute_total_cost(&c))
        .transpose()?;
    Ok(AggregatedOutcomes {
        qaly,
        total_cost,
        structural_status: classify_structural_status(&record.utilities),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Arm;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::quarterly_year()
    }

    // Trapezoid integral evaluated as sum of (times) differences times mean
    // height, without the precomputed deltas.
    fn trapezoid_oracle(u: &[f64], times: &[f64], unit: f64) -> f64 {
        let mut area = 0.0;
        for j in 1..u.len() {
            let width = times[j] - times[j - 1];
            area += width * 0.5 * (u[j - 1] + u[j]);
        }
        area / unit
    }

    #[test]
    fn qaly_examples() {
        assert_eq!(compute_qaly(&[1.0; 4], &grid()).unwrap(), 1.0);
        let q = compute_qaly(&[0.8, 0.6, 1.0, 0.5], &grid()).unwrap();
        assert!((q - 0.75).abs() < 1e-15);
        assert_eq!(compute_qaly(&[0.0; 4], &grid()).unwrap(), 0.0);
    }

    #[test]
    fn qaly_errors() {
        assert_eq!(
            compute_qaly(&[1.0; 3], &grid()),
            Err(DataError::LengthMismatch {
                expected: 4,
                found: 3
            })
        );
        assert!(matches!(
            compute_qaly(&[1.0, 1.2, 1.0, 1.0], &grid()),
            Err(DataError::UtilityOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn total_cost_examples() {
        assert_eq!(compute_total_cost(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(compute_total_cost(&[10.5, 0.0, 89.5]).unwrap(), 100.0);
        assert!(matches!(
            compute_total_cost(&[1.0, -0.5]),
            Err(DataError::NegativeCost { index: 1, .. })
        ));
    }

    #[test]
    fn structural_examples() {
        use StructuralStatus::*;
        assert_eq!(classify_structural_status(&[Some(1.0); 4]), Known1);
        assert_eq!(
            classify_structural_status(&[Some(1.0), None, Some(0.7), Some(1.0)]),
            Known0
        );
        assert_eq!(classify_structural_status(&[None; 4]), Ambiguous);
        assert_eq!(
            classify_structural_status(&[Some(1.0), Some(1.0), None, Some(1.0)]),
            Ambiguous
        );
    }

    fn record(utilities: Vec<Option<f64>>, costs: Vec<Option<f64>>) -> IndividualRecord {
        IndividualRecord {
            id: "r".into(),
            arm: Arm::Control,
            utilities,
            costs,
            age: None,
            ethnicity: None,
            employment: None,
        }
    }

    #[test]
    fn aggregate_propagates_missingness() {
        let full = record(vec![Some(1.0); 4], vec![Some(10.0); 3]);
        let out = aggregate(&full, &grid()).unwrap();
        assert_eq!(out.qaly, Some(1.0));
        assert_eq!(out.total_cost, Some(30.0));
        assert_eq!(out.structural_status, StructuralStatus::Known1);

        let partial = record(
            vec![Some(0.9), Some(0.8), Some(1.0), Some(0.7)],
            vec![None, Some(5.0), Some(5.0)],
        );
        let out = aggregate(&partial, &grid()).unwrap();
        assert!(out.qaly.is_some());
        assert_eq!(out.total_cost, None);
        assert_eq!(out.structural_status, StructuralStatus::Known0);
    }

    proptest! {
        #[test]
        fn qaly_matches_trapezoid_oracle(u in prop::collection::vec(0.0f64..=1.0, 4)) {
            let g = grid();
            let q = compute_qaly(&u, &g).unwrap();
            let oracle = trapezoid_oracle(&u, g.times(), g.time_unit());
            prop_assert!((q - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
            prop_assert!((0.0..=g.horizon()).contains(&q));
        }

        #[test]
        fn qaly_is_monotone(u in prop::collection::vec(0.0f64..=1.0, 4), j in 0usize..4, bump in 0.0f64..=1.0) {
            let g = grid();
            let mut raised = u.clone();
            raised[j] = (raised[j] + bump).min(1.0);
            prop_assert!(compute_qaly(&raised, &g).unwrap() >= compute_qaly(&u, &g).unwrap());
        }

        #[test]
        fn never_known1_with_missing(u in prop::collection::vec(prop::option::of(prop::sample::select(vec![0.3, 1.0])), 1..6)) {
            let status = classify_structural_status(&u);
            if u.iter().any(Option::is_none) {
                prop_assert_ne!(status, StructuralStatus::Known1);
            }
        }

        #[test]
        fn total_cost_matches_pairwise_sum(c in prop::collection::vec(0.0f64..1e4, 3)) {
            let total = compute_total_cost(&c).unwrap();
            let pairwise = (c[0] + c[1]) + c[2];
            prop_assert!((total - pairwise).abs() <= 1e-9);
        }
    }
}
