use serde::{Deserialize, Serialize};

use super::{MnarScenario, ModelError};
use crate::data::{Arm, StructuralStatus};

/// Structural-one indicator for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    /// Determined by the observed utilities.
    Known(bool),
    /// Fixed by an MNAR assumption.
    Assumed(bool),
    /// Left to the sampler.
    Sampled,
}

impl Indicator {
    pub fn from_status(status: StructuralStatus) -> Self {
        match status {
            StructuralStatus::Known1 => Indicator::Known(true),
            StructuralStatus::Known0 => Indicator::Known(false),
            StructuralStatus::Ambiguous => Indicator::Sampled,
        }
    }

    /// The fixed value, if any.
    pub fn value(self) -> Option<bool> {
        match self {
            Indicator::Known(d) | Indicator::Assumed(d) => Some(d),
            Indicator::Sampled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub id: String,
    pub arm: Arm,
    pub indicator: Indicator,
}

fn scenario_value(scenario: &MnarScenario, row: &IndicatorRow) -> Option<bool> {
    let control = row.arm == Arm::Control;
    match scenario {
        MnarScenario::Mar => None,
        MnarScenario::Mnar1 => Some(true),
        MnarScenario::Mnar2 => Some(false),
        MnarScenario::Mnar3 => Some(control),
        MnarScenario::Mnar4 => Some(!control),
        MnarScenario::Custom(map) => map.get(&row.id).copied(),
    }
}

/// Fixes the indicators of records without a known status according to
/// `scenario`. Known indicators are never touched and any earlier
/// assumption is replaced, so applying a scenario twice is the same as
/// applying it once.
pub fn apply_mnar_scenario(
    rows: &[IndicatorRow],
    scenario: &MnarScenario,
) -> Result<Vec<IndicatorRow>, ModelError> {
    if let MnarScenario::Custom(map) = scenario {
        for id in map.keys() {
            match rows.iter().find(|r| &r.id == id) {
                None => return Err(ModelError::UnknownRecord(id.clone())),
                Some(r) if matches!(r.indicator, Indicator::Known(_)) => {
                    return Err(ModelError::KnownIndicator(id.clone()))
                }
                Some(_) => {}
            }
        }
    }
    Ok(rows
        .iter()
        .map(|r| {
            let indicator = match r.indicator {
                Indicator::Known(d) => Indicator::Known(d),
                _ => scenario_value(scenario, r).map_or(Indicator::Sampled, Indicator::Assumed),
            };
            IndicatorRow {
                indicator,
                ..r.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn row(id: &str, arm: Arm, status: StructuralStatus) -> IndicatorRow {
        IndicatorRow {
            id: id.into(),
            arm,
            indicator: Indicator::from_status(status),
        }
    }

    // Unequal arms with 13 and 22 ambiguous records
    fn trial_shaped() -> Vec<IndicatorRow> {
        let mut rows = Vec::new();
        for (arm, n, n_amb, n_one) in [(Arm::Control, 53, 13, 12), (Arm::Intervention, 106, 22, 30)]
        {
            for i in 0..n {
                let status = if i < n_amb {
                    StructuralStatus::Ambiguous
                } else if i < n_amb + n_one {
                    StructuralStatus::Known1
                } else {
                    StructuralStatus::Known0
                };
                rows.push(row(&format!("{}-{i}", arm.code()), arm, status));
            }
        }
        rows
    }

    fn sampled_per_arm(rows: &[IndicatorRow]) -> [usize; 2] {
        let mut n = [0; 2];
        for r in rows.iter().filter(|r| r.indicator == Indicator::Sampled) {
            n[r.arm.index()] += 1;
        }
        n
    }

    #[test]
    fn mar_leaves_ambiguous_to_sampler() {
        let rows = trial_shaped();
        let out = apply_mnar_scenario(&rows, &MnarScenario::Mar).unwrap();
        assert_eq!(sampled_per_arm(&out), [13, 22]);
        assert_eq!(out, rows);
    }

    #[test]
    fn table_scenarios() {
        let rows = trial_shaped();
        let expect = [
            (MnarScenario::Mnar1, true, true),
            (MnarScenario::Mnar2, false, false),
            (MnarScenario::Mnar3, true, false),
            (MnarScenario::Mnar4, false, true),
        ];
        for (s, ctrl, intv) in expect {
            let out = apply_mnar_scenario(&rows, &s).unwrap();
            for (before, after) in rows.iter().zip(&out) {
                match before.indicator {
                    Indicator::Known(_) => assert_eq!(before, after),
                    _ => {
                        let want = if after.arm == Arm::Control {
                            ctrl
                        } else {
                            intv
                        };
                        assert_eq!(after.indicator, Indicator::Assumed(want));
                    }
                }
            }
        }
    }

    #[test]
    fn mnar1_and_mnar2_differ_on_ambiguous_set_only() {
        let rows = trial_shaped();
        let a = apply_mnar_scenario(&rows, &MnarScenario::Mnar1).unwrap();
        let b = apply_mnar_scenario(&a, &MnarScenario::Mnar2).unwrap();
        let differ = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x.indicator.value() != y.indicator.value())
            .count();
        assert_eq!(differ, 35);
    }

    #[test]
    fn idempotent() {
        let rows = trial_shaped();
        for s in MnarScenario::STANDARD {
            let once = apply_mnar_scenario(&rows, &s).unwrap();
            let twice = apply_mnar_scenario(&once, &s).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn no_ambiguous_records_means_no_change() {
        let rows: Vec<_> = trial_shaped()
            .into_iter()
            .filter(|r| r.indicator != Indicator::Sampled)
            .collect();
        for s in MnarScenario::STANDARD {
            assert_eq!(apply_mnar_scenario(&rows, &s).unwrap(), rows);
        }
    }

    #[test]
    fn custom_assignments() {
        let rows = trial_shaped();
        let mut map = BTreeMap::new();
        map.insert("1-0".to_string(), true);
        let out = apply_mnar_scenario(&rows, &MnarScenario::Custom(map.clone())).unwrap();
        assert_eq!(out[0].indicator, Indicator::Assumed(true));
        assert_eq!(out[1].indicator, Indicator::Sampled);

        map.insert("1-20".to_string(), false);
        assert_eq!(
            apply_mnar_scenario(&rows, &MnarScenario::Custom(map.clone())),
            Err(ModelError::KnownIndicator("1-20".into()))
        );
        let mut map = BTreeMap::new();
        map.insert("nobody".to_string(), true);
        assert!(matches!(
            apply_mnar_scenario(&rows, &MnarScenario::Custom(map)),
            Err(ModelError::UnknownRecord(_))
        ));
    }
}
