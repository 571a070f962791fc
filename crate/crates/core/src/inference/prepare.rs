//! Turns a trial dataset into per-arm model inputs: aggregated outcomes on
//! the model scale, structural indicators and logistic design matrices.

use std::collections::BTreeSet;

use super::FitError;
use crate::data::{aggregate, Arm, IndividualRecord, StructuralStatus, TimeGrid, TrialDataset};
use crate::models::{apply_mnar_scenario, Family, Indicator, IndicatorRow, ModelSpec};

/// Row-major design matrix whose first column is the intercept.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub cols: usize,
    pub data: Vec<f64>,
    pub names: Vec<String>,
}

impl Design {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Per-column SD, used to scale initial proposals.
    pub fn column_sds(&self) -> Vec<f64> {
        let n = self.data.len() / self.cols.max(1);
        (0..self.cols)
            .map(|k| {
                if k == 0 || n < 2 {
                    return 1.0;
                }
                let col = (0..n).map(|i| self.data[i * self.cols + k]);
                let mean = col.clone().sum::<f64>() / n as f64;
                let var = col.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    }
}

/// Model inputs for one arm.
#[derive(Debug, Clone)]
pub(crate) struct ArmData {
    pub arm: Arm,
    pub ids: Vec<String>,
    /// QALYs on the model scale; `None` when missing.
    pub e: Vec<Option<f64>>,
    pub c: Vec<Option<f64>>,
    /// Baseline utility on the model scale.
    pub u0: Vec<Option<f64>>,
    /// Structural indicator after the MNAR scenario (hurdle only).
    pub indicator: Vec<Indicator>,
    /// Observed-case mean used to centre baseline utility, frozen here.
    pub u0_center: f64,
    /// Structural-one design; the baseline-utility column, if any, is
    /// overwritten as baseline utilities are imputed.
    pub gamma_x: Design,
    pub gamma_u0_col: Option<usize>,
    /// Baseline structural-one design (hurdle with a baseline model only).
    pub eta_x: Design,
}

impl ArmData {
    pub fn n(&self) -> usize {
        self.ids.len()
    }
}

fn rescale_unit(x: f64, eps: f64) -> f64 {
    if x >= 1.0 {
        1.0 - eps
    } else if x <= 0.0 {
        eps
    } else {
        x
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn levels(records: &[&IndividualRecord], f: impl Fn(&IndividualRecord) -> Option<u32>) -> Vec<u32> {
    let set: BTreeSet<u32> = records.iter().filter_map(|r| f(r)).collect();
    set.into_iter().collect()
}

/// Builds the covariate columns shared by the two logistic models. Levels
/// are those present in the arm, the smallest being the reference.
fn covariate_columns(
    records: &[&IndividualRecord],
    spec: &ModelSpec,
) -> Result<(Vec<String>, Vec<Vec<f64>>), FitError> {
    let cov = spec.hurdle_covariates;
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if cov.age {
        let mut ages = Vec::with_capacity(records.len());
        for r in records {
            ages.push(r.age.ok_or_else(|| FitError::MissingCovariate {
                id: r.id.clone(),
                covariate: "age",
            })?);
        }
        let m = mean(ages.iter().copied()).unwrap_or(0.0);
        names.push("age".to_string());
        cols.push(ages.iter().map(|a| a - m).collect());
    }
    type Getter = fn(&IndividualRecord) -> Option<u32>;
    let cats: [(bool, &'static str, &'static str, Getter); 2] = [
        (cov.ethnicity, "ethnicity", "eth", |r| r.ethnicity),
        (cov.employment, "employment", "emp", |r| r.employment),
    ];
    for (on, label, short, get) in cats {
        if !on {
            continue;
        }
        if let Some(r) = records.iter().find(|r| get(r).is_none()) {
            return Err(FitError::MissingCovariate {
                id: r.id.clone(),
                covariate: label,
            });
        }
        for level in levels(records, get).into_iter().skip(1) {
            names.push(format!("{short}{level}"));
            cols.push(
                records
                    .iter()
                    .map(|r| f64::from(u8::from(get(r) == Some(level))))
                    .collect(),
            );
        }
    }
    Ok((names, cols))
}

fn design(n: usize, prefix: &str, names: &[String], cols: &[Vec<f64>]) -> Design {
    let k = 1 + cols.len();
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        data.push(1.0);
        data.extend(cols.iter().map(|c| c[i]));
    }
    let mut all = vec![format!("{prefix}0")];
    all.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    Design {
        cols: k,
        data,
        names: all,
    }
}

/// Checks that QALYs fit the family's support on this grid.
pub(crate) fn check_grid(family: Family, grid: &TimeGrid) -> Result<(), FitError> {
    let h = grid.horizon();
    match family {
        Family::Hurdle if (h - 1.0).abs() > 1e-9 => Err(FitError::Config(format!(
            "the hurdle model needs QALYs on [0, 1]: the grid must span exactly one time unit, got {h}"
        ))),
        Family::BetaGamma if h > 1.0 + 1e-9 => Err(FitError::Config(format!(
            "Beta QALYs need a grid spanning at most one time unit, got {h}"
        ))),
        _ => Ok(()),
    }
}

pub(crate) fn prepare_arm(
    dataset: &TrialDataset,
    grid: &TimeGrid,
    spec: &ModelSpec,
    arm: Arm,
) -> Result<ArmData, FitError> {
    let records: Vec<&IndividualRecord> = dataset.arm(arm).collect();
    if records.is_empty() {
        return Err(FitError::EmptyArm(arm));
    }
    let family = spec.family;
    let eps = spec.epsilon;
    let n = records.len();

    let mut ids = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut u0 = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for r in &records {
        let agg = aggregate(r, grid)?;
        ids.push(r.id.clone());
        let status = agg.structural_status;
        e.push(agg.qaly.map(|q| match family {
            Family::BivariateNormal => q,
            Family::BetaGamma => rescale_unit(q, eps),
            // structural ones stay at exactly 1
            Family::Hurdle if status == StructuralStatus::Known1 => 1.0,
            Family::Hurdle => rescale_unit(q, eps).min(1.0 - f64::EPSILON),
        }));
        c.push(agg.total_cost.map(|x| {
            if family.gamma_costs() && x <= 0.0 {
                eps
            } else {
                x
            }
        }));
        u0.push(r.baseline_utility().map(|u| match family {
            Family::BivariateNormal => u,
            Family::BetaGamma => rescale_unit(u, eps),
            Family::Hurdle if u >= 1.0 => 1.0,
            Family::Hurdle => rescale_unit(u, eps),
        }));
        rows.push(IndicatorRow {
            id: r.id.clone(),
            arm,
            indicator: if family == Family::Hurdle {
                Indicator::from_status(status)
            } else {
                Indicator::Known(false)
            },
        });
    }

    let indicator = if family == Family::Hurdle {
        // Custom assignments may name records of either arm.
        let scenario = match &spec.mnar_scenario {
            crate::models::MnarScenario::Custom(map) => crate::models::MnarScenario::Custom(
                map.iter()
                    .filter(|(id, _)| ids.contains(id))
                    .map(|(k, v)| (k.clone(), *v))
                    .collect(),
            ),
            s => s.clone(),
        };
        apply_mnar_scenario(&rows, &scenario)?
            .into_iter()
            .map(|r| r.indicator)
            .collect()
    } else {
        rows.into_iter().map(|r| r.indicator).collect()
    };

    let u0_center = mean(u0.iter().flatten().copied()).unwrap_or(0.0);

    let (cov_names, cov_cols) = if family == Family::Hurdle {
        covariate_columns(&records, spec)?
    } else {
        (Vec::new(), Vec::new())
    };
    let use_u0 = family == Family::Hurdle && spec.hurdle_covariates.baseline_utility;
    let mut gamma_names = Vec::new();
    let mut gamma_cols = Vec::new();
    if use_u0 {
        gamma_names.push("u0".to_string());
        gamma_cols.push(
            u0.iter()
                .map(|u| u.map_or(0.0, |u| u - u0_center))
                .collect::<Vec<f64>>(),
        );
    }
    gamma_names.extend(cov_names.iter().cloned());
    gamma_cols.extend(cov_cols.iter().cloned());
    let gamma_x = design(n, "gamma", &gamma_names, &gamma_cols);
    let eta_x = if family == Family::Hurdle && spec.uses_baseline() {
        design(n, "eta", &cov_names, &cov_cols)
    } else {
        design(n, "eta", &[], &[])
    };

    Ok(ArmData {
        arm,
        ids,
        e,
        c,
        u0,
        indicator,
        u0_center,
        gamma_x,
        gamma_u0_col: use_u0.then_some(1),
        eta_x,
    })
}

/// Prepares both arms, checking that custom MNAR assignments name real
/// records.
pub(crate) fn prepare(
    dataset: &TrialDataset,
    grid: &TimeGrid,
    spec: &ModelSpec,
) -> Result<[ArmData; 2], FitError> {
    if grid.n_followups() != dataset.n_followups {
        return Err(FitError::Config(format!(
            "time grid has {} follow-ups but the data have {}",
            grid.n_followups(),
            dataset.n_followups
        )));
    }
    check_grid(spec.family, grid)?;
    let control = prepare_arm(dataset, grid, spec, Arm::Control)?;
    let intervention = prepare_arm(dataset, grid, spec, Arm::Intervention)?;
    if let crate::models::MnarScenario::Custom(map) = &spec.mnar_scenario {
        if let Some(id) = map
            .keys()
            .find(|id| !control.ids.contains(id) && !intervention.ids.contains(id))
        {
            return Err(FitError::Model(crate::models::ModelError::UnknownRecord(
                id.clone(),
            )));
        }
    }
    Ok([control, intervention])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HurdleCovariates, MnarScenario};

    fn rec(id: &str, arm: Arm, u: [Option<f64>; 3], c: [Option<f64>; 2]) -> IndividualRecord {
        IndividualRecord {
            id: id.into(),
            arm,
            utilities: u.to_vec(),
            costs: c.to_vec(),
            age: Some(40.0),
            ethnicity: Some(1),
            employment: Some(2),
        }
    }

    fn data() -> (TrialDataset, TimeGrid) {
        let grid = TimeGrid::new(vec![0.0, 6.0, 12.0], 12.0).unwrap();
        let recs = vec![
            rec("a", Arm::Control, [Some(1.0); 3], [Some(0.0), Some(10.0)]),
            rec(
                "b",
                Arm::Control,
                [Some(0.5), Some(0.6), None],
                [Some(5.0), None],
            ),
            rec(
                "c",
                Arm::Control,
                [None, Some(1.0), None],
                [Some(5.0), None],
            ),
            rec(
                "d",
                Arm::Intervention,
                [Some(0.8), Some(0.0), Some(0.2)],
                [Some(1.0), Some(2.0)],
            ),
        ];
        (TrialDataset::new(2, recs).unwrap(), grid)
    }

    #[test]
    fn model_scale_and_indicators() {
        let (d, g) = data();
        let spec = ModelSpec::new(Family::Hurdle);
        let a = prepare_arm(&d, &g, &spec, Arm::Control).unwrap();
        assert_eq!(a.e[0], Some(1.0));
        assert_eq!(a.c[0], Some(10.0));
        assert_eq!(a.e[1], None);
        assert_eq!(
            a.indicator,
            vec![
                Indicator::Known(true),
                Indicator::Known(false),
                Indicator::Sampled
            ]
        );
        assert!((a.u0_center - 0.75).abs() < 1e-15);
        assert_eq!(a.gamma_x.names, vec!["gamma0", "gamma_u0"]);
        assert_eq!(a.gamma_x.row(1), &[1.0, -0.25]);

        let bg = prepare_arm(&d, &g, &ModelSpec::new(Family::BetaGamma), Arm::Control).unwrap();
        assert_eq!(bg.e[0], Some(1.0 - 1e-4));
        assert_eq!(bg.u0[0], Some(1.0 - 1e-4));
        assert_eq!(bg.indicator[2], Indicator::Known(false));
    }

    #[test]
    fn zero_costs_and_qalys_are_offset() {
        let grid = TimeGrid::new(vec![0.0, 12.0], 12.0).unwrap();
        let recs = vec![
            IndividualRecord {
                id: "z".into(),
                arm: Arm::Control,
                utilities: vec![Some(0.0), Some(0.0)],
                costs: vec![Some(0.0)],
                age: None,
                ethnicity: None,
                employment: None,
            },
            IndividualRecord {
                id: "y".into(),
                arm: Arm::Intervention,
                utilities: vec![Some(0.5), Some(0.5)],
                costs: vec![Some(3.0)],
                age: None,
                ethnicity: None,
                employment: None,
            },
        ];
        let d = TrialDataset::new(1, recs).unwrap();
        let a = prepare_arm(&d, &grid, &ModelSpec::new(Family::BetaGamma), Arm::Control).unwrap();
        assert_eq!(a.e[0], Some(1e-4));
        assert_eq!(a.c[0], Some(1e-4));
        let bn = prepare_arm(
            &d,
            &grid,
            &ModelSpec::new(Family::BivariateNormal),
            Arm::Control,
        )
        .unwrap();
        assert_eq!(bn.c[0], Some(0.0));
    }

    #[test]
    fn covariate_design_and_missing_covariates() {
        let (mut d, g) = data();
        let mut spec = ModelSpec::new(Family::Hurdle);
        spec.hurdle_covariates = HurdleCovariates::all();
        d.records[1].ethnicity = Some(3);
        let a = prepare_arm(&d, &g, &spec, Arm::Control).unwrap();
        assert_eq!(
            a.gamma_x.names,
            vec!["gamma0", "gamma_u0", "gamma_age", "gamma_eth3"]
        );
        assert_eq!(a.eta_x.names, vec!["eta0", "eta_age", "eta_eth3"]);
        d.records[0].age = None;
        assert!(matches!(
            prepare_arm(&d, &g, &spec, Arm::Control),
            Err(FitError::MissingCovariate {
                covariate: "age",
                ..
            })
        ));
    }

    #[test]
    fn scenarios_and_grid_checks() {
        let (d, g) = data();
        let spec = ModelSpec::new(Family::Hurdle).with_scenario(MnarScenario::Mnar3);
        let [c, i] = prepare(&d, &g, &spec).unwrap();
        assert_eq!(c.indicator[2], Indicator::Assumed(true));
        assert_eq!(i.indicator[0], Indicator::Known(false));
        let half = TimeGrid::new(vec![0.0, 3.0, 6.0], 12.0).unwrap();
        assert!(prepare(&d, &half, &spec).is_err());
        assert!(prepare(&d, &half, &ModelSpec::new(Family::BetaGamma)).is_ok());
        let mut m = std::collections::BTreeMap::new();
        m.insert("ghost".to_string(), true);
        assert!(prepare(
            &d,
            &g,
            &ModelSpec::new(Family::Hurdle).with_scenario(MnarScenario::Custom(m))
        )
        .is_err());
    }
}
