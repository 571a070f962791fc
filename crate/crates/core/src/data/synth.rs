//! Synthetic two-arm trials drawn from the hurdle data-generating process:
//! a Bernoulli structural-one indicator, Beta QALYs for everyone else and
//! Gamma total costs whose mean depends on the QALY.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{compute_qaly, Arm, DataError, IndividualRecord, TimeGrid, TrialDataset};

/// How follow-up outcomes go missing. Each selected record loses either a
/// monotone tail of follow-ups or a single intermittent follow-up, with
/// utilities and costs missing together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MissingnessMechanism {
    None,
    Mcar {
        rate: f64,
    },
    /// `logit p = intercept + baseline_slope * u0 + age_slope * z_age`,
    /// with `z_age` the standardized age.
    Mar {
        intercept: f64,
        #[serde(default)]
        baseline_slope: f64,
        #[serde(default)]
        age_slope: f64,
    },
    /// `logit p = intercept + slope * e`, where `e` is the true QALY.
    Mnar {
        intercept: f64,
        slope: f64,
    },
}

fn default_dropout_share() -> f64 {
    0.5
}

/// Ground truth for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTruth {
    pub n: usize,
    /// Marginal probability of a structural one.
    pub pi_ones: f64,
    /// Mean and SD of the Beta QALYs of non-structural participants.
    pub mu_non_ones: f64,
    pub sd_non_ones: f64,
    /// Total cost mean at the arm's mean QALY, SD and log-scale QALY slope.
    pub cost_mean: f64,
    pub cost_sd: f64,
    #[serde(default)]
    pub cost_slope: f64,
    /// Probability a non-structural participant still has baseline utility 1.
    #[serde(default)]
    pub baseline_ones: f64,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    /// Probability each follow-up of a non-structural trajectory equals 1.
    #[serde(default)]
    pub partial_ones: f64,
    #[serde(default)]
    pub baseline_missing: f64,
    pub missingness: MissingnessMechanism,
    #[serde(default = "default_dropout_share")]
    pub dropout_share: f64,
    /// Selected records lose every utility, baseline included, and every
    /// cost. Ambiguity about a structural one then depends only on the
    /// missingness model, not on the record's own values.
    #[serde(default)]
    pub whole_record: bool,
}

impl ArmTruth {
    /// Marginal mean QALY implied by the truth.
    pub fn mu_e(&self) -> f64 {
        self.pi_ones + (1.0 - self.pi_ones) * self.mu_non_ones
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConfig {
    pub age_mean: f64,
    pub age_sd: f64,
    pub ethnicity_probs: Vec<f64>,
    pub employment_probs: Vec<f64>,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self {
            age_mean: 30.0,
            age_sd: 8.0,
            ethnicity_probs: vec![0.7, 0.2, 0.1],
            employment_probs: vec![0.6, 0.3, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrialConfig {
    pub seed: u64,
    pub grid: TimeGrid,
    /// Control first, intervention second.
    pub arms: [ArmTruth; 2],
    #[serde(default)]
    pub covariates: CovariateConfig,
}

fn check_prob(p: f64, name: &str) -> Result<(), DataError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DataError::InvalidConfig(format!(
            "{name} = {p} is not a probability"
        )))
    }
}

fn check_beta(mean: f64, sd: f64, name: &str) -> Result<(), DataError> {
    if mean > 0.0 && mean < 1.0 && sd > 0.0 && sd * sd < mean * (1.0 - mean) {
        Ok(())
    } else {
        Err(DataError::InvalidConfig(format!(
            "{name}: need 0 < mean < 1 and sd^2 < mean(1 - mean)"
        )))
    }
}

impl SyntheticTrialConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if (self.grid.horizon() - 1.0).abs() > 1e-12 {
            return Err(DataError::InvalidConfig(
                "generator needs a grid spanning exactly one time unit".into(),
            ));
        }
        for (a, t) in self.arms.iter().enumerate() {
            let arm = a + 1;
            if t.n < 2 {
                return Err(DataError::InvalidConfig(format!(
                    "arm {arm}: sample size must be at least 2"
                )));
            }
            check_prob(t.pi_ones, "pi_ones")?;
            check_prob(t.baseline_ones, "baseline_ones")?;
            check_prob(t.partial_ones, "partial_ones")?;
            check_prob(t.baseline_missing, "baseline_missing")?;
            check_prob(t.dropout_share, "dropout_share")?;
            check_beta(t.mu_non_ones, t.sd_non_ones, "non-ones QALY")?;
            check_beta(t.baseline_mean, t.baseline_sd, "baseline utility")?;
            if !(t.cost_mean > 0.0 && t.cost_sd > 0.0 && t.cost_slope.is_finite()) {
                return Err(DataError::InvalidConfig(format!(
                    "arm {arm}: cost mean and SD must be positive"
                )));
            }
            if let MissingnessMechanism::Mcar { rate } = t.missingness {
                check_prob(rate, "missingness rate")?;
            }
        }
        let c = &self.covariates;
        if !(c.age_sd > 0.0)
            || c.ethnicity_probs.is_empty()
            || c.employment_probs.is_empty()
            || c.ethnicity_probs
                .iter()
                .chain(&c.employment_probs)
                .any(|p| !(*p >= 0.0))
        {
            return Err(DataError::InvalidConfig(
                "covariate distributions are invalid".into(),
            ));
        }
        Ok(())
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn beta_from_moments(mean: f64, sd: f64) -> Beta<f64> {
    let scale = mean * (1.0 - mean) / (sd * sd) - 1.0;
    Beta::new(mean * scale, (1.0 - mean) * scale).expect("validated moments")
}

/// Builds a non-structural utility trajectory with AUC equal to `e`. Some
/// follow-ups may sit at exactly 1; the rest share a common value.
fn trajectory_for(
    e: f64,
    mut u0: f64,
    weights: &[f64],
    partial_ones: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n_follow = weights.len() - 1;
    let mut at_one: Vec<bool> = (0..n_follow)
        .map(|_| rng.random_bool(partial_ones))
        .collect();
    if at_one.iter().all(|&b| b) {
        let keep = rng.random_range(0..n_follow);
        at_one[keep] = false;
    }
    let solve = |u0: f64, at_one: &[bool]| {
        let fixed: f64 = weights[0] * u0
            + (1..=n_follow)
                .filter(|&j| at_one[j - 1])
                .map(|j| weights[j])
                .sum::<f64>();
        let free: f64 = (1..=n_follow)
            .filter(|&j| !at_one[j - 1])
            .map(|j| weights[j])
            .sum();
        (e - fixed) / free
    };
    let mut v = solve(u0, &at_one);
    if !(0.0..1.0).contains(&v) {
        at_one.iter_mut().for_each(|b| *b = false);
        v = solve(u0, &at_one);
        if !(0.0..1.0).contains(&v) {
            u0 = e;
            v = e;
        }
    }
    let mut u = vec![u0];
    u.extend(at_one.iter().map(|&one| if one { 1.0 } else { v }));
    u
}

/// Draws a synthetic trial. Deterministic for a fixed configuration.
pub fn generate_synthetic_trial(config: &SyntheticTrialConfig) -> Result<TrialDataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grid = &config.grid;
    let weights = grid.trapezoid_weights();
    let n_follow = grid.n_followups();
    let deltas = grid.deltas();
    let cov = &config.covariates;
    let age_dist = Normal::new(cov.age_mean, cov.age_sd).expect("validated");
    let eth_dist = WeightedIndex::new(&cov.ethnicity_probs)
        .map_err(|e| DataError::InvalidConfig(e.to_string()))?;
    let emp_dist = WeightedIndex::new(&cov.employment_probs)
        .map_err(|e| DataError::InvalidConfig(e.to_string()))?;

    let mut records = Vec::new();
    for (arm, truth) in Arm::BOTH.iter().zip(&config.arms) {
        let qaly_dist = beta_from_moments(truth.mu_non_ones, truth.sd_non_ones);
        let base_dist = beta_from_moments(truth.baseline_mean, truth.baseline_sd);
        let mu_e = truth.mu_e();
        for i in 0..truth.n {
            let age = age_dist.sample(&mut rng);
            let ethnicity = eth_dist.sample(&mut rng) as u32 + 1;
            let employment = emp_dist.sample(&mut rng) as u32 + 1;

            let structural = rng.random_bool(truth.pi_ones);
            let utilities = if structural {
                vec![1.0; n_follow + 1]
            } else {
                let e = qaly_dist.sample(&mut rng).clamp(1e-6, 1.0 - 1e-6);
                let u0 = if rng.random_bool(truth.baseline_ones) {
                    1.0
                } else {
                    base_dist.sample(&mut rng)
                };
                trajectory_for(e, u0, &weights, truth.partial_ones, &mut rng)
            };
            let e = compute_qaly(&utilities, grid)?;

            let mean_cost = truth.cost_mean * (truth.cost_slope * (e - mu_e)).exp();
            let shape = (mean_cost / truth.cost_sd).powi(2);
            let total = Gamma::new(shape, truth.cost_sd * truth.cost_sd / mean_cost)
                .expect("positive parameters")
                .sample(&mut rng);
            let split: Vec<f64> = deltas
                .iter()
                .map(|d| d * Gamma::new(2.0, 1.0).expect("static").sample(&mut rng))
                .collect();
            let split_sum: f64 = split.iter().sum();
            let costs: Vec<f64> = split.iter().map(|s| total * s / split_sum).collect();

            let p_missing = match truth.missingness {
                MissingnessMechanism::None => 0.0,
                MissingnessMechanism::Mcar { rate } => rate,
                MissingnessMechanism::Mar {
                    intercept,
                    baseline_slope,
                    age_slope,
                } => expit(
                    intercept
                        + baseline_slope * utilities[0]
                        + age_slope * (age - cov.age_mean) / cov.age_sd,
                ),
                MissingnessMechanism::Mnar { intercept, slope } => expit(intercept + slope * e),
            };
            let mut u: Vec<Option<f64>> = utilities.into_iter().map(Some).collect();
            let mut c: Vec<Option<f64>> = costs.into_iter().map(Some).collect();
            let selected = rng.random_bool(p_missing);
            if selected && truth.whole_record {
                u.iter_mut().for_each(|v| *v = None);
                c.iter_mut().for_each(|v| *v = None);
            } else if selected {
                let j = rng.random_range(1..=n_follow);
                let last = if rng.random_bool(truth.dropout_share) {
                    n_follow
                } else {
                    j
                };
                for k in j..=last {
                    u[k] = None;
                    c[k - 1] = None;
                }
            }
            if rng.random_bool(truth.baseline_missing) {
                u[0] = None;
            }
            records.push(IndividualRecord {
                id: format!("{}-{:04}", arm.code(), i + 1),
                arm: *arm,
                utilities: u,
                costs: c,
                age: Some((age.clamp(16.0, 90.0) * 10.0).round() / 10.0),
                ethnicity: Some(ethnicity),
                employment: Some(employment),
            });
        }
    }
    TrialDataset::new(n_follow, records)
}

impl SyntheticTrialConfig {
    /// A small two-arm trial on the 0/3/6/12-month grid with no missingness.
    pub fn example(seed: u64) -> Self {
        let arm = |pi_ones: f64, mu: f64, cost: f64| ArmTruth {
            n: 100,
            pi_ones,
            mu_non_ones: mu,
            sd_non_ones: 0.15,
            cost_mean: cost,
            cost_sd: 150.0,
            cost_slope: 0.5,
            baseline_ones: 0.2,
            baseline_mean: 0.75,
            baseline_sd: 0.15,
            partial_ones: 0.2,
            baseline_missing: 0.0,
            missingness: MissingnessMechanism::None,
            dropout_share: 0.5,
            whole_record: false,
        };
        Self {
            seed,
            grid: TimeGrid::quarterly_year(),
            arms: [arm(0.35, 0.75, 200.0), arm(0.45, 0.8, 250.0)],
            covariates: CovariateConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{aggregate, StructuralStatus};

    fn statuses(d: &TrialDataset) -> Vec<StructuralStatus> {
        let g = TimeGrid::quarterly_year();
        d.records
            .iter()
            .map(|r| aggregate(r, &g).unwrap().structural_status)
            .collect()
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticTrialConfig::example(7);
        assert_eq!(
            generate_synthetic_trial(&cfg).unwrap(),
            generate_synthetic_trial(&cfg).unwrap()
        );
        let other = SyntheticTrialConfig::example(8);
        assert_ne!(
            generate_synthetic_trial(&cfg).unwrap(),
            generate_synthetic_trial(&other).unwrap()
        );
    }

    #[test]
    fn no_structural_ones_when_pi_zero() {
        let mut cfg = SyntheticTrialConfig::example(1);
        cfg.arms.iter_mut().for_each(|a| {
            a.pi_ones = 0.0;
            a.partial_ones = 0.9;
            a.baseline_ones = 0.9;
        });
        let d = generate_synthetic_trial(&cfg).unwrap();
        assert!(statuses(&d).iter().all(|s| *s == StructuralStatus::Known0));
    }

    #[test]
    fn all_structural_when_pi_one() {
        let mut cfg = SyntheticTrialConfig::example(2);
        cfg.arms.iter_mut().for_each(|a| a.pi_ones = 1.0);
        let d = generate_synthetic_trial(&cfg).unwrap();
        assert!(statuses(&d).iter().all(|s| *s == StructuralStatus::Known1));
    }

    #[test]
    fn structural_proportion_within_binomial_band() {
        let mut cfg = SyntheticTrialConfig::example(3);
        cfg.arms[0].n = 1000;
        cfg.arms[0].pi_ones = 0.4;
        let d = generate_synthetic_trial(&cfg).unwrap();
        let st = statuses(&d);
        let ones = d
            .records
            .iter()
            .zip(&st)
            .filter(|(r, s)| r.arm == Arm::Control && **s == StructuralStatus::Known1)
            .count();
        let p = ones as f64 / 1000.0;
        assert!((0.35..=0.45).contains(&p), "{p}");
    }

    #[test]
    fn records_satisfy_invariants_under_missingness() {
        let mut cfg = SyntheticTrialConfig::example(4);
        cfg.arms[0].missingness = MissingnessMechanism::Mcar { rate: 0.4 };
        cfg.arms[1].missingness = MissingnessMechanism::Mnar {
            intercept: -2.0,
            slope: 2.5,
        };
        cfg.arms[1].baseline_missing = 0.1;
        let d = generate_synthetic_trial(&cfg).unwrap();
        for r in &d.records {
            r.validate(3).unwrap();
        }
        assert!(d.records.iter().any(|r| !r.is_complete()));
    }

    #[test]
    fn rejects_invalid_config() {
        let mut cfg = SyntheticTrialConfig::example(5);
        cfg.arms[0].n = 1;
        assert!(generate_synthetic_trial(&cfg).is_err());
        let mut cfg = SyntheticTrialConfig::example(5);
        cfg.arms[1].pi_ones = 1.5;
        assert!(generate_synthetic_trial(&cfg).is_err());
        let mut cfg = SyntheticTrialConfig::example(5);
        cfg.arms[1].sd_non_ones = 0.5;
        assert!(generate_synthetic_trial(&cfg).is_err());
    }

    #[test]
    fn trajectories_hit_target_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = TimeGrid::quarterly_year();
        let w = g.trapezoid_weights();
        for _ in 0..500 {
            let e: f64 = rng.random_range(0.01..0.99);
            let u0: f64 = rng.random_range(0.0..=1.0);
            let u = trajectory_for(e, u0, &w, 0.5, &mut rng);
            assert!(u.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!(u.iter().any(|x| *x < 1.0));
            assert!((compute_qaly(&u, &g).unwrap() - e).abs() < 1e-12);
        }
    }
}
