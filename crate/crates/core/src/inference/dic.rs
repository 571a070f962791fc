use serde::{Deserialize, Serialize};

use super::{DevianceTerms, PosteriorDraws};

/// Deviance information criterion over the observed-data modules common to
/// all model families: observed QALYs, observed costs and observed baseline
/// utilities. The structural-one Bernoulli module is excluded, so families
/// with and without it are compared on the same terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicResult {
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub pd: f64,
    pub dic: f64,
    pub scope: String,
    pub terms: DevianceTerms,
}

impl DicResult {
    pub fn from_parts(deviance: &[f64], deviance_at_mean: f64, terms: DevianceTerms) -> Self {
        let mean_deviance = deviance.iter().sum::<f64>() / deviance.len() as f64;
        let pd = mean_deviance - deviance_at_mean;
        Self {
            mean_deviance,
            deviance_at_mean,
            pd,
            dic: mean_deviance + pd,
            scope: "observed_common_modules".into(),
            terms,
        }
    }
}

pub fn dic(draws: &PosteriorDraws) -> DicResult {
    let all: Vec<f64> = draws.deviance.concat();
    DicResult::from_parts(&all, draws.deviance_at_mean, draws.deviance_terms)
}
