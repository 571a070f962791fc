//! The three joint model families for effectiveness and costs: Bivariate
//! Normal, Beta-Gamma and the hurdle model with a structural-one component.
//!
//! Every family factors the joint density as a marginal for the QALYs and a
//! conditional for the costs given the QALYs. The hurdle family adds a
//! logistic model for the structural-one indicator and mixes a point mass
//! at 1 with a Beta for everyone else.

pub mod dist;
pub(crate) mod likelihood;
mod mnar;
pub(crate) mod prior;

pub use likelihood::{
    degenerate_ones_component, log_likelihood_cost, log_likelihood_effect,
    log_likelihood_structural, marginal_mean_qalys, ArmParams, BaselineParams, CostModelParams,
    CostView, EffectModelParams, EffectView, HurdleParams, OnesComponent, ONES_MEAN,
};
pub use mnar::{apply_mnar_scenario, Indicator, IndicatorRow};
pub use prior::{log_prior, Prior, PriorConfig, ScalePrior};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("value {value} outside the support of the {what}")]
    Support { what: &'static str, value: f64 },
    #[error("non-positive {0}")]
    NonPositiveScale(&'static str),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("record `{0}` has a known structural status and cannot be reassigned")]
    KnownIndicator(String),
    #[error("record `{0}` not found")]
    UnknownRecord(String),
    #[error("MNAR scenarios are only defined for the hurdle family")]
    ScenarioNeedsHurdle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "bn", alias = "bivariate_normal")]
    BivariateNormal,
    #[serde(rename = "bg", alias = "beta_gamma")]
    BetaGamma,
    #[serde(rename = "hurdle")]
    Hurdle,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::BivariateNormal, Family::BetaGamma, Family::Hurdle];

    pub fn label(self) -> &'static str {
        match self {
            Family::BivariateNormal => "bn",
            Family::BetaGamma => "bg",
            Family::Hurdle => "hurdle",
        }
    }

    /// QALYs on (0, 1) with a logit link.
    pub fn beta_effects(self) -> bool {
        !matches!(self, Family::BivariateNormal)
    }

    /// Costs Gamma with a log link.
    pub fn gamma_costs(self) -> bool {
        !matches!(self, Family::BivariateNormal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bn" => Ok(Family::BivariateNormal),
            "bg" => Ok(Family::BetaGamma),
            "hurdle" => Ok(Family::Hurdle),
            other => Err(ModelError::InvalidSpec(format!("unknown family `{other}`"))),
        }
    }
}

/// How the structural-one component is represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PointMassMode {
    /// Exact point mass at 1.
    #[default]
    Exact,
    /// Near-degenerate Beta with mean `logit⁻¹(logit(0.999999))` and SD `sigma`.
    DegenerateBeta { sigma: f64 },
}

/// Assumption about structural status of records whose QALY is missing and
/// whose observed utilities are all 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MnarScenario {
    /// Indicators are sampled along with everything else.
    #[default]
    Mar,
    /// Ones in both arms.
    Mnar1,
    /// Non-ones in both arms.
    Mnar2,
    /// Ones in control, non-ones in intervention.
    Mnar3,
    /// Non-ones in control, ones in intervention.
    Mnar4,
    /// Explicit per-record assignments by id; unlisted records are sampled.
    Custom(BTreeMap<String, bool>),
}

impl MnarScenario {
    pub const STANDARD: [MnarScenario; 5] = [
        MnarScenario::Mar,
        MnarScenario::Mnar1,
        MnarScenario::Mnar2,
        MnarScenario::Mnar3,
        MnarScenario::Mnar4,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MnarScenario::Mar => "mar",
            MnarScenario::Mnar1 => "mnar1",
            MnarScenario::Mnar2 => "mnar2",
            MnarScenario::Mnar3 => "mnar3",
            MnarScenario::Mnar4 => "mnar4",
            MnarScenario::Custom(_) => "custom",
        }
    }
}

impl FromStr for MnarScenario {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mar" => MnarScenario::Mar,
            "mnar1" => MnarScenario::Mnar1,
            "mnar2" => MnarScenario::Mnar2,
            "mnar3" => MnarScenario::Mnar3,
            "mnar4" => MnarScenario::Mnar4,
            other => {
                return Err(ModelError::InvalidSpec(format!(
                    "unknown scenario `{other}`"
                )))
            }
        })
    }
}

/// Covariates entering the logistic model for structural ones. Age,
/// ethnicity and employment also enter the baseline-utility structural
/// model when that model is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HurdleCovariates {
    pub baseline_utility: bool,
    pub age: bool,
    pub ethnicity: bool,
    pub employment: bool,
}

impl Default for HurdleCovariates {
    fn default() -> Self {
        Self {
            baseline_utility: true,
            age: false,
            ethnicity: false,
            employment: false,
        }
    }
}

impl HurdleCovariates {
    pub fn none() -> Self {
        Self {
            baseline_utility: false,
            age: false,
            ethnicity: false,
            employment: false,
        }
    }

    pub fn all() -> Self {
        Self {
            baseline_utility: true,
            age: true,
            ethnicity: true,
            employment: true,
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-4;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_true() -> bool {
    true
}

/// Full model configuration. Serialized as JSON; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Boundary offset for Beta/Gamma supports: QALYs or utilities at 1 become
    /// `1 − ε`, at 0 become `ε`; zero costs become `ε`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub priors: PriorConfig,
    /// Adjust the QALY location for centred baseline utility.
    #[serde(default = "default_true")]
    pub effect_baseline: bool,
    #[serde(default)]
    pub hurdle_covariates: HurdleCovariates,
    #[serde(default)]
    pub point_mass_mode: PointMassMode,
    #[serde(default)]
    pub mnar_scenario: MnarScenario,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            epsilon: DEFAULT_EPSILON,
            priors: PriorConfig::default(),
            effect_baseline: true,
            hurdle_covariates: HurdleCovariates::default(),
            point_mass_mode: PointMassMode::Exact,
            mnar_scenario: MnarScenario::Mar,
        }
    }

    /// No covariates anywhere: QALYs, costs and structural ones depend only
    /// on arm-level intercepts.
    pub fn unadjusted(family: Family) -> Self {
        Self {
            effect_baseline: false,
            hurdle_covariates: HurdleCovariates::none(),
            ..Self::new(family)
        }
    }

    pub fn with_scenario(mut self, scenario: MnarScenario) -> Self {
        self.mnar_scenario = scenario;
        self
    }

    pub fn with_point_mass(mut self, mode: PointMassMode) -> Self {
        self.point_mass_mode = mode;
        self
    }

    /// Whether baseline utility enters any linear predictor, in which case
    /// missing baseline values have to be modelled and imputed.
    pub fn uses_baseline(&self) -> bool {
        self.effect_baseline
            || (self.family == Family::Hurdle && self.hurdle_covariates.baseline_utility)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(ModelError::InvalidSpec(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        if self.family != Family::Hurdle && self.mnar_scenario != MnarScenario::Mar {
            return Err(ModelError::ScenarioNeedsHurdle);
        }
        if self.family == Family::Hurdle {
            degenerate_ones_component(self.point_mass_mode)?;
        } else if self.point_mass_mode != PointMassMode::Exact {
            return Err(ModelError::InvalidSpec(
                "point-mass mode only applies to the hurdle family".into(),
            ));
        }
        self.priors.validate()
    }
}
