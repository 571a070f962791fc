use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dist::{expit, half_cauchy_cdf, half_cauchy_ln_pdf, logistic_ln_pdf, normal_ln_pdf};
use super::likelihood::{ArmParams, BaselineParams, CostModelParams, EffectModelParams};
use super::{Family, ModelError, ModelSpec};

/// SD of a Normal with precision `1e-5`.
const SD_PRECISION_1E5: f64 = 316.227_766_016_837_9;

/// Prior on a location or regression coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Logistic { location: f64, scale: f64 },
}

impl Prior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => normal_ln_pdf(x, mean, sd),
            Prior::Logistic { location, scale } => logistic_ln_pdf(x, location, scale),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            Prior::Logistic { location, scale } => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                location + scale * (u / (1.0 - u)).ln()
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::Logistic { location, scale } => {
                location.is_finite() && scale > 0.0 && scale.is_finite()
            }
        };
        ok.then_some(())
            .ok_or_else(|| ModelError::InvalidSpec(format!("invalid prior for {name}: {self:?}")))
    }
}

/// Prior on a standard deviation. Both kinds are truncated to `(0, bound)`
/// when the likelihood imposes an upper bound on the SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScalePrior {
    Uniform { upper: f64 },
    HalfCauchy { scale: f64 },
}

impl ScalePrior {
    /// Log-density on `(0, bound)`. The truncation is part of the density,
    /// so a bound that moves with other parameters contributes to their
    /// conditional posteriors too.
    pub fn ln_pdf(&self, x: f64, bound: f64) -> f64 {
        match *self {
            ScalePrior::Uniform { upper } => {
                let b = upper.min(bound);
                if x > 0.0 && x < b {
                    -b.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScalePrior::HalfCauchy { scale } => {
                if x > 0.0 && x < bound {
                    half_cauchy_ln_pdf(x, scale) - half_cauchy_cdf(bound, scale).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, bound: f64) -> f64 {
        match *self {
            ScalePrior::Uniform { upper } => rng.random_range(0.0..upper.min(bound)),
            ScalePrior::HalfCauchy { scale } => {
                // inverse CDF restricted to (0, bound)
                let p = rng.random_range(0.0..half_cauchy_cdf(bound, scale));
                scale * (p * std::f64::consts::FRAC_PI_2).tan()
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        let ok = match *self {
            ScalePrior::Uniform { upper } => upper > 0.0,
            ScalePrior::HalfCauchy { scale } => scale > 0.0 && scale.is_finite(),
        };
        ok.then_some(())
            .ok_or_else(|| ModelError::InvalidSpec(format!("invalid prior for {name}: {self:?}")))
    }
}

/// Upper bound on the SD of a Beta with the given mean.
#[inline]
pub(crate) fn beta_sd_bound(mean: f64) -> f64 {
    (mean * (1.0 - mean)).sqrt()
}

/// Prior configuration. Cost regression priors left unset take a
/// family-dependent default: the Gamma families put them on the log scale,
/// the Normal family on the natural cost scale, where a much wider prior is
/// needed to stay vague.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub effect_intercept: Prior,
    pub effect_slope: Prior,
    pub effect_sd: ScalePrior,
    pub cost_intercept: Option<Prior>,
    pub cost_slope: Option<Prior>,
    pub cost_sd: ScalePrior,
    pub logistic_intercept: Prior,
    pub logistic_slope: Prior,
    pub baseline_location: Prior,
    pub baseline_sd: ScalePrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let vague = Prior::Normal {
            mean: 0.0,
            sd: SD_PRECISION_1E5,
        };
        Self {
            effect_intercept: Prior::Normal {
                mean: 0.0,
                sd: 1000.0,
            },
            effect_slope: Prior::Normal {
                mean: 0.0,
                sd: 1000.0,
            },
            effect_sd: ScalePrior::Uniform { upper: 1000.0 },
            cost_intercept: None,
            cost_slope: None,
            cost_sd: ScalePrior::Uniform { upper: 1000.0 },
            logistic_intercept: Prior::Logistic {
                location: 0.0,
                scale: 1.0,
            },
            logistic_slope: vague,
            baseline_location: vague,
            baseline_sd: ScalePrior::Uniform { upper: 1000.0 },
        }
    }
}

impl PriorConfig {
    /// Priors with every SD replaced by Half-Cauchy(0, 2.5).
    pub fn half_cauchy() -> Self {
        let hc = ScalePrior::HalfCauchy { scale: 2.5 };
        Self {
            effect_sd: hc,
            cost_sd: hc,
            baseline_sd: hc,
            ..Self::default()
        }
    }

    pub fn cost_intercept_for(&self, family: Family) -> Prior {
        self.cost_intercept.unwrap_or(if family.gamma_costs() {
            Prior::Normal {
                mean: 0.0,
                sd: SD_PRECISION_1E5,
            }
        } else {
            Prior::Normal { mean: 0.0, sd: 1e5 }
        })
    }

    pub fn cost_slope_for(&self, family: Family) -> Prior {
        self.cost_slope.unwrap_or(if family.gamma_costs() {
            Prior::Normal {
                mean: 0.0,
                sd: SD_PRECISION_1E5,
            }
        } else {
            Prior::Normal { mean: 0.0, sd: 1e5 }
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.effect_intercept.validate("effect_intercept")?;
        self.effect_slope.validate("effect_slope")?;
        self.effect_sd.validate("effect_sd")?;
        if let Some(p) = &self.cost_intercept {
            p.validate("cost_intercept")?;
        }
        if let Some(p) = &self.cost_slope {
            p.validate("cost_slope")?;
        }
        self.cost_sd.validate("cost_sd")?;
        self.logistic_intercept.validate("logistic_intercept")?;
        self.logistic_slope.validate("logistic_slope")?;
        self.baseline_location.validate("baseline_location")?;
        self.baseline_sd.validate("baseline_sd")
    }
}

/// Prior for the QALY block. For Beta QALYs the SD is uniform below
/// `√(μ(1 − μ))` at `μ = expit(α0)`, so this depends jointly on `α0` and `σ_e`.
pub(crate) fn ln_prior_effect(spec: &ModelSpec, p: &EffectModelParams) -> f64 {
    let pr = &spec.priors;
    let mut lp = pr.effect_intercept.ln_pdf(p.alpha0);
    if spec.effect_baseline {
        lp += pr.effect_slope.ln_pdf(p.alpha1);
    }
    let bound = if spec.family.beta_effects() {
        beta_sd_bound(expit(p.alpha0))
    } else {
        f64::INFINITY
    };
    lp + pr.effect_sd.ln_pdf(p.sigma_e, bound)
}

pub(crate) fn ln_prior_cost(spec: &ModelSpec, p: &CostModelParams) -> f64 {
    let pr = &spec.priors;
    pr.cost_intercept_for(spec.family).ln_pdf(p.beta0)
        + pr.cost_slope_for(spec.family).ln_pdf(p.beta1)
        + pr.cost_sd.ln_pdf(p.sigma_c, f64::INFINITY)
}

/// Logistic regression coefficients; the first entry is the intercept.
pub(crate) fn ln_prior_logistic(spec: &ModelSpec, coefs: &[f64]) -> f64 {
    let pr = &spec.priors;
    coefs
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            if k == 0 {
                pr.logistic_intercept.ln_pdf(g)
            } else {
                pr.logistic_slope.ln_pdf(g)
            }
        })
        .sum()
}

pub(crate) fn ln_prior_baseline(spec: &ModelSpec, p: &BaselineParams) -> f64 {
    let pr = &spec.priors;
    let bound = if spec.family.beta_effects() {
        beta_sd_bound(expit(p.location))
    } else {
        f64::INFINITY
    };
    pr.baseline_location.ln_pdf(p.location) + pr.baseline_sd.ln_pdf(p.sigma_u, bound)
}

/// Joint log prior density of one arm's parameters; `-inf` outside the
/// support.
pub fn log_prior(params: &ArmParams, spec: &ModelSpec) -> f64 {
    let mut lp = ln_prior_effect(spec, &params.effect) + ln_prior_cost(spec, &params.cost);
    if let Some(h) = &params.hurdle {
        lp += ln_prior_logistic(spec, &h.gamma) + ln_prior_logistic(spec, &h.eta);
    }
    if let Some(b) = &params.baseline {
        lp += ln_prior_baseline(spec, b);
    }
    lp
}
