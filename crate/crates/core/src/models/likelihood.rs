use serde::{Deserialize, Serialize};

use super::dist::{
    bernoulli_logit_ln_pmf, beta_mean_sd_ln_pdf, beta_scale, expit, gamma_mean_sd_ln_pdf, logit,
    normal_ln_pdf,
};
use super::{Family, ModelError, PointMassMode};

/// Mean of the near-degenerate ones component.
pub const ONES_MEAN: f64 = 0.999_999;

/// SD of the ones component used to score observed structural ones in the
/// deviance when the component is an exact point mass.
pub const EXACT_DIC_REFERENCE_SD: f64 = 1e-5;

/// Marginal QALY model: location `α0 + α1 (u0 − ū0)` on the link scale and
/// marginal SD `σ_e`. In the hurdle family these are the non-ones component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectModelParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub sigma_e: f64,
}

impl EffectModelParams {
    /// Mean QALY of the continuous component for a centred baseline utility.
    #[inline]
    pub fn location(&self, family: Family, u0_centered: f64) -> f64 {
        let eta = self.alpha0 + self.alpha1 * u0_centered;
        if family.beta_effects() {
            expit(eta)
        } else {
            eta
        }
    }
}

/// Conditional cost model: location `β0 + β1 (e − μ_e)` on the link scale
/// and marginal SD `σ_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_c: f64,
}

impl CostModelParams {
    #[inline]
    pub fn location(&self, family: Family, e: f64, mu_e: f64) -> f64 {
        let eta = self.beta0 + self.beta1 * (e - mu_e);
        if family.gamma_costs() {
            eta.exp()
        } else {
            eta
        }
    }

    pub fn mu_c(&self, family: Family) -> f64 {
        if family.gamma_costs() {
            self.beta0.exp()
        } else {
            self.beta0
        }
    }

    /// Conditional variance of the Normal cost model, `σ_c² − σ_e² β1²`.
    #[inline]
    pub fn normal_conditional_variance(&self, sigma_e: f64) -> f64 {
        self.sigma_c * self.sigma_c - sigma_e * sigma_e * self.beta1 * self.beta1
    }
}

/// Logistic coefficients of the hurdle family. `gamma[0]` is the intercept
/// of the QALY structural-one model and `eta[0]` that of the baseline
/// structural-one model; the remaining entries follow the design columns.
/// Reference levels of categorical covariates have no column and are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurdleParams {
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
}

impl HurdleParams {
    /// Marginal probability of a structural one, `expit(γ0)`.
    pub fn pi_bar(&self) -> f64 {
        expit(self.gamma[0])
    }
}

/// Baseline-utility model: location (`μ_u` for Normal, logit mean `δ0` for
/// Beta) and SD `σ_u` of the continuous part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub location: f64,
    pub sigma_u: f64,
}

impl BaselineParams {
    pub fn mean(&self, family: Family) -> f64 {
        if family.beta_effects() {
            expit(self.location)
        } else {
            self.location
        }
    }
}

/// All parameters for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    pub effect: EffectModelParams,
    pub cost: CostModelParams,
    pub hurdle: Option<HurdleParams>,
    pub baseline: Option<BaselineParams>,
}

impl ArmParams {
    /// Population mean QALY.
    pub fn mu_e(&self, family: Family) -> f64 {
        let mu = self.effect.location(family, 0.0);
        match (&self.hurdle, family) {
            (Some(h), Family::Hurdle) => (1.0 - h.pi_bar()) * mu + h.pi_bar(),
            _ => mu,
        }
    }

    pub fn mu_c(&self, family: Family) -> f64 {
        self.cost.mu_c(family)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectView {
    pub e: f64,
    pub u0_centered: f64,
    /// Hurdle structural indicator; ignored by other families.
    pub structural: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostView {
    pub c: f64,
    pub e: f64,
    pub mu_e: f64,
    /// Marginal QALY SD, which enters the Normal conditional variance.
    pub sigma_e: f64,
}

/// Density of a non-structural QALY; `-inf` outside the support.
#[inline]
pub(crate) fn effect_ln_density(
    family: Family,
    p: &EffectModelParams,
    e: f64,
    u0_centered: f64,
) -> f64 {
    let loc = p.location(family, u0_centered);
    if family.beta_effects() {
        beta_mean_sd_ln_pdf(e, loc, p.sigma_e)
    } else {
        normal_ln_pdf(e, loc, p.sigma_e)
    }
}

/// Conditional cost density; `-inf` outside the support.
#[inline]
pub(crate) fn cost_ln_density(
    family: Family,
    p: &CostModelParams,
    sigma_e: f64,
    c: f64,
    ln_c: f64,
    e: f64,
    mu_e: f64,
) -> f64 {
    let loc = p.location(family, e, mu_e);
    if family.gamma_costs() {
        gamma_mean_sd_ln_pdf(c, ln_c, loc, p.sigma_c)
    } else {
        let var = p.normal_conditional_variance(sigma_e);
        if var > 0.0 {
            normal_ln_pdf(c, loc, var.sqrt())
        } else {
            f64::NEG_INFINITY
        }
    }
}

pub fn log_likelihood_effect(
    params: &EffectModelParams,
    family: Family,
    view: EffectView,
) -> Result<f64, ModelError> {
    if family == Family::Hurdle && view.structural {
        return Ok(0.0);
    }
    if !(params.sigma_e > 0.0) {
        return Err(ModelError::NonPositiveScale("sigma_e"));
    }
    if family.beta_effects() {
        if !(view.e > 0.0 && view.e < 1.0) {
            return Err(ModelError::Support {
                what: "Beta QALY model",
                value: view.e,
            });
        }
        if beta_scale(params.location(family, view.u0_centered), params.sigma_e) <= 0.0 {
            return Err(ModelError::NonPositiveScale("Beta scale tau_e"));
        }
    }
    Ok(effect_ln_density(family, params, view.e, view.u0_centered))
}

pub fn log_likelihood_cost(
    params: &CostModelParams,
    family: Family,
    view: CostView,
) -> Result<f64, ModelError> {
    if !(params.sigma_c > 0.0) {
        return Err(ModelError::NonPositiveScale("sigma_c"));
    }
    if family.gamma_costs() {
        if !(view.c > 0.0) {
            return Err(ModelError::Support {
                what: "Gamma cost model",
                value: view.c,
            });
        }
    } else if params.normal_conditional_variance(view.sigma_e) <= 0.0 {
        return Err(ModelError::NonPositiveScale("conditional cost variance"));
    }
    Ok(cost_ln_density(
        family,
        params,
        view.sigma_e,
        view.c,
        view.c.ln(),
        view.e,
        view.mu_e,
    ))
}

/// Bernoulli log-pmf of a structural indicator under `logit π = xᵀγ`, with
/// `design` the covariate row (leading 1 for the intercept).
#[inline]
pub fn log_likelihood_structural(coefficients: &[f64], design: &[f64], structural: bool) -> f64 {
    let eta: f64 = coefficients.iter().zip(design).map(|(g, x)| g * x).sum();
    bernoulli_logit_ln_pmf(structural, eta)
}

/// Mixture mean `(1 − π̄) μ^{<1} + π̄`.
pub fn marginal_mean_qalys(pi_bar: f64, mu_non_ones: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&pi_bar) {
        return Err(ModelError::Support {
            what: "structural-one probability",
            value: pi_bar,
        });
    }
    if !(0.0..=1.0).contains(&mu_non_ones) {
        return Err(ModelError::Support {
            what: "non-ones mean",
            value: mu_non_ones,
        });
    }
    Ok((1.0 - pi_bar) * mu_non_ones + pi_bar)
}

/// The structural-ones component of the hurdle mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnesComponent {
    PointMass,
    Beta { mean_logit: f64, sd: f64 },
}

impl OnesComponent {
    /// Log-density used to score an observed structural one in the
    /// deviance: the degenerate Beta evaluated at its mean. A point mass is
    /// scored with the reference SD [`EXACT_DIC_REFERENCE_SD`].
    pub fn deviance_ln_density(&self) -> f64 {
        let (mean_logit, sd) = match *self {
            OnesComponent::PointMass => (logit(ONES_MEAN), EXACT_DIC_REFERENCE_SD),
            OnesComponent::Beta { mean_logit, sd } => (mean_logit, sd),
        };
        let mean = expit(mean_logit);
        beta_mean_sd_ln_pdf(mean, mean, sd)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            OnesComponent::PointMass => 1.0,
            OnesComponent::Beta { mean_logit, .. } => expit(mean_logit),
        }
    }
}

/// Resolves the point-mass mode into the ones component of the mixture.
pub fn degenerate_ones_component(mode: PointMassMode) -> Result<OnesComponent, ModelError> {
    match mode {
        PointMassMode::Exact => Ok(OnesComponent::PointMass),
        PointMassMode::DegenerateBeta { sigma } => {
            let bound = (ONES_MEAN * (1.0 - ONES_MEAN)).sqrt();
            if !(sigma > 0.0 && sigma <= 1e-3 && sigma < bound) {
                return Err(ModelError::InvalidSpec(format!(
                    "degenerate-Beta SD must lie in (0, {bound:.6e}), got {sigma}"
                )));
            }
            Ok(OnesComponent::Beta {
                mean_logit: logit(ONES_MEAN),
                sd: sigma,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::dist::beta_shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn effect(alpha0: f64, sigma_e: f64) -> EffectModelParams {
        EffectModelParams {
            alpha0,
            alpha1: 0.0,
            sigma_e,
        }
    }

    #[test]
    fn normal_effect_at_mode() {
        let ll = log_likelihood_effect(
            &effect(0.0, 1.0),
            Family::BivariateNormal,
            EffectView {
                e: 0.0,
                u0_centered: 0.0,
                structural: false,
            },
        )
        .unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn beta_effect_uses_mean_scale_map() {
        // φ = 0.5, σ = 0.25 gives Beta(1.5, 1.5); density at 0.5 is
        // 0.5^1 / B(1.5, 1.5) with B(1.5, 1.5) = π/8.
        let view = EffectView {
            e: 0.5,
            u0_centered: 0.0,
            structural: false,
        };
        let ll = log_likelihood_effect(&effect(0.0, 0.25), Family::BetaGamma, view).unwrap();
        assert!((ll - (0.5 / (PI / 8.0)).ln()).abs() < 1e-10);
        assert_eq!(beta_shapes(0.5, 0.25), Some((1.5, 1.5)));
    }

    #[test]
    fn effect_support_errors() {
        let v = |e| EffectView {
            e,
            u0_centered: 0.0,
            structural: false,
        };
        assert!(matches!(
            log_likelihood_effect(&effect(0.0, 0.2), Family::BetaGamma, v(1.0)),
            Err(ModelError::Support { .. })
        ));
        assert!(matches!(
            log_likelihood_effect(&effect(0.0, 0.6), Family::Hurdle, v(0.4)),
            Err(ModelError::NonPositiveScale(_))
        ));
        let ones = EffectView {
            e: 1.0,
            u0_centered: 0.0,
            structural: true,
        };
        assert_eq!(
            log_likelihood_effect(&effect(0.0, 0.2), Family::Hurdle, ones),
            Ok(0.0)
        );
    }

    #[test]
    fn normal_cost_independence_case() {
        let p = CostModelParams {
            beta0: 100.0,
            beta1: 0.0,
            sigma_c: 30.0,
        };
        assert_eq!(p.normal_conditional_variance(0.2), 900.0);
        let view = CostView {
            c: 120.0,
            e: 0.3,
            mu_e: 0.8,
            sigma_e: 0.2,
        };
        let ll = log_likelihood_cost(&p, Family::BivariateNormal, view).unwrap();
        assert!((ll - normal_ln_pdf(120.0, 100.0, 30.0)).abs() < 1e-14);
    }

    #[test]
    fn bivariate_normal_factorizes_without_slope() {
        let e_params = effect(0.7, 0.2);
        let c_params = CostModelParams {
            beta0: 250.0,
            beta1: 0.0,
            sigma_c: 80.0,
        };
        for &(e, c) in &[(0.4, 100.0), (0.95, 400.0)] {
            let joint = effect_ln_density(Family::BivariateNormal, &e_params, e, 0.0)
                + cost_ln_density(Family::BivariateNormal, &c_params, 0.2, c, 0.0, e, 0.7);
            let separate = normal_ln_pdf(e, 0.7, 0.2) + normal_ln_pdf(c, 250.0, 80.0);
            assert_eq!(joint, separate);
        }
    }

    #[test]
    fn bivariate_normal_slope_identity() {
        // cov(e, c) = σ_e² β1 under the marginal/conditional factorization.
        let (alpha0, sigma_e, beta0, beta1, sigma_c) = (0.7, 0.2, 300.0, 150.0, 60.0);
        let p = CostModelParams {
            beta0,
            beta1,
            sigma_c,
        };
        let tau = p.normal_conditional_variance(sigma_e).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let normal = rand_distr::StandardNormal;
        let mut prods = Vec::with_capacity(n);
        let (mut se, mut sc) = (0.0, 0.0);
        let draws: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let z1: f64 = rng.sample(normal);
                let z2: f64 = rng.sample(normal);
                let e = alpha0 + sigma_e * z1;
                let c = beta0 + beta1 * (e - alpha0) + tau * z2;
                se += e;
                sc += c;
                (e, c)
            })
            .collect();
        let (me, mc) = (se / n as f64, sc / n as f64);
        for (e, c) in &draws {
            prods.push((e - me) * (c - mc));
        }
        let cov = prods.iter().sum::<f64>() / (n - 1) as f64;
        let mean_p = cov;
        let sd_p = (prods.iter().map(|x| (x - mean_p).powi(2)).sum::<f64>() / n as f64).sqrt();
        let se_cov = sd_p / (n as f64).sqrt();
        let target = sigma_e * sigma_e * beta1;
        assert!((cov - target).abs() < 3.0 * se_cov, "{cov} vs {target}");
        // marginal cost SD recovers σ_c
        let var_c = draws.iter().map(|(_, c)| (c - mc).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var_c.sqrt() - sigma_c).abs() / sigma_c < 0.01);
    }

    #[test]
    fn gamma_cost_intercept_sets_mean() {
        let p = CostModelParams {
            beta0: 100f64.ln(),
            beta1: 0.0,
            sigma_c: 40.0,
        };
        for e in [0.1, 0.5, 1.0] {
            assert!((p.location(Family::BetaGamma, e, 0.7) - 100.0).abs() < 1e-10);
        }
        // shape/rate oracle: mean 100, sd 40 → shape 6.25, rate 0.0625
        let view = CostView {
            c: 80.0,
            e: 0.5,
            mu_e: 0.5,
            sigma_e: 0.1,
        };
        let ll = log_likelihood_cost(&p, Family::Hurdle, view).unwrap();
        let (k, r, x) = (6.25f64, 0.0625f64, 80.0f64);
        let oracle = k * r.ln() - libm::lgamma(k) + (k - 1.0) * x.ln() - r * x;
        assert!((ll - oracle).abs() < 1e-10);
        assert!(log_likelihood_cost(&p, Family::BetaGamma, CostView { c: 0.0, ..view }).is_err());
    }

    #[test]
    fn structural_loglik_examples() {
        assert!(
            (log_likelihood_structural(&[0.0, 0.0], &[1.0, 0.3], true) - 0.5f64.ln()).abs() < 1e-15
        );
        let g0 = logit(0.42);
        assert!(
            (log_likelihood_structural(&[g0, 1.3], &[1.0, 0.0], true) - 0.42f64.ln()).abs() < 1e-14
        );
    }

    #[test]
    fn structural_sum_matches_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coefs = [0.3, -1.2, 0.5];
        let rows: Vec<([f64; 3], bool)> = (0..200)
            .map(|_| {
                (
                    [
                        1.0,
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-1.0..1.0),
                    ],
                    rng.random_bool(0.4),
                )
            })
            .collect();
        let summed: f64 = rows
            .iter()
            .map(|(x, d)| log_likelihood_structural(&coefs, x, *d))
            .sum();
        let mut folded = 0.0;
        for (x, d) in &rows {
            let eta = coefs[0] * x[0] + coefs[1] * x[1] + coefs[2] * x[2];
            let p = 1.0 / (1.0 + (-eta).exp());
            folded += if *d { p.ln() } else { (1.0 - p).ln() };
        }
        assert!((summed - folded).abs() < 1e-10);
    }

    #[test]
    fn marginal_mean_examples() {
        assert_eq!(marginal_mean_qalys(0.0, 0.8).unwrap(), 0.8);
        assert_eq!(marginal_mean_qalys(1.0, 0.8).unwrap(), 1.0);
        assert!((marginal_mean_qalys(0.4, 0.8).unwrap() - 0.88).abs() < 1e-15);
        assert!(marginal_mean_qalys(1.2, 0.8).is_err());
    }

    #[test]
    fn marginal_mean_matches_mixture_draws() {
        let (pi, mu, sd) = (0.4, 0.8, 0.1);
        let (a, b) = beta_shapes(mu, sd).unwrap();
        let beta = rand_distr::Beta::new(a, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(pi) {
                    1.0
                } else {
                    beta.sample(&mut rng)
                }
            })
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd_x = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let target = marginal_mean_qalys(pi, mu).unwrap();
        assert!((m - target).abs() < 3.0 * sd_x / (n as f64).sqrt());
    }

    #[test]
    fn degenerate_component() {
        assert_eq!(
            degenerate_ones_component(PointMassMode::Exact).unwrap(),
            OnesComponent::PointMass
        );
        let c = degenerate_ones_component(PointMassMode::DegenerateBeta { sigma: 1e-4 }).unwrap();
        assert!(c.mean() >= 0.999_998);
        for bad in [0.0, -1e-5, 1e-3, 5e-3] {
            assert!(
                degenerate_ones_component(PointMassMode::DegenerateBeta { sigma: bad }).is_err()
            );
        }
    }

    #[test]
    fn deviance_density_grows_as_component_narrows() {
        let dens: Vec<f64> = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&s| {
                degenerate_ones_component(PointMassMode::DegenerateBeta { sigma: s })
                    .unwrap()
                    .deviance_ln_density()
            })
            .collect();
        assert!(dens.windows(2).all(|w| w[1] > w[0]), "{dens:?}");
        assert!(OnesComponent::PointMass.deviance_ln_density().is_finite());
    }
}
