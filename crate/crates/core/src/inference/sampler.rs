//! Metropolis-within-Gibbs for one arm.
//!
//! Parameter blocks are updated by adaptive random-walk Metropolis, scale
//! parameters on the log scale. Missing outcomes, missing baseline
//! utilities and unknown structural indicators are refreshed every
//! iteration by independence Metropolis steps that propose from the model
//! itself, so only the likelihood terms downstream of the imputed value
//! enter the acceptance ratio.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::adapt::AdaptiveProposal;
use super::prepare::ArmData;
use super::{FitError, SamplerConfig};
use crate::models::dist::{
    bernoulli_logit_ln_pmf, beta_shapes, expit, ln_gamma, logit, normal_ln_pdf, LN_SQRT_2PI,
};
use crate::models::likelihood::{cost_ln_density, effect_ln_density};
use crate::models::prior::{ln_prior_baseline, ln_prior_cost, ln_prior_effect, ln_prior_logistic};
use crate::models::{
    degenerate_ones_component, ArmParams, BaselineParams, CostModelParams, EffectModelParams,
    Family, HurdleParams, Indicator, ModelSpec, OnesComponent, ScalePrior,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Block {
    Alpha,
    SigmaE,
    Beta,
    SigmaC,
    Gamma,
    Eta,
    Baseline,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Alpha => "effect regression",
            Block::SigmaE => "effect sd",
            Block::Beta => "cost regression",
            Block::SigmaC => "cost sd",
            Block::Gamma => "structural-one logistic",
            Block::Eta => "baseline structural-one logistic",
            Block::Baseline => "baseline utility",
        }
    }
}

/// Which imputed quantity a stored series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Qaly,
    Cost,
    BaselineUtility,
    StructuralIndicator,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::Qaly => "e",
            Quantity::Cost => "c",
            Quantity::BaselineUtility => "u0",
            Quantity::StructuralIndicator => "d",
        }
    }
}

/// Log-likelihood module totals cached between block updates.
#[derive(Debug, Clone, Copy, Default)]
struct Lls {
    effect: f64,
    cost: f64,
    structural: f64,
    baseline_structural: f64,
    baseline: f64,
}

/// Running sums of `x`, `x²`, `ln x` and `ln(1 − x)`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    s: f64,
    s2: f64,
    sl: f64,
    sl1: f64,
}

impl Moments {
    #[inline]
    fn add(&mut self, x: f64, unit: bool) {
        self.n += 1.0;
        self.s += x;
        self.s2 += x * x;
        if unit {
            self.sl += x.ln();
            self.sl1 += (-x).ln_1p();
        }
    }

    fn normal_ll(&self, mean: f64, sd: f64) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        if !(sd > 0.0) {
            return f64::NEG_INFINITY;
        }
        let ss = self.s2 - 2.0 * mean * self.s + self.n * mean * mean;
        -self.n * (sd.ln() + LN_SQRT_2PI) - ss.max(0.0) / (2.0 * sd * sd)
    }

    fn beta_ll(&self, mean: f64, sd: f64) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match beta_shapes(mean, sd) {
            Some((a, b)) => {
                self.n * (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b))
                    + (a - 1.0) * self.sl
                    + (b - 1.0) * self.sl1
            }
            None => f64::NEG_INFINITY,
        }
    }
}

/// Latent state of one arm's chain.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub p: ArmParams,
    pub mu_e: f64,
    pub e: Vec<f64>,
    pub c: Vec<f64>,
    ln_c: Vec<f64>,
    pub u0: Vec<f64>,
    u0c: Vec<f64>,
    pub d: Vec<bool>,
    du: Vec<bool>,
    /// Structural-one design with the live baseline-utility column.
    gx: Vec<f64>,
    effect_moments: Moments,
    baseline_moments: Moments,
    n_d: usize,
    n_du: usize,
    ll: Lls,
}

/// Output of one chain for one arm.
#[derive(Debug, Clone)]
pub(crate) struct ChainOutput {
    /// Monitored columns, each of length `retained`.
    pub draws: Vec<Vec<f64>>,
    pub deviance: Vec<f64>,
    pub e_sum: Vec<f64>,
    pub u0_sum: Vec<f64>,
    pub imputed: Vec<(usize, Quantity, Vec<f64>)>,
    pub acceptance: Vec<(Block, f64)>,
}

/// Counts of observed-data likelihood terms entering the deviance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DevianceTerms {
    pub effect: usize,
    pub cost: usize,
    pub baseline: usize,
}

impl std::ops::Add for DevianceTerms {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            effect: self.effect + o.effect,
            cost: self.cost + o.cost,
            baseline: self.baseline + o.baseline,
        }
    }
}

pub(crate) struct ArmModel<'a> {
    pub data: &'a ArmData,
    pub spec: &'a ModelSpec,
    pub family: Family,
    pub ones: OnesComponent,
    hurdle: bool,
    baseline: bool,
    effect_slope: bool,
    blocks: Vec<Block>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (v > 0.0).then(|| v.sqrt())
}

fn mean_or(xs: &[f64], fallback: f64) -> f64 {
    if xs.is_empty() {
        fallback
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Largest value a scale parameter may start at under its prior.
fn scale_cap(prior: &ScalePrior) -> f64 {
    match *prior {
        ScalePrior::Uniform { upper } => 0.9 * upper,
        ScalePrior::HalfCauchy { .. } => f64::INFINITY,
    }
}

impl<'a> ArmModel<'a> {
    pub fn new(data: &'a ArmData, spec: &'a ModelSpec) -> Result<Self, FitError> {
        let family = spec.family;
        let hurdle = family == Family::Hurdle;
        let baseline = spec.uses_baseline();
        let mut blocks = vec![Block::Alpha, Block::SigmaE, Block::Beta, Block::SigmaC];
        if hurdle {
            blocks.push(Block::Gamma);
            if baseline {
                blocks.push(Block::Eta);
            }
        }
        if baseline {
            blocks.push(Block::Baseline);
        }
        Ok(Self {
            data,
            spec,
            family,
            ones: degenerate_ones_component(spec.point_mass_mode)?,
            hurdle,
            baseline,
            effect_slope: spec.effect_baseline,
            blocks,
        })
    }

    /// Names of the monitored columns, without the arm suffix.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["alpha0".to_string()];
        if self.effect_slope {
            names.push("alpha1".into());
        }
        names.extend(["sigma_e", "beta0", "beta1", "sigma_c"].map(String::from));
        if self.hurdle {
            names.extend(self.data.gamma_x.names.iter().cloned());
            if self.baseline {
                names.extend(self.data.eta_x.names.iter().cloned());
            }
        }
        if self.baseline {
            let loc = if self.family.beta_effects() {
                "delta0"
            } else {
                "mu_u"
            };
            names.push(loc.into());
            names.push("sigma_u".into());
        }
        names.push("mu_e".into());
        names.push("mu_c".into());
        if self.hurdle {
            names.push("pi_e".into());
        }
        names
    }

    /// Number of leading columns that are primitive parameters.
    pub fn n_primitive(&self) -> usize {
        self.column_names().len() - if self.hurdle { 3 } else { 2 }
    }

    fn flatten(&self, p: &ArmParams, out: &mut Vec<f64>) {
        out.push(p.effect.alpha0);
        if self.effect_slope {
            out.push(p.effect.alpha1);
        }
        out.extend([p.effect.sigma_e, p.cost.beta0, p.cost.beta1, p.cost.sigma_c]);
        if let Some(h) = &p.hurdle {
            out.extend_from_slice(&h.gamma);
            if self.baseline {
                out.extend_from_slice(&h.eta);
            }
        }
        if let Some(b) = &p.baseline {
            out.extend([b.location, b.sigma_u]);
        }
    }

    /// Inverse of the primitive part of [`Self::flatten`].
    pub fn unflatten(&self, v: &[f64]) -> ArmParams {
        let mut it = v.iter().copied();
        let mut next = || it.next().expect("primitive vector too short");
        let alpha0 = next();
        let alpha1 = if self.effect_slope { next() } else { 0.0 };
        let effect = EffectModelParams {
            alpha0,
            alpha1,
            sigma_e: next(),
        };
        let cost = CostModelParams {
            beta0: next(),
            beta1: next(),
            sigma_c: next(),
        };
        let hurdle = self.hurdle.then(|| {
            let gamma = (0..self.data.gamma_x.cols).map(|_| next()).collect();
            let eta = if self.baseline {
                (0..self.data.eta_x.cols).map(|_| next()).collect()
            } else {
                Vec::new()
            };
            HurdleParams { gamma, eta }
        });
        let baseline = self.baseline.then(|| BaselineParams {
            location: next(),
            sigma_u: next(),
        });
        ArmParams {
            effect,
            cost,
            hurdle,
            baseline,
        }
    }

    pub fn mu_e(&self, p: &ArmParams) -> f64 {
        match self.family {
            Family::BivariateNormal => p.effect.alpha0,
            Family::BetaGamma => expit(p.effect.alpha0),
            Family::Hurdle => {
                let pi = expit(p.hurdle.as_ref().expect("hurdle params").gamma[0]);
                (1.0 - pi) * expit(p.effect.alpha0) + pi * self.ones.mean()
            }
        }
    }

    #[inline]
    fn link_inv(&self, x: f64) -> f64 {
        if self.family.beta_effects() {
            expit(x)
        } else {
            x
        }
    }

    #[inline]
    fn in_effect_module(&self, s: &State, i: usize) -> bool {
        !(self.hurdle && s.d[i])
    }

    // ---- module log-likelihoods -------------------------------------

    fn effect_ll(&self, s: &State, p: &EffectModelParams) -> f64 {
        if !self.effect_slope {
            let mean = self.link_inv(p.alpha0);
            return if self.family.beta_effects() {
                s.effect_moments.beta_ll(mean, p.sigma_e)
            } else {
                s.effect_moments.normal_ll(mean, p.sigma_e)
            };
        }
        let mut ll = 0.0;
        for i in 0..s.e.len() {
            if self.in_effect_module(s, i) {
                ll += effect_ln_density(self.family, p, s.e[i], s.u0c[i]);
            }
        }
        ll
    }

    fn cost_ll(&self, s: &State, p: &CostModelParams, sigma_e: f64, mu_e: f64) -> f64 {
        if !(p.sigma_c > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = s.c.len() as f64;
        if self.family.gamma_costs() {
            let inv_s2 = 1.0 / (p.sigma_c * p.sigma_c);
            let mut ll = 0.0;
            for i in 0..s.c.len() {
                let phi = (p.beta0 + p.beta1 * (s.e[i] - mu_e)).exp();
                let rate = phi * inv_s2;
                let shape = phi * rate;
                ll +=
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * s.ln_c[i] - rate * s.c[i];
            }
            if ll.is_nan() {
                f64::NEG_INFINITY
            } else {
                ll
            }
        } else {
            let var = p.normal_conditional_variance(sigma_e);
            if !(var > 0.0) {
                return f64::NEG_INFINITY;
            }
            let mut ss = 0.0;
            for i in 0..s.c.len() {
                let r = s.c[i] - p.beta0 - p.beta1 * (s.e[i] - mu_e);
                ss += r * r;
            }
            -n * (0.5 * var.ln() + LN_SQRT_2PI) - ss / (2.0 * var)
        }
    }

    fn structural_ll(&self, s: &State, gamma: &[f64]) -> f64 {
        let k = gamma.len();
        if k == 1 {
            let n1 = s.n_d as f64;
            let n0 = (s.d.len() - s.n_d) as f64;
            return n1 * bernoulli_logit_ln_pmf(true, gamma[0])
                + n0 * bernoulli_logit_ln_pmf(false, gamma[0]);
        }
        let mut ll = 0.0;
        for i in 0..s.d.len() {
            ll += bernoulli_logit_ln_pmf(s.d[i], dot(&s.gx[i * k..(i + 1) * k], gamma));
        }
        ll
    }

    fn baseline_structural_ll(&self, s: &State, eta: &[f64]) -> f64 {
        let x = &self.data.eta_x;
        if x.cols == 1 {
            let n1 = s.n_du as f64;
            let n0 = (s.du.len() - s.n_du) as f64;
            return n1 * bernoulli_logit_ln_pmf(true, eta[0])
                + n0 * bernoulli_logit_ln_pmf(false, eta[0]);
        }
        (0..s.du.len())
            .map(|i| bernoulli_logit_ln_pmf(s.du[i], dot(x.row(i), eta)))
            .sum()
    }

    fn baseline_ll(&self, s: &State, b: &BaselineParams) -> f64 {
        let mean = self.link_inv(b.location);
        if self.family.beta_effects() {
            s.baseline_moments.beta_ll(mean, b.sigma_u)
        } else {
            s.baseline_moments.normal_ll(mean, b.sigma_u)
        }
    }

    fn all_lls(&self, s: &State) -> Lls {
        let p = &s.p;
        let mut ll = Lls {
            effect: self.effect_ll(s, &p.effect),
            cost: self.cost_ll(s, &p.cost, p.effect.sigma_e, s.mu_e),
            ..Lls::default()
        };
        if let Some(h) = &p.hurdle {
            ll.structural = self.structural_ll(s, &h.gamma);
            if self.baseline {
                ll.baseline_structural = self.baseline_structural_ll(s, &h.eta);
            }
        }
        if let Some(b) = &p.baseline {
            ll.baseline = self.baseline_ll(s, b);
        }
        ll
    }

    /// Recomputes sufficient statistics and module totals after the latent
    /// values have changed.
    fn refresh(&self, s: &mut State) {
        let unit = self.family.beta_effects();
        let mut em = Moments::default();
        for i in 0..s.e.len() {
            if self.in_effect_module(s, i) {
                em.add(s.e[i], unit);
            }
        }
        s.effect_moments = em;
        let mut bm = Moments::default();
        if self.baseline {
            for i in 0..s.u0.len() {
                if !(self.hurdle && s.du[i]) {
                    bm.add(s.u0[i], unit);
                }
            }
        }
        s.baseline_moments = bm;
        s.n_d = s.d.iter().filter(|&&d| d).count();
        s.n_du = s.du.iter().filter(|&&d| d).count();
        s.ll = self.all_lls(s);
    }

    // ---- blocks -------------------------------------------------------

    fn block_values(&self, p: &ArmParams, blk: Block) -> Vec<f64> {
        match blk {
            Block::Alpha if self.effect_slope => vec![p.effect.alpha0, p.effect.alpha1],
            Block::Alpha => vec![p.effect.alpha0],
            Block::SigmaE => vec![p.effect.sigma_e.ln()],
            Block::Beta => vec![p.cost.beta0, p.cost.beta1],
            Block::SigmaC => vec![p.cost.sigma_c.ln()],
            Block::Gamma => p.hurdle.as_ref().expect("hurdle").gamma.clone(),
            Block::Eta => p.hurdle.as_ref().expect("hurdle").eta.clone(),
            Block::Baseline => {
                let b = p.baseline.as_ref().expect("baseline");
                vec![b.location, b.sigma_u.ln()]
            }
        }
    }

    fn set_block(&self, p: &mut ArmParams, blk: Block, v: &[f64]) {
        match blk {
            Block::Alpha => {
                p.effect.alpha0 = v[0];
                if self.effect_slope {
                    p.effect.alpha1 = v[1];
                }
            }
            Block::SigmaE => p.effect.sigma_e = v[0].exp(),
            Block::Beta => {
                p.cost.beta0 = v[0];
                p.cost.beta1 = v[1];
            }
            Block::SigmaC => p.cost.sigma_c = v[0].exp(),
            Block::Gamma => p.hurdle.as_mut().expect("hurdle").gamma.copy_from_slice(v),
            Block::Eta => p.hurdle.as_mut().expect("hurdle").eta.copy_from_slice(v),
            Block::Baseline => {
                let b = p.baseline.as_mut().expect("baseline");
                b.location = v[0];
                b.sigma_u = v[1].exp();
            }
        }
    }

    fn cost_depends_on(&self, blk: Block) -> bool {
        match blk {
            Block::Alpha | Block::Beta | Block::SigmaC => true,
            Block::SigmaE => !self.family.gamma_costs(),
            Block::Gamma => self.hurdle,
            Block::Eta | Block::Baseline => false,
        }
    }

    /// Prior plus log-Jacobian of the block's sampling scale.
    fn block_prior(&self, p: &ArmParams, blk: Block) -> f64 {
        match blk {
            Block::Alpha => ln_prior_effect(self.spec, &p.effect),
            Block::SigmaE => ln_prior_effect(self.spec, &p.effect) + p.effect.sigma_e.ln(),
            Block::Beta => ln_prior_cost(self.spec, &p.cost),
            Block::SigmaC => ln_prior_cost(self.spec, &p.cost) + p.cost.sigma_c.ln(),
            Block::Gamma => ln_prior_logistic(self.spec, &p.hurdle.as_ref().expect("hurdle").gamma),
            Block::Eta => ln_prior_logistic(self.spec, &p.hurdle.as_ref().expect("hurdle").eta),
            Block::Baseline => {
                let b = p.baseline.as_ref().expect("baseline");
                ln_prior_baseline(self.spec, b) + b.sigma_u.ln()
            }
        }
    }

    fn block_ll_cached(&self, s: &State, blk: Block) -> f64 {
        let cost = if self.cost_depends_on(blk) {
            s.ll.cost
        } else {
            0.0
        };
        cost + match blk {
            Block::Alpha | Block::SigmaE => s.ll.effect,
            Block::Beta | Block::SigmaC => 0.0,
            Block::Gamma => s.ll.structural,
            Block::Eta => s.ll.baseline_structural,
            Block::Baseline => s.ll.baseline,
        }
    }

    /// Block log-likelihood at candidate parameters, with the updated cache.
    fn block_ll_new(&self, s: &State, p: &ArmParams, blk: Block) -> (f64, Lls, f64) {
        let mut ll = s.ll;
        let mut mu_e = s.mu_e;
        let mut total = 0.0;
        match blk {
            Block::Alpha | Block::SigmaE => {
                ll.effect = self.effect_ll(s, &p.effect);
                total += ll.effect;
            }
            Block::Gamma => {
                ll.structural = self.structural_ll(s, &p.hurdle.as_ref().expect("hurdle").gamma);
                total += ll.structural;
            }
            Block::Eta => {
                ll.baseline_structural =
                    self.baseline_structural_ll(s, &p.hurdle.as_ref().expect("hurdle").eta);
                total += ll.baseline_structural;
            }
            Block::Baseline => {
                ll.baseline = self.baseline_ll(s, p.baseline.as_ref().expect("baseline"));
                total += ll.baseline;
            }
            Block::Beta | Block::SigmaC => {}
        }
        if self.cost_depends_on(blk) {
            if matches!(blk, Block::Alpha | Block::Gamma) {
                mu_e = self.mu_e(p);
            }
            // skip the expensive cost module when the rest is already impossible
            ll.cost = if total.is_finite() {
                self.cost_ll(s, &p.cost, p.effect.sigma_e, mu_e)
            } else {
                f64::NEG_INFINITY
            };
            total += ll.cost;
        }
        (total, ll, mu_e)
    }

    fn mh_step(
        &self,
        s: &mut State,
        blk: Block,
        prop: &mut AdaptiveProposal,
        rng: &mut ChaCha8Rng,
        adapt: Option<(usize, usize)>,
    ) {
        let x = self.block_values(&s.p, blk);
        let y = prop.propose(&x, rng);
        let mut cand = s.p.clone();
        self.set_block(&mut cand, blk, &y);
        let prior_new = self.block_prior(&cand, blk);
        let mut a = 0.0;
        let mut fresh = None;
        if prior_new.is_finite() {
            let cur = self.block_ll_cached(s, blk) + self.block_prior(&s.p, blk);
            let (ll_new, lls, mu_e) = self.block_ll_new(s, &cand, blk);
            let log_ratio = ll_new + prior_new - cur;
            if log_ratio.is_finite() || log_ratio == f64::INFINITY {
                a = log_ratio.exp().min(1.0);
            }
            fresh = Some((lls, mu_e));
        }
        let accepted = a > 0.0 && rng.random::<f64>() < a;
        if accepted {
            let (lls, mu_e) = fresh.expect("evaluated");
            s.p = cand;
            s.ll = lls;
            s.mu_e = mu_e;
        }
        match adapt {
            Some((t, window)) => prop.adapt(t, window, a, &self.block_values(&s.p, blk)),
            None => {
                prop.proposed += 1;
                prop.accepted += u64::from(accepted);
            }
        }
    }

    // ---- imputation ---------------------------------------------------

    fn beta_draw(mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> f64 {
        match beta_shapes(mean, sd).and_then(|(a, b)| Beta::new(a, b).ok()) {
            Some(dist) => dist.sample(rng).clamp(1e-12, 1.0 - 1e-12),
            None => mean,
        }
    }

    fn ones_draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.ones {
            OnesComponent::PointMass => 1.0,
            OnesComponent::Beta { mean_logit, sd } => {
                match beta_shapes(expit(mean_logit), sd).and_then(|(a, b)| Beta::new(a, b).ok()) {
                    Some(dist) => dist.sample(rng).clamp(0.5, 1.0),
                    None => self.ones.mean(),
                }
            }
        }
    }

    fn effect_draw(&self, p: &EffectModelParams, u0c: f64, rng: &mut ChaCha8Rng) -> f64 {
        let loc = p.location(self.family, u0c);
        if self.family.beta_effects() {
            Self::beta_draw(loc, p.sigma_e, rng)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            loc + p.sigma_e * z
        }
    }

    #[inline]
    fn cost_term(&self, s: &State, i: usize, e: f64) -> f64 {
        cost_ln_density(
            self.family,
            &s.p.cost,
            s.p.effect.sigma_e,
            s.c[i],
            s.ln_c[i],
            e,
            s.mu_e,
        )
    }

    fn gamma_eta(&self, s: &State, i: usize, u0c: f64) -> f64 {
        let gamma = &s.p.hurdle.as_ref().expect("hurdle").gamma;
        let k = gamma.len();
        let row = &s.gx[i * k..(i + 1) * k];
        let mut eta = dot(row, gamma);
        if let Some(col) = self.data.gamma_u0_col {
            eta += gamma[col] * (u0c - row[col]);
        }
        eta
    }

    fn impute_baseline(&self, s: &mut State, i: usize, rng: &mut ChaCha8Rng) {
        let b = *s.p.baseline.as_ref().expect("baseline");
        let (du, u0) = if self.hurdle {
            let eta = &s.p.hurdle.as_ref().expect("hurdle").eta;
            let p1 = expit(dot(self.data.eta_x.row(i), eta));
            if rng.random::<f64>() < p1 {
                (true, 1.0)
            } else {
                (false, Self::beta_draw(expit(b.location), b.sigma_u, rng))
            }
        } else if self.family.beta_effects() {
            (false, Self::beta_draw(expit(b.location), b.sigma_u, rng))
        } else {
            let z: f64 = rng.sample(StandardNormal);
            (false, b.location + b.sigma_u * z)
        };
        let u0c = u0 - self.data.u0_center;
        let mut log_ratio = 0.0;
        if self.effect_slope && self.in_effect_module(s, i) {
            log_ratio += effect_ln_density(self.family, &s.p.effect, s.e[i], u0c)
                - effect_ln_density(self.family, &s.p.effect, s.e[i], s.u0c[i]);
        }
        if self.data.gamma_u0_col.is_some() {
            log_ratio += bernoulli_logit_ln_pmf(s.d[i], self.gamma_eta(s, i, u0c))
                - bernoulli_logit_ln_pmf(s.d[i], self.gamma_eta(s, i, s.u0c[i]));
        }
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            s.u0[i] = u0;
            s.u0c[i] = u0c;
            s.du[i] = du;
            if let Some(col) = self.data.gamma_u0_col {
                let k = self.data.gamma_x.cols;
                s.gx[i * k + col] = u0c;
            }
        }
    }

    fn impute_effect(&self, s: &mut State, i: usize, rng: &mut ChaCha8Rng) {
        let (d, e) = if self.hurdle {
            let d = match self.data.indicator[i].value() {
                Some(d) => d,
                None => rng.random::<f64>() < expit(self.gamma_eta(s, i, s.u0c[i])),
            };
            let e = if d {
                self.ones_draw(rng)
            } else {
                self.effect_draw(&s.p.effect, s.u0c[i], rng)
            };
            (d, e)
        } else {
            (false, self.effect_draw(&s.p.effect, s.u0c[i], rng))
        };
        let accept = if self.data.c[i].is_some() {
            let log_ratio = self.cost_term(s, i, e) - self.cost_term(s, i, s.e[i]);
            log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
        } else {
            true
        };
        if accept {
            s.e[i] = e;
            s.d[i] = d;
        }
    }

    fn impute_cost(&self, s: &mut State, i: usize, rng: &mut ChaCha8Rng) {
        let p = &s.p.cost;
        let loc = p.location(self.family, s.e[i], s.mu_e);
        let c = if self.family.gamma_costs() {
            let rate = loc / (p.sigma_c * p.sigma_c);
            let shape = loc * rate;
            Gamma::new(shape, 1.0 / rate)
                .map(|g| g.sample(rng))
                .unwrap_or(loc)
                .max(f64::MIN_POSITIVE)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            loc + p
                .normal_conditional_variance(s.p.effect.sigma_e)
                .max(0.0)
                .sqrt()
                * z
        };
        s.c[i] = c;
        s.ln_c[i] = c.ln();
    }

    fn impute(&self, s: &mut State, rng: &mut ChaCha8Rng) {
        let data = self.data;
        if self.baseline {
            for i in 0..data.n() {
                if data.u0[i].is_none() {
                    self.impute_baseline(s, i, rng);
                }
            }
        }
        for i in 0..data.n() {
            if data.e[i].is_none() {
                self.impute_effect(s, i, rng);
            }
            if data.c[i].is_none() {
                self.impute_cost(s, i, rng);
            }
        }
        self.refresh(s);
    }

    fn has_missing(&self) -> bool {
        let d = self.data;
        d.e.iter().any(Option::is_none)
            || d.c.iter().any(Option::is_none)
            || (self.baseline && d.u0.iter().any(Option::is_none))
    }

    // ---- initialisation -------------------------------------------------

    /// Seed-independent starting state built from observed-data summaries.
    pub fn initial_state(&self) -> Result<State, FitError> {
        let data = self.data;
        let n = data.n();
        let fam = self.family;
        let beta = fam.beta_effects();

        let d: Vec<bool> = data
            .indicator
            .iter()
            .map(|ind| self.hurdle && ind.value().unwrap_or(false))
            .collect();
        let obs_e: Vec<f64> = (0..n)
            .filter(|&i| !d[i])
            .filter_map(|i| data.e[i])
            .collect();
        let e_fill = mean_or(&obs_e, 0.5);
        let e: Vec<f64> = (0..n)
            .map(|i| match data.e[i] {
                Some(v) => v,
                None if d[i] => self.ones.mean(),
                None => e_fill,
            })
            .collect();

        let obs_c: Vec<f64> = data.c.iter().flatten().copied().collect();
        let c_fill = mean_or(&obs_c, 1.0).max(f64::MIN_POSITIVE);
        let c: Vec<f64> = data.c.iter().map(|c| c.unwrap_or(c_fill)).collect();
        let ln_c = c.iter().map(|x| x.ln()).collect();

        let obs_u0_all: Vec<f64> = data.u0.iter().flatten().copied().collect();
        let obs_u0: Vec<f64> = obs_u0_all
            .iter()
            .copied()
            .filter(|&u| !(self.hurdle && u >= 1.0))
            .collect();
        let u0_fill = mean_or(&obs_u0, 0.5);
        let u0: Vec<f64> = data.u0.iter().map(|u| u.unwrap_or(u0_fill)).collect();
        let du: Vec<bool> = u0.iter().map(|&u| self.hurdle && u >= 1.0).collect();
        let u0c: Vec<f64> = u0.iter().map(|u| u - data.u0_center).collect();
        let mut gx = data.gamma_x.data.clone();
        if let Some(col) = data.gamma_u0_col {
            let k = data.gamma_x.cols;
            for i in 0..n {
                gx[i * k + col] = u0c[i];
            }
        }

        let (alpha0, sigma_e) = {
            let m = e_fill;
            let sd = sample_sd(&obs_e);
            if beta {
                let m = m.clamp(0.02, 0.98);
                let bound = (m * (1.0 - m)).sqrt();
                let sd = sd.unwrap_or(0.3 * bound).clamp(1e-3 * bound, 0.9 * bound);
                (logit(m), sd)
            } else {
                let sd = sd
                    .unwrap_or(0.1)
                    .clamp(1e-3, scale_cap(&self.spec.priors.effect_sd));
                (m, sd)
            }
        };
        let c_sd = sample_sd(&obs_c)
            .unwrap_or(c_fill.abs().max(1.0))
            .min(scale_cap(&self.spec.priors.cost_sd));
        let cost = CostModelParams {
            beta0: if fam.gamma_costs() {
                c_fill.ln()
            } else {
                c_fill
            },
            beta1: 0.0,
            sigma_c: c_sd.max(1e-6),
        };
        let hurdle = self.hurdle.then(|| {
            let known: Vec<bool> = data.indicator.iter().filter_map(|i| i.value()).collect();
            let frac = known.iter().filter(|&&x| x).count() as f64 / known.len().max(1) as f64;
            let mut gamma = vec![0.0; data.gamma_x.cols];
            gamma[0] = logit(frac.clamp(0.02, 0.98));
            let eta = if self.baseline {
                let ones = obs_u0_all.iter().filter(|&&u| u >= 1.0).count() as f64;
                let frac = ones / obs_u0_all.len().max(1) as f64;
                let mut eta = vec![0.0; data.eta_x.cols];
                eta[0] = logit(frac.clamp(0.02, 0.98));
                eta
            } else {
                Vec::new()
            };
            HurdleParams { gamma, eta }
        });
        let baseline = self.baseline.then(|| {
            let sd = sample_sd(&obs_u0);
            if beta {
                let m = u0_fill.clamp(0.02, 0.98);
                let bound = (m * (1.0 - m)).sqrt();
                BaselineParams {
                    location: logit(m),
                    sigma_u: sd.unwrap_or(0.3 * bound).clamp(1e-3 * bound, 0.9 * bound),
                }
            } else {
                BaselineParams {
                    location: u0_fill,
                    sigma_u: sd
                        .unwrap_or(0.1)
                        .clamp(1e-3, scale_cap(&self.spec.priors.baseline_sd)),
                }
            }
        });
        let p = ArmParams {
            effect: EffectModelParams {
                alpha0,
                alpha1: 0.0,
                sigma_e,
            },
            cost,
            hurdle,
            baseline,
        };
        let mut s = State {
            mu_e: self.mu_e(&p),
            p,
            e,
            c,
            ln_c,
            u0,
            u0c,
            d,
            du,
            gx,
            effect_moments: Moments::default(),
            baseline_moments: Moments::default(),
            n_d: 0,
            n_du: 0,
            ll: Lls::default(),
        };
        self.refresh(&mut s);
        self.check_finite(&s)?;
        Ok(s)
    }

    fn check_finite(&self, s: &State) -> Result<(), FitError> {
        let checks = [
            ("effect", s.ll.effect),
            ("cost", s.ll.cost),
            ("structural indicator", s.ll.structural),
            ("baseline structural indicator", s.ll.baseline_structural),
            ("baseline utility", s.ll.baseline),
        ];
        for (block, v) in checks {
            if !v.is_finite() {
                return Err(FitError::Init {
                    arm: self.data.arm,
                    block,
                });
            }
        }
        let lp = self
            .blocks
            .iter()
            .map(|&b| self.block_prior(&s.p, b))
            .sum::<f64>();
        if !lp.is_finite() {
            return Err(FitError::Init {
                arm: self.data.arm,
                block: "prior",
            });
        }
        Ok(())
    }

    /// Initial random-walk scales: rough posterior SDs from the starting
    /// state, so short runs start close to a workable proposal.
    fn initial_proposals(&self, s: &State) -> Vec<AdaptiveProposal> {
        let n_eff = s.effect_moments.n.max(1.0);
        let n = s.e.len().max(1) as f64;
        let p = &s.p;
        let sd_u0c = sample_sd(&s.u0c).unwrap_or(0.1);
        let sd_e = sample_sd(&s.e).unwrap_or(0.1).max(1e-3);
        let rw = |se: f64, dim: usize| se * 2.38 / (dim as f64).sqrt();
        self.blocks
            .iter()
            .map(|&blk| {
                let sds: Vec<f64> = match blk {
                    Block::Alpha => {
                        let m = self.link_inv(p.effect.alpha0);
                        let se = if self.family.beta_effects() {
                            p.effect.sigma_e / (m * (1.0 - m) * n_eff.sqrt())
                        } else {
                            p.effect.sigma_e / n_eff.sqrt()
                        };
                        let dim = if self.effect_slope { 2 } else { 1 };
                        let mut v = vec![rw(se, dim)];
                        if self.effect_slope {
                            v.push(rw(se / sd_u0c, dim));
                        }
                        v
                    }
                    Block::SigmaE => vec![rw((0.5 / n_eff).sqrt(), 1)],
                    Block::Beta => {
                        let mu_c = p.cost.mu_c(self.family);
                        let scale = if self.family.gamma_costs() {
                            p.cost.sigma_c / mu_c
                        } else {
                            p.cost.sigma_c
                        };
                        let se = scale / n.sqrt();
                        vec![rw(se, 2), rw(se / sd_e, 2)]
                    }
                    Block::SigmaC => vec![rw((0.5 / n).sqrt(), 1)],
                    Block::Gamma | Block::Eta => {
                        let (x, ind) = if blk == Block::Gamma {
                            (&self.data.gamma_x, &s.d)
                        } else {
                            (&self.data.eta_x, &s.du)
                        };
                        let frac = ind.iter().filter(|&&v| v).count() as f64 / n;
                        let frac = frac.clamp(0.05, 0.95);
                        let se = 1.0 / (n * frac * (1.0 - frac)).sqrt();
                        let mut col_sd = x.column_sds();
                        if blk == Block::Gamma {
                            if let Some(col) = self.data.gamma_u0_col {
                                col_sd[col] = sd_u0c.max(1e-3);
                            }
                        }
                        let dim = col_sd.len();
                        col_sd.iter().map(|c| rw(se / c, dim)).collect()
                    }
                    Block::Baseline => {
                        let b = p.baseline.as_ref().expect("baseline");
                        let nb = s.baseline_moments.n.max(1.0);
                        let m = self.link_inv(b.location);
                        let se = if self.family.beta_effects() {
                            b.sigma_u / (m * (1.0 - m) * nb.sqrt())
                        } else {
                            b.sigma_u / nb.sqrt()
                        };
                        vec![rw(se, 2), rw((0.5 / nb).sqrt(), 2)]
                    }
                };
                AdaptiveProposal::new(&sds)
            })
            .collect()
    }

    // ---- deviance -------------------------------------------------------

    /// Observed-data log-likelihood over the modules shared by all
    /// families: observed QALYs, observed costs and, when the baseline model
    /// is fitted, observed baseline utilities. `e` and `u0` supply values
    /// for the records where they are missing.
    pub fn observed_loglik(&self, p: &ArmParams, e: &[f64], u0: &[f64]) -> (f64, DevianceTerms) {
        let data = self.data;
        let mu_e = self.mu_e(p);
        let ones = self.ones.deviance_ln_density();
        let mut ll = 0.0;
        let mut terms = DevianceTerms::default();
        for i in 0..data.n() {
            if let Some(ev) = data.e[i] {
                terms.effect += 1;
                ll += if self.hurdle && data.indicator[i] == Indicator::Known(true) {
                    ones
                } else {
                    effect_ln_density(self.family, &p.effect, ev, u0[i] - data.u0_center)
                };
            }
            if let Some(cv) = data.c[i] {
                terms.cost += 1;
                ll += cost_ln_density(
                    self.family,
                    &p.cost,
                    p.effect.sigma_e,
                    cv,
                    cv.ln(),
                    e[i],
                    mu_e,
                );
            }
            if let (true, Some(uv), Some(b)) = (self.baseline, data.u0[i], &p.baseline) {
                terms.baseline += 1;
                let m = self.link_inv(b.location);
                ll += if self.hurdle && uv >= 1.0 {
                    ones
                } else if self.family.beta_effects() {
                    crate::models::dist::beta_mean_sd_ln_pdf(uv, m, b.sigma_u)
                } else {
                    normal_ln_pdf(uv, m, b.sigma_u)
                };
            }
        }
        (ll, terms)
    }

    // ---- driver -----------------------------------------------------------

    pub fn run(&self, init: &State, config: &SamplerConfig, rng: &mut ChaCha8Rng) -> ChainOutput {
        let data = self.data;
        let n = data.n();
        let mut s = init.clone();
        let mut props = self.initial_proposals(&s);
        let window = config.adaptation_window();
        let retained = config.retained_per_chain();
        let names = self.column_names();
        let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(retained); names.len()];
        let mut deviance = Vec::with_capacity(retained);
        let mut e_sum = vec![0.0; n];
        let mut u0_sum = vec![0.0; n];

        let mut tracked: Vec<(usize, Quantity)> = Vec::new();
        for i in 0..n {
            if self.baseline && data.u0[i].is_none() {
                tracked.push((i, Quantity::BaselineUtility));
            }
            if data.e[i].is_none() {
                tracked.push((i, Quantity::Qaly));
            }
            if data.c[i].is_none() {
                tracked.push((i, Quantity::Cost));
            }
            if self.hurdle && data.e[i].is_none() && data.indicator[i] == Indicator::Sampled {
                tracked.push((i, Quantity::StructuralIndicator));
            }
        }
        let mut imputed: Vec<Vec<f64>> = if config.store_imputations {
            vec![Vec::with_capacity(retained); tracked.len()]
        } else {
            Vec::new()
        };

        let missing = self.has_missing();
        let mut row = Vec::with_capacity(names.len());
        for t in 0..config.n_iterations {
            if missing {
                self.impute(&mut s, rng);
            }
            let adapt = (t < window).then_some((t, window));
            let count = t >= config.burn_in;
            for (k, &blk) in self.blocks.iter().enumerate() {
                let prop = &mut props[k];
                match (adapt, count) {
                    (Some(a), _) => self.mh_step(&mut s, blk, prop, rng, Some(a)),
                    (None, true) => self.mh_step(&mut s, blk, prop, rng, None),
                    (None, false) => {
                        // between the window and burn-in end: frozen, not counted
                        let (p, a) = (prop.proposed, prop.accepted);
                        self.mh_step(&mut s, blk, prop, rng, None);
                        prop.proposed = p;
                        prop.accepted = a;
                    }
                }
            }
            if count && (t - config.burn_in + 1) % config.thin == 0 {
                row.clear();
                self.flatten(&s.p, &mut row);
                row.push(s.mu_e);
                row.push(s.p.cost.mu_c(self.family));
                if let Some(h) = &s.p.hurdle {
                    row.push(h.pi_bar());
                }
                for (col, v) in draws.iter_mut().zip(&row) {
                    col.push(*v);
                }
                let (ll, _) = self.observed_loglik(&s.p, &s.e, &s.u0);
                deviance.push(-2.0 * ll);
                for i in 0..n {
                    e_sum[i] += s.e[i];
                    u0_sum[i] += s.u0[i];
                }
                if config.store_imputations {
                    for (series, &(i, q)) in imputed.iter_mut().zip(&tracked) {
                        series.push(match q {
                            Quantity::Qaly => s.e[i],
                            Quantity::Cost => s.c[i],
                            Quantity::BaselineUtility => s.u0[i],
                            Quantity::StructuralIndicator => f64::from(u8::from(s.d[i])),
                        });
                    }
                }
            }
        }
        let acceptance = self
            .blocks
            .iter()
            .zip(&props)
            .map(|(&b, p)| (b, p.acceptance_rate().unwrap_or(f64::NAN)))
            .collect();
        let imputed = if config.store_imputations {
            tracked
                .into_iter()
                .zip(imputed)
                .map(|((i, q), v)| (i, q, v))
                .collect()
        } else {
            Vec::new()
        };
        ChainOutput {
            draws,
            deviance,
            e_sum,
            u0_sum,
            imputed,
            acceptance,
        }
    }
}
