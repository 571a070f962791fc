//! Log-densities and link functions shared by the model families.

use std::f64::consts::PI;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(expit(x))` without overflow.
#[inline]
pub fn ln_expit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    if !(sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

#[inline]
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0 && a > 0.0 && b > 0.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

/// Beta scale `τ = φ(1 − φ)/σ² − 1` for a mean/SD pair.
#[inline]
pub fn beta_scale(mean: f64, sd: f64) -> f64 {
    mean * (1.0 - mean) / (sd * sd) - 1.0
}

/// Shape parameters `(φτ, (1 − φ)τ)`; `None` when the scale is not positive.
#[inline]
pub fn beta_shapes(mean: f64, sd: f64) -> Option<(f64, f64)> {
    let tau = beta_scale(mean, sd);
    (mean > 0.0 && mean < 1.0 && sd > 0.0 && tau > 0.0).then_some((mean * tau, (1.0 - mean) * tau))
}

/// Inverse of [`beta_shapes`].
pub fn beta_moments(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let mean = a / s;
    (mean, (mean * (1.0 - mean) / (s + 1.0)).sqrt())
}

#[inline]
pub fn beta_mean_sd_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    match beta_shapes(mean, sd) {
        Some((a, b)) => beta_ln_pdf(x, a, b),
        None => f64::NEG_INFINITY,
    }
}

#[inline]
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0 && shape > 0.0 && rate > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Gamma density with mean `mean` and SD `sd`: shape `mean²/sd²`, rate
/// `mean/sd²`. `ln_x` is `ln(x)`, passed in so callers can cache it.
#[inline]
pub fn gamma_mean_sd_ln_pdf(x: f64, ln_x: f64, mean: f64, sd: f64) -> f64 {
    if !(x > 0.0 && mean > 0.0 && sd > 0.0) {
        return f64::NEG_INFINITY;
    }
    let rate = mean / (sd * sd);
    let shape = mean * rate;
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * ln_x - rate * x
}

#[inline]
pub fn logistic_ln_pdf(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    // f(z) = e^{-z} / (1 + e^{-z})^2, symmetric in z
    let a = -z.abs();
    a - 2.0 * a.exp().ln_1p() - scale.ln()
}

/// Half-Cauchy on `(0, ∞)`.
#[inline]
pub fn half_cauchy_ln_pdf(x: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    (2.0 / (PI * scale)).ln() - z.mul_add(z, 1.0).ln()
}

pub fn half_cauchy_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 / PI * (x / scale).atan()
    }
}

/// Bernoulli log-pmf with success probability `expit(eta)`.
#[inline]
pub fn bernoulli_logit_ln_pmf(success: bool, eta: f64) -> f64 {
    if success {
        ln_expit(eta)
    } else {
        ln_expit(-eta)
    }
}
