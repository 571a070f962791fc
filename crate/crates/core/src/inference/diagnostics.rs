use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BlockAcceptance, PosteriorDraws};

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("need at least {need} chains, got {got}")]
    TooFewChains { need: usize, got: usize },
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("chains have different lengths")]
    RaggedChains,
    #[error("not applicable to a constant series")]
    NotApplicable,
    #[error("interval mass must lie in (0, 1), got {0}")]
    InvalidMass(f64),
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Split-chain potential scale reduction factor. Each chain is cut in half
/// (dropping the middle draw of odd-length chains) and the Gelman–Rubin
/// statistic is computed over the halves. The result is floored at 1, as
/// between-chain variance cannot be negative.
pub fn rhat(chains: &[&[f64]]) -> Result<f64, DiagError> {
    if chains.len() < 2 {
        return Err(DiagError::TooFewChains {
            need: 2,
            got: chains.len(),
        });
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(DiagError::RaggedChains);
    }
    if len < 10 {
        return Err(DiagError::TooFewDraws { need: 10, got: len });
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..]])
        .collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let n = half as f64;
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let b = n * mean_var(&means).1;
    if w <= 0.0 {
        return if b <= 0.0 {
            Err(DiagError::NotApplicable)
        } else {
            Ok(f64::INFINITY)
        };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Autocovariance at every lag by FFT with zero padding.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf.iter()
        .take(n)
        .map(|z| z.re / (size as f64 * n as f64))
        .collect()
}

/// Effective sample size by Geyer's initial monotone positive sequence.
/// Capped at the number of draws.
pub fn ess(draws: &[f64]) -> Result<f64, DiagError> {
    let n = draws.len();
    if n < 4 {
        return Err(DiagError::TooFewDraws { need: 4, got: n });
    }
    let acov = autocovariance(draws);
    if !(acov[0] > 0.0) {
        return Err(DiagError::NotApplicable);
    }
    let rho = |t: usize| acov[t] / acov[0];
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1e-12);
    Ok((n as f64 / tau).min(n as f64))
}

/// ESS of several chains: the sum of the per-chain values.
pub fn ess_chains(chains: &[&[f64]]) -> Result<f64, DiagError> {
    chains.iter().map(|c| ess(c)).sum()
}

/// Shortest interval containing `⌈mass·n⌉` of the sorted draws. Assumes a
/// unimodal posterior. Windows whose widths tie up to rounding are resolved
/// towards the centre of the sorted sample.
pub fn hpd_interval(draws: &[f64], mass: f64) -> Result<(f64, f64), DiagError> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(DiagError::InvalidMass(mass));
    }
    let n = draws.len();
    if n < 50 {
        return Err(DiagError::TooFewDraws { need: 50, got: n });
    }
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let widths: Vec<f64> = (0..=n - m).map(|i| x[i + m - 1] - x[i]).collect();
    let best = widths.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (x[n - 1] - x[0]).abs();
    let centre = (n - m) as f64 / 2.0;
    let i = (0..widths.len())
        .filter(|&i| widths[i] <= best + tol)
        .min_by(|&a, &b| {
            (a as f64 - centre)
                .abs()
                .total_cmp(&(b as f64 - centre).abs())
        })
        .expect("at least one window");
    Ok((x[i], x[i + m - 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    /// `None` when not applicable (constant draws or a single chain).
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamDiagnostic>,
    pub acceptance: Vec<BlockAcceptance>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> Option<f64> {
        self.params
            .iter()
            .filter_map(|p| p.rhat)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    /// Parameters whose R-hat exceeds `threshold`.
    pub fn unconverged(&self, threshold: f64) -> Vec<&ParamDiagnostic> {
        self.params
            .iter()
            .filter(|p| p.rhat.is_some_and(|r| r > threshold))
            .collect()
    }
}

pub fn diagnose(draws: &PosteriorDraws) -> DiagnosticsReport {
    let params = draws
        .columns
        .iter()
        .map(|name| {
            let chains = draws.chain_series(name).expect("known column");
            ParamDiagnostic {
                name: name.clone(),
                rhat: rhat(&chains).ok(),
                ess: ess_chains(&chains).ok(),
            }
        })
        .collect();
    DiagnosticsReport {
        params,
        acceptance: draws.acceptance.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn rhat_identical_chains_is_one() {
        // periodic chain: both halves have the same mean
        let c: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let r = rhat(&[&c, &c]).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rhat_same_distribution_is_small() {
        let (a, b) = (normals(1, 10_000), normals(2, 10_000));
        assert!(rhat(&[&a, &b]).unwrap() < 1.01);
    }

    #[test]
    fn rhat_separated_chains_is_large() {
        let a: Vec<f64> = normals(1, 1000).iter().map(|x| x + 10.0).collect();
        let b: Vec<f64> = normals(2, 1000).iter().map(|x| x - 10.0).collect();
        assert!(rhat(&[&a, &b]).unwrap() > 1.1 * 5.0);
    }

    #[test]
    fn rhat_errors() {
        let c = vec![2.0; 100];
        assert_eq!(rhat(&[&c, &c]), Err(DiagError::NotApplicable));
        assert!(matches!(rhat(&[&c]), Err(DiagError::TooFewChains { .. })));
        let short = [1.0, 2.0, 3.0];
        assert!(matches!(
            rhat(&[&short, &short]),
            Err(DiagError::TooFewDraws { .. })
        ));
    }

    #[test]
    fn ess_white_noise() {
        let x = normals(3, 10_000);
        let e = ess(&x).unwrap();
        assert!((8_000.0..=12_000.0).contains(&e), "{e}");
    }

    #[test]
    fn ess_ar1() {
        let rho: f64 = 0.9;
        let z = normals(4, 100_000);
        let mut x = Vec::with_capacity(z.len());
        let mut prev = 0.0;
        for v in z {
            prev = rho * prev + (1.0 - rho * rho).sqrt() * v;
            x.push(prev);
        }
        let e = ess(&x).unwrap();
        let target = x.len() as f64 * (1.0 - rho) / (1.0 + rho);
        assert!((e - target).abs() / target < 0.3, "{e} vs {target}");
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x = normals(5, 300);
        let fast = autocovariance(&x);
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        for t in [0, 1, 7, 100, 299] {
            let direct = (0..n - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>() / n as f64;
            assert!((fast[t] - direct).abs() < 1e-12, "lag {t}");
        }
    }

    #[test]
    fn ess_errors() {
        assert!(matches!(ess(&[1.0]), Err(DiagError::TooFewDraws { .. })));
        assert_eq!(ess(&[3.0; 50]), Err(DiagError::NotApplicable));
    }

    #[test]
    fn hpd_uniform_grid() {
        let x: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let (lo, hi) = hpd_interval(&x, 0.9).unwrap();
        assert!(
            (lo - 0.05).abs() < 1e-9 && (hi - 0.95).abs() < 1e-9,
            "{lo} {hi}"
        );
    }

    #[test]
    fn hpd_standard_normal() {
        let x = normals(6, 100_000);
        let (lo, hi) = hpd_interval(&x, 0.9).unwrap();
        assert!(
            (lo + 1.645).abs() < 0.05 && (hi - 1.645).abs() < 0.05,
            "{lo} {hi}"
        );
    }

    #[test]
    fn hpd_edge_cases() {
        assert_eq!(hpd_interval(&[0.3; 60], 0.9).unwrap(), (0.3, 0.3));
        assert!(matches!(
            hpd_interval(&[0.0; 60], 1.0),
            Err(DiagError::InvalidMass(_))
        ));
        assert!(matches!(
            hpd_interval(&[0.0; 10], 0.9),
            Err(DiagError::TooFewDraws { .. })
        ));
    }

    #[test]
    fn hpd_prefers_dense_region() {
        // skewed sample: the shortest interval hugs the mode at zero
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..20_000).map(|_| -rng.random::<f64>().ln()).collect();
        let (lo, hi) = hpd_interval(&x, 0.9).unwrap();
        assert!(lo < 0.01);
        assert!((hi - 10f64.ln()).abs() < 0.1);
    }
}
