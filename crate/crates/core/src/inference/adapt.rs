use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Adaptive random-walk proposal for one parameter block.
///
/// During the adaptation window the global scale follows a Robbins–Monro
/// recursion towards a target acceptance rate, and the proposal shape is
/// periodically replaced by the scaled empirical covariance of the block.
/// Afterwards the proposal is frozen, so the retained chain is an ordinary
/// Metropolis chain.
#[derive(Debug, Clone)]
pub(crate) struct AdaptiveProposal {
    dim: usize,
    chol: DMatrix<f64>,
    log_scale: f64,
    target: f64,
    shaped: bool,
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    pub proposed: u64,
    pub accepted: u64,
}

impl AdaptiveProposal {
    pub fn new(initial_sd: &[f64]) -> Self {
        let dim = initial_sd.len();
        let sd = DVector::from_iterator(dim, initial_sd.iter().map(|s| s.max(1e-8)));
        Self {
            dim,
            chol: DMatrix::from_diagonal(&sd),
            log_scale: 0.0,
            target: if dim == 1 { 0.44 } else { 0.3 },
            shaped: false,
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample(StandardNormal)));
        let step = &self.chol * z * self.log_scale.exp();
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// One adaptation step at iteration `t` of a window of length `window`.
    /// `accept_prob` is the Metropolis acceptance probability of the move
    /// just made and `x` the block value after it.
    pub fn adapt(&mut self, t: usize, window: usize, accept_prob: f64, x: &[f64]) {
        let gain = (1.0 + t as f64 / 20.0).powf(-0.6);
        self.log_scale = (self.log_scale + gain * (accept_prob - self.target)).clamp(-15.0, 10.0);

        // Skip the initial transient when estimating the shape.
        if t < window / 5 {
            return;
        }
        self.n += 1;
        let xv = DVector::from_column_slice(x);
        let delta = &xv - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &xv - &self.mean;
        self.m2 += &delta * delta2.transpose();

        if self.dim > 1 && self.n >= 100 + 20 * self.dim && t % 50 == 0 {
            let mut cov = &self.m2 / (self.n - 1) as f64 * (2.38 * 2.38 / self.dim as f64);
            let jitter = 1e-10 * (cov.trace() / self.dim as f64).max(1e-300);
            for k in 0..self.dim {
                cov[(k, k)] += jitter;
            }
            if let Some(ch) = cov.cholesky() {
                self.chol = ch.l();
                if !self.shaped {
                    self.shaped = true;
                    self.log_scale = 0.0;
                }
            }
        }
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}
