//! Posterior sampling, convergence diagnostics, DIC and summaries.
//!
//! The two arms share no parameters, so their posteriors are independent.
//! Each chain therefore runs one sampler per arm, each with its own random
//! stream, and the arms are paired draw by draw to form the incremental
//! quantities `delta_e` and `delta_c`.

mod adapt;
mod diagnostics;
mod dic;
mod export;
mod prepare;
mod sampler;
mod summary;

pub use diagnostics::{
    diagnose, ess, ess_chains, hpd_interval, rhat, DiagError, DiagnosticsReport, ParamDiagnostic,
};
pub use dic::{dic, DicResult};
pub use export::{write_draws_csv, write_imputations_csv, write_json};
pub use sampler::{DevianceTerms, Quantity};
pub use summary::{imputation_summaries, summarize, ImputationSummary, ParamSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Arm, DataError, TimeGrid, TrialDataset};
use crate::models::{Family, Indicator, ModelError, ModelSpec};
use crate::rng;
use sampler::{ArmModel, ChainOutput};

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("arm {} has no records", .0.code())]
    EmptyArm(Arm),
    #[error("record `{id}` is missing {covariate}, which the model uses")]
    MissingCovariate { id: String, covariate: &'static str },
    #[error("non-finite log-posterior at initialisation in arm {} ({block} block)", .arm.code())]
    Init { arm: Arm, block: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain, burn-in included.
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations during which proposals adapt; defaults to the burn-in.
    pub adaptation: Option<usize>,
    /// Keep every retained draw of the imputed values.
    pub store_imputations: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iterations: 20_000,
            burn_in: 10_000,
            thin: 1,
            seed: 1,
            adaptation: None,
            store_imputations: true,
        }
    }
}

impl SamplerConfig {
    pub fn short(n_iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            n_iterations,
            burn_in,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let err = |m: &str| Err(FitError::Config(m.to_string()));
        if self.n_chains == 0 {
            return err("at least one chain is required");
        }
        if self.burn_in >= self.n_iterations {
            return err("burn-in must be shorter than the run");
        }
        if self.thin == 0 {
            return err("thinning must be at least 1");
        }
        if self.retained_per_chain() == 0 {
            return err("no draws would be retained");
        }
        if self.adaptation.is_some_and(|a| a > self.burn_in) {
            return err("adaptation must end within the burn-in");
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations.saturating_sub(self.burn_in)) / self.thin.max(1)
    }

    pub(crate) fn adaptation_window(&self) -> usize {
        self.adaptation.unwrap_or(self.burn_in)
    }
}

/// Block acceptance rates after adaptation, averaged over chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub arm: u8,
    pub block: String,
    pub rate: f64,
}

/// Retained draws of one imputed quantity for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedSeries {
    pub id: String,
    pub arm: Arm,
    pub quantity: Quantity,
    pub baseline_observed: bool,
    /// One series per chain.
    pub chains: Vec<Vec<f64>>,
}

impl ImputedSeries {
    pub fn pooled(&self) -> Vec<f64> {
        self.chains.concat()
    }
}

/// Retained posterior draws from all chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub family: Family,
    pub scenario: String,
    /// Column names; arm-specific columns carry a `[1]`/`[2]` suffix.
    pub columns: Vec<String>,
    /// `chains[k][j]` holds the draws of column `j` in chain `k`.
    pub chains: Vec<Vec<Vec<f64>>>,
    pub imputations: Vec<ImputedSeries>,
    pub acceptance: Vec<BlockAcceptance>,
    /// Observed-data deviance per retained draw, per chain.
    pub deviance: Vec<Vec<f64>>,
    pub deviance_at_mean: f64,
    pub deviance_terms: DevianceTerms,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_retained(&self) -> usize {
        self.chains
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Per-chain draws of a column.
    pub fn chain_series(&self, name: &str) -> Option<Vec<&[f64]>> {
        let j = self.column_index(name)?;
        Some(self.chains.iter().map(|c| c[j].as_slice()).collect())
    }

    /// Draws of a column with the chains concatenated in order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(
            self.chains
                .iter()
                .flat_map(|c| c[j].iter().copied())
                .collect(),
        )
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        let v = self.pooled(name)?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn delta_e(&self) -> Vec<f64> {
        self.pooled("delta_e").expect("delta_e is always monitored")
    }

    pub fn delta_c(&self) -> Vec<f64> {
        self.pooled("delta_c").expect("delta_c is always monitored")
    }
}

/// Tag for the indicator assignment a scenario actually imposes on one
/// arm: 0 when nothing is fixed, otherwise FNV-1a over the (id, value)
/// pairs. Scenarios that fix the same records the same way share streams,
/// so a scenario that changes nothing reproduces the MAR run exactly.
fn assignment_tag(arm: &prepare::ArmData) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut any = false;
    for (id, ind) in arm.ids.iter().zip(&arm.indicator) {
        if let Indicator::Assumed(v) = ind {
            any = true;
            for b in id.bytes().chain([u8::from(*v), 0xff]) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    if any {
        h.max(1)
    } else {
        0
    }
}

/// Seed of the stream for one chain of one arm, derived from the family and
/// the arm's imposed indicator assignment so that adding runs never
/// perturbs existing ones.
fn chain_seed(master: u64, family: Family, assignment: u64, chain: usize, arm: Arm) -> u64 {
    let family = Family::ALL.iter().position(|f| *f == family).unwrap_or(0) as u64;
    rng::derive_seed(
        master,
        &[family, assignment, chain as u64, arm.code() as u64],
    )
}

/// Draws from the joint posterior of parameters and missing values.
/// Deterministic for fixed inputs.
pub fn fit(
    dataset: &TrialDataset,
    grid: &TimeGrid,
    spec: &ModelSpec,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, FitError> {
    spec.validate()?;
    config.validate()?;
    let arms = prepare::prepare(dataset, grid, spec)?;
    let models = [
        ArmModel::new(&arms[0], spec)?,
        ArmModel::new(&arms[1], spec)?,
    ];
    let inits = [models[0].initial_state()?, models[1].initial_state()?];
    let tags = [assignment_tag(&arms[0]), assignment_tag(&arms[1])];

    let jobs: Vec<(usize, usize)> = (0..config.n_chains)
        .flat_map(|k| [(k, 0), (k, 1)])
        .collect();
    let mut outputs: Vec<Option<ChainOutput>> = vec![None; jobs.len()];
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<(usize, (usize, usize))>> = (0..workers)
            .map(|w| {
                jobs.iter()
                    .copied()
                    .enumerate()
                    .skip(w)
                    .step_by(workers)
                    .collect()
            })
            .collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                let models = &models;
                let inits = &inits;
                let tags = &tags;
                scope.spawn(move || {
                    chunk
                        .into_iter()
                        .map(|(slot, (k, a))| {
                            let mut rng = rand::SeedableRng::seed_from_u64(chain_seed(
                                config.seed,
                                spec.family,
                                tags[a],
                                k,
                                Arm::BOTH[a],
                            ));
                            (slot, models[a].run(&inits[a], config, &mut rng))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (slot, out) in h.join().expect("sampler thread panicked") {
                outputs[slot] = Some(out);
            }
        }
    });
    let outputs: Vec<ChainOutput> = outputs.into_iter().map(|o| o.expect("job ran")).collect();
    Ok(assemble(dataset, spec, config, &arms, &models, outputs))
}

fn assemble(
    dataset: &TrialDataset,
    spec: &ModelSpec,
    config: &SamplerConfig,
    arms: &[prepare::ArmData; 2],
    models: &[ArmModel<'_>; 2],
    outputs: Vec<ChainOutput>,
) -> PosteriorDraws {
    let names: [Vec<String>; 2] = [models[0].column_names(), models[1].column_names()];
    let mut columns = Vec::new();
    for (a, arm_names) in names.iter().enumerate() {
        columns.extend(arm_names.iter().map(|n| format!("{n}[{}]", a + 1)));
    }
    columns.push("delta_e".into());
    columns.push("delta_c".into());

    let n_chains = config.n_chains;
    let total = (n_chains * config.retained_per_chain()) as f64;
    let mut chains = Vec::with_capacity(n_chains);
    let mut deviance = Vec::with_capacity(n_chains);
    for k in 0..n_chains {
        let (o1, o2) = (&outputs[2 * k], &outputs[2 * k + 1]);
        let mut cols: Vec<Vec<f64>> = o1.draws.iter().chain(&o2.draws).cloned().collect();
        let mu_e = |o: &ChainOutput, names: &[String]| {
            o.draws[names.iter().position(|n| n == "mu_e").expect("mu_e")].clone()
        };
        let mu_c = |o: &ChainOutput, names: &[String]| {
            o.draws[names.iter().position(|n| n == "mu_c").expect("mu_c")].clone()
        };
        let (e1, e2) = (mu_e(o1, &names[0]), mu_e(o2, &names[1]));
        let (c1, c2) = (mu_c(o1, &names[0]), mu_c(o2, &names[1]));
        cols.push(e2.iter().zip(&e1).map(|(b, a)| b - a).collect());
        cols.push(c2.iter().zip(&c1).map(|(b, a)| b - a).collect());
        chains.push(cols);
        deviance.push(
            o1.deviance
                .iter()
                .zip(&o2.deviance)
                .map(|(a, b)| a + b)
                .collect(),
        );
    }

    // Deviance at the posterior mean of the primitive parameters, with
    // missing QALYs and baseline utilities at their posterior means.
    let mut deviance_at_mean = 0.0;
    let mut terms = DevianceTerms::default();
    for a in 0..2 {
        let model = &models[a];
        let n_prim = model.n_primitive();
        let mut sums = vec![0.0; n_prim];
        let mut e_sum = vec![0.0; arms[a].n()];
        let mut u0_sum = vec![0.0; arms[a].n()];
        for k in 0..n_chains {
            let o = &outputs[2 * k + a];
            for (s, col) in sums.iter_mut().zip(&o.draws) {
                *s += col.iter().sum::<f64>();
            }
            for i in 0..arms[a].n() {
                e_sum[i] += o.e_sum[i];
                u0_sum[i] += o.u0_sum[i];
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / total).collect();
        let e_bar: Vec<f64> = e_sum.iter().map(|s| s / total).collect();
        let u0_bar: Vec<f64> = u0_sum.iter().map(|s| s / total).collect();
        let (ll, t) = model.observed_loglik(&model.unflatten(&means), &e_bar, &u0_bar);
        deviance_at_mean += -2.0 * ll;
        terms = terms + t;
    }

    let mut acceptance = Vec::new();
    for a in 0..2 {
        let blocks = &outputs[a].acceptance;
        for (b, (blk, _)) in blocks.iter().enumerate() {
            let rate = (0..n_chains)
                .map(|k| outputs[2 * k + a].acceptance[b].1)
                .sum::<f64>()
                / n_chains as f64;
            acceptance.push(BlockAcceptance {
                arm: Arm::BOTH[a].code(),
                block: blk.name().to_string(),
                rate,
            });
        }
    }

    let mut imputations = Vec::new();
    if config.store_imputations {
        for a in 0..2 {
            let baseline_observed = |id: &str| {
                dataset
                    .records
                    .iter()
                    .find(|r| r.id == id && r.arm == Arm::BOTH[a])
                    .is_some_and(|r| r.baseline_utility().is_some())
            };
            for (j, (i, q, _)) in outputs[a].imputed.iter().enumerate() {
                let id = &arms[a].ids[*i];
                imputations.push(ImputedSeries {
                    id: id.clone(),
                    arm: Arm::BOTH[a],
                    quantity: *q,
                    baseline_observed: baseline_observed(id),
                    chains: (0..n_chains)
                        .map(|k| outputs[2 * k + a].imputed[j].2.clone())
                        .collect(),
                });
            }
        }
    }

    PosteriorDraws {
        family: spec.family,
        scenario: spec.mnar_scenario.label().to_string(),
        columns,
        chains,
        imputations,
        acceptance,
        deviance,
        deviance_at_mean,
        deviance_terms: terms,
    }
}
