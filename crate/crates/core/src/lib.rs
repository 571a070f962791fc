//! Bayesian cost-effectiveness analysis of two-arm trials with missing
//! data and structural ones in the QALYs.
//!
//! * [`data`]: records, time grids, QALY/cost aggregation, CSV I/O and a
//!   synthetic trial generator.
//! * [`models`]: Bivariate Normal, Beta-Gamma and hurdle model families.
//! * [`inference`]: the MCMC sampler, convergence diagnostics and DIC.
//! * [`econ`]: ICER, cost-effectiveness plane and acceptability curves.

pub mod data;
pub mod econ;
pub mod inference;
pub mod models;
pub mod rng;

pub use data::{
    aggregate, Arm, DataError, IndividualRecord, StructuralStatus, TimeGrid, TrialDataset,
};
pub use inference::{fit, FitError, PosteriorDraws, SamplerConfig};
pub use models::{Family, MnarScenario, ModelError, ModelSpec, PointMassMode};
