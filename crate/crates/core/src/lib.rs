//! Bayesian stock assessment for river-spawning salmon.
//!
//! The crate is organised the way an assessment is run: prior and river
//! submodels are fitted first, their posteriors become priors and likelihood
//! approximations for the age-structured life-history model, and posterior
//! draws of that model are projected forward under candidate harvest policies.
//!
//! * [`dynamics`]: deterministic and stochastic population kernels.
//! * [`observation`]: likelihoods for catch, tag, spawner and smolt data.
//! * [`priors`]: expert-quantile, stock-recruit and M74 prior builders.
//! * [`river`]: smolt mark-recapture and the hierarchical parr-to-smolt model.
//! * [`mcmc`]: adaptive blockwise Metropolis sampler and diagnostics.
//! * [`model`]: the life-history posterior and its parameter registry.
//! * [`pipeline`]: sequential stage orchestration with a reproducibility manifest.
//! * [`simulate`]: synthetic data with known truth.
//! * [`decision`]: forward projection and policy comparison.
//! * [`service`]: request handlers behind the HTTP API.

pub mod data;
pub mod decision;
pub mod dynamics;
pub mod error;
pub mod mcmc;
pub mod model;
pub mod observation;
pub mod params;
pub mod pipeline;
pub mod priors;
pub mod river;
pub mod service;
pub mod simulate;
pub mod stats;

pub use decision::{compare_policies, project, DecisionTable, Policy, ProjectionResult};
pub use dynamics::{
    AgeStructure, MaturationSchedule, MortalitySchedule, M74Series, PopulationState,
    ProcessNoise, StockParams, StockState,
};
pub use error::{Error, Result};
pub use mcmc::{run_chain, run_chains, PosteriorChain, SamplerConfig};
pub use model::LifeHistoryModel;
pub use params::{ParameterRegistry, ParameterVector, Transform};
pub use pipeline::{run_pipeline, PipelineConfig};
