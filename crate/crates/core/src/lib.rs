//! Likelihood-free Bayesian inference with random forests.
//!
//! The crate implements approximate Bayesian computation driven by
//! regression random forests (one parameter at a time) and distributional
//! random forests (joint posteriors), both standalone and inside a
//! sequential Monte Carlo loop that refits a forest on a freshly simulated
//! reference table every iteration. Classic samplers (rejection,
//! Metropolis-Hastings, ABC-MCMC, ABC-SMC) and a set of benchmark models with
//! exact posteriors or likelihoods are included for comparison.
//!
//! Module map:
//! - [`tables`]: reference tables, weighted particles, resampling, CSV files
//! - [`forest`]: regression and distributional forests and their weights
//! - [`smc`]: the iterated forest samplers
//! - [`baselines`]: rejection ABC, MH, ABC-MCMC, ABC-SMC
//! - [`models`]: coalescent, hierarchical Normal, Lotka-Volterra, birth-death
//!   and Michaelis-Menten benchmarks

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod forest;
pub mod model;
pub mod models;
pub mod rng;
pub mod smc;
pub mod tables;

pub use error::{Error, Result};
pub use forest::{
    drf::{drf_weights, grow_drf, posterior_cdf, DrfConfig, FourierFeatures, SplitRule},
    rf::{grow_forest, rf_weights, RfConfig},
    variable_importance, Forest, ForestKind, Node, Tree,
};
pub use model::{Draw, Model, ParameterSource, PriorSource, SimulationFailure, UniformBox};
pub use rng::SimRng;
pub use smc::{iteration_seeds, IterationSeeds, ProposalSource};
pub use smc::{
    convergence_metric, propose_particle, run_abc_smc_drf, run_abc_smc_rf, PerturbationKernel, Posterior,
    SmcSchedule, SmcTrace,
};
pub use tables::{
    build_reference_table, build_reference_table_counted, load_table, save_table, weighted_resample, Observation,
    ReferenceTable, SimulationCount, WeightedParticles,
};
