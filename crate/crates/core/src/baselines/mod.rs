//! Classic ABC and likelihood-based samplers used as comparison baselines.

pub mod abc_smc;
pub mod distance;
pub mod mcmc;
pub mod rejection;

pub use abc_smc::{abc_smc, AbcSmcConfig, AbcSmcOutput, LevelSummary, SmcKernel};
pub use distance::{DistanceSpec, Metric};
pub use mcmc::{abc_mcmc, metropolis_hastings, Chain, MarkovProposal, MhConfig, MhTarget};
pub use rejection::{abc_rejection, abc_rejection_from_table, Keep, RejectionOutput};
