//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use abcsmc_core::models::ModelConfig;
use abcsmc_core::{build_reference_table, rng, Model, Observation, PriorSource, ReferenceTable};

pub fn model(name: &str) -> Box<dyn Model> {
    ModelConfig::by_name(name).expect("known model").build().expect("default spec")
}

/// Prior-predictive reference table of `n` rows.
pub fn table(model: &dyn Model, n: usize, seed: u64) -> Arc<ReferenceTable> {
    Arc::new(build_reference_table(model, &PriorSource(model), n, seed).expect("reference table"))
}

/// Statistics simulated at a prior draw.
pub fn observation(model: &dyn Model, seed: u64) -> Observation {
    let mut r = rng::stream(seed, 0);
    loop {
        let theta = model.sample_prior(&mut r);
        if let Ok(stats) = model.simulate(&theta, &mut r) {
            return Observation::new(stats);
        }
    }
}
