//! Population ABC with a decreasing tolerance schedule.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{self, SimRng};
use crate::smc::PerturbationKernel;
use crate::tables::{IndexSampler, Observation, WeightedParticles};

pub const DEFAULT_LEVEL_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmcKernel {
    Fixed { kernel: PerturbationKernel },
    /// Gaussian with per-coordinate variance twice the previous population's
    /// weighted variance.
    AdaptiveGaussian,
}

impl SmcKernel {
    fn for_population(&self, prev: &WeightedParticles) -> PerturbationKernel {
        match self {
            Self::Fixed { kernel } => kernel.clone(),
            Self::AdaptiveGaussian => PerturbationKernel::Gaussian {
                sds: prev
                    .variance()
                    .iter()
                    .map(|v| (2.0 * v).sqrt().max(f64::MIN_POSITIVE))
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcSmcConfig {
    /// Strictly decreasing tolerances.
    pub epsilons: Vec<f64>,
    pub n_particles: usize,
    pub kernel: SmcKernel,
    pub distance: DistanceSpec,
    /// Simulations allowed per tolerance level.
    pub level_budget: u64,
    pub max_retries: usize,
    pub seed: u64,
}

impl AbcSmcConfig {
    pub fn validate(&self, dim: usize, k: usize) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidConfig("need at least one tolerance".into()));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be strictly decreasing: {:?}",
                self.epsilons
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
        }
        if let SmcKernel::Fixed { kernel } = &self.kernel {
            if self.epsilons.len() > 1 {
                kernel.validate(dim)?;
            }
        }
        self.distance.validate(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub epsilon: f64,
    pub simulations: u64,
    pub prior_rejections: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcSmcOutput {
    pub populations: Vec<WeightedParticles>,
    pub levels: Vec<LevelSummary>,
}

impl AbcSmcOutput {
    pub fn particles(&self) -> &WeightedParticles {
        self.populations.last().expect("at least one level")
    }

    pub fn total_simulations(&self) -> u64 {
        self.levels.iter().map(|l| l.simulations).sum()
    }
}

struct Accepted {
    theta: Vec<f64>,
    prior_rejections: u64,
}

#[allow(clippy::too_many_arguments)]
fn accept_one(
    model: &dyn Model,
    obs: &Observation,
    cfg: &AbcSmcConfig,
    epsilon: f64,
    prev: Option<(&WeightedParticles, &IndexSampler, &PerturbationKernel)>,
    rng: &mut SimRng,
    counter: &AtomicU64,
    level: usize,
) -> Result<Accepted> {
    let mut prior_rejections = 0;
    loop {
        let theta = match prev {
            None => model.sample_prior(rng),
            Some((pop, sampler, kernel)) => {
                let mut tries = 0;
                loop {
                    let base = pop.particle(sampler.sample(rng));
                    let theta = kernel.sample(base, rng);
                    if model.log_prior(&theta) > f64::NEG_INFINITY {
                        break theta;
                    }
                    tries += 1;
                    prior_rejections += 1;
                    if tries >= cfg.max_retries {
                        return Err(Error::ProposalRetries {
                            cap: cfg.max_retries,
                            last: theta,
                        });
                    }
                }
            }
        };
        if counter.fetch_add(1, Ordering::Relaxed) >= cfg.level_budget {
            return Err(Error::BudgetExceeded {
                level: level + 1,
                epsilon,
                budget: cfg.level_budget,
            });
        }
        if let Ok(s) = model.simulate(&theta, rng) {
            if cfg.distance.distance(&s, obs.values()) < epsilon {
                return Ok(Accepted { theta, prior_rejections });
            }
        }
    }
}

/// Run every tolerance level, resampling and perturbing the previous
/// population after the first. Particle `i` of level `t` draws from stream
/// `(derive(seed, t), i)`.
pub fn abc_smc(model: &dyn Model, obs: &Observation, cfg: &AbcSmcConfig) -> Result<AbcSmcOutput> {
    let dim = model.n_params();
    cfg.validate(dim, model.n_stats())?;
    obs.check_against(model.n_stats())?;
    let mut out = AbcSmcOutput {
        populations: Vec::new(),
        levels: Vec::new(),
    };
    for (t, &epsilon) in cfg.epsilons.iter().enumerate() {
        let counter = AtomicU64::new(0);
        let level_seed = rng::derive(cfg.seed, t as u64);
        let prev = out.populations.last();
        let kernel = prev.map(|p| cfg.kernel.for_population(p));
        let sampler = prev.map(|p| IndexSampler::new(p.weights())).transpose()?;
        let context = match (prev, &sampler, &kernel) {
            (Some(p), Some(s), Some(k)) => Some((p, s, k)),
            _ => None,
        };
        let accepted: Vec<Accepted> = (0..cfg.n_particles)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(level_seed, i as u64);
                accept_one(model, obs, cfg, epsilon, context, &mut rng, &counter, t)
            })
            .collect::<Result<_>>()?;
        let weights: Vec<f64> = match context {
            None => vec![1.0; cfg.n_particles],
            Some((p, _, k)) => accepted
                .par_iter()
                .map(|a| {
                    let denom: f64 = (0..p.len())
                        .map(|j| p.weights()[j] * k.density(&a.theta, p.particle(j)))
                        .sum();
                    model.prior_density(&a.theta) / denom
                })
                .collect(),
        };
        let params = accepted.iter().flat_map(|a| a.theta.iter().copied()).collect();
        let population = WeightedParticles::new(params, weights, model.param_names())?;
        out.levels.push(LevelSummary {
            epsilon,
            simulations: counter.load(Ordering::Relaxed),
            prior_rejections: accepted.iter().map(|a| a.prior_rejections).sum(),
            mean: population.mean(),
            variance: population.variance(),
        });
        out.populations.push(population);
    }
    Ok(out)
}
