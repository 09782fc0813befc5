//! Exact likelihoods and posteriors for the models that have them.

use abcsmc_core::models::birth_death::BirthDeathData;
use abcsmc_core::models::coalescent::{harmonic, poisson_grid_posterior};
use abcsmc_core::models::{bd_loglikelihood, bd_posterior_grid, CoalescentStats, GridDensity, Hierarchical, ModelConfig};
use abcsmc_core::{rng, Result};

/// Grid resolution per axis for tabulated posteriors.
pub const GRID_POINTS: usize = 201;

/// A model together with the data its exact posterior conditions on.
#[derive(Debug, Clone)]
pub enum Exact {
    /// `count ~ Poisson(θ·rate)` under `θ ~ U(lower, upper)`.
    Poisson { count: u64, rate: f64, lower: f64, upper: f64 },
    BirthDeath { data: BirthDeathData, lower: [f64; 2], upper: [f64; 2] },
    Hierarchical { model: Hierarchical, y: Vec<f64> },
}

fn as_count(x: f64) -> Option<u64> {
    (x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53)).then_some(x as u64)
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

impl Exact {
    /// The exact target for an observation, if the model has one. The
    /// hierarchical model needs the raw data behind its summaries.
    pub fn for_observation(model: &ModelConfig, obs: &[f64], raw: Option<&[f64]>) -> Option<Self> {
        match model {
            ModelConfig::Coalescent(spec) => {
                let (count, rate) = match spec.stats {
                    CoalescentStats::Count | CoalescentStats::CountAndSfs => {
                        (as_count(*obs.first()?)?, harmonic(spec.sample_size - 1))
                    }
                    CoalescentStats::Sfs => {
                        let counts: Option<Vec<u64>> = obs.iter().map(|x| as_count(*x)).collect();
                        (counts?.iter().sum(), harmonic(spec.sfs_cutoff))
                    }
                };
                Some(Self::Poisson {
                    count,
                    rate,
                    lower: spec.prior_lower,
                    upper: spec.prior_upper,
                })
            }
            ModelConfig::BirthDeath(spec) => {
                let counts: Option<Vec<u64>> = obs.iter().map(|x| as_count(*x)).collect();
                let data = BirthDeathData {
                    initial: spec.initial,
                    times: spec.times.clone(),
                    counts: counts?,
                };
                data.validate().ok()?;
                Some(Self::BirthDeath {
                    data,
                    lower: spec.prior_lower,
                    upper: spec.prior_upper,
                })
            }
            ModelConfig::Hierarchical(spec) => Some(Self::Hierarchical {
                model: Hierarchical::new(spec.clone()).ok()?,
                y: raw?.to_vec(),
            }),
            _ => None,
        }
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        match self {
            Self::Poisson { count, rate, .. } => {
                let mean = theta[0] * rate;
                if !(mean > 0.0) {
                    return if *count == 0 && mean == 0.0 { 0.0 } else { f64::NEG_INFINITY };
                }
                *count as f64 * mean.ln() - mean - ln_factorial(*count)
            }
            Self::BirthDeath { data, .. } => bd_loglikelihood(data, theta[0], theta[1]).unwrap_or(f64::NEG_INFINITY),
            Self::Hierarchical { y, .. } => {
                let (m, v) = (theta[0], theta[1]);
                if !(v > 0.0) {
                    return f64::NEG_INFINITY;
                }
                y.iter()
                    .map(|x| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v))
                    .sum()
            }
        }
    }

    /// Tabulated marginal posteriors, one per parameter, when the posterior
    /// is computed on a grid.
    pub fn marginal_grids(&self) -> Result<Option<Vec<GridDensity>>> {
        match self {
            Self::Poisson { count, rate, lower, upper } => {
                Ok(Some(vec![poisson_grid_posterior(*count, *rate, *lower, *upper, 20 * GRID_POINTS)?]))
            }
            Self::BirthDeath { data, lower, upper } => {
                // A coarse pass over the prior box locates the mass; the
                // final grid covers that region only.
                let coarse = bd_posterior_grid(data, *lower, *upper, GRID_POINTS)?;
                let mut lo = *lower;
                let mut hi = *upper;
                for j in 0..2 {
                    let m = coarse.marginal(j)?;
                    let step = m.x[1] - m.x[0];
                    lo[j] = (m.quantile(1e-9) - 2.0 * step).max(lower[j]);
                    hi[j] = (m.quantile(1.0 - 1e-9) + 2.0 * step).min(upper[j]);
                }
                let fine = bd_posterior_grid(data, lo, hi, GRID_POINTS)?;
                Ok(Some(vec![fine.marginal(0)?, fine.marginal(1)?]))
            }
            Self::Hierarchical { .. } => Ok(None),
        }
    }

    /// `m` exact posterior draws per coordinate.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if let Self::Hierarchical { model, y } = self {
            let draws = model.exact_posterior_sample(y, m, &mut rng::stream(seed, 0));
            return Ok((0..2).map(|j| draws.chunks(2).map(|p| p[j]).collect()).collect());
        }
        let grids = self.marginal_grids()?.expect("grid posterior");
        Ok(grids
            .iter()
            .enumerate()
            .map(|(j, g)| g.sample(m, &mut rng::stream(seed, j as u64)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abcsmc_core::models::HierarchicalSpec;

    #[test]
    fn poisson_likelihood_matches_pmf() {
        let e = Exact::Poisson {
            count: 3,
            rate: 2.0,
            lower: 0.0,
            upper: 5.0,
        };
        // Poisson(3; 1.0) = e^-1 / 6.
        assert!((e.log_likelihood(&[0.5]) - (-1.0 - 6f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn coalescent_oracle_uses_the_count() {
        let model = ModelConfig::by_name("coalescent").unwrap();
        let e = Exact::for_observation(&model, &[34.0], None).unwrap();
        let g = e.marginal_grids().unwrap().unwrap();
        assert!((g[0].mean() - 4.68).abs() < 0.01, "{}", g[0].mean());
        assert!(Exact::for_observation(&model, &[34.5], None).is_none());
    }

    #[test]
    fn birth_death_grid_holds_the_mass() {
        let model = ModelConfig::by_name("birth_death").unwrap();
        let data = BirthDeathData::bundled();
        let e = Exact::for_observation(&model, &data.stats(), None).unwrap();
        let grids = e.marginal_grids().unwrap().unwrap();
        for g in &grids {
            assert!(g.x[g.x.len() - 1] - g.x[0] < 20.0);
            assert!(g.sd() > 0.0);
        }
        let draws = e.sample(500, 1).unwrap();
        assert_eq!(draws.len(), 2);
        assert!(draws.iter().all(|d| d.len() == 500));
    }

    #[test]
    fn hierarchical_needs_raw_data() {
        let model = ModelConfig::Hierarchical(HierarchicalSpec::default());
        assert!(Exact::for_observation(&model, &[0.0; 61], None).is_none());
        let y = [0.3, -0.1, 0.8, 0.2];
        let e = Exact::for_observation(&model, &[0.0; 61], Some(&y)).unwrap();
        let ll = e.log_likelihood(&[0.0, 1.0]);
        let direct: f64 = y.iter().map(|x| -0.5 * (2.0 * std::f64::consts::PI).ln() - x * x / 2.0).sum();
        assert!((ll - direct).abs() < 1e-12);
        assert_eq!(e.sample(10, 2).unwrap()[1].len(), 10);
    }
}
