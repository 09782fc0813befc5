//! Metropolis-Hastings with an exact likelihood, and its likelihood-free
//! counterpart that accepts only simulations within ε of the observation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{self, SimRng};
use crate::smc::PerturbationKernel;
use crate::tables::{Observation, WeightedParticles};

pub const INIT_ATTEMPTS: usize = 1_000;

/// Proposal distribution `q(θ | from)`.
pub trait MarkovProposal: Sync {
    fn propose(&self, from: &[f64], rng: &mut SimRng) -> Vec<f64>;

    fn log_density(&self, to: &[f64], from: &[f64]) -> f64;
}

impl MarkovProposal for PerturbationKernel {
    fn propose(&self, from: &[f64], rng: &mut SimRng) -> Vec<f64> {
        self.sample(from, rng)
    }

    fn log_density(&self, to: &[f64], from: &[f64]) -> f64 {
        PerturbationKernel::log_density(self, to, from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhConfig {
    /// Total iterations, burn-in included.
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            n_steps: 100_000,
            burn_in: 2_500,
            thin: 50,
            seed: 0,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.burn_in > self.n_steps {
            return Err(Error::InvalidConfig(format!(
                "burn_in {} exceeds n_steps {}",
                self.burn_in, self.n_steps
            )));
        }
        Ok(())
    }

    /// Whether the state after step `i` (0-based) is kept.
    fn keeps(&self, i: usize) -> bool {
        i >= self.burn_in && (i + 1 - self.burn_in) % self.thin == 0
    }
}

/// Log densities of the target and how to draw a starting point.
pub struct MhTarget<'a> {
    pub log_likelihood: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub log_prior: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub initial: &'a (dyn Fn(&mut SimRng) -> Vec<f64> + Sync),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Kept states, row-major.
    pub states: Vec<f64>,
    pub dim: usize,
    pub proposed: u64,
    pub accepted: u64,
    /// Simulator calls (likelihood-free chains only).
    pub simulations: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states[i * self.dim + j]).collect()
    }

    /// Accepted over proposed, burn-in included.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn to_particles(&self, param_names: Vec<String>) -> Result<WeightedParticles> {
        WeightedParticles::uniform(self.states.clone(), param_names)
    }
}

/// Random-walk Metropolis-Hastings in log space.
pub fn metropolis_hastings(target: &MhTarget, proposal: &dyn MarkovProposal, cfg: &MhConfig) -> Result<Chain> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, 0);
    let log_target = |theta: &[f64]| {
        let lp = (target.log_prior)(theta);
        if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + (target.log_likelihood)(theta)
        }
    };
    let (mut current, mut current_lt) = (0..INIT_ATTEMPTS)
        .find_map(|_| {
            let theta = (target.initial)(&mut rng);
            let lt = log_target(&theta);
            lt.is_finite().then_some((theta, lt))
        })
        .ok_or(Error::NonFiniteTarget {
            attempts: INIT_ATTEMPTS,
        })?;
    let dim = current.len();
    let mut chain = Chain {
        states: Vec::with_capacity((cfg.n_steps - cfg.burn_in) / cfg.thin * dim),
        dim,
        proposed: 0,
        accepted: 0,
        simulations: 0,
    };
    for i in 0..cfg.n_steps {
        let candidate = proposal.propose(&current, &mut rng);
        chain.proposed += 1;
        let lt = log_target(&candidate);
        let u: f64 = rng.random();
        if lt > f64::NEG_INFINITY {
            let log_alpha = lt + proposal.log_density(&current, &candidate) - current_lt - proposal.log_density(&candidate, &current);
            if u.ln() < log_alpha {
                current = candidate;
                current_lt = lt;
                chain.accepted += 1;
            }
        }
        if cfg.keeps(i) {
            chain.states.extend_from_slice(&current);
        }
    }
    Ok(chain)
}

/// Likelihood-free chain: a proposal with positive prior density is
/// simulated and, if its statistics land strictly within ε of the
/// observation, accepted with the prior-and-proposal ratio.
pub fn abc_mcmc(
    model: &dyn Model,
    proposal: &dyn MarkovProposal,
    distance: &DistanceSpec,
    epsilon: f64,
    obs: &Observation,
    cfg: &MhConfig,
) -> Result<Chain> {
    cfg.validate()?;
    obs.check_against(model.n_stats())?;
    distance.validate(model.n_stats())?;
    let mut rng = rng::stream(cfg.seed, 0);
    let mut current = model.sample_prior(&mut rng);
    let mut current_lp = model.log_prior(&current);
    let dim = current.len();
    let mut chain = Chain {
        states: Vec::with_capacity((cfg.n_steps - cfg.burn_in) / cfg.thin * dim),
        dim,
        proposed: 0,
        accepted: 0,
        simulations: 0,
    };
    for i in 0..cfg.n_steps {
        let candidate = proposal.propose(&current, &mut rng);
        chain.proposed += 1;
        let lp = model.log_prior(&candidate);
        if lp > f64::NEG_INFINITY {
            chain.simulations += 1;
            let close = match model.simulate(&candidate, &mut rng) {
                Ok(s) => distance.distance(&s, obs.values()) < epsilon,
                Err(_) => false,
            };
            if close {
                let log_alpha = lp + proposal.log_density(&current, &candidate)
                    - current_lp
                    - proposal.log_density(&candidate, &current);
                let u: f64 = rng.random();
                if u.ln() < log_alpha {
                    current = candidate;
                    current_lp = lp;
                    chain.accepted += 1;
                }
            }
        }
        if cfg.keeps(i) {
            chain.states.extend_from_slice(&current);
        }
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_target_accepts_everything() {
        let target = MhTarget {
            log_likelihood: &|_| 0.0,
            log_prior: &|_| 0.0,
            initial: &|_| vec![0.0],
        };
        let cfg = MhConfig {
            n_steps: 1000,
            burn_in: 0,
            thin: 1,
            seed: 1,
        };
        let chain = metropolis_hastings(&target, &PerturbationKernel::Uniform { half_widths: vec![1.0] }, &cfg).unwrap();
        assert_eq!(chain.acceptance_rate(), 1.0);
        assert_eq!(chain.len(), 1000);
    }

    #[test]
    fn kept_state_count() {
        let cfg = MhConfig {
            n_steps: 100_000,
            burn_in: 2_500,
            thin: 50,
            seed: 0,
        };
        assert_eq!((0..cfg.n_steps).filter(|&i| cfg.keeps(i)).count(), 1950);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let target = MhTarget {
            log_likelihood: &|_| f64::NAN,
            log_prior: &|_| 0.0,
            initial: &|_| vec![0.0],
        };
        let err = metropolis_hastings(&target, &PerturbationKernel::Identity, &MhConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteTarget { attempts: INIT_ATTEMPTS }));
    }

    #[test]
    fn gaussian_target_moments() {
        let target = MhTarget {
            log_likelihood: &|t| -0.5 * (t[0] - 2.0).powi(2) / 0.25,
            log_prior: &|_| 0.0,
            initial: &|_| vec![0.0],
        };
        let cfg = MhConfig {
            n_steps: 200_000,
            burn_in: 1_000,
            thin: 10,
            seed: 3,
        };
        let chain = metropolis_hastings(&target, &PerturbationKernel::Gaussian { sds: vec![1.0] }, &cfg).unwrap();
        let x = chain.coordinate(0);
        let m = crate::diagnostics::mean(&x);
        let v = crate::diagnostics::sample_variance(&x);
        // Thinned draws are close to independent; allow for residual autocorrelation.
        let se = (0.25 / x.len() as f64).sqrt() * 2.0;
        assert!((m - 2.0).abs() < 3.0 * se, "{m}");
        assert!((v - 0.25).abs() < 0.02, "{v}");
    }

    /// Moves to one of the other two states of {0, 1, 2} with equal odds.
    struct OtherState;

    impl MarkovProposal for OtherState {
        fn propose(&self, from: &[f64], rng: &mut SimRng) -> Vec<f64> {
            let step = rng.random_range(1..3) as f64;
            vec![(from[0] + step) % 3.0]
        }

        fn log_density(&self, to: &[f64], from: &[f64]) -> f64 {
            if to[0] == from[0] {
                f64::NEG_INFINITY
            } else {
                0.5f64.ln()
            }
        }
    }

    #[test]
    fn three_state_chain_hits_target_frequencies() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = [0.2f64, 0.3, 0.5];
        let target = MhTarget {
            log_likelihood: &|t| p[t[0] as usize].ln(),
            log_prior: &|_| 0.0,
            initial: &|_| vec![0.0],
        };
        let cfg = MhConfig {
            n_steps: 300_000,
            burn_in: 100,
            thin: 10,
            seed: 9,
        };
        let chain = metropolis_hastings(&target, &OtherState, &cfg).unwrap();
        let mut counts = [0.0; 3];
        for x in chain.coordinate(0) {
            counts[x as usize] += 1.0;
        }
        let n = chain.len() as f64;
        let stat: f64 = counts.iter().zip(p).map(|(c, q)| (c - n * q).powi(2) / (n * q)).sum();
        assert!(1.0 - ChiSquared::new(2.0).unwrap().cdf(stat) > 0.001, "{counts:?}");
        assert_eq!(chain.proposed, cfg.n_steps as u64);
        assert!(chain.accepted <= chain.proposed);
    }

    /// Flat prior on a wide box; statistics are θ plus unit noise.
    struct Walk;

    impl Model for Walk {
        fn name(&self) -> &str {
            "walk"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
        fn stat_names(&self) -> Vec<String> {
            vec!["s".into()]
        }
        fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
            vec![rng.random_range(-1.0..1.0)]
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            if theta[0].abs() < 1e6 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, crate::model::SimulationFailure> {
            Ok(vec![theta[0] + rng.random::<f64>() - 0.5])
        }
    }

    #[test]
    fn abc_mcmc_tolerance_extremes() {
        let cfg = MhConfig {
            n_steps: 2000,
            burn_in: 0,
            thin: 1,
            seed: 4,
        };
        let kernel = PerturbationKernel::Uniform { half_widths: vec![1.0] };
        let obs = Observation(vec![0.0]);
        let d = DistanceSpec::euclidean();
        let free = abc_mcmc(&Walk, &kernel, &d, f64::INFINITY, &obs, &cfg).unwrap();
        assert_eq!(free.accepted, 2000);
        assert_eq!(free.simulations, 2000);
        let stuck = abc_mcmc(&Walk, &kernel, &d, 0.0, &obs, &cfg).unwrap();
        assert_eq!(stuck.accepted, 0);
        let first = stuck.state(0)[0];
        assert!(stuck.coordinate(0).iter().all(|&x| x == first));
    }
}
