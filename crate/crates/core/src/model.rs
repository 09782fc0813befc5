//! The contract every benchmark model satisfies: a prior to sample from and
//! evaluate, and a stochastic simulator that maps parameters to summary
//! statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// A simulator run that produced no usable statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationFailure(pub String);

/// Prior, simulator and summary statistics for one inference problem.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn param_names(&self) -> Vec<String>;

    fn stat_names(&self) -> Vec<String>;

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64>;

    /// Log prior density; `f64::NEG_INFINITY` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Simulate data under `theta` and reduce it to summary statistics.
    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure>;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    fn n_stats(&self) -> usize {
        self.stat_names().len()
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        self.log_prior(theta).exp()
    }
}

/// One parameter draw and the number of zero-density draws discarded on the way.
#[derive(Debug, Clone)]
pub struct Draw {
    pub theta: Vec<f64>,
    pub rejections: u64,
}

/// Where parameter vectors for a reference table come from: the prior for a
/// first round, a perturbed weighted population afterwards.
pub trait ParameterSource: Sync {
    fn draw(&self, rng: &mut SimRng) -> Result<Draw>;
}

/// Draws straight from a model's prior.
pub struct PriorSource<'a>(pub &'a dyn Model);

impl ParameterSource for PriorSource<'_> {
    fn draw(&self, rng: &mut SimRng) -> Result<Draw> {
        Ok(Draw {
            theta: self.0.sample_prior(rng),
            rejections: 0,
        })
    }
}

/// Independent uniform priors on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig(
                "uniform prior bounds must be nonempty and of equal length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "uniform prior needs finite lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
            .collect()
    }

    /// Open box: boundary points get zero density.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&a, &b))| x > a && x < b)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(a, b)| (b - a).ln())
                .sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn uniform_box_density_and_support() {
        let prior = UniformBox::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        assert!((prior.log_density(&[1.0, 0.0]) - (0.25f64).ln()).abs() < 1e-15);
        assert_eq!(prior.log_density(&[2.0, 0.0]), f64::NEG_INFINITY);
        let mut rng = stream(1, 0);
        for _ in 0..1000 {
            assert!(prior.contains(&prior.sample(&mut rng)));
        }
        assert!(UniformBox::new(vec![1.0], vec![1.0]).is_err());
    }
}
