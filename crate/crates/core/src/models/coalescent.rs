//! Segregating sites and site frequency spectrum under the Poisson
//! approximation: `f(j) ~ Poisson(θ/j)` independently for `j = 1..n−1`,
//! `C = Σ f(j)`.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::GridDensity;
use crate::error::{Error, Result};
use crate::model::{Model, SimulationFailure, UniformBox};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalescentStats {
    /// `{C}`
    Count,
    /// `{C, f(1..m)}`
    CountAndSfs,
    /// `{f(1..m)}`
    Sfs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoalescentSpec {
    pub sample_size: usize,
    pub sfs_cutoff: usize,
    pub prior_lower: f64,
    pub prior_upper: f64,
    pub stats: CoalescentStats,
}

impl Default for CoalescentSpec {
    fn default() -> Self {
        Self {
            sample_size: 1000,
            sfs_cutoff: 31,
            prior_lower: 1.0,
            prior_upper: 20.0,
            stats: CoalescentStats::Count,
        }
    }
}

/// `Σ_{j=1}^{n} 1/j`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

#[derive(Debug, Clone)]
pub struct Coalescent {
    spec: CoalescentSpec,
    prior: UniformBox,
    /// `H_{n−1} − H_m`: rate multiplier of the lumped tail `f(m+1..n−1)`.
    tail: f64,
}

impl Coalescent {
    pub fn new(spec: CoalescentSpec) -> Result<Self> {
        if spec.sample_size < 2 {
            return Err(Error::InvalidConfig("coalescent sample size must be at least 2".into()));
        }
        if spec.sfs_cutoff < 1 || spec.sfs_cutoff > spec.sample_size - 1 {
            return Err(Error::InvalidConfig(format!(
                "sfs cutoff must lie in 1..={}, got {}",
                spec.sample_size - 1,
                spec.sfs_cutoff
            )));
        }
        let prior = UniformBox::new(vec![spec.prior_lower], vec![spec.prior_upper])?;
        let tail = harmonic(spec.sample_size - 1) - harmonic(spec.sfs_cutoff);
        Ok(Self { spec, prior, tail })
    }

    pub fn spec(&self) -> &CoalescentSpec {
        &self.spec
    }

    /// `E C = θ·H_{n−1}`.
    pub fn expected_count(&self, theta: f64) -> f64 {
        theta * harmonic(self.spec.sample_size - 1)
    }

    /// `C` and the first `m` spectrum entries. The sites beyond `m` only
    /// enter `C`, so they are drawn as one Poisson with the summed rate.
    pub fn draw(&self, theta: f64, rng: &mut SimRng) -> (f64, Vec<f64>) {
        let poisson = |rate: f64, rng: &mut SimRng| -> f64 {
            if rate > 0.0 {
                Poisson::new(rate).map(|p| p.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let sfs: Vec<f64> = (1..=self.spec.sfs_cutoff).map(|j| poisson(theta / j as f64, rng)).collect();
        let rest = poisson(theta * self.tail, rng);
        (sfs.iter().sum::<f64>() + rest, sfs)
    }
}

impl Model for Coalescent {
    fn name(&self) -> &str {
        "coalescent"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn stat_names(&self) -> Vec<String> {
        let sfs = (1..=self.spec.sfs_cutoff).map(|j| format!("f{j}"));
        match self.spec.stats {
            CoalescentStats::Count => vec!["C".into()],
            CoalescentStats::CountAndSfs => std::iter::once("C".to_string()).chain(sfs).collect(),
            CoalescentStats::Sfs => sfs.collect(),
        }
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
        let (c, sfs) = self.draw(theta[0], rng);
        Ok(match self.spec.stats {
            CoalescentStats::Count => vec![c],
            CoalescentStats::CountAndSfs => std::iter::once(c).chain(sfs).collect(),
            CoalescentStats::Sfs => sfs,
        })
    }
}

/// Posterior of a Poisson mean `θ·h` given a count `c` under `U(a, b)`,
/// tabulated on `points` equally spaced grid nodes.
pub fn poisson_grid_posterior(c: u64, h: f64, a: f64, b: f64, points: usize) -> Result<GridDensity> {
    if !(a < b) || points < 2 || !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need a < b, h >= 0 and at least two grid points (a={a}, b={b}, h={h}, points={points})"
        )));
    }
    let x: Vec<f64> = (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect();
    let log: Vec<f64> = x
        .iter()
        .map(|&t| {
            let mean = t * h;
            if c == 0 {
                -mean
            } else {
                c as f64 * mean.ln() - mean
            }
        })
        .collect();
    GridDensity::from_log(x, &log)
}

/// Exact posterior of θ given `C = c` for sample size `n` and prior `U(a, b)`.
pub fn coalescent_exact_posterior(c: u64, n: usize, a: f64, b: f64, points: usize) -> Result<GridDensity> {
    if n < 2 {
        return Err(Error::InvalidArgument("sample size must be at least 2".into()));
    }
    poisson_grid_posterior(c, harmonic(n - 1), a, b, points)
}
