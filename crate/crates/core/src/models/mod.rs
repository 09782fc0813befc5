//! Benchmark models and their exact posteriors or likelihoods.

pub mod birth_death;
pub mod coalescent;
pub mod hierarchical;
pub mod lotka_volterra;
pub mod michaelis_menten;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::SimRng;

pub use birth_death::{bd_loglikelihood, bd_transition_logprob, BirthDeath, BirthDeathData, BirthDeathSpec};
pub use coalescent::{coalescent_exact_posterior, Coalescent, CoalescentSpec, CoalescentStats};
pub use hierarchical::{Hierarchical, HierarchicalSpec};
pub use lotka_volterra::{LotkaVolterra, LotkaVolterraSpec};
pub use michaelis_menten::{MichaelisMenten, MichaelisMentenSpec};

/// A model selected by name with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Coalescent(CoalescentSpec),
    Hierarchical(HierarchicalSpec),
    LotkaVolterra(LotkaVolterraSpec),
    BirthDeath(BirthDeathSpec),
    MichaelisMenten(MichaelisMentenSpec),
}

impl ModelConfig {
    pub const NAMES: [&'static str; 5] = ["coalescent", "hierarchical", "lotka_volterra", "birth_death", "michaelis_menten"];

    /// Default settings of the named model.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "coalescent" => Self::Coalescent(CoalescentSpec::default()),
            "hierarchical" => Self::Hierarchical(HierarchicalSpec::default()),
            "lotka_volterra" => Self::LotkaVolterra(LotkaVolterraSpec::default()),
            "birth_death" => Self::BirthDeath(BirthDeathSpec::default()),
            "michaelis_menten" => Self::MichaelisMenten(MichaelisMentenSpec::default()),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown model {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn build(&self) -> Result<Box<dyn Model>> {
        Ok(match self {
            Self::Coalescent(s) => Box::new(Coalescent::new(s.clone())?),
            Self::Hierarchical(s) => Box::new(Hierarchical::new(s.clone())?),
            Self::LotkaVolterra(s) => Box::new(LotkaVolterra::new(s.clone())?),
            Self::BirthDeath(s) => Box::new(BirthDeath::new(s.clone())?),
            Self::MichaelisMenten(s) => Box::new(MichaelisMenten::new(s.clone())?),
        })
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(x, f)| (x[1] - x[0]) * (f[0] + f[1]) / 2.0).sum()
}

/// A normalized density tabulated on a grid, integrated with the
/// trapezoidal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridDensity {
    /// Normalize unnormalized nonnegative values on an increasing grid.
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != values.len() || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid must be strictly increasing with at least two nodes".into()));
        }
        let mass = trapezoid(&x, &values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument("density has no finite positive mass on the grid".into()));
        }
        let density: Vec<f64> = values.iter().map(|v| v / mass).collect();
        let mut cdf = vec![0.0; x.len()];
        for i in 1..x.len() {
            cdf[i] = cdf[i - 1] + (x[i] - x[i - 1]) * (density[i - 1] + density[i]) / 2.0;
        }
        Ok(Self { x, density, cdf })
    }

    /// Normalize a log density, subtracting its maximum first.
    pub fn from_log(x: Vec<f64>, log: &[f64]) -> Result<Self> {
        let max = log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidArgument("log density has no finite maximum".into()));
        }
        Self::new(x, log.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn mean(&self) -> f64 {
        let f: Vec<f64> = self.x.iter().zip(&self.density).map(|(x, d)| x * d).collect();
        trapezoid(&self.x, &f)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let f: Vec<f64> = self.x.iter().zip(&self.density).map(|(x, d)| (x - m) * (x - m) * d).collect();
        trapezoid(&self.x, &f)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Inverse CDF, interpolating linearly inside a grid cell.
    pub fn quantile(&self, q: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < q).clamp(1, self.x.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { ((q - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.x[i - 1] + frac * (self.x[i] - self.x[i - 1])
    }

    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        levels.iter().map(|&q| self.quantile(q)).collect()
    }

    pub fn sample(&self, m: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..m).map(|_| self.quantile(rng.random::<f64>())).collect()
    }
}

/// A normalized density on a rectangular grid, row-major over `x` then `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity2 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub density: Vec<f64>,
}

impl GridDensity2 {
    pub fn from_log(x: Vec<f64>, y: Vec<f64>, log: &[f64]) -> Result<Self> {
        if log.len() != x.len() * y.len() || x.len() < 2 || y.len() < 2 {
            return Err(Error::InvalidArgument("grid shape does not match the density values".into()));
        }
        let max = log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidArgument("log density has no finite maximum".into()));
        }
        let raw: Vec<f64> = log.iter().map(|l| (l - max).exp()).collect();
        let rows: Vec<f64> = raw.chunks(y.len()).map(|r| trapezoid(&y, r)).collect();
        let mass = trapezoid(&x, &rows);
        Ok(Self {
            density: raw.iter().map(|v| v / mass).collect(),
            x,
            y,
        })
    }

    /// Marginal of the first (`j = 0`) or second coordinate.
    pub fn marginal(&self, j: usize) -> Result<GridDensity> {
        let ny = self.y.len();
        if j == 0 {
            let f = self.density.chunks(ny).map(|r| trapezoid(&self.y, r)).collect();
            GridDensity::new(self.x.clone(), f)
        } else {
            let f = (0..ny)
                .map(|k| {
                    let col: Vec<f64> = (0..self.x.len()).map(|i| self.density[i * ny + k]).collect();
                    trapezoid(&self.x, &col)
                })
                .collect();
            GridDensity::new(self.y.clone(), f)
        }
    }
}

/// Posterior of `(λ, μ)` given birth-death data under a uniform box prior,
/// tabulated on a `points × points` grid.
pub fn bd_posterior_grid(data: &BirthDeathData, lower: [f64; 2], upper: [f64; 2], points: usize) -> Result<GridDensity2> {
    let axis = |j: usize| -> Vec<f64> {
        (0..points)
            .map(|i| lower[j] + (upper[j] - lower[j]) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let (x, y) = (axis(0), axis(1));
    let mut log = Vec::with_capacity(points * points);
    for &l in &x {
        for &m in &y {
            log.push(bd_loglikelihood(data, l, m)?);
        }
    }
    GridDensity2::from_log(x, y, &log)
}
