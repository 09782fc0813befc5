use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

/// Distance between simulated and observed statistics, optionally with a
/// nonnegative weight per statistic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSpec {
    pub metric: Metric,
    pub weights: Option<Vec<f64>>,
}

impl DistanceSpec {
    pub fn euclidean() -> Self {
        Self::default()
    }

    pub fn squared_euclidean() -> Self {
        Self {
            metric: Metric::SquaredEuclidean,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: w.len() });
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidConfig("distance weights must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn distance(&self, s: &[f64], obs: &[f64]) -> f64 {
        let sq: f64 = match &self.weights {
            None => s.iter().zip(obs).map(|(a, b)| (a - b) * (a - b)).sum(),
            Some(w) => s.iter().zip(obs).zip(w).map(|((a, b), w)| w * (a - b) * (a - b)).sum(),
        };
        match self.metric {
            Metric::Euclidean => sq.sqrt(),
            Metric::SquaredEuclidean => sq,
        }
    }
}
