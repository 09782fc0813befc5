//! Normal data with a conjugate Normal-inverse-gamma prior:
//! `θ2 ~ IG(α, β)`, `θ1 | θ2 ~ N(0, θ2)`, `y_i | θ ~ N(θ1, θ2)` (variances).

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Model, SimulationFailure};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchicalSpec {
    pub alpha: f64,
    pub beta: f64,
    pub sample_size: usize,
    pub noise_stats: usize,
}

impl Default for HierarchicalSpec {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 5.0,
            sample_size: 10,
            noise_stats: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hierarchical {
    spec: HierarchicalSpec,
}

/// Draw from `IG(shape, rate)`.
fn inverse_gamma(shape: f64, rate: f64, rng: &mut SimRng) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).expect("validated shape and rate").sample(rng);
    1.0 / g
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Mean, unbiased variance and median absolute deviation (unscaled).
pub fn location_scale(y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = if y.len() > 1 {
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (mean, var, median(&dev))
}

/// The eight combinations of `(s1, s2, s3)`: pairwise sums (1+2, 1+3, 2+3),
/// the full sum, pairwise products, the full product.
pub fn combinations(s1: f64, s2: f64, s3: f64) -> [f64; 8] {
    [s1 + s2, s1 + s3, s2 + s3, s1 + s2 + s3, s1 * s2, s1 * s3, s2 * s3, s1 * s2 * s3]
}

impl Hierarchical {
    pub fn new(spec: HierarchicalSpec) -> Result<Self> {
        if !(spec.alpha > 0.0 && spec.beta > 0.0) || !spec.alpha.is_finite() || !spec.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "alpha and beta must be positive, got {} and {}",
                spec.alpha, spec.beta
            )));
        }
        if spec.sample_size == 0 {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &HierarchicalSpec {
        &self.spec
    }

    pub fn sample_data(&self, theta: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let sd = theta[1].sqrt();
        (0..self.spec.sample_size)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                theta[0] + sd * z
            })
            .collect()
    }

    /// Three location/scale summaries, their eight combinations, then
    /// `noise_stats` uniform draws.
    pub fn summaries(&self, y: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let (s1, s2, s3) = location_scale(y);
        let mut s = vec![s1, s2, s3];
        s.extend(combinations(s1, s2, s3));
        s.extend((0..self.spec.noise_stats).map(|_| rng.random::<f64>()));
        s
    }

    /// Independent draws from the exact joint posterior given `y`:
    /// `θ2 ~ IG(n/2 + α, B)` with `B = ½(S² + 2β + n·ȳ²/(n+1))`, then
    /// `θ1 | θ2 ~ N(n·ȳ/(n+1), θ2/(n+1))`. Returns row-major `(θ1, θ2)`.
    pub fn exact_posterior_sample(&self, y: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let shape = n / 2.0 + self.spec.alpha;
        let rate = 0.5 * (ss + 2.0 * self.spec.beta + n * mean * mean / (n + 1.0));
        let center = n * mean / (n + 1.0);
        let mut out = Vec::with_capacity(2 * m);
        for _ in 0..m {
            let t2 = inverse_gamma(shape, rate, rng);
            let z: f64 = StandardNormal.sample(rng);
            out.push(center + (t2 / (n + 1.0)).sqrt() * z);
            out.push(t2);
        }
        out
    }

    /// Location, scale and degrees of freedom of the Student-t marginal of θ1.
    pub fn theta1_marginal(&self, y: &[f64]) -> (f64, f64, f64) {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let b = 0.5 * (ss + 2.0 * self.spec.beta + n * mean * mean / (n + 1.0));
        let dof = n + 2.0 * self.spec.alpha;
        (n * mean / (n + 1.0), (2.0 * b / ((n + 1.0) * dof)).sqrt(), dof)
    }
}

impl Model for Hierarchical {
    fn name(&self) -> &str {
        "hierarchical"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }

    fn stat_names(&self) -> Vec<String> {
        (1..=11 + self.spec.noise_stats).map(|i| format!("s{i}")).collect()
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        let t2 = inverse_gamma(self.spec.alpha, self.spec.beta, rng);
        let z: f64 = StandardNormal.sample(rng);
        vec![t2.sqrt() * z, t2]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let (t1, t2) = (theta[0], theta[1]);
        if !(t2 > 0.0) || !t1.is_finite() || !t2.is_finite() {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.spec.alpha, self.spec.beta);
        let ig = a * b.ln() - ln_gamma(a) - (a + 1.0) * t2.ln() - b / t2;
        let normal = -0.5 * (2.0 * std::f64::consts::PI * t2).ln() - t1 * t1 / (2.0 * t2);
        ig + normal
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
        if !(theta[1] > 0.0) {
            return Err(SimulationFailure(format!("variance must be positive, got {}", theta[1])));
        }
        let y = self.sample_data(theta, rng);
        Ok(self.summaries(&y, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constant_data_has_zero_spread() {
        let (m, v, mad) = location_scale(&[2.0; 7]);
        assert_eq!((m, v, mad), (2.0, 0.0, 0.0));
    }

    #[test]
    fn combination_layout() {
        assert_eq!(combinations(1.0, 2.0, 3.0), [3.0, 4.0, 5.0, 6.0, 2.0, 3.0, 6.0, 6.0]);
    }

    #[test]
    fn mad_by_hand() {
        // median 3, deviations (2, 1, 0, 1, 6) -> 1
        assert_eq!(location_scale(&[1.0, 2.0, 3.0, 4.0, 9.0]).2, 1.0);
    }

    #[test]
    fn summaries_have_61_entries() {
        let m = Hierarchical::new(HierarchicalSpec::default()).unwrap();
        let mut r = rng::stream(1, 0);
        let s = m.simulate(&[0.5, 2.0], &mut r).unwrap();
        assert_eq!(s.len(), 61);
        assert_eq!(m.n_stats(), 61);
        assert!(s[11..].iter().all(|u| (0.0..1.0).contains(u)));
    }

    #[test]
    fn prior_density_integrates_to_one() {
        let m = Hierarchical::new(HierarchicalSpec::default()).unwrap();
        let (h1, h2) = (0.01, 0.005);
        let mut mass = 0.0;
        for i in 0..2000 {
            let t1 = -10.0 + (i as f64 + 0.5) * h1;
            for j in 0..4000 {
                let t2 = (j as f64 + 0.5) * h2;
                mass += m.prior_density(&[t1, t2]) * h1 * h2;
            }
        }
        assert!((mass - 1.0).abs() < 2e-3, "{mass}");
    }

    fn observed() -> (Hierarchical, Vec<f64>) {
        let m = Hierarchical::new(HierarchicalSpec::default()).unwrap();
        let y = m.sample_data(&[1.0, 2.0], &mut rng::stream(2, 0));
        (m, y)
    }

    #[test]
    fn theta1_draws_follow_t_marginal() {
        let (m, y) = observed();
        let draws = m.exact_posterior_sample(&y, 100_000, &mut rng::stream(3, 0));
        let t1: Vec<f64> = draws.chunks(2).map(|c| c[0]).collect();
        let (loc, scale, dof) = m.theta1_marginal(&y);
        let mean = t1.iter().sum::<f64>() / t1.len() as f64;
        let var = t1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t1.len() - 1) as f64;
        let t_var = scale * scale * dof / (dof - 2.0);
        let se = (t_var / t1.len() as f64).sqrt();
        assert!((mean - loc).abs() < 3.0 * se, "{mean} vs {loc}");
        assert!((var / t_var - 1.0).abs() < 0.03, "{var} vs {t_var}");
    }

    #[test]
    fn posterior_coordinates_uncorrelated() {
        let (m, y) = observed();
        let draws = m.exact_posterior_sample(&y, 100_000, &mut rng::stream(4, 0));
        let t1: Vec<f64> = draws.chunks(2).map(|c| c[0]).collect();
        let t2: Vec<f64> = draws.chunks(2).map(|c| c[1]).collect();
        let r = crate::diagnostics::correlation(&t1, &t2);
        assert!(r.abs() < 3.0 / (t1.len() as f64).sqrt(), "{r}");
    }

    #[test]
    fn larger_beta_inflates_variance() {
        let y = [0.3, -0.2, 1.1, 0.5];
        let mean_t2 = |beta: f64| {
            let m = Hierarchical::new(HierarchicalSpec { beta, ..Default::default() }).unwrap();
            let d = m.exact_posterior_sample(&y, 20_000, &mut rng::stream(5, 0));
            d.chunks(2).map(|c| c[1]).sum::<f64>() / 20_000.0
        };
        assert!(mean_t2(50.0) > mean_t2(5.0));
    }
}
