//! Predator-prey dynamics `dx/dt = a·x − c·x·y`, `dy/dt = b·x·y − d·y`
//! integrated with classical fixed-step Runge-Kutta and observed with
//! additive Gaussian noise.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, SimulationFailure, UniformBox};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LotkaVolterraSpec {
    pub c: f64,
    pub d: f64,
    pub initial: [f64; 2],
    pub times: Vec<f64>,
    pub noise_sd: f64,
    pub step: f64,
    pub prior_lower: [f64; 2],
    pub prior_upper: [f64; 2],
    /// States beyond this magnitude count as a blow-up.
    pub blowup: f64,
}

impl Default for LotkaVolterraSpec {
    fn default() -> Self {
        Self {
            c: 1.0,
            d: 1.0,
            initial: [1.0, 0.5],
            times: (1..=8).map(|k| 1.875 * k as f64).collect(),
            noise_sd: 0.5,
            step: 0.01,
            prior_lower: [-10.0, -10.0],
            prior_upper: [10.0, 10.0],
            blowup: 1e8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LotkaVolterra {
    spec: LotkaVolterraSpec,
    prior: UniformBox,
}

impl LotkaVolterra {
    pub fn new(spec: LotkaVolterraSpec) -> Result<Self> {
        if spec.initial.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("initial populations must be positive".into()));
        }
        if spec.times.is_empty() || spec.times[0] <= 0.0 || spec.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("observation times must be positive and strictly increasing".into()));
        }
        if !(spec.step > 0.0) || !(spec.noise_sd >= 0.0) {
            return Err(Error::InvalidConfig("step must be positive and noise sd nonnegative".into()));
        }
        let prior = UniformBox::new(spec.prior_lower.to_vec(), spec.prior_upper.to_vec())?;
        Ok(Self { spec, prior })
    }

    pub fn spec(&self) -> &LotkaVolterraSpec {
        &self.spec
    }

    fn rhs(&self, a: f64, b: f64, s: [f64; 2]) -> [f64; 2] {
        let [x, y] = s;
        [a * x - self.spec.c * x * y, b * x * y - self.spec.d * y]
    }

    fn rk4(&self, a: f64, b: f64, s: [f64; 2], h: f64) -> [f64; 2] {
        let add = |s: [f64; 2], k: [f64; 2], f: f64| [s[0] + f * k[0], s[1] + f * k[1]];
        let k1 = self.rhs(a, b, s);
        let k2 = self.rhs(a, b, add(s, k1, h / 2.0));
        let k3 = self.rhs(a, b, add(s, k2, h / 2.0));
        let k4 = self.rhs(a, b, add(s, k3, h));
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    /// Noiseless states at the observation times with step `h`, as
    /// `x(t_1..t_n)` followed by `y(t_1..t_n)`. The last step before each
    /// observation is shortened to land on it.
    pub fn solve_with_step(&self, a: f64, b: f64, h: f64) -> std::result::Result<Vec<f64>, SimulationFailure> {
        let mut s = self.spec.initial;
        let mut t = 0.0;
        let n = self.spec.times.len();
        let mut out = vec![0.0; 2 * n];
        for (i, &target) in self.spec.times.iter().enumerate() {
            while target - t > 1e-12 {
                let dt = h.min(target - t);
                s = self.rk4(a, b, s, dt);
                t += dt;
                if !(s[0].abs() <= self.spec.blowup && s[1].abs() <= self.spec.blowup) {
                    return Err(SimulationFailure(format!("state left ±{:e} at t = {t:.3}", self.spec.blowup)));
                }
            }
            t = target;
            out[i] = s[0];
            out[n + i] = s[1];
        }
        Ok(out)
    }

    pub fn solve(&self, a: f64, b: f64) -> std::result::Result<Vec<f64>, SimulationFailure> {
        self.solve_with_step(a, b, self.spec.step)
    }
}

impl Model for LotkaVolterra {
    fn name(&self) -> &str {
        "lotka_volterra"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn stat_names(&self) -> Vec<String> {
        let n = self.spec.times.len();
        (1..=n).map(|i| format!("x{i}")).chain((1..=n).map(|i| format!("y{i}"))).collect()
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
        let mut s = self.solve(theta[0], theta[1])?;
        for v in &mut s {
            let z: f64 = StandardNormal.sample(rng);
            *v += self.spec.noise_sd * z;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predators_decay_without_growth() {
        let m = LotkaVolterra::new(LotkaVolterraSpec::default()).unwrap();
        let s = m.solve(0.0, 0.0).unwrap();
        let y = &s[8..];
        assert!(y.windows(2).all(|w| w[1] < w[0]));
        assert!(s[..8].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn step_halving_is_converged() {
        let m = LotkaVolterra::new(LotkaVolterraSpec::default()).unwrap();
        let a = m.solve_with_step(1.0, 1.0, 0.01).unwrap();
        let b = m.solve_with_step(1.0, 1.0, 0.005).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn extreme_rates_fail() {
        let m = LotkaVolterra::new(LotkaVolterraSpec::default()).unwrap();
        assert!(m.solve(10.0, -10.0).is_err());
    }
}
