//! Michaelis-Menten enzyme kinetics simulated with Gillespie's direct method.
//!
//! Reactions and propensities, with state `(E, S, ES, P)`:
//! - `ES → E + P` at `c1·ES`
//! - `E + S → ES` at `10^c2/(nA·vol)·E·S`
//! - `ES → E + S` at `10^c3·ES`

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, SimulationFailure, UniformBox};
use crate::rng::SimRng;

pub const AVOGADRO: f64 = 6.023e23;
pub const VOLUME: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MichaelisMentenSpec {
    /// Initial `(E, S, ES, P)`.
    pub initial: [u64; 4],
    pub times: Vec<f64>,
    pub avogadro: f64,
    pub volume: f64,
    pub prior_lower: [f64; 3],
    pub prior_upper: [f64; 3],
    /// Events allowed per path before it counts as a failure.
    pub max_events: u64,
}

impl Default for MichaelisMentenSpec {
    fn default() -> Self {
        Self {
            initial: [
                (2e-7 * AVOGADRO * VOLUME).floor() as u64,
                (5e-7 * AVOGADRO * VOLUME).floor() as u64,
                0,
                0,
            ],
            times: (1..=10).map(|t| t as f64).collect(),
            avogadro: AVOGADRO,
            volume: VOLUME,
            prior_lower: [0.0, 5.0, -5.0],
            prior_upper: [1.0, 7.0, -3.0],
            max_events: 10_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MichaelisMenten {
    spec: MichaelisMentenSpec,
    prior: UniformBox,
}

impl MichaelisMenten {
    pub fn new(spec: MichaelisMentenSpec) -> Result<Self> {
        if spec.times.is_empty() || spec.times[0] <= 0.0 || spec.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("observation times must be positive and strictly increasing".into()));
        }
        if !(spec.avogadro > 0.0 && spec.volume > 0.0) {
            return Err(Error::InvalidConfig("nA and vol must be positive".into()));
        }
        let prior = UniformBox::new(spec.prior_lower.to_vec(), spec.prior_upper.to_vec())?;
        Ok(Self { spec, prior })
    }

    pub fn spec(&self) -> &MichaelisMentenSpec {
        &self.spec
    }

    /// Rate constants `(c̄1, c̄2, c̄3)` from the parameters.
    pub fn rates(&self, theta: &[f64]) -> [f64; 3] {
        [
            theta[0],
            10f64.powf(theta[1]) / (self.spec.avogadro * self.spec.volume),
            10f64.powf(theta[2]),
        ]
    }

    /// Full event sequence up to the last observation time, passing the
    /// state after every event to `visit`. Returns the states at the
    /// observation times.
    pub fn path_with(
        &self,
        theta: &[f64],
        rng: &mut SimRng,
        mut visit: impl FnMut([u64; 4]),
    ) -> std::result::Result<Vec<[u64; 4]>, SimulationFailure> {
        let [k1, k2, k3] = self.rates(theta);
        if ![k1, k2, k3].iter().all(|k| k.is_finite() && *k >= 0.0) {
            return Err(SimulationFailure(format!("invalid rate constants for {theta:?}")));
        }
        let mut x = self.spec.initial;
        let mut t = 0.0;
        let mut events = 0u64;
        let mut out = Vec::with_capacity(self.spec.times.len());
        for &target in &self.spec.times {
            loop {
                let [e, s, es, _] = x.map(|v| v as f64);
                let a1 = k1 * es;
                let a2 = k2 * e * s;
                let a3 = k3 * es;
                let total = a1 + a2 + a3;
                if total <= 0.0 {
                    break;
                }
                let u: f64 = rng.random();
                let wait = -(1.0 - u).ln() / total;
                if t + wait > target {
                    break;
                }
                t += wait;
                let pick = rng.random::<f64>() * total;
                if pick < a1 {
                    x[2] -= 1;
                    x[0] += 1;
                    x[3] += 1;
                } else if pick < a1 + a2 {
                    x[0] -= 1;
                    x[1] -= 1;
                    x[2] += 1;
                } else {
                    x[2] -= 1;
                    x[0] += 1;
                    x[1] += 1;
                }
                visit(x);
                events += 1;
                if events > self.spec.max_events {
                    return Err(SimulationFailure(format!("more than {} events", self.spec.max_events)));
                }
            }
            t = target;
            out.push(x);
        }
        Ok(out)
    }
}

impl Model for MichaelisMenten {
    fn name(&self) -> &str {
        "michaelis_menten"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["c1".into(), "c2".into(), "c3".into()]
    }

    /// `E(t), S(t), ES(t), P(t)` for each observation time in turn.
    fn stat_names(&self) -> Vec<String> {
        (1..=self.spec.times.len())
            .flat_map(|i| ["E", "S", "ES", "P"].map(|s| format!("{s}{i}")))
            .collect()
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
        let states = self.path_with(theta, rng, |_| {})?;
        Ok(states.iter().flat_map(|x| x.map(|v| v as f64)).collect())
    }
}
