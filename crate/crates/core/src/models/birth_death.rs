//! Linear birth-death process: each individual divides at rate λ and dies
//! at rate μ. Observed as population counts at fixed times.
//!
//! Paths are simulated event by event while the population is at most
//! `exact_cap`; above it, whole observation intervals are sampled from the
//! exact transition law (survivors are binomial, each survivor's family
//! size geometric), which has the same distribution at the observation
//! times.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Model, SimulationFailure, UniformBox};
use crate::rng::SimRng;

/// Bundled observation: 25 counts at `t = 0.2, 0.4, …, 5` from `Z(0) = 10`,
/// simulated at `(λ, μ) = (1, 0.5)`.
pub const BUNDLED_DATA: &str = include_str!("../../data/birth_death.csv");

/// Seed the bundled data was generated with.
pub const BUNDLED_SEED: u64 = 20_240_501;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirthDeathSpec {
    pub initial: u64,
    pub times: Vec<f64>,
    pub prior_lower: [f64; 2],
    pub prior_upper: [f64; 2],
    pub exact_cap: f64,
}

impl Default for BirthDeathSpec {
    fn default() -> Self {
        Self {
            initial: 10,
            times: (1..=25).map(|i| i as f64 / 5.0).collect(),
            prior_lower: [0.0, 0.0],
            prior_upper: [20.0, 20.0],
            exact_cap: 1000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BirthDeath {
    spec: BirthDeathSpec,
    prior: UniformBox,
}

/// `(α, β, ln(1−α), ln(1−β))` for an interval of length `t`: α is the
/// extinction probability of one lineage, β the ratio of the geometric
/// family size of a surviving lineage.
fn kendall(t: f64, lambda: f64, mu: f64) -> (f64, f64, f64, f64) {
    let r = lambda - mu;
    if r == 0.0 {
        let a = lambda * t / (1.0 + lambda * t);
        let l = -(lambda * t).ln_1p();
        return (a, a, l, l);
    }
    let e = (r * t).exp_m1();
    let denom = lambda * e + r;
    let alpha = mu * e / denom;
    let beta = lambda * e / denom;
    // 1 − α = r·e^{rt}/denom and 1 − β = r/denom, both positive.
    let ln_one_minus_alpha = (r / denom).ln() + r * t;
    let ln_one_minus_beta = (r / denom).ln();
    (alpha, beta, ln_one_minus_alpha, ln_one_minus_beta)
}

fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![0.0; 4096];
        for i in 1..t.len() {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    match table.get(n as usize) {
        Some(v) => *v,
        None => ln_gamma(n as f64 + 1.0),
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `k·ln x` with `0·ln 0 = 0`.
fn ln_pow(ln_x: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_x
    }
}

/// `ln P(Z(t) = to | Z(0) = from)`.
pub fn bd_transition_logprob(from: u64, to: u64, dt: f64, lambda: f64, mu: f64) -> Result<f64> {
    if !(dt > 0.0) || !(lambda >= 0.0) || !(mu >= 0.0) || !lambda.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and finite nonnegative rates (dt={dt}, lambda={lambda}, mu={mu})"
        )));
    }
    if from == 0 {
        return Ok(if to == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let (alpha, beta, l1a, l1b) = kendall(dt, lambda, mu);
    let (la, lb) = (alpha.ln(), beta.ln());
    if to == 0 {
        return Ok(ln_pow(la, from));
    }
    let terms: Vec<f64> = (1..=from.min(to))
        .map(|l| {
            ln_choose(from, l) + ln_pow(l1a, l) + ln_pow(la, from - l) + ln_choose(to - 1, l - 1) + ln_pow(l1b, l) + ln_pow(lb, to - l)
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
}

/// Observed counts with their times; the process starts at `initial` at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathData {
    pub initial: u64,
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
}

impl BirthDeathData {
    /// Parse `time,count` rows after a header line.
    pub fn parse(text: &str, initial: u64) -> Result<Self> {
        let mut times = Vec::new();
        let mut counts = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let parsed = match cells.as_slice() {
                [t, z] => t.trim().parse::<f64>().ok().zip(z.trim().parse::<u64>().ok()),
                _ => None,
            };
            let (t, z) = parsed.ok_or_else(|| Error::InvalidArgument(format!("line {}: expected `time,count`", line_no + 1)))?;
            times.push(t);
            counts.push(z);
        }
        let data = Self { initial, times, counts };
        data.validate()?;
        Ok(data)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_DATA, BirthDeathSpec::default().initial).expect("bundled data parses")
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.counts.len() {
            return Err(Error::InvalidArgument("need matching, nonempty times and counts".into()));
        }
        if self.times[0] <= 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,count\n");
        for (t, z) in self.times.iter().zip(&self.counts) {
            s.push_str(&format!("{t},{z}\n"));
        }
        s
    }

    pub fn stats(&self) -> Vec<f64> {
        self.counts.iter().map(|&z| z as f64).collect()
    }
}

/// Sum of transition log-probabilities along the observed path.
pub fn bd_loglikelihood(data: &BirthDeathData, lambda: f64, mu: f64) -> Result<f64> {
    data.validate()?;
    let mut prev = (0.0, data.initial);
    let mut total = 0.0;
    for (&t, &z) in data.times.iter().zip(&data.counts) {
        total += bd_transition_logprob(prev.1, z, t - prev.0, lambda, mu)?;
        if total == f64::NEG_INFINITY {
            return Ok(total);
        }
        prev = (t, z);
    }
    Ok(total)
}

/// Draw `Z(t)` given `Z(0) = z` from the exact transition law.
pub fn sample_transition(z: f64, dt: f64, lambda: f64, mu: f64, rng: &mut SimRng) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let r = lambda - mu;
    if z > 1e12 {
        // Relative fluctuations are below 1e-6: moment-matched Normal.
        let g = (r * dt).exp();
        let var = if r == 0.0 {
            2.0 * lambda * dt * z
        } else {
            z * (lambda + mu) / r * g * (g - 1.0)
        };
        let zn: f64 = StandardNormal.sample(rng);
        return (z * g + var.max(0.0).sqrt() * zn).round().max(0.0);
    }
    let (alpha, beta, _, _) = kendall(dt, lambda, mu);
    let survivors = Binomial::new(z as u64, (1.0 - alpha).clamp(0.0, 1.0))
        .map(|b| b.sample(rng))
        .unwrap_or(0);
    if survivors == 0 {
        return 0.0;
    }
    if beta <= 0.0 {
        return survivors as f64;
    }
    // Extra offspring of `survivors` geometric families: negative binomial
    // as a Gamma-Poisson mixture.
    let g: f64 = Gamma::new(survivors as f64, beta / (1.0 - beta))
        .map(|d| d.sample(rng))
        .unwrap_or(0.0);
    let extra = if g <= 0.0 {
        0.0
    } else if g < Poisson::<f64>::MAX_LAMBDA {
        Poisson::new(g).map(|p| p.sample(rng)).unwrap_or(g.round())
    } else {
        g.round()
    };
    survivors as f64 + extra
}

impl BirthDeath {
    pub fn new(spec: BirthDeathSpec) -> Result<Self> {
        if spec.initial == 0 {
            return Err(Error::InvalidConfig("initial population must be at least 1".into()));
        }
        if spec.times.is_empty() || spec.times[0] <= 0.0 || spec.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("observation times must be positive and strictly increasing".into()));
        }
        if spec.prior_lower.iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidConfig("rates cannot be negative".into()));
        }
        let prior = UniformBox::new(spec.prior_lower.to_vec(), spec.prior_upper.to_vec())?;
        Ok(Self { spec, prior })
    }

    pub fn spec(&self) -> &BirthDeathSpec {
        &self.spec
    }

    /// Counts at the observation times.
    pub fn path(&self, lambda: f64, mu: f64, rng: &mut SimRng) -> Vec<f64> {
        let total = lambda + mu;
        let mut z = self.spec.initial as f64;
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.spec.times.len());
        for &target in &self.spec.times {
            while z > 0.0 && total > 0.0 {
                if z > self.spec.exact_cap {
                    z = sample_transition(z, target - t, lambda, mu, rng);
                    break;
                }
                let u: f64 = rng.random();
                let wait = -(1.0 - u).ln() / (total * z);
                if t + wait > target {
                    break;
                }
                t += wait;
                if rng.random::<f64>() * total < lambda {
                    z += 1.0;
                } else {
                    z -= 1.0;
                }
            }
            t = target;
            out.push(z);
        }
        out
    }
}

impl Model for BirthDeath {
    fn name(&self) -> &str {
        "birth_death"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into(), "mu".into()]
    }

    fn stat_names(&self) -> Vec<String> {
        (1..=self.spec.times.len()).map(|i| format!("z{i}")).collect()
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
        if theta.iter().any(|r| !(*r >= 0.0)) {
            return Err(SimulationFailure(format!("rates must be nonnegative, got {theta:?}")));
        }
        Ok(self.path(theta[0], theta[1], rng))
    }
}
