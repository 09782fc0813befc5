//! Iterated forest samplers.
//!
//! Each iteration simulates a fresh reference table, fits forests on it and
//! turns their weights into the next proposal. Iteration 1 draws from the
//! prior; later iterations resample the previous posterior, perturb with a
//! kernel and redraw until the prior density is positive.
//!
//! The marginal variant fits one regression forest per parameter and
//! resamples every coordinate independently from its own weighted marginal,
//! so dependence between parameters is not carried across iterations. The
//! joint variant fits a single distributional forest and resamples whole
//! vectors.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::forest::drf::{grow_drf, DrfConfig};
use crate::forest::rf::{grow_forest, rf_weights, RfConfig};
use crate::forest::variable_importance;
use crate::model::{Draw, Model, ParameterSource, PriorSource};
use crate::rng::{self, SimRng};
use crate::tables::{
    build_reference_table_counted, format_real, IndexSampler, Observation, ReferenceTable, SimulationCount,
    WeightedParticles, DEFAULT_SIMULATION_RETRIES, PARAM_PREFIX, WEIGHT_COLUMN,
};

pub const DEFAULT_PROPOSAL_RETRIES: usize = 10_000;

/// Additive perturbation `θ = θ* + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PerturbationKernel {
    /// No perturbation.
    Identity,
    /// `εⱼ ~ U(−hⱼ, hⱼ)`.
    Uniform { half_widths: Vec<f64> },
    /// `εⱼ ~ N(0, sdⱼ²)`.
    Gaussian { sds: Vec<f64> },
}

impl PerturbationKernel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let widths = match self {
            Self::Identity => return Ok(()),
            Self::Uniform { half_widths } => half_widths,
            Self::Gaussian { sds } => sds,
        };
        if widths.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: widths.len(),
            });
        }
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidConfig(format!("kernel widths must be positive, got {widths:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, center: &[f64], rng: &mut SimRng) -> Vec<f64> {
        match self {
            Self::Identity => center.to_vec(),
            Self::Uniform { half_widths } => center
                .iter()
                .zip(half_widths)
                .map(|(c, h)| c + rng.random_range(-h..*h))
                .collect(),
            Self::Gaussian { sds } => center
                .iter()
                .zip(sds)
                .map(|(c, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    c + s * z
                })
                .collect(),
        }
    }

    /// `log K(θ | center)`; the identity kernel is a point mass.
    pub fn log_density(&self, theta: &[f64], center: &[f64]) -> f64 {
        match self {
            Self::Identity => {
                if theta == center {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Uniform { half_widths } => {
                let mut lp = 0.0;
                for ((t, c), h) in theta.iter().zip(center).zip(half_widths) {
                    if (t - c).abs() > *h {
                        return f64::NEG_INFINITY;
                    }
                    lp -= (2.0 * h).ln();
                }
                lp
            }
            Self::Gaussian { sds } => theta
                .iter()
                .zip(center)
                .zip(sds)
                .map(|((t, c), s)| {
                    let z = (t - c) / s;
                    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum(),
        }
    }

    pub fn density(&self, theta: &[f64], center: &[f64]) -> f64 {
        self.log_density(theta, center).exp()
    }
}

/// A weighted posterior: one joint particle set, or one weighted marginal
/// per parameter over shared particle values.
#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Joint(WeightedParticles),
    Marginal(Vec<WeightedParticles>),
}

impl From<WeightedParticles> for Posterior {
    fn from(p: WeightedParticles) -> Self {
        Self::Joint(p)
    }
}

impl Posterior {
    pub fn dim(&self) -> usize {
        match self {
            Self::Joint(p) => p.dim(),
            Self::Marginal(m) => m.len(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Self::Joint(p) => p.param_names().to_vec(),
            Self::Marginal(m) => m.iter().map(|p| p.param_names()[0].clone()).collect(),
        }
    }

    /// Values and weights of coordinate `j`.
    pub fn marginal(&self, j: usize) -> (Vec<f64>, &[f64]) {
        match self {
            Self::Joint(p) => (p.coordinate(j), p.weights()),
            Self::Marginal(m) => (m[j].coordinate(0), m[j].weights()),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let (v, w) = self.marginal(j);
                diagnostics::weighted_mean(&v, w)
            })
            .collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let (v, w) = self.marginal(j);
                diagnostics::weighted_variance(&v, w)
            })
            .collect()
    }

    /// Effective sample size per coordinate.
    pub fn ess(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| diagnostics::effective_sample_size(self.marginal(j).1))
            .collect()
    }

    pub fn quantiles(&self, j: usize, levels: &[f64]) -> Vec<f64> {
        let (v, w) = self.marginal(j);
        diagnostics::weighted_quantiles(&v, w, levels)
    }

    /// `m` i.i.d. draws, row-major. Marginal posteriors draw each coordinate
    /// independently.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Vec<f64>> {
        let proposal = Proposal::new(self, matches!(self, Self::Marginal(_)))?;
        let mut rng = rng::stream(seed, rng::tag::RESAMPLE);
        Ok((0..m).flat_map(|_| proposal.base(&mut rng)).collect())
    }

    /// Particle values with one weight column per parameter (a single
    /// `weight` column for joint posteriors).
    pub fn to_csv(&self) -> String {
        match self {
            Self::Joint(p) => crate::tables::particles_csv(p),
            Self::Marginal(m) => {
                let names = self.param_names();
                let mut out = String::new();
                let header: Vec<String> = names
                    .iter()
                    .flat_map(|n| [format!("{PARAM_PREFIX}{n}"), format!("{WEIGHT_COLUMN}:{n}")])
                    .collect();
                out.push_str(&header.join(","));
                out.push('\n');
                for i in 0..m[0].len() {
                    let cells: Vec<String> = m
                        .iter()
                        .flat_map(|p| [format_real(p.particle(i)[0]), format_real(p.weights()[i])])
                        .collect();
                    let _ = writeln!(out, "{}", cells.join(","));
                }
                out
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Prepared resampling from a posterior.
struct Proposal<'a> {
    posterior: &'a Posterior,
    samplers: Vec<IndexSampler>,
    independent: bool,
}

impl<'a> Proposal<'a> {
    fn new(posterior: &'a Posterior, marginal_mode: bool) -> Result<Self> {
        let samplers = match posterior {
            Posterior::Joint(p) => vec![IndexSampler::new(p.weights())?],
            Posterior::Marginal(m) => {
                if !marginal_mode {
                    return Err(Error::InvalidArgument("a marginal posterior can only be resampled coordinatewise".into()));
                }
                m.iter().map(|p| IndexSampler::new(p.weights())).collect::<Result<_>>()?
            }
        };
        Ok(Self {
            posterior,
            samplers,
            independent: marginal_mode,
        })
    }

    /// θ* before perturbation.
    fn base(&self, rng: &mut SimRng) -> Vec<f64> {
        match self.posterior {
            Posterior::Joint(p) if !self.independent => p.particle(self.samplers[0].sample(rng)).to_vec(),
            Posterior::Joint(p) => (0..p.dim()).map(|j| p.particle(self.samplers[0].sample(rng))[j]).collect(),
            Posterior::Marginal(m) => m
                .iter()
                .zip(&self.samplers)
                .map(|(p, s)| p.particle(s.sample(rng))[0])
                .collect(),
        }
    }
}

/// Resample-and-perturb source for iterations after the first.
pub struct ProposalSource<'a> {
    proposal: Proposal<'a>,
    kernel: &'a PerturbationKernel,
    log_prior: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    max_retries: usize,
}

impl<'a> ProposalSource<'a> {
    pub fn new(
        posterior: &'a Posterior,
        kernel: &'a PerturbationKernel,
        log_prior: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        marginal_mode: bool,
        max_retries: usize,
    ) -> Result<Self> {
        kernel.validate(posterior.dim())?;
        Ok(Self {
            proposal: Proposal::new(posterior, marginal_mode)?,
            kernel,
            log_prior,
            max_retries,
        })
    }
}

impl ParameterSource for ProposalSource<'_> {
    fn draw(&self, rng: &mut SimRng) -> Result<Draw> {
        let mut last = Vec::new();
        for attempt in 0..self.max_retries.max(1) {
            let theta = self.kernel.sample(&self.proposal.base(rng), rng);
            if (self.log_prior)(&theta) > f64::NEG_INFINITY {
                return Ok(Draw {
                    theta,
                    rejections: attempt as u64,
                });
            }
            last = theta;
        }
        Err(Error::ProposalRetries {
            cap: self.max_retries,
            last,
        })
    }
}

/// One proposal: resample θ* (coordinatewise in marginal mode), perturb,
/// and retry both steps until the prior density is positive.
pub fn propose_particle(
    source: &Posterior,
    kernel: &PerturbationKernel,
    log_prior: &(dyn Fn(&[f64]) -> f64 + Sync),
    marginal_mode: bool,
    seed: u64,
) -> Result<Draw> {
    let src = ProposalSource::new(source, kernel, log_prior, marginal_mode, DEFAULT_PROPOSAL_RETRIES)?;
    src.draw(&mut rng::stream(seed, rng::tag::RESAMPLE))
}

/// Largest per-coordinate 1-Wasserstein distance between two posteriors.
pub fn convergence_metric(prev: &Posterior, curr: &Posterior) -> Result<f64> {
    if prev.dim() != curr.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            got: curr.dim(),
        });
    }
    Ok((0..prev.dim())
        .map(|j| {
            let (a, wa) = prev.marginal(j);
            let (b, wb) = curr.marginal(j);
            diagnostics::wasserstein1(&a, wa, &b, wb)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcSchedule<C> {
    /// Particles per iteration; its length is the iteration count.
    pub particles: Vec<usize>,
    /// Kernels for iterations 2..T: one entry reused throughout, or one each.
    pub kernels: Vec<PerturbationKernel>,
    pub forest: C,
    pub seed: u64,
    /// Prior-rejection retries per proposed particle.
    pub max_retries: usize,
    /// Simulator-failure retries per table row.
    pub simulation_retries: usize,
    /// Stop once the convergence metric falls below this.
    pub convergence_threshold: Option<f64>,
    pub keep_tables: bool,
}

impl<C> SmcSchedule<C> {
    pub fn new(iterations: usize, particles: usize, kernel: PerturbationKernel, forest: C, seed: u64) -> Self {
        Self {
            particles: vec![particles; iterations],
            kernels: vec![kernel],
            forest,
            seed,
            max_retries: DEFAULT_PROPOSAL_RETRIES,
            simulation_retries: DEFAULT_SIMULATION_RETRIES,
            convergence_threshold: None,
            keep_tables: false,
        }
    }

    pub fn iterations(&self) -> usize {
        self.particles.len()
    }

    /// Kernel used to build iteration `t` (1-based, `t ≥ 2`).
    pub fn kernel(&self, t: usize) -> &PerturbationKernel {
        if self.kernels.len() == 1 {
            &self.kernels[0]
        } else {
            &self.kernels[t - 2]
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let t = self.iterations();
        if t == 0 {
            return Err(Error::InvalidConfig("need at least one iteration".into()));
        }
        if self.particles.contains(&0) {
            return Err(Error::InvalidConfig("every iteration needs at least one particle".into()));
        }
        if t > 1 {
            if self.kernels.len() != 1 && self.kernels.len() != t - 1 {
                return Err(Error::InvalidConfig(format!(
                    "expected 1 or {} kernels for {t} iterations, got {}",
                    t - 1,
                    self.kernels.len()
                )));
            }
            for k in &self.kernels {
                k.validate(dim)?;
            }
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidConfig("max_retries must be at least 1".into()));
        }
        if let Some(eps) = self.convergence_threshold {
            if !(eps >= 0.0) {
                return Err(Error::InvalidConfig(format!("convergence threshold must be nonnegative, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Seeds an iteration derives from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IterationSeeds {
    pub table: u64,
    pub forest: u64,
}

impl IterationSeeds {
    /// Forest seed for parameter `j` in the marginal variant.
    pub fn coordinate(&self, j: usize) -> u64 {
        rng::derive(self.forest, j as u64)
    }
}

/// Seeds of iteration `t` (1-based).
pub fn iteration_seeds(seed: u64, t: usize) -> IterationSeeds {
    let base = rng::derive(rng::derive(seed, rng::tag::ITERATION), t as u64);
    IterationSeeds {
        table: rng::derive(base, rng::tag::TABLE),
        forest: rng::derive(base, rng::tag::FOREST),
    }
}

/// Summary of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub particles: usize,
    pub seeds: IterationSeeds,
    pub simulator_calls: u64,
    pub simulation_failures: u64,
    pub prior_rejections: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ess: Vec<f64>,
    /// Distance to the previous iteration's posterior.
    pub convergence: Option<f64>,
    /// Importance per statistic, one row per forest.
    pub importance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub summary: IterationSummary,
    pub posterior: Posterior,
    pub table: Option<Arc<ReferenceTable>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcTrace {
    pub iterations: Vec<IterationRecord>,
    /// Set when the convergence threshold ended the run early.
    pub truncated: bool,
    pub total: SimulationCount,
}

impl SmcTrace {
    /// Posterior of the last executed iteration.
    pub fn posterior(&self) -> &Posterior {
        &self.iterations.last().expect("a trace has at least one iteration").posterior
    }

    pub fn summaries(&self) -> Vec<&IterationSummary> {
        self.iterations.iter().map(|r| &r.summary).collect()
    }

    /// Write `iter_01.csv`, `iter_02.csv`, ... into `dir`.
    pub fn write_iterations(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for r in &self.iterations {
            r.posterior.save(dir.join(format!("iter_{:02}.csv", r.summary.iteration)))?;
        }
        Ok(())
    }
}

enum Variant<'a> {
    Marginal(&'a RfConfig),
    Joint(&'a DrfConfig),
}

fn fit(variant: &Variant, table: &Arc<ReferenceTable>, obs: &Observation, seeds: IterationSeeds) -> Result<(Posterior, Vec<Vec<f64>>)> {
    match variant {
        Variant::Marginal(cfg) => {
            let mut marginals = Vec::new();
            let mut importance = Vec::new();
            for j in 0..table.n_params() {
                let cfg = RfConfig {
                    seed: seeds.coordinate(j),
                    ..**cfg
                };
                let forest = grow_forest(table.clone(), j, &cfg)?;
                marginals.push(rf_weights(&forest, obs)?);
                importance.push(variable_importance(&forest));
            }
            Ok((Posterior::Marginal(marginals), importance))
        }
        Variant::Joint(cfg) => {
            let cfg = DrfConfig {
                seed: seeds.forest,
                ..**cfg
            };
            let forest = grow_drf(table.clone(), &cfg)?;
            Ok((Posterior::Joint(forest.weighted_particles(obs)?), vec![variable_importance(&forest)]))
        }
    }
}

fn run<C>(model: &dyn Model, schedule: &SmcSchedule<C>, obs: &Observation, variant: Variant) -> Result<SmcTrace> {
    schedule.validate(model.n_params())?;
    obs.check_against(model.n_stats())?;
    let marginal_mode = matches!(variant, Variant::Marginal(_));
    let log_prior = |theta: &[f64]| model.log_prior(theta);
    let mut trace = SmcTrace {
        iterations: Vec::new(),
        truncated: false,
        total: SimulationCount::default(),
    };
    for t in 1..=schedule.iterations() {
        let seeds = iteration_seeds(schedule.seed, t);
        let n = schedule.particles[t - 1];
        let (table, count) = match trace.iterations.last() {
            None => build_reference_table_counted(model, &PriorSource(model), n, seeds.table, schedule.simulation_retries)?,
            Some(prev) => {
                let source = ProposalSource::new(
                    &prev.posterior,
                    schedule.kernel(t),
                    &log_prior,
                    marginal_mode,
                    schedule.max_retries,
                )?;
                build_reference_table_counted(model, &source, n, seeds.table, schedule.simulation_retries)?
            }
        };
        let table = Arc::new(table);
        let (posterior, importance) = fit(&variant, &table, obs, seeds)?;
        let convergence = match trace.iterations.last() {
            Some(prev) => Some(convergence_metric(&prev.posterior, &posterior)?),
            None => None,
        };
        trace.total += count;
        trace.iterations.push(IterationRecord {
            summary: IterationSummary {
                iteration: t,
                particles: n,
                seeds,
                simulator_calls: count.simulator_calls,
                simulation_failures: count.failures,
                prior_rejections: count.prior_rejections,
                mean: posterior.mean(),
                variance: posterior.variance(),
                ess: posterior.ess(),
                convergence,
                importance,
            },
            posterior,
            table: schedule.keep_tables.then_some(table),
        });
        if let (Some(d), Some(eps)) = (convergence, schedule.convergence_threshold) {
            if d < eps && t < schedule.iterations() {
                trace.truncated = true;
                break;
            }
        }
    }
    Ok(trace)
}

/// Marginal variant: one regression forest per parameter each iteration.
pub fn run_abc_smc_rf(model: &dyn Model, schedule: &SmcSchedule<RfConfig>, obs: &Observation) -> Result<SmcTrace> {
    run(model, schedule, obs, Variant::Marginal(&schedule.forest))
}

/// Joint variant: one distributional forest each iteration.
pub fn run_abc_smc_drf(model: &dyn Model, schedule: &SmcSchedule<DrfConfig>, obs: &Observation) -> Result<SmcTrace> {
    run(model, schedule, obs, Variant::Joint(&schedule.forest))
}
