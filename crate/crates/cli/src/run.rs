//! Run one experiment from a config and write its artifacts.
//!
//! Output layout:
//! - `posterior.csv`: weighted particles
//! - `manifest.json`: method, seeds, simulator calls, wall time, status
//! - `density.csv`: kernel density grid per parameter
//! - `importance.csv`: forest methods only
//! - `trace/iter_XX.csv`, `trace/summary.json`: iterated forest methods only
//! - `qq.csv`: when the model has an exact posterior for the observation

use std::path::{Path, PathBuf};
use std::time::Instant;

use abcsmc_core::baselines::{
    abc_mcmc, abc_rejection, abc_smc, metropolis_hastings, AbcSmcConfig, Keep, MhConfig, MhTarget,
};
use abcsmc_core::models::{Hierarchical, ModelConfig};
use abcsmc_core::tables::DEFAULT_SIMULATION_RETRIES;
use abcsmc_core::{
    build_reference_table_counted, grow_drf, grow_forest, iteration_seeds, rf_weights, rng, run_abc_smc_drf,
    run_abc_smc_rf, variable_importance, Model, Observation, Posterior, PriorSource, SimulationCount, SmcSchedule,
    SmcTrace,
};
use serde_json::{json, Value};

use crate::config::{model_name, read_observation, ExperimentConfig, MethodConfig};
use crate::error::{invalid, CliError};
use crate::oracle::Exact;
use crate::plots::{coordinate_particles, density_csv, qq_csv, qq_data};

/// Oracle draws per coordinate for quantile-quantile data.
pub const ORACLE_DRAWS: usize = 100_000;

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated experiment, ready to execute.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: Box<dyn Model>,
    pub observation: Observation,
    pub exact: Option<Exact>,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub posterior: Posterior,
    pub simulator_calls: u64,
    pub files: Vec<String>,
}

/// Parse and validate everything that can be checked without simulating
/// a reference table.
pub fn prepare(config: ExperimentConfig, opts: &RunOptions) -> Result<Prepared, CliError> {
    let seed = opts.seed.unwrap_or(config.seed);
    let out = opts
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: set `output` or pass --out".into()))?;
    let model = config.model.build().map_err(invalid)?;
    config.observed.check(&config.model)?;
    let (values, raw) = observe(&config, model.as_ref())?;
    let observation = Observation(values);
    observation.check_against(model.n_stats()).map_err(invalid)?;
    let exact = Exact::for_observation(&config.model, observation.values(), raw.as_deref());
    validate_method(&config.method, model.as_ref(), exact.is_some())?;
    Ok(Prepared {
        config,
        model,
        observation,
        exact,
        seed,
        out,
    })
}

/// The observed statistics and, for generated hierarchical data, the raw
/// sample behind them.
fn observe(config: &ExperimentConfig, model: &dyn Model) -> Result<(Vec<f64>, Option<Vec<f64>>), CliError> {
    let obs = &config.observed;
    if let Some(v) = &obs.values {
        return Ok((v.clone(), None));
    }
    if let Some(p) = &obs.path {
        return Ok((read_observation(p, &config.model)?, None));
    }
    if obs.bundled {
        return Ok((abcsmc_core::models::BirthDeathData::bundled().stats(), None));
    }
    let generate = obs.generate.as_ref().expect("checked source");
    if generate.theta.len() != model.n_params() {
        return Err(CliError::Config(format!(
            "observed.generate.theta has {} values, the model has {} parameters",
            generate.theta.len(),
            model.n_params()
        )));
    }
    if !model.log_prior(&generate.theta).is_finite() {
        return Err(CliError::Config(format!(
            "observed.generate.theta {:?} lies outside the prior support",
            generate.theta
        )));
    }
    let mut r = rng::stream(generate.seed, 0);
    if let ModelConfig::Hierarchical(spec) = &config.model {
        let h = Hierarchical::new(spec.clone()).map_err(invalid)?;
        let y = h.sample_data(&generate.theta, &mut r);
        return Ok((h.summaries(&y, &mut r), Some(y)));
    }
    let stats = model
        .simulate(&generate.theta, &mut r)
        .map_err(|f| CliError::Runtime(format!("simulating the observation failed: {}", f.0)))?;
    Ok((stats, None))
}

fn schedule<C>(
    iterations: usize,
    particles: &crate::config::PerIteration<usize>,
    kernel: &abcsmc_core::PerturbationKernel,
    kernels: &Option<Vec<abcsmc_core::PerturbationKernel>>,
    forest: C,
    convergence_threshold: Option<f64>,
    seed: u64,
) -> Result<SmcSchedule<C>, CliError> {
    let mut s = SmcSchedule::new(iterations, 1, kernel.clone(), forest, seed);
    s.particles = particles.expand(iterations).map_err(|e| CliError::Config(format!("method.particles: {e}")))?;
    if let Some(k) = kernels {
        s.kernels = k.clone();
    }
    s.convergence_threshold = convergence_threshold;
    Ok(s)
}

fn validate_method(method: &MethodConfig, model: &dyn Model, has_likelihood: bool) -> Result<(), CliError> {
    let (dim, k) = (model.n_params(), model.n_stats());
    let positive = |what: &str, v: usize| {
        if v == 0 {
            Err(CliError::Config(format!("method.{what} must be at least 1")))
        } else {
            Ok(())
        }
    };
    match method {
        MethodConfig::Rejection {
            simulations,
            keep,
            epsilon,
            distance,
        } => {
            positive("simulations", *simulations)?;
            distance.validate(k).map_err(invalid)?;
            match epsilon {
                Some(e) if !(*e > 0.0) => return Err(CliError::Config("method.epsilon must be positive".into())),
                None if *keep == 0 || keep > simulations => {
                    return Err(CliError::Config(format!("method.keep must lie in 1..={simulations}")))
                }
                _ => {}
            }
        }
        MethodConfig::Mcmc {
            n_steps,
            burn_in,
            thin,
            proposal,
        } => {
            if !has_likelihood {
                return Err(CliError::Config(format!(
                    "mcmc needs an exact likelihood, which {} does not have for this observation \
                     (available: coalescent, birth_death, hierarchical with generated data)",
                    model.name()
                )));
            }
            mh_config(*n_steps, *burn_in, *thin, 0).validate().map_err(invalid)?;
            proposal.validate(dim).map_err(invalid)?;
        }
        MethodConfig::AbcMcmc {
            n_steps,
            burn_in,
            thin,
            epsilon,
            proposal,
            distance,
        } => {
            mh_config(*n_steps, *burn_in, *thin, 0).validate().map_err(invalid)?;
            proposal.validate(dim).map_err(invalid)?;
            distance.validate(k).map_err(invalid)?;
            if !(*epsilon > 0.0) {
                return Err(CliError::Config("method.epsilon must be positive".into()));
            }
        }
        MethodConfig::AbcSmc { .. } => abc_smc_config(method, 0).validate(dim, k).map_err(invalid)?,
        MethodConfig::AbcRf { simulations, forest } => {
            forest.validate(k).map_err(invalid)?;
            if *simulations < forest.min_node {
                return Err(CliError::Config(format!(
                    "method.simulations must be at least forest.min_node = {}",
                    forest.min_node
                )));
            }
        }
        MethodConfig::AbcDrf { simulations, forest } => forest.validate(k, *simulations).map_err(invalid)?,
        MethodConfig::AbcSmcRf {
            iterations,
            particles,
            kernel,
            kernels,
            forest,
            convergence_threshold,
        } => {
            let s = schedule(*iterations, particles, kernel, kernels, *forest, *convergence_threshold, 0)?;
            s.validate(dim).map_err(invalid)?;
            forest.validate(k).map_err(invalid)?;
            if s.particles.iter().any(|&n| n < forest.min_node) {
                return Err(CliError::Config(format!(
                    "every iteration needs at least forest.min_node = {} particles",
                    forest.min_node
                )));
            }
        }
        MethodConfig::AbcSmcDrf {
            iterations,
            particles,
            kernel,
            kernels,
            forest,
            convergence_threshold,
        } => {
            let s = schedule(*iterations, particles, kernel, kernels, *forest, *convergence_threshold, 0)?;
            s.validate(dim).map_err(invalid)?;
            for &n in &s.particles {
                forest.validate(k, n).map_err(invalid)?;
            }
        }
    }
    Ok(())
}

fn mh_config(n_steps: usize, burn_in: usize, thin: usize, seed: u64) -> MhConfig {
    MhConfig {
        n_steps,
        burn_in,
        thin,
        seed,
    }
}

fn abc_smc_config(method: &MethodConfig, seed: u64) -> AbcSmcConfig {
    match method {
        MethodConfig::AbcSmc {
            epsilons,
            particles,
            kernel,
            distance,
            level_budget,
        } => AbcSmcConfig {
            epsilons: epsilons.clone(),
            n_particles: *particles,
            kernel: kernel.clone(),
            distance: distance.clone(),
            level_budget: *level_budget,
            max_retries: abcsmc_core::smc::DEFAULT_PROPOSAL_RETRIES,
            seed,
        },
        _ => unreachable!("abc-smc settings"),
    }
}

/// Everything a method produces besides the files common to all methods.
struct Outcome {
    posterior: Posterior,
    count: SimulationCount,
    /// Column names and one importance vector per column.
    importance: Option<(Vec<String>, Vec<Vec<f64>>)>,
    trace: Option<SmcTrace>,
    details: Value,
}

fn execute_method(p: &Prepared) -> Result<Outcome, CliError> {
    let model = p.model.as_ref();
    let obs = &p.observation;
    let seed = p.seed;
    let names = model.param_names();
    let outcome = |posterior: Posterior, count: SimulationCount| Outcome {
        posterior,
        count,
        importance: None,
        trace: None,
        details: json!({}),
    };
    Ok(match &p.config.method {
        MethodConfig::Rejection {
            simulations,
            keep,
            epsilon,
            distance,
        } => {
            let keep = epsilon.map_or(Keep::Closest(*keep), Keep::Within);
            let r = abc_rejection(model, *simulations, distance, keep, obs, seed)?;
            let mut o = outcome(Posterior::Joint(r.particles.clone()), r.simulations);
            o.details = json!({ "retained": r.retained.len(), "threshold": r.threshold() });
            o
        }
        MethodConfig::Mcmc {
            n_steps,
            burn_in,
            thin,
            proposal,
        } => {
            let exact = p.exact.as_ref().expect("validated likelihood");
            let log_likelihood = |t: &[f64]| exact.log_likelihood(t);
            let log_prior = |t: &[f64]| model.log_prior(t);
            let initial = |r: &mut abcsmc_core::SimRng| model.sample_prior(r);
            let target = MhTarget {
                log_likelihood: &log_likelihood,
                log_prior: &log_prior,
                initial: &initial,
            };
            let chain = metropolis_hastings(&target, proposal, &mh_config(*n_steps, *burn_in, *thin, seed))?;
            let mut o = outcome(Posterior::Joint(chain.to_particles(names)?), SimulationCount::default());
            o.details = json!({
                "proposed": chain.proposed,
                "accepted": chain.accepted,
                "acceptance_rate": chain.acceptance_rate(),
            });
            o
        }
        MethodConfig::AbcMcmc {
            n_steps,
            burn_in,
            thin,
            epsilon,
            proposal,
            distance,
        } => {
            let chain = abc_mcmc(model, proposal, distance, *epsilon, obs, &mh_config(*n_steps, *burn_in, *thin, seed))?;
            let count = SimulationCount {
                simulator_calls: chain.simulations,
                ..Default::default()
            };
            let mut o = outcome(Posterior::Joint(chain.to_particles(names)?), count);
            o.details = json!({
                "proposed": chain.proposed,
                "accepted": chain.accepted,
                "acceptance_rate": chain.acceptance_rate(),
            });
            o
        }
        MethodConfig::AbcSmc { .. } => {
            let r = abc_smc(model, obs, &abc_smc_config(&p.config.method, seed))?;
            let count = SimulationCount {
                simulator_calls: r.total_simulations(),
                ..Default::default()
            };
            let levels = serde_json::to_value(&r.levels)?;
            let mut o = outcome(Posterior::Joint(r.particles().clone()), count);
            o.details = json!({ "levels": levels });
            o
        }
        MethodConfig::AbcRf { simulations, forest } => {
            let seeds = iteration_seeds(seed, 1);
            let (table, count) = build_reference_table_counted(
                model,
                &PriorSource(model),
                *simulations,
                seeds.table,
                DEFAULT_SIMULATION_RETRIES,
            )?;
            let table = std::sync::Arc::new(table);
            let mut marginals = Vec::new();
            let mut importance = Vec::new();
            for j in 0..model.n_params() {
                let cfg = abcsmc_core::RfConfig {
                    seed: seeds.coordinate(j),
                    ..*forest
                };
                let f = grow_forest(table.clone(), j, &cfg)?;
                marginals.push(rf_weights(&f, obs)?);
                importance.push(variable_importance(&f));
            }
            let mut o = outcome(Posterior::Marginal(marginals), count);
            o.importance = Some((names, importance));
            o.details = json!({ "table_seed": seeds.table, "forest_seed": seeds.forest });
            o
        }
        MethodConfig::AbcDrf { simulations, forest } => {
            let seeds = iteration_seeds(seed, 1);
            let (table, count) = build_reference_table_counted(
                model,
                &PriorSource(model),
                *simulations,
                seeds.table,
                DEFAULT_SIMULATION_RETRIES,
            )?;
            let cfg = abcsmc_core::DrfConfig {
                seed: seeds.forest,
                ..*forest
            };
            let f = grow_drf(table, &cfg)?;
            let mut o = outcome(Posterior::Joint(f.weighted_particles(obs)?), count);
            o.importance = Some((vec!["importance".into()], vec![variable_importance(&f)]));
            o.details = json!({ "table_seed": seeds.table, "forest_seed": seeds.forest });
            o
        }
        MethodConfig::AbcSmcRf {
            iterations,
            particles,
            kernel,
            kernels,
            forest,
            convergence_threshold,
        } => {
            let s = schedule(*iterations, particles, kernel, kernels, *forest, *convergence_threshold, seed)?;
            let trace = run_abc_smc_rf(model, &s, obs)?;
            smc_outcome(trace, names)
        }
        MethodConfig::AbcSmcDrf {
            iterations,
            particles,
            kernel,
            kernels,
            forest,
            convergence_threshold,
        } => {
            let s = schedule(*iterations, particles, kernel, kernels, *forest, *convergence_threshold, seed)?;
            let trace = run_abc_smc_drf(model, &s, obs)?;
            smc_outcome(trace, vec!["importance".into()])
        }
    })
}

fn smc_outcome(trace: SmcTrace, columns: Vec<String>) -> Outcome {
    let last = &trace.iterations.last().expect("a trace has at least one iteration").summary;
    Outcome {
        posterior: trace.posterior().clone(),
        count: trace.total,
        importance: Some((columns, last.importance.clone())),
        details: json!({ "iterations_run": trace.iterations.len(), "stopped_early": trace.truncated }),
        trace: Some(trace),
    }
}

fn importance_csv(stat_names: &[String], columns: &[String], values: &[Vec<f64>]) -> String {
    let mut out = format!("statistic,{}\n", columns.join(","));
    for (k, name) in stat_names.iter().enumerate() {
        let cells: Vec<String> = values.iter().map(|v| abcsmc_core::tables::format_real(v[k])).collect();
        out.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<(), CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, contents)?;
    files.push(name.to_string());
    Ok(())
}

fn manifest(p: &Prepared, status: &str, seconds: f64) -> Value {
    json!({
        "status": status,
        "model": model_name(&p.config.model),
        "method": p.config.method.name(),
        "seed": p.seed,
        "parameters": p.model.param_names(),
        "observation": p.observation.values(),
        "wall_time_seconds": seconds,
        "config": serde_json::to_value(&p.config).unwrap_or(Value::Null),
    })
}

/// Run a prepared experiment. A failure after the output directory exists
/// leaves a manifest with `"status": "failed"`.
pub fn execute(p: &Prepared) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let result = execute_method(p).and_then(|o| {
        let qq = match &p.exact {
            Some(exact) => {
                let draws = exact.sample(ORACLE_DRAWS, rng::derive(p.seed, rng::tag::NOISE))?;
                let rows: Vec<_> = p
                    .model
                    .param_names()
                    .into_iter()
                    .enumerate()
                    .map(|(j, name)| {
                        let (particles, column) = coordinate_particles(&o.posterior, j);
                        (name, qq_data(particles, &draws[j], column))
                    })
                    .collect();
                Some(qq_csv(&rows))
            }
            None => None,
        };
        Ok((o, qq))
    });
    std::fs::create_dir_all(&p.out)?;
    let mut files = Vec::new();
    let (o, qq) = match result {
        Ok(r) => r,
        Err(e) => {
            let mut m = manifest(p, "failed", start.elapsed().as_secs_f64());
            m["error"] = json!(e.to_string());
            write(&p.out, "manifest.json", &serde_json::to_string_pretty(&m)?, &mut files)?;
            return Err(e);
        }
    };
    write(&p.out, "posterior.csv", &o.posterior.to_csv(), &mut files)?;
    write(&p.out, "density.csv", &density_csv(&o.posterior), &mut files)?;
    if let Some((columns, values)) = &o.importance {
        write(&p.out, "importance.csv", &importance_csv(&p.model.stat_names(), columns, values), &mut files)?;
    }
    if let Some(qq) = &qq {
        write(&p.out, "qq.csv", qq, &mut files)?;
    }
    if let Some(trace) = &o.trace {
        for r in &trace.iterations {
            let name = format!("trace/iter_{:02}.csv", r.summary.iteration);
            write(&p.out, &name, &r.posterior.to_csv(), &mut files)?;
        }
        let summaries = serde_json::to_string_pretty(&trace.summaries())?;
        write(&p.out, "trace/summary.json", &summaries, &mut files)?;
    }
    let mut m = manifest(p, "ok", start.elapsed().as_secs_f64());
    m["simulator_calls"] = json!(o.count.simulator_calls);
    m["simulation_failures"] = json!(o.count.failures);
    m["prior_rejections"] = json!(o.count.prior_rejections);
    m["posterior_mean"] = json!(o.posterior.mean());
    m["posterior_variance"] = json!(o.posterior.variance());
    m["details"] = o.details;
    files.push("manifest.json".into());
    m["files"] = json!(files);
    files.pop();
    write(&p.out, "manifest.json", &serde_json::to_string_pretty(&m)?, &mut files)?;
    Ok(RunSummary {
        out: p.out.clone(),
        simulator_calls: o.count.simulator_calls,
        posterior: o.posterior,
        files,
    })
}

/// Load, validate and run a config file.
pub fn run_experiment(config: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let prepared = prepare(cfg, opts)?;
    execute(&prepared)
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
