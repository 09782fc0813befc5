//! Experiment configuration files.
//!
//! A config is a TOML document with a top-level `seed` and `output`, and
//! `[model]`, `[observed]` and `[method]` tables. See the repository README
//! for the full schema.

use std::path::{Path, PathBuf};

use abcsmc_core::baselines::abc_smc::DEFAULT_LEVEL_BUDGET;
use abcsmc_core::baselines::{DistanceSpec, SmcKernel};
use abcsmc_core::models::{BirthDeathData, ModelConfig};
use abcsmc_core::{DrfConfig, PerturbationKernel, RfConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    pub observed: ObservedConfig,
    pub method: MethodConfig,
}

/// Exactly one source of observed statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservedConfig {
    /// Inline statistic values.
    pub values: Option<Vec<f64>>,
    /// CSV file: a header and one row of statistics, or `time,count` rows
    /// for the birth-death model.
    pub path: Option<PathBuf>,
    /// The birth-death dataset shipped with the library.
    pub bundled: bool,
    pub generate: Option<GenerateConfig>,
}

/// Simulate the observation from known parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub theta: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// A value given once for every iteration or once per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerIteration<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Clone> PerIteration<T> {
    pub fn expand(&self, iterations: usize) -> Result<Vec<T>, String> {
        match self {
            Self::All(v) => Ok(vec![v.clone(); iterations]),
            Self::Each(v) if v.len() == iterations => Ok(v.clone()),
            Self::Each(v) => Err(format!("{} values given for {iterations} iterations", v.len())),
        }
    }
}

fn default_kernel() -> PerturbationKernel {
    PerturbationKernel::Identity
}

fn default_keep() -> usize {
    500
}

fn default_level_budget() -> u64 {
    DEFAULT_LEVEL_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    Rejection {
        simulations: usize,
        /// Keep the closest `keep` simulations ...
        #[serde(default = "default_keep")]
        keep: usize,
        /// ... or every simulation strictly within `epsilon`.
        epsilon: Option<f64>,
        #[serde(default)]
        distance: DistanceSpec,
    },
    Mcmc {
        n_steps: usize,
        burn_in: usize,
        thin: usize,
        proposal: PerturbationKernel,
    },
    AbcMcmc {
        n_steps: usize,
        burn_in: usize,
        thin: usize,
        epsilon: f64,
        proposal: PerturbationKernel,
        #[serde(default)]
        distance: DistanceSpec,
    },
    AbcSmc {
        epsilons: Vec<f64>,
        particles: usize,
        kernel: SmcKernel,
        #[serde(default)]
        distance: DistanceSpec,
        #[serde(default = "default_level_budget")]
        level_budget: u64,
    },
    AbcRf {
        simulations: usize,
        #[serde(default)]
        forest: RfConfig,
    },
    AbcDrf {
        simulations: usize,
        #[serde(default)]
        forest: DrfConfig,
    },
    AbcSmcRf {
        iterations: usize,
        particles: PerIteration<usize>,
        #[serde(default = "default_kernel")]
        kernel: PerturbationKernel,
        /// Overrides `kernel`; one entry per iteration after the first.
        kernels: Option<Vec<PerturbationKernel>>,
        #[serde(default)]
        forest: RfConfig,
        convergence_threshold: Option<f64>,
    },
    AbcSmcDrf {
        iterations: usize,
        particles: PerIteration<usize>,
        #[serde(default = "default_kernel")]
        kernel: PerturbationKernel,
        kernels: Option<Vec<PerturbationKernel>>,
        #[serde(default)]
        forest: DrfConfig,
        convergence_threshold: Option<f64>,
    },
}

impl MethodConfig {
    pub const NAMES: [&'static str; 8] = [
        "rejection",
        "mcmc",
        "abc-mcmc",
        "abc-smc",
        "abc-rf",
        "abc-drf",
        "abc-smc-rf",
        "abc-smc-drf",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rejection { .. } => "rejection",
            Self::Mcmc { .. } => "mcmc",
            Self::AbcMcmc { .. } => "abc-mcmc",
            Self::AbcSmc { .. } => "abc-smc",
            Self::AbcRf { .. } => "abc-rf",
            Self::AbcDrf { .. } => "abc-drf",
            Self::AbcSmcRf { .. } => "abc-smc-rf",
            Self::AbcSmcDrf { .. } => "abc-smc-drf",
        }
    }

    pub fn is_forest(&self) -> bool {
        matches!(self, Self::AbcRf { .. } | Self::AbcDrf { .. } | Self::AbcSmcRf { .. } | Self::AbcSmcDrf { .. })
    }
}

/// Model name as written in the config.
pub fn model_name(model: &ModelConfig) -> &'static str {
    match model {
        ModelConfig::Coalescent(_) => "coalescent",
        ModelConfig::Hierarchical(_) => "hierarchical",
        ModelConfig::LotkaVolterra(_) => "lotka_volterra",
        ModelConfig::BirthDeath(_) => "birth_death",
        ModelConfig::MichaelisMenten(_) => "michaelis_menten",
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let mut msg = format!("{}: {}", origin.display(), e.message());
            if let Some(span) = e.span() {
                let line = text[..span.start].matches('\n').count() + 1;
                msg = format!("{}:{line}: {}", origin.display(), e.message());
            }
            CliError::Config(msg)
        })?;
        // Data files resolve against the config's directory; `output`
        // against the working directory.
        let base = origin.parent().unwrap_or(Path::new(""));
        if let Some(p) = cfg.observed.path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }
}

impl ObservedConfig {
    pub fn check(&self, model: &ModelConfig) -> Result<(), CliError> {
        let sources = [self.values.is_some(), self.path.is_some(), self.bundled, self.generate.is_some()];
        match sources.iter().filter(|s| **s).count() {
            1 => {}
            0 => return Err(CliError::Config("[observed] needs one of values, path, bundled or generate".into())),
            _ => return Err(CliError::Config("[observed] sets more than one of values, path, bundled and generate".into())),
        }
        if self.bundled && !matches!(model, ModelConfig::BirthDeath(_)) {
            return Err(CliError::Config("observed.bundled is only available for birth_death".into()));
        }
        if let Some(p) = &self.path {
            if !p.is_file() {
                return Err(CliError::Config(format!("observed.path {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Read an observation CSV: birth-death `time,count` rows or a header plus
/// one row of statistics.
pub fn read_observation(path: &Path, model: &ModelConfig) -> Result<Vec<f64>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or("").trim();
    if let ModelConfig::BirthDeath(spec) = model {
        if header == "time,count" {
            let data = BirthDeathData::parse(&text, spec.initial)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if data.times != spec.times {
                return Err(CliError::Config(format!(
                    "{}: observation times differ from the model's `times`",
                    path.display()
                )));
            }
            return Ok(data.stats());
        }
    }
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != 1 {
        return Err(CliError::Config(format!(
            "{}: expected a header and exactly one data row, found {} rows",
            path.display(),
            rows.len()
        )));
    }
    rows[0]
        .split(',')
        .enumerate()
        .map(|(i, cell)| {
            cell.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("{}:2: column {} is not a finite number", path.display(), i + 1)))
        })
        .collect()
}
