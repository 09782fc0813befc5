//! Reference tables, weighted particle sets and their CSV persistence.
//!
//! A [`ReferenceTable`] pairs `N` parameter vectors with the summary
//! statistics simulated from them and is the training set of every forest.
//! [`WeightedParticles`] is the posterior representation every sampler
//! returns.
//!
//! On disk both use a headered CSV: parameter columns come first with a
//! `param:` prefix, statistic columns follow with a `stat:` prefix, and
//! weighted particle files end in a single `weight` column. Reals are written
//! with 17 significant digits so a save/load cycle is bit-exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, ParameterSource};
use crate::rng::{self, SimRng};

pub const PARAM_PREFIX: &str = "param:";
pub const STAT_PREFIX: &str = "stat:";
pub const WEIGHT_COLUMN: &str = "weight";

/// Simulator failures tolerated per row before table construction aborts.
pub const DEFAULT_SIMULATION_RETRIES: usize = 100;

fn check_labels(labels: &[String], block: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for label in labels {
        if label.is_empty() || label.contains(',') || label.contains('\n') {
            return Err(Error::InvalidTable(format!("bad {block} label {label:?}")));
        }
        if !seen.insert(label.as_str()) {
            return Err(Error::InvalidTable(format!("duplicate {block} label {label:?}")));
        }
    }
    Ok(())
}

/// `N` rows of (parameter vector, statistic vector) with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    params: Vec<f64>,
    stats: Vec<f64>,
    param_names: Vec<String>,
    stat_names: Vec<String>,
    n_rows: usize,
}

impl ReferenceTable {
    /// Build from row-major parameter (`N×P`) and statistic (`N×K`) blocks.
    pub fn new(
        params: Vec<f64>,
        stats: Vec<f64>,
        param_names: Vec<String>,
        stat_names: Vec<String>,
    ) -> Result<Self> {
        let p = param_names.len();
        let k = stat_names.len();
        if p == 0 || k == 0 {
            return Err(Error::InvalidTable("need at least one parameter and one statistic column".into()));
        }
        check_labels(&param_names, "parameter")?;
        check_labels(&stat_names, "statistic")?;
        if params.len() % p != 0 || stats.len() % k != 0 {
            return Err(Error::InvalidTable("block sizes are not multiples of the column counts".into()));
        }
        let n_rows = params.len() / p;
        if stats.len() / k != n_rows {
            return Err(Error::InvalidTable(format!(
                "parameter block has {n_rows} rows, statistic block has {}",
                stats.len() / k
            )));
        }
        if n_rows == 0 {
            return Err(Error::InvalidTable("a reference table needs at least one row".into()));
        }
        if let Some(pos) = params.iter().chain(&stats).position(|x| !x.is_finite()) {
            return Err(Error::InvalidTable(format!("non-finite entry at flat position {pos}")));
        }
        Ok(Self {
            params,
            stats,
            param_names,
            stat_names,
            n_rows,
        })
    }

    /// Build from per-row vectors.
    pub fn from_rows(
        rows: &[(Vec<f64>, Vec<f64>)],
        param_names: Vec<String>,
        stat_names: Vec<String>,
    ) -> Result<Self> {
        let p = param_names.len();
        let k = stat_names.len();
        let mut params = Vec::with_capacity(rows.len() * p);
        let mut stats = Vec::with_capacity(rows.len() * k);
        for (i, (theta, s)) in rows.iter().enumerate() {
            if theta.len() != p || s.len() != k {
                return Err(Error::InvalidTable(format!(
                    "row {i} has {} parameters and {} statistics, expected {p} and {k}",
                    theta.len(),
                    s.len()
                )));
            }
            params.extend_from_slice(theta);
            stats.extend_from_slice(s);
        }
        Self::new(params, stats, param_names, stat_names)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_stats(&self) -> usize {
        self.stat_names.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn stat_names(&self) -> &[String] {
        &self.stat_names
    }

    pub fn param_row(&self, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.params[i * p..(i + 1) * p]
    }

    pub fn stat_row(&self, i: usize) -> &[f64] {
        let k = self.n_stats();
        &self.stats[i * k..(i + 1) * k]
    }

    pub fn param(&self, i: usize, j: usize) -> f64 {
        self.params[i * self.n_params() + j]
    }

    pub fn stat(&self, i: usize, k: usize) -> f64 {
        self.stats[i * self.n_stats() + k]
    }

    /// Row-major `N×P` parameter block.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Row-major `N×K` statistic block.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn param_column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.param(i, j)).collect()
    }

    pub fn stat_column(&self, k: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.stat(i, k)).collect()
    }

    /// Table with only parameter column `j` and all statistics.
    pub fn select_param(&self, j: usize) -> ReferenceTable {
        ReferenceTable {
            params: self.param_column(j),
            stats: self.stats.clone(),
            param_names: vec![self.param_names[j].clone()],
            stat_names: self.stat_names.clone(),
            n_rows: self.n_rows,
        }
    }

    /// Table restricted to the given statistic columns.
    pub fn select_stats(&self, columns: &[usize]) -> Result<ReferenceTable> {
        let mut stats = Vec::with_capacity(self.n_rows * columns.len());
        for i in 0..self.n_rows {
            stats.extend(columns.iter().map(|&k| self.stat(i, k)));
        }
        ReferenceTable::new(
            self.params.clone(),
            stats,
            self.param_names.clone(),
            columns.iter().map(|&k| self.stat_names[k].clone()).collect(),
        )
    }

    /// The table's parameters as equally weighted particles.
    pub fn uniform_particles(&self) -> WeightedParticles {
        WeightedParticles::uniform(self.params.clone(), self.param_names.clone())
            .expect("a valid table has at least one row")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_table(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_table(path)
    }
}

/// Observed summary statistics, aligned with a table's statistic columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn new(stats: Vec<f64>) -> Self {
        Self(stats)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_against(&self, n_stats: usize) -> Result<()> {
        if self.0.len() != n_stats {
            return Err(Error::DimensionMismatch {
                expected: n_stats,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    /// Keep only the given statistic columns.
    pub fn select(&self, columns: &[usize]) -> Observation {
        Observation(columns.iter().map(|&k| self.0[k]).collect())
    }
}

/// Parameter vectors with normalized nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticles {
    params: Vec<f64>,
    weights: Vec<f64>,
    param_names: Vec<String>,
}

impl WeightedParticles {
    /// Particles from a row-major `M×P` block and unnormalized weights.
    ///
    /// Weights must be finite and nonnegative with a positive sum; they are
    /// rescaled to sum to one.
    pub fn new(params: Vec<f64>, weights: Vec<f64>, param_names: Vec<String>) -> Result<Self> {
        let p = param_names.len();
        if p == 0 {
            return Err(Error::InvalidWeights("particles need at least one parameter".into()));
        }
        if weights.is_empty() || params.len() != weights.len() * p {
            return Err(Error::InvalidWeights(format!(
                "{} weights for a parameter block of {} values in {p} columns",
                weights.len(),
                params.len()
            )));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidWeights("non-finite particle coordinate".into()));
        }
        let weights = normalize_weights(&weights)?;
        Ok(Self {
            params,
            weights,
            param_names,
        })
    }

    pub fn uniform(params: Vec<f64>, param_names: Vec<String>) -> Result<Self> {
        let p = param_names.len().max(1);
        let m = params.len() / p;
        Self::new(params, vec![1.0; m], param_names)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.params[i * p..(i + 1) * p]
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.particle(i)[j]).collect()
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| crate::diagnostics::weighted_mean(&self.coordinate(j), &self.weights))
            .collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| crate::diagnostics::weighted_variance(&self.coordinate(j), &self.weights))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_particles(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_particles(path)
    }
}

/// Rescale nonnegative weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidWeights("all weights are zero".into()));
    }
    // Already normalized up to rounding: keep the bits.
    if (total - 1.0).abs() <= 1e-12 {
        return Ok(weights.to_vec());
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Cumulative distribution over particle indices for repeated multinomial draws.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    cumulative: Vec<f64>,
}

impl IndexSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let weights = normalize_weights(weights)?;
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { cumulative })
    }

    pub fn sample(&self, rng: &mut SimRng) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        // First entry whose cumulative weight exceeds u; zero-weight entries
        // never qualify because they repeat their predecessor's value.
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// Draw `m` particle indices i.i.d. multinomially.
pub fn weighted_resample_indices(weights: &[f64], m: usize, seed: u64) -> Result<Vec<usize>> {
    let sampler = IndexSampler::new(weights)?;
    let mut rng = rng::stream(seed, rng::tag::RESAMPLE);
    Ok((0..m).map(|_| sampler.sample(&mut rng)).collect())
}

/// Draw `m` rows i.i.d. from the particles with their weights; returns a
/// row-major `m×P` block.
pub fn weighted_resample(particles: &WeightedParticles, m: usize, seed: u64) -> Result<Vec<f64>> {
    let idx = weighted_resample_indices(particles.weights(), m, seed)?;
    Ok(idx.into_iter().flat_map(|i| particles.particle(i).to_vec()).collect())
}

/// Simulator bookkeeping for one table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationCount {
    /// Every call into the simulator, failed ones included.
    pub simulator_calls: u64,
    pub failures: u64,
    /// Parameter draws discarded by the source for zero prior density.
    pub prior_rejections: u64,
}

impl std::ops::AddAssign for SimulationCount {
    fn add_assign(&mut self, rhs: Self) {
        self.simulator_calls += rhs.simulator_calls;
        self.failures += rhs.failures;
        self.prior_rejections += rhs.prior_rejections;
    }
}

fn simulate_row(
    model: &dyn Model,
    source: &dyn ParameterSource,
    row: usize,
    seed: u64,
    max_retries: usize,
) -> Result<(Vec<f64>, Vec<f64>, SimulationCount)> {
    let mut rng = rng::stream(seed, row as u64);
    let mut count = SimulationCount::default();
    let mut last_theta = Vec::new();
    let mut last_reason = String::new();
    for _ in 0..=max_retries {
        let draw = source.draw(&mut rng)?;
        count.prior_rejections += draw.rejections;
        count.simulator_calls += 1;
        match model.simulate(&draw.theta, &mut rng) {
            Ok(stats) if stats.iter().all(|x| x.is_finite()) => {
                return Ok((draw.theta, stats, count));
            }
            Ok(_) => last_reason = "non-finite statistic".into(),
            Err(failure) => last_reason = failure.0,
        }
        count.failures += 1;
        last_theta = draw.theta;
    }
    Err(Error::SimulationBudget {
        row,
        attempts: max_retries + 1,
        theta: last_theta,
        reason: last_reason,
    })
}

/// Build an `n`-row reference table, returning simulator bookkeeping too.
///
/// Row `i` draws from stream `(seed, i)`: a parameter vector from `source`,
/// then the simulator. A failed simulation redraws the parameters, up to
/// `max_retries` times per row.
pub fn build_reference_table_counted(
    model: &dyn Model,
    source: &dyn ParameterSource,
    n: usize,
    seed: u64,
    max_retries: usize,
) -> Result<(ReferenceTable, SimulationCount)> {
    if n == 0 {
        return Err(Error::InvalidArgument("reference table size must be at least 1".into()));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>, SimulationCount)> = (0..n)
        .into_par_iter()
        .map(|i| simulate_row(model, source, i, seed, max_retries))
        .collect::<Result<_>>()?;
    let p = model.n_params();
    let k = model.n_stats();
    let mut params = Vec::with_capacity(n * p);
    let mut stats = Vec::with_capacity(n * k);
    let mut count = SimulationCount::default();
    for (theta, s, c) in rows {
        if s.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: s.len() });
        }
        params.extend(theta);
        stats.extend(s);
        count += c;
    }
    let table = ReferenceTable::new(params, stats, model.param_names(), model.stat_names())?;
    Ok((table, count))
}

/// Build an `n`-row reference table with the default retry budget.
pub fn build_reference_table(
    model: &dyn Model,
    source: &dyn ParameterSource,
    n: usize,
    seed: u64,
) -> Result<ReferenceTable> {
    build_reference_table_counted(model, source, n, seed, DEFAULT_SIMULATION_RETRIES).map(|(t, _)| t)
}

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn save_table(table: &ReferenceTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = table
        .param_names
        .iter()
        .map(|n| format!("{PARAM_PREFIX}{n}"))
        .chain(table.stat_names.iter().map(|n| format!("{STAT_PREFIX}{n}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..table.n_rows {
        let cells: Vec<String> = table
            .param_row(i)
            .iter()
            .chain(table.stat_row(i))
            .map(|&x| format_real(x))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

struct ParsedCsv {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_numeric_csv(path: &Path) -> Result<ParsedCsv> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some((_, line)) => line.split(',').map(|c| c.trim().to_string()).collect(),
        None => {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: "file is empty".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::RowLength {
                path: path.to_path_buf(),
                line: lineno + 1,
                expected: header.len(),
                found: cells.len(),
            });
        }
        let mut row = Vec::with_capacity(cells.len());
        for (column, cell) in cells.iter().enumerate() {
            match cell.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => row.push(x),
                _ => {
                    return Err(Error::NonNumeric {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        column: column + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(ParsedCsv { header, rows })
}

/// Split a header into `param:` labels followed by `suffix` labels.
fn split_header(
    path: &Path,
    header: &[String],
    second_prefix: &str,
) -> Result<(Vec<String>, Vec<String>)> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut params = Vec::new();
    let mut rest = Vec::new();
    for label in header {
        if let Some(name) = label.strip_prefix(PARAM_PREFIX) {
            if !rest.is_empty() {
                return Err(malformed(format!("parameter column {label:?} after the {second_prefix} columns")));
            }
            params.push(name.to_string());
        } else if let Some(name) = label.strip_prefix(second_prefix) {
            rest.push(name.to_string());
        } else {
            return Err(malformed(format!("unrecognized column label {label:?}")));
        }
    }
    if params.is_empty() {
        return Err(malformed("no param: columns".into()));
    }
    Ok((params, rest))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<ReferenceTable> {
    let path = path.as_ref();
    let parsed = parse_numeric_csv(path)?;
    let (param_names, stat_names) = split_header(path, &parsed.header, STAT_PREFIX)?;
    if stat_names.is_empty() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "no stat: columns".into(),
        });
    }
    let p = param_names.len();
    let mut params = Vec::with_capacity(parsed.rows.len() * p);
    let mut stats = Vec::with_capacity(parsed.rows.len() * stat_names.len());
    for row in &parsed.rows {
        params.extend_from_slice(&row[..p]);
        stats.extend_from_slice(&row[p..]);
    }
    ReferenceTable::new(params, stats, param_names, stat_names)
}

/// Render weighted particles as CSV text.
pub fn particles_csv(particles: &WeightedParticles) -> String {
    let mut out = String::new();
    for name in &particles.param_names {
        let _ = write!(out, "{PARAM_PREFIX}{name},");
    }
    out.push_str(WEIGHT_COLUMN);
    out.push('\n');
    for i in 0..particles.len() {
        for &x in particles.particle(i) {
            out.push_str(&format_real(x));
            out.push(',');
        }
        out.push_str(&format_real(particles.weights[i]));
        out.push('\n');
    }
    out
}

pub fn save_particles(particles: &WeightedParticles, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, particles_csv(particles))?;
    Ok(())
}

pub fn load_particles(path: impl AsRef<Path>) -> Result<WeightedParticles> {
    let path = path.as_ref();
    let parsed = parse_numeric_csv(path)?;
    let (param_names, rest) = split_header(path, &parsed.header, WEIGHT_COLUMN)?;
    if rest != [""] {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected a single trailing {WEIGHT_COLUMN:?} column"),
        });
    }
    let p = param_names.len();
    let mut params = Vec::with_capacity(parsed.rows.len() * p);
    let mut weights = Vec::with_capacity(parsed.rows.len());
    for row in &parsed.rows {
        params.extend_from_slice(&row[..p]);
        weights.push(row[p]);
    }
    WeightedParticles::new(params, weights, param_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PriorSource, SimulationFailure};

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// Uniform(0,1) prior, statistics always `[1.0, 2.0]`.
    struct ConstantStats;

    impl Model for ConstantStats {
        fn name(&self) -> &str {
            "constant"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
        fn stat_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
            vec![rng.random()]
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            if theta[0] > 0.0 && theta[0] < 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn simulate(&self, _: &[f64], _: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
            Ok(vec![1.0, 2.0])
        }
    }

    /// Fails whenever theta > 0.5.
    struct HalfFailing;

    impl Model for HalfFailing {
        fn name(&self) -> &str {
            "half"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
        fn stat_names(&self) -> Vec<String> {
            vec!["s".into()]
        }
        fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
            vec![rng.random()]
        }
        fn log_prior(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn simulate(&self, theta: &[f64], _: &mut SimRng) -> std::result::Result<Vec<f64>, SimulationFailure> {
            if theta[0] > 0.5 {
                Err(SimulationFailure("too large".into()))
            } else {
                Ok(vec![theta[0]])
            }
        }
    }

    #[test]
    fn constant_statistic_model_gives_identical_stat_rows() {
        let table = build_reference_table(&ConstantStats, &PriorSource(&ConstantStats), 3, 7).unwrap();
        assert_eq!(table.n_rows(), 3);
        for i in 0..3 {
            assert_eq!(table.stat_row(i), &[1.0, 2.0]);
        }
        let thetas: HashSet<u64> = (0..3).map(|i| table.param(i, 0).to_bits()).collect();
        assert_eq!(thetas.len(), 3);
    }

    #[test]
    fn table_construction_is_deterministic() {
        let a = build_reference_table(&ConstantStats, &PriorSource(&ConstantStats), 50, 11).unwrap();
        let b = build_reference_table(&ConstantStats, &PriorSource(&ConstantStats), 50, 11).unwrap();
        let c = build_reference_table(&ConstantStats, &PriorSource(&ConstantStats), 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn failed_simulations_are_retried_and_counted() {
        let (table, count) =
            build_reference_table_counted(&HalfFailing, &PriorSource(&HalfFailing), 200, 3, 100).unwrap();
        assert!((0..200).all(|i| table.param(i, 0) <= 0.5));
        assert_eq!(count.simulator_calls, 200 + count.failures);
        assert!(count.failures > 50);
    }

    #[test]
    fn exhausted_retry_budget_names_the_parameters() {
        let err = build_reference_table_counted(&HalfFailing, &PriorSource(&HalfFailing), 200, 3, 0).unwrap_err();
        match err {
            Error::SimulationBudget { theta, attempts, .. } => {
                assert_eq!(attempts, 1);
                assert!(theta[0] > 0.5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn table_invariants_are_enforced() {
        assert!(ReferenceTable::new(vec![], vec![], names("p", 1), names("s", 1)).is_err());
        assert!(ReferenceTable::new(vec![1.0], vec![f64::NAN], names("p", 1), names("s", 1)).is_err());
        assert!(ReferenceTable::new(vec![1.0, 2.0], vec![1.0], names("p", 1), names("s", 1)).is_err());
        assert!(ReferenceTable::new(vec![1.0], vec![1.0], vec!["x".into()], vec!["x".into()]).is_ok());
        assert!(ReferenceTable::new(vec![1.0, 2.0], vec![1.0], vec!["x".into(), "x".into()], names("s", 1)).is_err());
    }

    #[test]
    fn resample_point_mass_and_zero_weight() {
        let single = WeightedParticles::new(vec![3.0, 4.0], vec![1.0], names("p", 2)).unwrap();
        let rows = weighted_resample(&single, 5, 1).unwrap();
        assert_eq!(rows, [3.0, 4.0].repeat(5));

        let pair = WeightedParticles::new(vec![1.0, 2.0], vec![1.0, 0.0], names("p", 1)).unwrap();
        for seed in 0..20 {
            assert!(weighted_resample(&pair, 3, seed).unwrap().iter().all(|&x| x == 1.0));
        }
        let reversed = WeightedParticles::new(vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0], names("p", 1)).unwrap();
        assert!(weighted_resample(&reversed, 1000, 5).unwrap().iter().all(|&x| x == 2.0));
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(WeightedParticles::new(vec![1.0, 2.0], vec![0.0, 0.0], names("p", 1)).is_err());
        assert!(weighted_resample_indices(&[0.0, 0.0], 3, 1).is_err());
        assert!(WeightedParticles::new(vec![1.0], vec![-1.0], names("p", 1)).is_err());
    }

    #[test]
    fn resample_frequencies_follow_weights() {
        // 5 sigma of a Bernoulli(0.5) frequency over 1e5 draws is 0.0079.
        let pair = WeightedParticles::new(vec![0.0, 1.0], vec![0.5, 0.5], names("p", 1)).unwrap();
        let rows = weighted_resample(&pair, 100_000, 9).unwrap();
        let ones = rows.iter().filter(|&&x| x == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01, "{ones}");
    }

    #[test]
    fn table_round_trip_and_error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let table = ReferenceTable::new(
            vec![0.1, 1.0 / 3.0],
            vec![std::f64::consts::PI, -1e-300],
            vec!["theta".into()],
            vec!["C".into()],
        )
        .unwrap();
        let path = dir.path().join("t.csv");
        table.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("param:theta,stat:C\n"));
        assert_eq!(ReferenceTable::load(&path).unwrap(), table);

        let bad_header = dir.path().join("h.csv");
        fs::write(&bad_header, "theta,stat:C\n1,2\n").unwrap();
        assert!(matches!(load_table(&bad_header), Err(Error::MalformedHeader { .. })));
        let bad_len = dir.path().join("l.csv");
        fs::write(&bad_len, "param:theta,stat:C\n1,2,3\n").unwrap();
        assert!(matches!(load_table(&bad_len), Err(Error::RowLength { line: 2, .. })));
        let bad_cell = dir.path().join("n.csv");
        fs::write(&bad_cell, "param:theta,stat:C\n1,abc\n").unwrap();
        assert!(matches!(load_table(&bad_cell), Err(Error::NonNumeric { column: 2, .. })));
    }

    #[test]
    fn particles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = WeightedParticles::new(vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 3.0], names("p", 2)).unwrap();
        let path = dir.path().join("p.csv");
        p.save(&path).unwrap();
        assert_eq!(WeightedParticles::load(&path).unwrap(), p);
    }
}
