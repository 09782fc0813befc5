//! Bootstrap regression forest for one parameter.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{best_l2_split, sample_candidates, SplitChoice};
use super::{grow_tree, stat_columns, Forest, ForestKind, Splitter, Tree};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::tables::{Observation, ReferenceTable, WeightedParticles};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub n_trees: usize,
    /// Candidate statistics per split; `None` means `⌈K/3⌉`.
    pub n_try: Option<usize>,
    pub min_node: usize,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            n_try: None,
            min_node: 5,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn n_try_for(&self, k: usize) -> usize {
        self.n_try.unwrap_or(k.div_ceil(3))
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        let n_try = self.n_try_for(k);
        if n_try == 0 || n_try > k {
            return Err(Error::InvalidConfig(format!("n_try must lie in 1..={k}, got {n_try}")));
        }
        if self.min_node < 2 {
            return Err(Error::InvalidConfig("min_node must be at least 2".into()));
        }
        Ok(())
    }
}

struct L2Splitter<'a> {
    columns: &'a [Vec<f64>],
    theta: &'a [f64],
    n_try: usize,
}

impl Splitter for L2Splitter<'_> {
    fn split(&self, members: &[u32], rng: &mut SimRng) -> Option<SplitChoice> {
        let candidates = sample_candidates(self.columns.len(), self.n_try, rng);
        best_l2_split(self.columns, self.theta, members, &candidates)
    }
}

/// Grow `n_trees` bootstrap regression trees predicting parameter `target`.
///
/// Tree `t` uses seed `derive(seed, t)`; its bootstrap comes from the tree's
/// last stream and node `i` samples candidates from stream `i`.
pub fn grow_forest(table: impl Into<Arc<ReferenceTable>>, target: usize, cfg: &RfConfig) -> Result<Forest> {
    let table = table.into();
    let k = table.n_stats();
    cfg.validate(k)?;
    if target >= table.n_params() {
        return Err(Error::InvalidArgument(format!(
            "target parameter {target} out of range for {} parameters",
            table.n_params()
        )));
    }
    let n = table.n_rows();
    if n < cfg.min_node {
        return Err(Error::InvalidTable(format!("{n} rows is fewer than min_node = {}", cfg.min_node)));
    }
    let columns = stat_columns(&table);
    let theta = table.param_column(target);
    let splitter = L2Splitter {
        columns: &columns,
        theta: &theta,
        n_try: cfg.n_try_for(k),
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = rng::derive(cfg.seed, t as u64);
            let mut boot = rng::stream(seed, u64::MAX);
            let root: Vec<u32> = (0..n).map(|_| boot.random_range(0..n as u32)).collect();
            let (nodes, gains) = grow_tree(&columns, root.clone(), &splitter, cfg.min_node, seed);
            Tree {
                nodes,
                seed,
                gains,
                structure_set: root,
                estimation_set: Vec::new(),
            }
        })
        .collect();
    Ok(Forest::new(ForestKind::Rf { target }, trees, table))
}

/// Posterior weights of the training particles over the target parameter.
pub fn rf_weights(forest: &Forest, obs: &Observation) -> Result<WeightedParticles> {
    let weights = forest.weights(obs)?;
    let table = forest.table();
    let j = match forest.kind() {
        ForestKind::Rf { target } => target,
        ForestKind::Drf => return Err(Error::InvalidArgument("rf_weights needs a regression forest".into())),
    };
    WeightedParticles::new(table.param_column(j), weights, vec![table.param_names()[j].clone()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{variable_importance, Node};

    fn informative_table(n: usize) -> ReferenceTable {
        let mut rng = rng::stream(5, 0);
        let mut params = Vec::new();
        let mut stats = Vec::new();
        for _ in 0..n {
            let t: f64 = rng.random_range(0.0..10.0);
            params.push(t);
            stats.push(t);
            stats.push(rng.random::<f64>());
        }
        ReferenceTable::new(params, stats, vec!["theta".into()], vec!["copy".into(), "noise".into()]).unwrap()
    }

    /// Ten parameter values, each repeated 30 times, with a statistic equal
    /// to θ: every split falls between groups, so leaves are θ-pure.
    #[test]
    fn perfectly_informative_statistic_gives_pure_leaves() {
        let mut rng = rng::stream(6, 0);
        let mut params = Vec::new();
        let mut stats = Vec::new();
        for i in 0..300 {
            let t = (i % 10) as f64;
            params.push(t);
            stats.extend([t, rng.random::<f64>()]);
        }
        let table = ReferenceTable::new(params, stats, vec!["theta".into()], vec!["copy".into(), "noise".into()]).unwrap();
        let cfg = RfConfig {
            n_trees: 1,
            n_try: Some(2),
            ..Default::default()
        };
        let forest = grow_forest(table, 0, &cfg).unwrap();
        let table = forest.table();
        for leaf in forest.trees()[0].leaves() {
            let first = table.param(leaf[0].index as usize, 0);
            assert!(leaf.iter().all(|m| table.param(m.index as usize, 0) == first));
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let cfg = RfConfig {
            n_trees: 5,
            seed: 9,
            ..Default::default()
        };
        let a = grow_forest(informative_table(200), 0, &cfg).unwrap();
        let b = grow_forest(informative_table(200), 0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn copy_outranks_noise() {
        let cfg = RfConfig {
            n_trees: 20,
            ..Default::default()
        };
        let forest = grow_forest(informative_table(300), 0, &cfg).unwrap();
        let imp = variable_importance(&forest);
        assert!(imp[0] > imp[1], "{imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leaves_respect_min_node() {
        let cfg = RfConfig {
            n_trees: 3,
            ..Default::default()
        };
        let forest = grow_forest(informative_table(400), 0, &cfg).unwrap();
        for tree in forest.trees() {
            for node in &tree.nodes {
                if let Node::Leaf { members } = node {
                    let size: u32 = members.iter().map(|m| m.count).sum();
                    assert!(size as usize <= cfg.min_node || members.len() == 1);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = RfConfig {
            n_try: Some(3),
            ..Default::default()
        };
        assert!(bad.validate(2).is_err());
        assert!(RfConfig { n_trees: 0, ..Default::default() }.validate(2).is_err());
        assert!(RfConfig { min_node: 1, ..Default::default() }.validate(2).is_err());
        assert_eq!(RfConfig::default().n_try_for(32), 11);
    }
}
