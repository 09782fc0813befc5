//! Regression forests over reference tables.
//!
//! Both forest flavours share one tree representation: interior nodes route
//! on `stat <= threshold`, leaves list training particle indices with their
//! multiplicity in that tree. A particle's posterior weight for an
//! observation is its share of the observation's leaf, averaged over trees.
//!
//! - [`rf`]: bootstrap trees with L2-loss splits on one parameter.
//! - [`drf`]: honest subsampled trees with CART or Fourier-MMD splits on the
//!   whole parameter vector.

pub mod drf;
pub mod rf;
pub mod split;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::tables::{Observation, ReferenceTable, WeightedParticles};

use split::SplitChoice;

/// A training particle stored in a leaf with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafMember {
    pub index: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `stat <= threshold` go left.
    Split {
        stat: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { members: Vec<LeafMember> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0. Node `i` made its split decision from stream `(seed, i)`
    /// of the tree seed, so a node's candidate set can be replayed.
    pub nodes: Vec<Node>,
    pub seed: u64,
    /// Impurity decrease credited to each statistic.
    pub gains: Vec<f64>,
    /// Rows the tree structure was fitted on (bootstrap draws with repeats for RF).
    pub structure_set: Vec<u32>,
    /// Rows stored in the leaves of an honest tree; empty for bootstrap trees.
    pub estimation_set: Vec<u32>,
}

impl Tree {
    /// Index of the leaf a statistic vector falls into.
    pub fn leaf_index(&self, stats: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    stat,
                    threshold,
                    left,
                    right,
                } => id = if stats[*stat] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn leaf_members(&self, stats: &[f64]) -> &[LeafMember] {
        match &self.nodes[self.leaf_index(stats)] {
            Node::Leaf { members } => members,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[LeafMember]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { members } => Some(members.as_slice()),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = &self.nodes[id] {
                stack.push((*left, d + 1));
                stack.push((*right, d + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestKind {
    /// Bootstrap regression forest on one parameter column.
    Rf { target: usize },
    /// Honest distributional forest on the full parameter vector.
    Drf,
}

/// A trained ensemble together with the reference table it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    kind: ForestKind,
    trees: Vec<Tree>,
    table: Arc<ReferenceTable>,
}

impl Forest {
    pub(crate) fn new(kind: ForestKind, trees: Vec<Tree>, table: Arc<ReferenceTable>) -> Self {
        Self { kind, trees, table }
    }

    /// Assemble a forest from hand-built trees.
    pub fn from_trees(kind: ForestKind, trees: Vec<Tree>, table: impl Into<Arc<ReferenceTable>>) -> Result<Self> {
        let table = table.into();
        if trees.is_empty() {
            return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
        }
        let n = table.n_rows() as u32;
        for tree in &trees {
            for node in &tree.nodes {
                match node {
                    Node::Split { stat, left, right, .. } => {
                        if *stat >= table.n_stats() || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return Err(Error::InvalidArgument("split node out of range".into()));
                        }
                    }
                    Node::Leaf { members } => {
                        if members.iter().any(|m| m.index >= n) {
                            return Err(Error::InvalidArgument("leaf member out of range".into()));
                        }
                    }
                }
            }
        }
        Ok(Self { kind, trees, table })
    }

    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn table(&self) -> &ReferenceTable {
        &self.table
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Posterior weight of every training particle given observed statistics:
    /// `w_i = (1/B') Σ_t n_t(i)·1[i ∈ L_t(obs)] / Σ_j n_t(j)·1[j ∈ L_t(obs)]`,
    /// where `B'` counts the trees whose observation leaf is nonempty.
    pub fn weights(&self, obs: &Observation) -> Result<Vec<f64>> {
        obs.check_against(self.table.n_stats())?;
        let mut weights = vec![0.0; self.table.n_rows()];
        let mut used = 0usize;
        for tree in &self.trees {
            let members = tree.leaf_members(obs.values());
            let total: u64 = members.iter().map(|m| m.count as u64).sum();
            if total == 0 {
                continue;
            }
            used += 1;
            let total = total as f64;
            for m in members {
                weights[m.index as usize] += m.count as f64 / total;
            }
        }
        if used == 0 {
            return Err(Error::EmptyLeaves);
        }
        let b = used as f64;
        weights.iter_mut().for_each(|w| *w /= b);
        Ok(weights)
    }

    /// Weights wrapped as particles over the full parameter rows of the table.
    pub fn weighted_particles(&self, obs: &Observation) -> Result<WeightedParticles> {
        let weights = self.weights(obs)?;
        WeightedParticles::new(self.table.params().to_vec(), weights, self.table.param_names().to_vec())
    }

    /// Weighted-mean prediction of parameter `j`.
    pub fn predict(&self, obs: &Observation, j: usize) -> Result<f64> {
        let w = self.weights(obs)?;
        Ok((0..self.table.n_rows()).map(|i| w[i] * self.table.param(i, j)).sum())
    }
}

/// Mean decrease in impurity per statistic, averaged over trees and
/// normalized to sum to one. A forest without splits scores all zeros.
pub fn variable_importance(forest: &Forest) -> Vec<f64> {
    let k = forest.table.n_stats();
    let mut scores = vec![0.0; k];
    for tree in &forest.trees {
        for (s, g) in scores.iter_mut().zip(&tree.gains) {
            *s += g;
        }
    }
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter_mut().for_each(|s| *s /= total);
    }
    scores
}

/// Statistic indices sorted by decreasing importance (ties by index).
pub fn importance_ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Column-major copy of the statistic block for cache-friendly split search.
pub(crate) fn stat_columns(table: &ReferenceTable) -> Vec<Vec<f64>> {
    (0..table.n_stats()).map(|k| table.stat_column(k)).collect()
}

/// Per-node split search used by the tree grower.
pub(crate) trait Splitter: Sync {
    fn split(&self, members: &[u32], rng: &mut SimRng) -> Option<SplitChoice>;
}

/// Collapse duplicate row indices into counted leaf members.
pub(crate) fn count_members(members: &[u32]) -> Vec<LeafMember> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<LeafMember> = Vec::new();
    for idx in sorted {
        match out.last_mut() {
            Some(last) if last.index == idx => last.count += 1,
            _ => out.push(LeafMember { index: idx, count: 1 }),
        }
    }
    out
}

/// Grow one tree depth-first. A node with more than `min_node` members is
/// split if the splitter finds a valid split; node ids follow creation order.
pub(crate) fn grow_tree(
    columns: &[Vec<f64>],
    root: Vec<u32>,
    splitter: &dyn Splitter,
    min_node: usize,
    seed: u64,
) -> (Vec<Node>, Vec<f64>) {
    let mut gains = vec![0.0; columns.len()];
    let mut nodes = vec![Node::Leaf { members: Vec::new() }];
    let mut stack = vec![(0usize, root)];
    while let Some((id, members)) = stack.pop() {
        if members.len() > min_node {
            let mut node_rng = rng::stream(seed, id as u64);
            if let Some(choice) = splitter.split(&members, &mut node_rng) {
                let column = &columns[choice.stat];
                let (left, right): (Vec<u32>, Vec<u32>) =
                    members.iter().partition(|&&m| column[m as usize] <= choice.threshold);
                debug_assert!(!left.is_empty() && !right.is_empty());
                gains[choice.stat] += choice.gain;
                let left_id = nodes.len();
                let right_id = left_id + 1;
                nodes.push(Node::Leaf { members: Vec::new() });
                nodes.push(Node::Leaf { members: Vec::new() });
                nodes[id] = Node::Split {
                    stat: choice.stat,
                    threshold: choice.threshold,
                    left: left_id,
                    right: right_id,
                };
                stack.push((right_id, right));
                stack.push((left_id, left));
                continue;
            }
        }
        nodes[id] = Node::Leaf {
            members: count_members(&members),
        };
    }
    (nodes, gains)
}
