//! Honest distributional forest on the joint parameter vector.

use std::sync::Arc;

use rand::seq::index;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{best_mean_difference, sample_candidates, SplitChoice};
use super::{grow_tree, stat_columns, Forest, ForestKind, LeafMember, Node, Splitter, Tree};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::tables::{Observation, ReferenceTable, WeightedParticles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    Cart,
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrfConfig {
    pub n_trees: usize,
    /// Poisson rate for the per-node candidate count; `None` means
    /// `min(⌈√K + 20⌉, K)`.
    pub n_try: Option<f64>,
    pub min_node: usize,
    /// Rows drawn per tree; `None` means `N/2`.
    pub n_sample: Option<usize>,
    /// Share of the subsample that fits the structure.
    pub honesty_fraction: f64,
    pub split_rule: SplitRule,
    pub fourier_count: usize,
    pub seed: u64,
}

impl Default for DrfConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            n_try: None,
            min_node: 15,
            n_sample: None,
            honesty_fraction: 0.5,
            split_rule: SplitRule::Cart,
            fourier_count: 50,
            seed: 0,
        }
    }
}

impl DrfConfig {
    pub fn n_try_for(&self, k: usize) -> f64 {
        self.n_try.unwrap_or_else(|| ((k as f64).sqrt() + 20.0).ceil().min(k as f64))
    }

    pub fn n_sample_for(&self, n: usize) -> usize {
        self.n_sample.unwrap_or(n / 2)
    }

    /// Structure and estimation set sizes for a table of `n` rows.
    pub fn honest_sizes(&self, n: usize) -> (usize, usize) {
        let m = self.n_sample_for(n);
        let fit = ((m as f64 * self.honesty_fraction).floor() as usize).clamp(1, m.saturating_sub(1).max(1));
        (fit, m - fit)
    }

    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        let rate = self.n_try_for(k);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidConfig(format!("n_try must be a positive rate, got {rate}")));
        }
        if self.min_node < 1 {
            return Err(Error::InvalidConfig("min_node must be at least 1".into()));
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "honesty_fraction must lie in (0, 1), got {}",
                self.honesty_fraction
            )));
        }
        if self.split_rule == SplitRule::Mmd && self.fourier_count == 0 {
            return Err(Error::InvalidConfig("fourier_count must be at least 1 for MMD splits".into()));
        }
        let m = self.n_sample_for(n);
        if m > n {
            return Err(Error::InvalidConfig(format!("n_sample {m} exceeds the {n} table rows")));
        }
        if m < 2 {
            return Err(Error::InvalidConfig(format!("n_sample must be at least 2, got {m}")));
        }
        Ok(())
    }
}

/// Random frequencies for the Gaussian kernel of bandwidth σ.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    pub frequencies: Vec<Vec<f64>>,
    pub bandwidth: f64,
}

impl FourierFeatures {
    /// `count` draws of `ω ~ N(0, σ⁻² I_dim)`.
    pub fn sample(dim: usize, bandwidth: f64, count: usize, rng: &mut SimRng) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if count == 0 {
            return Err(Error::InvalidArgument("need at least one Fourier feature".into()));
        }
        let frequencies = (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z / bandwidth
                    })
                    .collect()
            })
            .collect();
        Ok(Self { frequencies, bandwidth })
    }
}

pub fn sample_fourier_features(dim: usize, bandwidth: f64, count: usize, seed: u64) -> Result<FourierFeatures> {
    FourierFeatures::sample(dim, bandwidth, count, &mut rng::stream(seed, 0))
}

/// Median Euclidean distance over all pairs of `dim`-dimensional rows. Falls
/// back to the smallest nonzero distance when the median is zero, and to 1
/// when every row coincides.
pub fn median_pairwise_bandwidth(theta: &[f64], dim: usize) -> Result<f64> {
    let n = theta.len() / dim;
    if n < 2 {
        return Err(Error::InvalidArgument("bandwidth needs at least two points".into()));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let a = &theta[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let b = &theta[j * dim..(j + 1) * dim];
            d.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    let m = d.len();
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let median = if m % 2 == 1 {
        *d.select_nth_unstable_by(m / 2, cmp).1
    } else {
        let (lower, hi, _) = d.select_nth_unstable_by(m / 2, cmp);
        let hi = *hi;
        let lo = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    };
    if median > 0.0 {
        return Ok(median);
    }
    let smallest = d.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    Ok(if smallest.is_finite() { smallest } else { 1.0 })
}

/// Standardize each parameter column over the members by its own mean and
/// standard deviation; constant columns are dropped. Returns the member
/// rows and their width.
fn standardized_response(params: &[f64], p: usize, members: &[u32]) -> (Vec<f64>, usize) {
    let n = members.len() as f64;
    let mut keep = Vec::new();
    for j in 0..p {
        let first = params[members[0] as usize * p + j];
        if members.iter().any(|&m| params[m as usize * p + j] != first) {
            let mean = members.iter().map(|&m| params[m as usize * p + j]).sum::<f64>() / n;
            let var = members
                .iter()
                .map(|&m| (params[m as usize * p + j] - mean).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                keep.push((j, mean, var.sqrt()));
            }
        }
    }
    let d = keep.len();
    let mut response = Vec::with_capacity(members.len() * d);
    for &m in members {
        for &(j, mean, sd) in &keep {
            response.push((params[m as usize * p + j] - mean) / sd);
        }
    }
    (response, d)
}

/// Cosine and sine features of the members, `2L` columns per row.
fn fourier_response(params: &[f64], p: usize, members: &[u32], features: &FourierFeatures) -> Vec<f64> {
    let l = features.frequencies.len();
    let mut out = Vec::with_capacity(members.len() * 2 * l);
    for &m in members {
        let row = &params[m as usize * p..(m as usize + 1) * p];
        for omega in &features.frequencies {
            let arg: f64 = omega.iter().zip(row).map(|(w, t)| w * t).sum();
            out.push(arg.cos());
            out.push(arg.sin());
        }
    }
    out
}

struct DrfSplitter<'a> {
    columns: &'a [Vec<f64>],
    params: &'a [f64],
    p: usize,
    poisson: Poisson<f64>,
    rule: SplitRule,
    fourier_count: usize,
}

impl Splitter for DrfSplitter<'_> {
    fn split(&self, members: &[u32], rng: &mut SimRng) -> Option<SplitChoice> {
        let k = self.columns.len();
        let draw = self.poisson.sample(rng) as usize;
        let candidates = sample_candidates(k, draw.clamp(1, k), rng);
        let (response, d, weight) = match self.rule {
            SplitRule::Cart => {
                let (r, d) = standardized_response(self.params, self.p, members);
                (r, d, 1.0)
            }
            SplitRule::Mmd => {
                let first = &self.params[members[0] as usize * self.p..(members[0] as usize + 1) * self.p];
                if members
                    .iter()
                    .all(|&m| &self.params[m as usize * self.p..(m as usize + 1) * self.p] == first)
                {
                    return None;
                }
                let theta: Vec<f64> = members
                    .iter()
                    .flat_map(|&m| self.params[m as usize * self.p..(m as usize + 1) * self.p].iter().copied())
                    .collect();
                let sigma = median_pairwise_bandwidth(&theta, self.p).ok()?;
                let features = FourierFeatures::sample(self.p, sigma, self.fourier_count, rng).ok()?;
                let r = fourier_response(self.params, self.p, members, &features);
                (r, 2 * self.fourier_count, 1.0 / self.fourier_count as f64)
            }
        };
        if d == 0 {
            return None;
        }
        let (stat, threshold, score) = best_mean_difference(self.columns, members, &response, d, &candidates)?;
        let score = weight * score;
        Some(SplitChoice {
            stat,
            threshold,
            score,
            gain: members.len() as f64 * score,
        })
    }
}

/// Replace leaf contents by routed estimation rows and drop splits with an
/// empty side, splicing the nonempty child into the parent.
fn honest_leaves(nodes: &[Node], columns: &[Vec<f64>], estimation: &[u32]) -> Vec<Node> {
    let mut routed: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
    for &i in estimation {
        let mut id = 0;
        while let Node::Split {
            stat,
            threshold,
            left,
            right,
        } = &nodes[id]
        {
            id = if columns[*stat][i as usize] <= *threshold { *left } else { *right };
        }
        routed[id].push(i);
    }
    let mut occupied = vec![false; nodes.len()];
    for id in (0..nodes.len()).rev() {
        occupied[id] = match &nodes[id] {
            Node::Leaf { .. } => !routed[id].is_empty(),
            Node::Split { left, right, .. } => occupied[*left] || occupied[*right],
        };
    }
    let mut out: Vec<Node> = Vec::new();
    let mut stack: Vec<(usize, Option<(usize, bool)>)> = vec![(0, None)];
    while let Some((mut id, parent)) = stack.pop() {
        while let Node::Split { left, right, .. } = &nodes[id] {
            if !occupied[*left] {
                id = *right;
            } else if !occupied[*right] {
                id = *left;
            } else {
                break;
            }
        }
        let new_id = out.len();
        match &nodes[id] {
            Node::Leaf { .. } => {
                let members = routed[id].iter().map(|&index| LeafMember { index, count: 1 }).collect();
                out.push(Node::Leaf { members });
            }
            Node::Split {
                stat,
                threshold,
                left,
                right,
            } => {
                out.push(Node::Split {
                    stat: *stat,
                    threshold: *threshold,
                    left: usize::MAX,
                    right: usize::MAX,
                });
                stack.push((*right, Some((new_id, false))));
                stack.push((*left, Some((new_id, true))));
            }
        }
        if let Some((p, is_left)) = parent {
            if let Node::Split { left, right, .. } = &mut out[p] {
                if is_left {
                    *left = new_id;
                } else {
                    *right = new_id;
                }
            }
        }
    }
    out
}

/// Grow `n_trees` honest trees on the full parameter vector.
///
/// Tree `t` uses seed `derive(seed, t)`: its subsample comes from the tree's
/// last stream and node `i` draws its candidate count, candidates and
/// Fourier features from stream `i`.
pub fn grow_drf(table: impl Into<Arc<ReferenceTable>>, cfg: &DrfConfig) -> Result<Forest> {
    let table = table.into();
    let (k, n, p) = (table.n_stats(), table.n_rows(), table.n_params());
    cfg.validate(k, n)?;
    let (fit, est) = cfg.honest_sizes(n);
    let columns = stat_columns(&table);
    let splitter = DrfSplitter {
        columns: &columns,
        params: table.params(),
        p,
        poisson: Poisson::new(cfg.n_try_for(k)).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        rule: cfg.split_rule,
        fourier_count: cfg.fourier_count,
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = rng::derive(cfg.seed, t as u64);
            let mut sub = rng::stream(seed, u64::MAX);
            let drawn: Vec<u32> = index::sample(&mut sub, n, fit + est).iter().map(|i| i as u32).collect();
            let mut structure = drawn[..fit].to_vec();
            let mut estimation = drawn[fit..].to_vec();
            structure.sort_unstable();
            estimation.sort_unstable();
            let (grown, gains) = grow_tree(&columns, structure.clone(), &splitter, cfg.min_node, seed);
            Tree {
                nodes: honest_leaves(&grown, &columns, &estimation),
                seed,
                gains,
                structure_set: structure,
                estimation_set: estimation,
            }
        })
        .collect();
    Ok(Forest::new(ForestKind::Drf, trees, table))
}

/// Joint posterior weights over the full parameter rows.
pub fn drf_weights(forest: &Forest, obs: &Observation) -> Result<WeightedParticles> {
    forest.weighted_particles(obs)
}

/// `Σ_i w_i·1[θ_i ≤ x]` coordinatewise.
pub fn posterior_cdf(particles: &WeightedParticles, x: &[f64]) -> f64 {
    (0..particles.len())
        .filter(|&i| particles.particle(i).iter().zip(x).all(|(t, b)| t <= b))
        .map(|i| particles.weights()[i])
        .sum::<f64>()
        .min(1.0)
}
