//! Split criteria and the sorted sweep that finds the best threshold.
//!
//! Node-level functions take the members' parameter values (row-major, `dim`
//! columns) and their values of one statistic. Thresholds are midpoints
//! between consecutive distinct statistic values; a split sends
//! `stat <= threshold` left.

use std::cmp::Ordering;

use rand::seq::index;

use super::drf::FourierFeatures;
use crate::rng::SimRng;

/// The winning split of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub stat: usize,
    pub threshold: f64,
    /// Criterion value: L2 loss for regression trees, score for the others.
    pub score: f64,
    /// Impurity decrease credited to `stat`.
    pub gain: f64,
}

/// Cut point strictly between `a < b`.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Sorted unique midpoints of a statistic column.
pub fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v.dedup();
    v.windows(2).map(|w| midpoint(w[0], w[1])).collect()
}

fn sides(stat: &[f64], threshold: f64) -> (Vec<usize>, Vec<usize>) {
    (0..stat.len()).partition(|&i| stat[i] <= threshold)
}

fn column_mean(theta: &[f64], dim: usize, rows: &[usize], j: usize) -> f64 {
    rows.iter().map(|&i| theta[i * dim + j]).sum::<f64>() / rows.len() as f64
}

/// `(1/n)·[Σ_left (θ−θ̄₁)² + Σ_right (θ−θ̄₂)²]`, or `None` if a side is empty.
pub fn l2_split_loss(theta: &[f64], stat: &[f64], threshold: f64) -> Option<f64> {
    let (left, right) = sides(stat, threshold);
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let ss = |rows: &[usize]| {
        let m = column_mean(theta, 1, rows, 0);
        rows.iter().map(|&i| (theta[i] - m).powi(2)).sum::<f64>()
    };
    Some((ss(&left) + ss(&right)) / stat.len() as f64)
}

/// `(n₁n₂/n²)·Σ_p (θ̄₂ₚ−θ̄₁ₚ)²`, or `None` if a side is empty.
pub fn cart_split_score(theta: &[f64], dim: usize, stat: &[f64], threshold: f64) -> Option<f64> {
    let (left, right) = sides(stat, threshold);
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let n = stat.len() as f64;
    let frac = left.len() as f64 * right.len() as f64 / (n * n);
    let diff: f64 = (0..dim)
        .map(|j| (column_mean(theta, dim, &right, j) - column_mean(theta, dim, &left, j)).powi(2))
        .sum();
    Some(frac * diff)
}

/// `(1/L)·Σ_l (n₁n₂/n²)·|mean₁ e^{iω_lᵀθ} − mean₂ e^{iω_lᵀθ}|²`, or `None`
/// if a side is empty.
pub fn mmd_split_score(
    theta: &[f64],
    dim: usize,
    stat: &[f64],
    threshold: f64,
    features: &FourierFeatures,
) -> Option<f64> {
    let (left, right) = sides(stat, threshold);
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let n = stat.len() as f64;
    let frac = left.len() as f64 * right.len() as f64 / (n * n);
    let phase_means = |rows: &[usize], omega: &[f64]| {
        let (mut c, mut s) = (0.0, 0.0);
        for &i in rows {
            let arg: f64 = omega.iter().zip(&theta[i * dim..(i + 1) * dim]).map(|(w, t)| w * t).sum();
            c += arg.cos();
            s += arg.sin();
        }
        (c / rows.len() as f64, s / rows.len() as f64)
    };
    let total: f64 = features
        .frequencies
        .iter()
        .map(|omega| {
            let (c1, s1) = phase_means(&left, omega);
            let (c2, s2) = phase_means(&right, omega);
            (c1 - c2).powi(2) + (s1 - s2).powi(2)
        })
        .sum();
    Some(frac * total / features.frequencies.len() as f64)
}

/// `count` distinct statistic indices out of `k`, ascending.
pub fn sample_candidates(k: usize, count: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut c = index::sample(rng, k, count.min(k)).into_vec();
    c.sort_unstable();
    c
}

/// Relative margin below which two scores count as tied.
const TIE: f64 = 1e-12;

/// `a` beats `b` by more than rounding noise.
pub(crate) fn beats(a: f64, b: f64) -> bool {
    a > b + TIE * b.abs()
}

/// Reusable buffers for the sorted sweep.
#[derive(Default)]
pub(crate) struct Sweep {
    order: Vec<(f64, u32)>,
    left: Vec<f64>,
    total: Vec<f64>,
}

impl Sweep {
    /// Best split of `members` on one statistic column for a response of
    /// width `d` (row `r` of `response` belongs to `members[r]`). Maximizes
    /// `(n₁n₂/n²)·Σ_d (mean₁ − mean₂)²`; ties keep the lowest threshold.
    /// Returns `(threshold, score)`, or `None` if the column is constant.
    pub(crate) fn best(&mut self, column: &[f64], members: &[u32], response: &[f64], d: usize) -> Option<(f64, f64)> {
        let n = members.len();
        self.order.clear();
        self.order
            .extend(members.iter().enumerate().map(|(r, &m)| (column[m as usize], r as u32)));
        self.order
            .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        if self.order[0].0 == self.order[n - 1].0 {
            return None;
        }
        self.total.clear();
        self.total.resize(d, 0.0);
        for r in 0..n {
            for (t, y) in self.total.iter_mut().zip(&response[r * d..(r + 1) * d]) {
                *t += y;
            }
        }
        self.left.clear();
        self.left.resize(d, 0.0);
        let nf = n as f64;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n - 1 {
            let r = self.order[i].1 as usize;
            for (l, y) in self.left.iter_mut().zip(&response[r * d..(r + 1) * d]) {
                *l += y;
            }
            if self.order[i].0 < self.order[i + 1].0 {
                let n1 = (i + 1) as f64;
                let n2 = nf - n1;
                let diff: f64 = self
                    .left
                    .iter()
                    .zip(&self.total)
                    .map(|(l, t)| (l / n1 - (t - l) / n2).powi(2))
                    .sum();
                let score = n1 * n2 / (nf * nf) * diff;
                if best.is_none_or(|(_, b)| beats(score, b)) {
                    best = Some((i, score));
                }
            }
        }
        best.map(|(i, score)| (midpoint(self.order[i].0, self.order[i + 1].0), score))
    }
}

/// Maximize the mean-difference score over `candidates`; if none of them
/// admits a split, fall back to the remaining statistics in ascending order.
/// Ties keep the lowest statistic index.
pub(crate) fn best_mean_difference(
    columns: &[Vec<f64>],
    members: &[u32],
    response: &[f64],
    d: usize,
    candidates: &[usize],
) -> Option<(usize, f64, f64)> {
    let mut sweep = Sweep::default();
    let mut scan = |stats: &mut dyn Iterator<Item = usize>| {
        let mut best: Option<(usize, f64, f64)> = None;
        for k in stats {
            if let Some((threshold, score)) = sweep.best(&columns[k], members, response, d) {
                if best.is_none_or(|(_, _, b)| beats(score, b)) {
                    best = Some((k, threshold, score));
                }
            }
        }
        best
    };
    scan(&mut candidates.iter().copied()).or_else(|| {
        let mut rest = (0..columns.len()).filter(|k| !candidates.contains(k));
        scan(&mut rest)
    })
}

/// Best L2 split of `members` on the given `theta` column (indexed by row).
/// `None` if all members share one θ or no candidate statistic varies.
pub fn best_l2_split(columns: &[Vec<f64>], theta: &[f64], members: &[u32], candidates: &[usize]) -> Option<SplitChoice> {
    let first = theta[members[0] as usize];
    if members.iter().all(|&m| theta[m as usize] == first) {
        return None;
    }
    let n = members.len() as f64;
    let mean = members.iter().map(|&m| theta[m as usize]).sum::<f64>() / n;
    let response: Vec<f64> = members.iter().map(|&m| theta[m as usize] - mean).collect();
    let parent: f64 = response.iter().map(|y| y * y).sum();
    let (stat, threshold, score) = best_mean_difference(columns, members, &response, 1, candidates)?;
    // Between-child sum of squares n·score equals the loss decrease.
    let gain = n * score;
    Some(SplitChoice {
        stat,
        threshold,
        score: ((parent - gain) / n).max(0.0),
        gain,
    })
}
