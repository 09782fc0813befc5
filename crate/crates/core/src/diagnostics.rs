//! Weighted one-dimensional summaries: moments, quantiles, empirical CDFs and
//! the 1-Wasserstein distance between weighted samples.

use std::cmp::Ordering;

/// `Σ wᵢ xᵢ / Σ wᵢ`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total
}

/// Weighted variance with normalized weights (no small-sample correction).
pub fn weighted_variance(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mean = weighted_mean(values, weights);
    values
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    total * total / weights.iter().map(|w| w * w).sum::<f64>()
}

fn sorted_pairs(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    pairs
}

/// Weighted quantiles by inverting the empirical CDF: for each level `q` the
/// smallest value whose cumulative normalized weight reaches `q`.
pub fn weighted_quantiles(values: &[f64], weights: &[f64], levels: &[f64]) -> Vec<f64> {
    let pairs = sorted_pairs(values, weights);
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (_, w) in &pairs {
        acc += w / total;
        cumulative.push(acc);
    }
    levels
        .iter()
        .map(|&q| {
            // Tolerate rounding in the running sum.
            let idx = cumulative.partition_point(|&c| c < q - 1e-12);
            pairs[idx.min(pairs.len() - 1)].0
        })
        .collect()
}

pub fn weighted_quantile(values: &[f64], weights: &[f64], level: f64) -> f64 {
    weighted_quantiles(values, weights, &[level])[0]
}

/// Unweighted quantiles with the same inverse-CDF convention.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Vec<f64> {
    weighted_quantiles(values, &vec![1.0; values.len()], levels)
}

/// 1-Wasserstein distance between two weighted empirical distributions on
/// the line: the integral of the absolute difference of their CDFs.
pub fn wasserstein1(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let ta: f64 = wa.iter().sum();
    let tb: f64 = wb.iter().sum();
    let mut events: Vec<(f64, f64)> = a
        .iter()
        .zip(wa)
        .map(|(&x, &w)| (x, w / ta))
        .chain(b.iter().zip(wb).map(|(&x, &w)| (x, -w / tb)))
        .collect();
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
    let mut diff = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        diff += pair[0].1;
        total += diff.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// W1 between two equally weighted samples.
pub fn wasserstein1_unweighted(a: &[f64], b: &[f64]) -> f64 {
    wasserstein1(a, &vec![1.0; a.len()], b, &vec![1.0; b.len()])
}

/// Pearson correlation of two equally long samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Weighted Pearson correlation.
pub fn weighted_correlation(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mx = weighted_mean(x, w);
    let my = weighted_mean(y, w);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for ((a, b), wi) in x.iter().zip(y).zip(w) {
        sxy += wi * (a - mx) * (b - my);
        sxx += wi * (a - mx) * (a - mx);
        syy += wi * (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w1_between_point_masses() {
        assert_eq!(wasserstein1_unweighted(&[0.0], &[3.0]), 3.0);
        assert_eq!(wasserstein1_unweighted(&[1.0, 2.0], &[2.0, 1.0]), 0.0);
    }

    /// W1 by integrating |F - G| on a fine grid.
    #[test]
    fn w1_matches_grid_integral() {
        let a = [0.3, 1.7, 2.2, -0.4];
        let wa = [0.1, 0.4, 0.2, 0.3];
        let b = [0.0, 1.0, 3.5];
        let wb = [0.5, 0.25, 0.25];
        let cdf = |xs: &[f64], ws: &[f64], t: f64| -> f64 {
            xs.iter().zip(ws).filter(|(x, _)| **x <= t).map(|(_, w)| w).sum()
        };
        let (lo, hi, n) = (-1.0, 4.0, 500_000);
        let h = (hi - lo) / n as f64;
        let grid: f64 = (0..n)
            .map(|i| {
                let t = lo + (i as f64 + 0.5) * h;
                (cdf(&a, &wa, t) - cdf(&b, &wb, t)).abs() * h
            })
            .sum();
        assert!((wasserstein1(&a, &wa, &b, &wb) - grid).abs() < 1e-4);
    }

    #[test]
    fn quantiles_invert_cdf() {
        let v = [3.0, 1.0, 2.0];
        let w = [0.2, 0.5, 0.3];
        assert_eq!(weighted_quantiles(&v, &w, &[0.1, 0.5, 0.51, 0.8, 0.81, 1.0]), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn moments() {
        let v = [1.0, 3.0];
        assert_eq!(weighted_mean(&v, &[1.0, 1.0]), 2.0);
        assert_eq!(weighted_variance(&v, &[1.0, 1.0]), 1.0);
        assert_eq!(effective_sample_size(&[0.25; 4]), 4.0);
    }
}
