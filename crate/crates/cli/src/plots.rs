//! Plot-ready tables: quantile-quantile pairs and density grids.

use abcsmc_core::diagnostics::{quantiles, weighted_quantiles, weighted_variance};
use abcsmc_core::tables::format_real;
use abcsmc_core::{Posterior, WeightedParticles};

/// Quantile levels 0.01, 0.02, ..., 0.99.
pub fn qq_levels() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqPoint {
    pub level: f64,
    pub posterior: f64,
    pub oracle: f64,
}

/// Weighted posterior quantiles of one coordinate against the quantiles of
/// an oracle sample, at levels 0.01..0.99.
pub fn qq_data(posterior: &WeightedParticles, oracle: &[f64], coordinate: usize) -> Vec<QqPoint> {
    let levels = qq_levels();
    let p = weighted_quantiles(&posterior.coordinate(coordinate), posterior.weights(), &levels);
    let o = quantiles(oracle, &levels);
    levels
        .iter()
        .zip(p.iter().zip(&o))
        .map(|(&level, (&posterior, &oracle))| QqPoint { level, posterior, oracle })
        .collect()
}

/// The particles carrying coordinate `j` of a posterior and their column.
pub fn coordinate_particles(posterior: &Posterior, j: usize) -> (&WeightedParticles, usize) {
    match posterior {
        Posterior::Joint(p) => (p, j),
        Posterior::Marginal(m) => (&m[j], 0),
    }
}

pub const DENSITY_POINTS: usize = 200;

/// Weighted Gaussian kernel density estimate on an even grid spanning the
/// particles plus three bandwidths either side. The bandwidth follows
/// Silverman's rule with the effective sample size.
pub fn density_grid(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let total: f64 = weights.iter().sum();
    let ess = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    let sd = weighted_variance(values, weights).sqrt();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut h = 1.06 * sd * ess.powf(-0.2);
    if !(h > 0.0) {
        h = (hi.abs().max(1.0)) * 1e-3;
    }
    let (start, end) = (lo - 3.0 * h, hi + 3.0 * h);
    let norm = 1.0 / (total * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..DENSITY_POINTS)
        .map(|i| {
            let x = start + (end - start) * i as f64 / (DENSITY_POINTS - 1) as f64;
            let d: f64 = values
                .iter()
                .zip(weights)
                .map(|(v, w)| w * (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum();
            (x, d * norm)
        })
        .collect()
}

/// `parameter,x,density` rows for every coordinate.
pub fn density_csv(posterior: &Posterior) -> String {
    let mut out = String::from("parameter,x,density\n");
    for (j, name) in posterior.param_names().iter().enumerate() {
        let (values, weights) = posterior.marginal(j);
        for (x, d) in density_grid(&values, weights) {
            out.push_str(&format!("{name},{},{}\n", format_real(x), format_real(d)));
        }
    }
    out
}

/// `parameter,level,posterior,oracle` rows.
pub fn qq_csv(rows: &[(String, Vec<QqPoint>)]) -> String {
    let mut out = String::from("parameter,level,posterior,oracle\n");
    for (name, points) in rows {
        for p in points {
            out.push_str(&format!(
                "{name},{},{},{}\n",
                format_real(p.level),
                format_real(p.posterior),
                format_real(p.oracle)
            ));
        }
    }
    out
}
