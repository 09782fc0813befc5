use serde::{Deserialize, Serialize};

use super::distance::DistanceSpec;
use crate::error::{Error, Result};
use crate::model::{Model, PriorSource};
use crate::tables::{
    build_reference_table_counted, Observation, ReferenceTable, SimulationCount, WeightedParticles,
    DEFAULT_SIMULATION_RETRIES,
};

/// Which simulations to retain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    /// The `k` closest, ties broken by simulation index.
    Closest(usize),
    /// Every simulation with distance strictly below ε.
    Within(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionOutput {
    /// Retained parameters with uniform weights.
    pub particles: WeightedParticles,
    /// Table rows retained, closest first.
    pub retained: Vec<usize>,
    pub distances: Vec<f64>,
    pub simulations: SimulationCount,
}

impl RejectionOutput {
    /// Largest retained distance.
    pub fn threshold(&self) -> f64 {
        self.distances.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Order the rows of an existing table by distance to `obs` and retain some.
pub fn abc_rejection_from_table(
    table: &ReferenceTable,
    obs: &Observation,
    distance: &DistanceSpec,
    keep: Keep,
) -> Result<RejectionOutput> {
    obs.check_against(table.n_stats())?;
    distance.validate(table.n_stats())?;
    let d: Vec<f64> = (0..table.n_rows())
        .map(|i| distance.distance(table.stat_row(i), obs.values()))
        .collect();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let retained: Vec<usize> = match keep {
        Keep::Closest(k) => {
            if k == 0 || k > d.len() {
                return Err(Error::InvalidArgument(format!("cannot keep {k} of {} simulations", d.len())));
            }
            order[..k].to_vec()
        }
        Keep::Within(eps) => {
            let kept: Vec<usize> = order.into_iter().take_while(|&i| d[i] < eps).collect();
            if kept.is_empty() {
                return Err(Error::NoAcceptance { epsilon: eps });
            }
            kept
        }
    };
    let params = retained.iter().flat_map(|&i| table.param_row(i).to_vec()).collect();
    Ok(RejectionOutput {
        particles: WeightedParticles::uniform(params, table.param_names().to_vec())?,
        distances: retained.iter().map(|&i| d[i]).collect(),
        retained,
        simulations: SimulationCount::default(),
    })
}

/// Simulate `n` prior draws and keep the closest ones.
pub fn abc_rejection(
    model: &dyn Model,
    n: usize,
    distance: &DistanceSpec,
    keep: Keep,
    obs: &Observation,
    seed: u64,
) -> Result<RejectionOutput> {
    let (table, count) = build_reference_table_counted(model, &PriorSource(model), n, seed, DEFAULT_SIMULATION_RETRIES)?;
    let mut out = abc_rejection_from_table(&table, obs, distance, keep)?;
    out.simulations = count;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ReferenceTable {
        ReferenceTable::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![5.0, 1.0, 3.0, 1.0, 9.0],
            vec!["theta".into()],
            vec!["s".into()],
        )
        .unwrap()
    }

    #[test]
    fn closest_with_stable_ties() {
        let out = abc_rejection_from_table(&table(), &Observation(vec![2.0]), &DistanceSpec::euclidean(), Keep::Closest(3)).unwrap();
        assert_eq!(out.retained, vec![1, 2, 3]);
        assert_eq!(out.threshold(), 1.0);
        assert_eq!(out.particles.weights(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn epsilon_modes() {
        let t = table();
        let obs = Observation(vec![2.0]);
        let all = abc_rejection_from_table(&t, &obs, &DistanceSpec::euclidean(), Keep::Within(f64::INFINITY)).unwrap();
        assert_eq!(all.particles.len(), 5);
        let none = abc_rejection_from_table(&t, &obs, &DistanceSpec::euclidean(), Keep::Within(0.5));
        assert!(matches!(none, Err(Error::NoAcceptance { .. })));
        assert!(abc_rejection_from_table(&t, &obs, &DistanceSpec::euclidean(), Keep::Closest(0)).is_err());
    }
}
