use serde::Serialize;

use crate::appearance::{DataTermTable, SmoothnessWeights};
use crate::grid::Labeling;
use crate::hedgehog::{check_feasibility, HedgehogConstraints};
use crate::maxflow::INF;

/// Energy split into its data, smoothness and hedgehog parts.
///
/// Infinite components serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub data: f64,
    pub smoothness: f64,
    /// 0 for feasible labelings, infinite otherwise.
    pub hedgehog: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(data: f64, smoothness: f64, hedgehog: f64) -> Self {
        EnergyBreakdown {
            data,
            smoothness,
            hedgehog,
            total: data + smoothness + hedgehog,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

pub fn total_energy(
    labeling: &Labeling,
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> EnergyBreakdown {
    let a = labeling.assignment();
    let data_sum: f64 = a.iter().enumerate().map(|(p, &l)| data.get(p, l)).sum();
    let smoothness: f64 = weights
        .pairs()
        .iter()
        .filter(|pair| a[pair.p] != a[pair.q])
        .map(|pair| weights.cost(pair))
        .sum();
    let hedgehog = if check_feasibility(labeling, constraints).is_ok() {
        0.0
    } else {
        INF
    };
    EnergyBreakdown::new(data_sum, smoothness, hedgehog)
}
