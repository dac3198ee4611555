//! Exhaustive reference solvers for tiny problems.
//!
//! These evaluate the energy directly from its definition, without sharing
//! code with the graph construction, and are meant for testing only.

use std::collections::BTreeMap;

use crate::appearance::{DataTermTable, SmoothnessWeights};
use crate::distance::VectorField;
use crate::error::{Error, Result};
use crate::grid::{GridImage, LabelId, Labeling, ScribbleSet};
use crate::hedgehog::HedgehogConstraints;

use super::energy::EnergyBreakdown;
use super::pipeline::{Setup, SolverConfig};

/// Largest pixel count accepted by the exhaustive solvers.
pub const MAX_ORACLE_PIXELS: usize = 16;
/// Largest label count accepted by [`brute_force_segment`].
pub const MAX_ORACLE_LABELS: usize = 3;

/// Energy straight from the definition: sum of data costs, `lambda * w` for
/// every cut pair, and infinity if any edge `p -> q` of label `k` has
/// `f_p = k` while `f_q != k`.
pub fn naive_energy(
    assignment: &[LabelId],
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> f64 {
    let mut e = 0.0;
    for (p, &l) in assignment.iter().enumerate() {
        e += data.get(p, l);
    }
    for pair in weights.pairs() {
        if assignment[pair.p] != assignment[pair.q] {
            e += weights.lambda() * pair.weight;
        }
    }
    for (label, set) in constraints.iter() {
        for edge in set.edges() {
            if assignment[edge.from] == label && assignment[edge.to] != label {
                return f64::INFINITY;
            }
        }
    }
    e
}

/// Minimum energy over every labeling reachable by one expansion of `alpha`.
pub fn brute_force_move(
    current: &Labeling,
    alpha: LabelId,
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> Result<(Vec<LabelId>, f64)> {
    let f = current.assignment();
    let free: Vec<usize> = (0..f.len()).filter(|&p| f[p] != alpha).collect();
    if free.len() > MAX_ORACLE_PIXELS {
        return Err(Error::invalid(format!(
            "brute force move limited to {MAX_ORACLE_PIXELS} free pixels"
        )));
    }
    let mut best = (f.to_vec(), naive_energy(f, data, weights, constraints));
    let mut trial = f.to_vec();
    for mask in 1u32..(1u32 << free.len()) {
        for (bit, &p) in free.iter().enumerate() {
            trial[p] = if mask >> bit & 1 == 1 { alpha } else { f[p] };
        }
        let e = naive_energy(&trial, data, weights, constraints);
        if e < best.1 {
            best = (trial.clone(), e);
        }
    }
    Ok(best)
}

/// Global minimum over all labelings of at most 16 pixels and 3 labels.
pub fn brute_force_segment(
    labels: &[LabelId],
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> Result<(Vec<LabelId>, f64)> {
    let n = data.pixel_count();
    if n > MAX_ORACLE_PIXELS || labels.len() > MAX_ORACLE_LABELS || labels.is_empty() {
        return Err(Error::invalid(format!(
            "brute force segmentation limited to {MAX_ORACLE_PIXELS} pixels and {MAX_ORACLE_LABELS} labels"
        )));
    }
    let total = (labels.len() as u64).pow(n as u32);
    let mut trial = vec![labels[0]; n];
    let mut best = (trial.clone(), f64::INFINITY);
    for code in 0..total {
        let mut c = code;
        for slot in trial.iter_mut() {
            *slot = labels[(c % labels.len() as u64) as usize];
            c /= labels.len() as u64;
        }
        let e = naive_energy(&trial, data, weights, constraints);
        if e < best.1 {
            best = (trial.clone(), e);
        }
    }
    Ok(best)
}

/// Exhaustive counterpart of `segment` with the seed-fitted color models
/// (a single outer iteration); seeds stay pinned through the data term.
pub fn brute_force_instance(
    image: &GridImage,
    scribbles: &ScribbleSet,
    config: &SolverConfig,
    external_fields: &BTreeMap<LabelId, VectorField>,
) -> Result<(Labeling, EnergyBreakdown)> {
    let setup = Setup::prepare(image, scribbles, config, external_fields)?;
    let problem = setup.problem(image, scribbles)?;
    let (assignment, _) = brute_force_segment(&setup.labels, &problem.data, &problem.weights, &problem.constraints)?;
    let labeling = setup.init.with_assignment(assignment)?;
    let energy = problem.energy(&labeling);
    Ok((labeling, energy))
}
