//! End-to-end segmentation: scribble fields, constraints, and the EM loop
//! alternating alpha-expansion with color-model refits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::appearance::{
    data_term, fit_models, smoothness_weights, DataTermTable, ModelSet, SmoothnessWeights,
    DEFAULT_GMM_COMPONENTS,
};
use crate::distance::{euclidean_distance_transform, gradient_field, VectorField, DEFAULT_GRADIENT_EPS};
use crate::error::{Error, Result};
use crate::grid::{validate_scribbles, Grid, GridImage, LabelId, Labeling, NeighborhoodSystem, ScribbleSet};
use crate::hedgehog::{build_label_constraints, check_feasibility, ConeParams, ConstraintOptions, HedgehogConstraints};

use super::energy::{total_energy, EnergyBreakdown};
use super::moves::{expansion_move, ENERGY_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Cone half-angle in radians, within `[0, pi/2]`.
    pub theta: f64,
    pub lambda: f64,
    /// Neighborhood size; `None` picks 8 in 2D and 26 in 3D.
    pub neighborhood: Option<usize>,
    pub gmm_components: usize,
    pub max_outer_iterations: usize,
    /// Labels carrying hedgehog constraints; `None` means every non-background label.
    pub constrained_labels: Option<Vec<LabelId>>,
    pub seed: u64,
    pub constraints: ConstraintOptions,
    pub background: LabelId,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta: std::f64::consts::FRAC_PI_4,
            lambda: 2.0,
            neighborhood: None,
            gmm_components: DEFAULT_GMM_COMPONENTS,
            max_outer_iterations: 10,
            constrained_labels: None,
            seed: 0,
            constraints: ConstraintOptions::default(),
            background: LabelId(1),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        ConeParams::new(self.theta)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.gmm_components == 0 {
            return Err(Error::invalid("gmm_components must be at least 1"));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::invalid("max_outer_iterations must be at least 1"));
        }
        Ok(())
    }

    pub fn neighborhood_for(&self, ndim: usize) -> Result<NeighborhoodSystem> {
        let size = self
            .neighborhood
            .unwrap_or(if ndim == 2 { 8 } else { 26 });
        NeighborhoodSystem::build(ndim, size)
    }

    fn is_constrained(&self, label: LabelId) -> bool {
        match &self.constrained_labels {
            Some(list) => list.contains(&label),
            None => label != self.background,
        }
    }
}

/// Normalized distance-map gradient of a scribble, undefined on the scribble itself.
pub fn scribble_field(seeds: &[usize], grid: &Grid) -> Result<VectorField> {
    let d = euclidean_distance_transform(seeds, grid)?;
    Ok(gradient_field(&d, DEFAULT_GRADIENT_EPS).masked(seeds.iter().copied()))
}

/// Labels in visit order: scribble labels and the background, ascending.
pub fn label_order(scribbles: &ScribbleSet, background: LabelId) -> Vec<LabelId> {
    let mut labels: Vec<LabelId> = scribbles.labels().collect();
    if !labels.contains(&background) {
        labels.push(background);
    }
    labels.sort();
    labels
}

/// Per-label constraint edge sets. External fields replace the scribble
/// field of their label. No edge starts at one of the label's own seeds, so
/// labeling everything but the seeds as background is always feasible.
pub fn build_constraints(
    grid: &Grid,
    scribbles: &ScribbleSet,
    config: &SolverConfig,
    external_fields: &BTreeMap<LabelId, VectorField>,
) -> Result<HedgehogConstraints> {
    let nbhd = config.neighborhood_for(grid.ndim())?;
    let cone = ConeParams::new(config.theta)?;
    let mut out = HedgehogConstraints::new();
    for label in label_order(scribbles, config.background) {
        if !config.is_constrained(label) {
            continue;
        }
        let seeds = scribbles.seeds(label).cloned().unwrap_or_default();
        let field = match external_fields.get(&label) {
            Some(f) => {
                f.ensure_grid(grid)?;
                f.clone().masked(seeds.iter().copied())
            }
            None if seeds.is_empty() => continue,
            None => scribble_field(&seeds.iter().copied().collect::<Vec<_>>(), grid)?,
        };
        // Seeds are pinned to the label, so nothing may be forced out of them.
        let edges = build_label_constraints(&field, &nbhd, cone, config.constraints)?.without_sources(&seeds);
        out.insert(label, edges);
    }
    Ok(out)
}

/// Background everywhere except seed pixels, which carry their own label.
pub fn initial_labeling(grid: &Grid, labels: &[LabelId], background: LabelId, scribbles: &ScribbleSet) -> Result<Labeling> {
    let assignment = scribbles
        .pin_map(grid.len())
        .into_iter()
        .map(|s| s.unwrap_or(background))
        .collect();
    Labeling::new(grid.clone(), labels.to_vec(), background, assignment)
}

/// One recorded energy value of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    /// Expansion cycle within the outer iteration.
    pub inner: usize,
    /// Expanded label; `None` for the energy recorded before the first move.
    pub alpha: Option<LabelId>,
    pub energy: EnergyBreakdown,
    pub changed_pixels: usize,
}

pub fn write_log_jsonl(log: &[IterationRecord], w: &mut impl Write) -> std::io::Result<()> {
    for rec in log {
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Fixed-energy problem: data terms, Potts weights and constraints.
#[derive(Debug, Clone)]
pub struct EnergyProblem {
    pub labels: Vec<LabelId>,
    pub data: DataTermTable,
    pub weights: SmoothnessWeights,
    pub constraints: HedgehogConstraints,
}

impl EnergyProblem {
    pub fn energy(&self, labeling: &Labeling) -> EnergyBreakdown {
        total_energy(labeling, &self.data, &self.weights, &self.constraints)
    }

    /// Cycles expansions over the labels until a full cycle stops lowering the energy.
    pub fn minimize(&self, init: Labeling, outer: usize, log: &mut Vec<IterationRecord>) -> Result<(Labeling, EnergyBreakdown)> {
        let mut labeling = init;
        let mut energy = self.energy(&labeling);
        log.push(IterationRecord {
            outer,
            inner: 0,
            alpha: None,
            energy,
            changed_pixels: 0,
        });
        for inner in 0.. {
            let cycle_start = energy.total;
            for &alpha in &self.labels {
                let step = expansion_move(&labeling, alpha, &self.data, &self.weights, &self.constraints)?;
                labeling = step.labeling;
                energy = step.energy;
                log.push(IterationRecord {
                    outer,
                    inner,
                    alpha: Some(alpha),
                    energy,
                    changed_pixels: step.changed_pixels,
                });
            }
            if cycle_start - energy.total <= ENERGY_TOLERANCE {
                break;
            }
        }
        Ok((labeling, energy))
    }
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub labeling: Labeling,
    pub energy: EnergyBreakdown,
    pub log: Vec<IterationRecord>,
    pub constraints: HedgehogConstraints,
    pub models: ModelSet,
    pub outer_iterations: usize,
}

/// Inputs shared by the solver and the exhaustive oracle.
#[derive(Debug, Clone)]
pub struct Setup {
    pub labels: Vec<LabelId>,
    pub init: Labeling,
    pub weights: SmoothnessWeights,
    pub constraints: HedgehogConstraints,
    pub models: ModelSet,
}

impl Setup {
    pub fn prepare(
        image: &GridImage,
        scribbles: &ScribbleSet,
        config: &SolverConfig,
        external_fields: &BTreeMap<LabelId, VectorField>,
    ) -> Result<Setup> {
        config.validate()?;
        let grid = image.grid();
        validate_scribbles(scribbles, grid, config.background).map_err(Error::InvalidScribbles)?;
        let labels = label_order(scribbles, config.background);
        if labels.len() < 2 {
            return Err(Error::invalid("segmentation needs at least two labels"));
        }
        let constraints = build_constraints(grid, scribbles, config, external_fields)?;
        let init = initial_labeling(grid, &labels, config.background, scribbles)?;
        if let Err(violations) = check_feasibility(&init, &constraints) {
            return Err(Error::Infeasible { violations });
        }
        let nbhd = config.neighborhood_for(grid.ndim())?;
        let weights = smoothness_weights(image, &nbhd, config.lambda)?;
        let seed_samples: BTreeMap<LabelId, Vec<usize>> = scribbles
            .iter()
            .map(|(l, s)| (l, s.iter().copied().collect()))
            .collect();
        let models = fit_models(image, &seed_samples, &labels, config.gmm_components, config.seed)?;
        Ok(Setup {
            labels,
            init,
            weights,
            constraints,
            models,
        })
    }

    pub fn problem(&self, image: &GridImage, scribbles: &ScribbleSet) -> Result<EnergyProblem> {
        Ok(EnergyProblem {
            labels: self.labels.clone(),
            data: data_term(image, &self.labels, &self.models, scribbles)?,
            weights: self.weights.clone(),
            constraints: self.constraints.clone(),
        })
    }
}

/// Full pipeline: all-background initialization with seeds pinned, seed-fitted color
/// models, then alternating expansion cycles and model refits until the
/// energy stops decreasing or `max_outer_iterations` is reached.
pub fn segment(
    image: &GridImage,
    scribbles: &ScribbleSet,
    config: &SolverConfig,
    external_fields: &BTreeMap<LabelId, VectorField>,
) -> Result<SegmentOutcome> {
    let Setup {
        labels,
        init,
        weights,
        constraints,
        mut models,
    } = Setup::prepare(image, scribbles, config, external_fields)?;
    let mut problem = EnergyProblem {
        labels: labels.clone(),
        data: data_term(image, &labels, &models, scribbles)?,
        weights,
        constraints,
    };
    let mut log = Vec::new();
    let mut labeling = init;
    let mut energy;
    let mut previous: Option<f64> = None;
    let mut outer = 0;
    loop {
        (labeling, energy) = problem.minimize(labeling, outer, &mut log)?;
        outer += 1;
        let improved = previous.is_none_or(|prev| prev - energy.total > ENERGY_TOLERANCE);
        if !improved || outer >= config.max_outer_iterations {
            break;
        }
        previous = Some(energy.total);
        let mut samples: BTreeMap<LabelId, Vec<usize>> = BTreeMap::new();
        for (p, &l) in labeling.assignment().iter().enumerate() {
            samples.entry(l).or_default().push(p);
        }
        models = fit_models(image, &samples, &labels, config.gmm_components, config.seed)?;
        problem.data = data_term(image, &labels, &models, scribbles)?;
    }
    Ok(SegmentOutcome {
        labeling,
        energy,
        log,
        constraints: problem.constraints,
        models,
        outer_iterations: outer,
    })
}
