//! Shape-constrained alpha-expansion moves.
//!
//! Binary convention: `x_p = 0` keeps the current label and places `p` on the
//! source side of the cut; `x_p = 1` switches `p` to `alpha` (sink side).

use crate::appearance::{DataTermTable, SmoothnessWeights};
use crate::error::{Error, Result};
use crate::grid::{LabelId, Labeling};
use crate::hedgehog::{check_feasibility, HedgehogConstraints};
use crate::maxflow::{FlowGraph, Side, INF};

use super::energy::{total_energy, EnergyBreakdown};

/// Energy decreases smaller than this are treated as no improvement.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Pairwise move term as `[[g(0,0), g(0,1)], [g(1,0), g(1,1)]]`.
type PairTerm = [[f64; 2]; 2];

fn is_submodular(g: &PairTerm) -> bool {
    g[0][0].is_finite() && g[1][1].is_finite() && g[0][0] + g[1][1] <= g[0][1] + g[1][0]
}

/// Counts of each kind of term layered into a move graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveGraphStats {
    pub auxiliary_nodes: usize,
    /// Arcs enforcing alpha's own constraints.
    pub alpha_constraint_arcs: usize,
    /// Arcs preserving constraints of other labels inside their current support.
    pub preserved_constraint_arcs: usize,
}

/// Binary move problem for expanding `alpha` from a feasible labeling.
#[derive(Debug, Clone)]
pub struct MoveProblem<'a> {
    pub alpha: LabelId,
    pub current: &'a Labeling,
    pub graph: FlowGraph,
    pub stats: MoveGraphStats,
    /// `(p, q)` endpoints of every arc preserving another label's constraint.
    pub preserved_arcs: Vec<(usize, usize)>,
}

impl MoveProblem<'_> {
    /// Labeling selected by a cut over the move graph.
    pub fn decode(&self, side: &[Side]) -> Labeling {
        let assignment = self
            .current
            .assignment()
            .iter()
            .enumerate()
            .map(|(p, &l)| match side[p] {
                Side::Source => l,
                Side::Sink => self.alpha,
            })
            .collect();
        self.current
            .with_assignment(assignment)
            .expect("alpha is a valid label")
    }
}

pub fn build_move_graph<'a>(
    current: &'a Labeling,
    alpha: LabelId,
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> Result<MoveProblem<'a>> {
    if !current.labels().contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} is not a label of the labeling")));
    }
    if let Err(violations) = check_feasibility(current, constraints) {
        return Err(Error::Infeasible { violations });
    }
    let f = current.assignment();
    let n = f.len();
    let mut graph = FlowGraph::with_nodes(n);
    let mut stats = MoveGraphStats::default();

    for (p, &label) in f.iter().enumerate() {
        let keep = data.get(p, label);
        if !keep.is_finite() {
            return Err(Error::invalid(format!(
                "current labeling has infinite data cost at pixel {p}"
            )));
        }
        if label == alpha {
            // Already alpha: both choices give the same label; fix x_p = 1.
            graph.add_terminal_caps(p, data.get(p, alpha), INF)?;
        } else {
            graph.add_terminal_caps(p, data.get(p, alpha), keep)?;
        }
    }

    for pair in weights.pairs() {
        let c = weights.cost(pair);
        let (p, q) = (pair.p, pair.q);
        let (a, b) = (f[p], f[q]);
        let potts = |x: LabelId, y: LabelId| if x != y { c } else { 0.0 };
        let g: PairTerm = [[potts(a, b), potts(a, alpha)], [potts(alpha, b), 0.0]];
        if !is_submodular(&g) {
            return Err(Error::NotSubmodular { p, q });
        }
        if c == 0.0 {
            continue;
        }
        match (a == alpha, b == alpha) {
            (true, true) => {}
            (true, false) => graph.add_terminal_caps(q, 0.0, c)?,
            (false, true) => graph.add_terminal_caps(p, 0.0, c)?,
            (false, false) if a == b => graph.add_arc(p, q, c, c)?,
            (false, false) => {
                let aux = graph.add_node();
                stats.auxiliary_nodes += 1;
                graph.add_arc(p, aux, g[0][1], g[0][1])?;
                graph.add_arc(aux, q, g[1][0], g[1][0])?;
                graph.add_terminal_caps(aux, 0.0, g[0][0])?;
            }
        }
    }

    let mut preserved_arcs = Vec::new();
    for (label, set) in constraints.iter() {
        for e in set.edges() {
            let (p, q) = (e.from, e.to);
            let switched = |x: usize, bit: usize| if bit == 1 { alpha } else { f[x] };
            if label == alpha {
                // Infinite when x_p = 1 and x_q = 0.
                let g: PairTerm = std::array::from_fn(|xp| {
                    std::array::from_fn(|xq| {
                        if switched(p, xp) == alpha && switched(q, xq) != alpha {
                            INF
                        } else {
                            0.0
                        }
                    })
                });
                if !is_submodular(&g) {
                    return Err(Error::NotSubmodular { p, q });
                }
                graph.add_arc(q, p, INF, 0.0)?;
                stats.alpha_constraint_arcs += 1;
            } else if f[p] == label && f[q] == label {
                // Infinite when x_q = 1 and x_p = 0.
                let g: PairTerm = std::array::from_fn(|xp| {
                    std::array::from_fn(|xq| {
                        if switched(p, xp) == label && switched(q, xq) != label {
                            INF
                        } else {
                            0.0
                        }
                    })
                });
                if !is_submodular(&g) {
                    return Err(Error::NotSubmodular { p, q });
                }
                graph.add_arc(p, q, INF, 0.0)?;
                stats.preserved_constraint_arcs += 1;
                preserved_arcs.push((p, q));
            }
        }
    }

    Ok(MoveProblem {
        alpha,
        current,
        graph,
        stats,
        preserved_arcs,
    })
}

#[derive(Debug, Clone)]
pub struct MoveOutcome {
    pub labeling: Labeling,
    pub energy: EnergyBreakdown,
    pub changed_pixels: usize,
}

/// Optimal expansion of `alpha`; returns `current` unchanged unless the
/// energy drops by more than [`ENERGY_TOLERANCE`].
pub fn expansion_move(
    current: &Labeling,
    alpha: LabelId,
    data: &DataTermTable,
    weights: &SmoothnessWeights,
    constraints: &HedgehogConstraints,
) -> Result<MoveOutcome> {
    let before = total_energy(current, data, weights, constraints);
    let problem = build_move_graph(current, alpha, data, weights, constraints)?;
    let cut = problem.graph.solve();
    if !cut.is_finite() {
        return Err(Error::Internal(format!(
            "expansion of label {alpha} has no finite cut from a feasible labeling"
        )));
    }
    let candidate = problem.decode(&cut.side);
    let energy = total_energy(&candidate, data, weights, constraints);
    if !energy.is_finite() || energy.total > before.total + ENERGY_TOLERANCE {
        return Err(Error::Internal(format!(
            "expansion of label {alpha} raised the energy from {} to {}",
            before.total, energy.total
        )));
    }
    if energy.total < before.total - ENERGY_TOLERANCE {
        let changed_pixels = candidate
            .assignment()
            .iter()
            .zip(current.assignment())
            .filter(|(a, b)| a != b)
            .count();
        Ok(MoveOutcome {
            labeling: candidate,
            energy,
            changed_pixels,
        })
    } else {
        Ok(MoveOutcome {
            labeling: current.clone(),
            energy: before,
            changed_pixels: 0,
        })
    }
}
