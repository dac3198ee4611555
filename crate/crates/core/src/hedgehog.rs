//! Hedgehog shape constraints as directed infinite-cost pixel edges.
//!
//! A segment respects the constraint of a label when it is closed under that
//! label's edge set: `p` in the segment and `p -> q` in the set imply `q` in
//! the segment. Edges are selected by testing lattice offsets against the
//! polar cone of the allowed-normal cone around each pixel's field vector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::distance::VectorField;
use crate::error::{Error, Result, Violation};
use crate::grid::{Grid, LabelId, Labeling, NeighborhoodSystem};

const UNIT_TOLERANCE: f64 = 1e-6;
const DEGENERATE_MIDPOINT: f64 = 1e-9;

/// Half-angle of the allowed-normal cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeParams {
    theta: f64,
}

impl ConeParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
            return Err(Error::invalid(format!("theta {theta} outside [0, pi/2]")));
        }
        Ok(ConeParams { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Equivalent dot-product threshold `cos(theta)` on allowed normals.
    pub fn tau(&self) -> f64 {
        self.theta.cos()
    }

    /// Direction `e` lies in the polar cone around `v` iff `<e, v> <= -sin(theta)`.
    #[inline]
    pub fn polar_contains(&self, v: &[f64], e: &[f64]) -> bool {
        dot(v, e) <= -self.theta.sin()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!("{what} has norm {n}, expected unit length")));
    }
    Ok(())
}

/// Polar-cone membership of direction `e` for the cone of half-angle `theta` around `v`.
pub fn polar_cone_contains(v: &[f64], e: &[f64], theta: f64) -> Result<bool> {
    if v.len() != e.len() {
        return Err(Error::invalid("vector dimensions differ"));
    }
    check_unit(v, "cone axis")?;
    check_unit(e, "edge direction")?;
    Ok(ConeParams::new(theta)?.polar_contains(v, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeTag {
    Cone,
    EmptyConeFix,
}

impl EdgeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeTag::Cone => "cone",
            EdgeTag::EmptyConeFix => "empty-cone-fix",
        }
    }
}

/// Directed edge `from -> to`: `from` in the segment forces `to` into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConstraintEdge {
    pub from: usize,
    pub to: usize,
    pub tag: EdgeTag,
}

/// Constraint edges of one label, sorted by `(from, to)` without duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEdgeSet {
    grid: Grid,
    cone: ConeParams,
    edges: Vec<ConstraintEdge>,
    pruned: bool,
    cone_fixed: bool,
}

impl ConstraintEdgeSet {
    pub fn empty(grid: Grid, cone: ConeParams) -> Self {
        ConstraintEdgeSet {
            grid,
            cone,
            edges: Vec::new(),
            pruned: false,
            cone_fixed: false,
        }
    }

    fn canonicalize(&mut self) {
        self.edges.sort();
        self.edges.dedup_by_key(|e| (e.from, e.to));
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cone(&self) -> ConeParams {
        self.cone
    }

    pub fn edges(&self) -> &[ConstraintEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn was_pruned(&self) -> bool {
        self.pruned
    }

    pub fn was_cone_fixed(&self) -> bool {
        self.cone_fixed
    }

    pub fn outgoing(&self, p: usize) -> &[ConstraintEdge] {
        let lo = self.edges.partition_point(|e| e.from < p);
        let hi = self.edges.partition_point(|e| e.from <= p);
        &self.edges[lo..hi]
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.outgoing(from).iter().any(|e| e.to == to)
    }

    /// Copy without the edges leaving any of `sources`.
    pub fn without_sources(&self, sources: &BTreeSet<usize>) -> Self {
        ConstraintEdgeSet {
            edges: self
                .edges
                .iter()
                .filter(|e| !sources.contains(&e.from))
                .copied()
                .collect(),
            ..self.clone()
        }
    }

    /// Unit direction from `from` to `to` on the lattice.
    fn direction(&self, from: usize, to: usize, a: &mut [usize], b: &mut [usize]) -> Vec<f64> {
        self.grid.coords_into(from, a);
        self.grid.coords_into(to, b);
        let raw: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| y as f64 - x as f64).collect();
        let n = dot(&raw, &raw).sqrt();
        raw.into_iter().map(|x| x / n).collect()
    }

    /// Line-oriented text dump: `(r, c) -> (r, c) tag`, one edge per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt = |c: Vec<usize>| {
            let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            format!("({})", parts.join(", "))
        };
        for e in &self.edges {
            let p = fmt(self.grid.coords(e.from).expect("edge endpoints are in range"));
            let q = fmt(self.grid.coords(e.to).expect("edge endpoints are in range"));
            let _ = writeln!(out, "{p} -> {q} {}", e.tag.as_str());
        }
        out
    }

    /// Edges `p -> q` with `p` labeled `label` and `q` not.
    pub fn violations(&self, labeling: &Labeling, label: LabelId) -> Vec<Violation> {
        let a = labeling.assignment();
        self.edges
            .iter()
            .filter(|e| a[e.from] == label && a[e.to] != label)
            .map(|&edge| Violation { label, edge })
            .collect()
    }
}

fn check_dims(field: &VectorField, nbhd: &NeighborhoodSystem) -> Result<()> {
    if field.grid().ndim() != nbhd.dim() {
        return Err(Error::invalid(format!(
            "{}D field used with a {}D neighborhood",
            field.grid().ndim(),
            nbhd.dim()
        )));
    }
    Ok(())
}

/// Raw edge set: `p -> q` for each neighbor pair whose direction lies in the
/// polar cone at `p` or in the polar cone at `q`.
pub fn build_constraint_edges(
    field: &VectorField,
    nbhd: &NeighborhoodSystem,
    cone: ConeParams,
) -> Result<ConstraintEdgeSet> {
    check_dims(field, nbhd)?;
    let grid = field.grid().clone();
    let mut set = ConstraintEdgeSet::empty(grid.clone(), cone);
    let mut coords = vec![0; grid.ndim()];
    for p in 0..grid.len() {
        grid.coords_into(p, &mut coords);
        let vp = field.get(p);
        for o in nbhd.offsets() {
            let Some(q) = grid.shifted(&coords, &o.delta) else {
                continue;
            };
            let at_p = vp.is_some_and(|v| cone.polar_contains(v, &o.unit));
            let at_q = || field.get(q).is_some_and(|v| cone.polar_contains(v, &o.unit));
            if at_p || at_q() {
                set.edges.push(ConstraintEdge {
                    from: p,
                    to: q,
                    tag: EdgeTag::Cone,
                });
            }
        }
    }
    set.canonicalize();
    Ok(set)
}

/// Drops cone edges whose direction is outside the polar cone of the
/// interpolated orientation `normalize(v_p + v_q)`. Edges with an undefined
/// endpoint or a degenerate (near-zero) vector sum are kept.
pub fn prune_conflicting_edges(
    edges: &ConstraintEdgeSet,
    field: &VectorField,
    nbhd: &NeighborhoodSystem,
    cone: ConeParams,
) -> Result<ConstraintEdgeSet> {
    check_dims(field, nbhd)?;
    field.ensure_grid(edges.grid()).map_err(|e| Error::invalid(e.to_string()))?;
    let n = edges.grid.ndim();
    let (mut a, mut b) = (vec![0; n], vec![0; n]);
    let mut kept = Vec::with_capacity(edges.len());
    for &e in &edges.edges {
        let keep = match (e.tag, field.get(e.from), field.get(e.to)) {
            (EdgeTag::Cone, Some(vp), Some(vq)) => {
                let sum: Vec<f64> = vp.iter().zip(vq).map(|(x, y)| x + y).collect();
                let norm = dot(&sum, &sum).sqrt();
                if norm < DEGENERATE_MIDPOINT {
                    true
                } else {
                    let mid: Vec<f64> = sum.iter().map(|x| x / norm).collect();
                    let dir = edges.direction(e.from, e.to, &mut a, &mut b);
                    cone.polar_contains(&mid, &dir)
                }
            }
            _ => true,
        };
        if keep {
            kept.push(e);
        }
    }
    Ok(ConstraintEdgeSet {
        grid: edges.grid.clone(),
        cone,
        edges: kept,
        pruned: true,
        cone_fixed: edges.cone_fixed,
    })
}

/// For every pixel with a defined vector but no outgoing edge inside its own
/// polar cone, adds the edge towards the most antiparallel neighbor offset.
pub fn apply_empty_cone_fix(
    edges: &ConstraintEdgeSet,
    field: &VectorField,
    nbhd: &NeighborhoodSystem,
    cone: ConeParams,
) -> Result<ConstraintEdgeSet> {
    check_dims(field, nbhd)?;
    field.ensure_grid(edges.grid()).map_err(|e| Error::invalid(e.to_string()))?;
    let grid = &edges.grid;
    let n = grid.ndim();
    let (mut a, mut b) = (vec![0; n], vec![0; n]);
    let mut coords = vec![0; n];
    let mut added = Vec::new();
    for p in 0..grid.len() {
        let Some(vp) = field.get(p) else { continue };
        let covered = edges
            .outgoing(p)
            .iter()
            .any(|e| cone.polar_contains(vp, &edges.direction(p, e.to, &mut a, &mut b)));
        if covered {
            continue;
        }
        let best = nbhd
            .offsets()
            .iter()
            .min_by(|x, y| {
                dot(&x.unit, vp)
                    .total_cmp(&dot(&y.unit, vp))
                    .then_with(|| x.delta.cmp(&y.delta))
            })
            .expect("neighborhoods are non-empty");
        grid.coords_into(p, &mut coords);
        let Some(q) = grid.shifted(&coords, &best.delta) else {
            continue;
        };
        if !edges.contains(p, q) {
            added.push(ConstraintEdge {
                from: p,
                to: q,
                tag: EdgeTag::EmptyConeFix,
            });
        }
    }
    let mut out = ConstraintEdgeSet {
        grid: grid.clone(),
        cone,
        edges: edges.edges.iter().copied().chain(added).collect(),
        pruned: edges.pruned,
        cone_fixed: true,
    };
    out.canonicalize();
    Ok(out)
}

/// Which repair stages run after the raw edge construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ConstraintOptions {
    pub prune: bool,
    pub empty_cone_fix: bool,
}

impl Default for ConstraintOptions {
    fn default() -> Self {
        ConstraintOptions {
            prune: true,
            empty_cone_fix: true,
        }
    }
}

/// Build, then prune, then fix empty cones.
pub fn build_label_constraints(
    field: &VectorField,
    nbhd: &NeighborhoodSystem,
    cone: ConeParams,
    options: ConstraintOptions,
) -> Result<ConstraintEdgeSet> {
    let mut set = build_constraint_edges(field, nbhd, cone)?;
    if options.prune {
        set = prune_conflicting_edges(&set, field, nbhd, cone)?;
    }
    if options.empty_cone_fix {
        set = apply_empty_cone_fix(&set, field, nbhd, cone)?;
    }
    Ok(set)
}

/// Constraint edge sets keyed by the label they constrain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HedgehogConstraints {
    per_label: BTreeMap<LabelId, ConstraintEdgeSet>,
}

impl HedgehogConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: LabelId, edges: ConstraintEdgeSet) {
        self.per_label.insert(label, edges);
    }

    pub fn get(&self, label: LabelId) -> Option<&ConstraintEdgeSet> {
        self.per_label.get(&label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, &ConstraintEdgeSet)> {
        self.per_label.iter().map(|(&l, s)| (l, s))
    }

    pub fn is_empty(&self) -> bool {
        self.per_label.values().all(|s| s.is_empty())
    }

    pub fn edge_count(&self) -> usize {
        self.per_label.values().map(|s| s.len()).sum()
    }
}

/// All violated edges: `p -> q` in some label `k`'s set with `f_p = k`, `f_q != k`.
pub fn check_feasibility(
    labeling: &Labeling,
    constraints: &HedgehogConstraints,
) -> std::result::Result<(), Vec<Violation>> {
    let violations: Vec<Violation> = constraints
        .iter()
        .flat_map(|(label, set)| set.violations(labeling, label))
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
