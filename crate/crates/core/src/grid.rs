//! Pixel lattices, neighborhood systems, labelings and scribbles.
//!
//! Pixels are linearized row-major with the last coordinate varying fastest.
//! A 2D image of `dims = [rows, cols]` therefore stores pixel `(r, c)` at
//! `r * cols + c`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of a 2D or 3D pixel lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Grid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if !(dims.len() == 2 || dims.len() == 3) {
            return Err(Error::invalid(format!(
                "grid must be 2D or 3D, got {} axes",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("grid extents must be positive: {dims:?}")));
        }
        let mut strides = vec![1; dims.len()];
        for axis in (0..dims.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * dims[axis + 1];
        }
        Ok(Grid {
            dims: dims.to_vec(),
            strides,
            len: dims.iter().product(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dims.len() {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.dims.len(),
                coords.len()
            )));
        }
        let mut idx = 0;
        for (axis, (&c, &d)) in coords.iter().zip(&self.dims).enumerate() {
            if c >= d {
                return Err(Error::invalid(format!(
                    "coordinate {c} out of range on axis {axis} (extent {d})"
                )));
            }
            idx += c * self.strides[axis];
        }
        Ok(idx)
    }

    pub fn coords(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.len {
            return Err(Error::invalid(format!(
                "pixel index {index} out of range (grid has {} pixels)",
                self.len
            )));
        }
        let mut out = vec![0; self.dims.len()];
        self.coords_into(index, &mut out);
        Ok(out)
    }

    /// Unchecked decode into a caller buffer; `index` must be in range.
    pub(crate) fn coords_into(&self, mut index: usize, out: &mut [usize]) {
        for (axis, stride) in self.strides.iter().enumerate() {
            out[axis] = index / stride;
            index %= stride;
        }
    }

    /// Index of `coords + delta` if it lies inside the grid.
    pub fn shifted(&self, coords: &[usize], delta: &[i32]) -> Option<usize> {
        let mut idx = 0;
        for axis in 0..self.dims.len() {
            let c = coords[axis] as i64 + delta[axis] as i64;
            if c < 0 || c >= self.dims[axis] as i64 {
                return None;
            }
            idx += c as usize * self.strides[axis];
        }
        Some(idx)
    }
}

impl TryFrom<Vec<usize>> for Grid {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Grid::new(&dims)
    }
}

impl From<Grid> for Vec<usize> {
    fn from(grid: Grid) -> Self {
        grid.dims
    }
}

/// Multi-channel image with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    grid: Grid,
    channels: usize,
    data: Vec<f64>,
}

impl GridImage {
    pub fn new(grid: Grid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("image must have at least one channel"));
        }
        if data.len() != grid.len() * channels {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {} x {} channels",
                data.len(),
                grid.len(),
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GridImage {
            grid,
            channels,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }
}

/// One lattice offset together with its Euclidean length and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Offset {
    pub delta: Vec<i32>,
    pub length: f64,
    pub unit: Vec<f64>,
}

impl Offset {
    fn new(delta: Vec<i32>) -> Self {
        let length = delta
            .iter()
            .map(|&d| (d as f64) * (d as f64))
            .sum::<f64>()
            .sqrt();
        let unit = delta.iter().map(|&d| d as f64 / length).collect();
        Offset {
            delta,
            length,
            unit,
        }
    }

    /// First non-zero component positive; selects one offset of each `±o` pair.
    pub fn is_forward(&self) -> bool {
        self.delta.iter().find(|&&d| d != 0).is_some_and(|&d| d > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSystem {
    dim: usize,
    offsets: Vec<Offset>,
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl NeighborhoodSystem {
    /// Canonical neighborhoods: 2D sizes 4, 8, 16, 32; 3D sizes 6, 26.
    ///
    /// In 2D the system consists of the `size` shortest integer offsets with
    /// coprime components, ordered by length and then by angle.
    pub fn build(dim: usize, size: usize) -> Result<Self> {
        let offsets = match (dim, size) {
            (2, 4 | 8 | 16 | 32) => {
                let mut cands: Vec<Offset> = (-3..=3)
                    .flat_map(|a| (-3..=3).map(move |b| (a, b)))
                    .filter(|&(a, b)| (a, b) != (0, 0) && gcd(a, b) == 1)
                    .map(|(a, b)| Offset::new(vec![a, b]))
                    .collect();
                cands.sort_by(|x, y| {
                    x.length.total_cmp(&y.length).then_with(|| {
                        let ax = (x.delta[1] as f64).atan2(x.delta[0] as f64);
                        let ay = (y.delta[1] as f64).atan2(y.delta[0] as f64);
                        ax.total_cmp(&ay)
                    })
                });
                cands.truncate(size);
                cands
            }
            (3, 6 | 26) => {
                let mut cands: Vec<Offset> = (-1..=1)
                    .flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| vec![a, b, c])))
                    .filter(|d| d.iter().any(|&x| x != 0))
                    .map(Offset::new)
                    .filter(|o| size == 26 || o.length == 1.0)
                    .collect();
                cands.sort_by(|x, y| {
                    x.length
                        .total_cmp(&y.length)
                        .then_with(|| x.delta.cmp(&y.delta))
                });
                cands
            }
            _ => {
                return Err(Error::invalid(format!(
                    "unsupported neighborhood: dim {dim}, size {size}"
                )))
            }
        };
        Ok(NeighborhoodSystem { dim, offsets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn forward_offsets(&self) -> impl Iterator<Item = &Offset> {
        self.offsets.iter().filter(|o| o.is_forward())
    }

    /// Calls `f(p, q, offset)` for every unordered neighbor pair exactly once.
    pub fn for_each_pair(&self, grid: &Grid, mut f: impl FnMut(usize, usize, &Offset)) {
        let mut coords = vec![0; grid.ndim()];
        for p in 0..grid.len() {
            grid.coords_into(p, &mut coords);
            for o in self.forward_offsets() {
                if let Some(q) = grid.shifted(&coords, &o.delta) {
                    f(p, q, o);
                }
            }
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LabelId(pub u8);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-pixel label assignment over an ordered label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    grid: Grid,
    labels: Vec<LabelId>,
    background: LabelId,
    assignment: Vec<LabelId>,
}

impl Labeling {
    pub fn new(
        grid: Grid,
        labels: Vec<LabelId>,
        background: LabelId,
        assignment: Vec<LabelId>,
    ) -> Result<Self> {
        if !labels.contains(&background) {
            return Err(Error::invalid(format!(
                "background label {background} missing from label set"
            )));
        }
        let distinct: BTreeSet<_> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::invalid("duplicate labels in label set"));
        }
        if assignment.len() != grid.len() {
            return Err(Error::invalid(format!(
                "assignment has {} entries, grid has {} pixels",
                assignment.len(),
                grid.len()
            )));
        }
        if let Some(l) = assignment.iter().find(|l| !labels.contains(l)) {
            return Err(Error::invalid(format!("assigned label {l} not in label set")));
        }
        Ok(Labeling {
            grid,
            labels,
            background,
            assignment,
        })
    }

    pub fn uniform(grid: Grid, labels: Vec<LabelId>, background: LabelId, label: LabelId) -> Result<Self> {
        let assignment = vec![label; grid.len()];
        Labeling::new(grid, labels, background, assignment)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn background(&self) -> LabelId {
        self.background
    }

    pub fn assignment(&self) -> &[LabelId] {
        &self.assignment
    }

    pub fn get(&self, p: usize) -> LabelId {
        self.assignment[p]
    }

    /// Copy with a new assignment over the same grid and labels.
    pub fn with_assignment(&self, assignment: Vec<LabelId>) -> Result<Self> {
        Labeling::new(
            self.grid.clone(),
            self.labels.clone(),
            self.background,
            assignment,
        )
    }

    pub fn count(&self, label: LabelId) -> usize {
        self.assignment.iter().filter(|&&l| l == label).count()
    }
}

/// User seeds per label, as sets of pixel indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScribbleSet {
    seeds: BTreeMap<LabelId, BTreeSet<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScribbleIssue {
    Overlap { pixel: usize, first: LabelId, second: LabelId },
    OutOfBounds { label: LabelId, pixel: usize },
    MissingSeeds { label: LabelId },
}

impl fmt::Display for ScribbleIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScribbleIssue::Overlap { pixel, first, second } => {
                write!(f, "pixel {pixel} is seeded by both label {first} and label {second}")
            }
            ScribbleIssue::OutOfBounds { label, pixel } => {
                write!(f, "label {label} seed pixel {pixel} is out of bounds")
            }
            ScribbleIssue::MissingSeeds { label } => write!(f, "label {label} has no seeds"),
        }
    }
}

impl ScribbleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds seed pixels to `label`, registering the label even if `pixels` is empty.
    pub fn add(&mut self, label: LabelId, pixels: impl IntoIterator<Item = usize>) {
        self.seeds.entry(label).or_default().extend(pixels);
    }

    pub fn remove_pixel(&mut self, label: LabelId, pixel: usize) -> bool {
        self.seeds.get_mut(&label).is_some_and(|s| s.remove(&pixel))
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.seeds.keys().copied()
    }

    pub fn seeds(&self, label: LabelId) -> Option<&BTreeSet<usize>> {
        self.seeds.get(&label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, &BTreeSet<usize>)> {
        self.seeds.iter().map(|(&l, s)| (l, s))
    }

    pub fn counts(&self) -> BTreeMap<LabelId, usize> {
        self.seeds.iter().map(|(&l, s)| (l, s.len())).collect()
    }

    /// Label seeded at `pixel`, if any. On overlap the smallest label id wins.
    pub fn label_at(&self, pixel: usize) -> Option<LabelId> {
        self.seeds
            .iter()
            .find(|(_, s)| s.contains(&pixel))
            .map(|(&l, _)| l)
    }

    /// Dense per-pixel seed map for a grid of `len` pixels; out-of-range seeds are ignored.
    pub fn pin_map(&self, len: usize) -> Vec<Option<LabelId>> {
        let mut map = vec![None; len];
        for (&label, pixels) in self.seeds.iter().rev() {
            for &p in pixels.range(..len) {
                map[p] = Some(label);
            }
        }
        map
    }
}

/// Reports every overlap, out-of-bounds seed, and non-background label without seeds.
pub fn validate_scribbles(
    scribbles: &ScribbleSet,
    grid: &Grid,
    background: LabelId,
) -> std::result::Result<(), Vec<ScribbleIssue>> {
    let mut issues = Vec::new();
    let mut owner: BTreeMap<usize, LabelId> = BTreeMap::new();
    for (label, pixels) in scribbles.iter() {
        if pixels.is_empty() && label != background {
            issues.push(ScribbleIssue::MissingSeeds { label });
        }
        for &pixel in pixels {
            if pixel >= grid.len() {
                issues.push(ScribbleIssue::OutOfBounds { label, pixel });
                continue;
            }
            if let Some(&first) = owner.get(&pixel) {
                issues.push(ScribbleIssue::Overlap {
                    pixel,
                    first,
                    second: label,
                });
            } else {
                owner.insert(pixel, label);
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deltas(n: &NeighborhoodSystem) -> BTreeSet<Vec<i32>> {
        n.offsets().iter().map(|o| o.delta.clone()).collect()
    }

    #[test]
    fn eight_neighborhood_is_3x3_shell() {
        let n = NeighborhoodSystem::build(2, 8).unwrap();
        let expect: BTreeSet<Vec<i32>> = (-1..=1)
            .flat_map(|a| (-1..=1).map(move |b| vec![a, b]))
            .filter(|d| d != &vec![0, 0])
            .collect();
        assert_eq!(deltas(&n), expect);
    }

    #[test]
    fn six_neighborhood_is_axes() {
        let n = NeighborhoodSystem::build(3, 6).unwrap();
        let expect: BTreeSet<Vec<i32>> = [
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ]
        .iter()
        .map(|d| d.to_vec())
        .collect();
        assert_eq!(deltas(&n), expect);
        assert_eq!(NeighborhoodSystem::build(3, 26).unwrap().size(), 26);
    }

    #[test]
    fn sixteen_neighborhood_matches_enumeration() {
        // Coprime offsets of the 5x5 shell, shortest 16 by length.
        let mut cands: Vec<(i32, i32)> = (-2..=2)
            .flat_map(|a| (-2..=2).map(move |b| (a, b)))
            .filter(|&(a, b)| (a, b) != (0, 0) && gcd(a, b) == 1)
            .collect();
        cands.sort_by_key(|&(a, b)| a * a + b * b);
        let first16: BTreeSet<Vec<i32>> = cands[..16].iter().map(|&(a, b)| vec![a, b]).collect();
        assert_eq!(cands[15].0.pow(2) + cands[15].1.pow(2), 5);
        let n = NeighborhoodSystem::build(2, 16).unwrap();
        assert_eq!(deltas(&n), first16);
        let mut expect = deltas(&NeighborhoodSystem::build(2, 8).unwrap());
        for d in [[1, 2], [1, -2], [-1, 2], [-1, -2], [2, 1], [2, -1], [-2, 1], [-2, -1]] {
            expect.insert(d.to_vec());
        }
        assert_eq!(deltas(&n), expect);
    }

    #[test]
    fn neighborhoods_are_closed_under_negation_and_lengths_exact() {
        for (dim, size) in [(2, 4), (2, 8), (2, 16), (2, 32), (3, 6), (3, 26)] {
            let n = NeighborhoodSystem::build(dim, size).unwrap();
            assert_eq!(n.size(), size);
            let set = deltas(&n);
            for o in n.offsets() {
                let neg: Vec<i32> = o.delta.iter().map(|d| -d).collect();
                assert!(set.contains(&neg), "{:?} lacks its negation", o.delta);
                let norm = o.delta.iter().map(|&d| (d * d) as f64).sum::<f64>().sqrt();
                assert!((o.length - norm).abs() < 1e-12);
                assert!(o.delta.iter().any(|&d| d != 0));
                assert_eq!(o.delta.iter().fold(0, |g, &d| gcd(g, d)), 1);
            }
            assert_eq!(n.forward_offsets().count() * 2, size);
        }
    }

    #[test]
    fn unsupported_neighborhood_rejected() {
        assert!(NeighborhoodSystem::build(2, 6).is_err());
        assert!(NeighborhoodSystem::build(3, 8).is_err());
        assert!(NeighborhoodSystem::build(4, 8).is_err());
    }

    #[test]
    fn pixel_index_examples() {
        let g = Grid::new(&[4, 3]).unwrap();
        assert_eq!(g.index(&[0, 0]).unwrap(), 0);
        assert_eq!(g.index(&[3, 2]).unwrap(), 11);
        assert!(g.index(&[4, 0]).is_err());
        assert!(g.index(&[0, 3]).is_err());
        assert!(g.coords(12).is_err());
        for i in 0..g.len() {
            assert_eq!(g.index(&g.coords(i).unwrap()).unwrap(), i);
        }
    }

    #[test]
    fn grid_rejects_bad_dims() {
        assert!(Grid::new(&[4]).is_err());
        assert!(Grid::new(&[4, 0]).is_err());
        assert!(Grid::new(&[2, 2, 2, 2]).is_err());
    }

    #[test]
    fn scribble_validation() {
        let g = Grid::new(&[4, 4]).unwrap();
        let bg = LabelId(1);
        let mut s = ScribbleSet::new();
        s.add(LabelId(1), [0, 1]);
        s.add(LabelId(2), [5, 6]);
        assert!(validate_scribbles(&s, &g, bg).is_ok());

        s.add(LabelId(3), [6]);
        let issues = validate_scribbles(&s, &g, bg).unwrap_err();
        assert_eq!(
            issues,
            vec![ScribbleIssue::Overlap {
                pixel: 6,
                first: LabelId(2),
                second: LabelId(3)
            }]
        );

        let mut s = ScribbleSet::new();
        s.add(LabelId(1), []);
        s.add(LabelId(2), []);
        s.add(LabelId(3), [99]);
        let issues = validate_scribbles(&s, &g, bg).unwrap_err();
        assert_eq!(
            issues,
            vec![
                ScribbleIssue::MissingSeeds { label: LabelId(2) },
                ScribbleIssue::OutOfBounds {
                    label: LabelId(3),
                    pixel: 99
                },
            ]
        );
    }

    #[test]
    fn image_rejects_out_of_range_values() {
        let g = Grid::new(&[2, 2]).unwrap();
        assert!(GridImage::new(g.clone(), 1, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(GridImage::new(g.clone(), 2, vec![0.0; 4]).is_err());
        assert!(GridImage::new(g, 1, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn labeling_rejects_unknown_label() {
        let g = Grid::new(&[1, 2]).unwrap();
        let labels = vec![LabelId(1), LabelId(2)];
        assert!(Labeling::new(g.clone(), labels.clone(), LabelId(1), vec![LabelId(1), LabelId(3)]).is_err());
        assert!(Labeling::new(g.clone(), labels.clone(), LabelId(4), vec![LabelId(1); 2]).is_err());
        assert!(Labeling::new(g, labels, LabelId(1), vec![LabelId(1), LabelId(2)]).is_ok());
    }
}
