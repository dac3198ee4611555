//! Exact Euclidean distance maps and their normalized gradient fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-pixel distance in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    grid: Grid,
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "distance map has {} values for {} pixels",
                values.len(),
                grid.len()
            )));
        }
        Ok(DistanceMap { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, p: usize) -> f64 {
        self.values[p]
    }
}

/// Squared distance transform of a sampled function along one line
/// (lower envelope of parabolas). Infinite samples carry no parabola.
fn edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let vf = v as f64;
            let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * qf - 2.0 * vf);
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, slot) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while k + 1 < sites.len() && bounds[k + 1] < pf {
            k += 1;
        }
        let v = sites[k];
        let dv = pf - v as f64;
        *slot = dv * dv + f[v];
    }
}

fn squared_edt(grid: &Grid, source: &[bool]) -> Vec<f64> {
    let mut values: Vec<f64> = source
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let dims = grid.dims();
    let mut coords = vec![0; dims.len()];
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());
    for axis in 0..dims.len() {
        let extent = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let mut line = vec![0.0; extent];
        let mut out = vec![0.0; extent];
        for start in 0..grid.len() {
            grid.coords_into(start, &mut coords);
            if coords[axis] != 0 {
                continue;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = values[start + i * stride];
            }
            edt_1d(&line, &mut out, &mut sites, &mut bounds);
            for (i, &v) in out.iter().enumerate() {
                values[start + i * stride] = v;
            }
        }
    }
    values
}

/// Exact Euclidean distance from every pixel to the nearest source pixel.
pub fn euclidean_distance_transform(source: &[usize], grid: &Grid) -> Result<DistanceMap> {
    if source.is_empty() {
        return Err(Error::invalid("distance transform needs at least one source pixel"));
    }
    let mut mask = vec![false; grid.len()];
    for &p in source {
        if p >= grid.len() {
            return Err(Error::invalid(format!("source pixel {p} out of bounds")));
        }
        mask[p] = true;
    }
    let values = squared_edt(grid, &mask).into_iter().map(f64::sqrt).collect();
    DistanceMap::new(grid.clone(), values)
}

/// Signed distance to the boundary of `mask`: positive outside the region
/// (distance to the nearest region pixel), negative inside (minus the distance
/// to the nearest pixel outside the region).
pub fn signed_distance(mask: &[bool], grid: &Grid) -> Result<DistanceMap> {
    if mask.len() != grid.len() {
        return Err(Error::invalid(format!(
            "mask has {} entries for {} pixels",
            mask.len(),
            grid.len()
        )));
    }
    let inside = mask.iter().filter(|&&m| m).count();
    if inside == 0 || inside == mask.len() {
        return Err(Error::invalid("signed distance needs a mask that is neither empty nor full"));
    }
    let complement: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let to_region = squared_edt(grid, mask);
    let to_outside = squared_edt(grid, &complement);
    let values = mask
        .iter()
        .enumerate()
        .map(|(p, &m)| {
            if m {
                -to_outside[p].sqrt()
            } else {
                to_region[p].sqrt()
            }
        })
        .collect();
    DistanceMap::new(grid.clone(), values)
}

/// Per-pixel unit direction, undefined where no direction exists.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<f64>,
    defined: Vec<bool>,
}

impl VectorField {
    /// Builds a field from raw vectors (`ndim` components per pixel),
    /// normalizing each one; zero or non-finite vectors become undefined.
    pub fn from_raw(grid: Grid, raw: &[f64], eps: f64) -> Result<Self> {
        let n = grid.ndim();
        if raw.len() != grid.len() * n {
            return Err(Error::invalid(format!(
                "vector field has {} components, expected {}",
                raw.len(),
                grid.len() * n
            )));
        }
        let mut components = vec![0.0; raw.len()];
        let mut defined = vec![false; grid.len()];
        for p in 0..grid.len() {
            let v = &raw[p * n..(p + 1) * n];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm.is_finite() && norm >= eps && norm > 0.0 {
                defined[p] = true;
                for (dst, x) in components[p * n..(p + 1) * n].iter_mut().zip(v) {
                    *dst = x / norm;
                }
            }
        }
        Ok(VectorField {
            grid,
            components,
            defined,
        })
    }

    /// A field with the same direction everywhere.
    pub fn uniform(grid: Grid, direction: &[f64]) -> Result<Self> {
        let raw: Vec<f64> = (0..grid.len()).flat_map(|_| direction.iter().copied()).collect();
        VectorField::from_raw(grid, &raw, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, p: usize) -> Option<&[f64]> {
        let n = self.grid.ndim();
        self.defined[p].then(|| &self.components[p * n..(p + 1) * n])
    }

    pub fn is_defined(&self, p: usize) -> bool {
        self.defined[p]
    }

    /// Copy with `pixels` marked undefined.
    pub fn masked(mut self, pixels: impl IntoIterator<Item = usize>) -> Self {
        for p in pixels {
            if p < self.defined.len() {
                self.defined[p] = false;
            }
        }
        self
    }

    pub fn defined_count(&self) -> usize {
        self.defined.iter().filter(|&&d| d).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Little-endian: `HHVF`, u32 ndim, u32 extent per axis, then ndim f32
    /// components per pixel in row-major order. Undefined pixels are written as zero.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(b"HHVF")?;
        w.write_all(&(self.grid.ndim() as u32).to_le_bytes())?;
        for &d in self.grid.dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let n = self.grid.ndim();
        for p in 0..self.grid.len() {
            for a in 0..n {
                let x = if self.defined[p] {
                    self.components[p * n + a] as f32
                } else {
                    0.0
                };
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        fn u32_le(r: &mut impl Read) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| Error::format("vector field file truncated"))?;
            Ok(u32::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("vector field file truncated"))?;
        if &magic != b"HHVF" {
            return Err(Error::format("bad vector field magic"));
        }
        let ndim = u32_le(r)? as usize;
        if !(ndim == 2 || ndim == 3) {
            return Err(Error::format(format!("vector field has unsupported dimension {ndim}")));
        }
        let dims = (0..ndim)
            .map(|_| u32_le(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(&dims).map_err(|e| Error::format(e.to_string()))?;
        let count = grid.len() * ndim;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::format("vector field data truncated"))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::format(e.to_string()))? != 0 {
            return Err(Error::format("trailing bytes after vector field data"));
        }
        let raw: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::format("non-finite vector component"));
        }
        VectorField::from_raw(grid, &raw, 0.0)
    }

    /// Errors unless the field is defined on exactly `grid`.
    pub fn ensure_grid(&self, grid: &Grid) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::format(format!(
                "vector field dims {:?} do not match image dims {:?}",
                self.grid.dims(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

pub fn load_vector_field(path: &Path) -> Result<VectorField> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    VectorField::read_from(&mut BufReader::new(file))
}

pub const DEFAULT_GRADIENT_EPS: f64 = 1e-6;

/// Normalized gradient of `d` by central differences (one-sided at borders).
/// Pixels whose raw gradient norm is below `eps` are left undefined.
pub fn gradient_field(d: &DistanceMap, eps: f64) -> VectorField {
    let grid = d.grid();
    let n = grid.ndim();
    let mut raw = vec![0.0; grid.len() * n];
    let mut coords = vec![0; n];
    let mut delta = vec![0i32; n];
    for p in 0..grid.len() {
        grid.coords_into(p, &mut coords);
        for axis in 0..n {
            delta.fill(0);
            delta[axis] = 1;
            let fwd = grid.shifted(&coords, &delta);
            delta[axis] = -1;
            let back = grid.shifted(&coords, &delta);
            raw[p * n + axis] = match (back, fwd) {
                (Some(b), Some(f)) => (d.get(f) - d.get(b)) / 2.0,
                (None, Some(f)) => d.get(f) - d.get(p),
                (Some(b), None) => d.get(p) - d.get(b),
                (None, None) => 0.0,
            };
        }
    }
    VectorField::from_raw(grid.clone(), &raw, eps).expect("component count matches grid")
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn edt_is_one_lipschitz(rows in 1usize..9, cols in 1usize..9, bits in prop::collection::vec(any::<bool>(), 64)) {
            let g = Grid::new(&[rows, cols]).unwrap();
            let mut src: Vec<usize> = (0..g.len()).filter(|&p| bits[p]).collect();
            if src.is_empty() { src.push(0); }
            let d = euclidean_distance_transform(&src, &g).unwrap();
            for &p in &src { prop_assert_eq!(d.get(p), 0.0); }
            for p in 0..g.len() {
                for q in 0..g.len() {
                    let (a, b) = (g.coords(p).unwrap(), g.coords(q).unwrap());
                    let dist = a.iter().zip(&b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>().sqrt();
                    prop_assert!((d.get(p) - d.get(q)).abs() <= dist + 1e-9);
                }
            }
        }

        #[test]
        fn defined_gradients_are_unit(values in prop::collection::vec(-5.0f64..5.0, 36)) {
            let g = Grid::new(&[6, 6]).unwrap();
            let d = DistanceMap::new(g, values).unwrap();
            let v = gradient_field(&d, DEFAULT_GRADIENT_EPS);
            for p in 0..36 {
                if let Some(u) = v.get(p) {
                    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((n - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
