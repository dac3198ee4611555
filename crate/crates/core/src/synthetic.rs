//! Seeded synthetic segmentation instances with exact ground truth.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distance::VectorField;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridImage, LabelId, Labeling, ScribbleSet};

pub const BACKGROUND: LabelId = LabelId(1);

/// Smallest extent per axis accepted by the shape generators.
pub const MIN_SHAPE_EXTENT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Three five-pointed stars with skeleton scribbles and star-colored distractor blobs.
    Stars,
    /// Two same-colored lungs, one of them a crescent.
    Lungs,
    /// A disk with a single-pixel seed at its center.
    Disk,
    /// A filled octagon with a smaller octagon outline as scribble.
    Octagon,
    /// A vector field whose direction turns by a right angle per column.
    RotatingField,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 5] = [
        SyntheticKind::Stars,
        SyntheticKind::Lungs,
        SyntheticKind::Disk,
        SyntheticKind::Octagon,
        SyntheticKind::RotatingField,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticKind::Stars => "stars",
            SyntheticKind::Lungs => "lungs",
            SyntheticKind::Disk => "disk",
            SyntheticKind::Octagon => "octagon",
            SyntheticKind::RotatingField => "rotating-field",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown synthetic kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// `[rows, cols]`.
    pub dims: Vec<usize>,
    /// Standard deviation of the per-channel Gaussian noise.
    pub noise_std: f64,
    /// Add background blobs colored like the objects (stars only).
    pub distractors: bool,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            dims: vec![128, 128],
            noise_std: 0.1,
            distractors: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub image: GridImage,
    pub scribbles: ScribbleSet,
    pub truth: Labeling,
    /// Prescribed vector fields, keyed by the label they constrain.
    pub fields: BTreeMap<LabelId, VectorField>,
}

type Rgb = [f64; 3];

const BACKGROUND_GRAY: Rgb = [0.5, 0.5, 0.5];
const OBJECT_COLORS: [Rgb; 3] = [[0.8, 0.3, 0.3], [0.3, 0.75, 0.35], [0.3, 0.35, 0.8]];

/// Canvas in continuous `(row, col)` coordinates; pixel `(r, c)` is sampled at its center.
struct Canvas {
    grid: Grid,
    rows: usize,
    cols: usize,
    colors: Vec<Rgb>,
    truth: Vec<LabelId>,
    scribbles: ScribbleSet,
}

impl Canvas {
    fn new(rows: usize, cols: usize, fill: Rgb) -> Result<Self> {
        let grid = Grid::new(&[rows, cols])?;
        let n = grid.len();
        Ok(Canvas {
            grid,
            rows,
            cols,
            colors: vec![fill; n],
            truth: vec![BACKGROUND; n],
            scribbles: ScribbleSet::new(),
        })
    }

    fn scale(&self) -> f64 {
        self.rows.min(self.cols) as f64
    }

    fn at(&self, fr: f64, fc: f64) -> (f64, f64) {
        (fr * self.rows as f64, fc * self.cols as f64)
    }

    fn fill(&mut self, inside: impl Fn(f64, f64) -> bool, color: Rgb, label: LabelId) {
        for r in 0..self.rows {
            for c in 0..self.cols {
                if inside(r as f64, c as f64) {
                    let p = r * self.cols + c;
                    self.colors[p] = color;
                    self.truth[p] = label;
                }
            }
        }
    }

    fn pixel_at(&self, r: f64, c: f64) -> Option<usize> {
        let (r, c) = (r.round(), c.round());
        if r < 0.0 || c < 0.0 || r >= self.rows as f64 || c >= self.cols as f64 {
            return None;
        }
        Some(r as usize * self.cols + c as usize)
    }

    fn scribble_point(&mut self, label: LabelId, r: f64, c: f64) {
        if let Some(p) = self.pixel_at(r, c) {
            self.scribbles.add(label, [p]);
        }
    }

    fn scribble_line(&mut self, label: LabelId, from: (f64, f64), to: (f64, f64)) {
        let steps = ((to.0 - from.0).abs().max((to.1 - from.1).abs()) * 4.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.scribble_point(label, from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
        }
    }

    fn scribble_polyline(&mut self, label: LabelId, points: &[(f64, f64)], closed: bool) {
        for w in points.windows(2) {
            self.scribble_line(label, w[0], w[1]);
        }
        if closed && points.len() > 2 {
            self.scribble_line(label, points[points.len() - 1], points[0]);
        }
    }

    fn scribble_frame(&mut self, width: usize) {
        let pixels: Vec<usize> = (0..self.grid.len())
            .filter(|&p| {
                let (r, c) = (p / self.cols, p % self.cols);
                r < width || c < width || r + width >= self.rows || c + width >= self.cols
            })
            .collect();
        self.scribbles.add(BACKGROUND, pixels);
    }

    fn finish(
        self,
        labels: Vec<LabelId>,
        noise_std: f64,
        seed: u64,
        fields: BTreeMap<LabelId, VectorField>,
    ) -> Result<SyntheticInstance> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid(format!("noise std must be finite and >= 0, got {noise_std}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        let data = self
            .colors
            .iter()
            .flat_map(|rgb| *rgb)
            .map(|v| {
                let n = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (v + n).clamp(0.0, 1.0)
            })
            .collect();
        let image = GridImage::new(self.grid.clone(), 3, data)?;
        let truth = Labeling::new(self.grid, labels, BACKGROUND, self.truth)?;
        Ok(SyntheticInstance {
            image,
            scribbles: self.scribbles,
            truth,
            fields,
        })
    }
}

/// Even-odd rule.
fn point_in_polygon(poly: &[(f64, f64)], r: f64, c: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (ri, ci) = poly[i];
        let (rj, cj) = poly[j];
        if (ri > r) != (rj > r) && c < (cj - ci) * (r - ri) / (rj - ri) + ci {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn regular_polygon(center: (f64, f64), radii: &[f64], count: usize, rotation: f64) -> Vec<(f64, f64)> {
    (0..count)
        .map(|i| {
            let a = rotation + i as f64 * 2.0 * PI / count as f64;
            let rad = radii[i % radii.len()];
            (center.0 + rad * a.sin(), center.1 + rad * a.cos())
        })
        .collect()
}

fn stars(p: &SyntheticParams) -> Result<SyntheticInstance> {
    let mut cv = Canvas::new(p.dims[0], p.dims[1], BACKGROUND_GRAY)?;
    let outer = 0.17 * cv.scale();
    let layout = [((0.28, 0.27), 0.0), ((0.28, 0.73), 0.3), ((0.72, 0.5), -0.2)];
    let mut labels = vec![BACKGROUND];
    for (i, &((fr, fc), tilt)) in layout.iter().enumerate() {
        let label = LabelId(2 + i as u8);
        labels.push(label);
        let center = cv.at(fr, fc);
        let rotation = -FRAC_PI_2 + tilt;
        let poly = regular_polygon(center, &[outer, 0.5 * outer], 10, rotation);
        cv.fill(|r, c| point_in_polygon(&poly, r, c), OBJECT_COLORS[i], label);
        // Skeleton: spokes from the center toward each tip.
        for tip in regular_polygon(center, &[0.75 * outer], 5, rotation) {
            cv.scribble_line(label, center, tip);
        }
    }
    if p.distractors {
        let blob = 0.055 * cv.scale();
        // Each blob is far from the star sharing its color.
        let spots = [((0.69, 0.84), 0), ((0.69, 0.16), 1), ((0.08, 0.5), 2)];
        for &((fr, fc), star) in &spots {
            let (cr, cc) = cv.at(fr, fc);
            let color = OBJECT_COLORS[star];
            cv.fill(|r, c| (r - cr).powi(2) + (c - cc).powi(2) <= blob * blob, color, BACKGROUND);
        }
    }
    cv.scribble_frame(2);
    cv.finish(labels, p.noise_std, p.seed, BTreeMap::new())
}

fn lungs(p: &SyntheticParams) -> Result<SyntheticInstance> {
    let tissue = [0.7, 0.6, 0.55];
    let lung = [0.25, 0.2, 0.2];
    let mut cv = Canvas::new(p.dims[0], p.dims[1], tissue)?;
    let s = cv.scale();
    let (left, right) = (LabelId(2), LabelId(3));

    let (lr, lc) = cv.at(0.5, 0.27);
    let (ar, ac) = (0.3 * cv.rows as f64, 0.12 * cv.cols as f64);
    cv.fill(|r, c| ((r - lr) / ar).powi(2) + ((c - lc) / ac).powi(2) <= 1.0, lung, left);
    cv.scribble_line(left, (lr - 0.7 * ar, lc), (lr + 0.7 * ar, lc));

    // Crescent: annular sector opening toward the left lung.
    let (cr, cc) = cv.at(0.5, 0.42);
    let (inner, outer) = (0.22 * s, 0.36 * s);
    let span = 1.2;
    cv.fill(
        |r, c| {
            let d = ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
            let a = (r - cr).atan2(c - cc);
            d >= inner && d <= outer && a.abs() <= span
        },
        lung,
        right,
    );
    let mid = 0.5 * (inner + outer);
    let arc: Vec<(f64, f64)> = (0..=24)
        .map(|i| {
            let a = -0.8 * span + 1.6 * span * i as f64 / 24.0;
            (cr + mid * a.sin(), cc + mid * a.cos())
        })
        .collect();
    cv.scribble_polyline(right, &arc, false);

    cv.scribble_frame(2);
    cv.finish(vec![BACKGROUND, left, right], p.noise_std, p.seed, BTreeMap::new())
}

fn disk(p: &SyntheticParams) -> Result<SyntheticInstance> {
    let mut cv = Canvas::new(p.dims[0], p.dims[1], [0.3, 0.3, 0.3])?;
    let fg = LabelId(2);
    let (cr, cc) = ((cv.rows / 2) as f64, (cv.cols / 2) as f64);
    let radius = 0.3 * cv.scale();
    cv.fill(|r, c| (r - cr).powi(2) + (c - cc).powi(2) <= radius * radius, [0.75, 0.7, 0.6], fg);
    cv.scribble_point(fg, cr, cc);
    cv.scribble_frame(2);
    cv.finish(vec![BACKGROUND, fg], p.noise_std, p.seed, BTreeMap::new())
}

fn octagon(p: &SyntheticParams) -> Result<SyntheticInstance> {
    let mut cv = Canvas::new(p.dims[0], p.dims[1], [0.35, 0.4, 0.45])?;
    let fg = LabelId(2);
    let center = ((cv.rows / 2) as f64, (cv.cols / 2) as f64);
    let rot = PI / 8.0;
    let shape = regular_polygon(center, &[0.35 * cv.scale()], 8, rot);
    cv.fill(|r, c| point_in_polygon(&shape, r, c), [0.8, 0.75, 0.5], fg);
    let outline = regular_polygon(center, &[0.15 * cv.scale()], 8, rot);
    cv.scribble_polyline(fg, &outline, true);
    cv.scribble_frame(2);
    cv.finish(vec![BACKGROUND, fg], p.noise_std, p.seed, BTreeMap::new())
}

/// Field direction `(cos a, sin a)` in `(row, col)` components with `a = col * pi/2`.
pub fn rotating_field(grid: &Grid) -> Result<VectorField> {
    let cols = grid.dims()[grid.ndim() - 1];
    let raw: Vec<f64> = (0..grid.len())
        .flat_map(|p| {
            let a = (p % cols) as f64 * FRAC_PI_2;
            [a.cos(), a.sin()]
        })
        .collect();
    VectorField::from_raw(grid.clone(), &raw, 0.0)
}

fn rotating(p: &SyntheticParams) -> Result<SyntheticInstance> {
    let (rows, cols) = (p.dims[0], p.dims[1]);
    if rows < 3 || cols < 3 {
        return Err(Error::invalid("rotating-field instance needs at least 3x3 pixels"));
    }
    let mut cv = Canvas::new(rows, cols, [0.3, 0.3, 0.3])?;
    let fg = LabelId(2);
    let (c0, c1) = (cols as f64 / 3.0, 2.0 * cols as f64 / 3.0);
    let (r0, r1) = (rows as f64 / 4.0, 3.0 * rows as f64 / 4.0);
    cv.fill(|r, c| r >= r0 && r < r1 && c >= c0 && c < c1, [0.7, 0.7, 0.7], fg);
    cv.scribble_point(fg, (rows / 2) as f64, (cols / 2) as f64);
    cv.scribble_frame(1);
    let field = rotating_field(&cv.grid)?;
    cv.finish(
        vec![BACKGROUND, fg],
        p.noise_std,
        p.seed,
        BTreeMap::from([(fg, field)]),
    )
}

pub fn generate_synthetic(kind: SyntheticKind, params: &SyntheticParams) -> Result<SyntheticInstance> {
    if params.dims.len() != 2 {
        return Err(Error::invalid("synthetic instances are 2D"));
    }
    if kind != SyntheticKind::RotatingField && params.dims.iter().any(|&d| d < MIN_SHAPE_EXTENT) {
        return Err(Error::invalid(format!(
            "{kind} needs at least {MIN_SHAPE_EXTENT} pixels per axis, got {:?}",
            params.dims
        )));
    }
    match kind {
        SyntheticKind::Stars => stars(params),
        SyntheticKind::Lungs => lungs(params),
        SyntheticKind::Disk => disk(params),
        SyntheticKind::Octagon => octagon(params),
        SyntheticKind::RotatingField => rotating(params),
    }
}
