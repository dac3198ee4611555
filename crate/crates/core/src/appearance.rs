//! Color models, per-pixel data terms and contrast-sensitive Potts weights.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridImage, LabelId, NeighborhoodSystem, ScribbleSet};
use crate::maxflow::INF;

pub const DEFAULT_GMM_COMPONENTS: usize = 5;
const COVARIANCE_RIDGE: f64 = 1e-6;
const MAX_EM_ITERATIONS: usize = 100;
const EM_TOLERANCE: f64 = 1e-6;
const DENSITY_FLOOR: f64 = 1e-30;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`.
    pub covariance: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl GmmComponent {
    fn new(weight: f64, mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(Error::invalid("covariance shape does not match mean"));
        }
        let chol = cholesky(&covariance, d)
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(GmmComponent {
            weight,
            mean,
            covariance,
            chol,
            log_norm,
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        // Solve L y = x - mean; Mahalanobis distance is |y|^2.
        let mut y = vec![0.0; d];
        let mut maha = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.chol[i * d + k] * y[k];
            }
            y[i] = s / self.chol[i * d + i];
            maha += y[i] * y[i];
        }
        self.log_norm - 0.5 * maha
    }
}

/// Gaussian mixture over channel space.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dim: usize,
    components: Vec<GmmComponent>,
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl Serialize for GmmModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim;
        let reprs: Vec<ComponentRepr> = self
            .components
            .iter()
            .map(|c| ComponentRepr {
                weight: c.weight,
                mean: c.mean.clone(),
                covariance: c.covariance.chunks(d).map(|r| r.to_vec()).collect(),
            })
            .collect();
        #[derive(Serialize)]
        struct Repr<'a> {
            components: &'a [ComponentRepr],
        }
        Repr { components: &reprs }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GmmModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            components: Vec<ComponentRepr>,
        }
        let repr = Repr::deserialize(d)?;
        let comps = repr
            .components
            .into_iter()
            .map(|c| (c.weight, c.mean, c.covariance.concat()))
            .collect();
        GmmModel::from_parts(comps).map_err(serde::de::Error::custom)
    }
}

impl GmmModel {
    /// Builds a model from `(weight, mean, covariance)` triples; weights are renormalized.
    pub fn from_parts(parts: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let dim = parts
            .first()
            .map(|p| p.1.len())
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if !(total > 0.0) || parts.iter().any(|p| p.0 < 0.0) {
            return Err(Error::invalid("mixture weights must be non-negative with positive sum"));
        }
        let components = parts
            .into_iter()
            .map(|(w, m, c)| {
                if m.len() != dim {
                    return Err(Error::invalid("component means differ in dimension"));
                }
                GmmComponent::new(w / total, m, c)
            })
            .collect::<Result<_>>()?;
        Ok(GmmModel { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density(x))
            .collect();
        log_sum_exp(&logs)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-iteration record of an EM fit.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood after each E-step.
    pub log_likelihoods: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(samples: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![samples[rng.random_range(0..samples.len())].to_vec()];
    let mut best: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = samples.len() - 1;
        for (i, &b) in best.iter().enumerate() {
            if target < b {
                pick = i;
                break;
            }
            target -= b;
        }
        let c = samples[pick].to_vec();
        for (b, s) in best.iter_mut().zip(samples) {
            *b = b.min(sq_dist(s, &c));
        }
        centers.push(c);
    }
    centers
}

/// Weighted mean and ridge-regularized covariance for each responsibility column.
fn m_step(samples: &[&[f64]], resp: &[Vec<f64>], dim: usize) -> Result<GmmModel> {
    let n = samples.len() as f64;
    let mut parts = Vec::new();
    for r in resp {
        let nk: f64 = r.iter().sum();
        if nk <= 1e-12 {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (s, &w) in samples.iter().zip(r) {
            for (m, x) in mean.iter_mut().zip(s.iter()) {
                *m += w * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = vec![0.0; dim * dim];
        for (s, &w) in samples.iter().zip(r) {
            for i in 0..dim {
                let di = s[i] - mean[i];
                for j in 0..dim {
                    cov[i * dim + j] += w * di * (s[j] - mean[j]);
                }
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] /= nk;
            }
            cov[i * dim + i] += COVARIANCE_RIDGE;
        }
        // Symmetrize against accumulated rounding.
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (cov[i * dim + j] + cov[j * dim + i]);
                cov[i * dim + j] = avg;
                cov[j * dim + i] = avg;
            }
        }
        parts.push((nk / n, mean, cov));
    }
    GmmModel::from_parts(parts)
}

/// EM fit of a `k`-component mixture from k-means++ seeding.
///
/// With fewer distinct samples than `k`, one component per distinct sample is used.
pub fn fit_gmm(samples: &[&[f64]], k: usize, seed: u64) -> Result<GmmFit> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit a mixture to zero samples"));
    }
    if k == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("samples differ in dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(samples, k.min(samples.len()), &mut rng);

    let mut resp: Vec<Vec<f64>> = vec![vec![0.0; samples.len()]; centers.len()];
    for (i, s) in samples.iter().enumerate() {
        let nearest = (0..centers.len())
            .min_by(|&a, &b| sq_dist(s, &centers[a]).total_cmp(&sq_dist(s, &centers[b])))
            .expect("at least one center");
        resp[nearest][i] = 1.0;
    }
    let mut model = m_step(samples, &resp, dim)?;
    let mut lls = Vec::new();

    for _ in 0..MAX_EM_ITERATIONS {
        let kc = model.components.len();
        let mut resp = vec![vec![0.0; samples.len()]; kc];
        let mut ll = 0.0;
        let mut logs = vec![0.0; kc];
        for (i, s) in samples.iter().enumerate() {
            for (j, c) in model.components.iter().enumerate() {
                logs[j] = c.weight.ln() + c.log_density(s);
            }
            let total = log_sum_exp(&logs);
            ll += total;
            for j in 0..kc {
                resp[j][i] = (logs[j] - total).exp();
            }
        }
        let converged = lls.last().is_some_and(|&prev: &f64| ll - prev < EM_TOLERANCE);
        lls.push(ll);
        if converged {
            break;
        }
        model = m_step(samples, &resp, dim)?;
    }
    Ok(GmmFit {
        model,
        log_likelihoods: lls,
    })
}

/// Color model of one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AppearanceModel {
    Gmm(GmmModel),
    /// Uniform density over the unit cube of channel space.
    Uniform,
}

impl AppearanceModel {
    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            AppearanceModel::Gmm(g) => g.density(x),
            AppearanceModel::Uniform => 1.0,
        }
    }
}

pub type ModelSet = BTreeMap<LabelId, AppearanceModel>;

pub fn save_models(models: &ModelSet, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(models).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_models(path: &Path) -> Result<ModelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()))
}

/// Per-pixel, per-label penalties. Seed pixels are hard-constrained.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTermTable {
    labels: Vec<LabelId>,
    values: Vec<f64>,
}

impl DataTermTable {
    /// `values[p * labels.len() + i]` is the penalty of `labels[i]` at pixel `p`.
    pub fn from_values(labels: Vec<LabelId>, values: Vec<f64>) -> Result<Self> {
        if labels.is_empty() || !values.len().is_multiple_of(labels.len()) {
            return Err(Error::invalid("data term table size does not match label count"));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::invalid("data terms must be non-negative"));
        }
        Ok(DataTermTable { labels, values })
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len() / self.labels.len()
    }

    fn slot(&self, label: LabelId) -> usize {
        self.labels
            .iter()
            .position(|&l| l == label)
            .unwrap_or_else(|| panic!("label {label} has no data term"))
    }

    pub fn get(&self, p: usize, label: LabelId) -> f64 {
        self.values[p * self.labels.len() + self.slot(label)]
    }

    /// Pins `p` to `label`: zero cost for it, infinite for every other label.
    pub fn pin(&mut self, p: usize, label: LabelId) {
        let l = self.labels.len();
        let slot = self.slot(label);
        for (i, v) in self.values[p * l..(p + 1) * l].iter_mut().enumerate() {
            *v = if i == slot { 0.0 } else { INF };
        }
    }
}

/// `-ln(density + 1e-30)` per label, shifted so each pixel's cheapest label
/// costs 0, then seed pixels pinned to their label.
pub fn data_term(
    image: &GridImage,
    labels: &[LabelId],
    models: &ModelSet,
    scribbles: &ScribbleSet,
) -> Result<DataTermTable> {
    let model_list: Vec<&AppearanceModel> = labels
        .iter()
        .map(|l| {
            models
                .get(l)
                .ok_or_else(|| Error::invalid(format!("no appearance model for label {l}")))
        })
        .collect::<Result<_>>()?;
    for m in &model_list {
        if let AppearanceModel::Gmm(g) = m {
            if g.dim() != image.channels() {
                return Err(Error::invalid("model dimension does not match image channels"));
            }
        }
    }
    let n = image.grid().len();
    let l = labels.len();
    let mut values = vec![0.0; n * l];
    for p in 0..n {
        let x = image.pixel(p);
        let row = &mut values[p * l..(p + 1) * l];
        for (v, m) in row.iter_mut().zip(&model_list) {
            *v = -(m.density(x) + DENSITY_FLOOR).ln();
        }
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        row.iter_mut().for_each(|v| *v -= min);
    }
    let mut table = DataTermTable::from_values(labels.to_vec(), values)?;
    for (label, pixels) in scribbles.iter() {
        if !labels.contains(&label) {
            continue;
        }
        for &p in pixels.range(..n) {
            table.pin(p, label);
        }
    }
    Ok(table)
}

/// Fits one model per label from the given pixel sets.
///
/// A label gets at most `samples / (channels + 1)` components; labels with
/// too few samples for even one component get [`AppearanceModel::Uniform`].
pub fn fit_models(
    image: &GridImage,
    samples: &BTreeMap<LabelId, Vec<usize>>,
    labels: &[LabelId],
    k: usize,
    seed: u64,
) -> Result<ModelSet> {
    labels
        .iter()
        .map(|&label| {
            let pixels = samples.get(&label).map(Vec::as_slice).unwrap_or(&[]);
            let components = k.min(pixels.len() / (image.channels() + 1));
            if components == 0 {
                return Ok((label, AppearanceModel::Uniform));
            }
            let xs: Vec<&[f64]> = pixels.iter().map(|&p| image.pixel(p)).collect();
            let fit = fit_gmm(&xs, components, seed.wrapping_add(label.0 as u64))?;
            Ok((label, AppearanceModel::Gmm(fit.model)))
        })
        .collect()
}

/// One unordered neighbor pair with its Potts weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub p: usize,
    pub q: usize,
    pub weight: f64,
}

/// Contrast-sensitive pairwise weights `exp(-|I_p - I_q|^2 / 2 sigma^2) / |p - q|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessWeights {
    pairs: Vec<WeightedPair>,
    lambda: f64,
    sigma2: f64,
}

fn intensity_sq_diff(image: &GridImage, p: usize, q: usize) -> f64 {
    sq_dist(image.pixel(p), image.pixel(q))
}

/// Weight of one pair for a given `sigma^2` and lattice distance.
pub fn pair_weight(image: &GridImage, p: usize, q: usize, distance: f64, sigma2: f64) -> f64 {
    (-intensity_sq_diff(image, p, q) / (2.0 * sigma2)).exp() / distance
}

impl SmoothnessWeights {
    pub fn new(pairs: Vec<WeightedPair>, lambda: f64, sigma2: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if pairs.iter().any(|w| !(w.weight >= 0.0)) {
            return Err(Error::invalid("pair weights must be non-negative"));
        }
        Ok(SmoothnessWeights {
            pairs,
            lambda,
            sigma2,
        })
    }

    pub fn pairs(&self) -> &[WeightedPair] {
        &self.pairs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Full Potts cost `lambda * w_pq` of a label discontinuity on `pair`.
    pub fn cost(&self, pair: &WeightedPair) -> f64 {
        self.lambda * pair.weight
    }
}

pub fn smoothness_weights(
    image: &GridImage,
    nbhd: &NeighborhoodSystem,
    lambda: f64,
) -> Result<SmoothnessWeights> {
    if nbhd.dim() != image.grid().ndim() {
        return Err(Error::invalid("neighborhood dimension does not match image"));
    }
    let grid = image.grid();
    let mut raw = Vec::new();
    nbhd.for_each_pair(grid, |p, q, o| raw.push((p, q, o.length)));
    let mean_sq = if raw.is_empty() {
        0.0
    } else {
        raw.iter()
            .map(|&(p, q, _)| intensity_sq_diff(image, p, q))
            .sum::<f64>()
            / raw.len() as f64
    };
    let sigma2 = if mean_sq > 0.0 { mean_sq } else { 1.0 };
    let pairs = raw
        .into_iter()
        .map(|(p, q, len)| WeightedPair {
            p,
            q,
            weight: pair_weight(image, p, q, len, sigma2),
        })
        .collect();
    SmoothnessWeights::new(pairs, lambda, sigma2)
}
