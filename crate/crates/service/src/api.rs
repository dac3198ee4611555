use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use hhseg_core::hedgehog::EdgeTag;
use hhseg_core::io::{decode_image_png, overlay_png, png_dimensions};
use hhseg_core::optimizer::{segment, EnergyBreakdown, SolverConfig};
use hhseg_core::{Error, LabelId, ScribbleSet};

use crate::error::ApiError;
use crate::rle::RleLabelMap;
use crate::session::{lock, RunResult, Session, SessionHandle};
use crate::AppState;

pub const OVERLAY_ALPHA: f64 = 0.45;

fn session(app: &AppState, id: &str) -> Result<SessionHandle, ApiError> {
    app.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

/// `[x, y]` of a pixel index in a row-major image `width` wide.
fn xy(p: usize, width: usize) -> [usize; 2] {
    [p % width, p / width]
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

pub async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let unsupported = |msg: String| ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media", msg);
    let (width, height) = png_dimensions(&body).map_err(|e| unsupported(e.to_string()))?;
    let max = app.settings.max_pixels;
    if width.saturating_mul(height) > max {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("image has {width}x{height} pixels, limit is {max}"),
        )
        .with("max_pixels", max));
    }
    let image = decode_image_png(&body).map_err(|e| unsupported(e.to_string()))?;
    let id = app
        .store
        .create(image, &body)
        .map_err(|e| ApiError::internal(format!("cannot persist session: {e}")))?;
    let location = format!("/sessions/{id}");
    let created = Created { id, width, height };
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(created)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stroke {
    pub label: u8,
    /// `[x, y]` image coordinates.
    pub pixels: Vec<[i64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScribbleRequest {
    pub strokes: Vec<Stroke>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Override {
    pub x: usize,
    pub y: usize,
    pub from: LabelId,
    pub to: LabelId,
}

#[derive(Debug, Serialize)]
pub struct ScribbleResponse {
    pub counts: BTreeMap<LabelId, usize>,
    pub overrides: Vec<Override>,
}

/// Applies strokes in order. A pixel already seeded by another label moves
/// to the new label and the move is reported.
fn merge_strokes(current: &ScribbleSet, strokes: &[(LabelId, Vec<usize>)], width: usize) -> (ScribbleSet, Vec<Override>) {
    let mut owner: BTreeMap<usize, LabelId> = current
        .iter()
        .flat_map(|(l, s)| s.iter().map(move |&p| (p, l)))
        .collect();
    let mut overrides = Vec::new();
    for (label, pixels) in strokes {
        for &p in pixels {
            if let Some(prev) = owner.insert(p, *label).filter(|prev| prev != label) {
                let [x, y] = xy(p, width);
                overrides.push(Override { x, y, from: prev, to: *label });
            }
        }
    }
    let mut grouped: BTreeMap<LabelId, BTreeSet<usize>> = BTreeMap::new();
    for (p, l) in owner {
        grouped.entry(l).or_default().insert(p);
    }
    let mut out = ScribbleSet::new();
    for (l, pixels) in grouped {
        out.add(l, pixels);
    }
    (out, overrides)
}

pub async fn add_scribbles(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ScribbleRequest>,
) -> Result<Json<ScribbleResponse>, ApiError> {
    let handle = session(&app, &id)?;
    let mut s = lock(&handle);
    if s.running {
        return Err(ApiError::busy());
    }
    let (width, height) = (s.width(), s.height());
    let mut bad = Vec::new();
    let mut strokes = Vec::with_capacity(req.strokes.len());
    for stroke in &req.strokes {
        if stroke.label == 0 {
            return Err(ApiError::unprocessable("invalid_label", "label 0 is reserved for unlabeled pixels"));
        }
        let mut pixels = Vec::with_capacity(stroke.pixels.len());
        for &[x, y] in &stroke.pixels {
            if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
                bad.push([x, y]);
            } else {
                pixels.push(y as usize * width + x as usize);
            }
        }
        strokes.push((LabelId(stroke.label), pixels));
    }
    if !bad.is_empty() {
        return Err(ApiError::unprocessable(
            "out_of_bounds",
            format!("{} pixel(s) outside the {width}x{height} image", bad.len()),
        )
        .with("pixels", bad));
    }
    let (scribbles, overrides) = merge_strokes(&s.scribbles, &strokes, width);
    app.store
        .persist_scribbles(&id, &scribbles)
        .map_err(|e| ApiError::internal(format!("cannot persist scribbles: {e}")))?;
    s.scribbles = scribbles;
    Ok(Json(ScribbleResponse {
        counts: s.scribbles.counts(),
        overrides,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub neighborhood: Option<usize>,
    /// Labels carrying shape constraints; defaults to every non-background label.
    pub constrained_labels: Option<Vec<LabelId>>,
}

impl SegmentRequest {
    fn apply(&self, base: &SolverConfig) -> SolverConfig {
        let mut config = base.clone();
        if let Some(t) = self.theta {
            config.theta = t;
        }
        if let Some(l) = self.lambda {
            config.lambda = l;
        }
        if let Some(n) = self.neighborhood {
            config.neighborhood = Some(n);
        }
        if let Some(labels) = &self.constrained_labels {
            config.constrained_labels = Some(labels.clone());
        }
        config
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentResponse {
    pub theta: f64,
    pub lambda: f64,
    pub neighborhood: usize,
    pub labeling: RleLabelMap,
    pub energy: EnergyBreakdown,
    pub counts: BTreeMap<LabelId, usize>,
    pub outer_iterations: usize,
    pub moves: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Serialize)]
struct ViolationView {
    label: LabelId,
    from: [usize; 2],
    to: [usize; 2],
    tag: EdgeTag,
}

/// Clears the running flag however the run ends.
struct RunningGuard(SessionHandle);

impl Drop for RunningGuard {
    fn drop(&mut self) {
        lock(&self.0).running = false;
    }
}

fn solver_error(e: Error, width: usize) -> ApiError {
    match e {
        Error::Infeasible { violations } => {
            let views: Vec<ViolationView> = violations
                .iter()
                .map(|v| ViolationView {
                    label: v.label,
                    from: xy(v.edge.from, width),
                    to: xy(v.edge.to, width),
                    tag: v.edge.tag,
                })
                .collect();
            ApiError::unprocessable(
                "over_constrained",
                format!("the seeds violate {} constraint edge(s); lower theta or adjust the scribbles", views.len()),
            )
            .with("violations", views)
        }
        Error::InvalidArgument(_) | Error::InvalidScribbles(_) => ApiError::unprocessable("invalid_setup", e.to_string()),
        e => ApiError::internal(e.to_string()),
    }
}

pub async fn run_segmentation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SegmentResponse>, ApiError> {
    let req: SegmentRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SegmentRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?
    };
    let handle = session(&app, &id)?;
    let (image, scribbles, config) = {
        let mut s = lock(&handle);
        if s.running {
            return Err(ApiError::busy());
        }
        let seeded = s.scribbles.iter().filter(|(_, p)| !p.is_empty()).count();
        if seeded < 2 {
            return Err(ApiError::unprocessable(
                "needs_seeds",
                format!("segmentation needs seeds for at least two labels, have {seeded}"),
            ));
        }
        let config = req.apply(&s.config);
        config
            .validate()
            .map_err(|e| ApiError::unprocessable("invalid_config", e.to_string()))?;
        s.running = true;
        (s.image.clone(), s.scribbles.clone(), config)
    };
    let guard = RunningGuard(handle.clone());
    let width = image.grid().dims()[1];
    let start = Instant::now();
    let solve_config = config.clone();
    let outcome = tokio::task::spawn_blocking(move || segment(&image, &scribbles, &solve_config, &BTreeMap::new()))
        .await
        .map_err(|e| ApiError::internal(format!("segmentation task failed: {e}")))?
        .map_err(|e| solver_error(e, width))?;
    let labeling = outcome.labeling;
    let response = SegmentResponse {
        theta: config.theta,
        lambda: config.lambda,
        neighborhood: config.neighborhood_for(2).map(|n| n.size()).unwrap_or_default(),
        labeling: RleLabelMap::encode(&labeling),
        energy: outcome.energy,
        counts: labeling.labels().iter().map(|&l| (l, labeling.count(l))).collect(),
        outer_iterations: outcome.outer_iterations,
        moves: outcome.log.len(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    lock(&handle).result = Some(Arc::new(RunResult {
        labeling,
        response: response.clone(),
    }));
    drop(guard);
    Ok(Json(response))
}

#[derive(Debug, Serialize)]
pub struct ResultSummary {
    pub theta: f64,
    pub energy: EnergyBreakdown,
    pub counts: BTreeMap<LabelId, usize>,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub status: &'static str,
    pub counts: BTreeMap<LabelId, usize>,
    pub config: SolverConfig,
    pub result: Option<ResultSummary>,
}

fn view(id: String, s: &Session) -> SessionView {
    SessionView {
        id,
        width: s.width(),
        height: s.height(),
        status: if s.running { "running" } else { "idle" },
        counts: s.scribbles.counts(),
        config: s.config.clone(),
        result: s.result.as_ref().map(|r| ResultSummary {
            theta: r.response.theta,
            energy: r.response.energy,
            counts: r.response.counts.clone(),
        }),
    }
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = session(&app, &id)?;
    let s = lock(&handle);
    Ok(Json(view(id, &s)))
}

fn last_result(app: &AppState, id: &str) -> Result<(Arc<RunResult>, SessionHandle), ApiError> {
    let handle = session(app, id)?;
    let result = lock(&handle).result.clone();
    match result {
        Some(r) => Ok((r, handle)),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "no_result", "no segmentation has run on this session")),
    }
}

pub async fn get_result(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SegmentResponse>, ApiError> {
    let (result, _) = last_result(&app, &id)?;
    Ok(Json(result.response.clone()))
}

pub async fn get_overlay(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (result, handle) = last_result(&app, &id)?;
    let image = lock(&handle).image.clone();
    let png = overlay_png(&image, &result.labeling, OVERLAY_ALPHA).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

pub async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let handle = session(&app, &id)?;
    if lock(&handle).running {
        return Err(ApiError::busy());
    }
    app.store
        .remove(&id)
        .map_err(|e| ApiError::internal(format!("cannot remove session files: {e}")))?;
    Ok(StatusCode::NO_CONTENT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_last_write_wins() {
        let mut s = ScribbleSet::new();
        s.add(LabelId(1), [0, 1]);
        let (out, overrides) = merge_strokes(&s, &[(LabelId(2), vec![1, 2]), (LabelId(3), vec![2])], 4);
        assert_eq!(out.label_at(0), Some(LabelId(1)));
        assert_eq!(out.label_at(1), Some(LabelId(2)));
        assert_eq!(out.label_at(2), Some(LabelId(3)));
        assert_eq!(
            overrides,
            vec![
                Override { x: 1, y: 0, from: LabelId(1), to: LabelId(2) },
                Override { x: 2, y: 0, from: LabelId(2), to: LabelId(3) },
            ]
        );
        assert_eq!(out.seeds(LabelId(2)).unwrap().len(), 1);
    }

    #[test]
    fn emptied_labels_disappear() {
        let mut s = ScribbleSet::new();
        s.add(LabelId(2), [5]);
        let (out, _) = merge_strokes(&s, &[(LabelId(3), vec![5])], 4);
        assert_eq!(out.labels().collect::<Vec<_>>(), vec![LabelId(3)]);
    }

    #[test]
    fn same_label_rescribble_is_not_an_override() {
        let mut s = ScribbleSet::new();
        s.add(LabelId(2), [5]);
        let (_, overrides) = merge_strokes(&s, &[(LabelId(2), vec![5, 6])], 4);
        assert!(overrides.is_empty());
    }
}
