use std::collections::BTreeMap;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hhseg_core::hedgehog::check_feasibility;
use hhseg_core::io::{decode_image_png, encode_image_png};
use hhseg_core::optimizer::{build_constraints, SolverConfig};
use hhseg_core::synthetic::{generate_synthetic, SyntheticKind, SyntheticParams};
use hhseg_core::{Grid, GridImage, LabelId, Labeling, ScribbleSet};
use hhseg_service::rle::RleLabelMap;
use hhseg_service::{router, AppState, Settings};

fn app_with(settings: Settings) -> Router {
    router(AppState::new(settings).unwrap())
}

fn app() -> Router {
    app_with(Settings::default())
}

async fn send(app: &Router, method: Method, uri: &str, body: Body) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body).unwrap();
    send_request(app, req).await
}

async fn send_request(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
    let (status, bytes) = send_request(app, req.body(body).unwrap()).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

/// Left half dark, right half bright.
fn two_tone_png(rows: usize, cols: usize) -> Vec<u8> {
    let grid = Grid::new(&[rows, cols]).unwrap();
    let data = (0..rows * cols)
        .flat_map(|p| if p % cols < cols / 2 { [0.15, 0.2, 0.1] } else { [0.85, 0.8, 0.9] })
        .collect();
    encode_image_png(&GridImage::new(grid, 3, data).unwrap()).unwrap()
}

async fn create(app: &Router, png: Vec<u8>) -> String {
    let (status, bytes) = send(app, Method::POST, "/sessions", Body::from(png)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["id"].as_str().unwrap().to_string()
}

async fn scribble(app: &Router, id: &str, strokes: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{id}/scribbles"), Some(json!({ "strokes": strokes }))).await
}

async fn seeded_two_tone(app: &Router) -> String {
    let id = create(app, two_tone_png(12, 12)).await;
    let (status, _) = scribble(
        app,
        id.as_str(),
        json!([
            { "label": 1, "pixels": [[1, 1], [1, 10], [2, 6]] },
            { "label": 2, "pixels": [[9, 5], [9, 6], [10, 6]] }
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    id
}

fn decode_labels(v: &Value) -> (usize, usize, Vec<LabelId>) {
    let rle: RleLabelMap = serde_json::from_value(v["labeling"].clone()).unwrap();
    let ids = rle.decode().expect("runs tile the image");
    (rle.width, rle.height, ids)
}

#[tokio::test]
async fn create_session_returns_distinct_ids() {
    let app = app();
    let (status, bytes) = send(&app, Method::POST, "/sessions", Body::from(two_tone_png(6, 8))).await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(8), Some(6)));
    let other = create(&app, two_tone_png(6, 8)).await;
    assert_ne!(v["id"].as_str().unwrap(), other);

    let req = Request::post("/sessions").body(Body::from(two_tone_png(4, 4))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers()[header::LOCATION].to_str().unwrap().starts_with("/sessions/"));
}

#[tokio::test]
async fn undecodable_upload_is_415() {
    let (status, v) = call(&app(), Method::POST, "/sessions", Some(json!("just some text"))).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(v["error"], "unsupported_media");
    let mut truncated = two_tone_png(8, 8);
    truncated.truncate(40);
    let (status, _) = send(&app(), Method::POST, "/sessions", Body::from(truncated)).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
}

#[tokio::test]
async fn oversized_upload_is_413() {
    let app = app_with(Settings {
        max_pixels: 100,
        ..Settings::default()
    });
    let (status, bytes) = send(&app, Method::POST, "/sessions", Body::from(two_tone_png(20, 20))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["max_pixels"], 100);
    let (status, _) = send(&app, Method::POST, "/sessions", Body::from(two_tone_png(10, 10))).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn scribbles_merge_with_last_write_wins() {
    let app = app();
    let id = create(&app, two_tone_png(8, 8)).await;
    let (status, v) = scribble(&app, &id, json!([{ "label": 1, "pixels": [[0, 0], [1, 0], [2, 0]] }])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"], json!({ "1": 3 }));
    assert_eq!(v["overrides"], json!([]));

    let (status, v) = scribble(&app, &id, json!([{ "label": 2, "pixels": [[2, 0], [7, 7]] }])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"], json!({ "1": 2, "2": 2 }));
    assert_eq!(v["overrides"], json!([{ "x": 2, "y": 0, "from": 1, "to": 2 }]));

    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["counts"], json!({ "1": 2, "2": 2 }));
    assert_eq!(v["status"], "idle");
}

#[tokio::test]
async fn bad_scribbles_are_rejected_without_side_effects() {
    let app = app();
    let id = create(&app, two_tone_png(8, 8)).await;
    let (status, v) = scribble(&app, &id, json!([{ "label": 1, "pixels": [[0, 0], [8, 2], [-1, 3]] }])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "out_of_bounds");
    assert_eq!(v["pixels"], json!([[8, 2], [-1, 3]]));
    let (status, v) = scribble(&app, &id, json!([{ "label": 0, "pixels": [[0, 0]] }])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid_label");
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["counts"], json!({}));

    let (status, _) = scribble(&app, "nope", json!([{ "label": 1, "pixels": [[0, 0]] }])).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn segment_returns_a_full_feasible_labeling() {
    let app = app();
    let id = seeded_two_tone(&app).await;
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (w, h, ids) = decode_labels(&v);
    assert_eq!((w, h, ids.len()), (12, 12, 144));
    assert!(v["energy"]["total"].as_f64().unwrap().is_finite());
    assert_eq!(v["energy"]["hedgehog"], 0.0);
    assert_eq!(v["theta"], std::f64::consts::FRAC_PI_4);
    assert_eq!(v["neighborhood"], 8);
    let counts: BTreeMap<String, u64> = serde_json::from_value(v["counts"].clone()).unwrap();
    assert_eq!(counts.values().sum::<u64>(), 144);
    // Clean colors: the halves separate.
    assert!(ids.iter().enumerate().all(|(p, &l)| l == if p % 12 < 6 { LabelId(1) } else { LabelId(2) }));

    // Feasible under the constraints the run used.
    let grid = Grid::new(&[12, 12]).unwrap();
    let mut seeds = ScribbleSet::new();
    seeds.add(LabelId(1), [12 + 1, 12 * 10 + 1, 12 * 6 + 2]);
    seeds.add(LabelId(2), [12 * 5 + 9, 12 * 6 + 9, 12 * 6 + 10]);
    let constraints = build_constraints(&grid, &seeds, &SolverConfig::default(), &BTreeMap::new()).unwrap();
    let labeling = Labeling::new(grid, vec![LabelId(1), LabelId(2)], LabelId(1), ids).unwrap();
    assert!(check_feasibility(&labeling, &constraints).is_ok());
    assert!(!constraints.is_empty());
}

#[tokio::test]
async fn corrective_scribble_relabels_its_pixels() {
    let app = app();
    let id = seeded_two_tone(&app).await;
    let (_, first) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    let (_, _, before) = decode_labels(&first);
    // A patch of the dark half that came out as background gets label 2.
    let patch = [[2, 2], [3, 2], [2, 3]];
    assert!(patch.iter().all(|&[x, y]| before[y * 12 + x] == LabelId(1)));
    let (status, v) = scribble(&app, &id, json!([{ "label": 2, "pixels": patch }])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"]["2"], 6);
    let (status, second) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, _, after) = decode_labels(&second);
    assert!(patch.iter().all(|&[x, y]| after[y * 12 + x] == LabelId(2)));
}

#[tokio::test]
async fn theta_overrides_are_echoed_and_validated() {
    let app = app();
    let id = seeded_two_tone(&app).await;
    for theta in [0.1, 1.5] {
        let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), Some(json!({ "theta": theta }))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["theta"], theta);
    }
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/segment"),
        Some(json!({ "lambda": 0.5, "neighborhood": 4 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((v["lambda"].as_f64(), v["neighborhood"].as_u64()), (Some(0.5), Some(4)));

    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), Some(json!({ "theta": 2.0 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid_config");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), Some(json!({ "alpha": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    // Overrides apply to one run; the rejected requests left the last result in place.
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["status"], "idle");
    assert_eq!(v["result"]["theta"], std::f64::consts::FRAC_PI_4);
    assert_eq!(v["config"]["theta"], std::f64::consts::FRAC_PI_4);
}

#[tokio::test]
async fn segment_needs_two_seeded_labels() {
    let app = app();
    let id = create(&app, two_tone_png(8, 8)).await;
    scribble(&app, &id, json!([{ "label": 2, "pixels": [[6, 6]] }])).await;
    let (status, v) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "needs_seeds");
    let (status, _) = call(&app, Method::POST, "/sessions/nope/segment", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn over_constrained_setup_lists_violating_edges() {
    let app = app();
    let id = create(&app, two_tone_png(5, 5)).await;
    scribble(
        &app,
        &id,
        json!([{ "label": 1, "pixels": [[0, 0]] }, { "label": 2, "pixels": [[2, 2]] }]),
    )
    .await;
    // The background shape field radiates from (0, 0); background behind the
    // label-2 seed would have to pass through it.
    let (status, v) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/segment"),
        Some(json!({ "constrained_labels": [1, 2] })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"], "over_constrained");
    let violations = v["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    assert!(violations.iter().all(|e| e["label"] == 1 && e["to"] == json!([2, 2])));
    assert!(violations.iter().any(|e| e["from"] == json!([3, 3])));
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(v["status"], "idle");
}

#[tokio::test]
async fn overlay_and_result_exist_only_after_a_run() {
    let app = app();
    let id = seeded_two_tone(&app).await;
    let (status, _) = send(&app, Method::GET, &format!("/sessions/{id}/overlay.png"), Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/result"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, run) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    let req = Request::get(format!("/sessions/{id}/overlay.png")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "image/png");
    let first = resp.into_body().collect().await.unwrap().to_bytes();
    let overlay = decode_image_png(&first).unwrap();
    assert_eq!(overlay.grid().dims(), &[12, 12]);
    let (_, second) = send(&app, Method::GET, &format!("/sessions/{id}/overlay.png"), Body::empty()).await;
    assert_eq!(first.to_vec(), second);

    let (status, result) = call(&app, Method::GET, &format!("/sessions/{id}/result"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(result["labeling"], run["labeling"]);
    assert_eq!(result["energy"], run["energy"]);
}

#[tokio::test]
async fn delete_removes_the_session() {
    let app = app();
    let id = seeded_two_tone(&app).await;
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let app = app();
    let a = seeded_two_tone(&app).await;
    let b = create(&app, two_tone_png(12, 12)).await;
    scribble(&app, &b, json!([{ "label": 3, "pixels": [[0, 0]] }])).await;
    let (_, b_before) = call(&app, Method::GET, &format!("/sessions/{b}"), None).await;

    let (_, run_a) = call(&app, Method::POST, &format!("/sessions/{a}/segment"), None).await;
    scribble(&app, &a, json!([{ "label": 3, "pixels": [[11, 11]] }])).await;
    let (_, b_after) = call(&app, Method::GET, &format!("/sessions/{b}"), None).await;
    assert_eq!(b_before, b_after);
    assert_eq!(b_after["result"], Value::Null);
    let (status, _) = send(&app, Method::GET, &format!("/sessions/{b}/overlay.png"), Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    scribble(&app, &b, json!([{ "label": 1, "pixels": [[5, 5]] }])).await;
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{b}/segment"), Some(json!({ "theta": 0.2 }))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, a_result) = call(&app, Method::GET, &format!("/sessions/{a}/result"), None).await;
    assert_eq!(a_result["labeling"], run_a["labeling"]);
    assert_eq!(a_result["theta"], run_a["theta"]);
    let (_, a_view) = call(&app, Method::GET, &format!("/sessions/{a}"), None).await;
    assert_eq!(a_view["counts"], json!({ "1": 3, "2": 3, "3": 1 }));
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{b}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_on_a_running_session_get_409() {
    let app = app();
    let inst = generate_synthetic(SyntheticKind::Stars, &SyntheticParams::default()).unwrap();
    let id = create(&app, encode_image_png(&inst.image).unwrap()).await;
    let strokes: Vec<Value> = inst
        .scribbles
        .iter()
        .map(|(l, px)| json!({ "label": l.0, "pixels": px.iter().map(|&p| [p % 128, p / 128]).collect::<Vec<_>>() }))
        .collect();
    let (status, _) = scribble(&app, &id, Value::Array(strokes)).await;
    assert_eq!(status, StatusCode::OK);

    let runner = {
        let app = app.clone();
        let uri = format!("/sessions/{id}/segment");
        tokio::spawn(async move { call(&app, Method::POST, &uri, None).await })
    };
    let mut saw_running = false;
    for _ in 0..2000 {
        let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
        if v["status"] == "running" {
            saw_running = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(1)).await;
    }
    assert!(saw_running, "segmentation finished before it was observed");
    let (status, v) = scribble(&app, &id, json!([{ "label": 1, "pixels": [[0, 0]] }])).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "busy");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = runner.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    let (status, _) = scribble(&app, &id, json!([{ "label": 1, "pixels": [[0, 0]] }])).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn store_dir_persists_image_scribbles_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let settings = Settings {
        store_dir: Some(dir.path().to_path_buf()),
        ..Settings::default()
    };
    let app = app_with(settings.clone());
    let id = seeded_two_tone(&app).await;
    let gone = seeded_two_tone(&app).await;
    call(&app, Method::DELETE, &format!("/sessions/{gone}"), None).await;
    assert!(!dir.path().join(&gone).exists());
    for f in ["image.png", "scribbles.json", "config.json"] {
        assert!(dir.path().join(&id).join(f).exists(), "{f} missing");
    }

    let restarted = app_with(settings);
    let (status, v) = call(&restarted, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["counts"], json!({ "1": 3, "2": 3 }));
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(12), Some(12)));
    let (status, _) = call(&restarted, Method::GET, &format!("/sessions/{gone}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&restarted, Method::POST, &format!("/sessions/{id}/segment"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let app = app_with(Settings {
        cors_origin: Some("http://localhost:5173".into()),
        ..Settings::default()
    });
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/sessions")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}
