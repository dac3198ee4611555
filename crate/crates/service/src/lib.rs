//! HTTP API for interactive segmentation sessions.
//!
//! | method | path                        |
//! |--------|-----------------------------|
//! | POST   | `/sessions`                 |
//! | GET    | `/sessions/{id}`            |
//! | DELETE | `/sessions/{id}`            |
//! | POST   | `/sessions/{id}/scribbles`  |
//! | POST   | `/sessions/{id}/segment`    |
//! | GET    | `/sessions/{id}/result`     |
//! | GET    | `/sessions/{id}/overlay.png`|

pub mod api;
pub mod error;
pub mod rle;
pub mod session;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::CorsLayer;

use session::SessionStore;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_PIXELS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub port: u16,
    pub max_pixels: usize,
    pub store_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            port: DEFAULT_PORT,
            max_pixels: DEFAULT_MAX_PIXELS,
            store_dir: None,
            cors_origin: None,
        }
    }
}

impl Settings {
    /// Reads `HHSEG_PORT`, `HHSEG_MAX_PIXELS`, `HHSEG_STORE_DIR` and `HHSEG_CORS_ORIGIN`.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(var: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut s = Settings::default();
        if let Some(v) = var("HHSEG_PORT") {
            s.port = v.parse().map_err(|_| format!("HHSEG_PORT: not a port number: {v:?}"))?;
        }
        if let Some(v) = var("HHSEG_MAX_PIXELS") {
            s.max_pixels = v
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("HHSEG_MAX_PIXELS: not a positive integer: {v:?}"))?;
        }
        s.store_dir = var("HHSEG_STORE_DIR").filter(|v| !v.is_empty()).map(PathBuf::from);
        s.cors_origin = var("HHSEG_CORS_ORIGIN").filter(|v| !v.is_empty());
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub settings: Arc<Settings>,
}

impl AppState {
    pub fn new(settings: Settings) -> std::io::Result<Self> {
        let store = match &settings.store_dir {
            Some(dir) => SessionStore::persistent(dir.clone())?,
            None => SessionStore::in_memory(),
        };
        Ok(AppState {
            store: Arc::new(store),
            settings: Arc::new(settings),
        })
    }
}

pub fn router(state: AppState) -> Router {
    // Room for any PNG within the pixel limit; larger bodies get 413 before decoding.
    let body_limit = (state.settings.max_pixels.saturating_mul(8)).max(1 << 20);
    let cors = match &state.settings.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new()
                .allow_origin(v)
                .allow_methods(tower_http::cors::Any)
                .allow_headers(tower_http::cors::Any),
            Err(_) => CorsLayer::permissive(),
        },
        None => CorsLayer::permissive(),
    };
    Router::new()
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session).delete(api::delete_session))
        .route("/sessions/{id}/scribbles", post(api::add_scribbles))
        .route("/sessions/{id}/segment", post(api::run_segmentation))
        .route("/sessions/{id}/result", get(api::get_result))
        .route("/sessions/{id}/overlay.png", get(api::get_overlay))
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(cors)
        .with_state(state)
}
