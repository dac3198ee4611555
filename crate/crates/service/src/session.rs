//! Session store with optional on-disk persistence of image, scribbles and config.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use hhseg_core::grid::validate_scribbles;
use hhseg_core::io::decode_image_png;
use hhseg_core::optimizer::SolverConfig;
use hhseg_core::{GridImage, Labeling, ScribbleSet};

use crate::api::SegmentResponse;

#[derive(Debug)]
pub struct RunResult {
    pub labeling: Labeling,
    pub response: SegmentResponse,
}

#[derive(Debug)]
pub struct Session {
    pub image: Arc<GridImage>,
    pub scribbles: ScribbleSet,
    pub config: SolverConfig,
    pub running: bool,
    pub result: Option<Arc<RunResult>>,
}

impl Session {
    pub fn new(image: GridImage) -> Self {
        Session {
            image: Arc::new(image),
            scribbles: ScribbleSet::new(),
            config: SolverConfig::default(),
            running: false,
            result: None,
        }
    }

    pub fn width(&self) -> usize {
        self.image.grid().dims()[1]
    }

    pub fn height(&self) -> usize {
        self.image.grid().dims()[0]
    }
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// Locks a session; a panic elsewhere never leaves it unusable.
pub fn lock(handle: &SessionHandle) -> MutexGuard<'_, Session> {
    handle.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, SessionHandle>>,
    dir: Option<PathBuf>,
}

const IMAGE_FILE: &str = "image.png";
const SCRIBBLES_FILE: &str = "scribbles.json";
const CONFIG_FILE: &str = "config.json";

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store backed by `dir`, reloading every session found there.
    /// Unreadable session directories are skipped with a warning.
    pub fn persistent(dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if !path.is_dir() {
                continue;
            }
            let Some(id) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            match load_session(&path) {
                Ok(s) => {
                    sessions.insert(id, Arc::new(Mutex::new(s)));
                }
                Err(e) => eprintln!("hhseg-serve: skipping {}: {e}", path.display()),
            }
        }
        Ok(SessionStore {
            sessions: RwLock::new(sessions),
            dir: Some(dir),
        })
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a session built from `png` and returns its id.
    pub fn create(&self, image: GridImage, png: &[u8]) -> std::io::Result<String> {
        let id = format!("{:032x}", rand::random::<u128>());
        let session = Session::new(image);
        if let Some(dir) = &self.dir {
            let sdir = dir.join(&id);
            fs::create_dir_all(&sdir)?;
            fs::write(sdir.join(IMAGE_FILE), png)?;
            save_json(&sdir.join(CONFIG_FILE), &session.config)?;
            save_json(&sdir.join(SCRIBBLES_FILE), &session.scribbles)?;
        }
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn remove(&self, id: &str) -> std::io::Result<()> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(id);
        if let Some(dir) = &self.dir {
            let sdir = dir.join(id);
            if sdir.exists() {
                fs::remove_dir_all(sdir)?;
            }
        }
        Ok(())
    }

    pub fn persist_scribbles(&self, id: &str, scribbles: &ScribbleSet) -> std::io::Result<()> {
        match &self.dir {
            Some(dir) => save_json(&dir.join(id).join(SCRIBBLES_FILE), scribbles),
            None => Ok(()),
        }
    }
}

fn save_json(path: &Path, value: &impl serde::Serialize) -> std::io::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?)
}

fn load_session(dir: &Path) -> Result<Session, String> {
    let png = fs::read(dir.join(IMAGE_FILE)).map_err(|e| e.to_string())?;
    let image = decode_image_png(&png).map_err(|e| e.to_string())?;
    let mut session = Session::new(image);
    if let Ok(bytes) = fs::read(dir.join(CONFIG_FILE)) {
        session.config = serde_json::from_slice(&bytes).map_err(|e| format!("{CONFIG_FILE}: {e}"))?;
    }
    if let Ok(bytes) = fs::read(dir.join(SCRIBBLES_FILE)) {
        let scribbles: ScribbleSet = serde_json::from_slice(&bytes).map_err(|e| format!("{SCRIBBLES_FILE}: {e}"))?;
        validate_scribbles(&scribbles, session.image.grid(), session.config.background)
            .map_err(|issues| format!("{SCRIBBLES_FILE}: {} issue(s)", issues.len()))?;
        session.scribbles = scribbles;
    }
    Ok(session)
}
