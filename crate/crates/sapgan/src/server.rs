//! Local HTTP instrument for the Visual Turing Test.
//!
//! Three read-only image pools (human, baseline, sapgan) are exposed under
//! opaque ids. A test session holds 18 items, six from each pool, in a
//! shuffled order; which pool an item came from stays on the server and is
//! only written to the response CSV.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasher, RandomState};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sapgan_core::survey::{Judgement, NativeLang, Source, SurveyResponse};
use sapgan_core::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::is_image_file;
use crate::responses::ResponseWriter;

pub const ITEMS_PER_SOURCE: usize = 6;
pub const SOURCES: [Source; 3] = [Source::Human, Source::Baseline, Source::Sapgan];

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub pools: [PathBuf; 3],
    pub responses: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// Test mode: sessions and image ids become a function of this seed
    /// (and the participant id) instead of fresh randomness.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
struct PoolImage {
    source: Source,
    path: PathBuf,
}

#[derive(Debug)]
struct Session {
    participant_id: String,
    native_lang: NativeLang,
    items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Answer {
    q1: Judgement,
    q2_certainty: u8,
    q3: [u8; 4],
}

#[derive(Debug, Default)]
struct Ledger {
    sessions: HashMap<String, Session>,
    /// Recorded answers keyed by (participant, image), with the ack sent.
    answered: HashMap<(String, String), (Answer, Ack)>,
    issued: u64,
}

#[derive(Debug)]
pub struct AppState {
    images: BTreeMap<String, PoolImage>,
    pools: [Vec<String>; 3],
    salt: [u8; 32],
    seed: Option<u64>,
    ledger: Mutex<Ledger>,
    writer: Mutex<ResponseWriter>,
}

fn digest_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn fresh_entropy() -> u64 {
    RandomState::new().hash_one(std::time::SystemTime::now())
}

fn list_pool(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

impl AppState {
    pub fn new(opts: &ServerOptions) -> Result<Self> {
        let salt_seed = opts.seed.unwrap_or_else(fresh_entropy);
        let salt: [u8; 32] = Sha256::digest(salt_seed.to_le_bytes()).into();
        let mut images = BTreeMap::new();
        let mut pools: [Vec<String>; 3] = Default::default();
        for ((dir, source), pool) in opts.pools.iter().zip(SOURCES).zip(pools.iter_mut()) {
            for path in list_pool(dir)? {
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                let id = digest_hex(&[&salt, source.as_str().as_bytes(), name.as_bytes()])[..16].to_string();
                pool.push(id.clone());
                images.insert(id, PoolImage { source, path });
            }
        }
        let writer = ResponseWriter::open(&opts.responses)?;
        Ok(AppState { images, pools, salt, seed: opts.seed, ledger: Mutex::default(), writer: Mutex::new(writer) })
    }

    pub fn pool_sizes(&self) -> [usize; 3] {
        [self.pools[0].len(), self.pools[1].len(), self.pools[2].len()]
    }

    /// Ground truth of an issued image id. Server-side use only.
    pub fn source_of(&self, image_id: &str) -> Option<Source> {
        self.images.get(image_id).map(|i| i.source)
    }
}

#[derive(Debug, Serialize)]
pub struct Item {
    pub id: String,
    pub url: String,
}

#[derive(Debug, Serialize)]
pub struct SessionPayload {
    pub session_id: String,
    pub participant_id: String,
    pub items: Vec<Item>,
}

#[derive(Debug, Deserialize)]
pub struct TestQuery {
    pub participant: String,
    #[serde(default)]
    pub lang: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsePayload {
    pub session_id: String,
    pub image_id: String,
    pub q1: Judgement,
    pub q2_certainty: u8,
    pub q3_aesthetic: u8,
    pub q3_composition: u8,
    pub q3_clarity: u8,
    pub q3_creative: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ack {
    pub status: &'static str,
    pub session_id: String,
    pub image_id: String,
    pub answered: usize,
    pub remaining: usize,
}

struct ApiError(StatusCode, serde_json::Value);

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        ApiError(status, json!({ "error": msg.into() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

async fn get_test(State(st): State<Arc<AppState>>, Query(q): Query<TestQuery>) -> ApiResult<Json<SessionPayload>> {
    let participant = q.participant.trim().to_string();
    if participant.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "participant must be non-empty"));
    }
    let native_lang = match q.lang.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
        None => NativeLang::Other,
        Some(s) => s.parse().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{e}")))?,
    };
    let sizes = st.pool_sizes();
    if sizes.iter().any(|&n| n < ITEMS_PER_SOURCE) {
        let counts: BTreeMap<&str, usize> = SOURCES.iter().map(|s| s.as_str()).zip(sizes).collect();
        return Err(ApiError(
            StatusCode::CONFLICT,
            json!({ "error": format!("every pool needs at least {ITEMS_PER_SOURCE} images"), "pools": counts }),
        ));
    }

    let mut ledger = lock(&st.ledger);
    ledger.issued += 1;
    let mut rng = match st.seed {
        Some(seed) => Stream::new(seed).derive(&participant),
        None => Stream::new(fresh_entropy() ^ ledger.issued),
    };
    let mut items = Vec::with_capacity(ITEMS_PER_SOURCE * SOURCES.len());
    for pool in &st.pools {
        let mut ids = pool.clone();
        rng.shuffle(&mut ids);
        items.extend(ids.into_iter().take(ITEMS_PER_SOURCE));
    }
    rng.shuffle(&mut items);
    let session_id =
        digest_hex(&[&st.salt, b"session", participant.as_bytes(), &ledger.issued.to_le_bytes()])[..24].to_string();
    let payload = SessionPayload {
        session_id: session_id.clone(),
        participant_id: participant.clone(),
        items: items.iter().map(|id| Item { id: id.clone(), url: format!("/api/images/{id}") }).collect(),
    };
    ledger.sessions.insert(session_id, Session { participant_id: participant, native_lang, items });
    Ok(Json(payload))
}

async fn get_image(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let img = st.images.get(&id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown image"))?;
    let bytes = tokio::fs::read(&img.path)
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "image could not be read"))?;
    let mime = match img.path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("pgm") => "image/x-portable-graymap",
        _ => "image/x-portable-anymap",
    };
    Ok(([(header::CONTENT_TYPE, mime), (header::CACHE_CONTROL, "no-store")], bytes).into_response())
}

async fn post_response(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<ResponsePayload>, JsonRejection>,
) -> ApiResult<Json<Ack>> {
    let Json(p) = body.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let mut ledger = lock(&st.ledger);
    let session =
        ledger.sessions.get(&p.session_id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown session"))?;
    if !session.items.contains(&p.image_id) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "image is not part of this session"));
    }
    let row = SurveyResponse {
        participant_id: session.participant_id.clone(),
        native_lang: session.native_lang,
        image_id: p.image_id.clone(),
        source: st.source_of(&p.image_id).expect("session items come from the pools"),
        q1: p.q1,
        q2_certainty: p.q2_certainty,
        q3_aesthetic: p.q3_aesthetic,
        q3_composition: p.q3_composition,
        q3_clarity: p.q3_clarity,
        q3_creative: p.q3_creative,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    row.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{e}")))?;
    let answer = Answer {
        q1: p.q1,
        q2_certainty: p.q2_certainty,
        q3: [p.q3_aesthetic, p.q3_composition, p.q3_clarity, p.q3_creative],
    };
    let key = (row.participant_id.clone(), row.image_id.clone());
    if let Some((prev, ack)) = ledger.answered.get(&key) {
        return if *prev == answer {
            Ok(Json(ack.clone()))
        } else {
            Err(ApiError::new(StatusCode::CONFLICT, "this image was already answered; answers cannot be changed"))
        };
    }
    let items = session.items.clone();
    lock(&st.writer).append(&row).map_err(|e| {
        log::error!("{e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "response could not be recorded")
    })?;
    let answered = items.iter().filter(|id| ledger.answered.contains_key(&(key.0.clone(), (*id).clone()))).count() + 1;
    let ack = Ack {
        status: "recorded",
        session_id: p.session_id,
        image_id: p.image_id,
        answered,
        remaining: items.len() - answered,
    };
    ledger.answered.insert(key, (answer, ack.clone()));
    Ok(Json(ack))
}

async fn export_csv(State(st): State<Arc<AppState>>) -> ApiResult<Response> {
    let writer = lock(&st.writer);
    let bytes = std::fs::read(writer.path())
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "responses could not be read"))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/test", get(get_test))
        .route("/api/images/{id}", get(get_image))
        .route("/api/response", post(post_response))
        .route("/api/export.csv", get(export_csv))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(opts: ServerOptions, addr: SocketAddr) -> Result<()> {
    let state = Arc::new(AppState::new(&opts)?);
    let [h, b, s] = state.pool_sizes();
    log::info!("pools: {h} human, {b} baseline, {s} sapgan; responses append to {}", opts.responses.display());
    let app = router(state, opts.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("bind {addr}: {e}")))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Config(format!("server: {e}")))
}
