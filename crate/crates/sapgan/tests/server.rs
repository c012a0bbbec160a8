use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use sapgan::io::save_png;
use sapgan::responses::read_responses;
use sapgan::server::{router, AppState, ServerOptions};
use sapgan_core::image::RawImage;
use sapgan_core::survey::{validate_responses, Source};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: axum::Router,
    /// Every body the server returned, for the leak scan.
    seen: Vec<String>,
}

fn write_pool(dir: &Path, n: usize, shade: u8) {
    for i in 0..n {
        save_png(&dir.join(format!("{i:02}.png")), &RawImage::filled(4, 4, 3, shade + i as u8).unwrap()).unwrap();
    }
}

fn fixture(sizes: [usize; 3], seed: Option<u64>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let names = ["human", "baseline", "sapgan"];
    for (i, (name, n)) in names.iter().zip(sizes).enumerate() {
        write_pool(&dir.path().join(name), n, 40 * i as u8);
    }
    let opts = ServerOptions {
        pools: names.map(|n| dir.path().join(n)),
        responses: dir.path().join("out/responses.csv"),
        static_dir: None,
        seed,
    };
    let state = Arc::new(AppState::new(&opts).unwrap());
    let app = router(state.clone(), None);
    Fixture { _dir: dir, state, app, seen: Vec::new() }
}

impl Fixture {
    async fn call(&mut self, req: Request<Body>) -> (StatusCode, String) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        (status, text)
    }

    async fn get(&mut self, uri: &str) -> (StatusCode, String) {
        let r = self.call(Request::get(uri).body(Body::empty()).unwrap()).await;
        if !uri.starts_with("/api/export.csv") && !uri.starts_with("/api/images/") {
            self.seen.push(r.1.clone());
        }
        r
    }

    async fn post(&mut self, body: &Value) -> (StatusCode, Value) {
        let req = Request::post("/api/response")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (status, text) = self.call(req).await;
        self.seen.push(text.clone());
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    async fn session(&mut self, participant: &str) -> Value {
        let (status, body) = self.get(&format!("/api/test?participant={participant}&lang=zh")).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_str(&body).unwrap()
    }

    async fn export(&mut self) -> String {
        let (status, body) = self.get("/api/export.csv").await;
        assert_eq!(status, StatusCode::OK);
        body
    }
}

fn answer(session: &Value, image: &Value, q2: u64) -> Value {
    json!({
        "session_id": session["session_id"],
        "image_id": image,
        "q1": "human",
        "q2_certainty": q2,
        "q3_aesthetic": 3,
        "q3_composition": 2,
        "q3_clarity": 4,
        "q3_creative": 1,
    })
}

fn item_ids(session: &Value) -> Vec<String> {
    session["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn session_has_six_items_per_pool() {
    let mut f = fixture([10, 10, 10], None);
    let s = f.session("p1").await;
    let ids = item_ids(&s);
    assert_eq!(ids.len(), 18);
    let mut per_source = BTreeMap::new();
    for id in &ids {
        *per_source.entry(f.state.source_of(id).unwrap()).or_insert(0) += 1;
    }
    assert_eq!(per_source, BTreeMap::from([(Source::Human, 6), (Source::Baseline, 6), (Source::Sapgan, 6)]));
    let mut unique = ids.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 18);
    for item in s["items"].as_array().unwrap() {
        assert_eq!(item["url"].as_str().unwrap(), format!("/api/images/{}", item["id"].as_str().unwrap()));
        assert_eq!(item.as_object().unwrap().len(), 2);
    }
    let (status, _) = f.get(s["items"][0]["url"].as_str().unwrap()).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn order_is_shuffled_across_pools() {
    let mut f = fixture([10, 10, 10], Some(11));
    let ids = item_ids(&f.session("p1").await);
    let sources: Vec<Source> = ids.iter().map(|id| f.state.source_of(id).unwrap()).collect();
    let grouped = sources.windows(2).filter(|w| w[0] != w[1]).count() == 2;
    assert!(!grouped, "items arrive grouped by pool: {sources:?}");
}

#[tokio::test]
async fn seeded_servers_issue_identical_sessions() {
    let mut a = fixture([10, 10, 10], Some(7));
    let mut b = fixture([10, 10, 10], Some(7));
    let sa = a.session("p1").await;
    let sb = b.session("p1").await;
    assert_eq!(item_ids(&sa), item_ids(&sb));
    assert_eq!(item_ids(&sa), item_ids(&a.session("p1").await));
    assert_ne!(item_ids(&sa), item_ids(&a.session("p2").await));
}

#[tokio::test]
async fn undersized_pool_is_a_conflict_with_counts() {
    let mut f = fixture([10, 10, 5], None);
    let (status, body) = f.get("/api/test?participant=p1").await;
    assert_eq!(status, StatusCode::CONFLICT);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["pools"], json!({ "human": 10, "baseline": 10, "sapgan": 5 }));
}

#[tokio::test]
async fn full_session_yields_valid_csv() {
    let mut f = fixture([10, 10, 10], None);
    let s = f.session("p1").await;
    for (i, id) in item_ids(&s).iter().enumerate() {
        let (status, ack) = f.post(&answer(&s, &json!(id), 1 + (i as u64 % 10))).await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        assert_eq!(ack["answered"], i + 1);
        assert_eq!(ack["remaining"], 17 - i);
    }
    let csv = f.export().await;
    let rows = read_responses(csv.as_bytes(), Path::new("export.csv")).unwrap();
    assert_eq!(rows.len(), 18);
    validate_responses(&rows).unwrap();
    for src in [Source::Human, Source::Baseline, Source::Sapgan] {
        assert_eq!(rows.iter().filter(|r| r.source == src).count(), 6);
    }
    assert!(rows.iter().all(|r| r.participant_id == "p1" && r.native_lang.as_str() == "zh"));
    assert!(rows.iter().all(|r| chrono::DateTime::parse_from_rfc3339(&r.timestamp).is_ok()));

    // Nothing the client saw names a pool or carries a source field.
    for body in &f.seen {
        for needle in ["source", "baseline", "sapgan"] {
            assert!(!body.contains(needle), "{needle:?} leaked in {body}");
        }
    }
}

#[tokio::test]
async fn out_of_range_and_malformed_payloads_are_422() {
    let mut f = fixture([10, 10, 10], None);
    let s = f.session("p1").await;
    let id = json!(item_ids(&s)[0]);
    assert_eq!(f.post(&answer(&s, &id, 11)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(f.post(&answer(&s, &id, 0)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad = answer(&s, &id, 5);
    bad["q3_clarity"] = json!(5);
    assert_eq!(f.post(&bad).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad = answer(&s, &id, 5);
    bad["q1"] = json!("robot");
    assert_eq!(f.post(&bad).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad = answer(&s, &id, 5);
    bad["source"] = json!("human");
    assert_eq!(f.post(&bad).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(f.export().await.lines().count(), 1, "rejected answers must not be written");
}

#[tokio::test]
async fn unknown_session_or_item_is_404() {
    let mut f = fixture([10, 10, 10], None);
    let s = f.session("p1").await;
    let other = f.session("p2").await;
    let mine = item_ids(&s);
    let foreign = item_ids(&other).into_iter().find(|id| !mine.contains(id)).unwrap();

    let mut bad = answer(&s, &json!(mine[0]), 5);
    bad["session_id"] = json!("nope");
    assert_eq!(f.post(&bad).await.0, StatusCode::NOT_FOUND);
    assert_eq!(f.post(&answer(&s, &json!(foreign), 5)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(f.post(&answer(&s, &json!("0000"), 5)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(f.get("/api/images/0000").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn duplicate_is_idempotent_and_edits_conflict() {
    let mut f = fixture([10, 10, 10], None);
    let s = f.session("p1").await;
    let id = json!(item_ids(&s)[3]);
    let (s1, ack1) = f.post(&answer(&s, &id, 4)).await;
    let (s2, ack2) = f.post(&answer(&s, &id, 4)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(ack1, ack2);
    assert_eq!(f.post(&answer(&s, &id, 9)).await.0, StatusCode::CONFLICT);
    assert_eq!(f.export().await.lines().count(), 2);
}

#[tokio::test]
async fn concurrent_sessions_never_interleave_rows() {
    let f = fixture([10, 10, 10], None);
    let app = f.app.clone();
    let mut handles = Vec::new();
    for p in 0..8 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let req = Request::get(format!("/api/test?participant=c{p}")).body(Body::empty()).unwrap();
            let body = app.clone().oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
            let s: Value = serde_json::from_slice(&body).unwrap();
            for id in item_ids(&s) {
                let req = Request::post("/api/response")
                    .header("content-type", "application/json")
                    .body(Body::from(answer(&s, &json!(id), 5).to_string()))
                    .unwrap();
                assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
            }
        }));
    }
    for h in handles {
        h.await.unwrap();
    }
    let req = Request::get("/api/export.csv").body(Body::empty()).unwrap();
    let body = app.oneshot(req).await.unwrap().into_body().collect().await.unwrap().to_bytes();
    let rows = read_responses(&body[..], Path::new("export.csv")).unwrap();
    assert_eq!(rows.len(), 8 * 18);
}
