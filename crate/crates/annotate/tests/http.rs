use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gapcheck_annotate::{router, AppState, Store};
use gapcheck_core::corpus::{load_annotations, load_records, GenerationRecord};

fn fixture_records() -> Vec<GenerationRecord> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/records.jsonl");
    load_records(BufReader::new(File::open(path).unwrap())).unwrap()
}

fn app(dir: &Path) -> Router {
    router(
        AppState::new(Store::open(dir, fixture_records()).unwrap()),
        None,
    )
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, String, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_owned())
        .unwrap_or_default();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, ctype, bytes)
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

async fn session(app: &Router, annotator: &str) -> String {
    let (s, _, b) = call(
        app,
        Method::GET,
        &format!("/api/session?annotator_id={annotator}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    json_of(&b)["session_id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let sid = session(&app, "ann-a").await;
    assert_eq!(sid, session(&app, "ann-a").await);

    let (s, _, b) = call(
        &app,
        Method::GET,
        &format!("/api/next?session_id={sid}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let next = json_of(&b);
    assert_eq!(next["index"], 0);
    assert_eq!(next["record"]["record_id"], "bankr-interest");
    assert!(!next["citations"]["generation"]
        .as_array()
        .unwrap()
        .is_empty());
    assert!(next["coverage"].is_object());
    assert!(next["screening"].is_object());

    let submit = |label: Value, explanation: &str| json!({"session_id": sid, "record_id": "bankr-interest", "label": label, "explanation": explanation});
    let (s, _, b) = call(
        &app,
        Method::POST,
        "/api/annotations",
        Some(submit(json!([0, 3]), "x")),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(json_of(&b)["error"].as_str().unwrap().contains("0"));

    let (s, _, b) = call(
        &app,
        Method::POST,
        "/api/annotations",
        Some(submit(json!([3]), "  ")),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(json_of(&b)["error"]
        .as_str()
        .unwrap()
        .contains("explanation"));

    let (s, _, b) = call(
        &app,
        Method::POST,
        "/api/annotations",
        Some(submit(json!([2]), "cites the wrong case")),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let first = json_of(&b);
    assert_eq!(first["kind"], "submit");
    assert_eq!(first["session"]["cursor"], 1);

    let (s, _, b) = call(
        &app,
        Method::POST,
        "/api/annotations",
        Some(submit(json!([1, 2]), "also unsupported")),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let second = json_of(&b);
    assert_eq!(second["kind"], "resubmit");
    assert_eq!(second["supersedes"], first["seq"]);

    let unknown = json!({"session_id": sid, "record_id": "nope", "label": [0], "explanation": ""});
    let (s, _, _) = call(&app, Method::POST, "/api/annotations", Some(unknown)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _, b) = call(
        &app,
        Method::GET,
        &format!("/api/progress?session_id={sid}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let p = json_of(&b);
    assert_eq!(p["completed"], 1);
    assert_eq!(p["total"], 5);

    let (s, ctype, b) = call(&app, Method::GET, "/api/export?embed_records=true", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, "application/x-ndjson");
    let exported = load_annotations(&b[..]).unwrap();
    assert_eq!(exported.len(), 1);
    assert_eq!(exported[0].gold.to_string(), "[1, 2]");
    assert_eq!(
        exported[0].record.as_ref().unwrap().record_id,
        "bankr-interest"
    );

    for id in [
        "rule25-substitution",
        "erisa-conflict",
        "forfeiture-ex-post-facto",
        "frivolous-dismissal",
    ] {
        let body = json!({"session_id": sid, "record_id": id, "label": [0]});
        let (s, _, _) = call(&app, Method::POST, "/api/annotations", Some(body)).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (s, _, b) = call(
        &app,
        Method::GET,
        &format!("/api/next?session_id={sid}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(json_of(&b)["error"].as_str().unwrap().contains("exhausted"));
}

#[tokio::test]
async fn errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, _, b) = call(&app, Method::GET, "/api/next?session_id=missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(json_of(&b)["error"].is_string());

    let (s, _, b) = call(&app, Method::GET, "/api/export", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(json_of(&b)["error"].is_string());

    let (s, _, _) = call(&app, Method::GET, "/api/session?annotator_id=%20", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_survive_restart_with_cursor() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path());
        let sid = session(&app, "ann-b").await;
        let body = json!({"session_id": sid, "record_id": "bankr-interest", "label": [0]});
        call(&app, Method::POST, "/api/annotations", Some(body)).await;
    }
    let app = app(dir.path());
    let (_, _, b) = call(&app, Method::GET, "/api/session?annotator_id=ann-b", None).await;
    let v = json_of(&b);
    assert_eq!(v["cursor"], 1);
    assert_eq!(v["completed"], 1);
}

#[tokio::test]
async fn ui_dir_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(
        AppState::new(Store::open(dir.path(), fixture_records()).unwrap()),
        Some(ui.path()),
    );
    let (s, _, b) = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, b"<html>ui</html>");
}

#[test]
fn concurrent_submissions_are_all_logged() {
    let dir = tempfile::tempdir().unwrap();
    let records = fixture_records();
    let ids: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();
    let store = Arc::new(Store::open(dir.path(), records.clone()).unwrap());
    std::thread::scope(|s| {
        for t in 0..8 {
            let store = Arc::clone(&store);
            let ids = &ids;
            s.spawn(move || {
                for (i, id) in ids.iter().enumerate() {
                    let label = [((t + i) % 4) as i64];
                    store
                        .submit(
                            &format!("ann-{t}"),
                            id,
                            &label,
                            "reason",
                            chrono::Utc::now(),
                        )
                        .unwrap();
                }
            });
        }
    });
    assert_eq!(store.annotations(None, false).len(), 8 * ids.len());
    let events = gapcheck_annotate::store::read_log(store.log_path()).unwrap();
    let mut seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    seqs.sort_unstable();
    assert_eq!(seqs, (0..(8 * ids.len()) as u64).collect::<Vec<_>>());
    let reopened = Store::open(dir.path(), records).unwrap();
    assert_eq!(reopened.state(), store.state());
}
