use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use stancegen_core::annotation::{AnnotationQueue, QueueEntry, SampleContext};
use stancegen_service::{router, AppState, ViewPolicy};

fn entry(id: &str) -> QueueEntry {
    QueueEntry::new(
        id,
        SampleContext {
            post_text: format!("post for {id}"),
            image_uri: format!("images/{id}.jpg"),
            comment_text: format!("comment for {id}"),
        },
        vec![],
    )
}

fn queue_of(n: usize) -> AnnotationQueue {
    let mut q = AnnotationQueue::new();
    for i in 0..n {
        q.enqueue(entry(&format!("p{i:02}#0/c{i}"))).unwrap();
    }
    q
}

fn enc(id: &str) -> String {
    id.replace('#', "%23").replace('/', "%2F")
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn label(app: &Router, id: &str, annotator: &str, stance: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        &format!("/entry/{}/label", enc(id)),
        Some(json!({"annotator_id": annotator, "stance": stance, "topic": "OTHER"})),
    )
    .await
}

#[tokio::test]
async fn pagination_splits_25_entries_into_10_10_5() {
    let app = router(AppState::new(queue_of(25)));
    let mut seen = Vec::new();
    for (page, want) in [(1, 10), (2, 10), (3, 5), (4, 0)] {
        let (status, v) = call(&app, "GET", &format!("/queue?page={page}&page_size=10"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["entries"].as_array().unwrap().len(), want, "page {page}");
        assert_eq!(v["total"], 25);
        assert_eq!(v["total_pages"], 3);
        for e in v["entries"].as_array().unwrap() {
            seen.push(e["sample_id"].as_str().unwrap().to_string());
        }
    }
    let expected: Vec<String> = (0..25).map(|i| format!("p{i:02}#0/c{i}")).collect();
    assert_eq!(seen, expected, "oldest first");
}

#[tokio::test]
async fn bad_queue_queries_are_structured_errors() {
    let app = router(AppState::new(queue_of(3)));
    for uri in ["/queue?page=0", "/queue?page_size=0", "/queue?page_size=1000", "/queue?state=DONE", "/queue?page=x"] {
        let (status, v) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(v["code"], "InvalidQuery", "{uri}");
        assert!(v["message"].as_str().unwrap().len() > 3);
    }
}

#[tokio::test]
async fn empty_queue_returns_empty_page() {
    let app = router(AppState::new(AnnotationQueue::new()));
    let (status, v) = call(&app, "GET", "/queue", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["entries"], json!([]));
    assert_eq!(v["total_pages"], 0);
}

#[tokio::test]
async fn verdicts_drive_state_transitions() {
    let app = router(AppState::new(queue_of(2)));
    let id = "p00#0/c0";
    let (s, v) = label(&app, id, "ann-a", "FAVOR").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["state"], "AWAITING_SECOND");
    let (_, v) = label(&app, id, "ann-b", "AGAINST").await;
    assert_eq!(v["state"], "NEEDS_THIRD");

    let (_, v) = call(&app, "GET", "/queue?state=NEEDS_THIRD", None).await;
    assert_eq!(v["total"], 1);

    let (s, v) = label(&app, id, "ann-a", "AGAINST").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "AnnotatorNotIndependent");

    let (_, v) = label(&app, id, "ann-c", "AGAINST").await;
    assert_eq!(v["state"], "RESOLVED");
    assert_eq!(v["resolution"]["stance"], "AGAINST");
    assert_eq!(v["resolution"]["resolved_by"], "third_annotator");

    let (s, v) = label(&app, id, "ann-d", "FAVOR").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "EntryAlreadyResolved");

    let other = "p01#0/c1";
    label(&app, other, "ann-a", "FAVOR").await;
    let (s, v) = label(&app, other, "ann-a", "FAVOR").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "DuplicateAnnotator");
    let (_, v) = label(&app, other, "ann-b", "FAVOR").await;
    assert_eq!(v["state"], "RESOLVED");
    assert_eq!(v["resolution"]["resolved_by"], "agreement");
}

#[tokio::test]
async fn prior_human_labels_are_blinded_until_viewer_submits() {
    let app = router(AppState::new(queue_of(1)));
    let id = "p00#0/c0";
    label(&app, id, "ann-a", "FAVOR").await;
    for viewer in ["", "?annotator_id=ann-b"] {
        let (s, v) = call(&app, "GET", &format!("/entry/{}{viewer}", enc(id)), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["masked"], true);
        assert_eq!(v["human_label_count"], 1);
        assert_eq!(v["human_labels"][0]["stance"], Value::Null);
        assert_eq!(v["human_labels"][0]["annotator_id"], Value::Null);
        assert!(!v.to_string().contains("FAVOR"), "{v}");
    }
    let (_, page) = call(&app, "GET", "/queue?annotator_id=ann-b", None).await;
    assert!(!page.to_string().contains("FAVOR"));

    let (_, v) = label(&app, id, "ann-b", "AGAINST").await;
    assert_eq!(v["masked"], false);
    assert_eq!(v["human_labels"][0]["stance"], "FAVOR");
    let (_, v) = call(&app, "GET", &format!("/entry/{}?annotator_id=ann-c", enc(id)), None).await;
    assert_eq!(v["state"], "NEEDS_THIRD");
    assert_eq!(v["masked"], true);
    assert_eq!(v["resolution"], Value::Null);
}

#[tokio::test]
async fn blinding_can_be_disabled_and_model_labels_hidden() {
    let policy = ViewPolicy {
        show_model_labels: false,
        blind_human_labels: false,
    };
    let app = router(AppState::new(queue_of(1)).with_policy(policy));
    label(&app, "p00#0/c0", "ann-a", "FAVOR").await;
    let (_, v) = call(&app, "GET", &format!("/entry/{}", enc("p00#0/c0")), None).await;
    assert_eq!(v["masked"], false);
    assert_eq!(v["human_labels"][0]["stance"], "FAVOR");
    assert_eq!(v["model_labels"], json!([]));
}

#[tokio::test]
async fn unknown_entry_and_bad_body() {
    let app = router(AppState::new(queue_of(1)));
    let (s, v) = call(&app, "GET", "/entry/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "NotFound");
    let (s, v) = label(&app, "nope", "a", "FAVOR").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "NotFound");
    let (s, v) = call(
        &app,
        "POST",
        &format!("/entry/{}/label", enc("p00#0/c0")),
        Some(json!({"annotator_id": "a", "stance": "NEUTRAL", "topic": "OTHER"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "InvalidBody");
    let (s, v) = label(&app, "p00#0/c0", " ", "FAVOR").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "InvalidRecord");
    let (s, v) = call(&app, "GET", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "NotFound");
}

#[tokio::test]
async fn agreement_reports_kappa_from_contingency_fixture() {
    let app = router(AppState::new(queue_of(50)));
    let (s, v) = call(&app, "GET", "/agreement", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "NoDualAnnotations");

    // [[20, 5], [10, 15]]: rows annotator a, columns annotator b, FAVOR first.
    let cells = [(20, "FAVOR", "FAVOR"), (5, "FAVOR", "AGAINST"), (10, "AGAINST", "FAVOR"), (15, "AGAINST", "AGAINST")];
    let mut i = 0;
    for (n, a, b) in cells {
        for _ in 0..n {
            let id = format!("p{i:02}#0/c{i}");
            label(&app, &id, "ann-a", a).await;
            label(&app, &id, "ann-b", b).await;
            i += 1;
        }
    }
    let (s, v) = call(&app, "GET", "/agreement", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["items"], 50);
    let k = v["kappa"]["stance"].as_f64().unwrap();
    assert!((k - 0.4).abs() < 1e-12, "{k}");
    assert_eq!(format!("{k:.4}"), "0.4000");
    // One topic throughout: perfect observed agreement is reported as 1.
    assert_eq!(v["kappa"]["topic"], 1.0);
}

#[tokio::test]
async fn media_is_served_from_root_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("root/images")).unwrap();
    std::fs::write(dir.path().join("root/images/a.jpg"), b"jpeg-bytes").unwrap();
    std::fs::write(dir.path().join("secret.txt"), b"secret").unwrap();
    let app = router(AppState::new(AnnotationQueue::new()).with_media_root(dir.path().join("root")));
    let resp = app
        .clone()
        .oneshot(Request::get("/media/images/a.jpg").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/jpeg");
    assert_eq!(&resp.into_body().collect().await.unwrap().to_bytes()[..], b"jpeg-bytes");
    for uri in ["/media/../secret.txt", "/media/%2E%2E/secret.txt", "/media/images/missing.jpg"] {
        let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
        assert_ne!(resp.status(), StatusCode::OK, "{uri}");
    }
}

#[tokio::test]
async fn submitted_labels_reach_the_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("queue.jsonl");
    {
        let mut q = AnnotationQueue::open(&log).unwrap();
        q.enqueue(entry("s1")).unwrap();
        let app = router(AppState::new(q));
        label(&app, "s1", "ann-a", "FAVOR").await;
        label(&app, "s1", "ann-b", "FAVOR").await;
        let (s, _) = label(&app, "s1", "ann-c", "FAVOR").await;
        assert_eq!(s, StatusCode::CONFLICT);
    }
    let replayed = AnnotationQueue::open(&log).unwrap();
    let e = replayed.get("s1").unwrap();
    assert_eq!(e.human_labels.len(), 2);
    assert_eq!(format!("{:?}", e.state), "Resolved");
    assert_eq!(replayed.events().len(), 3);
}
