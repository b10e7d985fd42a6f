use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use itar_core::corpus::write_corpus;
use itar_core::harness::synth::{synth_corpus, SynthConfig};
use itar_core::itar::{IterationRecord, ItarConfig, LabelingMode, Thresholds};
use itar_service::session::{PhaseView, TopicCard};
use itar_service::{router, AppState, Session, SessionSpec, SessionState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn write_fixture(dir: &Path) -> PathBuf {
    let synth = synth_corpus(&SynthConfig::small(2)).unwrap();
    let path = dir.join("corpus.bin");
    write_corpus(&synth.corpus, &path).unwrap();
    path
}

fn spec(corpus: PathBuf) -> SessionSpec {
    let mut config = ItarConfig::new(8, Thresholds::new(0.6, 0.3));
    config.em_iterations = 10;
    config.max_iterations = 6;
    config.top_words = 5;
    config.tau_sift_bad = 1e2;
    config.tau_sift_good = 1e2;
    config.labeling_mode = LabelingMode::Interactive;
    SessionSpec { corpus, config }
}

fn app(session: Option<std::sync::Arc<Session>>) -> Router {
    router(AppState { session }, None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn state(app: &Router) -> SessionState {
    let (status, v) = call(app, "GET", "/session", None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(v).unwrap()
}

async fn settle(app: &Router) -> SessionState {
    let start = Instant::now();
    loop {
        let s = state(app).await;
        if !matches!(s.phase, PhaseView::Training { .. }) {
            return s;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "training did not finish");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

async fn iterate(app: &Router) -> SessionState {
    let (status, v) = call(app, "POST", "/iterate", None).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    settle(app).await
}

#[tokio::test]
async fn without_session_everything_is_404() {
    let app = app(None);
    assert_eq!(call(&app, "GET", "/session", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/history", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/iterate", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_session_and_label_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let session = Session::create(tmp.path().join("s"), spec(write_fixture(tmp.path()))).unwrap();
    let app = app(Some(session));

    let s = state(&app).await;
    assert_eq!(s.phase, PhaseView::Idle);
    assert_eq!(s.iteration, 0);
    assert_eq!((s.bank.good, s.bank.bad), (0, 0));
    assert_eq!(call(&app, "GET", "/history", None).await.1, json!([]));
    let label = json!({"topic_id": 0, "label": "good"});
    assert_eq!(call(&app, "POST", "/labels", Some(label.clone())).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "GET", "/topics/0", None).await.0, StatusCode::NOT_FOUND);

    let s = iterate(&app).await;
    assert_eq!(s.phase, PhaseView::AwaitingLabels);
    assert_eq!(s.topics.len(), 8);
    assert!(s.fixed_topics.is_empty());

    let (status, first) = call(&app, "POST", "/labels", Some(label.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let before = state(&app).await;
    let (_, second) = call(&app, "POST", "/labels", Some(label)).await;
    assert_eq!(first, second);
    assert_eq!(before, state(&app).await);
    let card: TopicCard = serde_json::from_value(first).unwrap();
    assert_eq!(card.human_label, Some(itar_core::itar::TopicLabel::Good));

    let unknown = json!({"topic_id": 99, "label": "bad"});
    assert_eq!(call(&app, "POST", "/labels", Some(unknown)).await.0, StatusCode::NOT_FOUND);
    let (status, detail) = call(&app, "GET", "/topics/0", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["role"], "free");
    assert!(!detail["column_head"].as_array().unwrap().is_empty());

    // topic 0 was forced good, so the next iteration fixes it
    let s = iterate(&app).await;
    assert_eq!(s.iteration, 1);
    let fixed = s.fixed_topics.first().expect("a fixed topic").id;
    let (status, _) = call(&app, "POST", "/labels", Some(json!({"topic_id": fixed, "label": "bad"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, detail) = call(&app, "GET", &format!("/topics/{fixed}"), None).await;
    assert_eq!(detail["role"], "fixed");
    assert_eq!(call(&app, "GET", "/history", None).await.1.as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_iterate_is_single_flight() {
    let tmp = tempfile::tempdir().unwrap();
    let session = Session::create(tmp.path().join("s"), spec(write_fixture(tmp.path()))).unwrap();
    let app = app(Some(session));
    let calls: Vec<_> = (0..8)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, "POST", "/iterate", None).await.0 })
        })
        .collect();
    let mut codes = Vec::new();
    for c in calls {
        codes.push(c.await.unwrap());
    }
    assert_eq!(codes.iter().filter(|&&c| c == StatusCode::ACCEPTED).count(), 1, "{codes:?}");
    assert_eq!(codes.iter().filter(|&&c| c == StatusCode::CONFLICT).count(), 7, "{codes:?}");
    settle(&app).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn relabel_changes_exactly_one_bank_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_fixture(tmp.path());
    let auto = app(Some(Session::create(tmp.path().join("auto"), spec(corpus.clone())).unwrap()));
    let edited = app(Some(Session::create(tmp.path().join("edited"), spec(corpus)).unwrap()));

    let s = iterate(&auto).await;
    iterate(&edited).await;
    let target = s.topics.iter().find(|c| c.auto_label == itar_core::itar::TopicLabel::Good).expect("a good topic").id;
    let (status, _) = call(&edited, "POST", "/labels", Some(json!({"topic_id": target, "label": "bad"}))).await;
    assert_eq!(status, StatusCode::OK);
    // commit iteration 0 in both; the next training starts afterwards
    iterate(&auto).await;
    iterate(&edited).await;

    let read = |name: &str| std::fs::read_to_string(tmp.path().join(name).join("bank.jsonl")).unwrap();
    let (a, b) = (read("auto"), read("edited"));
    let parse = |text: &str| -> Vec<Value> { text.lines().map(|l| serde_json::from_str(l).unwrap()).collect() };
    let (a, b) = (parse(&a), parse(&b));
    assert_eq!(a.len(), b.len());
    let good_id = format!("g000_{target:03}");
    let bad_id = format!("b000_{target:03}");
    let only_a: Vec<&Value> = a.iter().filter(|e| !b.contains(e)).collect();
    let only_b: Vec<&Value> = b.iter().filter(|e| !a.contains(e)).collect();
    assert_eq!(only_a.len(), 1);
    assert_eq!(only_b.len(), 1);
    assert_eq!(only_a[0]["id"], good_id.as_str());
    assert_eq!(only_b[0]["id"], bad_id.as_str());
    assert_eq!(only_a[0]["column"], only_b[0]["column"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn reopened_session_matches_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let session = Session::create(&dir, spec(write_fixture(tmp.path()))).unwrap();
    let first = app(Some(session));
    iterate(&first).await;
    iterate(&first).await;
    call(&first, "POST", "/labels", Some(json!({"topic_id": 7, "label": "neutral"}))).await;
    let before = state(&first).await;
    let (_, history_before) = call(&first, "GET", "/history", None).await;
    assert_eq!(before.phase, PhaseView::AwaitingLabels);
    drop(first);

    let second = app(Some(Session::open(&dir).unwrap()));
    assert_eq!(state(&second).await, before);
    let (_, history_after) = call(&second, "GET", "/history", None).await;
    assert_eq!(history_after, history_before);

    let on_disk = std::fs::read_to_string(dir.join("history.jsonl")).unwrap();
    let records: Vec<IterationRecord> = serde_json::from_value(history_after).unwrap();
    let served: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    assert_eq!(served, on_disk);
}

#[tokio::test(flavor = "multi_thread")]
async fn stopped_session_rejects_iterate() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = spec(write_fixture(tmp.path()));
    spec.config.max_iterations = 2;
    let app = app(Some(Session::create(tmp.path().join("s"), spec).unwrap()));
    let mut s = iterate(&app).await;
    while s.phase == PhaseView::AwaitingLabels {
        s = iterate(&app).await;
    }
    let PhaseView::Stopped { reason } = &s.phase else { panic!("{:?}", s.phase) };
    assert!(!reason.is_empty());
    let (status, body) = call(&app, "POST", "/iterate", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains(reason.as_str()));
    assert_eq!(call(&app, "GET", "/history", None).await.1.as_array().unwrap().len(), s.history.len());
}
