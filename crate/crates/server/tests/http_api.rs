//! HTTP contract tests against the router, in process.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use surveystat::config::{NotifyConfig, ServiceConfig};
use surveystat::notify::{CaptureTransport, DeliveryState};
use surveystat::{router, AppState};
use surveystat_core::defaults::{self, DefaultKind};
use surveystat_core::survey::TokenClass;
use surveystat_core::Store;
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    state: AppState,
    app: Router,
    capture: Arc<CaptureTransport>,
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    for k in [DefaultKind::Event, DefaultKind::Spc, DefaultKind::Pca] {
        defaults::install(&store, k, false).unwrap();
    }
    let config = ServiceConfig {
        store: dir.path().to_path_buf(),
        notify: NotifyConfig {
            queue_capacity: 1024,
            max_attempts: 2,
            initial_backoff_ms: 1,
            max_backoff_ms: 2,
        },
        ..Default::default()
    };
    let capture = Arc::new(CaptureTransport::new());
    let state = AppState::new(config, store, Some(capture.clone()));
    Harness {
        _dir: dir,
        app: router(state.clone()),
        state,
        capture,
    }
}

impl Harness {
    fn token(&self, qid: &str, level: u32, class: TokenClass) -> String {
        self.state.store.issue_tokens(qid, 1, level, class).unwrap()[0].as_str().to_string()
    }

    async fn call(&self, method: Method, uri: &str, session: Option<&str>, body: Body) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(s) = session {
            req = req.header(header::AUTHORIZATION, format!("Bearer {s}"));
        }
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    async fn post_json(&self, uri: &str, session: Option<&str>, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, session, Body::from(body.to_string())).await
    }

    async fn get(&self, uri: &str, session: Option<&str>) -> (StatusCode, Value) {
        self.call(Method::GET, uri, session, Body::empty()).await
    }

    async fn login(&self, token: &str) -> String {
        let (status, body) = self.post_json("/api/auth", None, json!({ "token": token })).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["session"].as_str().unwrap().to_string()
    }
}

fn answers(v: u8) -> Value {
    Value::Object((1..=11).map(|i| (format!("q{i}"), json!(v))).collect())
}

#[tokio::test]
async fn respondent_token_is_single_use_viewer_is_not() {
    let h = harness();
    let t = h.token("event", 0, TokenClass::Respondent);
    let (status, body) = h.post_json("/api/auth", None, json!({ "token": t })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["level"], 0);
    assert_eq!(body["questionnaire"], "event");
    assert_eq!(body["session"].as_str().unwrap().len(), 32);
    let (status, body) = h.post_json("/api/auth", None, json!({ "token": t })).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"], "unauthorized");

    let v = h.token("event", 2, TokenClass::Viewer);
    for _ in 0..2 {
        let (status, body) = h.post_json("/api/auth", None, json!({ "token": v, "questionnaire": "event" })).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["class"], "viewer");
    }
    let (status, _) = h.post_json("/api/auth", None, json!({ "token": "AAAAAAAAAAAAAAAAAAAAAAAAAA" })).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = h.post_json("/api/auth", None, json!({ "tok": 1 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn submit_validates_and_is_single_submission() {
    let h = harness();
    let s = h.login(&h.token("event", 0, TokenClass::Respondent)).await;
    let uri = "/api/questionnaires/event/responses";

    let mut bad = answers(3);
    bad["q4"] = json!(7);
    bad.as_object_mut().unwrap().remove("q9");
    let (status, body) = h.post_json(uri, None, json!({ "session": s, "answers": bad })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "validation");
    let v = body["violations"].as_array().unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v[0]["question_id"], "q4");
    assert_eq!(v[0]["kind"], "out_of_range");
    assert_eq!(v[1]["kind"], "missing_required");
    assert_eq!(h.state.store.version("event").unwrap(), 0);

    let (status, body) = h.post_json(uri, None, json!({ "session": s, "answers": answers(4) })).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["version"], 1);
    let (status, body) = h.post_json(uri, Some(&s), json!({ "answers": answers(4) })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "already_submitted");
    assert_eq!(h.state.store.version("event").unwrap(), 1);

    let (status, _) = h.post_json(uri, None, json!({ "session": "feedface", "answers": answers(4) })).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let viewer = h.login(&h.token("event", 1, TokenClass::Viewer)).await;
    let (status, _) = h.post_json(uri, Some(&viewer), json!({ "answers": answers(4) })).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(h.state.store.version("event").unwrap(), 1);
}

#[tokio::test]
async fn report_reads_own_write_and_filters_by_level() {
    let h = harness();
    let s = h.login(&h.token("event", 0, TokenClass::Respondent)).await;
    let (status, r) = h.get("/api/questionnaires/event/report", Some(&s)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["data_version"], 0);
    assert_eq!(r["blocks"][0]["status"], "empty");

    h.post_json("/api/questionnaires/event/responses", Some(&s), json!({ "answers": answers(5) })).await;
    let (_, r) = h.get(&format!("/api/questionnaires/event/report?session={s}"), None).await;
    assert_eq!(r["data_version"], 1);
    assert_eq!(r["viewer_level"], 0);
    let blocks = r["blocks"].as_array().unwrap();
    assert!(blocks.iter().all(|b| b["min_level"] == 0));
    let counts = &blocks[0]["result"]["items"][0]["profile"]["frequencies"]["counts"];
    assert_eq!(counts, &json!([0, 0, 0, 0, 1]));
    assert!(blocks[0]["charts"][0]["svg"].as_str().unwrap().starts_with("<svg"));

    let director = h.login(&h.token("event", 2, TokenClass::Viewer)).await;
    let (_, r) = h.get("/api/questionnaires/event/report", Some(&director)).await;
    assert_eq!(r["blocks"].as_array().unwrap().len(), defaults::event_spec().blocks.len());

    let (status, _) = h.get("/api/questionnaires/nope/report", Some(&director)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.get("/api/questionnaires/event/report", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn report_level_gate() {
    let h = harness();
    let def = r#"
id = "staff"
title = "Staff review"
min_level_to_view_report = 2

[[question]]
id = "grade"
prompt = "Grade"
kind = "numeric"
"#;
    h.state
        .store
        .store_questionnaire(&surveystat_core::survey::create_questionnaire(def).unwrap())
        .unwrap();
    let low = h.login(&h.token("staff", 0, TokenClass::Respondent)).await;
    let (status, body) = h.get("/api/questionnaires/staff/report", Some(&low)).await;
    assert_eq!(status, StatusCode::FORBIDDEN, "{body}");
    let high = h.login(&h.token("staff", 2, TokenClass::Viewer)).await;
    let (status, _) = h.get("/api/questionnaires/staff/report", Some(&high)).await;
    assert_eq!(status, StatusCode::OK);
    // A session for one questionnaire does not open another's report.
    let other = h.login(&h.token("event", 2, TokenClass::Viewer)).await;
    let (status, _) = h.get("/api/questionnaires/staff/report", Some(&other)).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn dataset_upload_and_analysis() {
    let h = harness();
    let admin = h.login(&h.token("event", 3, TokenClass::Viewer)).await;
    let viewer = h.login(&h.token("event", 1, TokenClass::Viewer)).await;
    let csv = defaults::SPC_CSV;

    let (status, _) = h.call(Method::POST, "/api/datasets?name=rings", Some(&viewer), Body::from(csv)).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.call(Method::POST, "/api/datasets?name=rings", None, Body::from(csv)).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, body) = h.call(Method::POST, "/api/datasets?name=rings", Some(&admin), Body::from(csv)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["rows"], 40);
    let (status, _) = h.call(Method::POST, "/api/datasets?name=rings", Some(&admin), Body::from(csv)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = h
        .call(Method::POST, "/api/datasets?name=bad", Some(&admin), Body::from("a,b\n1,2\n3,x\n"))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = body["message"].as_str().unwrap();
    assert!(msg.contains("line 3") && msg.contains("\"b\""), "{msg}");

    let (status, block) = h.get("/api/datasets/rings/analysis?kind=xbar_r", Some(&viewer)).await;
    assert_eq!(status, StatusCode::OK, "{block}");
    assert_eq!(block["result"]["xbar_points"].as_array().unwrap().len(), 40);
    assert_eq!(block["charts"].as_array().unwrap().len(), 2);

    let (status, block) = h.get("/api/datasets/pca-default/analysis?kind=pca&mode=covariance", Some(&viewer)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(block["result"]["eigenvalues"].as_array().unwrap().len(), 4);
    assert_eq!(block["result"]["mode"], "covariance");

    let flat = "a,b\n1,5\n2,5\n3,5\n";
    h.call(Method::POST, "/api/datasets?name=flat", Some(&admin), Body::from(flat)).await;
    let (status, body) = h.get("/api/datasets/flat/analysis?kind=pca", Some(&viewer)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "analysis");
    let (status, _) = h.get("/api/datasets/flat/analysis?kind=pie", Some(&viewer)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.get("/api/datasets/none/analysis?kind=pca", Some(&viewer)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.get("/api/datasets/rings/analysis?kind=pca", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn confirmations_follow_commit_order_and_survive_outage() {
    let h = harness();
    let mut sessions = Vec::new();
    for _ in 0..4 {
        sessions.push(h.login(&h.token("event", 0, TokenClass::Respondent)).await);
    }
    for s in &sessions[..2] {
        let (status, _) = h
            .post_json("/api/questionnaires/event/responses", Some(s), json!({ "answers": answers(2), "contact": "x@y.org" }))
            .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    h.state.notifier.wait_idle().await;
    let msgs = h.capture.messages();
    assert_eq!(msgs.iter().map(|m| m.version).collect::<Vec<_>>(), vec![1, 2]);
    assert!(msgs[0].subject.contains("Scientific event evaluation"));
    assert_eq!(msgs[0].to, "x@y.org");

    h.capture.set_down(true);
    for s in &sessions[2..] {
        let (status, _) = h
            .post_json("/api/questionnaires/event/responses", Some(s), json!({ "answers": answers(2) }))
            .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    h.state.notifier.wait_idle().await;
    assert_eq!(h.state.notifier.count(DeliveryState::Failed), 2);
    assert_eq!(h.capture.messages().len(), 2);
}

#[tokio::test]
async fn stored_report_specs_and_health() {
    let h = harness();
    let v = h.login(&h.token("event", 0, TokenClass::Viewer)).await;
    let (status, r) = h.get("/api/reports/spc-default", Some(&v)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["blocks"].as_array().unwrap().len(), 1);
    assert_eq!(r["blocks"][0]["kind"], "xbar_r");
    let (status, _) = h.get("/api/reports/missing", Some(&v)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = h.get("/api/health", None).await;
    assert_eq!((status, body), (StatusCode::OK, json!({ "status": "ok" })));
    let (status, q) = h.get("/api/questionnaires/event", Some(&v)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(q["questions"].as_array().unwrap().len(), 11);
}
