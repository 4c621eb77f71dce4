use std::path::Path;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use surveystat::{router, AppState, ServiceConfig};
use surveystat_core::Store;
use tower::ServiceExt;

fn cli(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surveystat"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("run surveystat")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn err(out: &Output) -> String {
    assert!(!out.status.success(), "unexpected success: {}", String::from_utf8_lossy(&out.stdout));
    String::from_utf8(out.stderr.clone()).unwrap()
}

const SMALL: &str = r#"
id = "small"
title = "Small"

[[question]]
id = "a"
prompt = "First"
kind = "likert5"

[[question]]
id = "b"
prompt = "Second"
kind = "numeric"
"#;

#[test]
fn create_reports_definition_problems() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let file = dir.path().join("small.toml");
    std::fs::write(&file, SMALL).unwrap();
    assert_eq!(ok(&cli(&store, &["create", file.to_str().unwrap()])).trim(), "small");
    assert!(err(&cli(&store, &["create", file.to_str().unwrap()])).contains("exists"));

    let missing = dir.path().join("nope.toml");
    let e = err(&cli(&store, &["create", missing.to_str().unwrap()]));
    assert!(e.contains("no such file") && e.contains("nope.toml"), "{e}");

    let dup = SMALL.replace("id = \"small\"", "id = \"dup\"").replace("id = \"b\"", "id = \"a\"");
    std::fs::write(&file, dup).unwrap();
    let e = err(&cli(&store, &["create", file.to_str().unwrap()]));
    assert!(e.contains("duplicate question id \"a\""), "{e}");
}

#[test]
fn tokens_and_import_default() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path();
    assert_eq!(ok(&cli(store, &["import-default", "event"])).trim(), "event");
    assert!(err(&cli(store, &["import-default", "event"])).contains("exists"));
    assert_eq!(ok(&cli(store, &["import-default", "event", "--overwrite"])).trim(), "event");

    let text = ok(&cli(store, &["tokens", "event", "-n", "165", "--level", "1"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 165);
    let mut uniq: Vec<&str> = lines.iter().map(|l| l.split(',').next().unwrap()).collect();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), 165);
    for l in &lines {
        let parts: Vec<&str> = l.split(',').collect();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0].len(), 26);
        assert_eq!(&parts[1..], ["event", "1"]);
    }
    assert!(!err(&cli(store, &["tokens", "event", "-n", "0"])).is_empty());
    assert!(err(&cli(store, &["tokens", "ghost", "-n", "1"])).contains("not-found"));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn seed_responses(store: &Path, n: usize) {
    let s = Store::open(store).unwrap();
    let tokens = s.issue_tokens("event", n, 0, surveystat_core::survey::TokenClass::Respondent).unwrap();
    let q = s.load_questionnaire("event").unwrap();
    let start = chrono::DateTime::parse_from_rfc3339("2026-03-02T09:00:00Z").unwrap().to_utc();
    for (i, t) in tokens.iter().enumerate() {
        let answers: serde_json::Map<String, Value> =
            (1..=11).map(|k| (format!("q{k}"), json!(1 + (i * k + i * i / 3 + k) % 5))).collect();
        s.redeem_token("event", t.as_str()).unwrap();
        let fp = s.fingerprint("event", t.as_str()).unwrap();
        let at = start + chrono::Duration::minutes(i as i64);
        let record = surveystat_core::survey::validate_response(&q, &answers, fp, at).unwrap();
        s.append_response("event", record).unwrap();
    }
}

#[test]
fn export_report_is_deterministic_and_level_filtered() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    ok(&cli(&store, &["import-default", "event"]));

    let empty = dir.path().join("empty");
    ok(&cli(&store, &["export-report", "event", "--level", "2", "--out", empty.to_str().unwrap()]));
    let report: Value = serde_json::from_slice(&std::fs::read(empty.join("report.json")).unwrap()).unwrap();
    for b in report["blocks"].as_array().unwrap() {
        assert_eq!(b["status"], "empty");
        assert_eq!(b["message"], "no data yet");
    }

    seed_responses(&store, 12);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let printed = ok(&cli(&store, &["export-report", "event", "--level", "2", "--out", d.to_str().unwrap(), "--at-version", "12"]));
        assert!(printed.lines().next().unwrap().ends_with("report.json"));
    }
    let files = read_dir_sorted(&a);
    assert_eq!(files, read_dir_sorted(&b));
    assert!(files.iter().any(|(n, _)| n.ends_with("-scores.svg")));
    let full: Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(full["blocks"].as_array().unwrap().len(), 4);
    assert_eq!(full["data_version"], 12);

    let low = dir.path().join("low");
    ok(&cli(&store, &["export-report", "event", "--out", low.to_str().unwrap()]));
    let r: Value = serde_json::from_slice(&std::fs::read(low.join("report.json")).unwrap()).unwrap();
    assert!(r["blocks"].as_array().unwrap().iter().all(|b| b["min_level"] == 0));

    assert!(err(&cli(&store, &["export-report", "ghost", "--out", low.to_str().unwrap()])).contains("not-found"));
    let e = err(&cli(&store, &["export-report", "event", "--at-version", "99", "--out", low.to_str().unwrap()]));
    assert!(e.contains("invalid"), "{e}");

    ok(&cli(&store, &["import-default", "spc"]));
    let spc = dir.path().join("spc");
    let printed = ok(&cli(&store, &["export-report", "spc-default", "--out", spc.to_str().unwrap()]));
    assert!(printed.contains("0-xbar.svg") && printed.contains("0-r.svg"), "{printed}");
}

#[tokio::test]
async fn export_matches_http_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    ok(&cli(&root, &["import-default", "event"]));
    seed_responses(&root, 6);
    let viewer = ok(&cli(&root, &["tokens", "event", "-n", "1", "--level", "1", "--viewer"]));
    let token = viewer.split(',').next().unwrap().to_string();

    let out = dir.path().join("out");
    ok(&cli(&root, &["export-report", "event", "--level", "1", "--out", out.to_str().unwrap()]));
    let exported = std::fs::read_to_string(out.join("report.json")).unwrap();

    let config = ServiceConfig {
        store: root.clone(),
        ..Default::default()
    };
    let app = router(AppState::new(config, Store::open(&root).unwrap(), None));
    let call = |req: Request<Body>| {
        let app = app.clone();
        async move {
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            (status, resp.into_body().collect().await.unwrap().to_bytes())
        }
    };
    let (status, body) = call(
        Request::post("/api/auth")
            .body(Body::from(json!({ "token": token }).to_string()))
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let session: Value = serde_json::from_slice(&body).unwrap();
    let (status, body) = call(
        Request::get("/api/questionnaires/event/report")
            .header(header::AUTHORIZATION, format!("Bearer {}", session["session"].as_str().unwrap()))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(std::str::from_utf8(&body).unwrap(), exported);
}
