//! Store behavior across restarts, simulated crashes and concurrent writers.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::{Arc, Barrier};

use chrono::Utc;
use surveystat_core::store::{Store, StoreError};
use surveystat_core::survey::{create_questionnaire, Answer, RawToken, ResponseRecord, TokenClass, TokenRejection};

const DEF: &str = r#"
id = "fb"
title = "Feedback"
min_level_to_view_report = 0

[[question]]
id = "score"
prompt = "Score"
kind = "likert5"
"#;

fn setup(n: usize) -> (tempfile::TempDir, Store, Vec<RawToken>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.store_questionnaire(&create_questionnaire(DEF).unwrap()).unwrap();
    let tokens = store.issue_tokens("fb", n, 0, TokenClass::Respondent).unwrap();
    (dir, store, tokens)
}

fn record(store: &Store, token: &RawToken, score: u8) -> ResponseRecord {
    ResponseRecord {
        questionnaire_id: "fb".into(),
        token_fingerprint: store.fingerprint("fb", token.as_str()).unwrap(),
        answers: BTreeMap::from([("score".to_string(), Answer::Likert(score))]),
        submitted_at: Utc::now(),
    }
}

fn responses_log(dir: &tempfile::TempDir) -> std::path::PathBuf {
    dir.path().join("questionnaires/fb/responses.log")
}

#[test]
fn sequential_appends_count_up() {
    let (_dir, store, tokens) = setup(165);
    for (i, t) in tokens.iter().enumerate() {
        assert_eq!(store.append_response("fb", record(&store, t, 1 + (i % 5) as u8)).unwrap(), i as u64 + 1);
    }
    assert_eq!(store.version("fb").unwrap(), 165);
    let snap = store.load_responses("fb", Some(2)).unwrap();
    assert_eq!(snap.records.len(), 2);
    assert!(matches!(store.load_responses("fb", Some(166)), Err(StoreError::VersionAhead { .. })));
}

#[test]
fn torn_tail_is_dropped_on_reopen() {
    let (dir, store, tokens) = setup(3);
    store.append_response("fb", record(&store, &tokens[0], 4)).unwrap();
    store.append_response("fb", record(&store, &tokens[1], 5)).unwrap();
    let before = std::fs::read(responses_log(&dir)).unwrap();
    drop(store);

    // A crash in the middle of the third append leaves a partial line.
    let mut f = OpenOptions::new().append(true).open(responses_log(&dir)).unwrap();
    f.write_all(br#"{"version":3,"record":{"questionnaire_id":"fb","tok"#).unwrap();
    drop(f);

    let store = Store::open(dir.path()).unwrap();
    let snap = store.load_responses("fb", None).unwrap();
    assert_eq!(snap.version, 2);
    assert_eq!(snap.records[1].answers["score"], Answer::Likert(5));
    assert_eq!(std::fs::read(responses_log(&dir)).unwrap(), before);
    // The token whose append was torn can still submit.
    assert_eq!(store.append_response("fb", record(&store, &tokens[2], 1)).unwrap(), 3);
}

#[test]
fn malformed_complete_line_is_corruption() {
    let (dir, store, tokens) = setup(1);
    store.append_response("fb", record(&store, &tokens[0], 4)).unwrap();
    drop(store);
    let mut f = OpenOptions::new().append(true).open(responses_log(&dir)).unwrap();
    f.write_all(b"not json\n").unwrap();
    drop(f);
    let store = Store::open(dir.path()).unwrap();
    match store.load_responses("fb", None) {
        Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn concurrent_appends_get_distinct_versions() {
    let (_dir, store, tokens) = setup(64);
    let store = Arc::new(store);
    let barrier = Arc::new(Barrier::new(16));
    let tokens = Arc::new(tokens);
    let handles: Vec<_> = (0..16)
        .map(|w| {
            let (store, barrier, tokens) = (store.clone(), barrier.clone(), tokens.clone());
            std::thread::spawn(move || {
                barrier.wait();
                (0..4)
                    .map(|k| store.append_response("fb", record(&store, &tokens[w * 4 + k], 3)).unwrap())
                    .collect::<Vec<u64>>()
            })
        })
        .collect();
    let mut versions: Vec<u64> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    versions.sort();
    assert_eq!(versions, (1..=64).collect::<Vec<_>>());
    assert_eq!(store.load_responses("fb", None).unwrap().records.len(), 64);
}

#[test]
fn readers_see_consistent_prefixes_during_writes() {
    let (_dir, store, tokens) = setup(200);
    let store = Arc::new(store);
    let writer = {
        let store = store.clone();
        std::thread::spawn(move || {
            for t in &tokens {
                store.append_response("fb", record(&store, t, 2)).unwrap();
            }
        })
    };
    let mut last = 0;
    while last < 200 {
        let snap = store.load_responses("fb", None).unwrap();
        assert_eq!(snap.records.len() as u64, snap.version);
        assert!(snap.version >= last);
        last = snap.version;
    }
    writer.join().unwrap();
}

#[test]
fn two_store_handles_share_one_log() {
    // Models the CLI and the service running against the same directory.
    let (dir, a, tokens) = setup(4);
    let b = Store::open(dir.path()).unwrap();
    assert_eq!(a.append_response("fb", record(&a, &tokens[0], 1)).unwrap(), 1);
    assert_eq!(b.append_response("fb", record(&b, &tokens[1], 2)).unwrap(), 2);
    assert_eq!(a.append_response("fb", record(&a, &tokens[2], 3)).unwrap(), 3);
    assert!(matches!(
        b.append_response("fb", record(&b, &tokens[0], 4)),
        Err(StoreError::AlreadySubmitted)
    ));
    let more = b.issue_tokens("fb", 1, 1, TokenClass::Viewer).unwrap();
    assert_eq!(a.check_token("fb", more[0].as_str()).unwrap().level, 1);
    assert_eq!(b.version("fb").unwrap(), 3);
}

#[test]
fn redemption_is_exactly_once_under_contention() {
    let (dir, store, tokens) = setup(165);
    let store = Arc::new(store);
    let tokens: Arc<Vec<String>> = Arc::new(tokens.iter().map(|t| t.as_str().to_string()).collect());
    let barrier = Arc::new(Barrier::new(16));
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let (store, tokens, barrier) = (store.clone(), tokens.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                let mut ok = vec![0u32; tokens.len()];
                for (i, t) in tokens.iter().enumerate() {
                    match store.redeem_token("fb", t) {
                        Ok(_) => ok[i] += 1,
                        Err(StoreError::Token(TokenRejection::AlreadyRedeemed)) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
                ok
            })
        })
        .collect();
    let mut total = vec![0u32; 165];
    for h in handles {
        for (i, c) in h.join().unwrap().into_iter().enumerate() {
            total[i] += c;
        }
    }
    assert!(total.iter().all(|&c| c == 1));

    // Nothing on disk contains a raw token.
    for entry in walk(dir.path()) {
        let bytes = std::fs::read(&entry).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        for t in tokens.iter() {
            assert!(!text.contains(t.as_str()), "{} leaks a token", entry.display());
        }
    }
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
