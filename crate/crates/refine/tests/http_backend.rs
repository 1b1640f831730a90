use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use refine::http::{HttpBackend, HttpOptions};
use refine_core::backend::HealthCheck;
use refine_core::{BackendError, GenParams, Generator, HealthStatus, LogProber, QualityScorer};
use serde_json::{json, Value};

type Handler = dyn Fn(&str, &Value, usize) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering each request through `handler(path,
/// body, request_number)` and closing the connection afterwards.
struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
}

fn stub(handler: impl Fn(&str, &Value, usize) -> (u16, String) + Send + Sync + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handler: Arc<Handler> = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let handler = handler.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let (status, text) = handler(&path, &body, n);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            });
        }
    });
    Stub { url, hits }
}

fn fast() -> HttpOptions {
    HttpOptions { timeout: Duration::from_secs(5), max_retries: 3, backoff: Duration::from_millis(1), ..HttpOptions::default() }
}

#[test]
fn scores_are_echoed() {
    let s = stub(|path, body, _| {
        assert_eq!(path, "/v1/score");
        assert_eq!(body["instruction"], "Sort.");
        (200, json!({"rew": -1.25, "nat": 0.5, "coh": 0.25, "und": 0.75}).to_string())
    });
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    let got = b.score_quality("Sort.", "3 1", "1 3").unwrap();
    assert_eq!((got.rew, got.nat, got.coh, got.und), (-1.25, 0.5, 0.25, 0.75));
}

#[test]
fn out_of_range_score_is_a_validation_error() {
    let s = stub(|_, _, _| (200, json!({"rew": 0.0, "nat": 1.2, "coh": 0.5, "und": 0.5}).to_string()));
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    assert!(matches!(b.score_quality("a", "", "b"), Err(BackendError::Validation(_))));
}

#[test]
fn malformed_body_is_a_validation_error() {
    let s = stub(|_, _, _| (200, "{\"txt\": 1}".into()));
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    assert!(matches!(b.complete("p", &GenParams::default()), Err(BackendError::Validation(_))));
}

#[test]
fn server_errors_are_retried() {
    let s = stub(|_, _, n| match n {
        0 => (500, "{}".into()),
        1 => (429, "{}".into()),
        _ => (200, json!({"logprob": -3.5}).to_string()),
    });
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    assert_eq!(b.logprob("p", "c").unwrap(), -3.5);
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_are_bounded() {
    let s = stub(|_, _, _| (503, "busy".into()));
    let b = HttpBackend::new(&s.url, HttpOptions { max_retries: 2, ..fast() }).unwrap();
    assert!(matches!(b.logprob("p", "c"), Err(BackendError::Backend(_))));
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(|_, _, _| (400, "bad".into()));
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    assert!(matches!(b.logprob("p", "c"), Err(BackendError::InvalidRequest(_))));
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn completion_is_cut_at_stop_strings() {
    let s = stub(|_, body, _| {
        assert_eq!(body["stop"], json!(["\n\n"]));
        (200, json!({"text": "first task\n\nsecond"}).to_string())
    });
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    let params = GenParams { stop: vec!["\n\n".into()], ..GenParams::default() };
    assert_eq!(b.complete("p", &params).unwrap(), "first task");
}

#[test]
fn batches_keep_request_order() {
    let s = stub(|_, body, _| {
        let p = body["prompt"].as_str().unwrap().to_string();
        thread::sleep(Duration::from_millis(if p.ends_with('0') { 30 } else { 1 }));
        (200, json!({"text": format!("echo {p}")}).to_string())
    });
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    let reqs: Vec<(String, GenParams)> = (0..6).map(|i| (format!("p{i}"), GenParams::default())).collect();
    let got: Vec<String> = b.complete_batch(&reqs).into_iter().map(Result::unwrap).collect();
    assert_eq!(got, (0..6).map(|i| format!("echo p{i}")).collect::<Vec<_>>());
}

#[test]
fn health_reports_scorer_only_server() {
    let s = stub(|path, _, _| match path {
        "/v1/score" => (200, json!({"rew": 0.0, "nat": 0.5, "coh": 0.5, "und": 0.5}).to_string()),
        _ => (404, "not here".into()),
    });
    let b = HttpBackend::new(&s.url, fast()).unwrap();
    match b.health_check() {
        HealthStatus::Reachable { capabilities } => {
            assert!(capabilities.scoring);
            assert!(!capabilities.generation && !capabilities.logprob);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn health_reports_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = HttpBackend::new(&format!("http://127.0.0.1:{port}"), fast()).unwrap();
    assert!(matches!(b.health_check(), HealthStatus::Unreachable { .. }));
}
