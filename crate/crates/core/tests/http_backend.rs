//! The HTTP backends against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use casegraph_core::gateway::{
    CompletionRequest, Gateway, GatewayError, HttpBackend, HttpFlavor, RetryPolicy, StageTag,
};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                if k == "content-length" {
                    len = v.parse().unwrap();
                }
                headers.push((k, v));
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn request() -> CompletionRequest {
    CompletionRequest::new("extract things", StageTag::Extraction).with_model("m1")
}

fn fast(attempts: u32) -> RetryPolicy {
    RetryPolicy::no_delay(attempts)
}

#[test]
fn ollama_body_and_response() {
    let (url, seen) = serve(vec![(200, r#"{"response":"hello","done":true}"#.into())]);
    let b = HttpBackend::new(HttpFlavor::Ollama, &url, None, Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(1));
    let r = gw.complete(&request()).unwrap();
    assert_eq!(r.text, "hello");
    let s = &seen.lock().unwrap()[0];
    assert_eq!(s.path, "/api/generate");
    assert_eq!(s.body["model"], "m1");
    assert_eq!(s.body["prompt"], "extract things");
    assert_eq!(s.body["stream"], false);
    assert_eq!(s.body["options"]["temperature"], 0.0);
    assert_eq!(s.body["options"]["num_predict"], 4096);
}

#[test]
fn openai_body_and_auth() {
    let (url, seen) = serve(vec![(200, r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#.into())]);
    let b = HttpBackend::new(HttpFlavor::OpenAi, &format!("{url}/"), None, Duration::from_secs(5))
        .unwrap()
        .with_auth_header("Authorization", "Bearer k1");
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(1));
    assert_eq!(gw.complete(&request()).unwrap().text, "hi");
    let s = &seen.lock().unwrap()[0];
    assert_eq!(s.path, "/v1/chat/completions");
    assert_eq!(s.body["messages"][0]["role"], "user");
    assert_eq!(s.body["messages"][0]["content"], "extract things");
    assert_eq!(s.body["max_tokens"], 4096);
    assert!(s.headers.contains(&("authorization".into(), "Bearer k1".into())));
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, r#"{"response":"third time"}"#.into()),
    ]);
    let b = HttpBackend::new(HttpFlavor::Ollama, &url, None, Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(3));
    assert_eq!(gw.complete(&request()).unwrap().text, "third time");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_exhausted() {
    let (url, _) = serve(vec![(502, "{}".into()), (502, "{}".into())]);
    let b = HttpBackend::new(HttpFlavor::Ollama, &url, None, Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(2));
    match gw.complete(&request()) {
        Err(GatewayError::Unavailable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected unavailable, got {other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, r#"{"error":"bad"}"#.into()), (200, r#"{"response":"x"}"#.into())]);
    let b = HttpBackend::new(HttpFlavor::Ollama, &url, None, Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(3));
    assert!(matches!(gw.complete(&request()), Err(GatewayError::Status { status: 400, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_text_field_is_malformed() {
    let (url, _) = serve(vec![(200, r#"{"unexpected":1}"#.into())]);
    let b = HttpBackend::new(HttpFlavor::Ollama, &url, None, Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(Arc::new(b)).with_retry(fast(1));
    assert!(matches!(gw.complete(&request()), Err(GatewayError::Malformed(_))));
}
