//! HTTP backend behavior against a local server: both request shapes,
//! auth header, rate-limit retries, error statuses, and timeouts.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use multiprompt::backend::{
    Backend, BackendError, BackendSpec, CompletionRequest, HttpBackend,
};

struct Received {
    body: serde_json::Value,
    auth: Option<String>,
}

/// Serves scripted (status, body) responses on a background thread and
/// captures what arrived.
fn serve(responses: Vec<(u16, String)>) -> (String, std::sync::mpsc::Receiver<Received>, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_inner = hits.clone();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            hits_inner.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(value) = lower.strip_prefix("content-length:") {
                    content_length = value.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            let _ = tx.send(Received {
                body: serde_json::from_slice(&payload).unwrap_or(serde_json::Value::Null),
                auth,
            });
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}/v1/completions"), rx, hits)
}

fn request<'a>(prompt: &'a str) -> CompletionRequest<'a> {
    CompletionRequest {
        prompt,
        task_id: "t",
        template_id: "tpl",
        instance_id: "i0",
        gold: &[],
    }
}

fn fast_backend(spec: &BackendSpec) -> Backend {
    let mut http = HttpBackend::from_spec(spec).unwrap();
    http.set_backoff_base(Duration::from_millis(1));
    Backend::Http(http)
}

#[test]
fn completion_style_request_and_response() {
    let (endpoint, rx, _) = serve(vec![(
        200,
        r#"{"choices":[{"text":"a rhyming word"}]}"#.to_string(),
    )]);
    let mut spec = BackendSpec::http("test-model", endpoint);
    spec.decode.max_new_tokens = 16;
    let backend = fast_backend(&spec);
    let completion = backend.complete(&request("say something")).unwrap();
    assert_eq!(completion, "a rhyming word");
    let received = rx.recv_timeout(Duration::from_secs(2)).unwrap();
    assert_eq!(received.body["model"], "test-model");
    assert_eq!(received.body["prompt"], "say something");
    assert_eq!(received.body["temperature"], 0.0);
    assert_eq!(received.body["max_tokens"], 16);
    assert!(received.auth.is_none());
}

#[test]
fn chat_style_request_and_auth_env() {
    let (endpoint, rx, _) = serve(vec![(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#.to_string(),
    )]);
    let mut spec = BackendSpec::http("chat-model", endpoint);
    spec.chat_format = true;
    spec.auth_env_var = Some("MULTIPROMPT_TEST_TOKEN".into());
    std::env::set_var("MULTIPROMPT_TEST_TOKEN", "sekrit");
    let backend = fast_backend(&spec);
    assert_eq!(backend.complete(&request("hello")).unwrap(), "hi");
    let received = rx.recv_timeout(Duration::from_secs(2)).unwrap();
    assert_eq!(received.body["messages"][0]["role"], "user");
    assert_eq!(received.body["messages"][0]["content"], "hello");
    assert_eq!(received.auth.as_deref(), Some("Bearer sekrit"));
}

#[test]
fn rate_limit_retries_then_succeeds() {
    let ok = r#"{"choices":[{"text":"finally"}]}"#.to_string();
    let (endpoint, _rx, hits) = serve(vec![
        (429, "{}".to_string()),
        (429, "{}".to_string()),
        (200, ok),
    ]);
    let backend = fast_backend(&BackendSpec::http("m", endpoint));
    assert_eq!(backend.complete(&request("p")).unwrap(), "finally");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn rate_limit_exhausts_after_three_retries() {
    let responses = vec![(429, "{}".to_string()); 5];
    let (endpoint, _rx, hits) = serve(responses);
    let backend = fast_backend(&BackendSpec::http("m", endpoint));
    match backend.complete(&request("p")) {
        Err(BackendError::RateLimited { retries: 3 }) => {}
        other => panic!("expected rate-limit exhaustion, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 4);
}

#[test]
fn server_error_surfaces_status() {
    let (endpoint, _rx, _) = serve(vec![(500, "{}".to_string())]);
    let backend = fast_backend(&BackendSpec::http("m", endpoint));
    match backend.complete(&request("p")) {
        Err(BackendError::HttpStatus(500)) => {}
        other => panic!("expected status error, got {other:?}"),
    }
}

#[test]
fn timeout_is_reported() {
    // a listener that accepts but never answers
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let _held = listener.accept();
        std::thread::sleep(Duration::from_secs(3));
    });
    let mut spec = BackendSpec::http("m", format!("http://{addr}/v1/completions"));
    spec.request_timeout_ms = 100;
    let backend = fast_backend(&spec);
    match backend.complete(&request("p")) {
        Err(BackendError::Timeout(_)) => {}
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn malformed_response_is_reported() {
    let (endpoint, _rx, _) = serve(vec![(200, r#"{"unexpected":true}"#.to_string())]);
    let backend = fast_backend(&BackendSpec::http("m", endpoint));
    assert!(matches!(
        backend.complete(&request("p")),
        Err(BackendError::MalformedResponse(_))
    ));
}
