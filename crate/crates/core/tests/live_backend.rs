//! Live chat adapter exercised against a local single-shot HTTP server:
//! request wire shape, credential header, and retry behavior.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use causal_prompt::backend::{parse_config, BackendError, ChatBackend, ChatRequest, LiveChatBackend};

struct CapturedRequest {
    headers: String,
    body: String,
}

fn read_request(stream: &mut std::net::TcpStream) -> CapturedRequest {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        let n = stream.read(&mut chunk).unwrap();
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        if n == 0 {
            panic!("connection closed before headers were complete");
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            if k.eq_ignore_ascii_case("content-length") {
                v.trim().parse().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).unwrap();
        buf.extend_from_slice(&chunk[..n]);
    }
    CapturedRequest {
        headers,
        body: String::from_utf8_lossy(&buf[header_end..header_end + content_length]).to_string(),
    }
}

fn respond(stream: &mut std::net::TcpStream, status: &str, extra_headers: &str, body: &str) {
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{extra_headers}Connection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).unwrap();
}

/// Serve `responses` one connection at a time, sending captured requests
/// through the channel.
fn serve(responses: Vec<(&'static str, &'static str, &'static str)>) -> (String, mpsc::Receiver<CapturedRequest>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, extra, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let captured = read_request(&mut stream);
            respond(&mut stream, status, extra, body);
            let _ = tx.send(captured);
        }
    });
    (endpoint, rx)
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"forty-two"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#;

fn backend_for(endpoint: &str) -> LiveChatBackend {
    std::env::set_var("TEST_CHAT_CREDENTIAL", "sk-test-token");
    let config = parse_config(&format!(
        "model_id = gpt-4o\nendpoint = {endpoint}\ncredential_env = TEST_CHAT_CREDENTIAL\n"
    ))
    .unwrap();
    LiveChatBackend::from_config(config).unwrap()
}

#[test]
fn live_adapter_sends_standard_wire_shape() {
    let (endpoint, rx) = serve(vec![("200 OK", "", OK_BODY)]);
    let backend = backend_for(&endpoint);
    let response = backend.chat(&ChatRequest::new("gpt-4o", "What is the answer?")).unwrap();
    assert_eq!(response.text, "forty-two");
    assert_eq!(response.prompt_tokens, 12);
    assert_eq!(response.completion_tokens, 3);

    let captured = rx.recv().unwrap();
    assert!(captured.headers.starts_with("POST /v1/chat/completions"));
    assert!(captured.headers.to_lowercase().contains("authorization: bearer sk-test-token"));
    let body: serde_json::Value = serde_json::from_str(&captured.body).unwrap();
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["temperature"], 0.1);
    assert_eq!(body["max_tokens"], 4096);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "What is the answer?");
}

#[test]
fn live_adapter_retries_rate_limits_then_succeeds() {
    let (endpoint, rx) = serve(vec![
        ("429 Too Many Requests", "Retry-After: 0\r\n", "{}"),
        ("200 OK", "", OK_BODY),
    ]);
    let backend = backend_for(&endpoint);
    let response = backend.chat(&ChatRequest::new("gpt-4o", "again")).unwrap();
    assert_eq!(response.text, "forty-two");
    // Both attempts reached the server.
    assert!(rx.recv().is_ok());
    assert!(rx.recv().is_ok());
}

#[test]
fn live_adapter_surfaces_final_error_without_retry_budget() {
    let (endpoint, _rx) = serve(vec![("429 Too Many Requests", "Retry-After: 1\r\n", "{}")]);
    let backend = backend_for(&endpoint).with_max_retries(0);
    match backend.chat(&ChatRequest::new("gpt-4o", "again")) {
        Err(BackendError::RateLimited { retry_after }) => {
            assert_eq!(retry_after, Some(1.0));
        }
        other => panic!("expected RateLimited, got {other:?}"),
    }
}

#[test]
fn live_adapter_reports_protocol_errors() {
    let (endpoint, _rx) = serve(vec![
        ("500 Internal Server Error", "", "{}"),
        ("500 Internal Server Error", "", "{}"),
    ]);
    let backend = backend_for(&endpoint).with_max_retries(1);
    match backend.chat(&ChatRequest::new("gpt-4o", "boom")) {
        Err(BackendError::Protocol(msg)) => assert!(msg.contains("500"), "{msg}"),
        other => panic!("expected Protocol error, got {other:?}"),
    }
}
