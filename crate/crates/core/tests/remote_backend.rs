//! Remote chat-completion client against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use adapt_forge::catalog::UserProfile;
use adapt_forge::genai::{
    transform, Backend, BackendRequest, GenAiError, RemoteBackend, RemoteConfig,
};
use adapt_forge::prompt::{DomainInput, TemplateStore};
use adapt_forge::rules::ActiveRuleSet;
use adapt_forge::ui::PictogramMap;

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves one canned `(status, body)` per request; the last repeats.
fn stub(responses: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            b.lock()
                .unwrap()
                .push((auth, String::from_utf8(body).unwrap()));
            let n = h.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = responses[n.min(responses.len() - 1)].clone();
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    Stub { url, hits, bodies }
}

fn backend(url: &str) -> RemoteBackend {
    let mut c = RemoteConfig::new(url, "test-model");
    c.api_key = Some("secret-key".into());
    c.timeout_ms = 2_000;
    c.backoff_base_ms = 1;
    RemoteBackend::new(c).unwrap()
}

fn call(b: &RemoteBackend) -> Result<String, GenAiError> {
    let profile = UserProfile::new("p", []);
    let input = DomainInput::new("i", "Take one pill.");
    let active = ActiveRuleSet::default();
    let prompt = TemplateStore::bundled()
        .instantiate("T-SIMPLIFY", None, &profile, &input, &active)
        .unwrap();
    b.complete(&BackendRequest {
        prompt: &prompt,
        active: &active,
        input: &input,
        attempt: 1,
    })
}

const ENVELOPE: &str =
    "```adapt\nplain: Take one pill.\nsteps:\n1. Take one pill.\npicto:\n1|pill\n```";

fn chat(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

#[test]
fn chat_completion_round_trip() {
    let s = stub(vec![(200, chat(&format!("Here you go:\n{ENVELOPE}")))]);
    let b = backend(&s.url);
    let raw = call(&b).unwrap();
    assert!(raw.contains("plain: Take one pill."));
    let (auth, body) = s.bodies.lock().unwrap()[0].clone();
    assert_eq!(
        auth.to_ascii_lowercase(),
        "authorization: bearer secret-key"
    );
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "test-model");
    assert_eq!(v["temperature"], 0.0);
    assert!(v["messages"][0]["content"]
        .as_str()
        .unwrap()
        .contains("Take one pill."));

    let profile = UserProfile::new("p", []);
    let input = DomainInput::new("i", "Take one pill.");
    let active = ActiveRuleSet::default();
    let prompt = TemplateStore::bundled()
        .instantiate("T-SIMPLIFY", None, &profile, &input, &active)
        .unwrap();
    let req = BackendRequest {
        prompt: &prompt,
        active: &active,
        input: &input,
        attempt: 1,
    };
    let r = transform(&b, &req, &PictogramMap::bundled()).unwrap();
    assert_eq!(r.steps, ["Take one pill."]);
    assert_eq!(r.pictogram_annotations[0].pictogram_id, "picto-pill");
    assert!(r.raw_response.starts_with("Here you go:"));
}

#[test]
fn plain_text_response_shape() {
    let s = stub(vec![(
        200,
        serde_json::json!({ "text": ENVELOPE }).to_string(),
    )]);
    assert!(call(&backend(&s.url)).unwrap().contains("```adapt"));
}

#[test]
fn auth_errors_are_not_retried() {
    let s = stub(vec![(401, "{}".into())]);
    assert!(matches!(
        call(&backend(&s.url)),
        Err(GenAiError::AuthError(_))
    ));
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn server_errors_retry_then_give_up() {
    let s = stub(vec![(503, "{}".into())]);
    assert!(matches!(
        call(&backend(&s.url)),
        Err(GenAiError::BackendUnavailable(_))
    ));
    assert_eq!(s.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn transient_error_recovers() {
    let s = stub(vec![(500, "{}".into()), (200, chat(ENVELOPE))]);
    assert!(call(&backend(&s.url)).is_ok());
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_endpoint() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let b = backend(&format!("http://127.0.0.1:{port}/v1"));
    assert!(matches!(call(&b), Err(GenAiError::BackendUnavailable(_))));
}

#[test]
fn response_without_text_is_malformed() {
    let s = stub(vec![(200, "{\"choices\": []}".into())]);
    assert!(matches!(
        call(&backend(&s.url)),
        Err(GenAiError::MalformedResponse(_))
    ));
}
