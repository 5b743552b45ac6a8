use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use guidedec_eval::client::{ChatClient, ChatRequest, ClientConfig, ClientError, Message, Role};
use guidedec_eval::harness::RAG_RESPONSE_SCHEMA;
use guidedec_testkit::stub::{chat_completion, closed_port_url};
use guidedec_testkit::{Reply, StubServer};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/tests/fixtures/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

fn client(url: &str) -> ChatClient {
    ChatClient::new(ClientConfig {
        endpoint: format!("{url}/v1"),
        api_key_env: "GUIDEDEC_TEST_KEY_THAT_IS_NEVER_SET".into(),
        ..Default::default()
    })
    .unwrap()
}

fn exemplar_request() -> ChatRequest {
    let id = "344.0321.DOR.2021_1630505603_page_623";
    let mut r = ChatRequest::new(
        "Qwen2.5-72B-Instruct",
        vec![
            Message::new(Role::System, "Cite documents as (doc_id)ID(/doc_id)."),
            Message::new(
                Role::User,
                format!(
                    "rag ctx: (doc_id){id}(/doc_id) Notice periods apply. query: what applies?"
                ),
            ),
            Message::new(
                Role::Assistant,
                format!("resp: notice periods doc ids: (doc_id){id}(/doc_id)"),
            ),
        ],
    );
    r.temperature = Some(0.0);
    r.max_tokens = Some(256);
    r
}

fn guided_request() -> ChatRequest {
    let mut r = ChatRequest::new(
        "Llama-3.3-70B-Instruct",
        vec![
            Message::new(Role::System, "Answer in JSON."),
            Message::new(Role::User, "rag ctx: (doc_id)A(/doc_id) first query: q1"),
            Message::new(Role::Assistant, r#"{"response":"r1","document_ids":["A"]}"#),
            Message::new(
                Role::User,
                "rag ctx: (doc_id)B(/doc_id) second \"quoted\"\nline query: q2",
            ),
        ],
    );
    r.temperature = Some(0.7);
    r.max_tokens = Some(512);
    r.response_schema = Some(serde_json::from_str(RAG_RESPONSE_SCHEMA).unwrap());
    r.backend_hint = Some("xgrammar".into());
    r
}

#[test]
fn serialization_matches_golden_fixtures() {
    assert_eq!(
        exemplar_request().to_wire("guided_decoding_backend"),
        fixture("chat_exemplar.request.json")
    );
    assert_eq!(
        guided_request().to_wire("guided_decoding_backend"),
        fixture("chat_guided.request.json")
    );
}

#[test]
fn bytes_on_the_wire_equal_the_fixture() {
    let stub = StubServer::fixed(200, fixture("chat.response.json"));
    let resp = client(&stub.url).chat(&guided_request()).unwrap();
    assert_eq!(resp.text, r#"{"response":"r2","document_ids":["B"]}"#);
    assert_eq!(resp.usage.prompt_tokens, 87);
    assert_eq!(resp.usage.total_tokens, 101);
    assert!(resp.latency > Duration::ZERO);
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert_eq!(reqs[0].header("content-type"), Some("application/json"));
    assert_eq!(reqs[0].header("authorization"), None);
    assert_eq!(
        String::from_utf8(reqs[0].body.clone()).unwrap(),
        fixture("chat_guided.request.json")
    );
}

#[test]
fn rejected_guided_payload_surfaces_the_server_body() {
    let body = fixture("schema_rejected.response.json");
    for status in [400, 422] {
        let stub = StubServer::fixed(status, body.clone());
        match client(&stub.url).chat(&guided_request()) {
            Err(ClientError::SchemaRejected { status: s, body: b }) => {
                assert_eq!(s, status);
                assert_eq!(b, body);
            }
            other => panic!("expected SchemaRejected, got {other:?}"),
        }
        assert_eq!(stub.requests().len(), 1, "4xx must not be retried");
    }
    let stub = StubServer::fixed(400, body.clone());
    assert!(matches!(
        client(&stub.url).chat(&exemplar_request()),
        Err(ClientError::Http { status: 400, .. })
    ));
    let stub = StubServer::fixed(503, "overloaded");
    assert_eq!(
        client(&stub.url).chat(&guided_request()),
        Err(ClientError::Http {
            status: 503,
            body: "overloaded".into()
        })
    );
}

#[test]
fn timeouts_are_retried_twice_then_reported() {
    let stub = StubServer::start(|_, _| Reply::Hang(Duration::from_secs(3)));
    let mut req = exemplar_request();
    req.timeout = Duration::from_millis(200);
    assert_eq!(
        client(&stub.url).chat(&req),
        Err(ClientError::Timeout { attempts: 3 })
    );
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn a_retry_can_succeed() {
    let stub = StubServer::start(|n, _| {
        if n == 0 {
            Reply::Hang(Duration::from_secs(3))
        } else {
            Reply::Json {
                status: 200,
                body: chat_completion("late"),
            }
        }
    });
    let mut req = exemplar_request();
    req.timeout = Duration::from_millis(300);
    assert_eq!(client(&stub.url).chat(&req).unwrap().text, "late");
    assert_eq!(stub.requests().len(), 2);
}

#[test]
fn unreachable_server_is_a_connect_error() {
    match client(&closed_port_url()).chat(&exemplar_request()) {
        Err(ClientError::Connect { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected Connect, got {other:?}"),
    }
}

#[test]
fn api_key_comes_from_the_environment() {
    let var = "GUIDEDEC_CLIENT_TEST_KEY";
    // Only this test touches this variable.
    std::env::set_var(var, "sk-test-123");
    let stub = StubServer::fixed(200, chat_completion("ok"));
    let c = ChatClient::new(ClientConfig {
        endpoint: stub.url.clone(),
        api_key_env: var.into(),
        ..Default::default()
    })
    .unwrap();
    assert!(c.has_api_key());
    assert!(!format!("{c:?}").contains("sk-test-123"));
    c.chat(&exemplar_request()).unwrap();
    assert_eq!(
        stub.requests()[0].header("authorization"),
        Some("Bearer sk-test-123")
    );
}

#[test]
fn in_flight_requests_are_capped() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (live.clone(), peak.clone());
    let stub = StubServer::start(move |_, _| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(60));
        l.fetch_sub(1, Ordering::SeqCst);
        Reply::Json {
            status: 200,
            body: chat_completion("ok"),
        }
    });
    let c = Arc::new(
        ChatClient::new(ClientConfig {
            endpoint: stub.url.clone(),
            max_in_flight: 2,
            api_key_env: "GUIDEDEC_TEST_KEY_THAT_IS_NEVER_SET".into(),
            ..Default::default()
        })
        .unwrap(),
    );
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let c = c.clone();
            std::thread::spawn(move || c.chat(&exemplar_request()).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(stub.requests().len(), 8);
    assert!(
        peak.load(Ordering::SeqCst) <= 2,
        "peak {}",
        peak.load(Ordering::SeqCst)
    );
}
