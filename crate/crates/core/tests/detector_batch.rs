use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use proptest::prelude::*;

use gapcheck_core::corpus::{GenerationRecord, Reference};
use gapcheck_core::detector::{
    build_user_prompt, detect_batch, prompt_digest, ChatBackend, ChatRequest, DetectorConfig,
    HttpBackend, MockBackend, ParseStatus, ScriptEntry, ScriptedReply, TransportError,
};
use gapcheck_core::taxonomy::GapLabelSet;

fn record(i: usize) -> GenerationRecord {
    GenerationRecord {
        record_id: format!("r{i:02}"),
        model_name: "m".into(),
        previous_text: format!("Paragraph {i}."),
        generation: format!("Generation {i} relies on 440 U.S. 48."),
        target: "t".into(),
        required_citations: vec!["440 U.S. 48".into()],
        references: vec![Reference {
            cite_key: "440 U.S. 48".into(),
            text: "r".into(),
        }],
    }
}

fn config(parallelism: usize) -> DetectorConfig {
    DetectorConfig {
        k_demonstrations: 0,
        parallelism,
        retry_backoff: Duration::ZERO,
        ..DetectorConfig::default()
    }
}

fn script(recs: &[GenerationRecord], delays: &[u64]) -> MockBackend {
    let sets = GapLabelSet::all_valid();
    MockBackend::new(recs.iter().zip(delays).enumerate().map(|(i, (r, &d))| {
        let labels = sets[i % sets.len()];
        let content = match i % 3 {
            0 => format!(r#"{{"label":{labels},"explanation":"e{i}"}}"#),
            1 => format!("```json\n{{\"label\":{labels},\"explanation\":\"e{i}\"}}\n```"),
            _ => "no idea".to_string(),
        };
        ScriptEntry {
            prompt_digest: prompt_digest(&build_user_prompt(r)),
            record_id: Some(r.record_id.clone()),
            replies: vec![ScriptedReply::Content {
                content,
                delay_ms: Some(d),
            }],
        }
    }))
}

#[test]
fn reversed_completion_keeps_input_order() {
    let recs: Vec<_> = (0..6).map(record).collect();
    let delays: Vec<u64> = (0..6).rev().map(|i| i * 15).collect();
    let out = detect_batch(&recs, &config(6), &[], &script(&recs, &delays)).unwrap();
    let ids: Vec<_> = out.iter().map(|r| r.record_id.clone()).collect();
    let expected: Vec<_> = recs.iter().map(|r| r.record_id.clone()).collect();
    assert_eq!(ids, expected);
    for (i, r) in out.iter().enumerate() {
        let status = [ParseStatus::Ok, ParseStatus::Repaired, ParseStatus::Failed][i % 3];
        assert_eq!(r.parse_status, status, "{}", r.record_id);
        assert_eq!(r.labels.is_some(), status != ParseStatus::Failed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_interleaving_matches_sequential(delays in prop::collection::vec(0u64..6, 1..9), par in 1usize..5) {
        let recs: Vec<_> = (0..delays.len()).map(record).collect();
        let sequential = detect_batch(&recs, &config(1), &[], &script(&recs, &delays)).unwrap();
        let parallel = detect_batch(&recs, &config(par), &[], &script(&recs, &delays)).unwrap();
        prop_assert_eq!(sequential, parallel);
    }
}

/// Serves `responses` in order, one HTTP exchange each, and returns the
/// request bodies it received.
fn stub_server(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

#[test]
fn http_backend_speaks_chat_completions() {
    let reply = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "{\"label\":[2],\"explanation\":\"x\"}"}}]
    })
    .to_string();
    let (url, server) = stub_server(vec![(500, "{}".into()), (200, reply)]);
    let backend = HttpBackend::new(url, Some("sk-test".into()), Duration::from_secs(5));
    let req = ChatRequest {
        model: "gpt-4o".into(),
        system: "sys".into(),
        user: "usr".into(),
        temperature: 0.0,
    };
    assert!(matches!(
        backend.complete(&req),
        Err(TransportError::Status { status: 500, .. })
    ));
    assert_eq!(
        backend.complete(&req).unwrap(),
        "{\"label\":[2],\"explanation\":\"x\"}"
    );
    let bodies = server.join().unwrap();
    let (auth, body) = bodies[1].split_once('\n').unwrap();
    assert_eq!(auth.to_ascii_lowercase(), "authorization: bearer sk-test");
    let sent: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(sent["model"], "gpt-4o");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["messages"][0]["role"], "system");
    assert_eq!(sent["messages"][0]["content"], "sys");
    assert_eq!(sent["messages"][1]["role"], "user");
    assert_eq!(sent["messages"][1]["content"], "usr");
}

#[test]
fn http_backend_unreachable_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    let backend = HttpBackend::new(url, None, Duration::from_secs(2));
    let req = ChatRequest {
        model: "m".into(),
        system: String::new(),
        user: String::new(),
        temperature: 0.0,
    };
    assert!(matches!(
        backend.complete(&req),
        Err(TransportError::Request(_))
    ));
}
