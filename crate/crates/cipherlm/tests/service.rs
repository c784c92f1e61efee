mod common;

use cipherlm::client::Client;
use cipherlm::service::{self, Model};
use cipherlm::toy::random_sentences;
use cipherlm::wire::{Health, InferRequest, InferResponse};
use cipherlm::Error;
use cipherlm_core::tokenize::second_stage_tokenize;
use cipherlm_core::trainer::{featurize, Pipeline};
use cipherlm_core::vocab::UNK;
use cipherlm_core::{encrypt_vocab, KeyMaterial};
use common::{payload_tokens, toy_model, Tap, PASSKEY};

fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

#[test]
fn health_reports_bundle_shape() {
    let (vocab, _, model) = toy_model(PASSKEY);
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let h: Health = http()
        .get(format!("{}/v1/health", server.url()))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.vocab_size, vocab.len());
    assert_eq!(h.dim, 32);
    server.stop().unwrap();
}

#[test]
fn served_scores_match_in_process_pipeline_exactly() {
    let (vocab, bundle, model) = toy_model(PASSKEY);
    let km = KeyMaterial::derive(PASSKEY, 4).unwrap();
    let (_, map) = encrypt_vocab(&vocab, &km).unwrap();
    let pipeline = Pipeline::Encrypted {
        vocab: &vocab,
        cipher_map: &map,
        bundle: &bundle,
        lowercase: true,
    };
    let texts = random_sentences(&vocab, 20, 5);
    let expected: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| model.head().scores(&featurize(t, &pipeline).unwrap()))
        .collect();
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let client = Client::new(&server.url(), vocab.clone(), &km).unwrap();
    for (t, want) in texts.iter().zip(&expected) {
        let got = client.infer(t).unwrap();
        assert_eq!(&got.scores, want, "{t}");
    }
}

#[test]
fn repeated_requests_are_identical() {
    let (vocab, _, model) = toy_model(PASSKEY);
    let km = KeyMaterial::derive(PASSKEY, 4).unwrap();
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let client = Client::new(&server.url(), vocab, &km).unwrap();
    let first = client.infer("the movie was really great!").unwrap();
    for _ in 0..25 {
        assert_eq!(client.infer("the movie was really great!").unwrap(), first);
    }
}

#[test]
fn wrong_passkey_resolves_to_unknown() {
    let (vocab, bundle, model) = toy_model(PASSKEY);
    let wrong = KeyMaterial::derive(b"nlp2023", 4).unwrap();
    let client = Client::new("http://unused", vocab.clone(), &wrong).unwrap();
    let unk = bundle.vocab().id(UNK).unwrap();
    for text in random_sentences(&vocab, 30, 9) {
        let stream = client.encrypt(&text).unwrap();
        let ids = second_stage_tokenize(&stream, &bundle).unwrap().ids;
        assert!(ids[1..ids.len() - 1].iter().all(|&i| i == unk), "{text}");
    }
    let n = client.encrypt("the plot was dull").unwrap().tokens.len();
    let as_unk = model
        .infer(&InferRequest {
            cipher_tokens: vec![UNK.to_string(); n],
            request_id: None,
        })
        .unwrap();
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let client = Client::new(&server.url(), vocab, &wrong).unwrap();
    assert_eq!(
        client.infer("the plot was dull").unwrap().scores,
        as_unk.scores
    );
}

#[test]
fn malformed_bodies_get_400_with_message() {
    let (_, _, model) = toy_model(PASSKEY);
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let url = format!("{}/v1/infer", server.url());
    let cases: [&[u8]; 6] = [
        b"not json",
        br#"{"cipher_tokens": []}"#,
        br#"{"cipher_tokens": ["zz!"]}"#,
        br#"{"cipher_tokens": ["abc"]}"#,
        br#"{"tokens": ["2c8e285d"]}"#,
        br#"{"cipher_tokens": "2c8e285d"}"#,
    ];
    for body in cases {
        let resp = http()
            .post(&url)
            .header("content-type", "application/json")
            .body(body.to_vec())
            .send()
            .unwrap();
        assert_eq!(resp.status(), 400, "{}", String::from_utf8_lossy(body));
        let v: serde_json::Value = resp.json().unwrap();
        assert!(!v["error"].as_str().unwrap().is_empty());
    }
    let resp = http()
        .post(&url)
        .body(r#"{"cipher_tokens": ["[CLS]", "zz!"]}"#)
        .send()
        .unwrap();
    let v: serde_json::Value = resp.json().unwrap();
    assert!(v["error"].as_str().unwrap().contains("position 1"), "{v}");
}

#[test]
fn empty_text_fails_before_network() {
    let (vocab, _, _) = toy_model(PASSKEY);
    let km = KeyMaterial::derive(PASSKEY, 4).unwrap();
    // nothing listens on port 9 of the discard address; a network call would fail differently
    let client = Client::new("http://127.0.0.1:9", vocab, &km).unwrap();
    assert!(matches!(client.infer(""), Err(Error::Validation(_))));
    assert!(matches!(client.infer("   \t"), Err(Error::Validation(_))));
    assert!(matches!(client.infer("hello"), Err(Error::Transport(_))));
}

#[test]
fn malformed_server_json_is_a_protocol_error() {
    use std::io::{Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(2) {
            let mut s = stream.unwrap();
            let mut buf = [0u8; 8192];
            let _ = s.read(&mut buf);
            let body = "{\"label\": oops";
            let _ = write!(
                s,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    let (vocab, _, _) = toy_model(PASSKEY);
    let km = KeyMaterial::derive(PASSKEY, 4).unwrap();
    let client = Client::new(&format!("http://{addr}"), vocab, &km).unwrap();
    assert!(matches!(
        client.infer("great movie"),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn tapped_traffic_carries_no_plaintext() {
    let (vocab, _, model) = toy_model(PASSKEY);
    let km = KeyMaterial::derive(PASSKEY, 4).unwrap();
    let server = service::spawn(model, "127.0.0.1:0").unwrap();
    let tap = Tap::start(server.addr);
    let client = Client::new(&tap.url(), vocab.clone(), &km).unwrap();
    let texts = random_sentences(&vocab, 40, 21);
    let mut responses: Vec<InferResponse> = Vec::new();
    for t in &texts {
        responses.push(client.infer(t).unwrap());
    }
    let captured = tap.take();
    let payloads = payload_tokens(&captured);
    assert_eq!(payloads.len(), texts.len());
    let joined = payloads.concat().join(" ");
    for tok in vocab.tokens().iter().filter(|t| !vocab.is_special(t)) {
        assert!(
            !joined.contains(tok.as_str()),
            "plaintext token {tok:?} on the wire"
        );
    }
    let raw = String::from_utf8_lossy(&captured);
    for t in &texts {
        assert!(!raw.contains(t.as_str()));
        for w in t.split(' ').filter(|w| w.len() >= 5) {
            assert!(!raw.contains(w), "word {w:?} on the wire");
        }
    }
}

#[test]
fn model_rejects_mismatched_head() {
    let (_, bundle, _) = toy_model(PASSKEY);
    let head = cipherlm_core::trainer::ClassifierHead::zeros(2, 8, 1e-3);
    assert!(matches!(Model::new(bundle, head), Err(Error::Startup(_))));
}
