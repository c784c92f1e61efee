#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use cipherlm::io;
use cipherlm::service::Model;
use cipherlm_core::trainer::{featurize_all, train_head, LabeledExample, Pipeline, TrainConfig};
use cipherlm_core::vocab::DEFAULT_SPECIALS;
use cipherlm_core::{encrypt_vocab, AdaptedBundle, EmbeddingMatrix, KeyMaterial, Vocabulary};

pub const PASSKEY: &[u8] = b"llm123";

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}

pub fn toy_files() -> (Vocabulary, EmbeddingMatrix, Vec<LabeledExample>) {
    let dir = toy_dir();
    (
        io::load_vocab(dir.join("vocab.txt"), &DEFAULT_SPECIALS).unwrap(),
        io::load_matrix(dir.join("embeddings.clm1")).unwrap(),
        io::load_tsv(dir.join("sentiment.tsv")).unwrap(),
    )
}

/// Adapted bundle plus a head trained through the encrypted pipeline.
pub fn toy_model(passkey: &[u8]) -> (Vocabulary, AdaptedBundle, Model) {
    let (vocab, emb, data) = toy_files();
    let bundle = cipherlm_core::adapt_lm(&vocab, &emb, passkey, 3, 4).unwrap();
    let km = KeyMaterial::derive(passkey, 4).unwrap();
    let (_, map) = encrypt_vocab(&vocab, &km).unwrap();
    let pipeline = Pipeline::Encrypted {
        vocab: &vocab,
        cipher_map: &map,
        bundle: &bundle,
        lowercase: true,
    };
    let (x, y) = featurize_all(&data, &pipeline).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    let head = train_head(&x, &y, &cfg).unwrap();
    let model = Model::new(bundle.clone(), head).unwrap();
    (vocab, bundle, model)
}

/// TCP forwarder that records every byte sent from client to upstream.
pub struct Tap {
    pub addr: std::net::SocketAddr,
    pub captured: Arc<Mutex<Vec<u8>>>,
}

impl Tap {
    pub fn start(upstream: std::net::SocketAddr) -> Tap {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let captured = Arc::new(Mutex::new(Vec::new()));
        let sink = captured.clone();
        thread::spawn(move || {
            for client in listener.incoming() {
                let Ok(client) = client else { break };
                let server = TcpStream::connect(upstream).unwrap();
                let sink = sink.clone();
                let (mut c_read, mut s_write) =
                    (client.try_clone().unwrap(), server.try_clone().unwrap());
                let (mut s_read, mut c_write) = (server, client);
                thread::spawn(move || {
                    let mut buf = [0u8; 4096];
                    while let Ok(n) = c_read.read(&mut buf) {
                        if n == 0 || s_write.write_all(&buf[..n]).is_err() {
                            break;
                        }
                        sink.lock().unwrap().extend_from_slice(&buf[..n]);
                    }
                    let _ = s_write.shutdown(Shutdown::Write);
                });
                thread::spawn(move || {
                    let _ = std::io::copy(&mut s_read, &mut c_write);
                    let _ = c_write.shutdown(Shutdown::Write);
                });
            }
        });
        Tap { addr, captured }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn take(&self) -> Vec<u8> {
        std::mem::take(&mut *self.captured.lock().unwrap())
    }
}

/// Cipher token values of every `/v1/infer` JSON body in a captured byte stream.
pub fn payload_tokens(captured: &[u8]) -> Vec<Vec<String>> {
    let text = String::from_utf8_lossy(captured);
    let mut out = Vec::new();
    let mut rest = text.as_ref();
    while let Some(start) = rest.find("{\"cipher_tokens\"") {
        let tail = &rest[start..];
        let mut de = serde_json::Deserializer::from_str(tail).into_iter::<serde_json::Value>();
        let value = de.next().unwrap().unwrap();
        let consumed = de.byte_offset();
        let tokens = value["cipher_tokens"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap().to_string())
            .collect();
        out.push(tokens);
        rest = &tail[consumed..];
    }
    out
}
