//! Synchronous client: tokenizes and encrypts locally, sends only cipher tokens.

use std::time::Duration;

use cipherlm_core::cipher::encrypt_vocab;
use cipherlm_core::tokenize::{encrypt_stream, wordpiece_tokenize, CipherTokenStream};
use cipherlm_core::{CipherMap, KeyMaterial, Vocabulary};

use crate::error::{Error, Result};
use crate::wire::{ErrorBody, InferRequest, InferResponse};

pub struct Client {
    base_url: String,
    vocab: Vocabulary,
    cipher_map: CipherMap,
    lowercase: bool,
    http: reqwest::blocking::Client,
}

impl Client {
    /// Derives the cipher map locally from the plaintext vocabulary and key.
    pub fn new(base_url: &str, vocab: Vocabulary, km: &KeyMaterial) -> Result<Self> {
        let (_, cipher_map) = encrypt_vocab(&vocab, km)?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            vocab,
            cipher_map,
            lowercase: true,
            http,
        })
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    /// Client half of the protocol: WordPiece, then per-token encryption.
    pub fn encrypt(&self, text: &str) -> Result<CipherTokenStream> {
        if text.trim().is_empty() {
            return Err(Error::Validation("text is empty".into()));
        }
        let plain = wordpiece_tokenize(text, &self.vocab, self.lowercase);
        if plain.tokens.is_empty() {
            return Err(Error::Validation("text produced no tokens".into()));
        }
        Ok(encrypt_stream(&plain, &self.cipher_map)?)
    }

    pub fn infer(&self, text: &str) -> Result<InferResponse> {
        let stream = self.encrypt(text)?;
        let req = InferRequest {
            cipher_tokens: stream.tokens,
            request_id: None,
        };
        let resp = self
            .http
            .post(format!("{}/v1/infer", self.base_url))
            .json(&req)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(Error::Protocol(format!(
                "server returned {status}: {message}"
            )));
        }
        serde_json::from_slice(&body)
            .map_err(|e| Error::Protocol(format!("malformed server response: {e}")))
    }
}

pub fn client_infer(
    server: &str,
    text: &str,
    vocab: &Vocabulary,
    km: &KeyMaterial,
) -> Result<InferResponse> {
    Client::new(server, vocab.clone(), km)?.infer(text)
}
