//! JSON bodies exchanged with the inference server.

use serde::{Deserialize, Serialize};

/// Longest accepted wire token, in characters.
pub const MAX_TOKEN_CHARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRequest {
    pub cipher_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

impl InferRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.cipher_tokens.is_empty() {
            return Err("cipher_tokens must not be empty".into());
        }
        if let Some(pos) = self
            .cipher_tokens
            .iter()
            .position(|t| t.chars().count() > MAX_TOKEN_CHARS)
        {
            return Err(format!(
                "token at position {pos} exceeds {MAX_TOKEN_CHARS} characters"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub label: usize,
    pub scores: Vec<f64>,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub vocab_size: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
