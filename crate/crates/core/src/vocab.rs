//! Ordered token vocabularies with pinned special tokens.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// The special tokens of BERT-style WordPiece vocabularies.
pub const DEFAULT_SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Token list where the position of a token is its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    special_ids: BTreeSet<usize>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary, marking every token that appears in `specials` as special.
    pub fn new(tokens: Vec<String>, specials: &[&str]) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Format(format!("empty token at index {i}")));
            }
            if let Some(first) = index.insert(tok.clone(), i) {
                return Err(Error::Format(format!(
                    "duplicate token at index {i} (first seen at index {first})"
                )));
            }
        }
        let special_ids = specials
            .iter()
            .filter_map(|s| index.get(*s).copied())
            .collect();
        Ok(Self {
            tokens,
            special_ids,
            index,
        })
    }

    /// Builds a vocabulary with an explicit set of special ids.
    pub fn with_special_ids(tokens: Vec<String>, special_ids: BTreeSet<usize>) -> Result<Self> {
        let mut vocab = Self::new(tokens, &[])?;
        if let Some(&bad) = special_ids.iter().find(|&&i| i >= vocab.len()) {
            return Err(Error::Config(format!(
                "special id {bad} out of range for vocabulary of size {}",
                vocab.len()
            )));
        }
        vocab.special_ids = special_ids;
        Ok(vocab)
    }

    /// Parses the one-token-per-line text format. Line `k` (0-based) becomes id `k`.
    /// A single trailing newline is allowed; any other empty line is an error.
    pub fn parse(text: &str, specials: &[&str]) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Self::new(Vec::new(), specials);
        }
        let mut tokens = Vec::new();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (line_no, line) in body.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                return Err(Error::Format(format!("empty line {}", line_no + 1)));
            }
            if let Some(first) = seen.insert(line, line_no) {
                return Err(Error::Format(format!(
                    "duplicate token on line {} (first on line {})",
                    line_no + 1,
                    first + 1
                )));
            }
            tokens.push(line.to_string());
        }
        Self::new(tokens, specials)
    }

    /// Serializes to the one-token-per-line format, LF terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.tokens.iter().map(|t| t.len() + 1).sum());
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn special_ids(&self) -> &BTreeSet<usize> {
        &self.special_ids
    }

    pub fn is_special_id(&self, id: usize) -> bool {
        self.special_ids.contains(&id)
    }

    /// True if `token` is one of this vocabulary's special tokens.
    pub fn is_special(&self, token: &str) -> bool {
        self.id(token).is_some_and(|id| self.is_special_id(id))
    }

    /// Special tokens as `(string, id)` pairs in ascending id order.
    pub fn special_tokens(&self) -> Vec<(String, usize)> {
        self.special_ids
            .iter()
            .map(|&i| (self.tokens[i].clone(), i))
            .collect()
    }

    /// Id of the special token with the given string, if it is special here.
    pub fn special_id(&self, token: &str) -> Option<usize> {
        self.id(token).filter(|id| self.is_special_id(*id))
    }
}
