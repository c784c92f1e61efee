//! Two-stage encrypted tokenization.
//!
//! The client runs an ordinary WordPiece tokenizer over plaintext and maps
//! each piece to its cipher token. The server only sees cipher tokens and
//! resolves them against the shuffled, encrypted vocabulary of an
//! [`AdaptedBundle`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::adapt::AdaptedBundle;
use crate::cipher::{is_cipher_shaped, CipherMap};
use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, CLS, SEP, UNK};

/// Words longer than this many chars become the unknown token.
pub const MAX_WORD_CHARS: usize = 200;
pub const CONTINUATION_PREFIX: &str = "##";

/// Plaintext WordPiece output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlainTokenStream {
    pub tokens: Vec<String>,
}

/// Cipher tokens (plus pass-through special tokens) in plaintext order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CipherTokenStream {
    pub tokens: Vec<String>,
}

impl CipherTokenStream {
    /// Space-joined form used on the wire and by the `encrypt` command.
    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn from_line(line: &str) -> Self {
        Self {
            tokens: line.split_whitespace().map(ToString::to_string).collect(),
        }
    }
}

/// Adapted-vocabulary ids, wrapped in the classification and separator ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSequence {
    pub ids: Vec<usize>,
}

fn is_whitespace(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r')
        || get_general_category(c) == GeneralCategory::SpaceSeparator
}

fn is_control(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control
            | GeneralCategory::Format
            | GeneralCategory::Surrogate
            | GeneralCategory::PrivateUse
            | GeneralCategory::Unassigned
    )
}

fn is_punctuation(c: char) -> bool {
    let cp = c as u32;
    if (33..=47).contains(&cp)
        || (58..=64).contains(&cp)
        || (91..=96).contains(&cp)
        || (123..=126).contains(&cp)
    {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0x2B820..=0x2CEAF
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

/// BERT basic tokenization: clean, isolate CJK chars, split on whitespace,
/// optionally lowercase and strip accents, then split off punctuation.
/// Words that are exactly a special token of `vocab` are kept intact.
pub fn basic_tokenize(text: &str, vocab: &Vocabulary, lowercase: bool) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '\0' || c == '\u{FFFD}' || is_control(c) {
            continue;
        }
        if is_whitespace(c) {
            cleaned.push(' ');
        } else if is_cjk(c) {
            cleaned.push(' ');
            cleaned.push(c);
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }

    let mut out = Vec::new();
    for word in cleaned.split(' ').filter(|w| !w.is_empty()) {
        if vocab.is_special(word) {
            out.push(word.to_string());
            continue;
        }
        let word: String = if lowercase {
            word.to_lowercase()
                .nfd()
                .filter(|&c| get_general_category(c) != GeneralCategory::NonspacingMark)
                .collect()
        } else {
            word.to_string()
        };
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(core::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Greedy longest-match-first segmentation of one word. Returns `None` when
/// some suffix has no match.
fn wordpiece_word(word: &str, vocab: &Vocabulary) -> Option<Vec<String>> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(core::iter::once(word.len()))
        .collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start + 1 < bounds.len() {
        let mut end = bounds.len() - 1;
        let found = loop {
            if end <= start {
                break None;
            }
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if vocab.contains(&candidate) {
                break Some(end);
            }
            end -= 1;
        };
        pieces.push(candidate.clone());
        start = found?;
    }
    Some(pieces)
}

/// Full WordPiece tokenization of `text`. Never fails: unsegmentable words
/// and words over [`MAX_WORD_CHARS`] become the unknown token.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocabulary, lowercase: bool) -> PlainTokenStream {
    let mut tokens = Vec::new();
    for word in basic_tokenize(text, vocab, lowercase) {
        if vocab.is_special(&word) {
            tokens.push(word);
            continue;
        }
        if word.chars().count() > MAX_WORD_CHARS {
            tokens.push(UNK.to_string());
            continue;
        }
        match wordpiece_word(&word, vocab) {
            Some(pieces) => tokens.extend(pieces),
            None => tokens.push(UNK.to_string()),
        }
    }
    PlainTokenStream { tokens }
}

/// Replaces each plaintext token by its cipher form; special tokens pass through.
pub fn encrypt_stream(ts: &PlainTokenStream, map: &CipherMap) -> Result<CipherTokenStream> {
    let tokens = ts
        .tokens
        .iter()
        .enumerate()
        .map(|(pos, tok)| {
            if map.is_passthrough(tok) {
                Ok(tok.clone())
            } else {
                map.get(tok).map(ToString::to_string).ok_or_else(|| {
                    Error::Protocol(format!(
                        "token at position {pos} is not in the client vocabulary"
                    ))
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(CipherTokenStream { tokens })
}

/// Server-side lookup of cipher tokens in the adapted vocabulary.
///
/// Special tokens resolve to their pinned ids, well-formed but unknown
/// cipher tokens to the unknown id. The result is wrapped in the
/// classification and separator ids unless the stream already starts and
/// ends with them.
pub fn second_stage_tokenize(
    cs: &CipherTokenStream,
    bundle: &AdaptedBundle,
) -> Result<IndexSequence> {
    let vocab = bundle.vocab();
    let digest_bytes = bundle.manifest().digest_bytes;
    let unk = vocab
        .special_id(UNK)
        .ok_or_else(|| Error::Config("bundle has no unknown token".into()))?;
    let cls = vocab.special_id(CLS);
    let sep = vocab.special_id(SEP);

    let mut ids = Vec::with_capacity(cs.tokens.len() + 2);
    for (pos, tok) in cs.tokens.iter().enumerate() {
        let id = if let Some(id) = vocab.special_id(tok) {
            id
        } else if is_cipher_shaped(tok, digest_bytes) {
            vocab.id(tok).unwrap_or(unk)
        } else {
            return Err(Error::Protocol(format!(
                "malformed cipher token at position {pos}"
            )));
        };
        ids.push(id);
    }
    let wrapped = cls.is_some()
        && sep.is_some()
        && ids.len() >= 2
        && ids.first().copied() == cls
        && ids.last().copied() == sep;
    if !wrapped {
        if let Some(cls) = cls {
            ids.insert(0, cls);
        }
        if let Some(sep) = sep {
            ids.push(sep);
        }
    }
    Ok(IndexSequence { ids })
}
