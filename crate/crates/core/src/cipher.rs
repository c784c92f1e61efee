//! Keyed one-way token encryption.
//!
//! A token's cipher form is the lowercase hex of a keyed Blake2b digest of its
//! UTF-8 bytes, with the passkey as the Blake2b key. The same passkey also
//! seeds the [`Prng`](crate::prng::Prng) used for the embedding transform and
//! the vocabulary shuffle.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use blake2b_simd::Params;

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const DEFAULT_DIGEST_BYTES: usize = 4;
pub const MAX_DIGEST_BYTES: usize = 32;
/// Blake2b accepts keys of at most 64 bytes.
pub const MAX_PASSKEY_BYTES: usize = 64;
pub const FINGERPRINT_HEX_LEN: usize = 16;
const MAX_COLLISION_RETRIES: u8 = 255;

/// Passkey plus the values derived from it.
///
/// `Debug` is implemented by hand and never prints the passkey.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    passkey: Vec<u8>,
    digest_bytes: usize,
    seed: u64,
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("passkey", &"<redacted>")
            .field("digest_bytes", &self.digest_bytes)
            .field("seed", &self.seed)
            .finish()
    }
}

impl KeyMaterial {
    /// Derives key material. `seed` is the little-endian `u64` of the 8-byte
    /// keyed Blake2b digest of the message `"seed"`.
    pub fn derive(passkey: &[u8], digest_bytes: usize) -> Result<Self> {
        if passkey.is_empty() {
            return Err(Error::Config("passkey must not be empty".into()));
        }
        if passkey.len() > MAX_PASSKEY_BYTES {
            return Err(Error::Config(format!(
                "passkey longer than {MAX_PASSKEY_BYTES} bytes"
            )));
        }
        if !(1..=MAX_DIGEST_BYTES).contains(&digest_bytes) {
            return Err(Error::Config(format!(
                "digest_bytes must be in [1, {MAX_DIGEST_BYTES}], got {digest_bytes}"
            )));
        }
        let digest = keyed(passkey, 8).hash(b"seed");
        let seed = u64::from_le_bytes(digest.as_bytes().try_into().unwrap());
        Ok(Self {
            passkey: passkey.to_vec(),
            digest_bytes,
            seed,
        })
    }

    pub fn digest_bytes(&self) -> usize {
        self.digest_bytes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// First 8 bytes, as hex, of the 64-byte keyed Blake2b digest of `"fingerprint"`.
    pub fn fingerprint(&self) -> String {
        let digest = keyed(&self.passkey, 64).hash(b"fingerprint");
        hex(&digest.as_bytes()[..8])
    }

    fn digest_hex(&self, message: &[u8]) -> String {
        hex(keyed(&self.passkey, self.digest_bytes)
            .hash(message)
            .as_bytes())
    }
}

fn keyed(key: &[u8], len: usize) -> Params {
    let mut p = Params::new();
    p.hash_length(len).key(key);
    p
}

fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 0xf) as usize] as char);
    }
    s
}

/// True if `s` has the shape of a cipher token for the given digest size.
pub fn is_cipher_shaped(s: &str, digest_bytes: usize) -> bool {
    s.len() == 2 * digest_bytes && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Lowercase hex digest standing in for a plaintext token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CipherToken(String);

impl CipherToken {
    pub fn parse(hex: &str, digest_bytes: usize) -> Result<Self> {
        if is_cipher_shaped(hex, digest_bytes) {
            Ok(Self(hex.into()))
        } else {
            Err(Error::Protocol(format!(
                "not a {}-hex-digit cipher token",
                2 * digest_bytes
            )))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CipherToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Encrypts one token. Pure in `(token, passkey, digest_bytes)`.
pub fn encrypt_token(token: &str, km: &KeyMaterial) -> CipherToken {
    CipherToken(km.digest_hex(token.as_bytes()))
}

/// Plaintext → cipher string mapping derived from a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherMap {
    digest_bytes: usize,
    map: BTreeMap<String, String>,
    passthrough: BTreeSet<String>,
}

impl CipherMap {
    pub fn digest_bytes(&self) -> usize {
        self.digest_bytes
    }

    /// Special tokens, which are sent as plaintext.
    pub fn is_passthrough(&self, token: &str) -> bool {
        self.passthrough.contains(token)
    }

    pub fn get(&self, plain: &str) -> Option<&str> {
        self.map.get(plain).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Replaces every non-special token by its cipher form. Ids are unchanged.
///
/// Tokens are processed in ascending id. A digest that is already taken
/// (by an earlier cipher or by a special token's string) is re-derived from
/// `token ‖ 0x00 ‖ counter` for counter = 1, 2, … until unique, so any party
/// holding the same vocabulary and passkey derives the same mapping.
pub fn encrypt_vocab(vocab: &Vocabulary, km: &KeyMaterial) -> Result<(Vocabulary, CipherMap)> {
    let passthrough: BTreeSet<String> = vocab
        .special_ids()
        .iter()
        .map(|&i| vocab.tokens()[i].clone())
        .collect();
    let mut taken = passthrough.clone();
    let mut out = Vec::with_capacity(vocab.len());
    let mut map = BTreeMap::new();
    let mut message = Vec::new();
    for (id, tok) in vocab.tokens().iter().enumerate() {
        if vocab.is_special_id(id) {
            out.push(tok.clone());
            continue;
        }
        let mut cipher = km.digest_hex(tok.as_bytes());
        let mut counter: u8 = 0;
        while taken.contains(&cipher) {
            if counter == MAX_COLLISION_RETRIES {
                return Err(Error::Adaptation(format!(
                    "unresolvable cipher collision for token id {id}"
                )));
            }
            counter += 1;
            message.clear();
            message.extend_from_slice(tok.as_bytes());
            message.push(0x00);
            message.push(counter);
            cipher = km.digest_hex(&message);
        }
        taken.insert(cipher.clone());
        map.insert(tok.clone(), cipher.clone());
        out.push(cipher);
    }
    let encrypted = Vocabulary::with_special_ids(out, vocab.special_ids().clone())?;
    Ok((
        encrypted,
        CipherMap {
            digest_bytes: km.digest_bytes,
            map,
            passthrough,
        },
    ))
}
