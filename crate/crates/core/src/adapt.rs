//! Passkey-driven model adaptation: transform the embedding matrix, encrypt
//! the vocabulary, then shuffle both with the special tokens pinned.
//!
//! PRNG consumption order is part of the bundle format: one stream seeded
//! from the passkey yields all glide vectors first, then the shuffle.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cipher::{encrypt_vocab, CipherMap, KeyMaterial};
use crate::error::{Error, Result};
use crate::isometry::{transform_matrix, GlideSequence};
use crate::matrix::EmbeddingMatrix;
use crate::prng::Prng;
use crate::vocab::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;

/// Row reordering: `map[new_index] = old_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
    fixed: BTreeSet<usize>,
}

impl Permutation {
    pub fn identity(m: usize) -> Self {
        Self {
            map: (0..m).collect(),
            fixed: BTreeSet::new(),
        }
    }

    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let mut seen = alloc::vec![false; map.len()];
        for &old in &map {
            if old >= map.len() || core::mem::replace(&mut seen[old], true) {
                return Err(Error::Config("permutation map is not a bijection".into()));
            }
        }
        Ok(Self {
            map,
            fixed: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn fixed(&self) -> &BTreeSet<usize> {
        &self.fixed
    }

    pub fn inverse(&self) -> Self {
        let mut inv = alloc::vec![0; self.map.len()];
        for (new, &old) in self.map.iter().enumerate() {
            inv[old] = new;
        }
        Self {
            map: inv,
            fixed: self.fixed.clone(),
        }
    }
}

/// Fisher–Yates shuffle of the indices in `[0, m)` not listed in `fixed`.
pub fn make_permutation(m: usize, fixed: &BTreeSet<usize>, prng: &mut Prng) -> Result<Permutation> {
    if let Some(&bad) = fixed.iter().find(|&&i| i >= m) {
        return Err(Error::Config(format!(
            "fixed index {bad} out of range for {m} rows"
        )));
    }
    let slots: Vec<usize> = (0..m).filter(|i| !fixed.contains(i)).collect();
    let mut shuffled = slots.clone();
    for i in (1..shuffled.len()).rev() {
        let j = prng.below(i as u64 + 1) as usize;
        shuffled.swap(i, j);
    }
    let mut map: Vec<usize> = (0..m).collect();
    for (&slot, &old) in slots.iter().zip(&shuffled) {
        map[slot] = old;
    }
    Ok(Permutation {
        map,
        fixed: fixed.clone(),
    })
}

/// Reorders vocabulary and matrix rows together: new position `i` takes old row `map[i]`.
pub fn apply_permutation(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    p: &Permutation,
) -> Result<(Vocabulary, EmbeddingMatrix)> {
    if vocab.len() != emb.rows() || vocab.len() != p.len() {
        return Err(Error::Consistency(format!(
            "vocabulary has {} tokens, matrix {} rows, permutation {} entries",
            vocab.len(),
            emb.rows(),
            p.len()
        )));
    }
    let tokens = p
        .map
        .iter()
        .map(|&old| vocab.tokens()[old].clone())
        .collect();
    let specials = vocab
        .special_ids()
        .iter()
        .map(|&old| p.map.iter().position(|&o| o == old).unwrap())
        .collect();
    let mut data = Vec::with_capacity(emb.as_slice().len());
    for &old in &p.map {
        data.extend_from_slice(emb.row(old));
    }
    Ok((
        Vocabulary::with_special_ids(tokens, specials)?,
        EmbeddingMatrix::new(emb.rows(), emb.cols(), data)?,
    ))
}

/// Parameters persisted next to an adapted bundle. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub nglide: usize,
    pub digest_bytes: usize,
    pub special_tokens: Vec<(String, usize)>,
    pub key_fingerprint: String,
}

impl BundleManifest {
    /// Checks the manifest against the vocabulary and matrix it describes.
    pub fn validate(&self, vocab: &Vocabulary, emb: &EmbeddingMatrix) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle format_version {}",
                self.format_version
            )));
        }
        if vocab.len() != emb.rows() {
            return Err(Error::Consistency(format!(
                "vocabulary has {} tokens but matrix has {} rows",
                vocab.len(),
                emb.rows()
            )));
        }
        if self.vocab_size != vocab.len() || self.embed_dim != emb.cols() {
            return Err(Error::Consistency(format!(
                "manifest declares {}x{}, artifacts are {}x{}",
                self.vocab_size,
                self.embed_dim,
                vocab.len(),
                emb.cols()
            )));
        }
        if self.key_fingerprint.len() != crate::cipher::FINGERPRINT_HEX_LEN
            || !crate::cipher::is_cipher_shaped(&self.key_fingerprint, 8)
        {
            return Err(Error::Format(
                "key_fingerprint must be 16 hex digits".into(),
            ));
        }
        for (tok, id) in &self.special_tokens {
            if vocab.token(*id) != Some(tok.as_str()) {
                return Err(Error::Consistency(format!(
                    "special token {tok} not at index {id}"
                )));
            }
        }
        Ok(())
    }

    /// Rejects key material whose fingerprint differs from the one recorded.
    pub fn check_key(&self, km: &KeyMaterial) -> Result<()> {
        if km.fingerprint() != self.key_fingerprint {
            return Err(Error::Config(
                "passkey does not match the bundle's key fingerprint".into(),
            ));
        }
        if km.digest_bytes() != self.digest_bytes {
            return Err(Error::Config(format!(
                "bundle uses {}-byte digests, key material {}",
                self.digest_bytes,
                km.digest_bytes()
            )));
        }
        Ok(())
    }
}

/// Encrypted shuffled vocabulary, transformed shuffled embeddings and their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedBundle {
    vocab: Vocabulary,
    emb: EmbeddingMatrix,
    manifest: BundleManifest,
}

impl AdaptedBundle {
    pub fn new(vocab: Vocabulary, emb: EmbeddingMatrix, manifest: BundleManifest) -> Result<Self> {
        manifest.validate(&vocab, &emb)?;
        // special ids come from the manifest so plain vocab files need no special-token config
        let specials = manifest.special_tokens.iter().map(|(_, id)| *id).collect();
        let vocab = Vocabulary::with_special_ids(vocab.tokens().to_vec(), specials)?;
        Ok(Self {
            vocab,
            emb,
            manifest,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn emb(&self) -> &EmbeddingMatrix {
        &self.emb
    }

    pub fn manifest(&self) -> &BundleManifest {
        &self.manifest
    }
}

/// Everything random that went into a bundle, for oracles and analyses.
#[derive(Debug, Clone)]
pub struct AdaptTrace {
    pub glides: GlideSequence,
    pub permutation: Permutation,
    pub cipher_map: CipherMap,
}

/// Adapts a vocabulary and embedding matrix to a passkey.
///
/// The transformed matrix is rounded to `f32` before returning, so the
/// in-memory bundle equals what a save/load cycle would produce.
pub fn adapt_lm(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    passkey: &[u8],
    nglide: usize,
    digest_bytes: usize,
) -> Result<AdaptedBundle> {
    adapt_lm_traced(vocab, emb, passkey, nglide, digest_bytes).map(|(b, _)| b)
}

pub fn adapt_lm_traced(
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    passkey: &[u8],
    nglide: usize,
    digest_bytes: usize,
) -> Result<(AdaptedBundle, AdaptTrace)> {
    if vocab.len() != emb.rows() {
        return Err(Error::Consistency(format!(
            "vocabulary has {} tokens but matrix has {} rows",
            vocab.len(),
            emb.rows()
        )));
    }
    let km = KeyMaterial::derive(passkey, digest_bytes)?;
    let mut prng = Prng::new(km.seed());

    let glides = GlideSequence::draw(&mut prng, emb.cols(), nglide)?;
    let mut transformed = transform_matrix(emb, &glides)?;
    transformed.round_to_f32();

    let (encrypted, cipher_map) = encrypt_vocab(vocab, &km)?;

    let permutation = make_permutation(vocab.len(), vocab.special_ids(), &mut prng)?;
    let (shuffled_vocab, shuffled_emb) = apply_permutation(&encrypted, &transformed, &permutation)?;

    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        vocab_size: vocab.len(),
        embed_dim: emb.cols(),
        nglide,
        digest_bytes,
        special_tokens: shuffled_vocab.special_tokens(),
        key_fingerprint: km.fingerprint(),
    };
    let bundle = AdaptedBundle::new(shuffled_vocab, shuffled_emb, manifest)?;
    Ok((
        bundle,
        AdaptTrace {
            glides,
            permutation,
            cipher_map,
        },
    ))
}

/// Re-derives the glide sequence and shuffle recorded by `manifest` from the
/// passkey, without needing the original vocabulary.
pub fn replay_randomness(
    km: &KeyMaterial,
    manifest: &BundleManifest,
) -> Result<(GlideSequence, Permutation)> {
    manifest.check_key(km)?;
    let mut prng = Prng::new(km.seed());
    let glides = GlideSequence::draw(&mut prng, manifest.embed_dim, manifest.nglide)?;
    let fixed = manifest.special_tokens.iter().map(|(_, id)| *id).collect();
    let permutation = make_permutation(manifest.vocab_size, &fixed, &mut prng)?;
    Ok((glides, permutation))
}
