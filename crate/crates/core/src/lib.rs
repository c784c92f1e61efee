//! Passkey-driven adaptation of a tokenizer vocabulary and token-embedding
//! matrix so a model can run on encrypted token streams.
//!
//! Pipeline: [`cipher`] replaces each vocabulary entry by a keyed Blake2b
//! digest, [`isometry`] moves the embedding matrix with a seeded sequence of
//! glide reflections, and [`adapt`] shuffles both in lockstep. [`tokenize`]
//! implements the client/server tokenization protocol on top of the result.
//!
//! The crate is `no_std` and needs only `alloc`; file formats, networking and
//! the CLI live in the `cipherlm` crate.

#![no_std]
extern crate alloc;

pub mod adapt;
pub mod analysis;
pub mod cipher;
pub mod error;
pub mod isometry;
pub mod matrix;
pub mod prng;
pub mod tokenize;
pub mod trainer;
pub mod vocab;

pub use adapt::{adapt_lm, AdaptedBundle, BundleManifest, Permutation};
pub use cipher::{encrypt_token, encrypt_vocab, CipherMap, CipherToken, KeyMaterial};
pub use error::{Error, Result};
pub use isometry::{GlideParams, GlideSequence};
pub use matrix::EmbeddingMatrix;
pub use prng::Prng;
pub use vocab::Vocabulary;
