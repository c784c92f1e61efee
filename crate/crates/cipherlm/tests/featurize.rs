mod common;

use cipherlm_core::adapt::adapt_lm_traced;
use cipherlm_core::trainer::{featurize, Pipeline};
use cipherlm_core::{encrypt_vocab, KeyMaterial};
use common::{toy_files, PASSKEY};

// Mean of affine images equals the affine image of the mean.
#[test]
fn encrypted_features_are_the_glide_image_of_plaintext_features() {
    let (vocab, emb, data) = toy_files();
    let (bundle, trace) = adapt_lm_traced(&vocab, &emb, PASSKEY, 3, 4).unwrap();
    let (_, map) = encrypt_vocab(&vocab, &KeyMaterial::derive(PASSKEY, 4).unwrap()).unwrap();
    let plain = Pipeline::Plain {
        vocab: &vocab,
        emb: &emb,
        lowercase: true,
    };
    let enc = Pipeline::Encrypted {
        vocab: &vocab,
        cipher_map: &map,
        bundle: &bundle,
        lowercase: true,
    };
    for ex in &data {
        let want = trace
            .glides
            .apply(&featurize(&ex.text, &plain).unwrap())
            .unwrap();
        let got = featurize(&ex.text, &enc).unwrap();
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() < 1e-5, "{}: {a} vs {b}", ex.text);
        }
    }
    // an unknown word still contributes its row
    let unk_only = featurize("zzzz", &plain).unwrap();
    assert_eq!(unk_only, emb.row(vocab.id("[UNK]").unwrap()));
}
