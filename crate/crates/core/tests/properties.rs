use std::collections::BTreeSet;

use cipherlm_core::adapt::{adapt_lm_traced, apply_permutation, make_permutation};
use cipherlm_core::cipher::encrypt_vocab;
use cipherlm_core::isometry::{distance, make_glide_sequence, reflect, transform_matrix};
use cipherlm_core::tokenize::{encrypt_stream, second_stage_tokenize, wordpiece_tokenize};
use cipherlm_core::vocab::DEFAULT_SPECIALS;
use cipherlm_core::{EmbeddingMatrix, KeyMaterial, Prng, Vocabulary};
use proptest::prelude::*;

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
}

proptest! {
    #[test]
    fn glide_sequences_preserve_pairwise_distances(
        seed in any::<u64>(),
        nglide in 1usize..6,
        a in vec_strategy(12),
        b in vec_strategy(12),
    ) {
        let gs = make_glide_sequence(seed, 12, nglide).unwrap();
        let d0 = distance(&a, &b);
        let d1 = distance(&gs.apply(&a).unwrap(), &gs.apply(&b).unwrap());
        prop_assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
    }

    #[test]
    fn glide_sequences_invert(seed in any::<u64>(), nglide in 1usize..6, e in vec_strategy(7)) {
        let gs = make_glide_sequence(seed, 7, nglide).unwrap();
        let back = gs.invert(&gs.apply(&e).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&e) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn reflection_preserves_norm(e in vec_strategy(9), l in prop::collection::vec(0.01f64..1.0, 9)) {
        let r = reflect(&e, &l).unwrap();
        let (n0, n1) = (distance(&e, &[0.0; 9]), distance(&r, &[0.0; 9]));
        prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1.0));
    }

    #[test]
    fn permutations_are_bijections_fixing_pinned(
        m in 1usize..200,
        seed in any::<u64>(),
        pinned in prop::collection::btree_set(0usize..200, 0..6),
    ) {
        let fixed: BTreeSet<usize> = pinned.into_iter().filter(|&i| i < m).collect();
        let p = make_permutation(m, &fixed, &mut Prng::new(seed)).unwrap();
        let mut seen = vec![false; m];
        for &old in p.map() {
            prop_assert!(!seen[old]);
            seen[old] = true;
        }
        for &f in &fixed {
            prop_assert_eq!(p.map()[f], f);
        }
    }

    #[test]
    fn encrypted_vocab_is_collision_free(
        words in prop::collection::btree_set("[a-z]{1,6}", 1..300),
        digest_bytes in 1usize..3,
    ) {
        // at one byte only 256 digests exist
        prop_assume!(digest_bytes > 1 || words.len() < 250);
        let v = Vocabulary::new(words.into_iter().collect(), &[]).unwrap();
        let km = KeyMaterial::derive(b"prop-key", digest_bytes).unwrap();
        let (e, map) = encrypt_vocab(&v, &km).unwrap();
        prop_assert_eq!(e.len(), v.len());
        prop_assert_eq!(map.len(), v.len());
    }
}

#[test]
fn linear_part_is_orthogonal() {
    for (seed, nglide) in [(1u64, 1usize), (2, 3), (3, 10)] {
        let dim = 24;
        let gs = make_glide_sequence(seed, dim, nglide).unwrap();
        let zero = gs.apply(&vec![0.0; dim]).unwrap();
        // columns of Q from unit probes with the translation subtracted
        let cols: Vec<Vec<f64>> = (0..dim)
            .map(|j| {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                gs.apply(&e)
                    .unwrap()
                    .iter()
                    .zip(&zero)
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        for i in 0..dim {
            for j in 0..dim {
                let qtq: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq - want).abs() < 1e-9, "QᵀQ[{i},{j}] = {qtq}");
            }
        }
    }
}

#[test]
fn fixed_points_of_large_shuffles_are_rare() {
    let fixed: BTreeSet<usize> = [0, 100, 101, 102, 103].into();
    let mut total = 0usize;
    let seeds = 5;
    for seed in 0..seeds {
        let p = make_permutation(30522, &fixed, &mut Prng::new(seed)).unwrap();
        total += p
            .map()
            .iter()
            .enumerate()
            .filter(|(i, old)| !fixed.contains(i) && *i == **old)
            .count();
    }
    let frac = total as f64 / (seeds as f64 * 30517.0);
    assert!(frac < 1e-3, "fixed-point fraction {frac}");
}

fn toy_model() -> (Vocabulary, EmbeddingMatrix) {
    let words = [
        "the", "cat", "sat", "on", "mat", "dog", "##s", "ran", "happy", "sad", "a", "movie", "was",
        "great", "bad", ".", ",", "!", "un", "##like", "##ly",
    ];
    let mut toks: Vec<String> = DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect();
    toks.extend(words.iter().map(|s| s.to_string()));
    let v = Vocabulary::new(toks, &DEFAULT_SPECIALS).unwrap();
    let mut prng = Prng::new(77);
    let data = (0..v.len() * 16)
        .map(|_| prng.unit_open() * 2.0 - 1.0)
        .collect();
    let mut e = EmbeddingMatrix::new(v.len(), 16, data).unwrap();
    e.round_to_f32();
    (v, e)
}

// Oracle: run the plaintext pipeline, then apply the same glide sequence and
// round to f32. Must equal what the server sees after encryption and shuffle.
#[test]
fn commutativity_square_holds_bit_for_bit() {
    let (v, e) = toy_model();
    let (bundle, trace) = adapt_lm_traced(&v, &e, b"llm123", 3, 4).unwrap();
    let km = KeyMaterial::derive(b"llm123", 4).unwrap();
    let (_, map) = encrypt_vocab(&v, &km).unwrap();
    for text in [
        "The cat sat on the mat.",
        "dogs ran, unlikely!",
        "zebra movie",
        "",
    ] {
        let plain = wordpiece_tokenize(text, &v, true);
        let cipher = encrypt_stream(&plain, &map).unwrap();
        assert_eq!(cipher.tokens.len(), plain.tokens.len());
        let seq = second_stage_tokenize(&cipher, &bundle).unwrap();
        assert_eq!(seq.ids.len(), plain.tokens.len() + 2);
        for (tok, &id) in plain.tokens.iter().zip(&seq.ids[1..]) {
            let orig_row = e.row(v.id(tok).unwrap());
            let want: Vec<f32> = trace
                .glides
                .apply(orig_row)
                .unwrap()
                .iter()
                .map(|&x| x as f32)
                .collect();
            let got: Vec<f32> = bundle.emb().row(id).iter().map(|&x| x as f32).collect();
            assert_eq!(want, got, "token {tok}");
        }
    }
}

#[test]
fn adapted_rows_are_aligned_with_cipher_tokens() {
    let (v, e) = toy_model();
    let (bundle, trace) = adapt_lm_traced(&v, &e, b"nlp2023", 2, 4).unwrap();
    let mut transformed = transform_matrix(&e, &trace.glides).unwrap();
    transformed.round_to_f32();
    for (old, tok) in v.tokens().iter().enumerate() {
        let adapted_tok = trace.cipher_map.get(tok).unwrap_or(tok);
        let new = bundle.vocab().id(adapted_tok).unwrap();
        assert_eq!(bundle.emb().row(new), transformed.row(old));
    }
    let (v2, _) = apply_permutation(&v, &e, &trace.permutation).unwrap();
    assert_eq!(v2.special_ids(), v.special_ids());
}
