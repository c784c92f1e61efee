//! Deterministic toy sentiment corpus, vocabulary and embedding matrix.
//!
//! The bundled files under `data/toy/` are the output of
//! `cargo run -p cipherlm --example gen_toy_data`; a test checks they match
//! what this module generates.

use cipherlm_core::trainer::LabeledExample;
use cipherlm_core::vocab::DEFAULT_SPECIALS;
use cipherlm_core::{EmbeddingMatrix, Prng, Vocabulary};

pub const TOY_DIM: usize = 32;
pub const TOY_SEED: u64 = 2023;
pub const TOY_SIZE: usize = 200;

const NOUNS: [&str; 10] = [
    "movie", "film", "plot", "acting", "story", "music", "ending", "cast", "script", "show",
];
// "enjoyable" and "disappointing" are not whole vocabulary entries; they
// exercise WordPiece continuation pieces.
const POSITIVE: [&str; 8] = [
    "great",
    "wonderful",
    "brilliant",
    "good",
    "lovely",
    "excellent",
    "enjoyable",
    "charming",
];
const NEGATIVE: [&str; 8] = [
    "terrible",
    "awful",
    "boring",
    "weak",
    "dull",
    "poor",
    "disappointing",
    "messy",
];
const INTENSIFIERS: [&str; 4] = ["really", "very", "quite", "so"];

// No entry consists only of hex digits, so none can occur inside a cipher token.
const FILLER: [&str; 24] = [
    "the", "such", "was", "is", "i", "thought", "what", "and", "too", "it", "this", "felt", "but",
    "honestly", "overall", "my", "friends", "said", "all", "in", "of", "we", "saw", "today",
];
const PIECES: [&str; 6] = ["enjoy", "##able", "disappoint", "##ing", "##s", "##ly"];
const PUNCT: [&str; 4] = [".", ",", "!", "?"];

fn pick<'a>(p: &mut Prng, xs: &[&'a str]) -> &'a str {
    xs[p.below(xs.len() as u64) as usize]
}

fn sentence(p: &mut Prng, positive: bool) -> String {
    let adjs: &[&str] = if positive { &POSITIVE } else { &NEGATIVE };
    let n = pick(p, &NOUNS);
    let a = pick(p, adjs);
    let i = pick(p, &INTENSIFIERS);
    match p.below(6) {
        0 => format!("The {n} was {a}."),
        1 => format!("I thought the {n} was {i} {a}!"),
        2 => format!("Such {a} {n}."),
        3 => format!("Honestly, the {n} felt {i} {a}."),
        4 => {
            let n2 = pick(p, &NOUNS);
            let a2 = pick(p, adjs);
            format!("{a} {n} and {a2} {n2} too")
        }
        _ => format!("Overall my friends said this {n} is {a}?"),
    }
}

/// Balanced corpus: even rows positive (label 1), odd rows negative (label 0).
pub fn toy_corpus() -> Vec<LabeledExample> {
    let mut p = Prng::new(TOY_SEED);
    (0..TOY_SIZE)
        .map(|i| {
            let positive = i % 2 == 0;
            LabeledExample {
                text: sentence(&mut p, positive),
                label: usize::from(positive),
            }
        })
        .collect()
}

pub fn toy_vocab() -> Vocabulary {
    fn whole(w: &&&str) -> bool {
        !matches!(**w, "enjoyable" | "disappointing")
    }
    let tokens: Vec<String> = DEFAULT_SPECIALS
        .iter()
        .chain(PUNCT.iter())
        .chain(FILLER.iter())
        .chain(INTENSIFIERS.iter())
        .chain(NOUNS.iter())
        .chain(POSITIVE.iter().filter(whole))
        .chain(NEGATIVE.iter().filter(whole))
        .chain(PIECES.iter())
        .map(|s| s.to_string())
        .collect();
    Vocabulary::new(tokens, &DEFAULT_SPECIALS).expect("toy vocabulary is duplicate-free")
}

/// Uniform(-1, 1) entries, rounded to `f32`.
pub fn toy_embeddings(rows: usize) -> EmbeddingMatrix {
    let mut p = Prng::new(TOY_SEED ^ 0xE3B);
    let data = (0..rows * TOY_DIM)
        .map(|_| 2.0 * p.unit_open() - 1.0)
        .collect();
    let mut m = EmbeddingMatrix::new(rows, TOY_DIM, data).expect("finite entries");
    m.round_to_f32();
    m
}

/// `count` sentences of 3–12 random content words drawn from `vocab`.
pub fn random_sentences(vocab: &Vocabulary, count: usize, seed: u64) -> Vec<String> {
    let words: Vec<&str> = vocab
        .tokens()
        .iter()
        .map(String::as_str)
        .filter(|t| !vocab.is_special(t) && !t.starts_with("##"))
        .collect();
    let mut p = Prng::new(seed);
    (0..count)
        .map(|_| {
            let len = 3 + p.below(10) as usize;
            (0..len)
                .map(|_| pick(&mut p, &words))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
