//! L2-regularized softmax regression over mean-pooled token embeddings.
//!
//! Features are centered on the training mean before the affine scores
//! `W·(x − μ) + c`. The bias is unregularized, so centering reparameterizes
//! the same model family and leaves the optimum unchanged; it also makes
//! full-batch descent equivariant under the rotate-and-translate maps
//! produced by [`crate::isometry`], which is what lets plaintext and
//! encrypted training runs agree step for step.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapt::AdaptedBundle;
use crate::cipher::CipherMap;
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::tokenize::{encrypt_stream, second_stage_tokenize, wordpiece_tokenize};
use crate::vocab::{Vocabulary, UNK};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Trained head. Serialized field order is the declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierHead {
    pub classes: usize,
    pub dim: usize,
    pub l2: f64,
    /// Training-feature mean subtracted before scoring.
    pub center: Vec<f64>,
    /// `classes` rows of `dim` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Regularized training objective at the returned parameters.
    pub final_loss: f64,
}

impl ClassifierHead {
    pub fn zeros(classes: usize, dim: usize, l2: f64) -> Self {
        Self {
            classes,
            dim,
            l2,
            center: vec![0.0; dim],
            weights: vec![vec![0.0; dim]; classes],
            bias: vec![0.0; classes],
            final_loss: f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape_ok = self.center.len() == self.dim
            && self.weights.len() == self.classes
            && self.weights.iter().all(|r| r.len() == self.dim)
            && self.bias.len() == self.classes;
        if !shape_ok || self.classes < 2 {
            return Err(Error::Format(format!(
                "head shape inconsistent with {} classes x {} dims",
                self.classes, self.dim
            )));
        }
        let finite = self
            .center
            .iter()
            .chain(self.weights.iter().flatten())
            .chain(&self.bias)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Format("head has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Raw class scores.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| {
                w.iter()
                    .zip(x.iter().zip(&self.center))
                    .map(|(wi, (xi, mi))| wi * (xi - mi))
                    .sum::<f64>()
                    + b
            })
            .collect()
    }

    /// Softmax probabilities.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| libm::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(z.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Index of the first maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `l2/2·‖W‖²` and its gradient with respect to
/// weights and bias. Uses `head.center` as given.
pub fn objective(
    head: &ClassifierHead,
    features: &[Vec<f64>],
    labels: &[usize],
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = features.len() as f64;
    let mut grad_w = vec![vec![0.0; head.dim]; head.classes];
    let mut grad_b = vec![0.0; head.classes];
    let mut loss = 0.0;
    let mut centered = vec![0.0; head.dim];
    for (x, &y) in features.iter().zip(labels) {
        for ((c, xi), mi) in centered.iter_mut().zip(x).zip(&head.center) {
            *c = xi - mi;
        }
        let z: Vec<f64> = head
            .weights
            .iter()
            .zip(&head.bias)
            .map(|(w, b)| w.iter().zip(&centered).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect();
        loss += log_sum_exp(&z) - z[y];
        let p = softmax(&z);
        for k in 0..head.classes {
            let r = p[k] - if k == y { 1.0 } else { 0.0 };
            grad_b[k] += r / n;
            for (g, c) in grad_w[k].iter_mut().zip(&centered) {
                *g += r * c / n;
            }
        }
    }
    loss /= n;
    let mut reg = 0.0;
    for (gw, w) in grad_w.iter_mut().zip(&head.weights) {
        for (g, wi) in gw.iter_mut().zip(w) {
            *g += head.l2 * wi;
            reg += wi * wi;
        }
    }
    (loss + 0.5 * head.l2 * reg, grad_w, grad_b)
}

/// Full-batch gradient descent from zero weights. Deterministic.
pub fn train_head(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<ClassifierHead> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Training(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let first = *labels
        .first()
        .ok_or_else(|| Error::Training("no training examples".into()))?;
    if labels.iter().all(|&l| l == first) {
        return Err(Error::Training("training data has a single class".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::Training("feature rows differ in dimension".into()));
    }
    let classes = labels.iter().max().unwrap() + 1;

    let mut head = ClassifierHead::zeros(classes, dim, cfg.l2);
    let n = features.len() as f64;
    for f in features {
        for (c, v) in head.center.iter_mut().zip(f) {
            *c += v / n;
        }
    }
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = objective(&head, features, labels);
        for (w, g) in head.weights.iter_mut().zip(&gw) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= cfg.learning_rate * gi;
            }
        }
        for (b, g) in head.bias.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
    }
    head.final_loss = objective(&head, features, labels).0;
    Ok(head)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Mean cross-entropy, without the regularizer.
    pub mean_loss: f64,
}

pub fn evaluate(head: &ClassifierHead, features: &[Vec<f64>], labels: &[usize]) -> Result<Metrics> {
    if features.is_empty() {
        return Err(Error::Evaluation("empty evaluation set".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Evaluation(
            "features and labels differ in length".into(),
        ));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = head.logits(x);
        if y >= z.len() {
            return Err(Error::Evaluation(format!(
                "label {y} outside head's classes"
            )));
        }
        if argmax(&z) == y {
            correct += 1;
        }
        loss += log_sum_exp(&z) - z[y];
    }
    let n = features.len() as f64;
    Ok(Metrics {
        accuracy: correct as f64 / n,
        mean_loss: loss / n,
    })
}

/// Mean of the embedding rows for `ids`, skipping ids for which `skip` is true.
/// Zero vector when nothing remains.
pub fn mean_pool(ids: &[usize], emb: &EmbeddingMatrix, skip: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut acc = vec![0.0; emb.cols()];
    let mut count = 0usize;
    for &id in ids.iter().filter(|&&id| !skip(id)) {
        for (a, v) in acc.iter_mut().zip(emb.row(id)) {
            *a += v;
        }
        count += 1;
    }
    if count > 0 {
        let n = count as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

/// Pools over content tokens only: specials other than the unknown token are skipped.
fn content_skip(vocab: &Vocabulary) -> impl Fn(usize) -> bool + '_ {
    let unk = vocab.special_id(UNK);
    move |id| vocab.is_special_id(id) && Some(id) != unk
}

/// How text becomes a feature vector.
#[derive(Debug, Clone, Copy)]
pub enum Pipeline<'a> {
    /// Original tokenizer and embeddings.
    Plain {
        vocab: &'a Vocabulary,
        emb: &'a EmbeddingMatrix,
        lowercase: bool,
    },
    /// Client-side WordPiece + encryption, then server-side lookup in the bundle.
    Encrypted {
        vocab: &'a Vocabulary,
        cipher_map: &'a CipherMap,
        bundle: &'a AdaptedBundle,
        lowercase: bool,
    },
}

pub fn featurize(text: &str, pipeline: &Pipeline<'_>) -> Result<Vec<f64>> {
    match *pipeline {
        Pipeline::Plain {
            vocab,
            emb,
            lowercase,
        } => {
            let ids = plain_ids(text, vocab, lowercase)?;
            Ok(mean_pool(&ids, emb, content_skip(vocab)))
        }
        Pipeline::Encrypted {
            vocab,
            cipher_map,
            bundle,
            lowercase,
        } => {
            let plain = wordpiece_tokenize(text, vocab, lowercase);
            let cipher = encrypt_stream(&plain, cipher_map)?;
            let seq = second_stage_tokenize(&cipher, bundle)?;
            Ok(pool_bundle(&seq.ids, bundle))
        }
    }
}

/// Server-side pooling over ids already resolved against a bundle.
pub fn pool_bundle(ids: &[usize], bundle: &AdaptedBundle) -> Vec<f64> {
    mean_pool(ids, bundle.emb(), content_skip(bundle.vocab()))
}

/// WordPiece ids in the plaintext vocabulary.
pub fn plain_ids(text: &str, vocab: &Vocabulary, lowercase: bool) -> Result<Vec<usize>> {
    wordpiece_tokenize(text, vocab, lowercase)
        .tokens
        .iter()
        .map(|t| {
            vocab
                .id(t)
                .ok_or_else(|| Error::Config("vocabulary has no unknown token".into()))
        })
        .collect()
}

pub fn featurize_all(
    data: &[LabeledExample],
    pipeline: &Pipeline<'_>,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut feats = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for ex in data {
        feats.push(featurize(&ex.text, pipeline)?);
        labels.push(ex.label);
    }
    Ok((feats, labels))
}
