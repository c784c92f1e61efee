//! Token-recoverability measurements between an original embedding matrix
//! and its adapted counterpart.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapt::Permutation;
use crate::error::{Error, Result};
use crate::isometry::distance;
use crate::matrix::EmbeddingMatrix;
use crate::prng::Prng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverabilityReport {
    pub nn_accuracy: f64,
    pub rank_overlap_at_k: f64,
    pub k: usize,
    pub sample_size: usize,
    /// `None` when rows could not be aligned (no passkey).
    pub distance_drift_max: Option<f64>,
}

/// How an original row is matched to its true counterpart in the adapted matrix.
#[derive(Debug, Clone, Copy)]
pub enum Alignment<'a> {
    /// Counterpart of row `i` is assumed to be row `i` (an attacker without the key).
    ByIndex,
    /// The shuffle is known: counterpart of original row `map[j]` is adapted row `j`.
    Known(&'a Permutation),
}

/// `count` distinct indices from `[0, m)`, or all of them when `count >= m`.
pub fn sample_indices(m: usize, count: usize, prng: &mut Prng) -> Vec<usize> {
    if count >= m {
        return (0..m).collect();
    }
    // partial Fisher–Yates
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..count {
        let j = i + prng.below((m - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(count);
    idx
}

fn sq_norms(m: &EmbeddingMatrix) -> Vec<f64> {
    m.iter_rows()
        .map(|r| r.iter().map(|x| x * x).sum())
        .collect()
}

/// Index of the row of `haystack` nearest to `q` (ties to the lowest index).
fn nearest(q: &[f64], haystack: &EmbeddingMatrix, norms: &[f64]) -> usize {
    let qq: f64 = q.iter().map(|x| x * x).sum();
    let mut best = (f64::INFINITY, 0);
    for (j, row) in haystack.iter_rows().enumerate() {
        let dot: f64 = q.iter().zip(row).map(|(a, b)| a * b).sum();
        let d = qq + norms[j] - 2.0 * dot;
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Fraction of sampled original rows whose nearest adapted row (exact brute
/// force, Euclidean) is their true counterpart. `samples = None` uses every row.
pub fn nn_recovery_accuracy(
    orig: &EmbeddingMatrix,
    adapted: &EmbeddingMatrix,
    alignment: Alignment<'_>,
    samples: Option<usize>,
    seed: u64,
) -> Result<f64> {
    if orig.rows() != adapted.rows() || orig.cols() != adapted.cols() {
        return Err(Error::Config(format!(
            "original is {}x{}, adapted is {}x{}",
            orig.rows(),
            orig.cols(),
            adapted.rows(),
            adapted.cols()
        )));
    }
    if orig.rows() == 0 {
        return Err(Error::Config("empty matrices".into()));
    }
    let counterpart: Vec<usize> = match alignment {
        Alignment::ByIndex => (0..orig.rows()).collect(),
        Alignment::Known(p) => {
            if p.len() != orig.rows() {
                return Err(Error::Config(
                    "permutation length differs from row count".into(),
                ));
            }
            p.inverse().map().to_vec()
        }
    };
    let picked = sample_indices(
        orig.rows(),
        samples.unwrap_or(usize::MAX),
        &mut Prng::new(seed),
    );
    let norms = sq_norms(adapted);
    let hits = picked
        .iter()
        .filter(|&&i| nearest(orig.row(i), adapted, &norms) == counterpart[i])
        .count();
    Ok(hits as f64 / picked.len() as f64)
}

/// The `k` nearest other rows to `anchor`, nearest first (ties to lower index).
pub fn knn_list(m: &EmbeddingMatrix, anchor: usize, k: usize) -> Vec<usize> {
    let q = m.row(anchor);
    let mut d: Vec<(f64, usize)> = m
        .iter_rows()
        .enumerate()
        .filter(|(j, _)| *j != anchor)
        .map(|(j, r)| (distance(q, r), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Mean Jaccard similarity of the k-nearest-neighbor index sets of sampled
/// anchors in the two spaces, matching rows by index.
pub fn ranked_list_overlap(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::Config(format!(
            "row counts differ: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    if k == 0 || k >= a.rows() {
        return Err(Error::Config(format!(
            "k must be in [1, {}), got {k}",
            a.rows()
        )));
    }
    let anchors = sample_indices(a.rows(), samples.max(1), &mut Prng::new(seed));
    let mut total = 0.0;
    for &i in &anchors {
        let la: BTreeSet<usize> = knn_list(a, i, k).into_iter().collect();
        let lb: BTreeSet<usize> = knn_list(b, i, k).into_iter().collect();
        let inter = la.intersection(&lb).count();
        let union = la.union(&lb).count();
        total += inter as f64 / union as f64;
    }
    Ok(total / anchors.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub i: usize,
    pub j: usize,
    pub d_orig: f64,
    pub d_trans: f64,
    /// `|d_trans − d_orig|`
    pub drift: f64,
}

/// Distances of `pairs` random row pairs `(i, j)`, `i ≠ j`, in both matrices.
/// Rows are compared by index, so `transformed` must be un-shuffled.
pub fn distance_audit(
    orig: &EmbeddingMatrix,
    transformed: &EmbeddingMatrix,
    pairs: usize,
    seed: u64,
) -> Result<Vec<AuditRow>> {
    if orig.rows() != transformed.rows() || orig.cols() != transformed.cols() {
        return Err(Error::Config("matrices differ in shape".into()));
    }
    if pairs > 0 && orig.rows() < 2 {
        return Err(Error::Config(
            "need at least two rows to sample pairs".into(),
        ));
    }
    let mut prng = Prng::new(seed);
    let m = orig.rows() as u64;
    let mut rows = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let i = prng.below(m) as usize;
        let mut j = prng.below(m - 1) as usize;
        if j >= i {
            j += 1;
        }
        let d_orig = distance(orig.row(i), orig.row(j));
        let d_trans = distance(transformed.row(i), transformed.row(j));
        rows.push(AuditRow {
            i,
            j,
            d_orig,
            d_trans,
            drift: (d_trans - d_orig).abs(),
        });
    }
    Ok(rows)
}

pub fn max_drift(rows: &[AuditRow]) -> f64 {
    rows.iter().map(|r| r.drift).fold(0.0, f64::max)
}

/// Largest `drift / max(1, d_orig)`.
pub fn max_relative_drift(rows: &[AuditRow]) -> f64 {
    rows.iter()
        .map(|r| r.drift / r.d_orig.max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isometry::{make_glide_sequence, transform_matrix};

    fn random(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut p = Prng::new(seed);
        let data = (0..rows * cols)
            .map(|_| 2.0 * p.unit_open() - 1.0)
            .collect();
        EmbeddingMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_is_fully_recoverable() {
        let m = random(200, 8, 1);
        assert_eq!(
            nn_recovery_accuracy(&m, &m, Alignment::ByIndex, None, 0).unwrap(),
            1.0
        );
        let p = Permutation::identity(200);
        assert_eq!(
            nn_recovery_accuracy(&m, &m, Alignment::Known(&p), Some(50), 0).unwrap(),
            1.0
        );
    }

    #[test]
    fn shape_mismatch_is_a_config_error() {
        let a = random(10, 4, 1);
        let b = random(10, 5, 1);
        assert!(matches!(
            nn_recovery_accuracy(&a, &b, Alignment::ByIndex, None, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ranked_overlap_of_identical_spaces_is_one() {
        let m = random(100, 6, 2);
        assert_eq!(ranked_list_overlap(&m, &m, 10, 20, 3).unwrap(), 1.0);
    }

    #[test]
    fn ranked_overlap_is_invariant_under_isometry() {
        let m = random(100, 6, 2);
        let t = transform_matrix(&m, &make_glide_sequence(4, 6, 3).unwrap()).unwrap();
        assert_eq!(ranked_list_overlap(&m, &t, 10, 20, 3).unwrap(), 1.0);
    }

    #[test]
    fn ranked_overlap_rejects_bad_k() {
        let m = random(10, 2, 2);
        assert!(ranked_list_overlap(&m, &m, 0, 5, 0).is_err());
        assert!(ranked_list_overlap(&m, &m, 10, 5, 0).is_err());
    }

    #[test]
    fn audit_of_zero_pairs_is_empty() {
        let m = random(10, 2, 2);
        let rows = distance_audit(&m, &m, 0, 1).unwrap();
        assert!(rows.is_empty());
        assert_eq!(max_drift(&rows), 0.0);
    }

    #[test]
    fn audit_pairs_are_distinct_rows() {
        let m = random(3, 2, 2);
        for r in distance_audit(&m, &m, 100, 9).unwrap() {
            assert_ne!(r.i, r.j);
            assert_eq!(r.drift, 0.0);
        }
    }

    #[test]
    fn sampling_is_distinct_and_deterministic() {
        let a = sample_indices(100, 30, &mut Prng::new(5));
        let b = sample_indices(100, 30, &mut Prng::new(5));
        assert_eq!(a, b);
        let set: BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 30);
        assert_eq!(
            sample_indices(5, 10, &mut Prng::new(0)),
            (0..5).collect::<Vec<_>>()
        );
    }
}
