//! Glide reflections: a Householder reflection about the hyperplane normal to
//! a line vector `l`, followed by a translation `t`. Iterating them gives an
//! affine map `x ↦ Qx + b` with `Q` orthogonal, so pairwise Euclidean
//! distances between embedding rows are preserved exactly (up to rounding).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::prng::Prng;

/// Smallest admissible norm of a reflection normal.
pub const MIN_LINE_NORM: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `e − 2·(e·l)/(l·l)·l`.
pub fn reflect(e: &[f64], l: &[f64]) -> Result<Vec<f64>> {
    check_line(l, e.len())?;
    let mut out = e.to_vec();
    reflect_in_place(&mut out, l, dot(l, l));
    Ok(out)
}

fn reflect_in_place(e: &mut [f64], l: &[f64], ll: f64) {
    let k = 2.0 * dot(e, l) / ll;
    for (x, li) in e.iter_mut().zip(l) {
        *x -= k * li;
    }
}

fn check_line(l: &[f64], dim: usize) -> Result<()> {
    if l.len() != dim {
        return Err(Error::Config(format!(
            "line vector has dimension {}, expected {dim}",
            l.len()
        )));
    }
    let n = norm(l);
    if n.is_nan() || n <= MIN_LINE_NORM {
        return Err(Error::Config("degenerate reflection axis".into()));
    }
    Ok(())
}

/// One glide reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct GlideParams {
    line: Vec<f64>,
    translation: Vec<f64>,
    line_sq: f64,
}

impl GlideParams {
    pub fn new(line: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        check_line(&line, translation.len())?;
        let line_sq = dot(&line, &line);
        Ok(Self {
            line,
            translation,
            line_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.line.len()
    }

    pub fn line(&self) -> &[f64] {
        &self.line
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    fn apply_in_place(&self, e: &mut [f64]) {
        reflect_in_place(e, &self.line, self.line_sq);
        for (x, t) in e.iter_mut().zip(&self.translation) {
            *x += t;
        }
    }

    fn invert_in_place(&self, e: &mut [f64]) {
        for (x, t) in e.iter_mut().zip(&self.translation) {
            *x -= t;
        }
        reflect_in_place(e, &self.line, self.line_sq);
    }
}

/// `reflect(e, p.line) + p.translation`.
pub fn glide(e: &[f64], p: &GlideParams) -> Result<Vec<f64>> {
    check_dim(e.len(), p.dim())?;
    let mut out = e.to_vec();
    p.apply_in_place(&mut out);
    Ok(out)
}

/// Inverse of [`glide`]: subtract the translation, then reflect again.
pub fn unglide(e: &[f64], p: &GlideParams) -> Result<Vec<f64>> {
    check_dim(e.len(), p.dim())?;
    let mut out = e.to_vec();
    p.invert_in_place(&mut out);
    Ok(out)
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "vector has dimension {got}, transform expects {want}"
        )))
    }
}

/// Ordered glide reflections applied first to last.
#[derive(Debug, Clone, PartialEq)]
pub struct GlideSequence {
    dim: usize,
    params: Vec<GlideParams>,
}

impl GlideSequence {
    pub fn new(params: Vec<GlideParams>) -> Result<Self> {
        let dim = params
            .first()
            .ok_or_else(|| Error::Config("glide sequence needs at least one step".into()))?
            .dim();
        if params.iter().any(|p| p.dim() != dim) {
            return Err(Error::Config("glide steps disagree on dimension".into()));
        }
        Ok(Self { dim, params })
    }

    /// Draws `nglide` steps from `prng`: for each step, `dim` components of the
    /// line vector and then `dim` of the translation, each via
    /// [`Prng::unit_open`] in index order.
    pub fn draw(prng: &mut Prng, dim: usize, nglide: usize) -> Result<Self> {
        if nglide == 0 {
            return Err(Error::Config("nglide must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::Config(
                "embedding dimension must be at least 1".into(),
            ));
        }
        let mut params = Vec::with_capacity(nglide);
        for _ in 0..nglide {
            let line = loop {
                let l: Vec<f64> = (0..dim).map(|_| prng.unit_open()).collect();
                if norm(&l) > MIN_LINE_NORM {
                    break l;
                }
            };
            let translation = (0..dim).map(|_| prng.unit_open()).collect();
            params.push(GlideParams::new(line, translation)?);
        }
        Self::new(params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[GlideParams] {
        &self.params
    }

    pub fn apply(&self, e: &[f64]) -> Result<Vec<f64>> {
        check_dim(e.len(), self.dim)?;
        let mut out = e.to_vec();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    pub fn invert(&self, e: &[f64]) -> Result<Vec<f64>> {
        check_dim(e.len(), self.dim)?;
        let mut out = e.to_vec();
        for p in self.params.iter().rev() {
            p.invert_in_place(&mut out);
        }
        Ok(out)
    }

    fn apply_in_place(&self, e: &mut [f64]) {
        for p in &self.params {
            p.apply_in_place(e);
        }
    }

    /// The composed map as `(Q, b)` with `apply(x) == Q·x + b`.
    /// `Q` is returned row-major, `dim × dim`.
    pub fn affine_form(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let mut b = alloc::vec![0.0; n];
        self.apply_in_place(&mut b);
        let mut q = alloc::vec![0.0; n * n];
        let mut col = alloc::vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            // linear part only: translations are skipped
            for p in &self.params {
                reflect_in_place(&mut col, &p.line, p.line_sq);
            }
            for i in 0..n {
                q[i * n + j] = col[i];
            }
        }
        (q, b)
    }
}

/// Convenience for a fresh stream: `GlideSequence::draw(&mut Prng::new(seed), …)`.
pub fn make_glide_sequence(seed: u64, dim: usize, nglide: usize) -> Result<GlideSequence> {
    GlideSequence::draw(&mut Prng::new(seed), dim, nglide)
}

/// Applies the glide sequence to every row. Row and column counts are unchanged.
pub fn transform_matrix(m: &EmbeddingMatrix, gs: &GlideSequence) -> Result<EmbeddingMatrix> {
    if m.cols() != gs.dim() {
        return Err(Error::Config(format!(
            "matrix has {} columns, glide sequence has dimension {}",
            m.cols(),
            gs.dim()
        )));
    }
    let mut out = m.clone();
    for i in 0..out.rows() {
        gs.apply_in_place(out.row_mut(i));
    }
    Ok(out)
}
