//! Supervised cross-lingual alignment by orthogonal Procrustes.
//!
//! Given dictionary-aligned source rows `X_S` and target rows `X_T`, the
//! orthogonal `W` minimising `‖X_S W − X_T‖_F` is `U Vᵀ` where
//! `U Σ Vᵀ = svd(X_Sᵀ X_T)`.

mod linalg;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use linalg::{svd, Matrix, Svd};

use crate::embedding::{EmbeddingSpace, Language, LookupPolicy};
use crate::error::{Error, Result};

pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BilingualDictionary {
    pub source_language: Language,
    pub target_language: Language,
    pairs: Vec<(String, String)>,
}

impl BilingualDictionary {
    pub fn new(
        source_language: Language,
        target_language: Language,
        pairs: Vec<(String, String)>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("bilingual dictionary is empty".into()));
        }
        if let Some((s, t)) = pairs.iter().find(|(s, t)| s.is_empty() || t.is_empty()) {
            return Err(Error::InvalidInput(format!("dictionary pair ({s:?}, {t:?}) has an empty side")));
        }
        Ok(BilingualDictionary {
            source_language,
            target_language,
            pairs,
        })
    }

    /// Reads `source<TAB>target` lines; blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, source_language: Language, target_language: Language) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (s, t) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `source<TAB>target`"))?;
            let (s, t) = (s.trim(), t.trim());
            if s.is_empty() || t.is_empty() || t.contains('\t') {
                return Err(Error::parse(path, i + 1, "expected `source<TAB>target`"));
            }
            pairs.push((s.to_string(), t.to_string()));
        }
        Self::new(source_language, target_language, pairs)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

#[derive(Debug, Clone)]
pub struct AlignedMatrices {
    pub source: Matrix,
    pub target: Matrix,
    pub kept_pairs: Vec<(String, String)>,
    pub dropped_pairs: usize,
    /// Fewer kept pairs than dimensions.
    pub underdetermined: bool,
}

pub fn extract_aligned(
    dict: &BilingualDictionary,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    policy: &LookupPolicy,
) -> Result<AlignedMatrices> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    let d = source.dim();
    let mut xs = Vec::new();
    let mut xt = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for (s, t) in dict.pairs() {
        match (source.lookup_index(s, policy), target.lookup_index(t, policy)) {
            (Some(i), Some(j)) => {
                xs.extend(source.row(i));
                xt.extend(target.row(j));
                kept.push((s.clone(), t.clone()));
            }
            _ => dropped += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::NoAlignedPairs);
    }
    let m = kept.len();
    if m < d {
        log::warn!("only {m} dictionary pairs for {d} dimensions; the alignment is under-determined");
    }
    Ok(AlignedMatrices {
        source: Matrix::from_vec(m, d, xs)?,
        target: Matrix::from_vec(m, d, xt)?,
        kept_pairs: kept,
        dropped_pairs: dropped,
        underdetermined: m < d,
    })
}

/// Optional row preprocessing applied before fitting only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "unit")]
    Unit,
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "center+unit")]
    CenterUnit,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "unit" => Ok(Normalization::Unit),
            "center" => Ok(Normalization::Center),
            "center+unit" => Ok(Normalization::CenterUnit),
            other => Err(Error::InvalidInput(format!("unknown normalization {other:?}"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Unit => "unit",
            Normalization::Center => "center",
            Normalization::CenterUnit => "center+unit",
        })
    }
}

fn center(m: &mut Matrix) {
    let rows = m.rows() as f64;
    let mut means = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, x) in means.iter_mut().zip(m.row(i)) {
            *acc += x;
        }
    }
    means.iter_mut().for_each(|v| *v /= rows);
    for i in 0..m.rows() {
        for (x, mu) in m.row_mut(i).iter_mut().zip(&means) {
            *x -= mu;
        }
    }
}

fn unit_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 0.0 {
            row.iter_mut().for_each(|x| *x /= len);
        }
    }
}

fn normalize(m: &Matrix, how: Normalization) -> Matrix {
    let mut m = m.clone();
    match how {
        Normalization::None => {}
        Normalization::Unit => unit_rows(&mut m),
        Normalization::Center => center(&mut m),
        Normalization::CenterUnit => {
            center(&mut m);
            unit_rows(&mut m);
        }
    }
    m
}

/// A d×d orthogonal map applied on the right of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    w: Matrix,
}

impl ProjectionMatrix {
    pub fn new(w: Matrix) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::InvalidInput(format!(
                "projection must be square, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        let p = ProjectionMatrix { w };
        let err = p.orthogonality_error();
        if !(err <= ORTHOGONALITY_TOLERANCE) {
            return Err(Error::InvalidInput(format!("projection is not orthogonal (‖WᵀW − I‖ = {err:e})")));
        }
        Ok(p)
    }

    pub fn identity(d: usize) -> Self {
        ProjectionMatrix { w: Matrix::identity(d) }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// `‖WᵀW − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        self.w
            .transpose_matmul(&self.w)
            .and_then(|g| g.sub(&Matrix::identity(self.dim())))
            .map(|e| e.frobenius_norm())
            .unwrap_or(f64::INFINITY)
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.w.row(i)) {
                *o += xi * w;
            }
        }
    }

    /// `‖X_S W − X_T‖_F`.
    pub fn residual(&self, aligned: &AlignedMatrices) -> Result<f64> {
        Ok(aligned.source.matmul(&self.w)?.sub(&aligned.target)?.frobenius_norm())
    }
}

pub fn fit_procrustes(aligned: &AlignedMatrices) -> Result<ProjectionMatrix> {
    fit_procrustes_with(aligned, Normalization::None)
}

pub fn fit_procrustes_with(aligned: &AlignedMatrices, how: Normalization) -> Result<ProjectionMatrix> {
    if aligned.source.rows() == 0 {
        return Err(Error::NoAlignedPairs);
    }
    let xs = normalize(&aligned.source, how);
    let xt = normalize(&aligned.target, how);
    let cross = xs.transpose_matmul(&xt)?;
    let Svd { u, v, .. } = svd(&cross)?;
    let w = u.matmul(&v.transpose())?;
    Ok(ProjectionMatrix { w })
}

/// Maps every row `x` of `space` to `x W`; vocabulary and language are kept.
pub fn project(space: &EmbeddingSpace, w: &ProjectionMatrix) -> Result<EmbeddingSpace> {
    if space.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: space.dim(),
        });
    }
    let source = format!("{} [orthogonal projection, d={}]", space.source(), w.dim());
    if w.matrix().is_identity() {
        return space.map_rows(space.dim(), source, |x, out| out.copy_from_slice(x));
    }
    space.map_rows(space.dim(), source, |x, out| w.apply(x, out))
}
