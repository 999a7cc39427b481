//! Dense maps `Z → V` over a factored set, and the elementary linear
//! operations the rest of the crate builds on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factored::FactoredShape;
use crate::linalg::{self, Projector, DEFAULT_RANK_TOL};

/// A vector in `V` for every tuple of a factored set, stored row-major in
/// lexicographic tuple order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    shape: FactoredShape,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(shape: FactoredShape, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        let expected = shape.size() * dim;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { shape, dim, data })
    }

    pub fn from_rows(shape: FactoredShape, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != shape.size() {
            return Err(Error::DimensionMismatch {
                expected: shape.size(),
                found: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(shape, dim, rows.concat())
    }

    pub fn zeros(shape: FactoredShape, dim: usize) -> Self {
        let len = shape.size() * dim;
        Self {
            shape,
            dim,
            data: vec![0.0; len],
        }
    }

    /// Fills each row from `f(tuple, row)`.
    pub fn from_fn<F: FnMut(&[usize], &mut [f64])>(
        shape: FactoredShape,
        dim: usize,
        mut f: F,
    ) -> Self {
        let mut table = Self::zeros(shape, dim);
        let tuples: Vec<Vec<usize>> = table.shape.tuples().collect();
        for (idx, tuple) in tuples.iter().enumerate() {
            f(tuple, &mut table.data[idx * dim..(idx + 1) * dim]);
        }
        table
    }

    pub(crate) fn from_raw(shape: FactoredShape, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.size() * dim);
        Self { shape, dim, data }
    }

    pub fn shape(&self) -> &FactoredShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.shape.size()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn row_at(&self, tuple: &[usize]) -> Result<&[f64]> {
        Ok(self.row(self.shape.index_of(tuple)?))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest Euclidean row norm.
    pub fn max_row_norm(&self) -> f64 {
        self.rows().map(norm).fold(0.0, f64::max)
    }

    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let count = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        mean
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(
            self.shape.clone(),
            self.dim,
            self.data.iter().map(|x| x * factor).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_raw(
            self.shape.clone(),
            self.dim,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_raw(
            self.shape.clone(),
            self.dim,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub(crate) fn add_scaled_in_place(&mut self, other: &Self, factor: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    /// `‖self − other‖_∞` over all entries.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Applies `projector` to every row.
    pub fn project_rows(&self, projector: &Projector) -> Result<Self> {
        if projector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: projector.dim(),
            });
        }
        let mut out = Self::zeros(self.shape.clone(), self.dim);
        for (src, dst) in self.rows().zip(out.data.chunks_exact_mut(self.dim)) {
            projector.apply_into(src, dst);
        }
        Ok(out)
    }

    /// Reorders rows so that row `i` of the result is row `order[i]` of self.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: order.len(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &src in order {
            if src >= self.len() {
                return Err(Error::InvalidArgument(format!("row {src} out of range")));
            }
            data.extend_from_slice(self.row(src));
        }
        Ok(Self::from_raw(self.shape.clone(), self.dim, data))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::InvalidShape(format!(
                "{:?} vs {:?}",
                self.shape.cardinalities(),
                other.shape.cardinalities()
            )));
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

/// One real number per tuple; a one-dimensional [`EmbeddingTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTable(EmbeddingTable);

impl ScalarTable {
    pub fn new(shape: FactoredShape, data: Vec<f64>) -> Result<Self> {
        EmbeddingTable::new(shape, 1, data).map(Self)
    }

    pub fn from_embedding(table: EmbeddingTable) -> Result<Self> {
        if table.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: table.dim(),
            });
        }
        Ok(Self(table))
    }

    pub fn as_embedding(&self) -> &EmbeddingTable {
        &self.0
    }

    pub fn into_embedding(self) -> EmbeddingTable {
        self.0
    }

    pub fn shape(&self) -> &FactoredShape {
        self.0.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn get(&self, tuple: &[usize]) -> Result<f64> {
        Ok(self.0.row_at(tuple)?[0])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The table `(x, y) ↦ ⟨u(x), v(y)⟩` over the concatenated shape `X × Y`.
pub fn inner_product_table(u: &EmbeddingTable, v: &EmbeddingTable) -> Result<ScalarTable> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let shape = u.shape().concat(v.shape())?;
    let mut data = Vec::with_capacity(u.len() * v.len());
    for ux in u.rows() {
        data.extend(v.rows().map(|vy| dot(ux, vy)));
    }
    ScalarTable::new(shape, data)
}

/// Shifts every row of `v` by `t`. Softmax models are invariant under this
/// transformation of their output embeddings.
pub fn translate_outputs(v: &EmbeddingTable, t: &[f64]) -> Result<EmbeddingTable> {
    if t.len() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            found: t.len(),
        });
    }
    let mut out = v.clone();
    for row in out.data.chunks_exact_mut(v.dim) {
        for (x, s) in row.iter_mut().zip(t) {
            *x += s;
        }
    }
    Ok(out)
}

/// Orthogonal projector onto `Span(vectors) ⊆ R^dim`.
pub fn span_projector(vectors: &[Vec<f64>], dim: usize) -> Result<Projector> {
    span_projector_with_tol(vectors, dim, DEFAULT_RANK_TOL)
}

pub fn span_projector_with_tol(
    vectors: &[Vec<f64>],
    dim: usize,
    rel_tol: f64,
) -> Result<Projector> {
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(Projector::onto_column_span(
        &linalg::columns(vectors, dim),
        rel_tol,
    ))
}

/// Projector onto `Span(v(y) − v(y') : y, y' ∈ subset)`, computed as the span
/// of the rows of `v` on `subset` centered at their mean.
pub fn difference_span_projector(v: &EmbeddingTable, subset: &[Vec<usize>]) -> Result<Projector> {
    difference_span_projector_with_tol(v, subset, DEFAULT_RANK_TOL)
}

pub fn difference_span_projector_with_tol(
    v: &EmbeddingTable,
    subset: &[Vec<usize>],
    rel_tol: f64,
) -> Result<Projector> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument(
            "output subset must be nonempty".into(),
        ));
    }
    let rows = subset
        .iter()
        .map(|t| v.row_at(t).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    span_projector_with_tol(&centered(&rows), v.dim(), rel_tol)
}

pub(crate) fn centered(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    rows.iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect()
}
