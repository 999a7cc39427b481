//! Small dense linear-algebra helpers on top of `nalgebra`: numerical rank
//! and orthogonal projectors onto spans.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative singular-value threshold used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular values of `matrix`, in decreasing order.
pub fn singular_values(matrix: &DMatrix<f64>) -> Vec<f64> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = matrix.singular_values().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Number of singular values above `rel_tol × σ_max`.
pub fn numerical_rank(matrix: &DMatrix<f64>, rel_tol: f64) -> usize {
    let values = singular_values(matrix);
    match values.first() {
        Some(&largest) if largest > 0.0 => {
            values.iter().filter(|&&s| s > rel_tol * largest).count()
        }
        _ => 0,
    }
}

/// Ratio of the largest to the smallest nonzero-rank singular value of the
/// matrix whose columns are `vectors`; infinite when rank-deficient.
pub fn condition_number(vectors: &[Vec<f64>], dim: usize) -> f64 {
    let matrix = columns(vectors, dim);
    let values = singular_values(&matrix);
    if values.len() < dim || values.is_empty() {
        return f64::INFINITY;
    }
    let smallest = values[dim - 1];
    if smallest <= 0.0 {
        f64::INFINITY
    } else {
        values[0] / smallest
    }
}

pub(crate) fn columns(vectors: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, vectors.len(), |r, c| vectors[c][r])
}

/// An orthogonal projector `P: V → V` onto a linear subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    dim: usize,
    rank: usize,
    /// Row-major `dim × dim`.
    matrix: Vec<f64>,
}

impl Projector {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            rank: 0,
            matrix: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self {
            dim,
            rank: dim,
            matrix,
        }
    }

    /// Projector onto the span of the columns of `basis`, keeping left
    /// singular vectors above `rel_tol × σ_max`.
    pub(crate) fn onto_column_span(basis: &DMatrix<f64>, rel_tol: f64) -> Self {
        let dim = basis.nrows();
        if basis.ncols() == 0 || dim == 0 {
            return Self::zero(dim);
        }
        let svd = basis.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if largest <= 0.0 {
            return Self::zero(dim);
        }
        let kept: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > rel_tol * largest)
            .collect();
        let mut matrix = vec![0.0; dim * dim];
        for &k in &kept {
            let col = u.column(k);
            for r in 0..dim {
                for c in 0..dim {
                    matrix[r * dim + c] += col[r] * col[c];
                }
            }
        }
        Self {
            dim,
            rank: kept.len(),
            matrix,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim
    }

    /// Row-major matrix entries.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length must match projector dim");
        (0..self.dim)
            .map(|r| {
                self.matrix[r * self.dim..(r + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.matrix[r * self.dim..(r + 1) * self.dim]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
}

/// Least-squares coefficients `argmin_c ‖A c − b‖`, used by tests as an
/// independent route to span projections.
pub fn least_squares(a: &DMatrix<f64>, b: &[f64]) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(&DVector::from_column_slice(b), 1e-12)
        .expect("SVD with both factors computed")
}
