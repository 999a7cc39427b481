//! Interaction decompositions `w = Σ_{I ⊆ [k]} w_I` of tables over a factored
//! set.
//!
//! `π_J` averages a table over every coordinate outside `J`; the projection
//! onto the pure interaction space `E_I` is the alternating sum
//! `Q_I = Σ_{J ⊆ I} (−1)^{|I∖J|} π_J`. Components are kept over the full
//! shape (constant along factors outside `I`); [`InteractionDecomposition::reduced`]
//! gives the equivalent map `Z_I → V`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::{norm, EmbeddingTable};
use crate::error::{Error, Result};
use crate::factored::{all_subsets, FactoredShape, IndexSubset};
use crate::linalg::{numerical_rank, DEFAULT_RANK_TOL};

/// Relative threshold below which a component counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// `π_J(w)`: at each tuple, the average of `w` over all coordinates outside `J`.
pub fn pi_average(w: &EmbeddingTable, subset: IndexSubset) -> Result<EmbeddingTable> {
    w.shape().check_subset(subset)?;
    Ok(pi_unchecked(w, subset))
}

fn pi_unchecked(w: &EmbeddingTable, subset: IndexSubset) -> EmbeddingTable {
    let shape = w.shape();
    let dim = w.dim();
    let reduced_len = shape.subset_size(subset);
    let proj = shape.projection_indices(subset);
    let mut sums = vec![0.0; reduced_len * dim];
    for (idx, row) in w.rows().enumerate() {
        let slot = &mut sums[proj[idx] * dim..(proj[idx] + 1) * dim];
        for (s, x) in slot.iter_mut().zip(row) {
            *s += x;
        }
    }
    let count = (shape.size() / reduced_len) as f64;
    sums.iter_mut().for_each(|s| *s /= count);
    let mut data = Vec::with_capacity(w.data().len());
    for &p in &proj {
        data.extend_from_slice(&sums[p * dim..(p + 1) * dim]);
    }
    EmbeddingTable::from_raw(shape.clone(), dim, data)
}

/// `Q_I(w)`, the component of `w` in the pure interaction space `E_I`.
pub fn q_project(w: &EmbeddingTable, subset: IndexSubset) -> Result<EmbeddingTable> {
    w.shape().check_subset(subset)?;
    let mut out = EmbeddingTable::zeros(w.shape().clone(), w.dim());
    for sub in subset.subsets() {
        let sign = if (subset.len() - sub.len()).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        out.add_scaled_in_place(&pi_unchecked(w, sub), sign);
    }
    Ok(out)
}

/// `dim(E_I) = dim(V) · ∏_{i ∈ I} (|Z_i| − 1)`.
pub fn component_dimension(
    shape: &FactoredShape,
    dim: usize,
    subset: IndexSubset,
) -> Result<usize> {
    shape.check_subset(subset)?;
    Ok(dim
        * subset
            .iter()
            .map(|i| shape.cardinalities()[i] - 1)
            .product::<usize>())
}

/// Numerical rank of `Q_I` as a linear operator on `V^Z`, obtained by
/// applying it to the standard basis. Intended for small shapes.
pub fn numerical_component_rank(
    shape: &FactoredShape,
    dim: usize,
    subset: IndexSubset,
) -> Result<usize> {
    shape.check_subset(subset)?;
    let n = shape.size() * dim;
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let mut basis = EmbeddingTable::zeros(shape.clone(), dim);
    for j in 0..n {
        basis.data_mut()[j] = 1.0;
        let image = q_project(&basis, subset)?;
        for (i, x) in image.data().iter().enumerate() {
            matrix[(i, j)] = *x;
        }
        basis.data_mut()[j] = 0.0;
    }
    Ok(numerical_rank(&matrix, DEFAULT_RANK_TOL))
}

/// The family `{w_I}` of interaction components of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDecomposition {
    shape: FactoredShape,
    dim: usize,
    /// In [`all_subsets`] order.
    components: Vec<(IndexSubset, EmbeddingTable)>,
    #[serde(skip)]
    position: HashMap<IndexSubset, usize>,
}

impl InteractionDecomposition {
    fn from_components(
        shape: FactoredShape,
        dim: usize,
        components: Vec<(IndexSubset, EmbeddingTable)>,
    ) -> Self {
        let position = components
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (*s, i))
            .collect();
        Self {
            shape,
            dim,
            components,
            position,
        }
    }

    pub fn shape(&self) -> &FactoredShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[(IndexSubset, EmbeddingTable)] {
        &self.components
    }

    pub fn component(&self, subset: IndexSubset) -> Option<&EmbeddingTable> {
        self.position.get(&subset).map(|&i| &self.components[i].1)
    }

    /// `Σ_I w_I`.
    pub fn reconstruct(&self) -> EmbeddingTable {
        let mut out = EmbeddingTable::zeros(self.shape.clone(), self.dim);
        for (_, c) in &self.components {
            out.add_scaled_in_place(c, 1.0);
        }
        out
    }

    /// Sum of the components whose subsets satisfy `keep`.
    pub fn partial_sum<F: Fn(IndexSubset) -> bool>(&self, keep: F) -> EmbeddingTable {
        let mut out = EmbeddingTable::zeros(self.shape.clone(), self.dim);
        for (s, c) in &self.components {
            if keep(*s) {
                out.add_scaled_in_place(c, 1.0);
            }
        }
        out
    }

    /// `w_I` viewed as a map `Z_I → V`.
    pub fn reduced(&self, subset: IndexSubset) -> Result<EmbeddingTable> {
        let component = self.component(subset).ok_or(Error::InvalidSubset {
            subset,
            k: self.shape.k(),
        })?;
        Ok(reduce(component, subset))
    }

    /// Largest Euclidean row norm of each component.
    pub fn norms(&self) -> Vec<(IndexSubset, f64)> {
        self.components
            .iter()
            .map(|(s, c)| (*s, c.max_row_norm()))
            .collect()
    }
}

/// Restricts a table that is constant outside `subset` to `Z_subset`.
pub(crate) fn reduce(table: &EmbeddingTable, subset: IndexSubset) -> EmbeddingTable {
    let shape = table.shape();
    let reduced_shape = shape.restrict(subset).expect("subset checked by caller");
    let dim = table.dim();
    let mut data = vec![0.0; reduced_shape.size() * dim];
    let proj = shape.projection_indices(subset);
    // Every reduced index is hit; the first hit is as good as any since the
    // table is constant along the other factors.
    let mut seen = vec![false; reduced_shape.size()];
    for (idx, &p) in proj.iter().enumerate() {
        if !seen[p] {
            seen[p] = true;
            data[p * dim..(p + 1) * dim].copy_from_slice(table.row(idx));
        }
    }
    EmbeddingTable::from_raw(reduced_shape, dim, data)
}

/// All `2^k` components of `w`.
pub fn decompose(w: &EmbeddingTable) -> InteractionDecomposition {
    let mut lazy = LazyDecomposition::new(w);
    let components = all_subsets(w.shape().k())
        .into_iter()
        .map(|s| {
            let c = lazy.component_unchecked(s);
            (s, c)
        })
        .collect();
    InteractionDecomposition::from_components(w.shape().clone(), w.dim(), components)
}

/// Computes individual components on demand, sharing the `π_J` averages
/// between them.
pub struct LazyDecomposition<'a> {
    table: &'a EmbeddingTable,
    averages: HashMap<IndexSubset, EmbeddingTable>,
}

impl<'a> LazyDecomposition<'a> {
    pub fn new(table: &'a EmbeddingTable) -> Self {
        Self {
            table,
            averages: HashMap::new(),
        }
    }

    pub fn component(&mut self, subset: IndexSubset) -> Result<EmbeddingTable> {
        self.table.shape().check_subset(subset)?;
        Ok(self.component_unchecked(subset))
    }

    fn component_unchecked(&mut self, subset: IndexSubset) -> EmbeddingTable {
        let mut out = EmbeddingTable::zeros(self.table.shape().clone(), self.table.dim());
        for sub in subset.subsets() {
            let sign = if (subset.len() - sub.len()).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            let table = self.table;
            let avg = self
                .averages
                .entry(sub)
                .or_insert_with(|| pi_unchecked(table, sub));
            out.add_scaled_in_place(avg, sign);
        }
        out
    }
}

/// Outcome of a support test: which components outside the family's
/// down-closure are nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportVerdict {
    pub holds: bool,
    /// `(J, ‖w_J‖_∞)` for every component above tolerance that is not
    /// contained in any member of the family.
    pub violations: Vec<(IndexSubset, f64)>,
}

impl SupportVerdict {
    /// The violation with the largest magnitude.
    pub fn witness(&self) -> Option<(IndexSubset, f64)> {
        self.violations
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Decides whether `w = Σ_{I ∈ family} f_I(z_I)` for some functions `f_I`,
/// i.e. whether every component `w_J` with `J` outside the down-closure of
/// `family` has `‖w_J‖_∞ ≤ tol` (absolute).
pub fn support_test(w: &EmbeddingTable, family: &[IndexSubset], tol: f64) -> SupportVerdict {
    support_test_decomposed(&decompose(w), family, tol)
}

pub fn support_test_decomposed(
    decomposition: &InteractionDecomposition,
    family: &[IndexSubset],
    tol: f64,
) -> SupportVerdict {
    let violations: Vec<(IndexSubset, f64)> = decomposition
        .components()
        .iter()
        .filter(|(j, _)| !family.iter().any(|&s| j.is_subset_of(s)))
        .map(|(j, c)| (*j, c.max_abs()))
        .filter(|&(_, mag)| mag > tol)
        .collect();
    SupportVerdict {
        holds: violations.is_empty(),
        violations,
    }
}

/// `‖π_I(w) − Σ_{J ⊆ I} Q_J(w)‖_∞`; zero up to rounding.
pub fn mobius_check(w: &EmbeddingTable, subset: IndexSubset) -> Result<f64> {
    let average = pi_average(w, subset)?;
    let mut lazy = LazyDecomposition::new(w);
    let mut sum = EmbeddingTable::zeros(w.shape().clone(), w.dim());
    for sub in subset.subsets() {
        sum.add_scaled_in_place(&lazy.component_unchecked(sub), 1.0);
    }
    average.max_abs_diff(&sum)
}

/// Checks the two defining conditions of `E_I` for `table`: constancy along
/// factors outside `I`, and vanishing partial sums over every proper
/// sub-block. Returns the largest violation of either.
pub fn membership_defect(table: &EmbeddingTable, subset: IndexSubset) -> Result<f64> {
    table.shape().check_subset(subset)?;
    let constancy = table.max_abs_diff(&pi_unchecked(table, subset))?;
    let partial = subset
        .subsets()
        .into_iter()
        .filter(|&j| j != subset)
        .map(|j| pi_unchecked(table, j).max_abs())
        .fold(0.0, f64::max);
    Ok(constancy.max(partial))
}

/// Euclidean norms of the rows of a table.
pub(crate) fn row_norms(table: &EmbeddingTable) -> Vec<f64> {
    table.rows().map(norm).collect()
}
