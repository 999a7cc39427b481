//! Geometric diagnostics of embedding tables: analogy residuals on 2×2
//! faces, regularity of the vertex polytope `{w(z)}`, pairwise-interaction
//! norm grids, and principal-axis projections for plotting.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::{norm, EmbeddingTable};
use crate::error::{Error, Result};
use crate::factored::{all_subsets, IndexSubset};
use crate::interaction::{decompose, InteractionDecomposition};
use crate::linalg::singular_values;

/// `¼‖w(a₁b₁) − w(a₂b₁) − w(a₁b₂) + w(a₂b₂)‖` for four tuples that agree
/// everywhere except on two coordinates, where they form a 2×2 grid.
/// The cells may be given in any order.
pub fn analogy_residual(w: &EmbeddingTable, quad: &[Vec<usize>; 4]) -> Result<f64> {
    let face = Face::from_cells(w, quad)?;
    Ok(face.residual(w))
}

/// A 2×2 sub-grid: coordinates `i < j` take values `{a₁, a₂} × {b₁, b₂}`
/// and the remaining coordinates are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    /// 0-based factor pair.
    pub factors: (usize, usize),
    /// Cells in the order `(a₁,b₁), (a₁,b₂), (a₂,b₁), (a₂,b₂)`.
    pub cells: [Vec<usize>; 4],
}

impl Face {
    fn from_cells(w: &EmbeddingTable, quad: &[Vec<usize>; 4]) -> Result<Self> {
        let k = w.shape().k();
        for t in quad {
            w.shape().index_of(t)?;
        }
        let malformed =
            || Error::InvalidArgument("the four tuples do not form a 2×2 sub-grid".into());
        let varying: Vec<usize> = (0..k)
            .filter(|&c| quad.iter().any(|t| t[c] != quad[0][c]))
            .collect();
        let &[i, j] = varying.as_slice() else {
            return Err(malformed());
        };
        let mut a: Vec<usize> = quad.iter().map(|t| t[i]).collect();
        let mut b: Vec<usize> = quad.iter().map(|t| t[j]).collect();
        a.sort_unstable();
        a.dedup();
        b.sort_unstable();
        b.dedup();
        if a.len() != 2 || b.len() != 2 {
            return Err(malformed());
        }
        let cell = |x: usize, y: usize| {
            let mut t = quad[0].clone();
            t[i] = x;
            t[j] = y;
            t
        };
        let cells = [
            cell(a[0], b[0]),
            cell(a[0], b[1]),
            cell(a[1], b[0]),
            cell(a[1], b[1]),
        ];
        for c in &cells {
            if !quad.contains(c) {
                return Err(malformed());
            }
        }
        Ok(Self {
            factors: (i, j),
            cells,
        })
    }

    fn residual(&self, w: &EmbeddingTable) -> f64 {
        let row = |t: &Vec<usize>| w.row_at(t).expect("cells validated");
        let [p11, p12, p21, p22] = [
            &self.cells[0],
            &self.cells[1],
            &self.cells[2],
            &self.cells[3],
        ]
        .map(row);
        let alt: Vec<f64> = (0..w.dim())
            .map(|d| p11[d] - p21[d] - p12[d] + p22[d])
            .collect();
        0.25 * norm(&alt)
    }
}

/// A face whose analogy residual exceeds the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceViolation {
    pub face: Face,
    pub residual: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSize {
    pub subset: IndexSubset,
    /// Largest row norm of `w_I`.
    pub norm: f64,
    pub relative: f64,
    pub vanishes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeFlags {
    /// Only order-0 and order-1 components survive.
    pub decomposable: bool,
    /// Every 2×2 face has residual within tolerance.
    pub all_faces_parallelograms: bool,
    /// Shape (2,2): the four points are a planar parallelogram.
    pub parallelogram: Option<bool>,
    /// Shape (2,3) or (3,2): two triangles related by one translation.
    pub prism: Option<bool>,
    /// Shape (2,2,2), indexed by the fixed factor `j`: every slice with
    /// `z_j` fixed is a planar parallelogram.
    pub slice_parallelograms: Option<Vec<bool>>,
    /// Shape (2,2,2), indexed by `j`: the two slices `z_j = 0, 1` are
    /// translates of each other.
    pub slices_parallel: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeReport {
    pub shape: Vec<usize>,
    pub dim: usize,
    pub vertices: usize,
    /// Numerical rank of the centered vertex matrix.
    pub affine_dimension: usize,
    pub tol: f64,
    /// Largest distance of a vertex from the centroid; norms are relative
    /// to it.
    pub scale: f64,
    pub components: Vec<ComponentSize>,
    pub flags: PolytopeFlags,
    pub violating_faces: Vec<FaceViolation>,
}

/// Affine dimension, component sizes, regularity flags, and the 2×2 faces
/// that fail to be parallelograms. `tol` is relative to the polytope's
/// radius and also serves as the relative singular-value cutoff.
pub fn polytope_report(w: &EmbeddingTable, tol: f64) -> Result<PolytopeReport> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument(
            "tolerance must be nonnegative".into(),
        ));
    }
    let shape = w.shape().cardinalities().to_vec();
    let k = shape.len();
    let dec = decompose(w);
    let centered = dec.partial_sum(|s| !s.is_empty());
    let scale = centered.max_row_norm();
    let unit = if scale > 0.0 { scale } else { 1.0 };

    let components: Vec<ComponentSize> = dec
        .norms()
        .into_iter()
        .map(|(subset, n)| ComponentSize {
            subset,
            norm: n,
            relative: n / unit,
            vanishes: n / unit <= tol,
        })
        .collect();
    let vanishes = |s: IndexSubset| components.iter().any(|c| c.subset == s && c.vanishes);
    let higher_vanish = |keep: &dyn Fn(IndexSubset) -> bool| {
        all_subsets(k)
            .into_iter()
            .filter(|s| s.len() >= 2 && keep(*s))
            .all(vanishes)
    };
    let decomposable = higher_vanish(&|_| true);

    let mut violating_faces = Vec::new();
    let mut all_faces_parallelograms = true;
    for face in faces(&shape) {
        let residual = face.residual(w);
        let relative = residual / unit;
        if relative > tol {
            all_faces_parallelograms = false;
            violating_faces.push(FaceViolation {
                face,
                residual,
                relative,
            });
        }
    }

    let pair = IndexSubset::from_indices([0, 1]);
    let parallelogram = (shape == [2, 2]).then(|| vanishes(pair));
    let prism = (shape == [2, 3] || shape == [3, 2]).then(|| vanishes(pair));
    let (slice_parallelograms, slices_parallel) = if shape == [2, 2, 2] {
        let full = IndexSubset::full(3);
        let slices = (0..3)
            .map(|j| vanishes(full.difference(IndexSubset::singleton(j))) && vanishes(full))
            .collect();
        let parallel = (0..3)
            .map(|j| higher_vanish(&|s: IndexSubset| s.contains(j)))
            .collect();
        (Some(slices), Some(parallel))
    } else {
        (None, None)
    };

    Ok(PolytopeReport {
        affine_dimension: affine_dimension(&centered, tol),
        shape,
        dim: w.dim(),
        vertices: w.len(),
        tol,
        scale,
        components,
        flags: PolytopeFlags {
            decomposable,
            all_faces_parallelograms,
            parallelogram,
            prism,
            slice_parallelograms,
            slices_parallel,
        },
        violating_faces,
    })
}

fn affine_dimension(centered: &EmbeddingTable, rel_tol: f64) -> usize {
    let matrix = DMatrix::from_row_slice(centered.len(), centered.dim(), centered.data());
    let values = singular_values(&matrix);
    match values.first() {
        Some(&largest) if largest > 0.0 => values
            .iter()
            .filter(|&&s| s > rel_tol.max(f64::EPSILON * 16.0) * largest)
            .count(),
        _ => 0,
    }
}

/// Every 2×2 face of the grid, pairs of factors outermost.
fn faces(shape: &[usize]) -> Vec<Face> {
    let k = shape.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let rest: Vec<usize> = (0..k).filter(|&c| c != i && c != j).collect();
            let rest_cards: Vec<usize> = rest.iter().map(|&c| shape[c]).collect();
            let rest_tuples = odometer(&rest_cards);
            for a1 in 0..shape[i] {
                for a2 in a1 + 1..shape[i] {
                    for b1 in 0..shape[j] {
                        for b2 in b1 + 1..shape[j] {
                            for fixed in &rest_tuples {
                                let cell = |a: usize, b: usize| {
                                    let mut t = vec![0; k];
                                    for (&c, &v) in rest.iter().zip(fixed) {
                                        t[c] = v;
                                    }
                                    t[i] = a;
                                    t[j] = b;
                                    t
                                };
                                out.push(Face {
                                    factors: (i, j),
                                    cells: [cell(a1, b1), cell(a1, b2), cell(a2, b1), cell(a2, b2)],
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn odometer(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

/// Norm summaries of a two-factor table: the mean, the per-value norms of
/// each first-order component, and the per-cell norm of the pairwise
/// component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionNormGrid {
    pub rows: usize,
    pub cols: usize,
    pub norm_empty: f64,
    pub norm_first: f64,
    pub norm_second: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// `grid[a][b] = ‖w_{12}(a, b)‖`.
    pub grid: Vec<Vec<f64>>,
}

pub fn interaction_norm_grid(w: &EmbeddingTable) -> Result<InteractionNormGrid> {
    let cards = w.shape().cardinalities();
    if cards.len() != 2 {
        return Err(Error::InvalidShape(format!(
            "a norm grid needs exactly 2 factors, found {}",
            cards.len()
        )));
    }
    let dec = decompose(w);
    let reduced_norms = |dec: &InteractionDecomposition, s: IndexSubset| -> Vec<f64> {
        dec.reduced(s)
            .expect("complete lattice")
            .rows()
            .map(norm)
            .collect()
    };
    let first = reduced_norms(&dec, IndexSubset::singleton(0));
    let second = reduced_norms(&dec, IndexSubset::singleton(1));
    let pair = reduced_norms(&dec, IndexSubset::full(2));
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(InteractionNormGrid {
        rows: cards[0],
        cols: cards[1],
        norm_empty: reduced_norms(&dec, IndexSubset::EMPTY)[0],
        norm_first: max(&first),
        norm_second: max(&second),
        grid: pair.chunks(cards[1]).map(<[f64]>::to_vec).collect(),
        first,
        second,
    })
}

/// Principal axes of a point cloud and the coordinates of the centered
/// points along them. Axes are unit rows; each is signed so that its
/// largest-magnitude entry is positive. Missing axes (fewer than
/// `components` nonzero directions) are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

pub fn pca(points: &EmbeddingTable, components: usize) -> Pca {
    let dim = points.dim();
    let mean = points.mean_row();
    let n = points.len();
    let centered = DMatrix::from_fn(n, dim, |r, c| points.row(r)[c] - mean[c]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut axes = Vec::with_capacity(components);
    let mut explained = Vec::with_capacity(components);
    for c in 0..components {
        match order.get(c) {
            Some(&idx) if svd.singular_values[idx] > 1e-12 * top && top > 0.0 => {
                let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
                let pivot = axis
                    .iter()
                    .copied()
                    .fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
                if pivot < 0.0 {
                    axis.iter_mut().for_each(|x| *x = -*x);
                }
                explained.push(svd.singular_values[idx].powi(2));
                axes.push(axis);
            }
            _ => {
                explained.push(0.0);
                axes.push(vec![0.0; dim]);
            }
        }
    }
    let coords = (0..n)
        .map(|r| {
            axes.iter()
                .map(|a| (0..dim).map(|c| centered[(r, c)] * a[c]).sum())
                .collect()
        })
        .collect();
    Pca {
        mean,
        axes,
        explained,
        coords,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factored::FactoredShape;
    use crate::interaction::q_project;
    use crate::random::Gaussian;

    fn shape(cards: &[usize]) -> FactoredShape {
        FactoredShape::new(cards.to_vec()).unwrap()
    }

    fn quad() -> [Vec<usize>; 4] {
        [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
    }

    fn without(w: &EmbeddingTable, dropped: &[IndexSubset]) -> EmbeddingTable {
        decompose(w).partial_sum(|s| !dropped.contains(&s))
    }

    #[test]
    fn unit_square_is_a_parallelogram() {
        let w = EmbeddingTable::from_rows(
            shape(&[2, 2]),
            &[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
        )
        .unwrap();
        assert_eq!(analogy_residual(&w, &quad()).unwrap(), 0.0);
    }

    #[test]
    fn scalar_analogy_example() {
        // man=4, woman=0, king=6, queen=2 as a scalar embedding.
        let w = EmbeddingTable::from_rows(
            shape(&[2, 2]),
            &[vec![4.0], vec![0.0], vec![6.0], vec![2.0]],
        )
        .unwrap();
        assert_eq!(analogy_residual(&w, &quad()).unwrap(), 0.0);
    }

    #[test]
    fn residual_matches_four_term_sum_in_any_order() {
        let mut g = Gaussian::seeded(4);
        let w = g.table(shape(&[3, 4]), 3, 1.0);
        let cells = [vec![2, 3], vec![0, 1], vec![2, 1], vec![0, 3]];
        let r = |t: &[usize]| w.row_at(t).unwrap().to_vec();
        let alt: Vec<f64> = (0..3)
            .map(|d| r(&[0, 1])[d] - r(&[2, 1])[d] - r(&[0, 3])[d] + r(&[2, 3])[d])
            .collect();
        let expected = 0.25 * alt.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((analogy_residual(&w, &cells).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn residual_equals_pairwise_component_on_two_by_two() {
        let mut g = Gaussian::seeded(5);
        let w = g.table(shape(&[2, 2]), 4, 1.0);
        let pair = q_project(&w, IndexSubset::full(2)).unwrap();
        let r = analogy_residual(&w, &quad()).unwrap();
        for row in pair.rows() {
            assert!((norm(row) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_quadruples_are_rejected() {
        let w = Gaussian::seeded(1).table(shape(&[3, 3, 2]), 2, 1.0);
        let repeated = [vec![0, 0, 0], vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]];
        assert!(analogy_residual(&w, &repeated).is_err());
        let three_coords = [vec![0, 0, 0], vec![0, 1, 0], vec![1, 0, 1], vec![1, 1, 0]];
        assert!(analogy_residual(&w, &three_coords).is_err());
        let out_of_range = [vec![0, 0, 0], vec![0, 3, 0], vec![1, 0, 0], vec![1, 3, 0]];
        assert!(analogy_residual(&w, &out_of_range).is_err());
    }

    #[test]
    fn two_by_two_rows() {
        let w = Gaussian::seeded(2).table(shape(&[2, 2]), 5, 1.0);
        let generic = polytope_report(&w, 1e-9).unwrap();
        assert_eq!(generic.affine_dimension, 3);
        assert_eq!(generic.flags.parallelogram, Some(false));
        assert_eq!(generic.violating_faces.len(), 1);

        let flat = without(&w, &[IndexSubset::full(2)]);
        let report = polytope_report(&flat, 1e-9).unwrap();
        assert!(report.affine_dimension <= 2);
        assert_eq!(report.flags.parallelogram, Some(true));
        assert!(report.flags.decomposable && report.flags.all_faces_parallelograms);
    }

    #[test]
    fn two_by_three_rows() {
        let w = Gaussian::seeded(3).table(shape(&[2, 3]), 6, 1.0);
        let generic = polytope_report(&w, 1e-9).unwrap();
        assert_eq!(generic.affine_dimension, 5);
        assert_eq!(generic.flags.prism, Some(false));

        let prism = without(&w, &[IndexSubset::full(2)]);
        let report = polytope_report(&prism, 1e-9).unwrap();
        assert_eq!(report.flags.prism, Some(true));
        assert_eq!(report.affine_dimension, 3);
        // The two triangles differ by a single translation.
        let shift: Vec<f64> = (0..6)
            .map(|d| prism.row_at(&[1, 0]).unwrap()[d] - prism.row_at(&[0, 0]).unwrap()[d])
            .collect();
        for b in 1..3 {
            for (d, s) in shift.iter().enumerate() {
                let delta = prism.row_at(&[1, b]).unwrap()[d] - prism.row_at(&[0, b]).unwrap()[d];
                assert!((delta - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_by_two_rows() {
        let w = Gaussian::seeded(6).table(shape(&[2, 2, 2]), 7, 1.0);
        let s = |idx: &[usize]| IndexSubset::from_indices(idx.iter().copied());

        let box_like = without(&w, &[s(&[0, 1]), s(&[0, 2]), s(&[1, 2]), s(&[0, 1, 2])]);
        let report = polytope_report(&box_like, 1e-9).unwrap();
        assert_eq!(report.affine_dimension, 3);
        assert_eq!(report.flags.slice_parallelograms, Some(vec![true; 3]));
        assert_eq!(report.flags.slices_parallel, Some(vec![true; 3]));

        let twisted = without(&w, &[s(&[0, 2]), s(&[0, 1, 2])]);
        let report = polytope_report(&twisted, 1e-9).unwrap();
        assert_eq!(
            report.flags.slice_parallelograms,
            Some(vec![false, true, false])
        );
        assert_eq!(report.flags.slices_parallel, Some(vec![false; 3]));
        assert!(!report.flags.decomposable);
    }

    #[test]
    fn decomposable_dimension_is_sum_of_factor_ranks() {
        let w = Gaussian::seeded(8).table(shape(&[3, 2, 4]), 12, 1.0);
        let flat = decompose(&w).partial_sum(|s| s.len() <= 1);
        let report = polytope_report(&flat, 1e-9).unwrap();
        assert_eq!(report.affine_dimension, 2 + 1 + 3);
        assert!(report.violating_faces.is_empty());
    }

    #[test]
    fn norm_grid_of_a_bump() {
        let (p, q, delta) = (4, 5, 2.0);
        let mut g = Gaussian::seeded(9);
        let f = g.vector(p * 3, 1.0);
        let h = g.vector(q * 3, 1.0);
        let e = [0.6, 0.0, 0.8];
        let w = EmbeddingTable::from_fn(shape(&[p, q]), 3, |t, row| {
            for d in 0..3 {
                row[d] = f[t[0] * 3 + d] + h[t[1] * 3 + d];
                if t == [1, 1] {
                    row[d] += delta * e[d];
                }
            }
        });
        let grid = interaction_norm_grid(&w).unwrap();
        // Q_12 of an indicator bump: (1[a=1] - 1/p)(1[b=1] - 1/q) δ e.
        for a in 0..p {
            for b in 0..q {
                let fa = if a == 1 { 1.0 } else { 0.0 } - 1.0 / p as f64;
                let fb = if b == 1 { 1.0 } else { 0.0 } - 1.0 / q as f64;
                assert!((grid.grid[a][b] - (fa * fb).abs() * delta).abs() < 1e-12);
            }
        }
        let peak = grid.grid[1][1];
        assert!(grid.grid.iter().flatten().all(|&x| x <= peak));
    }

    #[test]
    fn norm_grid_of_constant_and_decomposable_tables() {
        let constant =
            EmbeddingTable::from_fn(shape(&[3, 3]), 2, |_, row| row.copy_from_slice(&[3.0, 4.0]));
        let grid = interaction_norm_grid(&constant).unwrap();
        assert!((grid.norm_empty - 5.0).abs() < 1e-12);
        assert!(grid.norm_first < 1e-12 && grid.norm_second < 1e-12);
        assert!(grid.grid.iter().flatten().all(|&x| x < 1e-12));

        let w = Gaussian::seeded(1).table(shape(&[3, 4]), 2, 1.0);
        let flat = without(&w, &[IndexSubset::full(2)]);
        assert!(interaction_norm_grid(&flat)
            .unwrap()
            .grid
            .iter()
            .flatten()
            .all(|&x| x < 1e-12));
        assert!(
            interaction_norm_grid(&Gaussian::seeded(1).table(shape(&[2, 2, 2]), 2, 1.0)).is_err()
        );
    }

    #[test]
    fn norm_grid_ignores_additive_first_order_terms() {
        let mut g = Gaussian::seeded(10);
        let w = g.table(shape(&[3, 4]), 3, 1.0);
        let f = g.vector(9, 1.0);
        let h = g.vector(12, 1.0);
        let shifted = EmbeddingTable::from_fn(shape(&[3, 4]), 3, |t, row| {
            let base = w.row_at(t).unwrap();
            for d in 0..3 {
                row[d] = base[d] + f[t[0] * 3 + d] + h[t[1] * 3 + d];
            }
        });
        let a = interaction_norm_grid(&w).unwrap().grid;
        let b = interaction_norm_grid(&shifted).unwrap().grid;
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_recovers_a_planar_cloud() {
        let w = EmbeddingTable::from_rows(
            shape(&[2, 2]),
            &[
                vec![0.0, 0.0, 5.0],
                vec![2.0, 0.0, 5.0],
                vec![0.0, 1.0, 5.0],
                vec![2.0, 1.0, 5.0],
            ],
        )
        .unwrap();
        let p = pca(&w, 3);
        assert_eq!(p.axes[0], vec![1.0, 0.0, 0.0]);
        assert!((p.axes[1][1].abs() - 1.0).abs() < 1e-12);
        assert_eq!(p.axes[2], vec![0.0; 3]);
        assert!((p.coords[1][0] - 1.0).abs() < 1e-12);
    }
}
