//! Conditional independence of softmax models, decided two ways.
//!
//! The geometric route decomposes the embeddings `u = Σ u_I`, `v = Σ v_J`
//! and requires `⟨u_I, v_J⟩ = 0` for every pair that is forbidden by the
//! partition. The oracle route never looks at embeddings: it decomposes
//! `log P(y | x)` over the merged factors and asks whether the table lies in
//! the hierarchical model spanned by `{A∪C, B∪C, [m]}`, which is the same as
//! the factorization `P = f(z_A, z_C) g(z_B, z_C) h(x)`.
//!
//! All energies are reported raw and normalized by `‖logits‖_∞`; verdicts
//! compare the normalized value against the tolerance.

use serde::{Deserialize, Serialize};

use crate::embedding::{difference_span_projector, dot, span_projector, EmbeddingTable};
use crate::error::{Error, Result};
use crate::factored::{all_subsets, disjoint_union, IndexSubset, SidePartition, VariablePartition};
use crate::interaction::{decompose, reduce, support_test_decomposed, InteractionDecomposition};
use crate::linalg::condition_number;
use crate::softmax::{log_table, ConditionalTable, SoftmaxModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Geometric,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub input: IndexSubset,
    pub output: IndexSubset,
    pub raw: f64,
    pub normalized: f64,
}

/// `ε(I, J) = max_{x,y} |⟨u_I(x), v_J(y)⟩|` for every `I ⊆ [m]`, `J ⊆ [n]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyMatrix {
    pub m: usize,
    pub n: usize,
    /// `‖⟨u, v⟩‖_∞`, the normalizing scale.
    pub logit_scale: f64,
    /// Input subsets outer, output subsets inner, both in lattice order.
    pub entries: Vec<EnergyEntry>,
    #[serde(skip)]
    by_mask: Vec<usize>,
}

impl EnergyMatrix {
    fn build(
        m: usize,
        n: usize,
        logit_scale: f64,
        mut raw: impl FnMut(IndexSubset, IndexSubset) -> f64,
    ) -> Self {
        let scale = normalizer(logit_scale);
        let mut entries = Vec::with_capacity(1 << (m + n));
        let mut by_mask = vec![0; 1 << (m + n)];
        for input in all_subsets(m) {
            for output in all_subsets(n) {
                let r = raw(input, output);
                by_mask[(input.mask() as usize) | ((output.mask() as usize) << m)] = entries.len();
                entries.push(EnergyEntry {
                    input,
                    output,
                    raw: r,
                    normalized: r / scale,
                });
            }
        }
        Self {
            m,
            n,
            logit_scale,
            entries,
            by_mask,
        }
    }

    pub fn get(&self, input: IndexSubset, output: IndexSubset) -> &EnergyEntry {
        &self.entries[self.by_mask[(input.mask() as usize) | ((output.mask() as usize) << self.m)]]
    }

    pub fn raw(&self, input: IndexSubset, output: IndexSubset) -> f64 {
        self.get(input, output).raw
    }

    pub fn normalized(&self, input: IndexSubset, output: IndexSubset) -> f64 {
        self.get(input, output).normalized
    }

    /// Largest `|Δε|` against another matrix over the same lattice.
    pub fn max_raw_discrepancy(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a.raw - b.raw).abs())
            .fold(0.0, f64::max)
    }
}

fn normalizer(scale: f64) -> f64 {
    if scale > 0.0 {
        scale
    } else {
        1.0
    }
}

/// Energies computed from the pairings of the embeddings' components.
pub fn energy_matrix(model: &SoftmaxModel) -> EnergyMatrix {
    let du = decompose(model.input());
    let dv = decompose(model.output());
    energy_from_decompositions(&du, &dv, model.logits().max_abs())
}

pub(crate) fn energy_from_decompositions(
    du: &InteractionDecomposition,
    dv: &InteractionDecomposition,
    logit_scale: f64,
) -> EnergyMatrix {
    let m = du.shape().k();
    let n = dv.shape().k();
    let reduced_u: Vec<(IndexSubset, EmbeddingTable)> = du
        .components()
        .iter()
        .map(|(s, c)| (*s, reduce(c, *s)))
        .collect();
    let reduced_v: Vec<(IndexSubset, EmbeddingTable)> = dv
        .components()
        .iter()
        .map(|(s, c)| (*s, reduce(c, *s)))
        .collect();
    EnergyMatrix::build(m, n, logit_scale, |i, j| {
        let ui = &reduced_u
            .iter()
            .find(|(s, _)| *s == i)
            .expect("complete lattice")
            .1;
        let vj = &reduced_v
            .iter()
            .find(|(s, _)| *s == j)
            .expect("complete lattice")
            .1;
        max_abs_pairing(ui, vj)
    })
}

fn max_abs_pairing(a: &EmbeddingTable, b: &EmbeddingTable) -> f64 {
    let mut best = 0.0f64;
    for ra in a.rows() {
        for rb in b.rows() {
            best = best.max(dot(ra, rb).abs());
        }
    }
    best
}

/// Energies read off the interaction decomposition of the logit tensor over
/// `X × Y`: `ε(I, J) = ‖Q_{I⊔J}⟨u, v⟩‖_∞`. A second, independent route to
/// [`energy_matrix`].
pub fn energy_matrix_via_logits(model: &SoftmaxModel) -> EnergyMatrix {
    let logits = model.logits();
    let dec = decompose(logits.as_embedding());
    let (m, n) = (model.m(), model.n());
    EnergyMatrix::build(m, n, logits.max_abs(), |i, j| {
        let merged = disjoint_union(i, m, j, n).expect("subsets from the lattice");
        dec.component(merged).expect("complete lattice").max_abs()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub input: IndexSubset,
    pub output: IndexSubset,
    pub normalized: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiVerdict {
    pub holds: bool,
    pub method: Method,
    pub tol: f64,
    pub violations: Vec<Violation>,
}

impl CiVerdict {
    fn from_violations(method: Method, tol: f64, violations: Vec<Violation>) -> Self {
        Self {
            holds: violations.is_empty(),
            method,
            tol,
            violations,
        }
    }
}

fn check_partition_fits(part: &VariablePartition, m: usize, n: usize) -> Result<()> {
    if part.m != m || part.n != n {
        return Err(Error::InvalidPartition(format!(
            "partition is over {}+{} variables but the model has {m}+{n}",
            part.m, part.n
        )));
    }
    Ok(())
}

/// `Z_A ⊥ Z_B |_X Z_C` decided from the embeddings' component pairings.
pub fn check_ci_geometric(
    model: &SoftmaxModel,
    part: &VariablePartition,
    tol: f64,
) -> Result<CiVerdict> {
    check_ci_geometric_energy(&energy_matrix(model), part, tol)
}

pub fn check_ci_geometric_energy(
    energy: &EnergyMatrix,
    part: &VariablePartition,
    tol: f64,
) -> Result<CiVerdict> {
    check_partition_fits(part, energy.m, energy.n)?;
    let violations = energy
        .entries
        .iter()
        .filter(|e| part.is_forbidden(e.input, e.output) && e.normalized > tol)
        .map(|e| Violation {
            input: e.input,
            output: e.output,
            normalized: e.normalized,
            raw: e.raw,
        })
        .collect();
    Ok(CiVerdict::from_violations(
        Method::Geometric,
        tol,
        violations,
    ))
}

/// `Z_A ⊥ Z_B |_X Z_C` decided from the conditional table alone.
pub fn check_ci_oracle(
    cond: &ConditionalTable,
    part: &VariablePartition,
    tol: f64,
) -> Result<CiVerdict> {
    check_partition_fits(part, cond.x_shape().k(), cond.y_shape().k())?;
    let logp = log_table(cond)?;
    let dec = decompose(logp.as_embedding());
    Ok(oracle_verdict(
        &dec,
        &part.support_family(),
        part.m,
        logp.max_abs(),
        tol,
    ))
}

fn oracle_verdict(
    dec: &InteractionDecomposition,
    family: &[IndexSubset],
    m: usize,
    scale: f64,
    tol: f64,
) -> CiVerdict {
    let scale = normalizer(scale);
    let support = support_test_decomposed(dec, family, tol * scale);
    let violations = support
        .violations
        .into_iter()
        .map(|(merged, mag)| {
            let (input, output) = merged.split(m);
            Violation {
                input,
                output,
                normalized: mag / scale,
                raw: mag,
            }
        })
        .collect();
    CiVerdict::from_violations(Method::Oracle, tol, violations)
}

/// All partitions `(A, B, C)` of `m + n` variables with `A`, `B` nonempty,
/// listed once per unordered `{A, B}`.
pub fn enumerate_partitions(m: usize, n: usize) -> Vec<VariablePartition> {
    let k = m + n;
    let mut out = Vec::new();
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let (mut a, mut b, mut c) = (IndexSubset::EMPTY, IndexSubset::EMPTY, IndexSubset::EMPTY);
        let mut rest = code;
        for i in 0..k {
            let s = IndexSubset::singleton(i);
            match rest % 3 {
                0 => a = a.union(s),
                1 => b = b.union(s),
                _ => c = c.union(s),
            }
            rest /= 3;
        }
        if a.is_empty() || b.is_empty() || a.mask().trailing_zeros() > b.mask().trailing_zeros() {
            continue;
        }
        out.push(VariablePartition { a, b, c, m, n });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputCheck {
    pub x: Vec<usize>,
    pub holds: bool,
    /// `(H, max_y |⟨u(x), v_H(y)⟩| / ‖logits‖_∞)` per forbidden `H`.
    pub energies: Vec<(IndexSubset, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentNorm {
    pub subset: IndexSubset,
    pub raw: f64,
    /// Relative to the largest row norm of the full embedding.
    pub relative: f64,
    pub vanishes: bool,
}

/// Output-side conditional independence `Y_I ⊥ Y_J | Y_K` under `P_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCiReport {
    pub tol: f64,
    pub per_input: Vec<InputCheck>,
    /// Holds for every `x ∈ X0`.
    pub holds_on_subset: bool,
    pub span_rank: usize,
    pub dim: usize,
    pub condition_number: Option<f64>,
    /// Forbidden components of `v`; only reported when `u(X0)` spans `V`.
    pub component_norms: Vec<ComponentNorm>,
    /// `Some(_)` only when `u(X0)` spans `V`: whether every forbidden `v_H`
    /// vanishes, which makes the relation hold for all inputs.
    pub holds_for_all_inputs: Option<bool>,
}

pub fn check_output_ci(
    model: &SoftmaxModel,
    part: &SidePartition,
    inputs: &[Vec<usize>],
    tol: f64,
) -> Result<OutputCiReport> {
    if part.k != model.n() {
        return Err(Error::InvalidPartition(format!(
            "partition is over {} output factors but the model has {}",
            part.k,
            model.n()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "input subset X0 must be nonempty".into(),
        ));
    }
    let scale = normalizer(model.logits().max_abs());
    let dv = decompose(model.output());
    let forbidden: Vec<(IndexSubset, EmbeddingTable)> = part
        .forbidden()
        .into_iter()
        .map(|h| (h, reduce(dv.component(h).expect("complete lattice"), h)))
        .collect();

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut rows = Vec::with_capacity(inputs.len());
    for x in inputs {
        let ux = model.input().row_at(x)?;
        rows.push(ux.to_vec());
        let energies: Vec<(IndexSubset, f64)> = forbidden
            .iter()
            .map(|(h, vh)| {
                let e = vh.rows().map(|r| dot(ux, r).abs()).fold(0.0, f64::max);
                (*h, e / scale)
            })
            .collect();
        per_input.push(InputCheck {
            x: x.clone(),
            holds: energies.iter().all(|&(_, e)| e <= tol),
            energies,
        });
    }
    let holds_on_subset = per_input.iter().all(|c| c.holds);

    let dim = model.dim();
    let projector = span_projector(&rows, dim)?;
    let full_span = projector.is_full_rank();
    let (component_norms, holds_for_all_inputs, cond) = if full_span {
        let v_scale = normalizer(model.output().max_row_norm());
        let norms: Vec<ComponentNorm> = forbidden
            .iter()
            .map(|(h, vh)| {
                let raw = vh.max_row_norm();
                ComponentNorm {
                    subset: *h,
                    raw,
                    relative: raw / v_scale,
                    vanishes: raw / v_scale <= tol,
                }
            })
            .collect();
        let all = norms.iter().all(|c| c.vanishes);
        (norms, Some(all), Some(condition_number(&rows, dim)))
    } else {
        (Vec::new(), None, None)
    };
    Ok(OutputCiReport {
        tol,
        per_input,
        holds_on_subset,
        span_rank: projector.rank(),
        dim,
        condition_number: cond,
        component_norms,
        holds_for_all_inputs,
    })
}

/// Input-side "relative causal independence" of `X_I` and `X_J` given `X_K`
/// on the outputs `Y0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeCausalReport {
    pub tol: f64,
    /// `(H, max_{x, y, y'} |⟨u_H(x), v(y) − v(y')⟩| / ‖logits‖_∞)`.
    pub energies: Vec<(IndexSubset, f64)>,
    pub holds_on_subset: bool,
    pub difference_rank: usize,
    pub dim: usize,
    /// Forbidden components of `u`; only reported when the differences of
    /// `v(Y0)` span `V`.
    pub component_norms: Vec<ComponentNorm>,
    pub holds_for_all_outputs: Option<bool>,
}

pub fn check_relative_causal(
    model: &SoftmaxModel,
    part: &SidePartition,
    outputs: &[Vec<usize>],
    tol: f64,
) -> Result<RelativeCausalReport> {
    if part.k != model.m() {
        return Err(Error::InvalidPartition(format!(
            "partition is over {} input factors but the model has {}",
            part.k,
            model.m()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::InvalidArgument(
            "output subset Y0 must be nonempty".into(),
        ));
    }
    let scale = normalizer(model.logits().max_abs());
    let vrows = outputs
        .iter()
        .map(|y| model.output().row_at(y).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let du = decompose(model.input());
    let forbidden: Vec<(IndexSubset, EmbeddingTable)> = part
        .forbidden()
        .into_iter()
        .map(|h| (h, reduce(du.component(h).expect("complete lattice"), h)))
        .collect();

    let energies: Vec<(IndexSubset, f64)> = forbidden
        .iter()
        .map(|(h, uh)| {
            let spread = uh
                .rows()
                .map(|ux| {
                    let (lo, hi) =
                        vrows
                            .iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), vy| {
                                let s = dot(ux, vy);
                                (lo.min(s), hi.max(s))
                            });
                    hi - lo
                })
                .fold(0.0, f64::max);
            (*h, spread / scale)
        })
        .collect();
    let holds_on_subset = energies.iter().all(|&(_, e)| e <= tol);

    let projector = difference_span_projector(model.output(), outputs)?;
    let (component_norms, holds_for_all_outputs) = if projector.is_full_rank() {
        let u_scale = normalizer(model.input().max_row_norm());
        let norms: Vec<ComponentNorm> = forbidden
            .iter()
            .map(|(h, uh)| {
                let raw = uh.max_row_norm();
                ComponentNorm {
                    subset: *h,
                    raw,
                    relative: raw / u_scale,
                    vanishes: raw / u_scale <= tol,
                }
            })
            .collect();
        let all = norms.iter().all(|c| c.vanishes);
        (norms, Some(all))
    } else {
        (Vec::new(), None)
    };
    Ok(RelativeCausalReport {
        tol,
        energies,
        holds_on_subset,
        difference_rank: projector.rank(),
        dim: model.dim(),
        component_norms,
        holds_for_all_outputs,
    })
}

/// The paired factorization `P = h(x) ∏_i f_i(x_i, y_i)` for `m = n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub tol: f64,
    /// `max |⟨u, ṽ⟩|`, `ṽ` the components of `v` of order ≥ 2 (normalized).
    pub input_vs_higher_output: f64,
    /// `max |⟨ũ, v − v_∅⟩|`, `ũ` the components of `u` of order ≥ 2 (normalized).
    pub higher_input_vs_output: f64,
    /// `ε({i}, {j})`, normalized; row `i` is the input factor.
    pub first_order: Vec<Vec<f64>>,
    pub max_off_diagonal: f64,
    pub holds: bool,
}

pub fn check_paired_factorization(model: &SoftmaxModel, tol: f64) -> Result<PairedReport> {
    let (m, n) = (model.m(), model.n());
    if m != n {
        return Err(Error::InvalidArgument(format!(
            "paired factorization needs m = n, got {m} and {n}"
        )));
    }
    let scale = normalizer(model.logits().max_abs());
    let du = decompose(model.input());
    let dv = decompose(model.output());
    let higher_v = dv.partial_sum(|s| s.len() >= 2);
    let higher_u = du.partial_sum(|s| s.len() >= 2);
    let centered_v = dv.partial_sum(|s| !s.is_empty());

    let a = max_abs_pairing(model.input(), &higher_v) / scale;
    let b = max_abs_pairing(&higher_u, &centered_v) / scale;
    let energy = energy_from_decompositions(&du, &dv, model.logits().max_abs());
    let first_order: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| energy.normalized(IndexSubset::singleton(i), IndexSubset::singleton(j)))
                .collect()
        })
        .collect();
    let max_off_diagonal = first_order
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |(j, _)| *j != i)
                .map(|(_, e)| *e)
        })
        .fold(0.0, f64::max);
    Ok(PairedReport {
        tol,
        input_vs_higher_output: a,
        higher_input_vs_output: b,
        first_order,
        max_off_diagonal,
        holds: a <= tol && b <= tol && max_off_diagonal <= tol,
    })
}

/// The paired factorization decided from the table: `log P` must lie in the
/// hierarchical model of `{[m], {X_1, Y_1}, …, {X_m, Y_m}}`.
pub fn check_paired_oracle(cond: &ConditionalTable, tol: f64) -> Result<CiVerdict> {
    let (m, n) = (cond.x_shape().k(), cond.y_shape().k());
    if m != n {
        return Err(Error::InvalidArgument(format!(
            "paired factorization needs m = n, got {m} and {n}"
        )));
    }
    let mut family = vec![IndexSubset::full(m)];
    family.extend((0..m).map(|i| IndexSubset::from_indices([i, m + i])));
    let logp = log_table(cond)?;
    let dec = decompose(logp.as_embedding());
    Ok(oracle_verdict(&dec, &family, m, logp.max_abs(), tol))
}
