//! Synthesis of conditionals with prescribed interaction structure, the
//! structure-imposing projection of models, and a deterministic full-batch
//! gradient-descent fitter for softmax models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{difference_span_projector, dot, norm, EmbeddingTable};
use crate::error::{Error, Result};
use crate::factored::{all_subsets, FactoredShape, IndexSubset, VariablePartition};
use crate::interaction::{decompose, q_project, row_norms};
use crate::random::Gaussian;
use crate::softmax::{log_sum_exp, ConditionalTable, SoftmaxModel};

/// The generating family `S` of a hierarchical model over the merged
/// factors `X_1..X_m, Y_1..Y_n`: log-conditionals are drawn from
/// `⊕_{I ∈ S} E_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub allowed: Vec<IndexSubset>,
    pub seed: u64,
    pub scale: f64,
}

impl StructureSpec {
    pub fn new(allowed: Vec<IndexSubset>, seed: u64, scale: f64) -> Result<Self> {
        if allowed.is_empty() {
            return Err(Error::InvalidArgument(
                "allowed family must be nonempty".into(),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        Ok(Self {
            allowed,
            seed,
            scale,
        })
    }

    /// Every subset of `A∪C`, of `B∪C`, and of the input block, so that
    /// sampled conditionals satisfy `A ⊥ B |_X C`.
    pub fn ci_compatible(part: &VariablePartition, seed: u64, scale: f64) -> Result<Self> {
        Self::new(downward_closure(&part.support_family()), seed, scale)
    }

    /// The full power set of `[k]`: generic tables.
    pub fn saturated(k: usize, seed: u64, scale: f64) -> Result<Self> {
        Self::new(all_subsets(k), seed, scale)
    }
}

/// All subsets of members of `family`, in lattice order, without repeats.
pub fn downward_closure(family: &[IndexSubset]) -> Vec<IndexSubset> {
    let k = family
        .iter()
        .map(|s| 64 - s.mask().leading_zeros() as usize)
        .max()
        .unwrap_or(0);
    all_subsets(k)
        .into_iter()
        .filter(|s| family.iter().any(|f| s.is_subset_of(*f)))
        .collect()
}

/// Samples `f ∈ ⊕_{I ∈ allowed} E_I` over `X × Y` (Gaussian coefficients,
/// projected with `Q_I`) and normalizes `exp f` over `Y` for every `x`.
pub fn synth_conditional(
    x_shape: &FactoredShape,
    y_shape: &FactoredShape,
    spec: &StructureSpec,
) -> Result<ConditionalTable> {
    let merged = x_shape.concat(y_shape)?;
    for &s in &spec.allowed {
        merged.check_subset(s)?;
    }
    let mut gaussian = Gaussian::seeded(spec.seed);
    let mut f = EmbeddingTable::zeros(merged.clone(), 1);
    for &s in &spec.allowed {
        let draw = gaussian.table(merged.clone(), 1, spec.scale);
        f.add_scaled_in_place(&q_project(&draw, s)?, 1.0);
    }
    ConditionalTable::from_logits(x_shape.clone(), y_shape.clone(), f.data())
}

/// Input conditions of the emergence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmergenceCondition {
    TokenAligned,
    Permuted,
    Unfactored,
}

impl EmergenceCondition {
    pub const ALL: [Self; 3] = [Self::TokenAligned, Self::Permuted, Self::Unfactored];
}

impl fmt::Display for EmergenceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TokenAligned => "token-aligned",
            Self::Permuted => "permuted",
            Self::Unfactored => "unfactored",
        })
    }
}

impl FromStr for EmergenceCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token-aligned" => Ok(Self::TokenAligned),
            "permuted" => Ok(Self::Permuted),
            "unfactored" => Ok(Self::Unfactored),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition '{other}'"
            ))),
        }
    }
}

/// A target `P(z_3 | z_1, z_2)` for the emergence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceTarget {
    pub condition: EmergenceCondition,
    /// The table as presented to the fitter.
    pub table: ConditionalTable,
    /// The table in latent `(z_1, z_2)` coordinates.
    pub latent: ConditionalTable,
    /// Row `i` of `table` is row `permutation[i]` of `latent`.
    pub permutation: Option<Vec<usize>>,
}

impl EmergenceTarget {
    /// For each latent input row, its row in the presented table.
    pub fn latent_rows(&self) -> Option<Vec<usize>> {
        self.permutation.as_ref().map(|perm| invert(perm))
    }
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Builds `P(z_3 | z_1, z_2)` over `Z = {0..z_card}`: with `z_1 ⊥ z_2 |_X z_3`
/// structure (token-aligned), the same table with its input tuples shuffled
/// by one fixed random permutation (permuted), or a generic table
/// (unfactored).
pub fn synth_emergence_target(
    z_card: usize,
    condition: EmergenceCondition,
    seed: u64,
) -> Result<EmergenceTarget> {
    if z_card < 2 {
        return Err(Error::InvalidArgument("z_card must be at least 2".into()));
    }
    let x_shape = FactoredShape::new(vec![z_card, z_card])?;
    let y_shape = FactoredShape::new(vec![z_card])?;
    let spec = match condition {
        EmergenceCondition::Unfactored => StructureSpec::saturated(3, seed, 1.0)?,
        _ => {
            let part = VariablePartition::new(
                IndexSubset::singleton(0),
                IndexSubset::singleton(1),
                IndexSubset::singleton(2),
                2,
                1,
            )?;
            StructureSpec::ci_compatible(&part, seed, 1.0)?
        }
    };
    let latent = synth_conditional(&x_shape, &y_shape, &spec)?;
    let (table, permutation) = if condition == EmergenceCondition::Permuted {
        // separate stream so the permutation does not disturb the table draw
        let perm = Gaussian::seeded(seed ^ 0x5eed_5eed_5eed_5eed).permutation(x_shape.size());
        (latent.permute_inputs(&perm)?, Some(perm))
    } else {
        (latent.clone(), None)
    };
    Ok(EmergenceTarget {
        condition,
        table,
        latent,
        permutation,
    })
}

/// Which side's components [`project_structure`] removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroingPolicy {
    /// Component zeroing: remove every `u_I` and every `v_J` named by a
    /// forbidden pair.
    #[default]
    Both,
    /// Remove only the named `u_I`.
    InputOnly,
    /// Remove only the named `v_J`.
    OutputOnly,
}

/// Removes interaction components so that every listed pairing
/// `⟨u_I, v_J⟩` vanishes.
pub fn project_structure(
    model: &SoftmaxModel,
    forbidden: &[(IndexSubset, IndexSubset)],
    policy: ZeroingPolicy,
) -> SoftmaxModel {
    if forbidden.is_empty() {
        return model.clone();
    }
    let drop_inputs: Vec<IndexSubset> = match policy {
        ZeroingPolicy::OutputOnly => Vec::new(),
        _ => forbidden.iter().map(|p| p.0).collect(),
    };
    let drop_outputs: Vec<IndexSubset> = match policy {
        ZeroingPolicy::InputOnly => Vec::new(),
        _ => forbidden.iter().map(|p| p.1).collect(),
    };
    let input = decompose(model.input()).partial_sum(|s| !drop_inputs.contains(&s));
    let output = decompose(model.output()).partial_sum(|s| !drop_outputs.contains(&s));
    SoftmaxModel::new(input, output).expect("dimensions unchanged")
}

/// A model with i.i.d. `N(0, scale²)` embeddings.
pub fn random_model(
    x_shape: &FactoredShape,
    y_shape: &FactoredShape,
    dim: usize,
    seed: u64,
    scale: f64,
) -> SoftmaxModel {
    let mut g = Gaussian::seeded(seed);
    let u = g.table(x_shape.clone(), dim, scale);
    let v = g.table(y_shape.clone(), dim, scale);
    SoftmaxModel::new(u, v).expect("same dim")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub kl_tol: f64,
    pub record_every: usize,
    pub seed: u64,
    pub dim: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_iters: 50_000,
            kl_tol: 1e-10,
            record_every: 500,
            seed: 0,
            dim: 16,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.max_iters == 0 || self.record_every == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "max_iters, record_every and dim must be positive".into(),
            ));
        }
        if self.kl_tol.is_nan() || self.kl_tol < 0.0 {
            return Err(Error::InvalidArgument("kl_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Share of one interaction component in the projected input embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentShare {
    pub subset: IndexSubset,
    /// Mean over inputs of `‖(Pu)_I(x)‖ / ‖Pu(x)‖`.
    pub share: f64,
    /// Mean over inputs of `‖Pu(x)‖ / ‖(Pu)_I(x)‖`, skipping vanishing
    /// components; `None` when the component vanishes everywhere.
    pub inverse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub kl: f64,
    pub shares: Vec<ComponentShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    pub iterations: usize,
    pub final_kl: f64,
    pub converged: bool,
    /// Projected input embeddings (latent order) at the first and last record.
    pub first_projected: Option<EmbeddingTable>,
    pub last_projected: Option<EmbeddingTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: SoftmaxModel,
    pub trace: TrainingTrace,
}

/// `(1/|X|) Σ_x KL(P*(·|x) ‖ P_model(·|x))`.
pub fn mean_kl(target: &ConditionalTable, model: &SoftmaxModel) -> Result<f64> {
    check_fit_shapes(target, model)?;
    let mut logits = vec![0.0; target.y_shape().size()];
    Ok(kl_and_probs(
        target,
        model.input(),
        model.output(),
        &mut logits,
        None,
    ))
}

/// Closed-form gradients of [`mean_kl`] with respect to every entry of
/// `u` and `v` (row-major, same layout as the tables).
pub fn kl_gradients(
    target: &ConditionalTable,
    model: &SoftmaxModel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_fit_shapes(target, model)?;
    let nx = target.x_shape().size();
    let ny = target.y_shape().size();
    let mut probs = vec![0.0; nx * ny];
    let mut logits = vec![0.0; ny];
    kl_and_probs(
        target,
        model.input(),
        model.output(),
        &mut logits,
        Some(&mut probs),
    );
    let (mut gu, mut gv) = raw_gradients(target, model.input(), model.output(), &probs);
    let inv = 1.0 / nx as f64;
    gu.iter_mut().for_each(|g| *g *= inv);
    gv.iter_mut().for_each(|g| *g *= inv);
    Ok((gu, gv))
}

fn check_fit_shapes(target: &ConditionalTable, model: &SoftmaxModel) -> Result<()> {
    if target.x_shape() != model.x_shape() || target.y_shape() != model.y_shape() {
        return Err(Error::InvalidShape("target and model shapes differ".into()));
    }
    Ok(())
}

/// Mean KL; optionally writes the model probabilities row-major.
fn kl_and_probs(
    target: &ConditionalTable,
    u: &EmbeddingTable,
    v: &EmbeddingTable,
    logits: &mut [f64],
    mut probs: Option<&mut [f64]>,
) -> f64 {
    let ny = v.len();
    let mut total = 0.0;
    for (x, ux) in u.rows().enumerate() {
        for (l, vy) in logits.iter_mut().zip(v.rows()) {
            *l = dot(ux, vy);
        }
        let lse = log_sum_exp(logits);
        let row = target.row(x);
        for y in 0..ny {
            let logq = logits[y] - lse;
            total += row[y] * (row[y].ln() - logq);
            if let Some(p) = probs.as_deref_mut() {
                p[x * ny + y] = logq.exp();
            }
        }
    }
    total / u.len() as f64
}

/// `Σ_y (P − P*)(y|x) v(y)` and `Σ_x (P − P*)(y|x) u(x)` (no `1/|X|`).
fn raw_gradients(
    target: &ConditionalTable,
    u: &EmbeddingTable,
    v: &EmbeddingTable,
    probs: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let dim = u.dim();
    let ny = v.len();
    let mut gu = vec![0.0; u.data().len()];
    let mut gv = vec![0.0; v.data().len()];
    for (x, ux) in u.rows().enumerate() {
        let row = target.row(x);
        let gux = &mut gu[x * dim..(x + 1) * dim];
        for (y, vy) in v.rows().enumerate() {
            let r = probs[x * ny + y] - row[y];
            let gvy = &mut gv[y * dim..(y + 1) * dim];
            for d in 0..dim {
                gux[d] += r * vy[d];
                gvy[d] += r * ux[d];
            }
        }
    }
    (gu, gv)
}

/// Shares of each interaction component of `u` after projecting onto
/// `Span(v(y) − v(y'))`. Returns the shares and the projected table.
pub fn component_shares(
    u: &EmbeddingTable,
    v: &EmbeddingTable,
) -> Result<(Vec<ComponentShare>, EmbeddingTable)> {
    let outputs: Vec<Vec<usize>> = v.shape().tuples().collect();
    let projector = difference_span_projector(v, &outputs)?;
    let projected = u.project_rows(&projector)?;
    let totals = row_norms(&projected);
    let dec = decompose(&projected);
    let shares = dec
        .components()
        .iter()
        .map(|(s, c)| {
            let norms = row_norms(c);
            let share = norms
                .iter()
                .zip(&totals)
                .map(|(n, t)| if *t > 0.0 { n / t } else { 0.0 })
                .sum::<f64>()
                / norms.len() as f64;
            let inverse_terms: Vec<f64> = norms
                .iter()
                .zip(&totals)
                .filter(|(n, _)| **n > 0.0)
                .map(|(n, t)| t / n)
                .collect();
            let inverse = if inverse_terms.is_empty() {
                None
            } else {
                Some(inverse_terms.iter().sum::<f64>() / inverse_terms.len() as f64)
            };
            ComponentShare {
                subset: *s,
                share,
                inverse,
            }
        })
        .collect();
    Ok((shares, projected))
}

/// Fits a softmax model to `target` by full-batch gradient descent.
pub fn fit(target: &ConditionalTable, cfg: &FitConfig) -> Result<FitOutcome> {
    fit_with_latent(target, cfg, None)
}

/// Like [`fit`], but interaction shares are computed with input rows
/// reordered into latent coordinates: latent row `l` is row
/// `latent_rows[l]` of the fitted input table.
///
/// Each step moves `u(x)` by `−lr · Σ_y (P − P*)(y|x) v(y)` and `v(y)` by
/// `−lr · (1/|X|) Σ_x (P − P*)(y|x) u(x)`; that is, the exact gradient of the
/// mean KL with the input block rescaled by `|X|`.
pub fn fit_with_latent(
    target: &ConditionalTable,
    cfg: &FitConfig,
    latent_rows: Option<&[usize]>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let nx = target.x_shape().size();
    let ny = target.y_shape().size();
    if let Some(rows) = latent_rows {
        if rows.len() != nx {
            return Err(Error::DimensionMismatch {
                expected: nx,
                found: rows.len(),
            });
        }
    }
    let mut gaussian = Gaussian::seeded(cfg.seed);
    let init = 0.1 / (cfg.dim as f64).sqrt();
    let mut u = gaussian.table(target.x_shape().clone(), cfg.dim, init);
    let mut v = gaussian.table(target.y_shape().clone(), cfg.dim, init);

    let mut trace = TrainingTrace {
        records: Vec::new(),
        iterations: 0,
        final_kl: f64::NAN,
        converged: false,
        first_projected: None,
        last_projected: None,
    };
    let mut probs = vec![0.0; nx * ny];
    let mut logits = vec![0.0; ny];
    let v_step = cfg.learning_rate / nx as f64;

    let mut iteration = 0;
    loop {
        let kl = kl_and_probs(target, &u, &v, &mut logits, Some(&mut probs));
        let finite = kl.is_finite() && u.data().iter().chain(v.data()).all(|x| x.is_finite());
        if !finite {
            trace.iterations = iteration;
            trace.final_kl = kl;
            return Err(Error::Divergence {
                iteration,
                kl,
                trace: Box::new(trace),
            });
        }
        let done = kl <= cfg.kl_tol || iteration >= cfg.max_iters;
        if iteration % cfg.record_every == 0 || done {
            let latent = match latent_rows {
                Some(rows) => u.permute_rows(rows)?,
                None => u.clone(),
            };
            let (shares, projected) = component_shares(&latent, &v)?;
            trace.records.push(TraceRecord {
                iteration,
                kl,
                shares,
            });
            if trace.first_projected.is_none() {
                trace.first_projected = Some(projected.clone());
            }
            trace.last_projected = Some(projected);
        }
        if done {
            trace.iterations = iteration;
            trace.final_kl = kl;
            trace.converged = kl <= cfg.kl_tol;
            break;
        }
        let (gu, gv) = raw_gradients(target, &u, &v, &probs);
        for (p, g) in u.data_mut().iter_mut().zip(&gu) {
            *p -= cfg.learning_rate * g;
        }
        for (p, g) in v.data_mut().iter_mut().zip(&gv) {
            *p -= v_step * g;
        }
        iteration += 1;
    }
    Ok(FitOutcome {
        model: SoftmaxModel::new(u, v)?,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Largest `|fd − cf| / max(|fd|, |cf|)` over probes where either side
    /// exceeds [`GradientCheck::REL_FLOOR`].
    pub max_rel: f64,
    pub max_abs: f64,
    pub probes: usize,
}

impl GradientCheck {
    pub const REL_FLOOR: f64 = 1e-8;
}

/// Compares [`kl_gradients`] with central differences of [`mean_kl`] at
/// `probes` randomly chosen coordinates.
pub fn gradient_check(
    target: &ConditionalTable,
    model: &SoftmaxModel,
    epsilon: f64,
    probes: usize,
    seed: u64,
) -> Result<GradientCheck> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (gu, gv) = kl_gradients(target, model)?;
    let nu = gu.len();
    let total = nu + gv.len();
    let mut rng = Gaussian::seeded(seed);
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    for _ in 0..probes {
        let coord = rng.index(total);
        let perturbed = |delta: f64| -> Result<f64> {
            let (mut u, mut v) = model.clone().into_parts();
            if coord < nu {
                u.data_mut()[coord] += delta;
            } else {
                v.data_mut()[coord - nu] += delta;
            }
            mean_kl(target, &SoftmaxModel::new(u, v)?)
        };
        let fd = (perturbed(epsilon)? - perturbed(-epsilon)?) / (2.0 * epsilon);
        let cf = if coord < nu {
            gu[coord]
        } else {
            gv[coord - nu]
        };
        let abs = (fd - cf).abs();
        max_abs = max_abs.max(abs);
        let denom = fd.abs().max(cf.abs());
        if denom > GradientCheck::REL_FLOOR {
            max_rel = max_rel.max(abs / denom);
        }
    }
    Ok(GradientCheck {
        max_rel,
        max_abs,
        probes,
    })
}

/// Euclidean norms of rows, exposed for reports.
pub fn table_row_norms(table: &EmbeddingTable) -> Vec<f64> {
    table.rows().map(norm).collect()
}
