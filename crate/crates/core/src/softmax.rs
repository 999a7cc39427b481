//! Softmax models `P(y | x) ∝ exp⟨u(x), v(y)⟩` over factored input and
//! output sets, and the exact conditional tables they define.

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, inner_product_table, EmbeddingTable, ScalarTable};
use crate::error::{Error, Result};
use crate::factored::FactoredShape;

/// Logits with magnitude above this are rejected before exponentiation.
pub const LOGIT_LIMIT: f64 = 700.0;

/// Tolerance on row sums for tables built in memory.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Paired input and output embeddings sharing one space `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    input: EmbeddingTable,
    output: EmbeddingTable,
}

impl SoftmaxModel {
    pub fn new(input: EmbeddingTable, output: EmbeddingTable) -> Result<Self> {
        if input.dim() != output.dim() {
            return Err(Error::DimensionMismatch {
                expected: input.dim(),
                found: output.dim(),
            });
        }
        Ok(Self { input, output })
    }

    pub fn input(&self) -> &EmbeddingTable {
        &self.input
    }

    pub fn output(&self) -> &EmbeddingTable {
        &self.output
    }

    pub fn into_parts(self) -> (EmbeddingTable, EmbeddingTable) {
        (self.input, self.output)
    }

    pub fn dim(&self) -> usize {
        self.input.dim()
    }

    pub fn x_shape(&self) -> &FactoredShape {
        self.input.shape()
    }

    pub fn y_shape(&self) -> &FactoredShape {
        self.output.shape()
    }

    /// Number of input factors.
    pub fn m(&self) -> usize {
        self.x_shape().k()
    }

    /// Number of output factors.
    pub fn n(&self) -> usize {
        self.y_shape().k()
    }

    /// The logit tensor `⟨u(x), v(y)⟩` over `X × Y`.
    pub fn logits(&self) -> ScalarTable {
        inner_product_table(&self.input, &self.output).expect("dims checked at construction")
    }
}

/// `P(y | x)` stored densely, one probability vector per input tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    x_shape: FactoredShape,
    y_shape: FactoredShape,
    probs: Vec<f64>,
}

impl ConditionalTable {
    /// Validates positivity and row sums within [`ROW_SUM_TOL`].
    pub fn new(x_shape: FactoredShape, y_shape: FactoredShape, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(x_shape, y_shape, probs, ROW_SUM_TOL)
    }

    pub fn with_tolerance(
        x_shape: FactoredShape,
        y_shape: FactoredShape,
        probs: Vec<f64>,
        sum_tol: f64,
    ) -> Result<Self> {
        let expected = x_shape.size() * y_shape.size();
        if probs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: probs.len(),
            });
        }
        let ny = y_shape.size();
        for (row, chunk) in probs.chunks_exact(ny).enumerate() {
            if let Some(&value) = chunk.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::NonPositiveProbability { row, value });
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > sum_tol {
                return Err(Error::NotNormalized { row, sum });
            }
        }
        Ok(Self {
            x_shape,
            y_shape,
            probs,
        })
    }

    /// Normalizes each row of strictly positive weights.
    pub fn from_weights(
        x_shape: FactoredShape,
        y_shape: FactoredShape,
        mut weights: Vec<f64>,
    ) -> Result<Self> {
        let ny = y_shape.size();
        if weights.len() != x_shape.size() * ny {
            return Err(Error::DimensionMismatch {
                expected: x_shape.size() * ny,
                found: weights.len(),
            });
        }
        for (row, chunk) in weights.chunks_exact_mut(ny).enumerate() {
            if let Some(&value) = chunk.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::NonPositiveProbability { row, value });
            }
            let sum: f64 = chunk.iter().sum();
            chunk.iter_mut().for_each(|p| *p /= sum);
        }
        Self::new(x_shape, y_shape, weights)
    }

    /// Row-wise softmax of a logit table laid out over `X × Y`.
    pub fn from_logits(
        x_shape: FactoredShape,
        y_shape: FactoredShape,
        logits: &[f64],
    ) -> Result<Self> {
        let ny = y_shape.size();
        if logits.len() != x_shape.size() * ny {
            return Err(Error::DimensionMismatch {
                expected: x_shape.size() * ny,
                found: logits.len(),
            });
        }
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(ny) {
            if let Some(&value) = row.iter().find(|l| !l.is_finite() || l.abs() > LOGIT_LIMIT) {
                return Err(Error::LogitOverflow {
                    value,
                    limit: LOGIT_LIMIT,
                });
            }
            probs.extend(softmax_row(row));
        }
        Ok(Self {
            x_shape,
            y_shape,
            probs,
        })
    }

    pub fn x_shape(&self) -> &FactoredShape {
        &self.x_shape
    }

    pub fn y_shape(&self) -> &FactoredShape {
        &self.y_shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let ny = self.y_shape.size();
        &self.probs[x * ny..(x + 1) * ny]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.y_shape.size())
    }

    /// Reorders input rows: row `i` of the result is row `order[i]` of self.
    pub fn permute_inputs(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.x_shape.size() {
            return Err(Error::DimensionMismatch {
                expected: self.x_shape.size(),
                found: order.len(),
            });
        }
        let mut probs = Vec::with_capacity(self.probs.len());
        for &src in order {
            probs.extend_from_slice(self.row(src));
        }
        Ok(Self {
            x_shape: self.x_shape.clone(),
            y_shape: self.y_shape.clone(),
            probs,
        })
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log Σ_i exp(l_i)`, max-subtracted.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// The conditional table `P(Y | X)` defined by the model.
pub fn evaluate(model: &SoftmaxModel) -> Result<ConditionalTable> {
    let logits = model.logits();
    ConditionalTable::from_logits(
        model.x_shape().clone(),
        model.y_shape().clone(),
        logits.values(),
    )
}

/// `ψ(x) = log Σ_y exp⟨u(x), v(y)⟩`.
pub fn log_partition(model: &SoftmaxModel, x: &[usize]) -> Result<f64> {
    let ux = model.input().row_at(x)?;
    let logits: Vec<f64> = model.output().rows().map(|vy| dot(ux, vy)).collect();
    Ok(log_sum_exp(&logits))
}

/// Probabilities of the model at input `x`, renormalized over the output
/// rows listed in `outputs` only.
pub fn evaluate_restricted(
    model: &SoftmaxModel,
    x: &[usize],
    outputs: &[usize],
) -> Result<Vec<f64>> {
    let ux = model.input().row_at(x)?;
    let logits = outputs
        .iter()
        .map(|&y| {
            if y >= model.y_shape().size() {
                Err(Error::InvalidArgument(format!(
                    "output row {y} out of range"
                )))
            } else {
                Ok(dot(ux, model.output().row(y)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax_row(&logits))
}

/// Entrywise `log P(y | x)` over the merged shape `X_1 × … × X_m × Y_1 × … × Y_n`.
pub fn log_table(cond: &ConditionalTable) -> Result<ScalarTable> {
    let shape = cond.x_shape().concat(cond.y_shape())?;
    let ny = cond.y_shape().size();
    let mut data = Vec::with_capacity(cond.probs().len());
    for (i, &p) in cond.probs().iter().enumerate() {
        if p.is_nan() || p <= 0.0 {
            return Err(Error::NonPositiveProbability {
                row: i / ny,
                value: p,
            });
        }
        data.push(p.ln());
    }
    ScalarTable::new(shape, data)
}
