//! JSON file formats for embeddings, models, conditional distributions and
//! reports.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::factored::FactoredShape;
use crate::softmax::{ConditionalTable, SoftmaxModel};

pub const FORMAT_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

/// Row sums further than this from 1 are renormalized with a warning.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Row sums further than this from 1 are rejected.
pub const REJECT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl FactorSpec {
    /// Factors named `{prefix}1..{prefix}k` without labels.
    pub fn default_names(shape: &FactoredShape, prefix: &str) -> Vec<Self> {
        shape
            .cardinalities()
            .iter()
            .enumerate()
            .map(|(i, &cardinality)| Self {
                name: format!("{prefix}{}", i + 1),
                cardinality,
                labels: None,
            })
            .collect()
    }
}

fn shape_of(factors: &[FactorSpec]) -> Result<FactoredShape> {
    for f in factors {
        if let Some(labels) = &f.labels {
            if labels.len() != f.cardinality {
                return Err(Error::Format(format!(
                    "factor '{}' has {} labels but cardinality {}",
                    f.name,
                    labels.len(),
                    f.cardinality
                )));
            }
        }
    }
    FactoredShape::new(factors.iter().map(|f| f.cardinality).collect())
}

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {found}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// An embedding table with named factors; rows in lexicographic tuple
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub format_version: u32,
    pub factors: Vec<FactorSpec>,
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingFile {
    pub fn from_table(table: &EmbeddingTable, factors: Vec<FactorSpec>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            factors,
            dim: table.dim(),
            rows: table.to_rows(),
        }
    }

    pub fn to_table(&self) -> Result<EmbeddingTable> {
        check_version(self.format_version)?;
        let shape = shape_of(&self.factors)?;
        if self.rows.len() != shape.size() {
            return Err(Error::Format(format!(
                "expected {} rows for cardinalities {:?}, found {}",
                shape.size(),
                shape.cardinalities(),
                self.rows.len()
            )));
        }
        if let Some((i, r)) = self
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != self.dim)
        {
            return Err(Error::Format(format!(
                "row {i} has {} entries, expected dim {}",
                r.len(),
                self.dim
            )));
        }
        EmbeddingTable::new(shape, self.dim, self.rows.concat())
    }

    /// Parses a cell as comma-free `a:b:c`, where each coordinate is a
    /// 0-based value or one of the factor's labels.
    pub fn parse_tuple(&self, text: &str) -> Result<Vec<usize>> {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        if parts.len() != self.factors.len() {
            return Err(Error::InvalidArgument(format!(
                "tuple '{text}' has {} coordinates, expected {}",
                parts.len(),
                self.factors.len()
            )));
        }
        parts
            .iter()
            .zip(&self.factors)
            .map(|(p, f)| {
                if let Some(pos) = f
                    .labels
                    .as_ref()
                    .and_then(|l| l.iter().position(|x| x == p))
                {
                    return Ok(pos);
                }
                match p.parse::<usize>() {
                    Ok(v) if v < f.cardinality => Ok(v),
                    _ => Err(Error::InvalidArgument(format!(
                        "'{p}' is not a value of factor '{}'",
                        f.name
                    ))),
                }
            })
            .collect()
    }
}

/// A softmax model: input and output embedding tables of equal dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub input: EmbeddingFile,
    pub output: EmbeddingFile,
}

impl ModelFile {
    pub fn from_model(
        model: &SoftmaxModel,
        x_factors: Vec<FactorSpec>,
        y_factors: Vec<FactorSpec>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            input: EmbeddingFile::from_table(model.input(), x_factors),
            output: EmbeddingFile::from_table(model.output(), y_factors),
        }
    }

    pub fn with_default_names(model: &SoftmaxModel) -> Self {
        Self::from_model(
            model,
            FactorSpec::default_names(model.x_shape(), "x"),
            FactorSpec::default_names(model.y_shape(), "y"),
        )
    }

    pub fn to_model(&self) -> Result<SoftmaxModel> {
        check_version(self.format_version)?;
        SoftmaxModel::new(self.input.to_table()?, self.output.to_table()?)
    }

    pub fn aliases(&self) -> HashMap<String, usize> {
        aliases(&self.input.factors, &self.output.factors)
    }
}

/// A conditional table `P(y | x)`, one row per input tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub format_version: u32,
    pub x_factors: Vec<FactorSpec>,
    pub y_factors: Vec<FactorSpec>,
    pub probs: Vec<Vec<f64>>,
}

/// A loaded distribution and the largest row-sum deviation that was
/// corrected on load.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDistribution {
    pub table: ConditionalTable,
    pub renormalized: Option<f64>,
}

impl DistributionFile {
    pub fn from_table(
        table: &ConditionalTable,
        x_factors: Vec<FactorSpec>,
        y_factors: Vec<FactorSpec>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            x_factors,
            y_factors,
            probs: table.rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn with_default_names(table: &ConditionalTable) -> Self {
        Self::from_table(
            table,
            FactorSpec::default_names(table.x_shape(), "x"),
            FactorSpec::default_names(table.y_shape(), "y"),
        )
    }

    pub fn to_table(&self) -> Result<LoadedDistribution> {
        check_version(self.format_version)?;
        let x_shape = shape_of(&self.x_factors)?;
        let y_shape = shape_of(&self.y_factors)?;
        if self.probs.len() != x_shape.size() {
            return Err(Error::Format(format!(
                "expected {} rows, found {}",
                x_shape.size(),
                self.probs.len()
            )));
        }
        let mut worst = 0.0f64;
        for (i, row) in self.probs.iter().enumerate() {
            if row.len() != y_shape.size() {
                return Err(Error::Format(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    y_shape.size()
                )));
            }
            if let Some(&value) = row.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::NonPositiveProbability { row: i, value });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > REJECT_TOL {
                return Err(Error::NotNormalized { row: i, sum });
            }
            worst = worst.max((sum - 1.0).abs());
        }
        let flat = self.probs.concat();
        if worst > RENORMALIZE_TOL {
            log::warn!("row sums deviate from 1 by up to {worst:e}; renormalizing");
            Ok(LoadedDistribution {
                table: ConditionalTable::from_weights(x_shape, y_shape, flat)?,
                renormalized: Some(worst),
            })
        } else {
            Ok(LoadedDistribution {
                table: ConditionalTable::with_tolerance(x_shape, y_shape, flat, RENORMALIZE_TOL)?,
                renormalized: None,
            })
        }
    }

    pub fn aliases(&self) -> HashMap<String, usize> {
        aliases(&self.x_factors, &self.y_factors)
    }
}

/// Factor names of both sides mapped to 0-based merged indices.
fn aliases(x: &[FactorSpec], y: &[FactorSpec]) -> HashMap<String, usize> {
    x.iter()
        .chain(y)
        .enumerate()
        .map(|(i, f)| (f.name.clone(), i))
        .collect()
}

/// The envelope of every report: what was run, with which settings, and
/// what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub results: serde_json::Value,
}

impl ReportFile {
    pub fn new<C: Serialize, R: Serialize>(command: &str, config: &C, results: &R) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            results: serde_json::to_value(results)?,
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty-printed with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}
