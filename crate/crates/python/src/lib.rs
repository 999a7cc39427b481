//! Python bindings. Tables cross the boundary as nested lists, subsets as
//! tuples of 1-based factor indices, and structured results as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use interdec::geometry;
use interdec::independence::{self, check_ci_geometric, check_ci_oracle};
use interdec::synth::{self, EmergenceCondition, FitConfig, StructureSpec, ZeroingPolicy};
use interdec::{FactoredShape, IndexSubset, VariablePartition};

fn err(e: interdec::Error) -> PyErr {
    match e {
        interdec::Error::Divergence { .. } | interdec::Error::LogitOverflow { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn shape(cards: Vec<usize>) -> PyResult<FactoredShape> {
    FactoredShape::new(cards).map_err(err)
}

fn parse_subset(indices: Vec<usize>, k: usize) -> PyResult<IndexSubset> {
    IndexSubset::from_one_based(&indices, k).map_err(err)
}

fn parse_partition(text: &str, m: usize, n: usize) -> PyResult<VariablePartition> {
    VariablePartition::parse(text, m, n, &Default::default()).map_err(err)
}

/// A vector for every tuple of a factored set.
#[pyclass(
    name = "EmbeddingTable",
    module = "interdec",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyEmbeddingTable(interdec::EmbeddingTable);

#[pymethods]
impl PyEmbeddingTable {
    /// `rows` lists one vector per tuple in lexicographic order.
    #[new]
    fn new(cardinalities: Vec<usize>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        interdec::EmbeddingTable::from_rows(shape(cardinalities)?, &rows)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn cardinalities(&self) -> Vec<usize> {
        self.0.shape().cardinalities().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    /// Maps each subset (a tuple of 1-based factors) to its component.
    fn decompose<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for (s, c) in interdec::decompose(&self.0).components() {
            out.set_item(
                pyo3::types::PyTuple::new(py, s.one_based())?,
                Self(c.clone()),
            )?;
        }
        Ok(out)
    }

    fn q_project(&self, subset: Vec<usize>) -> PyResult<Self> {
        let s = parse_subset(subset, self.0.shape().k())?;
        interdec::q_project(&self.0, s).map(Self).map_err(err)
    }

    fn pi_average(&self, subset: Vec<usize>) -> PyResult<Self> {
        let s = parse_subset(subset, self.0.shape().k())?;
        interdec::pi_average(&self.0, s).map(Self).map_err(err)
    }

    fn max_row_norm(&self) -> f64 {
        self.0.max_row_norm()
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingTable(cardinalities={:?}, dim={})",
            self.0.shape().cardinalities(),
            self.0.dim()
        )
    }
}

/// `P(y | x)` as a table with one row per input tuple.
#[pyclass(
    name = "ConditionalTable",
    module = "interdec",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyConditionalTable(interdec::ConditionalTable);

#[pymethods]
impl PyConditionalTable {
    #[new]
    fn new(
        x_cardinalities: Vec<usize>,
        y_cardinalities: Vec<usize>,
        probs: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        interdec::ConditionalTable::new(
            shape(x_cardinalities)?,
            shape(y_cardinalities)?,
            probs.concat(),
        )
        .map(Self)
        .map_err(err)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().map(<[f64]>::to_vec).collect()
    }

    /// Oracle verdict for a partition such as `"A=x1;B=x2;C=y1"`.
    #[pyo3(signature = (partition, tol = 1e-9))]
    fn check_ci<'py>(
        &self,
        py: Python<'py>,
        partition: &str,
        tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let part = parse_partition(partition, self.0.x_shape().k(), self.0.y_shape().k())?;
        to_py(py, &check_ci_oracle(&self.0, &part, tol).map_err(err)?)
    }
}

/// `P(y | x) ∝ exp⟨u(x), v(y)⟩`.
#[pyclass(
    name = "SoftmaxModel",
    module = "interdec",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PySoftmaxModel(interdec::SoftmaxModel);

#[pymethods]
impl PySoftmaxModel {
    #[new]
    fn new(input: &PyEmbeddingTable, output: &PyEmbeddingTable) -> PyResult<Self> {
        interdec::SoftmaxModel::new(input.0.clone(), output.0.clone())
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn input(&self) -> PyEmbeddingTable {
        PyEmbeddingTable(self.0.input().clone())
    }

    #[getter]
    fn output(&self) -> PyEmbeddingTable {
        PyEmbeddingTable(self.0.output().clone())
    }

    fn evaluate(&self) -> PyResult<PyConditionalTable> {
        interdec::evaluate(&self.0)
            .map(PyConditionalTable)
            .map_err(err)
    }

    /// Entries `{input, output, raw, normalized}` of the energy matrix.
    fn energy_matrix<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &independence::energy_matrix(&self.0).entries)
    }

    /// The same matrix read off the logit tensor.
    fn energy_matrix_via_logits<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &independence::energy_matrix_via_logits(&self.0).entries)
    }

    /// Geometric verdict from the component pairings.
    #[pyo3(signature = (partition, tol = 1e-9))]
    fn check_ci<'py>(
        &self,
        py: Python<'py>,
        partition: &str,
        tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let part = parse_partition(partition, self.0.m(), self.0.n())?;
        to_py(py, &check_ci_geometric(&self.0, &part, tol).map_err(err)?)
    }

    /// Removes every component named by a pair forbidden by `partition`.
    fn project_structure(&self, partition: &str) -> PyResult<Self> {
        let part = parse_partition(partition, self.0.m(), self.0.n())?;
        Ok(Self(synth::project_structure(
            &self.0,
            &part.forbidden_pairs(),
            ZeroingPolicy::Both,
        )))
    }
}

/// Samples a conditional whose log lies in the span of the listed
/// interaction spaces. With `partition`, the family makes that relation
/// hold; with neither argument, the table is generic.
#[pyfunction]
#[pyo3(signature = (x_cardinalities, y_cardinalities, partition = None, allowed = None, seed = 0, scale = 1.0))]
fn synth_conditional(
    x_cardinalities: Vec<usize>,
    y_cardinalities: Vec<usize>,
    partition: Option<&str>,
    allowed: Option<Vec<Vec<usize>>>,
    seed: u64,
    scale: f64,
) -> PyResult<PyConditionalTable> {
    let x = shape(x_cardinalities)?;
    let y = shape(y_cardinalities)?;
    let k = x.k() + y.k();
    let spec = match (partition, allowed) {
        (Some(p), _) => {
            StructureSpec::ci_compatible(&parse_partition(p, x.k(), y.k())?, seed, scale)
        }
        (None, Some(family)) => {
            let family = family
                .into_iter()
                .map(|s| parse_subset(s, k))
                .collect::<PyResult<Vec<_>>>()?;
            StructureSpec::new(family, seed, scale)
        }
        (None, None) => StructureSpec::saturated(k, seed, scale),
    }
    .map_err(err)?;
    synth::synth_conditional(&x, &y, &spec)
        .map(PyConditionalTable)
        .map_err(err)
}

/// A model with i.i.d. Gaussian embeddings.
#[pyfunction]
#[pyo3(signature = (x_cardinalities, y_cardinalities, dim, seed = 0, scale = 1.0))]
fn random_model(
    x_cardinalities: Vec<usize>,
    y_cardinalities: Vec<usize>,
    dim: usize,
    seed: u64,
    scale: f64,
) -> PyResult<PySoftmaxModel> {
    if dim == 0 {
        return Err(PyValueError::new_err("dim must be positive"));
    }
    Ok(PySoftmaxModel(synth::random_model(
        &shape(x_cardinalities)?,
        &shape(y_cardinalities)?,
        dim,
        seed,
        scale,
    )))
}

/// Full-batch gradient descent on the mean KL. Returns the model and the
/// trace as a dict.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (target, dim = 16, learning_rate = 0.5, max_iters = 50_000, kl_tol = 1e-10, record_every = 500, seed = 0))]
fn fit<'py>(
    py: Python<'py>,
    target: &PyConditionalTable,
    dim: usize,
    learning_rate: f64,
    max_iters: usize,
    kl_tol: f64,
    record_every: usize,
    seed: u64,
) -> PyResult<(PySoftmaxModel, Bound<'py, PyAny>)> {
    let cfg = FitConfig {
        learning_rate,
        max_iters,
        kl_tol,
        record_every,
        seed,
        dim,
    };
    let out = synth::fit(&target.0, &cfg).map_err(err)?;
    let trace = to_py(py, &out.trace.records)?;
    Ok((PySoftmaxModel(out.model), trace))
}

/// `P(z3 | z1, z2)` for the emergence experiment; `condition` is
/// `token-aligned`, `permuted` or `unfactored`.
#[pyfunction]
#[pyo3(signature = (z_card, condition, seed = 0))]
fn emergence_target(z_card: usize, condition: &str, seed: u64) -> PyResult<PyConditionalTable> {
    let condition: EmergenceCondition = condition.parse().map_err(err)?;
    synth::synth_emergence_target(z_card, condition, seed)
        .map(|t| PyConditionalTable(t.table))
        .map_err(err)
}

/// `¼‖w(a₁b₁) − w(a₂b₁) − w(a₁b₂) + w(a₂b₂)‖` for four 0-based tuples.
#[pyfunction]
fn analogy_residual(table: &PyEmbeddingTable, cells: [Vec<usize>; 4]) -> PyResult<f64> {
    geometry::analogy_residual(&table.0, &cells).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (table, tol = 1e-9))]
fn polytope_report<'py>(
    py: Python<'py>,
    table: &PyEmbeddingTable,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &geometry::polytope_report(&table.0, tol).map_err(err)?)
}

#[pyfunction]
fn interaction_norm_grid<'py>(
    py: Python<'py>,
    table: &PyEmbeddingTable,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &geometry::interaction_norm_grid(&table.0).map_err(err)?)
}

#[pymodule]
#[pyo3(name = "interdec")]
fn interdec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyConditionalTable>()?;
    m.add_class::<PySoftmaxModel>()?;
    m.add_function(wrap_pyfunction!(synth_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(random_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(emergence_target, m)?)?;
    m.add_function(wrap_pyfunction!(analogy_residual, m)?)?;
    m.add_function(wrap_pyfunction!(polytope_report, m)?)?;
    m.add_function(wrap_pyfunction!(interaction_norm_grid, m)?)?;
    Ok(())
}
