use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use interdec::geometry::{analogy_residual, interaction_norm_grid, pca, polytope_report, Pca};
use interdec::independence::{
    check_ci_geometric, check_ci_oracle, energy_matrix, energy_matrix_via_logits, CiVerdict,
    EnergyMatrix,
};
use interdec::interaction::{component_dimension, q_project};
use interdec::io::{
    read_json, DistributionFile, EmbeddingFile, FactorSpec, ModelFile, ReportFile, SCHEMA_VERSION,
};
use interdec::synth::{
    fit_with_latent, project_structure, random_model, synth_conditional, synth_emergence_target,
    ComponentShare, EmergenceCondition, FitConfig, StructureSpec, TraceRecord, TrainingTrace,
    ZeroingPolicy,
};
use interdec::{
    evaluate, ConditionalTable, EmbeddingTable, FactoredShape, IndexSubset, SoftmaxModel,
    VariablePartition,
};

use crate::output::{emit_report, num, subset_key, write_file, Table};
use crate::{
    CheckCiArgs, ConditionArg, DecomposeArgs, EmergenceArgs, EnergyArgs, Exit, FitArgs, FitFlags,
    GeometryArgs, MethodArg, ReportArgs, SynthArgs, EXIT_CAP, EXIT_DISAGREEMENT, EXIT_INPUT,
    EXIT_NUMERICAL, FACTOR_CAP,
};

fn check_cap(factors: usize) -> Result<()> {
    if factors > FACTOR_CAP {
        return Err(Exit::new(
            EXIT_CAP,
            format!("{factors} factors exceed the cap of {FACTOR_CAP}"),
        )
        .into());
    }
    Ok(())
}

fn input_error(message: impl Into<String>) -> anyhow::Error {
    Exit::new(EXIT_INPUT, message).into()
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<(ModelFile, SoftmaxModel)> {
    let file: ModelFile = load(path)?;
    check_cap(file.input.factors.len() + file.output.factors.len())?;
    let model = file
        .to_model()
        .with_context(|| format!("loading {}", path.display()))?;
    Ok((file, model))
}

fn parse_shape(text: &str) -> Result<FactoredShape> {
    let cards = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| input_error(format!("bad cardinality '{t}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_cap(cards.len())?;
    Ok(FactoredShape::new(cards)?)
}

#[derive(Serialize)]
struct ComponentOut {
    subset: IndexSubset,
    order: usize,
    dimension: usize,
    norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct DecomposeResults {
    factors: Vec<FactorSpec>,
    dim: usize,
    components: Vec<ComponentOut>,
}

pub fn decompose(a: &DecomposeArgs) -> Result<()> {
    let file: EmbeddingFile = load(&a.input)?;
    check_cap(file.factors.len())?;
    let table = file.to_table()?;
    let k = table.shape().k();
    let parts: Vec<(IndexSubset, EmbeddingTable)> = match &a.component {
        Some(text) => {
            let s = IndexSubset::parse_one_based(text, k)?;
            vec![(s, q_project(&table, s)?)]
        }
        None => interdec::decompose(&table).components().to_vec(),
    };
    let mut components = Vec::with_capacity(parts.len());
    let mut csv = Table::new(["subset", "order", "dimension", "norm"]);
    for (s, c) in parts {
        let out = ComponentOut {
            subset: s,
            order: s.len(),
            dimension: component_dimension(table.shape(), table.dim(), s)?,
            norm: c.max_row_norm(),
            rows: a.rows.then(|| c.to_rows()),
        };
        csv.push(vec![
            subset_key(s),
            out.order.to_string(),
            out.dimension.to_string(),
            num(out.norm),
        ]);
        components.push(out);
    }
    let results = DecomposeResults {
        factors: file.factors.clone(),
        dim: table.dim(),
        components,
    };
    emit_report(
        &ReportFile::new("decompose", a, &results)?,
        a.out.as_deref(),
    )?;
    if let Some(path) = &a.csv {
        csv.write(path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckCiResults {
    partition: String,
    forbidden_pairs: Vec<(IndexSubset, IndexSubset)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometric: Option<CiVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<CiVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    renormalized: Option<f64>,
}

pub fn check_ci(a: &CheckCiArgs) -> Result<()> {
    let want_geometric = a.method != MethodArg::Oracle;
    let want_oracle = a.method != MethodArg::Geometric;
    let (part, geometric, oracle, renormalized) = if let Some(path) = &a.model {
        let (file, model) = load_model(path)?;
        let part = VariablePartition::parse(&a.partition, model.m(), model.n(), &file.aliases())?;
        let geometric = want_geometric
            .then(|| check_ci_geometric(&model, &part, a.tol))
            .transpose()?;
        let oracle = if want_oracle {
            Some(check_ci_oracle(&evaluate(&model)?, &part, a.tol)?)
        } else {
            None
        };
        (part, geometric, oracle, None)
    } else {
        let path = a.distribution.as_ref().expect("clap requires one source");
        if want_geometric {
            return Err(input_error(
                "the geometric method needs a model file; use --method oracle",
            ));
        }
        let file: DistributionFile = load(path)?;
        check_cap(file.x_factors.len() + file.y_factors.len())?;
        let loaded = file.to_table()?;
        let (m, n) = (loaded.table.x_shape().k(), loaded.table.y_shape().k());
        let part = VariablePartition::parse(&a.partition, m, n, &file.aliases())?;
        let oracle = check_ci_oracle(&loaded.table, &part, a.tol)?;
        (part, None, Some(oracle), loaded.renormalized)
    };
    let agreement = match (&geometric, &oracle) {
        (Some(g), Some(o)) => Some(g.holds == o.holds),
        _ => None,
    };
    let results = CheckCiResults {
        partition: part.describe(),
        forbidden_pairs: part.forbidden_pairs(),
        geometric,
        oracle,
        agreement,
        renormalized,
    };
    emit_report(&ReportFile::new("check-ci", a, &results)?, a.out.as_deref())?;
    if agreement == Some(false) {
        return Err(Exit::new(EXIT_DISAGREEMENT, "geometric and oracle verdicts disagree").into());
    }
    Ok(())
}

#[derive(Serialize)]
struct EnergyResults {
    componentwise: EnergyMatrix,
    via_logits: EnergyMatrix,
    max_discrepancy: f64,
}

pub fn energy(a: &EnergyArgs) -> Result<()> {
    let (_, model) = load_model(&a.model)?;
    let componentwise = energy_matrix(&model);
    let via_logits = energy_matrix_via_logits(&model);
    let mut csv = Table::new(["input", "output", "raw", "normalized", "raw_via_logits"]);
    for (e, l) in componentwise.entries.iter().zip(&via_logits.entries) {
        csv.push(vec![
            subset_key(e.input),
            subset_key(e.output),
            num(e.raw),
            num(e.normalized),
            num(l.raw),
        ]);
    }
    let results = EnergyResults {
        max_discrepancy: componentwise.max_raw_discrepancy(&via_logits),
        componentwise,
        via_logits,
    };
    emit_report(&ReportFile::new("energy", a, &results)?, a.out.as_deref())?;
    if let Some(path) = &a.csv {
        csv.write(path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthResults {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    allowed: Option<Vec<IndexSubset>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometric: Option<CiVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<CiVerdict>,
}

/// Tolerance used when verifying freshly synthesized structure.
const SYNTH_CHECK_TOL: f64 = 1e-9;

pub fn synth(a: &SynthArgs) -> Result<()> {
    let x = parse_shape(&a.x_shape)?;
    let y = parse_shape(&a.y_shape)?;
    let (m, n) = (x.k(), y.k());
    check_cap(m + n)?;
    let part = a
        .partition
        .as_ref()
        .map(|p| VariablePartition::parse(p, m, n, &Default::default()))
        .transpose()?;
    let results = if let Some(dim) = a.dim {
        if a.allowed.is_some() {
            return Err(input_error(
                "--allowed applies to distributions; use --partition with --dim",
            ));
        }
        let mut model = random_model(&x, &y, dim, a.seed, a.scale);
        if let Some(part) = &part {
            model = project_structure(&model, &part.forbidden_pairs(), ZeroingPolicy::Both);
        }
        write_file(&a.emit, &ModelFile::with_default_names(&model))?;
        let (geometric, oracle) = match &part {
            Some(p) => (
                Some(check_ci_geometric(&model, p, SYNTH_CHECK_TOL)?),
                Some(check_ci_oracle(&evaluate(&model)?, p, SYNTH_CHECK_TOL)?),
            ),
            None => (None, None),
        };
        SynthResults {
            kind: "model",
            allowed: None,
            partition: part.as_ref().map(VariablePartition::describe),
            geometric,
            oracle,
        }
    } else {
        let spec = match (&part, &a.allowed) {
            (Some(p), _) => StructureSpec::ci_compatible(p, a.seed, a.scale)?,
            (None, Some(text)) => {
                let allowed = text
                    .split(';')
                    .map(|s| IndexSubset::parse_one_based(s, m + n))
                    .collect::<interdec::Result<Vec<_>>>()?;
                StructureSpec::new(allowed, a.seed, a.scale)?
            }
            (None, None) => StructureSpec::saturated(m + n, a.seed, a.scale)?,
        };
        let cond = synth_conditional(&x, &y, &spec)?;
        write_file(&a.emit, &DistributionFile::with_default_names(&cond))?;
        let oracle = part
            .as_ref()
            .map(|p| check_ci_oracle(&cond, p, SYNTH_CHECK_TOL))
            .transpose()?;
        SynthResults {
            kind: "distribution",
            allowed: Some(spec.allowed),
            partition: part.as_ref().map(VariablePartition::describe),
            geometric: None,
            oracle,
        }
    };
    emit_report(&ReportFile::new("synth", a, &results)?, a.out.as_deref())
}

fn fit_config(f: &FitFlags) -> FitConfig {
    FitConfig {
        learning_rate: f.learning_rate,
        max_iters: f.max_iters,
        kl_tol: f.kl_tol,
        record_every: f.record_every,
        seed: f.seed,
        dim: f.dim,
    }
}

#[derive(Serialize)]
struct TraceOut<'a> {
    iterations: usize,
    final_kl: f64,
    converged: bool,
    records: &'a [TraceRecord],
}

impl<'a> From<&'a TrainingTrace> for TraceOut<'a> {
    fn from(t: &'a TrainingTrace) -> Self {
        Self {
            iterations: t.iterations,
            final_kl: t.final_kl,
            converged: t.converged,
            records: &t.records,
        }
    }
}

fn share_columns(shares: &[ComponentShare]) -> Vec<String> {
    let mut cols: Vec<String> = shares
        .iter()
        .map(|s| format!("share_{}", subset_key(s.subset)))
        .collect();
    cols.extend(
        shares
            .iter()
            .map(|s| format!("inverse_{}", subset_key(s.subset))),
    );
    cols
}

fn share_values(shares: &[ComponentShare]) -> Vec<String> {
    let mut vals: Vec<String> = shares.iter().map(|s| num(s.share)).collect();
    vals.extend(
        shares
            .iter()
            .map(|s| s.inverse.map(num).unwrap_or_default()),
    );
    vals
}

/// A finished fit, or the partial trace of a diverged one.
enum FitRun {
    Done(SoftmaxModel, TrainingTrace),
    Diverged(TrainingTrace, String),
}

/// Runs a fit. Divergence is returned, so the partial trace can be reported
/// before the numerical-failure exit; other errors propagate.
fn run_fit(
    target: &ConditionalTable,
    cfg: &FitConfig,
    latent_rows: Option<&[usize]>,
) -> Result<FitRun> {
    match fit_with_latent(target, cfg, latent_rows) {
        Ok(out) => Ok(FitRun::Done(out.model, out.trace)),
        Err(interdec::Error::Divergence {
            trace,
            iteration,
            kl,
        }) => Ok(FitRun::Diverged(
            *trace,
            format!("fit diverged at iteration {iteration} (KL = {kl})"),
        )),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct FitResults<'a> {
    trace: TraceOut<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<EnergyMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let file: DistributionFile = load(&a.distribution)?;
    check_cap(file.x_factors.len() + file.y_factors.len())?;
    let target = file.to_table()?.table;
    let cfg = fit_config(&a.fit);
    if cfg.learning_rate <= 0.0
        || cfg.max_iters == 0
        || cfg.record_every == 0
        || cfg.dim == 0
        || cfg.kl_tol < 0.0
    {
        return Err(input_error(
            "fit flags must be positive (kl-tol nonnegative)",
        ));
    }
    let (model, trace, error) = match run_fit(&target, &cfg, None)? {
        FitRun::Done(model, trace) => (Some(model), trace, None),
        FitRun::Diverged(trace, msg) => (None, trace, Some(msg)),
    };
    if let Some(path) = &a.trace_csv {
        let mut header = vec!["iteration".to_string(), "kl".to_string()];
        header.extend(
            trace
                .records
                .first()
                .map(|r| share_columns(&r.shares))
                .unwrap_or_default(),
        );
        let mut csv = Table::new(header);
        for r in &trace.records {
            let mut row = vec![r.iteration.to_string(), num(r.kl)];
            row.extend(share_values(&r.shares));
            csv.push(row);
        }
        csv.write(path)?;
    }
    let results = FitResults {
        trace: (&trace).into(),
        energy: model.as_ref().map(energy_matrix),
        error: error.clone(),
    };
    emit_report(&ReportFile::new("fit", a, &results)?, a.out.as_deref())?;
    if let Some(msg) = error {
        return Err(Exit::new(EXIT_NUMERICAL, msg).into());
    }
    if let (Some(path), Some(model)) = (&a.model_out, &model) {
        write_file(
            path,
            &ModelFile::from_model(model, file.x_factors, file.y_factors),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ConditionOut<'a> {
    condition: EmergenceCondition,
    trace: TraceOut<'a>,
    /// Final share of the pairwise component `{1,2}`.
    pairwise_share: Option<f64>,
    /// Largest final share among the first-order components.
    max_first_order_share: Option<f64>,
    pca_first: Option<Pca>,
    pca_last: Option<Pca>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn emergence(a: &EmergenceArgs) -> Result<()> {
    let cfg = fit_config(&a.fit);
    let conditions: Vec<EmergenceCondition> = match a.condition {
        ConditionArg::All => EmergenceCondition::ALL.to_vec(),
        ConditionArg::TokenAligned => vec![EmergenceCondition::TokenAligned],
        ConditionArg::Permuted => vec![EmergenceCondition::Permuted],
        ConditionArg::Unfactored => vec![EmergenceCondition::Unfactored],
    };
    let mut traces = Vec::new();
    for &condition in &conditions {
        let target = synth_emergence_target(a.z_card, condition, cfg.seed)?;
        let latent_rows = target.latent_rows();
        if cfg.learning_rate <= 0.0
            || cfg.max_iters == 0
            || cfg.record_every == 0
            || cfg.dim == 0
            || cfg.kl_tol < 0.0
        {
            return Err(input_error(
                "fit flags must be positive (kl-tol nonnegative)",
            ));
        }
        let (trace, error) = match run_fit(&target.table, &cfg, latent_rows.as_deref())? {
            FitRun::Done(_, trace) => (trace, None),
            FitRun::Diverged(trace, msg) => (trace, Some(msg)),
        };
        traces.push((condition, trace, error));
    }

    let pair = IndexSubset::full(2);
    let mut outs = Vec::new();
    let mut trace_csv: Option<Table> = None;
    let mut pca_csv = Table::new(["condition", "stage", "z1", "z2", "pc1", "pc2", "pc3"]);
    for (condition, trace, error) in &traces {
        let last = trace.records.last();
        let share_of = |s: IndexSubset| {
            last.and_then(|r| r.shares.iter().find(|c| c.subset == s).map(|c| c.share))
        };
        let pca_first = trace.first_projected.as_ref().map(|t| pca(t, 3));
        let pca_last = trace.last_projected.as_ref().map(|t| pca(t, 3));
        for (stage, p, table) in [
            ("first", &pca_first, &trace.first_projected),
            ("last", &pca_last, &trace.last_projected),
        ] {
            if let (Some(p), Some(table)) = (p, table) {
                for (tuple, coords) in table.shape().tuples().zip(&p.coords) {
                    let mut row = vec![condition.to_string(), stage.to_string()];
                    row.extend(tuple.iter().map(usize::to_string));
                    row.extend(coords.iter().copied().map(num));
                    pca_csv.push(row);
                }
            }
        }
        for r in &trace.records {
            let csv = trace_csv.get_or_insert_with(|| {
                let mut header = vec![
                    "condition".to_string(),
                    "iteration".to_string(),
                    "kl".to_string(),
                ];
                header.extend(share_columns(&r.shares));
                Table::new(header)
            });
            let mut row = vec![condition.to_string(), r.iteration.to_string(), num(r.kl)];
            row.extend(share_values(&r.shares));
            csv.push(row);
        }
        outs.push(ConditionOut {
            condition: *condition,
            trace: trace.into(),
            pairwise_share: share_of(pair),
            max_first_order_share: [IndexSubset::singleton(0), IndexSubset::singleton(1)]
                .into_iter()
                .filter_map(share_of)
                .reduce(f64::max),
            pca_first,
            pca_last,
            error: error.clone(),
        });
    }
    emit_report(&ReportFile::new("emergence", a, &outs)?, a.out.as_deref())?;
    if let Some(path) = &a.trace_csv {
        trace_csv
            .unwrap_or_else(|| Table::new(["condition", "iteration", "kl"]))
            .write(path)?;
    }
    if let Some(path) = &a.pca_csv {
        pca_csv.write(path)?;
    }
    if let Some(msg) = traces.iter().find_map(|(_, _, e)| e.clone()) {
        return Err(Exit::new(EXIT_NUMERICAL, msg).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalogyOut {
    cells: Vec<Vec<usize>>,
    residual: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum GeometryResults {
    Grid(interdec::geometry::InteractionNormGrid),
    Polytope {
        report: interdec::geometry::PolytopeReport,
        pca: Pca,
    },
    Analogy(Vec<AnalogyOut>),
}

fn label(file: &EmbeddingFile, factor: usize, value: usize) -> String {
    file.factors[factor]
        .labels
        .as_ref()
        .map_or_else(|| value.to_string(), |l| l[value].clone())
}

pub fn geometry(a: &GeometryArgs) -> Result<()> {
    let file: EmbeddingFile = load(&a.input)?;
    check_cap(file.factors.len())?;
    let table = file.to_table()?;
    let (results, csv) = if a.grid {
        let grid = interaction_norm_grid(&table)?;
        let mut csv = Table::new(["z1", "z2", "label1", "label2", "norm"]);
        for (i, row) in grid.grid.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                csv.push(vec![
                    i.to_string(),
                    j.to_string(),
                    label(&file, 0, i),
                    label(&file, 1, j),
                    num(v),
                ]);
            }
        }
        (GeometryResults::Grid(grid), csv)
    } else if a.polytope {
        let report = polytope_report(&table, a.tol)?;
        let p = pca(&table, 3);
        let mut csv = Table::new(["tuple", "pc1", "pc2", "pc3"]);
        for (tuple, coords) in table.shape().tuples().zip(&p.coords) {
            let mut row = vec![tuple
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(":")];
            row.extend(coords.iter().copied().map(num));
            csv.push(row);
        }
        (GeometryResults::Polytope { report, pca: p }, csv)
    } else {
        let mut outs = Vec::new();
        let mut csv = Table::new(["cells", "residual"]);
        for spec in &a.analogy {
            let cells = spec
                .split(',')
                .map(|c| file.parse_tuple(c))
                .collect::<interdec::Result<Vec<_>>>()?;
            let quad: [Vec<usize>; 4] = cells
                .clone()
                .try_into()
                .map_err(|_| input_error(format!("'{spec}' must list exactly four cells")))?;
            let residual = analogy_residual(&table, &quad)?;
            csv.push(vec![spec.clone(), num(residual)]);
            outs.push(AnalogyOut { cells, residual });
        }
        (GeometryResults::Analogy(outs), csv)
    };
    emit_report(&ReportFile::new("geometry", a, &results)?, a.out.as_deref())?;
    if let Some(path) = &a.csv {
        csv.write(path)?;
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let report: ReportFile = load(&a.input)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(input_error(format!(
            "unsupported schema_version {}, expected {SCHEMA_VERSION}",
            report.schema_version
        )));
    }
    if a.summary {
        let mut text = format!(
            "command: {}\nschema_version: {}\n",
            report.command, report.schema_version
        );
        if let Some(config) = report.config.as_object() {
            for (k, v) in config {
                text.push_str(&format!("config.{k}: {v}\n"));
            }
        }
        match &report.results {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    text.push_str(&format!("results.{k}: {}\n", summarize(v)));
                }
            }
            other => text.push_str(&format!("results: {}\n", summarize(other))),
        }
        match &a.out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    } else {
        emit_report(&report, a.out.as_deref())
    }
}

fn summarize(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Array(items) => format!("[{} items]", items.len()),
        serde_json::Value::Object(map) => {
            if let Some(h) = map.get("holds") {
                format!("holds={h}")
            } else {
                format!("{{{} fields}}", map.len())
            }
        }
        other => other.to_string(),
    }
}
