//! The `train`, `compare`, `params` and `predict` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rbnn::bnn::train_bnn;
use rbnn::data::{load_csv, Cell};
use rbnn::ffnn::train_ffnn;
use rbnn::network::{loss, param_breakdown, predicted_class, target_for_output};
use rbnn::rbnn::train;
use rbnn::{Activation, Classifier, Dataset, IterationRecord, LossKind, Matrix, ModelKind, Topology, TrainReport};

use crate::config::ExperimentConfig;
use crate::models::{ModelFile, Preprocessing, TrainedModel};
use crate::output::{losscurve_csv, write_atomic, write_json, ResultsRecord};
use crate::pipeline::{prepare, PreparedData};

/// One trained model with its trajectory and summary.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: TrainedModel,
    pub records: Vec<IterationRecord>,
    pub results: ResultsRecord,
}

/// Everything an experiment produced, plus where it was written.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<ModelRun>,
    pub data: PreparedData,
    pub output_dir: PathBuf,
}

fn training_loss(kind: ModelKind, cfg: &ExperimentConfig) -> LossKind {
    match kind {
        ModelKind::Rbnn => cfg.rbnn.as_ref().map(|c| c.loss).unwrap_or_default(),
        ModelKind::Ffnn => cfg.ffnn.as_ref().map(|c| c.loss).unwrap_or_default(),
        ModelKind::Bnn => LossKind::CrossEntropy,
    }
}

/// Summed training loss of the model's own predictions.
fn total_error_of(model: &impl Classifier, data: &Dataset, kind: LossKind) -> Result<f64> {
    let p = model.predict_batch(&data.x)?;
    let mut total = 0.0;
    for (y, out) in data.y.iter_rows().zip(p.iter_rows()) {
        total += loss(kind, &target_for_output(y, out.len())?, out)?;
    }
    Ok(total)
}

fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let mut value = serde_json::to_value(cfg)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("output_dir");
    }
    Ok(value)
}

/// Trains one model on the prepared split.
pub fn train_model(kind: ModelKind, cfg: &ExperimentConfig, data: &PreparedData) -> Result<ModelRun> {
    let topo = cfg.topology()?;
    let (train_set, test_set) = (&data.train, &data.test);
    let (model, report) = match kind {
        ModelKind::Rbnn => {
            let block = cfg.rbnn.as_ref().context("missing `rbnn` block")?;
            detach(train(block, &topo, train_set, Some(test_set))?, TrainedModel::Rbnn)
        }
        ModelKind::Ffnn => {
            let block = cfg.ffnn.as_ref().context("missing `ffnn` block")?;
            detach(train_ffnn(block, &topo, train_set, Some(test_set))?, TrainedModel::Ffnn)
        }
        ModelKind::Bnn => {
            let block = cfg.bnn.as_ref().context("missing `bnn` block")?;
            detach(train_bnn(block, &topo, train_set, Some(test_set))?, TrainedModel::Bnn)
        }
    };
    let results = ResultsRecord {
        model: kind,
        topology: topo.layer_sizes().to_vec(),
        activations: topo.activations().to_vec(),
        use_bias: topo.use_bias(),
        params_stored: report.params_stored,
        inference_scalars: report.inference_scalars,
        iterations: report.records.len(),
        final_train_accuracy: model.accuracy_on(train_set)?,
        final_test_accuracy: model.accuracy_on(test_set)?,
        final_total_error: total_error_of(&model, train_set, training_loss(kind, cfg))?,
        class_names: train_set.class_names.clone(),
        per_class_recall: model.recall_on(test_set)?,
        train_rows: train_set.len(),
        test_rows: test_set.len(),
        split_checksum: data.split_checksum.clone(),
        seed: report.seed,
        wall_time_seconds: report.wall_time_seconds,
        config: config_echo(cfg)?,
    };
    Ok(ModelRun {
        model,
        records: report.records,
        results,
    })
}

/// Splits a report into the wrapped model and the rest of the report.
fn detach<M>(r: TrainReport<M>, wrap: impl FnOnce(M) -> TrainedModel) -> (TrainedModel, TrainReport<()>) {
    let rest = TrainReport {
        model: (),
        records: r.records,
        wall_time_seconds: r.wall_time_seconds,
        params_stored: r.params_stored,
        inference_scalars: r.inference_scalars,
        seed: r.seed,
    };
    (wrap(r.model), rest)
}

fn write_outputs(runs: &[ModelRun], data: &PreparedData, dir: &Path, combined: bool) -> Result<()> {
    let curve = losscurve_csv(runs.iter().map(|r| (r.model.kind(), r.records.as_slice())))?;
    write_atomic(&dir.join("losscurve.csv"), &curve)?;
    let preprocessing = Preprocessing::from_dataset(&data.train);
    if combined {
        let all: Vec<&ResultsRecord> = runs.iter().map(|r| &r.results).collect();
        write_json(&dir.join("results.json"), &all)?;
        for r in runs {
            let name = format!("model_{}.json", r.model.kind());
            write_json(&dir.join(name), &r.model.to_file(preprocessing.clone()))?;
        }
    } else {
        let r = &runs[0];
        write_json(&dir.join("results.json"), &r.results)?;
        write_json(&dir.join("model.json"), &r.model.to_file(preprocessing))?;
    }
    Ok(())
}

/// Trains the config's single model and writes `losscurve.csv`,
/// `results.json` and `model.json` to its output directory.
pub fn run_train(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let models = cfg.selected_models()?;
    ensure!(
        cfg.model.is_some(),
        "invalid config field `model`: train runs one model; use compare for a `models` list"
    );
    let data = prepare(cfg)?;
    let run = train_model(models[0], cfg, &data)?;
    let runs = vec![run];
    write_outputs(&runs, &data, &cfg.output_dir, false)?;
    Ok(ExperimentOutcome {
        runs,
        data,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Trains every listed model on one shared split. A failing model does not
/// stop the others; the error is reported once the rest have been written.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let models = cfg.selected_models()?;
    ensure!(
        models.len() >= 2,
        "invalid config field `models`: compare needs at least two models"
    );
    let data = prepare(cfg)?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for kind in models {
        match train_model(kind, cfg, &data) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(format!("{kind}: {e:#}")),
        }
    }
    if !runs.is_empty() {
        write_outputs(&runs, &data, &cfg.output_dir, true)?;
    }
    if !failures.is_empty() {
        bail!("{} model(s) failed: {}", failures.len(), failures.join("; "));
    }
    Ok(ExperimentOutcome {
        runs,
        data,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Parses `"d,n1,...,nL"`.
pub fn parse_topology(text: &str) -> Result<Vec<usize>> {
    let sizes = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("malformed topology {text:?}: {t:?} is not a layer size"))
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(
        sizes.len() >= 2,
        "malformed topology {text:?}: need an input and at least one layer"
    );
    ensure!(
        !sizes.contains(&0),
        "malformed topology {text:?}: layer sizes must be positive"
    );
    Ok(sizes)
}

/// `"<total> parameters({<per layer>})"`.
pub fn run_params(kind: ModelKind, sizes: &[usize], use_bias: bool) -> Result<String> {
    let topo = Topology::uniform(sizes.to_vec(), Activation::Sigmoid, Activation::Sigmoid)?.with_bias(use_bias);
    let parts = param_breakdown(kind, &topo);
    let total: usize = parts.iter().sum();
    let listed: Vec<String> = parts.iter().map(ToString::to_string).collect();
    Ok(format!("{total} parameters({{{}}})", listed.join(",")))
}

/// One predicted row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One probability per class name.
    pub probabilities: Vec<f64>,
    pub class: String,
}

fn numeric_row(cells: &[Cell], line: usize) -> Result<Vec<f64>> {
    cells
        .iter()
        .enumerate()
        .map(|(j, c)| match c {
            Cell::Number(v) => Ok(*v),
            other => bail!("input row {line}, column {}: expected a number, found {other:?}", j + 1),
        })
        .collect()
}

/// Feature rows from a CSV path or inline `"a,b,c;d,e,f"` text. CSV headers
/// naming every training feature select those columns; otherwise the
/// columns are taken in order.
pub fn parse_input(input: &str, pre: &Preprocessing) -> Result<Matrix> {
    let width = pre.feature_names.len();
    let rows: Vec<Vec<f64>> = if Path::new(input).is_file() {
        let raw = load_csv(input)?;
        let by_name: Option<Vec<usize>> = pre
            .feature_names
            .iter()
            .map(|f| raw.headers.iter().position(|h| h == f))
            .collect();
        raw.rows
            .iter()
            .enumerate()
            .map(|(i, row)| match &by_name {
                Some(cols) => numeric_row(&cols.iter().map(|&c| row[c].clone()).collect::<Vec<_>>(), i + 1),
                None => numeric_row(row, i + 1),
            })
            .collect::<Result<_>>()?
    } else {
        input
            .split(';')
            .filter(|r| !r.trim().is_empty())
            .enumerate()
            .map(|(i, r)| {
                r.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .with_context(|| format!("input row {}: {v:?} is not a number", i + 1))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?
    };
    ensure!(!rows.is_empty(), "input has no rows");
    for (i, r) in rows.iter().enumerate() {
        ensure!(
            r.len() == width,
            "input row {} has {} values but the model expects {width} features",
            i + 1,
            r.len()
        );
    }
    let x = Matrix::from_rows_with_width(rows, width)?;
    Ok(match &pre.normalization {
        Some(stats) => stats.apply(&x)?,
        None => x,
    })
}

/// Loads a saved model and classifies `input` (a CSV path or inline rows).
pub fn run_predict(model_path: &Path, input: &str) -> Result<(Vec<String>, Vec<Prediction>)> {
    let (model, pre) = ModelFile::load(model_path)?.into_model()?;
    let x = parse_input(input, &pre)?;
    let out = model.predict_batch(&x)?;
    let binary_head = out.cols() == 1 && pre.class_names.len() == 2;
    ensure!(
        binary_head || out.cols() == pre.class_names.len(),
        "model has {} outputs but {} class names",
        out.cols(),
        pre.class_names.len()
    );
    let preds = out
        .iter_rows()
        .map(|p| Prediction {
            probabilities: if binary_head {
                vec![1.0 - p[0], p[0]]
            } else {
                p.to_vec()
            },
            class: pre.class_names[predicted_class(p)].clone(),
        })
        .collect();
    Ok((pre.class_names, preds))
}

/// CSV with one row per prediction: `row,class,p_<name>...`.
pub fn format_predictions(class_names: &[String], preds: &[Prediction]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "class".to_string()];
    header.extend(class_names.iter().map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for (i, p) in preds.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), p.class.clone()];
        rec.extend(p.probabilities.iter().map(ToString::to_string));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes)?)
}
