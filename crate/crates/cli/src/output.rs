//! Result files: loss curves, results records and atomic writes.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use rbnn::{Activation, IterationRecord, ModelKind};
use serde::{Deserialize, Serialize};

pub const LOSSCURVE_HEADER: [&str; 7] = [
    "iteration",
    "model",
    "population_mean_error",
    "elite_mean_error",
    "best_error",
    "train_accuracy",
    "test_accuracy",
];

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Loss-curve CSV for one or more models, rows grouped by model.
pub fn losscurve_csv<'a>(runs: impl IntoIterator<Item = (ModelKind, &'a [IterationRecord])>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOSSCURVE_HEADER)?;
    for (kind, records) in runs {
        for r in records {
            w.write_record([
                r.iteration.to_string(),
                kind.to_string(),
                cell(r.population_mean_error),
                cell(r.elite_mean_error),
                r.best_error.to_string(),
                r.train_accuracy.to_string(),
                cell(r.test_accuracy),
            ])?;
        }
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Summary of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub model: ModelKind,
    pub topology: Vec<usize>,
    pub activations: Vec<Activation>,
    pub use_bias: bool,
    pub params_stored: usize,
    /// Scalars the inference rule keeps beyond `params_stored`.
    pub inference_scalars: usize,
    /// RBNN iterations or baseline epochs actually run.
    pub iterations: usize,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
    /// Training loss of the returned model over the training rows.
    pub final_total_error: f64,
    pub class_names: Vec<String>,
    pub per_class_recall: Vec<Option<f64>>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub split_checksum: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
}
