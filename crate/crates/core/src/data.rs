//! CSV ingestion, preprocessing and seeded splitting.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{Purpose, RngStreams};

const MISSING_TOKENS: [&str; 3] = ["NA", "nan", "?"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => write!(f, "{n:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRows,
    DropColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    None,
    #[default]
    ZScore,
}

fn default_true() -> bool {
    true
}

/// Which columns to use and how to clean them. An empty `feature_columns`
/// list selects every column except the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchema {
    #[serde(default)]
    pub feature_columns: Vec<ColumnRef>,
    pub label_column: ColumnRef,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_true")]
    pub drop_non_numeric: bool,
    #[serde(default)]
    pub normalize: Normalize,
}

impl DataSchema {
    pub fn new(label_column: ColumnRef) -> Self {
        Self {
            feature_columns: Vec::new(),
            label_column,
            missing_policy: MissingPolicy::default(),
            drop_non_numeric: true,
            normalize: Normalize::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    fn parse(raw: &str) -> Self {
        let s = raw.trim();
        if s.is_empty() || MISSING_TOKENS.contains(&s) {
            Cell::Missing
        } else if let Ok(v) = s.parse::<f64>() {
            Cell::Number(v)
        } else {
            Cell::Text(s.to_string())
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    fn label(&self) -> Option<String> {
        match self {
            Cell::Missing => None,
            Cell::Number(v) => Some(v.to_string()),
            Cell::Text(s) => Some(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn width(&self) -> usize {
        self.headers.len()
    }

    fn resolve(&self, col: &ColumnRef) -> Result<usize> {
        match col {
            ColumnRef::Index(i) if *i < self.width() => Ok(*i),
            ColumnRef::Name(name) => self
                .headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(col.to_string())),
            _ => Err(Error::UnknownColumn(col.to_string())),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file)
}

/// Parses comma-separated text with exactly one header row.
pub fn parse_csv(reader: impl Read) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(Cell::parse).collect());
    }
    Ok(RawTable { headers, rows })
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Constant columns get deviation 1.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let (mut mean, mut std) = (Vec::with_capacity(x.cols()), Vec::with_capacity(x.cols()));
        for j in 0..x.cols() {
            let m = x.column(j).sum::<f64>() / n;
            let var = x.column(j).map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::Length {
                what: "feature row",
                expected: self.mean.len(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let rows = x.iter_rows().map(|r| self.apply_row(r)).collect::<Result<Vec<_>>>()?;
        Matrix::from_rows_with_width(rows, x.cols())
    }
}

/// Statistics fitted elsewhere (typically on a training set) and reused.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorStats {
    pub class_names: Option<Vec<String>>,
    pub normalization: Option<NormalizationStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// One-hot labels, `n x c`.
    pub y: Matrix,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub normalization: Option<NormalizationStats>,
    /// Source row index of every row in the raw table.
    pub row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from features and class indices.
    pub fn from_labels(x: Matrix, labels: &[usize], class_names: Vec<String>) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::Length {
                what: "labels",
                expected: x.rows(),
                found: labels.len(),
            });
        }
        let c = class_names.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::UnknownClass(bad.to_string()));
        }
        let y = Matrix::from_fn(labels.len(), c, |i, j| f64::from(u8::from(labels[i] == j)));
        let feature_names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            row_ids: (0..x.rows()).collect(),
            x,
            y,
            class_names,
            feature_names,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.y.cols()
    }

    /// Class index of every row.
    pub fn labels(&self) -> Vec<usize> {
        self.y.iter_rows().map(crate::network::argmax).collect()
    }

    /// Rows at the given positions (not source row ids).
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(positions),
            y: self.y.select_rows(positions),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
            row_ids: positions.iter().map(|&p| self.row_ids[p]).collect(),
        }
    }

    /// Z-scores the features with `stats`, recording them on the dataset.
    pub fn normalized_with(&self, stats: &NormalizationStats) -> Result<Self> {
        Ok(Self {
            x: stats.apply(&self.x)?,
            normalization: Some(stats.clone()),
            ..self.clone()
        })
    }
}

/// Cleans a raw table into a numeric dataset with one-hot labels.
pub fn preprocess(raw: &RawTable, schema: &DataSchema, prior: Option<&PriorStats>) -> Result<Dataset> {
    let label_col = raw.resolve(&schema.label_column)?;
    let mut features: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..raw.width()).filter(|&c| c != label_col).collect()
    } else {
        schema
            .feature_columns
            .iter()
            .map(|c| raw.resolve(c))
            .collect::<Result<_>>()?
    };
    if features.contains(&label_col) {
        return Err(Error::Config(format!(
            "label column {} is also listed as a feature",
            schema.label_column
        )));
    }

    let text_columns: Vec<usize> = features
        .iter()
        .copied()
        .filter(|&c| raw.rows.iter().any(|r| matches!(r[c], Cell::Text(_))))
        .collect();
    if let Some(&c) = text_columns.first() {
        if !schema.drop_non_numeric {
            return Err(Error::Config(format!(
                "feature column {:?} is not numeric",
                raw.headers[c]
            )));
        }
        features.retain(|c| !text_columns.contains(c));
    }

    // Rows without a label are never usable.
    let mut rows: Vec<usize> = (0..raw.rows.len())
        .filter(|&r| !raw.rows[r][label_col].is_missing())
        .collect();
    match schema.missing_policy {
        MissingPolicy::DropRows => {
            rows.retain(|&r| features.iter().all(|&c| !raw.rows[r][c].is_missing()));
        }
        MissingPolicy::DropColumns => {
            features.retain(|&c| rows.iter().all(|&r| !raw.rows[r][c].is_missing()));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no rows left after filtering".into()));
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset("no feature columns left after filtering".into()));
    }

    let x = Matrix::from_fn(rows.len(), features.len(), |i, j| {
        match raw.rows[rows[i]][features[j]] {
            Cell::Number(v) => v,
            _ => unreachable!("filtered to numeric, present cells"),
        }
    });

    let fixed_classes = prior.and_then(|p| p.class_names.clone());
    let mut class_names = fixed_classes.clone().unwrap_or_default();
    let mut class_index: HashMap<String, usize> = class_names.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let mut labels = Vec::with_capacity(rows.len());
    for &r in &rows {
        let name = raw.rows[r][label_col].label().expect("label present");
        let idx = match class_index.get(&name) {
            Some(&i) => i,
            None if fixed_classes.is_some() => return Err(Error::UnknownClass(name)),
            None => {
                class_names.push(name.clone());
                class_index.insert(name, class_names.len() - 1);
                class_names.len() - 1
            }
        };
        labels.push(idx);
    }
    if class_names.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "need at least two label classes, found {}",
            class_names.len()
        )));
    }

    let mut data = Dataset::from_labels(x, &labels, class_names)?;
    data.feature_names = features.iter().map(|&c| raw.headers[c].clone()).collect();
    data.row_ids = rows;
    match schema.normalize {
        Normalize::None => Ok(data),
        Normalize::ZScore => {
            let stats = match prior.and_then(|p| p.normalization.as_ref()) {
                Some(s) => s.clone(),
                None => NormalizationStats::fit(&data.x),
            };
            data.normalized_with(&stats)
        }
    }
}

/// Seeded shuffle-then-partition into `(train, test)`.
///
/// The shuffled order is cut once at the size of the smaller side, so the
/// fractions `f` and `1 - f` produce the same two row sets with roles swapped.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::EmptyDataset(format!("cannot split {n} rows")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStreams::new(seed).stream(Purpose::Split, 0, 0));

    let small = (n as f64 * test_fraction.min(1.0 - test_fraction)).round() as usize;
    let tail = small.clamp(1, n - 1);
    let (head, tail) = order.split_at(n - tail);
    let (train, test) = if test_fraction <= 0.5 {
        (head, tail)
    } else {
        (tail, head)
    };
    Ok((data.subset(train), data.subset(test)))
}

/// Bundled data used by tests, benches and examples.
pub mod fixtures {
    use super::*;

    /// Fisher's IRIS data: 150 rows, four measurements plus `species`.
    pub const IRIS_CSV: &str = include_str!("../data/iris.csv");

    pub fn iris_raw() -> RawTable {
        parse_csv(IRIS_CSV.as_bytes()).expect("bundled IRIS file parses")
    }

    /// 30-row excerpt: the first ten rows of each species.
    pub fn iris_excerpt_raw() -> RawTable {
        let full = iris_raw();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let rows = full
            .rows
            .iter()
            .filter(|r| {
                let count = seen.entry(r[4].label().unwrap_or_default()).or_insert(0);
                *count += 1;
                *count <= 10
            })
            .cloned()
            .collect();
        RawTable {
            headers: full.headers,
            rows,
        }
    }

    pub fn iris_schema() -> DataSchema {
        DataSchema::new(ColumnRef::Name("species".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn table(text: &str) -> RawTable {
        parse_csv(text.as_bytes()).unwrap()
    }

    #[test]
    fn iris_fixture_shape() {
        let raw = iris_raw();
        assert_eq!(raw.rows.len(), 150);
        assert_eq!(raw.width(), 5);
        assert_eq!(iris_excerpt_raw().rows.len(), 30);
    }

    #[test]
    fn missing_tokens_and_empty_cells() {
        let raw = table("a,b,c\n1,,x\nNA,nan,?\n");
        assert_eq!(raw.rows.len(), 2);
        assert_eq!(raw.rows[0][1], Cell::Missing);
        assert_eq!(raw.rows[0][2], Cell::Text("x".into()));
        assert!(raw.rows[1].iter().all(Cell::is_missing));
    }

    #[test]
    fn header_only_is_empty_table() {
        let raw = table("a,b\n");
        assert_eq!(raw.headers, vec!["a", "b"]);
        assert!(raw.rows.is_empty());
    }

    #[test]
    fn ragged_row_names_line() {
        let err = parse_csv("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::RaggedRow {
                    line: 3,
                    expected: 2,
                    found: 1
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_csv("/nonexistent/file.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn drop_rows_policy() {
        let raw = table("f1,f2,label\n1,2,a\n3,,b\n5,6,a\n7,8,b\n9,10,a\n");
        let mut schema = DataSchema::new(ColumnRef::Name("label".into()));
        schema.normalize = Normalize::None;
        let d = preprocess(&raw, &schema, None).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.row_ids, vec![0, 2, 3, 4]);

        schema.missing_policy = MissingPolicy::DropColumns;
        let d = preprocess(&raw, &schema, None).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.feature_names, vec!["f1"]);
    }

    #[test]
    fn one_hot_by_first_appearance() {
        let raw = table("x,y\n1,b\n2,a\n3,b\n");
        let mut schema = DataSchema::new(ColumnRef::Index(1));
        schema.normalize = Normalize::None;
        let d = preprocess(&raw, &schema, None).unwrap();
        assert_eq!(d.class_names, vec!["b", "a"]);
        assert_eq!(d.y.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn text_columns_dropped_or_rejected() {
        let raw = table("name,v,label\nfoo,1,a\nbar,2,b\n");
        let mut schema = DataSchema::new(ColumnRef::Name("label".into()));
        let d = preprocess(&raw, &schema, None).unwrap();
        assert_eq!(d.feature_names, vec!["v"]);
        schema.drop_non_numeric = false;
        assert!(matches!(preprocess(&raw, &schema, None), Err(Error::Config(_))));
    }

    #[test]
    fn zscore_fits_on_self() {
        let d = preprocess(&iris_raw(), &iris_schema(), None).unwrap();
        for j in 0..d.num_features() {
            let n = d.len() as f64;
            let mean = d.x.column(j).sum::<f64>() / n;
            let var = d.x.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_gets_unit_deviation() {
        let x = Matrix::from_rows(vec![vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let stats = NormalizationStats::fit(&x);
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(stats.apply(&x).unwrap().column(0).collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn prior_classes_reject_unknown_label() {
        let raw = table("x,y\n1,a\n2,c\n");
        let schema = DataSchema::new(ColumnRef::Name("y".into()));
        let prior = PriorStats {
            class_names: Some(vec!["a".into(), "b".into()]),
            normalization: None,
        };
        assert!(matches!(
            preprocess(&raw, &schema, Some(&prior)),
            Err(Error::UnknownClass(c)) if c == "c"
        ));
    }

    #[test]
    fn empty_after_filtering() {
        let raw = table("x,y\n,a\n,b\n");
        let schema = DataSchema::new(ColumnRef::Name("y".into()));
        assert!(matches!(preprocess(&raw, &schema, None), Err(Error::EmptyDataset(_))));
        let unknown = DataSchema::new(ColumnRef::Name("z".into()));
        assert!(matches!(preprocess(&raw, &unknown, None), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = preprocess(&iris_raw(), &iris_schema(), None).unwrap();
        let (train, test) = split(&d, 0.2, 9).unwrap();
        assert_eq!((train.len(), test.len()), (120, 30));
        let (train2, test2) = split(&d, 0.2, 9).unwrap();
        assert_eq!(train.row_ids, train2.row_ids);
        assert_eq!(test.row_ids, test2.row_ids);

        let (swapped_train, swapped_test) = split(&d, 0.8, 9).unwrap();
        assert_eq!(swapped_train.row_ids, test.row_ids);
        assert_eq!(swapped_test.row_ids, train.row_ids);
    }

    #[test]
    fn split_rejects_tiny_or_bad_fraction() {
        let d = preprocess(&iris_raw(), &iris_schema(), None).unwrap();
        assert!(split(&d.subset(&[0]), 0.5, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
        let (train, test) = split(&d.subset(&[0, 1]), 0.01, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn schema_json_format() {
        let schema: DataSchema = serde_json::from_str(
            r#"{"feature_columns": ["a", 2], "label_column": "species",
                "missing_policy": "drop_columns", "drop_non_numeric": false, "normalize": "none"}"#,
        )
        .unwrap();
        assert_eq!(
            schema.feature_columns,
            vec![ColumnRef::Name("a".into()), ColumnRef::Index(2)]
        );
        assert_eq!(schema.missing_policy, MissingPolicy::DropColumns);
        assert_eq!(schema.normalize, Normalize::None);
        assert!(!schema.drop_non_numeric);
    }
}
