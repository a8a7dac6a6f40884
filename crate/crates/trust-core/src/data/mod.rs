//! Tabular data handling: schemas, mixed-type datasets, label attachment,
//! class partitioning, and stratified train/test splitting.
//!
//! Class labels are `0..C` everywhere. For the binary intrusion-detection
//! layout that means normal = 0 and attack = 1, and metrics treat class 1
//! as the positive class by default.
//!
//! Datasets are immutable after construction and safe to share across
//! threads.

mod load;

pub use load::{load_csv, load_labeled, load_predictions, load_schema};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Zero-based class index.
pub type ClassId = usize;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("column {name:?} not found in header")]
    MissingColumn { name: String },
    #[error("file {path} has no data rows")]
    Empty { path: String },
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a finite number")]
    BadNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: label {found:?} is not covered by the label map")]
    UnmappedLabel { row: usize, found: String },
    #[error("row {row}: class index {label} out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("labels length {labels} does not match row count {rows}")]
    LabelLengthMismatch { labels: usize, rows: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {class} has no members; densities cannot be fit for it")]
    EmptyClass { class: ClassId },
    #[error("split ratio must be strictly between 0 and 1, got {0}")]
    RatioOutOfRange(f64),
}

/// Whether a column holds real numbers or category tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Quantitative,
    Qualitative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// Declares the feature columns (ordered) and where labels come from.
///
/// `label_column` names a column in the same CSV holding the classifier's
/// output for each row; a separate predictions file can be used instead.
/// `label_map` translates label tokens to class indices, with `"*"` as an
/// optional catch-all (e.g. `{"normal": 0, "*": 1}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<std::collections::BTreeMap<String, usize>>,
    /// Declared class count; inferred as `max label + 1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// When present the CSV has no header row and this lists the file's
    /// column layout by position (schema columns are matched by name).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headerless_order: Option<Vec<String>>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        let schema = Schema {
            columns,
            label_column: None,
            label_map: None,
            classes: None,
            headerless_order: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.columns.is_empty() {
            return Err(DataError::Schema(
                "schema declares no feature columns".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!(
                    "duplicate column name {:?}",
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Number of feature columns K.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// True when feature names and kinds agree (label wiring may differ).
    pub fn features_match(&self, other: &Schema) -> bool {
        self.columns == other.columns
    }
}

/// Column storage. Qualitative cells are interned: `codes[i]` indexes into
/// `levels`, which lists tokens in first-appearance order.
#[derive(Debug, Clone)]
pub enum Column {
    Quantitative(Vec<f64>),
    Qualitative {
        codes: Vec<u32>,
        levels: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Quantitative(v) => v.len(),
            Column::Qualitative { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One cell as seen through a row view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellRef<'a> {
    Quant(f64),
    Token(&'a str),
}

/// N observations over K typed columns.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<Self, DataError> {
        schema.validate()?;
        if columns.len() != schema.width() {
            return Err(DataError::Schema(format!(
                "schema declares {} columns but {} were provided",
                schema.width(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(DataError::Schema(format!(
                    "column {:?} has {} rows, expected {}",
                    spec.name,
                    col.len(),
                    n_rows
                )));
            }
            match (spec.kind, col) {
                (FeatureKind::Quantitative, Column::Quantitative(v)) => {
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(DataError::BadNumericCell {
                            row: i,
                            column: spec.name.clone(),
                            value: v[i].to_string(),
                        });
                    }
                }
                (FeatureKind::Qualitative, Column::Qualitative { .. }) => {}
                _ => {
                    return Err(DataError::Schema(format!(
                        "column {:?} storage does not match its declared kind",
                        spec.name
                    )))
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row(&self, row: usize) -> RowView<'_> {
        debug_assert!(row < self.n_rows);
        RowView { dataset: self, row }
    }

    /// New dataset holding the given rows (in the given order). Qualitative
    /// level tables are carried over unchanged so codes stay comparable.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|col| match col {
                Column::Quantitative(v) => {
                    Column::Quantitative(rows.iter().map(|&r| v[r]).collect())
                }
                Column::Qualitative { codes, levels } => Column::Qualitative {
                    codes: rows.iter().map(|&r| codes[r]).collect(),
                    levels: levels.clone(),
                },
            })
            .collect();
        Dataset {
            schema: self.schema.clone(),
            columns,
            n_rows: rows.len(),
        }
    }
}

/// Borrowed view of one observation.
#[derive(Clone, Copy)]
pub struct RowView<'a> {
    dataset: &'a Dataset,
    row: usize,
}

impl<'a> RowView<'a> {
    pub fn cell(&self, column: usize) -> CellRef<'a> {
        match &self.dataset.columns[column] {
            Column::Quantitative(v) => CellRef::Quant(v[self.row]),
            Column::Qualitative { codes, levels } => {
                CellRef::Token(&levels[codes[self.row] as usize])
            }
        }
    }

    pub fn width(&self) -> usize {
        self.dataset.width()
    }

    pub fn index(&self) -> usize {
        self.row
    }
}

/// A dataset plus one class index per row.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub labels: Vec<ClassId>,
    pub class_count: usize,
}

impl LabeledDataset {
    /// `class_count = None` infers C as `max label + 1`.
    pub fn new(
        data: Dataset,
        labels: Vec<ClassId>,
        class_count: Option<usize>,
    ) -> Result<Self, DataError> {
        if labels.len() != data.n_rows() {
            return Err(DataError::LabelLengthMismatch {
                labels: labels.len(),
                rows: data.n_rows(),
            });
        }
        let inferred = labels.iter().max().map_or(0, |&m| m + 1);
        let class_count = class_count.unwrap_or(inferred);
        if class_count < 2 {
            return Err(DataError::TooFewClasses(class_count));
        }
        if let Some(row) = labels.iter().position(|&l| l >= class_count) {
            return Err(DataError::LabelOutOfRange {
                row,
                label: labels[row],
                classes: class_count,
            });
        }
        Ok(LabeledDataset {
            data,
            labels,
            class_count,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }
}

/// Per-class row subsets, in class order, schemas identical across parts.
#[derive(Debug, Clone)]
pub struct ClassPartition {
    pub parts: Vec<Dataset>,
}

impl ClassPartition {
    pub fn counts(&self) -> Vec<usize> {
        self.parts.iter().map(Dataset::n_rows).collect()
    }

    pub fn class_count(&self) -> usize {
        self.parts.len()
    }
}

/// Splits rows by their (predicted) class, preserving relative row order
/// inside each part. Every class must be non-empty.
pub fn partition_by_label(ld: &LabeledDataset) -> Result<ClassPartition, DataError> {
    let mut rows_per_class: Vec<Vec<usize>> = vec![Vec::new(); ld.class_count];
    for (row, &label) in ld.labels.iter().enumerate() {
        rows_per_class[label].push(row);
    }
    if let Some(class) = rows_per_class.iter().position(Vec::is_empty) {
        return Err(DataError::EmptyClass { class });
    }
    let parts = rows_per_class
        .iter()
        .map(|rows| ld.data.select_rows(rows))
        .collect();
    Ok(ClassPartition { parts })
}

/// Deterministic stratified split into (train, test) with
/// `|train| = floor(ratio * N)` exactly and per-class proportions kept
/// within one row. Row order within each side follows the original table.
pub fn train_test_split(
    ld: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::RatioOutOfRange(ratio));
    }
    let n = ld.n_rows();
    let train_total = (ratio * n as f64).floor() as usize;

    let mut rows_per_class: Vec<Vec<usize>> = vec![Vec::new(); ld.class_count];
    for (row, &label) in ld.labels.iter().enumerate() {
        rows_per_class[label].push(row);
    }

    // Largest-remainder allocation: floor each class quota, then hand the
    // remaining slots to the largest fractional parts (ties to lower class).
    let quotas: Vec<f64> = rows_per_class
        .iter()
        .map(|rows| ratio * rows.len() as f64)
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = train_total - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..ld.class_count).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in &order {
        if leftover == 0 {
            break;
        }
        if take[c] < rows_per_class[c].len() {
            take[c] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_rows = Vec::with_capacity(train_total);
    let mut test_rows = Vec::with_capacity(n - train_total);
    for (c, rows) in rows_per_class.iter().enumerate() {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        train_rows.extend_from_slice(&shuffled[..take[c]]);
        test_rows.extend_from_slice(&shuffled[take[c]..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    let gather = |rows: &[usize]| -> Result<LabeledDataset, DataError> {
        LabeledDataset::new(
            ld.data.select_rows(rows),
            rows.iter().map(|&r| ld.labels[r]).collect(),
            Some(ld.class_count),
        )
    };
    Ok((gather(&train_rows)?, gather(&test_rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn quant_col(values: &[f64]) -> Column {
        Column::Quantitative(values.to_vec())
    }

    fn small_labeled() -> LabeledDataset {
        let schema = Schema::new(vec![
            ColumnSpec {
                name: "dur".into(),
                kind: FeatureKind::Quantitative,
            },
            ColumnSpec {
                name: "proto".into(),
                kind: FeatureKind::Qualitative,
            },
        ])
        .unwrap();
        let data = Dataset::new(
            schema,
            vec![
                quant_col(&[1.0, 2.0, 3.0]),
                Column::Qualitative {
                    codes: vec![0, 1, 0],
                    levels: vec!["tcp".into(), "udp".into()],
                },
            ],
        )
        .unwrap();
        LabeledDataset::new(data, vec![0, 1, 0], None).unwrap()
    }

    #[test]
    fn partition_sizes_and_order() {
        let ld = small_labeled();
        let part = partition_by_label(&ld).unwrap();
        assert_eq!(part.counts(), vec![2, 1]);
        // relative order preserved inside each part
        match part.parts[0].column(0) {
            Column::Quantitative(v) => assert_eq!(v, &vec![1.0, 3.0]),
            _ => panic!("wrong column type"),
        }
    }

    #[test]
    fn partition_rejects_empty_class() {
        let ld = small_labeled();
        let all_same = LabeledDataset::new(ld.data.clone(), vec![0, 0, 0], Some(2)).unwrap();
        match partition_by_label(&all_same) {
            Err(DataError::EmptyClass { class: 1 }) => {}
            other => panic!("expected EmptyClass(1), got {other:?}"),
        }
    }

    #[test]
    fn partition_counts_at_table_v_scale() {
        // Predicted-label partition sizes implied by the NSL-KDD training
        // confusion matrix: predicted-normal = 53664+529, predicted-attack
        // = 173+46412.
        let n0 = 53_664 + 529;
        let n1 = 173 + 46_412;
        let labels: Vec<ClassId> = std::iter::repeat_n(0, n0)
            .chain(std::iter::repeat_n(1, n1))
            .collect();
        let schema = Schema::new(vec![ColumnSpec {
            name: "x".into(),
            kind: FeatureKind::Quantitative,
        }])
        .unwrap();
        let data =
            Dataset::new(schema, vec![Column::Quantitative(vec![0.5; labels.len()])]).unwrap();
        let ld = LabeledDataset::new(data, labels, None).unwrap();
        let part = partition_by_label(&ld).unwrap();
        assert_eq!(part.counts(), vec![54_193, 46_585]);
    }

    #[test]
    fn split_sizes_are_exact() {
        let schema = Schema::new(vec![ColumnSpec {
            name: "x".into(),
            kind: FeatureKind::Quantitative,
        }])
        .unwrap();
        let data = Dataset::new(
            schema,
            vec![Column::Quantitative((0..10).map(|i| i as f64).collect())],
        )
        .unwrap();
        let ld = LabeledDataset::new(data, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], None).unwrap();
        let (train, test) = train_test_split(&ld, 0.8, 7).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (8, 2));
    }

    #[test]
    fn split_is_deterministic() {
        let ld = small_labeled();
        let (a_train, a_test) = train_test_split(&ld, 0.5, 42).unwrap();
        let (b_train, b_test) = train_test_split(&ld, 0.5, 42).unwrap();
        assert_eq!(a_train.labels, b_train.labels);
        assert_eq!(a_test.labels, b_test.labels);
    }

    #[test]
    fn split_matches_80_20_at_nsl_kdd_scale() {
        let n = 125_973usize;
        let train = (0.8 * n as f64).floor() as usize;
        assert_eq!(train, 100_778);
        assert_eq!(n - train, 25_195);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let ld = small_labeled();
        assert!(matches!(
            train_test_split(&ld, 1.0, 0),
            Err(DataError::RatioOutOfRange(_))
        ));
    }

    #[test]
    fn labeled_dataset_validates_labels() {
        let ld = small_labeled();
        assert!(matches!(
            LabeledDataset::new(ld.data.clone(), vec![0, 5, 0], Some(2)),
            Err(DataError::LabelOutOfRange {
                row: 1,
                label: 5,
                classes: 2
            })
        ));
        assert!(matches!(
            LabeledDataset::new(ld.data.clone(), vec![0, 0], Some(2)),
            Err(DataError::LabelLengthMismatch { labels: 2, rows: 3 })
        ));
    }
}
