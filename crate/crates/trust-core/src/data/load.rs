//! CSV ingestion, the JSON schema sidecar, and predictions files.
//!
//! CSVs are RFC-4180 with a mandatory header row (UTF-8). Files without a
//! header are supported only when the sidecar spells out the positional
//! layout in `headerless_order`. Missing values are rejected outright;
//! there is no imputation.

use super::{ClassId, Column, DataError, Dataset, FeatureKind, LabeledDataset, Schema};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

impl Schema {
    /// Reads the sidecar JSON next to (or anywhere relative to) the data.
    pub fn from_json(text: &str) -> Result<Schema, DataError> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

/// Loads the schema sidecar from a file.
pub fn load_schema(path: &Path) -> Result<Schema, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Schema::from_json(&text)
}

struct ColumnBuilder {
    kind: FeatureKind,
    quants: Vec<f64>,
    codes: Vec<u32>,
    levels: Vec<String>,
    level_index: HashMap<String, u32>,
}

impl ColumnBuilder {
    fn new(kind: FeatureKind) -> Self {
        ColumnBuilder {
            kind,
            quants: Vec::new(),
            codes: Vec::new(),
            levels: Vec::new(),
            level_index: HashMap::new(),
        }
    }

    fn push(&mut self, raw: &str, row: usize, name: &str) -> Result<(), DataError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(DataError::MissingValue {
                row,
                column: name.to_string(),
            });
        }
        match self.kind {
            FeatureKind::Quantitative => {
                let value: f64 = trimmed.parse().map_err(|_| DataError::BadNumericCell {
                    row,
                    column: name.to_string(),
                    value: trimmed.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(DataError::BadNumericCell {
                        row,
                        column: name.to_string(),
                        value: trimmed.to_string(),
                    });
                }
                self.quants.push(value);
            }
            FeatureKind::Qualitative => {
                let code = match self.level_index.get(trimmed) {
                    Some(&c) => c,
                    None => {
                        let c = self.levels.len() as u32;
                        self.levels.push(trimmed.to_string());
                        self.level_index.insert(trimmed.to_string(), c);
                        c
                    }
                };
                self.codes.push(code);
            }
        }
        Ok(())
    }

    fn finish(self) -> Column {
        match self.kind {
            FeatureKind::Quantitative => Column::Quantitative(self.quants),
            FeatureKind::Qualitative => Column::Qualitative {
                codes: self.codes,
                levels: self.levels,
            },
        }
    }
}

/// Maps schema columns (and optionally the label column) to positions in
/// the CSV layout.
fn resolve_positions(
    header: &[String],
    schema: &Schema,
) -> Result<(Vec<usize>, Option<usize>), DataError> {
    let find = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn {
                name: name.to_string(),
            })
    };
    let feature_pos = schema
        .columns
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>, _>>()?;
    let label_pos = match &schema.label_column {
        Some(name) => Some(find(name)?),
        None => None,
    };
    Ok((feature_pos, label_pos))
}

fn map_label(raw: &str, row: usize, schema: &Schema) -> Result<ClassId, DataError> {
    let trimmed = raw.trim();
    if let Some(map) = &schema.label_map {
        if let Some(&c) = map.get(trimmed) {
            return Ok(c);
        }
        if let Some(&c) = map.get("*") {
            return Ok(c);
        }
        return Err(DataError::UnmappedLabel {
            row,
            found: trimmed.to_string(),
        });
    }
    trimmed
        .parse::<usize>()
        .map_err(|_| DataError::UnmappedLabel {
            row,
            found: trimmed.to_string(),
        })
}

fn read_table(
    path: &Path,
    schema: &Schema,
    want_labels: bool,
) -> Result<(Dataset, Option<Vec<ClassId>>), DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let has_header = schema.headerless_order.is_none();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));

    let header: Vec<String> = if let Some(order) = &schema.headerless_order {
        order.clone()
    } else {
        reader
            .headers()
            .map_err(|source| DataError::Csv {
                path: path.display().to_string(),
                source,
            })?
            .iter()
            .map(|h| h.to_string())
            .collect()
    };
    let (feature_pos, label_pos) = resolve_positions(&header, schema)?;
    if want_labels && label_pos.is_none() {
        return Err(DataError::Schema(
            "no label source: schema has no label_column and no predictions file was given".into(),
        ));
    }

    let mut builders: Vec<ColumnBuilder> = schema
        .columns
        .iter()
        .map(|c| ColumnBuilder::new(c.kind))
        .collect();
    let mut labels: Vec<ClassId> = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        for (slot, &pos) in feature_pos.iter().enumerate() {
            let raw = record.get(pos).ok_or_else(|| DataError::MissingValue {
                row,
                column: schema.columns[slot].name.clone(),
            })?;
            builders[slot].push(raw, row, &schema.columns[slot].name)?;
        }
        if want_labels {
            let pos = label_pos.expect("checked above");
            let raw = record.get(pos).ok_or_else(|| DataError::MissingValue {
                row,
                column: schema.label_column.clone().unwrap_or_default(),
            })?;
            labels.push(map_label(raw, row, schema)?);
        }
    }

    let columns: Vec<Column> = builders.into_iter().map(ColumnBuilder::finish).collect();
    let dataset = Dataset::new(schema.clone(), columns)?;
    if dataset.n_rows() == 0 {
        return Err(DataError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok((dataset, want_labels.then_some(labels)))
}

/// Parses the feature columns of a CSV per the schema. Row order is
/// preserved; extra CSV columns are ignored.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    read_table(path, schema, false).map(|(ds, _)| ds)
}

/// Reads a predictions file: one class index per line, aligned with the
/// data rows.
pub fn load_predictions(path: &Path) -> Result<Vec<ClassId>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut labels = Vec::new();
    for (row, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        labels.push(
            trimmed
                .parse::<usize>()
                .map_err(|_| DataError::UnmappedLabel {
                    row,
                    found: trimmed.to_string(),
                })?,
        );
    }
    if labels.is_empty() {
        return Err(DataError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(labels)
}

/// Loads data plus labels. A predictions file takes precedence over the
/// schema's `label_column`; exactly one source must be available.
pub fn load_labeled(
    data_path: &Path,
    schema: &Schema,
    predictions_path: Option<&Path>,
) -> Result<LabeledDataset, DataError> {
    match predictions_path {
        Some(pred) => {
            let dataset = load_csv(data_path, schema)?;
            let labels = load_predictions(pred)?;
            if labels.len() != dataset.n_rows() {
                return Err(DataError::LabelLengthMismatch {
                    labels: labels.len(),
                    rows: dataset.n_rows(),
                });
            }
            LabeledDataset::new(dataset, labels, schema.classes)
        }
        None => {
            let (dataset, labels) = read_table(data_path, schema, true)?;
            LabeledDataset::new(dataset, labels.expect("labels requested"), schema.classes)
        }
    }
}
