//! Synthetic labeled-data generation from a mixture spec.
//!
//! The spec is JSON in the same style as the schema sidecar: per-class
//! Gaussian mixtures for informative columns, per-class category
//! probabilities for qualitative columns, and shared Gaussian noise
//! columns. Generation is fully deterministic for a fixed seed, down to
//! the written CSV bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;
use trust_core::data::{ClassId, Column, ColumnSpec, Dataset, FeatureKind, LabeledDataset, Schema};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    BadSpec(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset assembly: {0}")]
    Data(#[from] trust_core::data::DataError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// One generated column. Exactly one of `mixtures`, `categories`, `noise`
/// must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthColumn {
    pub name: String,
    /// Per-class Gaussian mixture (outer index = class).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixtures: Option<Vec<Vec<MixtureComponent>>>,
    /// Per-class category probabilities (outer index = class).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<BTreeMap<String, f64>>>,
    /// Class-independent Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<MixtureComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub seed: u64,
    /// Relative class weights; length = class count.
    pub class_weights: Vec<f64>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    pub columns: Vec<SynthColumn>,
}

fn default_label_column() -> String {
    "class".into()
}

fn not_positive(value: f64) -> bool {
    value.is_nan() || value <= 0.0
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SynthSpec =
            serde_json::from_str(text).map_err(|e| SynthError::BadSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn class_count(&self) -> usize {
        self.class_weights.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let classes = self.class_count();
        if classes < 2 {
            return Err(SynthError::BadSpec("need at least 2 classes".into()));
        }
        if self.rows < 2 * classes {
            return Err(SynthError::BadSpec(format!(
                "need at least {} rows for {classes} classes",
                2 * classes
            )));
        }
        if self.class_weights.iter().copied().any(not_positive) {
            return Err(SynthError::BadSpec("class weights must be positive".into()));
        }
        if self.columns.is_empty() {
            return Err(SynthError::BadSpec("no columns declared".into()));
        }
        for col in &self.columns {
            let variants = [
                col.mixtures.is_some(),
                col.categories.is_some(),
                col.noise.is_some(),
            ]
            .iter()
            .filter(|&&v| v)
            .count();
            if variants != 1 {
                return Err(SynthError::BadSpec(format!(
                    "column {:?} must declare exactly one of mixtures/categories/noise",
                    col.name
                )));
            }
            if let Some(mixtures) = &col.mixtures {
                if mixtures.len() != classes {
                    return Err(SynthError::BadSpec(format!(
                        "column {:?} declares {} mixtures for {classes} classes",
                        col.name,
                        mixtures.len()
                    )));
                }
                for mix in mixtures {
                    if mix.is_empty() {
                        return Err(SynthError::BadSpec(format!(
                            "column {:?} has an empty mixture",
                            col.name
                        )));
                    }
                    if mix
                        .iter()
                        .any(|c| not_positive(c.weight) || not_positive(c.std))
                    {
                        return Err(SynthError::BadSpec(format!(
                            "column {:?} has a non-positive weight or std",
                            col.name
                        )));
                    }
                }
            }
            if let Some(categories) = &col.categories {
                if categories.len() != classes {
                    return Err(SynthError::BadSpec(format!(
                        "column {:?} declares {} category tables for {classes} classes",
                        col.name,
                        categories.len()
                    )));
                }
                for table in categories {
                    if table.is_empty() || table.values().copied().any(not_positive) {
                        return Err(SynthError::BadSpec(format!(
                            "column {:?} has an empty or non-positive category table",
                            col.name
                        )));
                    }
                }
            }
            if let Some(noise) = &col.noise {
                if not_positive(noise.std) {
                    return Err(SynthError::BadSpec(format!(
                        "column {:?} noise std must be positive",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Schema sidecar describing the generated CSV.
    pub fn schema(&self) -> Schema {
        let columns = self
            .columns
            .iter()
            .map(|col| ColumnSpec {
                name: col.name.clone(),
                kind: if col.categories.is_some() {
                    FeatureKind::Qualitative
                } else {
                    FeatureKind::Quantitative
                },
            })
            .collect();
        Schema {
            columns,
            label_column: Some(self.label_column.clone()),
            label_map: None,
            classes: Some(self.class_count()),
            headerless_order: None,
        }
    }

    /// The canonical separable two-class suite: two informative columns
    /// ten and eight sigma apart plus `noise_columns` of pure noise.
    pub fn separable(rows: usize, noise_columns: usize, seed: u64) -> Self {
        let unit = |mean: f64| MixtureComponent {
            weight: 1.0,
            mean,
            std: 1.0,
        };
        let mut columns = vec![
            SynthColumn {
                name: "sig_a".into(),
                mixtures: Some(vec![vec![unit(0.0)], vec![unit(10.0)]]),
                categories: None,
                noise: None,
            },
            SynthColumn {
                name: "sig_b".into(),
                mixtures: Some(vec![vec![unit(0.0)], vec![unit(8.0)]]),
                categories: None,
                noise: None,
            },
        ];
        for i in 0..noise_columns {
            columns.push(SynthColumn {
                name: format!("noise_{i}"),
                mixtures: None,
                categories: None,
                noise: Some(unit(0.0)),
            });
        }
        SynthSpec {
            rows,
            seed,
            class_weights: vec![0.5, 0.5],
            label_column: "class".into(),
            columns,
        }
    }
}

fn sample_mixture(mix: &[MixtureComponent], rng: &mut ChaCha8Rng) -> f64 {
    let total: f64 = mix.iter().map(|c| c.weight).sum();
    let mut pick = rng.random::<f64>() * total;
    let mut chosen = &mix[mix.len() - 1];
    for c in mix {
        if pick < c.weight {
            chosen = c;
            break;
        }
        pick -= c.weight;
    }
    Normal::new(chosen.mean, chosen.std).unwrap().sample(rng)
}

fn sample_category<'a>(table: &'a BTreeMap<String, f64>, rng: &mut ChaCha8Rng) -> &'a str {
    let total: f64 = table.values().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut chosen = table.keys().next_back().expect("non-empty table");
    for (token, &p) in table {
        if pick < p {
            chosen = token;
            break;
        }
        pick -= p;
    }
    chosen
}

/// Generates the labeled dataset described by the spec. Class sizes follow
/// the weights by largest remainder; row order is a seeded shuffle.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<LabeledDataset, SynthError> {
    spec.validate()?;
    let classes = spec.class_count();
    let weight_total: f64 = spec.class_weights.iter().sum();

    let quotas: Vec<f64> = spec
        .class_weights
        .iter()
        .map(|w| spec.rows as f64 * w / weight_total)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    // every class needs at least 2 rows for downstream fitting
    for c in counts.iter_mut() {
        *c = (*c).max(2);
    }
    while counts.iter().sum::<usize>() > spec.rows {
        let max = counts
            .iter()
            .enumerate()
            .max_by_key(|&(_, &c)| c)
            .map(|(i, _)| i)
            .unwrap();
        counts[max] -= 1;
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut leftover = spec.rows - counts.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[c] += 1;
        leftover -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<ClassId> = (0..classes)
        .flat_map(|c| std::iter::repeat_n(c, counts[c]))
        .collect();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);

    let mut columns: Vec<Column> = Vec::with_capacity(spec.columns.len());
    for col in &spec.columns {
        if let Some(mixtures) = &col.mixtures {
            columns.push(Column::Quantitative(
                labels
                    .iter()
                    .map(|&c| sample_mixture(&mixtures[c], &mut rng))
                    .collect(),
            ));
        } else if let Some(categories) = &col.categories {
            let mut levels: Vec<String> = Vec::new();
            let codes = labels
                .iter()
                .map(|&c| {
                    let token = sample_category(&categories[c], &mut rng);
                    match levels.iter().position(|l| l == token) {
                        Some(p) => p as u32,
                        None => {
                            levels.push(token.to_string());
                            (levels.len() - 1) as u32
                        }
                    }
                })
                .collect();
            columns.push(Column::Qualitative { codes, levels });
        } else if let Some(noise) = &col.noise {
            let normal = Normal::new(noise.mean, noise.std).unwrap();
            columns.push(Column::Quantitative(
                (0..labels.len()).map(|_| normal.sample(&mut rng)).collect(),
            ));
        }
    }

    // the in-memory dataset holds features only; the label column exists
    // just in the written CSV
    let schema = Schema {
        label_column: None,
        ..spec.schema()
    };
    let data = Dataset::new(schema, columns)?;
    Ok(LabeledDataset::new(data, labels, Some(classes))?)
}

/// Writes the labeled CSV (features plus the label column, header first).
pub fn write_csv(ld: &LabeledDataset, label_column: &str, path: &Path) -> Result<(), SynthError> {
    fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SynthError + '_ {
        move |source| SynthError::Io {
            path: path.display().to_string(),
            source,
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);

    let names: Vec<&str> = ld
        .data
        .schema()
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    writeln!(file, "{},{}", names.join(","), label_column).map_err(io_err(path))?;
    for row in 0..ld.n_rows() {
        let view = ld.data.row(row);
        let mut cells = Vec::with_capacity(names.len() + 1);
        for col in 0..names.len() {
            cells.push(match view.cell(col) {
                trust_core::data::CellRef::Quant(v) => format!("{v}"),
                trust_core::data::CellRef::Token(t) => t.to_string(),
            });
        }
        cells.push(ld.labels[row].to_string());
        writeln!(file, "{}", cells.join(",")).map_err(io_err(path))?;
    }
    Ok(())
}
