//! The black-box classifier contract and a built-in reference learner.
//!
//! The explainer never inspects a classifier: all it may do is feed a
//! dataset in and read class indices out, which is exactly the
//! [`BlackBoxClassifier`] trait. Real deployments usually bring labels
//! from somewhere else entirely — [`FilePredictions`] adapts a
//! predictions file to the same contract.
//!
//! [`ReferenceClassifier`] is a softmax regression trained by full-batch
//! gradient descent with step halving. It exists so the test suites have
//! a deterministic primary model to explain; it standardizes quantitative
//! features and one-hot expands qualitative ones internally.

use crate::data::{ClassId, Column, Dataset, LabeledDataset};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset schema does not match the model: {0}")]
    SchemaMismatch(String),
    #[error("training set must contain at least 2 classes")]
    SingleClass,
    #[error("predictions file has {predictions} rows, dataset has {rows}")]
    RowCountMismatch { predictions: usize, rows: usize },
    #[error("prediction {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Anything that can label a dataset. The explainer compiles against this
/// trait alone; no weights, gradients, or scores are ever visible.
pub trait BlackBoxClassifier {
    fn class_count(&self) -> usize;
    fn predict(&self, data: &Dataset) -> Result<Vec<ClassId>, ModelError>;
}

/// Labels a dataset through the black-box contract.
pub fn predict(model: &dyn BlackBoxClassifier, data: &Dataset) -> Result<Vec<ClassId>, ModelError> {
    model.predict(data)
}

/// Externally supplied predictions, one class index per data row.
#[derive(Debug, Clone)]
pub struct FilePredictions {
    labels: Vec<ClassId>,
    classes: usize,
}

impl FilePredictions {
    pub fn new(labels: Vec<ClassId>, classes: usize) -> Result<Self, ModelError> {
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
        Ok(FilePredictions { labels, classes })
    }
}

impl BlackBoxClassifier for FilePredictions {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn predict(&self, data: &Dataset) -> Result<Vec<ClassId>, ModelError> {
        if data.n_rows() != self.labels.len() {
            return Err(ModelError::RowCountMismatch {
                predictions: self.labels.len(),
                rows: data.n_rows(),
            });
        }
        Ok(self.labels.clone())
    }
}

/// Training knobs for the reference learner.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum FeatureMap {
    Quant { mean: f64, std: f64 },
    OneHot { levels: Vec<String> },
}

/// Multinomial logistic regression over standardized/one-hot features.
#[derive(Debug, Clone)]
pub struct ReferenceClassifier {
    feature_maps: Vec<FeatureMap>,
    /// (expanded features + bias) x classes.
    weights: DMatrix<f64>,
    classes: usize,
    loss_trace: Vec<f64>,
}

impl ReferenceClassifier {
    /// Cross-entropy after each epoch; non-increasing by construction.
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    fn expanded_width(&self) -> usize {
        self.weights.nrows() - 1
    }

    /// Expands a dataset into the design matrix (bias column last).
    fn design_matrix(&self, data: &Dataset) -> Result<DMatrix<f64>, ModelError> {
        if data.width() != self.feature_maps.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "{} columns, model expects {}",
                data.width(),
                self.feature_maps.len()
            )));
        }
        let n = data.n_rows();
        let p = self.expanded_width();
        let mut x = DMatrix::<f64>::zeros(n, p + 1);
        let mut at = 0;
        for (j, map) in self.feature_maps.iter().enumerate() {
            match (map, data.column(j)) {
                (FeatureMap::Quant { mean, std }, Column::Quantitative(v)) => {
                    if *std > 0.0 {
                        for (row, &value) in v.iter().enumerate() {
                            x[(row, at)] = (value - mean) / std;
                        }
                    }
                    at += 1;
                }
                (
                    FeatureMap::OneHot { levels },
                    Column::Qualitative {
                        codes,
                        levels: ds_levels,
                    },
                ) => {
                    let slot_of: Vec<Option<usize>> = ds_levels
                        .iter()
                        .map(|token| levels.iter().position(|l| l == token))
                        .collect();
                    for (row, &code) in codes.iter().enumerate() {
                        // unseen levels stay all-zero
                        if let Some(slot) = slot_of[code as usize] {
                            x[(row, at + slot)] = 1.0;
                        }
                    }
                    at += levels.len();
                }
                _ => {
                    return Err(ModelError::SchemaMismatch(format!(
                        "column {} kind differs from training",
                        data.schema().columns[j].name
                    )))
                }
            }
        }
        for row in 0..n {
            x[(row, p)] = 1.0;
        }
        Ok(x)
    }

    fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.weights
    }
}

impl BlackBoxClassifier for ReferenceClassifier {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn predict(&self, data: &Dataset) -> Result<Vec<ClassId>, ModelError> {
        if data.n_rows() == 0 {
            return Ok(Vec::new());
        }
        let x = self.design_matrix(data)?;
        let scores = self.scores(&x);
        Ok((0..scores.nrows())
            .map(|row| {
                let mut best = 0;
                for c in 1..self.classes {
                    if scores[(row, c)] > scores[(row, best)] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, if var > 0.0 { var.sqrt() } else { 0.0 })
}

/// Mean cross-entropy and gradient of the softmax regression at `w`.
fn loss_and_gradient(
    x: &DMatrix<f64>,
    labels: &[ClassId],
    classes: usize,
    w: &DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    let n = x.nrows();
    let scores = x * w;
    let mut loss = 0.0;
    // residual = softmax(scores) - onehot(labels)
    let mut residual = DMatrix::<f64>::zeros(n, classes);
    for row in 0..n {
        let mut max = f64::NEG_INFINITY;
        for c in 0..classes {
            max = max.max(scores[(row, c)]);
        }
        let mut z = 0.0;
        for c in 0..classes {
            z += (scores[(row, c)] - max).exp();
        }
        let log_z = max + z.ln();
        loss -= scores[(row, labels[row])] - log_z;
        for c in 0..classes {
            let p = (scores[(row, c)] - log_z).exp();
            residual[(row, c)] = p - if c == labels[row] { 1.0 } else { 0.0 };
        }
    }
    let grad = x.transpose() * residual / n as f64;
    (loss / n as f64, grad)
}

/// Trains the reference learner. Gradient descent halves the step whenever
/// a move would increase the loss, so the per-epoch loss trace is
/// non-increasing and training is deterministic (the seed is recorded for
/// config echoing; the optimizer itself draws nothing).
pub fn fit_reference(
    train: &LabeledDataset,
    config: &TrainConfig,
) -> Result<ReferenceClassifier, ModelError> {
    let classes = train.class_count;
    let mut distinct = vec![false; classes];
    for &l in &train.labels {
        distinct[l] = true;
    }
    if distinct.iter().filter(|&&d| d).count() < 2 {
        return Err(ModelError::SingleClass);
    }

    let feature_maps: Vec<FeatureMap> = train
        .data
        .columns()
        .iter()
        .map(|col| match col {
            Column::Quantitative(v) => {
                let (mean, std) = mean_and_std(v);
                FeatureMap::Quant { mean, std }
            }
            Column::Qualitative { codes, levels } => {
                let mut seen = vec![false; levels.len()];
                for &c in codes {
                    seen[c as usize] = true;
                }
                FeatureMap::OneHot {
                    levels: levels
                        .iter()
                        .zip(&seen)
                        .filter(|(_, &s)| s)
                        .map(|(l, _)| l.clone())
                        .collect(),
                }
            }
        })
        .collect();

    let expanded: usize = feature_maps
        .iter()
        .map(|m| match m {
            FeatureMap::Quant { .. } => 1,
            FeatureMap::OneHot { levels } => levels.len(),
        })
        .sum();

    let mut model = ReferenceClassifier {
        feature_maps,
        weights: DMatrix::zeros(expanded + 1, classes),
        classes,
        loss_trace: Vec::new(),
    };
    let x = model.design_matrix(&train.data)?;

    let mut lr = config.learning_rate;
    let (mut loss, mut grad) = loss_and_gradient(&x, &train.labels, classes, &model.weights);
    model.loss_trace.push(loss);
    for _ in 0..config.epochs {
        let mut stepped = false;
        while lr > 1e-12 {
            let candidate = &model.weights - &grad * lr;
            let (new_loss, new_grad) = loss_and_gradient(&x, &train.labels, classes, &candidate);
            if new_loss <= loss + 1e-12 {
                model.weights = candidate;
                loss = new_loss;
                grad = new_grad;
                stepped = true;
                break;
            }
            lr *= 0.5;
        }
        if !stepped {
            break;
        }
        model.loss_trace.push(loss);
    }
    Ok(model)
}
