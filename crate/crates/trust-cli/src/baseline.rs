//! Minimal perturbation-based local surrogate, the speed baseline.
//!
//! For one sample: draw feature values from normals centered on the
//! sample, label the perturbations through the black box, weight them by
//! an exponential distance kernel, and fit a weighted linear model whose
//! coefficients are the local importances. Every explained sample repeats
//! the whole procedure, which is exactly why it is slow compared to a
//! prebuilt core — this implementation exists to ground that comparison,
//! not to be a faithful port of any particular tool.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::{Duration, Instant};
use thiserror::Error;
use trust_core::data::{Column, Dataset, FeatureKind, Schema};
use trust_core::model::{BlackBoxClassifier, ModelError};

/// Fewest perturbations that still give a meaningful fit.
pub const MIN_PERTURBATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need at least {MIN_PERTURBATIONS} perturbations, got {0}")]
    TooFewPerturbations(usize),
    #[error("the baseline surrogate handles quantitative columns only")]
    NonQuantitative,
    #[error("sample has {sample} values, schema has {schema} columns")]
    WidthMismatch { sample: usize, schema: usize },
    #[error("black-box probe failed: {0}")]
    Probe(#[from] ModelError),
    #[error("surrogate system is singular")]
    Singular,
}

/// Local linear importances for one sample, plus the wall time spent.
#[derive(Debug, Clone)]
pub struct SurrogateExplanation {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub elapsed: Duration,
}

/// Fits the local surrogate around `sample`. `column_stds` sets the
/// perturbation scale per feature (training-data standard deviations).
/// Costs `n_perturbations` black-box probes per call.
pub fn baseline_local_surrogate(
    model: &dyn BlackBoxClassifier,
    schema: &Schema,
    sample: &[f64],
    column_stds: &[f64],
    n_perturbations: usize,
    seed: u64,
) -> Result<SurrogateExplanation, BaselineError> {
    if n_perturbations < MIN_PERTURBATIONS {
        return Err(BaselineError::TooFewPerturbations(n_perturbations));
    }
    if schema
        .columns
        .iter()
        .any(|c| c.kind != FeatureKind::Quantitative)
    {
        return Err(BaselineError::NonQuantitative);
    }
    let k = schema.width();
    if sample.len() != k || column_stds.len() != k {
        return Err(BaselineError::WidthMismatch {
            sample: sample.len(),
            schema: k,
        });
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();

    // standardized offsets, one row per perturbation
    let mut offsets = DMatrix::<f64>::zeros(n_perturbations, k);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_perturbations); k];
    for row in 0..n_perturbations {
        for j in 0..k {
            let scale = if column_stds[j] > 0.0 {
                column_stds[j]
            } else {
                1.0
            };
            let z: f64 = unit.sample(&mut rng);
            offsets[(row, j)] = z;
            columns[j].push(sample[j] + z * scale);
        }
    }
    let probe = Dataset::new(
        Schema {
            label_column: None,
            ..schema.clone()
        },
        columns.into_iter().map(Column::Quantitative).collect(),
    )
    .map_err(|_| BaselineError::NonQuantitative)?;
    let labels = model.predict(&probe)?;

    // exponential kernel over standardized distance
    let kernel_width = 0.75 * (k as f64).sqrt();
    let mut weights = DVector::<f64>::zeros(n_perturbations);
    for row in 0..n_perturbations {
        let d_sq: f64 = (0..k).map(|j| offsets[(row, j)] * offsets[(row, j)]).sum();
        weights[row] = (-d_sq / (2.0 * kernel_width * kernel_width)).exp();
    }

    // weighted least squares with an intercept column
    let mut design = DMatrix::<f64>::zeros(n_perturbations, k + 1);
    design
        .view_mut((0, 0), (n_perturbations, k))
        .copy_from(&offsets);
    for row in 0..n_perturbations {
        design[(row, k)] = 1.0;
    }
    let y = DVector::from_iterator(n_perturbations, labels.iter().map(|&l| l as f64));

    let wx = DMatrix::from_fn(n_perturbations, k + 1, |r, c| design[(r, c)] * weights[r]);
    let mut normal_matrix = design.transpose() * &wx;
    for d in 0..k + 1 {
        normal_matrix[(d, d)] += 1e-9;
    }
    let rhs = wx.transpose() * y;
    let solution = normal_matrix
        .lu()
        .solve(&rhs)
        .ok_or(BaselineError::Singular)?;

    Ok(SurrogateExplanation {
        coefficients: solution.as_slice()[..k].to_vec(),
        intercept: solution[k],
        elapsed: start.elapsed(),
    })
}
