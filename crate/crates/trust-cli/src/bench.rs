//! Timing harness: explain-time scaling over batch size, full vs fast
//! mode-search comparison, and core-based explanation vs the perturbation
//! baseline. Wall times come from the monotonic clock; absolute numbers
//! are environment-bound, so consumers should read ratios and shapes, not
//! seconds.

use crate::baseline::{baseline_local_surrogate, BaselineError};
use crate::synth::{generate_synthetic, SynthError, SynthSpec};
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;
use trust_core::data::{Column, Dataset, LabeledDataset};
use trust_core::explainer::{build_core, explain_batch, BuildError, ExplainError, TrustCore};
use trust_core::model::{
    fit_reference, BlackBoxClassifier, ModelError, ReferenceClassifier, TrainConfig,
};
use trust_core::modesearch::{fast_grid_select, grid_mode_select, ModeSearchError, SearchZone};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ModeSearch(#[from] ModeSearchError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// One timed stage. Records append to `timings.jsonl`, one object per line.
#[derive(Debug, Clone, Serialize)]
pub struct TimingRecord {
    pub stage: String,
    pub n: usize,
    pub k: usize,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<u64>,
    pub workers: usize,
}

/// Smallest wall time over `repeats` runs. Scheduler and allocator noise
/// is strictly additive for CPU-bound work, so the minimum is the
/// cleanest estimate of the operation's cost.
fn time_min<F: FnMut()>(repeats: usize, mut f: F) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Coefficient of determination of the least-squares line through
/// (x, y); 1.0 means perfectly linear.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    1.0 - ss_res / syy
}

/// Builds a core on a separable synthetic training set and returns it with
/// the trained reference model (the "primary AI" of the harness).
pub fn harness_fixture(
    train_rows: usize,
    noise_columns: usize,
    k: usize,
    seed: u64,
) -> Result<(TrustCore, ReferenceClassifier, LabeledDataset), BenchError> {
    let spec = SynthSpec::separable(train_rows, noise_columns, seed);
    let ground_truth = generate_synthetic(&spec)?;
    let reference = fit_reference(&ground_truth, &TrainConfig::default())?;
    let predicted = reference.predict(&ground_truth.data)?;
    let labeled = LabeledDataset::new(ground_truth.data.clone(), predicted, Some(2))
        .map_err(SynthError::Data)?;
    let params = trust_core::explainer::BuildParams {
        seed,
        zone: SearchZone::uniform(2, 1, 4, 2),
        ..trust_core::explainer::BuildParams::new(k, 2)
    };
    let core = build_core(&labeled, &params)?;
    Ok((core, reference, labeled))
}

/// Times `explain_batch` over synthetic batches of each requested size.
pub fn explain_scaling(
    core: &TrustCore,
    noise_columns: usize,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<TimingRecord>, BenchError> {
    let mut records = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let spec = SynthSpec::separable(n, noise_columns, seed.wrapping_add(i as u64 + 1));
        let batch = generate_synthetic(&spec)?;
        // warm-up outside the clock
        explain_batch(core, &batch.data, None)?;
        let wall = time_min(repeats, || {
            explain_batch(core, &batch.data, None).expect("warm-up succeeded");
        });
        records.push(TimingRecord {
            stage: "explain".into(),
            n,
            k: core.k(),
            wall_seconds: wall,
            evaluations: None,
            workers,
        });
    }
    Ok(records)
}

/// Times the exhaustive and the sub-zone mode search on one synthetic
/// bimodal-vs-unimodal representative problem.
pub fn mode_search_comparison(
    n_per_class: usize,
    zone: &SearchZone,
    seed: u64,
    workers: usize,
) -> Result<(TimingRecord, TimingRecord), BenchError> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lo = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let hi = rand_distr::Normal::new(10.0, 1.0).unwrap();
    let mid = rand_distr::Normal::new(5.0, 1.0).unwrap();
    let mut a: Vec<f64> = (0..n_per_class / 2).map(|_| lo.sample(&mut rng)).collect();
    a.extend((0..n_per_class - n_per_class / 2).map(|_| hi.sample(&mut rng)));
    let b: Vec<f64> = (0..n_per_class).map(|_| mid.sample(&mut rng)).collect();
    let values: Vec<&[f64]> = vec![&a, &b];

    let start = Instant::now();
    let full = grid_mode_select(&values, zone, seed)?;
    let full_record = TimingRecord {
        stage: "mode_search_full".into(),
        n: 2 * n_per_class,
        k: 1,
        wall_seconds: start.elapsed().as_secs_f64(),
        evaluations: Some(full.evaluations as u64),
        workers,
    };

    let start = Instant::now();
    let fast = fast_grid_select(&values, zone, seed)?;
    let fast_record = TimingRecord {
        stage: "mode_search_fast".into(),
        n: 2 * n_per_class,
        k: 1,
        wall_seconds: start.elapsed().as_secs_f64(),
        evaluations: Some(fast.evaluations as u64),
        workers,
    };
    Ok((full_record, fast_record))
}

/// Times explaining `n_samples` through the core versus running the
/// perturbation surrogate on every one of them.
pub fn baseline_comparison(
    core: &TrustCore,
    reference: &ReferenceClassifier,
    samples: &Dataset,
    n_perturbations: usize,
    seed: u64,
    workers: usize,
) -> Result<(TimingRecord, TimingRecord), BenchError> {
    let n = samples.n_rows();

    explain_batch(core, samples, None)?; // warm-up
    let start = Instant::now();
    explain_batch(core, samples, None)?;
    let core_record = TimingRecord {
        stage: "explain_core".into(),
        n,
        k: core.k(),
        wall_seconds: start.elapsed().as_secs_f64(),
        evaluations: None,
        workers,
    };

    let stds: Vec<f64> = samples
        .columns()
        .iter()
        .map(|col| match col {
            Column::Quantitative(v) => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64).sqrt()
            }
            Column::Qualitative { .. } => 1.0,
        })
        .collect();
    let width = samples.width();
    let start = Instant::now();
    for row in 0..n {
        let view = samples.row(row);
        let mut cells = Vec::with_capacity(width);
        for j in 0..width {
            match view.cell(j) {
                trust_core::data::CellRef::Quant(v) => cells.push(v),
                trust_core::data::CellRef::Token(_) => {
                    return Err(BaselineError::NonQuantitative.into())
                }
            }
        }
        baseline_local_surrogate(
            reference,
            samples.schema(),
            &cells,
            &stds,
            n_perturbations,
            seed.wrapping_add(row as u64),
        )?;
    }
    let baseline_record = TimingRecord {
        stage: "explain_baseline".into(),
        n,
        k: core.k(),
        wall_seconds: start.elapsed().as_secs_f64(),
        evaluations: Some((n * n_perturbations) as u64),
        workers,
    };
    Ok((core_record, baseline_record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_of_a_line_is_one() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_penalizes_scatter() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [5.0, 1.0, 6.0, 0.5, 5.5, 1.5];
        assert!(r_squared(&xs, &ys) < 0.5);
    }

    #[test]
    fn scaling_produces_one_record_per_size() {
        let (core, _, _) = harness_fixture(2_000, 2, 2, 0).unwrap();
        let records = explain_scaling(&core, 2, &[500, 1_000, 2_000], 1, 0, 1).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.wall_seconds >= 0.0));
        assert_eq!(records[0].n, 500);
        assert_eq!(records[2].n, 2_000);
    }

    #[test]
    fn mode_search_records_carry_evaluation_counts() {
        let zone = SearchZone::uniform(2, 1, 6, 3);
        let (full, fast) = mode_search_comparison(600, &zone, 1, 1).unwrap();
        assert_eq!(full.evaluations, Some(36));
        assert_eq!(fast.evaluations, Some(4 + 9));
        assert!(fast.evaluations < full.evaluations);
    }
}
