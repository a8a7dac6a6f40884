//! Build-once / explain-many orchestration.
//!
//! [`build_core`] runs the full pipeline over a labeled training table:
//! partition by predicted class, per-class factor analysis, representative
//! selection, mode search, and density fitting. The result is an immutable
//! [`TrustCore`] that can be persisted, shared across threads, and queried
//! with [`explain_batch`] at a cost of a few dot products and log-sum-exps
//! per sample.

mod persist;
mod report;

pub use persist::{load_core, save_core, PersistError, FORMAT_VERSION};
pub use report::{export_curves, report, CurveClass, CurveExport, ExplanationReport};

use crate::data::{partition_by_label, ClassId, DataError, Dataset, LabeledDataset, Schema};
use crate::famd::{self, FactorModel, FamdError, Projector};
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::mmg::{self, Explanation, MmgDensity, MmgError};
use crate::modesearch::{self, ModeAssignment, ModeSearchError, SearchZone};
use crate::par;
use crate::reps::{self, RepresentativeSet, RepsError, DEFAULT_BINS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("partition stage: {0}")]
    Partition(#[from] DataError),
    #[error("factor-analysis stage, class {class}: {source}")]
    FactorAnalysis { class: ClassId, source: FamdError },
    #[error("representative stage: {0}")]
    Representatives(#[from] RepsError),
    #[error("mode-search stage, representative {rep}: {source}")]
    ModeSearch { rep: usize, source: ModeSearchError },
    #[error("density stage, representative {rep}, class {class}: {source}")]
    Density {
        rep: usize,
        class: ClassId,
        source: MmgError,
    },
    #[error("invalid build parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("sample schema does not match the core: {0}")]
    Schema(String),
    #[error("primary labels: {0}")]
    Labels(#[from] MetricsError),
    #[error("representative index {index} out of range, core has {k}")]
    RepOutOfRange { index: usize, k: usize },
}

/// Everything [`build_core`] decided, echoed for reproducibility.
#[derive(Debug, Clone)]
pub struct BuildMeta {
    pub seed: u64,
    pub bins: usize,
    pub zone: SearchZone,
    pub fast_search: bool,
    pub built_at_unix: u64,
}

/// Tunables for [`build_core`].
#[derive(Debug, Clone)]
pub struct BuildParams {
    /// Number of representatives to keep.
    pub k: usize,
    /// Bin count for the mutual-information ranking.
    pub bins: usize,
    /// Mode-count search zone.
    pub zone: SearchZone,
    pub seed: u64,
    /// Sub-zone search instead of the exhaustive grid (the default).
    pub fast_search: bool,
}

impl BuildParams {
    pub fn new(k: usize, classes: usize) -> Self {
        BuildParams {
            k,
            bins: DEFAULT_BINS,
            zone: SearchZone::default_for(classes),
            seed: 0,
            fast_search: true,
        }
    }
}

/// The persisted explainer: per-class factor models, the representative
/// set, one density per (representative, class), and the build metadata.
/// Immutable after build; explanation never mutates it.
#[derive(Debug, Clone)]
pub struct TrustCore {
    pub schema: Schema,
    pub class_count: usize,
    pub factor_models: Vec<FactorModel>,
    pub reps: RepresentativeSet,
    /// `densities[i][c]`: representative i under class c.
    pub densities: Vec<Vec<MmgDensity>>,
    pub modes: Vec<ModeAssignment>,
    pub meta: BuildMeta,
}

impl TrustCore {
    pub fn k(&self) -> usize {
        self.reps.k()
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the whole build pipeline on a table labeled by the primary model.
/// Deterministic for a fixed seed.
pub fn build_core(ld: &LabeledDataset, params: &BuildParams) -> Result<TrustCore, BuildError> {
    let feature_count = ld.data.width();
    if params.k == 0 || params.k > feature_count {
        return Err(BuildError::Params(format!(
            "k must be in 1..={feature_count}, got {}",
            params.k
        )));
    }
    params
        .zone
        .validate(ld.class_count)
        .map_err(|source| BuildError::ModeSearch { rep: 0, source })?;

    let partition = partition_by_label(ld)?;
    let class_count = partition.class_count();

    // per-class factor analysis (independent inputs, runs in parallel)
    let fitted = par::map_range(class_count, |c| famd::fit_famd(&partition.parts[c], c));
    let mut factor_models = Vec::with_capacity(class_count);
    let mut factor_scores = Vec::with_capacity(class_count);
    for (class, outcome) in fitted.into_iter().enumerate() {
        let (model, scores) =
            outcome.map_err(|source| BuildError::FactorAnalysis { class, source })?;
        factor_models.push(model);
        factor_scores.push(scores);
    }

    // class-blocked labels matching the concatenation order of the scores
    let block_labels: Vec<ClassId> = factor_scores
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.class, s.n_rows()))
        .collect();
    let reps = reps::pick_representatives(&factor_scores, &block_labels, params.k, params.bins)?;

    // mode search per representative (independent, runs in parallel)
    let searches = par::map_slice(&reps.indices, |&factor_index| {
        let values_per_class: Vec<&[f64]> = factor_scores
            .iter()
            .map(|s| s.factor(factor_index))
            .collect();
        if params.fast_search {
            modesearch::fast_grid_select(&values_per_class, &params.zone, params.seed)
        } else {
            modesearch::grid_mode_select(&values_per_class, &params.zone, params.seed)
        }
    });
    let mut modes = Vec::with_capacity(params.k);
    for (rep, outcome) in searches.into_iter().enumerate() {
        modes.push(outcome.map_err(|source| BuildError::ModeSearch { rep, source })?);
    }

    // final density fits with the selected mode counts
    let slots: Vec<(usize, ClassId)> = (0..params.k)
        .flat_map(|i| (0..class_count).map(move |c| (i, c)))
        .collect();
    let fits = par::map_slice(&slots, |&(i, c)| {
        let values = factor_scores[c].factor(reps.indices[i]);
        mmg::em_fit(values, modes[i].modes[c], params.seed).map(|d| d.positioned(i, c))
    });
    let mut densities: Vec<Vec<MmgDensity>> = vec![Vec::with_capacity(class_count); params.k];
    for (&(i, c), fit) in slots.iter().zip(fits) {
        densities[i].push(fit.map_err(|source| BuildError::Density {
            rep: i,
            class: c,
            source,
        })?);
    }

    Ok(TrustCore {
        schema: ld.data.schema().clone(),
        class_count,
        factor_models,
        reps,
        densities,
        modes,
        meta: BuildMeta {
            seed: params.seed,
            bins: params.bins,
            zone: params.zone.clone(),
            fast_search: params.fast_search,
            built_at_unix: unix_now(),
        },
    })
}

/// Output of [`explain_batch`]: per-sample explanations plus, when the
/// primary model's labels were provided, the fidelity confusion matrix
/// (reference = primary labels, assigned = explainer labels).
#[derive(Debug)]
pub struct BatchOutcome {
    pub explanations: Vec<Explanation>,
    pub fidelity: Option<ConfusionMatrix>,
}

/// Explains every sample in order. Each class projects a sample with its
/// own factor basis before its densities are evaluated; the label is the
/// weighted-total argmax.
pub fn explain_batch(
    core: &TrustCore,
    samples: &Dataset,
    primary_labels: Option<&[ClassId]>,
) -> Result<BatchOutcome, ExplainError> {
    if !core.schema.features_match(samples.schema()) {
        return Err(ExplainError::Schema(
            "feature columns differ from the core's schema".into(),
        ));
    }
    if let Some(labels) = primary_labels {
        if labels.len() != samples.n_rows() {
            return Err(ExplainError::Labels(MetricsError::LengthMismatch {
                reference: labels.len(),
                assigned: samples.n_rows(),
            }));
        }
    }
    if samples.n_rows() == 0 {
        return Ok(BatchOutcome {
            explanations: Vec::new(),
            fidelity: None,
        });
    }

    let projectors = core
        .factor_models
        .iter()
        .map(|m| Projector::new(m, samples))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExplainError::Schema(e.to_string()))?;

    let explanations: Vec<Explanation> = par::map_range(samples.n_rows(), |row| {
        let mut projected = Vec::with_capacity(core.class_count);
        let mut unseen: Vec<(String, String)> = Vec::new();
        for projector in &projectors {
            let projection = projector.project_onto(row, &core.reps.indices);
            for warn in projection.unseen {
                if !unseen.contains(&warn) {
                    unseen.push(warn);
                }
            }
            projected.push(projection.scores);
        }
        mmg::explain(
            &core.densities,
            &core.reps.normalized_weights,
            projected,
            unseen,
        )
    });

    let fidelity = match primary_labels {
        Some(labels) => {
            let assigned: Vec<ClassId> = explanations.iter().map(|e| e.label).collect();
            Some(ConfusionMatrix::from_labels(
                labels,
                &assigned,
                core.class_count,
            )?)
        }
        None => None,
    };
    Ok(BatchOutcome {
        explanations,
        fidelity,
    })
}
