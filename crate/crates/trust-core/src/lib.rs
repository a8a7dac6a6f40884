//! Statistical explainer for black-box classifiers on tabular data.
//!
//! The library models the *outputs* of an opaque classifier instead of its
//! internals. Building an explainer core runs four stages over the training
//! table and the classifier's predicted labels:
//!
//! 1. [`data`] — load and validate mixed quantitative/qualitative tables,
//!    then partition rows by predicted class.
//! 2. [`famd`] — per-class factor analysis of mixed data: standardize,
//!    expand categories to weighted indicators, factorize by SVD.
//! 3. [`reps`] — rank factors by mutual information with the predicted
//!    labels and keep the top-k "representatives" with importance weights.
//! 4. [`mmg`] / [`modesearch`] — fit a one-dimensional Gaussian mixture per
//!    representative per class (mode counts chosen by MCC-scored grid
//!    search) and explain new samples as the class with the highest
//!    weighted total log-likelihood.
//!
//! The assembled [`explainer::TrustCore`] is immutable, persistable, and
//! cheap to query: explaining a sample is a handful of projections and
//! log-sum-exp evaluations, so batches parallelize trivially (see the
//! `parallel` feature; disabling it yields a dependency-free sequential
//! build with bit-identical results).

pub mod data;
pub mod explainer;
pub mod famd;
pub mod metrics;
pub mod mmg;
pub mod model;
pub mod modesearch;
pub mod par;
pub mod reps;

pub use data::{ClassId, ClassPartition, Dataset, FeatureKind, LabeledDataset, Schema};
pub use explainer::{build_core, explain_batch, BuildParams, TrustCore};
pub use famd::{FactorModel, FactorScores};
pub use metrics::ConfusionMatrix;
pub use mmg::{Explanation, MmgDensity};
pub use model::{BlackBoxClassifier, ReferenceClassifier};
pub use modesearch::{ModeAssignment, SearchZone};
pub use reps::RepresentativeSet;
