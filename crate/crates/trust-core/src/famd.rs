//! Per-class factor analysis of mixed data.
//!
//! Fitting standardizes quantitative columns to zero mean and unit sample
//! variance, expands each qualitative column into proportion-weighted
//! indicator columns, and factorizes the resulting matrix by SVD. The
//! right singular vectors are the factor directions and eigenvalues are
//! the squared singular values scaled by 1/(N-1).
//!
//! Reported factor scores live in the class's *scale-only* frame: the
//! standardized projection (variance = eigenvalue) plus the projection of
//! the class center, i.e. the data divided by its standard deviations but
//! not centered. Centering the scores per class would erase the location
//! differences between classes, and those differences are exactly what
//! the downstream information ranking and per-class densities feed on.
//! The projection map is affine, so mixing samples mixes scores.
//!
//! Each qualitative indicator block is rescaled so every original column
//! contributes exactly one unit of total inertia. That keeps quantitative
//! and qualitative columns on the same footing and ties the eigenvalue sum
//! to the trace of the pairwise relation matrix, which is built alongside
//! the factorization as a fitted diagnostic (squared Pearson correlation,
//! squared Cramér's V, or squared correlation ratio per pair).
//!
//! Factor models are fitted separately per class and factor index i is
//! aligned across classes by eigenvalue rank only — the loading bases
//! themselves differ per class. Consumers therefore project a new sample
//! once per class, with that class's model, when evaluating that class's
//! likelihood.
//!
//! Fitted models are immutable; projection is pure and safe to call
//! concurrently.

use crate::data::{CellRef, ClassId, Column, Dataset, FeatureKind};
use crate::par;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FamdError {
    #[error("need at least {needed} rows to fit {factors} factors, got {rows}")]
    TooFewRows {
        rows: usize,
        needed: usize,
        factors: usize,
    },
    #[error("every column is constant; factor analysis is undefined")]
    DegenerateInput,
    #[error("singular value decomposition did not converge")]
    Factorization,
    #[error("sample does not conform to the fitted schema: {0}")]
    SampleMismatch(String),
}

/// Which association measure filled a relation-matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocKind {
    PearsonSq,
    ChiSq,
    CorrRatioSq,
}

/// Borrowed column content for association measurement.
#[derive(Clone, Copy)]
pub enum ColumnSlice<'a> {
    Quant(&'a [f64]),
    Qual {
        codes: &'a [u32],
        level_count: usize,
    },
}

impl<'a> ColumnSlice<'a> {
    pub fn from_column(col: &'a Column) -> Self {
        match col {
            Column::Quantitative(v) => ColumnSlice::Quant(v),
            Column::Qualitative { codes, levels } => ColumnSlice::Qual {
                codes,
                level_count: levels.len(),
            },
        }
    }

    fn len(&self) -> usize {
        match self {
            ColumnSlice::Quant(v) => v.len(),
            ColumnSlice::Qual { codes, .. } => codes.len(),
        }
    }
}

/// Pairwise association strength in [0, 1], symmetric in its arguments.
///
/// Both quantitative: squared Pearson correlation. Both qualitative: chi
/// square rescaled to squared Cramér's V so all kinds share one scale.
/// Mixed: squared correlation ratio. Zero-variance columns (constant
/// numeric data or a single category) associate to 0 with everything,
/// themselves included.
pub fn association(a: ColumnSlice, b: ColumnSlice) -> f64 {
    assert_eq!(a.len(), b.len(), "association needs equal-length columns");
    assert!(a.len() >= 2, "association needs at least 2 observations");
    match (a, b) {
        (ColumnSlice::Quant(x), ColumnSlice::Quant(y)) => pearson_sq(x, y),
        (
            ColumnSlice::Qual {
                codes: x,
                level_count: lx,
            },
            ColumnSlice::Qual {
                codes: y,
                level_count: ly,
            },
        ) => cramers_v_sq(x, lx, y, ly),
        (ColumnSlice::Quant(x), ColumnSlice::Qual { codes, level_count })
        | (ColumnSlice::Qual { codes, level_count }, ColumnSlice::Quant(x)) => {
            corr_ratio_sq(codes, level_count, x)
        }
    }
}

/// Tag for `association` on a pair of kinds.
pub fn assoc_kind(a: FeatureKind, b: FeatureKind) -> AssocKind {
    match (a, b) {
        (FeatureKind::Quantitative, FeatureKind::Quantitative) => AssocKind::PearsonSq,
        (FeatureKind::Qualitative, FeatureKind::Qualitative) => AssocKind::ChiSq,
        _ => AssocKind::CorrRatioSq,
    }
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn pearson_sq(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean_of(x), mean_of(y));
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

fn level_counts(codes: &[u32], level_count: usize) -> Vec<usize> {
    let mut counts = vec![0usize; level_count];
    for &c in codes {
        counts[c as usize] += 1;
    }
    counts
}

fn cramers_v_sq(x: &[u32], lx: usize, y: &[u32], ly: usize) -> f64 {
    let n = x.len();
    let row_counts = level_counts(x, lx);
    let col_counts = level_counts(y, ly);
    let occupied_rows = row_counts.iter().filter(|&&c| c > 0).count();
    let occupied_cols = col_counts.iter().filter(|&&c| c > 0).count();
    let dof = occupied_rows.min(occupied_cols).saturating_sub(1);
    if dof == 0 {
        return 0.0;
    }
    let mut joint = vec![0usize; lx * ly];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize * ly + b as usize] += 1;
    }
    // chi^2 = N * (sum o^2 / (r c) - 1), with expected counts e = r c / N
    let mut ratio_sum = 0.0;
    for a in 0..lx {
        if row_counts[a] == 0 {
            continue;
        }
        for b in 0..ly {
            let o = joint[a * ly + b];
            if o == 0 || col_counts[b] == 0 {
                continue;
            }
            ratio_sum += (o * o) as f64 / (row_counts[a] as f64 * col_counts[b] as f64);
        }
    }
    let chi_sq = n as f64 * (ratio_sum - 1.0);
    (chi_sq / (n as f64 * dof as f64)).max(0.0)
}

fn corr_ratio_sq(codes: &[u32], level_count: usize, y: &[f64]) -> f64 {
    let counts = level_counts(codes, level_count);
    let grand_mean = mean_of(y);
    let mut group_sums = vec![0.0; level_count];
    for (&c, &v) in codes.iter().zip(y) {
        group_sums[c as usize] += v;
    }
    let mut ss_total = 0.0;
    for &v in y {
        ss_total += (v - grand_mean) * (v - grand_mean);
    }
    if ss_total <= 0.0 {
        return 0.0;
    }
    let mut ss_between = 0.0;
    for (l, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let gm = group_sums[l] / count as f64;
        ss_between += count as f64 * (gm - grand_mean) * (gm - grand_mean);
    }
    (ss_between / ss_total).clamp(0.0, 1.0)
}

/// K x K symmetric matrix of pairwise associations with per-entry kind tags.
#[derive(Debug, Clone)]
pub struct RelationMatrix {
    k: usize,
    values: Vec<f64>,
    kinds: Vec<AssocKind>,
}

impl RelationMatrix {
    pub fn from_dataset(part: &Dataset) -> Self {
        let k = part.width();
        let slices: Vec<ColumnSlice> = part
            .columns()
            .iter()
            .map(ColumnSlice::from_column)
            .collect();
        let kinds_by_col: Vec<FeatureKind> = part.schema().columns.iter().map(|c| c.kind).collect();
        // upper triangle (including diagonal), mirrored afterwards
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
        let computed = par::map_slice(&pairs, |&(i, j)| association(slices[i], slices[j]));
        let mut values = vec![0.0; k * k];
        let mut kinds = vec![AssocKind::PearsonSq; k * k];
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let v = computed[idx];
            let kind = assoc_kind(kinds_by_col[i], kinds_by_col[j]);
            values[i * k + j] = v;
            values[j * k + i] = v;
            kinds[i * k + j] = kind;
            kinds[j * k + i] = kind;
        }
        RelationMatrix { k, values, kinds }
    }

    pub fn from_raw(k: usize, values: Vec<f64>, kinds: Vec<AssocKind>) -> Self {
        assert_eq!(values.len(), k * k);
        assert_eq!(kinds.len(), k * k);
        RelationMatrix { k, values, kinds }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn kind(&self, i: usize, j: usize) -> AssocKind {
        self.kinds[i * self.k + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kinds(&self) -> &[AssocKind] {
        &self.kinds
    }
}

/// Standardization/expansion parameters for one original column.
#[derive(Debug, Clone)]
pub enum ColumnStats {
    /// `std` is the sample standard deviation; 0.0 marks a constant column
    /// whose expanded entry is pinned to zero.
    Quantitative { mean: f64, std: f64 },
    /// Levels observed in this class (tokens), their proportions, and the
    /// block scale that normalizes the column's total inertia to one.
    Qualitative {
        levels: Vec<String>,
        proportions: Vec<f64>,
        scale: f64,
    },
}

impl ColumnStats {
    fn expanded_width(&self) -> usize {
        match self {
            ColumnStats::Quantitative { .. } => 1,
            ColumnStats::Qualitative { levels, .. } => levels.len(),
        }
    }
}

/// Fitted per-class factor model.
///
/// `loadings` has one row per expanded column (quantitative columns give
/// one row, qualitative columns one row per observed level) and one
/// orthonormal column per factor, ordered by descending eigenvalue. For an
/// all-quantitative schema this is the K x K basis; with qualitative
/// columns the row dimension grows to the expanded width.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub class: ClassId,
    pub column_stats: Vec<ColumnStats>,
    pub loadings: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Per-factor projection of the class center: reported scores are the
    /// zero-mean standardized projection plus this constant. Subtracting
    /// it recovers the centered (PCA-convention) scores.
    pub score_offsets: Vec<f64>,
    /// Sum over the *whole* spectrum, not just the K retained factors.
    /// Equals the relation-matrix trace: every non-constant column
    /// contributes one unit of inertia. With qualitative columns the
    /// expanded space has more than K directions, so the retained
    /// eigenvalues alone may sum below this.
    pub total_inertia: f64,
    pub relation: RelationMatrix,
}

impl FactorModel {
    /// Number of factors (= number of original columns).
    pub fn factor_count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Expanded dimension P.
    pub fn expanded_dim(&self) -> usize {
        self.loadings.nrows()
    }

    /// Start offset of each original column in the expanded space.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.column_stats.len());
        let mut at = 0;
        for stats in &self.column_stats {
            offsets.push(at);
            at += stats.expanded_width();
        }
        offsets
    }
}

/// Factor scores for one class: `columns[i][n]` is factor i's score for
/// observation n.
#[derive(Debug, Clone)]
pub struct FactorScores {
    pub class: ClassId,
    pub columns: Vec<Vec<f64>>,
}

impl FactorScores {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn factor(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }
}

/// Result of projecting one sample: all K factor scores plus warnings for
/// category tokens the model never saw (those project with zero indicator
/// weight).
#[derive(Debug, Clone)]
pub struct Projection {
    pub scores: Vec<f64>,
    pub unseen: Vec<(String, String)>,
}

fn column_stats(part: &Dataset) -> Vec<ColumnStats> {
    let n = part.n_rows();
    part.columns()
        .iter()
        .map(|col| match col {
            Column::Quantitative(v) => {
                let mean = mean_of(v);
                let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
                let var = ss / (n - 1) as f64;
                let std = if var > 0.0 { var.sqrt() } else { 0.0 };
                ColumnStats::Quantitative { mean, std }
            }
            Column::Qualitative { codes, levels } => {
                let counts = level_counts(codes, levels.len());
                let mut seen_levels = Vec::new();
                let mut proportions = Vec::new();
                for (l, &count) in counts.iter().enumerate() {
                    if count > 0 {
                        seen_levels.push(levels[l].clone());
                        proportions.push(count as f64 / n as f64);
                    }
                }
                let l = seen_levels.len();
                let scale = if l >= 2 {
                    ((n - 1) as f64 / (n as f64 * (l - 1) as f64)).sqrt()
                } else {
                    0.0
                };
                ColumnStats::Qualitative {
                    levels: seen_levels,
                    proportions,
                    scale,
                }
            }
        })
        .collect()
}

fn expanded_width(stats: &[ColumnStats]) -> usize {
    stats.iter().map(ColumnStats::expanded_width).sum()
}

/// The class center in expanded standardized units: what the
/// standardization subtracted from every row. Degenerate columns
/// contribute zero.
fn expanded_center(stats: &[ColumnStats]) -> Vec<f64> {
    let mut center = Vec::with_capacity(expanded_width(stats));
    for st in stats {
        match st {
            ColumnStats::Quantitative { mean, std } => {
                center.push(if *std > 0.0 { mean / std } else { 0.0 });
            }
            ColumnStats::Qualitative {
                proportions, scale, ..
            } => {
                for &p_l in proportions {
                    center.push(scale * p_l.sqrt());
                }
            }
        }
    }
    center
}

/// Builds the standardized, indicator-expanded matrix Z (N x P).
fn expand_dataset(part: &Dataset, stats: &[ColumnStats]) -> DMatrix<f64> {
    let n = part.n_rows();
    let p = expanded_width(stats);
    let mut z = DMatrix::<f64>::zeros(n, p);
    let mut at = 0;
    for (col, st) in part.columns().iter().zip(stats) {
        match (col, st) {
            (Column::Quantitative(v), ColumnStats::Quantitative { mean, std }) => {
                if *std > 0.0 {
                    for (row, &x) in v.iter().enumerate() {
                        z[(row, at)] = (x - mean) / std;
                    }
                }
                at += 1;
            }
            (
                Column::Qualitative { codes, levels },
                ColumnStats::Qualitative {
                    levels: seen,
                    proportions,
                    scale,
                },
            ) => {
                let width = seen.len();
                if *scale > 0.0 {
                    // map dataset level code -> slot among seen levels
                    let mut slot_of = vec![usize::MAX; levels.len()];
                    for (slot, token) in seen.iter().enumerate() {
                        let code = levels.iter().position(|t| t == token).expect("seen level");
                        slot_of[code] = slot;
                    }
                    for (row, &code) in codes.iter().enumerate() {
                        let hit = slot_of[code as usize];
                        for (slot, &p_l) in proportions.iter().enumerate() {
                            let indicator = if slot == hit { 1.0 } else { 0.0 };
                            z[(row, at + slot)] = scale * (indicator - p_l) / p_l.sqrt();
                        }
                    }
                }
                at += width;
            }
            _ => unreachable!("stats are derived from the same columns"),
        }
    }
    z
}

/// Fits the factor model for one class partition and returns the model
/// together with the training factor scores.
pub fn fit_famd(part: &Dataset, class: ClassId) -> Result<(FactorModel, FactorScores), FamdError> {
    let n = part.n_rows();
    let k = part.width();
    let needed = k.max(2);
    if n < needed {
        return Err(FamdError::TooFewRows {
            rows: n,
            needed,
            factors: k,
        });
    }

    let stats = column_stats(part);
    let any_informative = stats.iter().any(|s| match s {
        ColumnStats::Quantitative { std, .. } => *std > 0.0,
        ColumnStats::Qualitative { scale, .. } => *scale > 0.0,
    });
    if !any_informative {
        return Err(FamdError::DegenerateInput);
    }

    let relation = RelationMatrix::from_dataset(part);
    let z = expand_dataset(part, &stats);

    let svd = z
        .clone()
        .try_svd(false, true, f64::EPSILON, 1_000_000)
        .ok_or(FamdError::Factorization)?;
    let v_t = svd.v_t.ok_or(FamdError::Factorization)?;
    let singular = svd.singular_values;

    // order factors by descending eigenvalue; ties keep lower original index
    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| {
        singular[b]
            .partial_cmp(&singular[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let total_inertia: f64 = singular.iter().map(|s| s * s).sum::<f64>() / (n - 1) as f64;
    let p = v_t.ncols();
    let mut loadings = DMatrix::<f64>::zeros(p, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (factor, &src) in order.iter().take(k).enumerate() {
        let s = singular[src];
        eigenvalues.push(s * s / (n - 1) as f64);
        for row in 0..p {
            loadings[(row, factor)] = v_t[(src, row)];
        }
        // deterministic sign: largest-magnitude entry is positive
        let mut max_abs = 0.0;
        let mut max_row = 0;
        for row in 0..p {
            let a = loadings[(row, factor)].abs();
            if a > max_abs {
                max_abs = a;
                max_row = row;
            }
        }
        if loadings[(max_row, factor)] < 0.0 {
            for row in 0..p {
                loadings[(row, factor)] = -loadings[(row, factor)];
            }
        }
    }

    let center = expanded_center(&stats);
    let score_offsets: Vec<f64> = (0..k)
        .map(|i| {
            center
                .iter()
                .enumerate()
                .map(|(p, &m)| m * loadings[(p, i)])
                .sum()
        })
        .collect();

    let score_matrix = &z * &loadings;
    let columns = (0..k)
        .map(|i| {
            score_matrix
                .column(i)
                .iter()
                .map(|v| v + score_offsets[i])
                .collect()
        })
        .collect();

    let model = FactorModel {
        class,
        column_stats: stats,
        loadings,
        eigenvalues,
        score_offsets,
        total_inertia,
        relation,
    };
    Ok((model, FactorScores { class, columns }))
}

/// Expands one sample into the model's standardized space. Unseen category
/// tokens zero out their column's whole indicator block and are reported.
type ExpandedSample = (Vec<f64>, Vec<(String, String)>);

fn expand_sample(
    model: &FactorModel,
    cells: &[CellRef],
    column_names: impl Fn(usize) -> String,
) -> Result<ExpandedSample, FamdError> {
    if cells.len() != model.column_stats.len() {
        return Err(FamdError::SampleMismatch(format!(
            "sample has {} cells, model expects {}",
            cells.len(),
            model.column_stats.len()
        )));
    }
    let mut z = vec![0.0; model.expanded_dim()];
    let mut unseen = Vec::new();
    let mut at = 0;
    for (j, stats) in model.column_stats.iter().enumerate() {
        match (stats, &cells[j]) {
            (ColumnStats::Quantitative { mean, std }, CellRef::Quant(x)) => {
                if !x.is_finite() {
                    return Err(FamdError::SampleMismatch(format!(
                        "non-finite value in column {:?}",
                        column_names(j)
                    )));
                }
                if *std > 0.0 {
                    z[at] = (x - mean) / std;
                }
                at += 1;
            }
            (
                ColumnStats::Qualitative {
                    levels,
                    proportions,
                    scale,
                },
                CellRef::Token(token),
            ) => {
                if *scale > 0.0 {
                    // an unseen token carries zero weight on every
                    // indicator direction (all indicators are 0)
                    let hit = levels.iter().position(|l| l == token);
                    if hit.is_none() {
                        unseen.push((column_names(j), token.to_string()));
                    }
                    for (slot, &p_l) in proportions.iter().enumerate() {
                        let indicator = if hit == Some(slot) { 1.0 } else { 0.0 };
                        z[at + slot] = scale * (indicator - p_l) / p_l.sqrt();
                    }
                }
                at += levels.len();
            }
            _ => {
                return Err(FamdError::SampleMismatch(format!(
                    "cell kind mismatch in column {:?}",
                    column_names(j)
                )))
            }
        }
    }
    Ok((z, unseen))
}

/// Projects a sample onto all K factors (standardize, expand, apply the
/// loadings). Deterministic; unseen categories contribute zero and are
/// flagged on the result.
pub fn project(model: &FactorModel, cells: &[CellRef]) -> Result<Projection, FamdError> {
    let (z, unseen) = expand_sample(model, cells, |j| format!("#{j}"))?;
    let k = model.factor_count();
    let mut scores = vec![0.0; k];
    #[allow(clippy::needless_range_loop)]
    for i in 0..k {
        let mut acc = model.score_offsets[i];
        for (p, &zv) in z.iter().enumerate() {
            acc += zv * model.loadings[(p, i)];
        }
        scores[i] = acc;
    }
    Ok(Projection { scores, unseen })
}

/// Batch projector: resolves a dataset's category codes against the model
/// once, then projects rows without string lookups.
pub struct Projector<'a> {
    model: &'a FactorModel,
    dataset: &'a Dataset,
    /// per column: dataset code -> slot among the model's seen levels
    code_maps: Vec<Option<Vec<Option<usize>>>>,
}

impl<'a> Projector<'a> {
    pub fn new(model: &'a FactorModel, dataset: &'a Dataset) -> Result<Self, FamdError> {
        if dataset.width() != model.column_stats.len() {
            return Err(FamdError::SampleMismatch(format!(
                "dataset has {} columns, model expects {}",
                dataset.width(),
                model.column_stats.len()
            )));
        }
        let mut code_maps = Vec::with_capacity(dataset.width());
        for (j, stats) in model.column_stats.iter().enumerate() {
            match (stats, dataset.column(j)) {
                (ColumnStats::Quantitative { .. }, Column::Quantitative(_)) => code_maps.push(None),
                (
                    ColumnStats::Qualitative { levels: seen, .. },
                    Column::Qualitative { levels, .. },
                ) => {
                    let map = levels
                        .iter()
                        .map(|token| seen.iter().position(|s| s == token))
                        .collect();
                    code_maps.push(Some(map));
                }
                _ => {
                    return Err(FamdError::SampleMismatch(format!(
                        "column {} kind differs between dataset and model",
                        dataset.schema().columns[j].name
                    )))
                }
            }
        }
        Ok(Projector {
            model,
            dataset,
            code_maps,
        })
    }

    /// Projects row `row` onto the selected factor indices only.
    pub fn project_onto(&self, row: usize, factors: &[usize]) -> Projection {
        let model = self.model;
        let offsets = model.offsets();
        let mut z = vec![0.0; model.expanded_dim()];
        let mut unseen = Vec::new();
        for (j, stats) in model.column_stats.iter().enumerate() {
            let at = offsets[j];
            match (stats, self.dataset.column(j)) {
                (ColumnStats::Quantitative { mean, std }, Column::Quantitative(v)) => {
                    if *std > 0.0 {
                        z[at] = (v[row] - mean) / std;
                    }
                }
                (
                    ColumnStats::Qualitative {
                        proportions, scale, ..
                    },
                    Column::Qualitative { codes, levels },
                ) => {
                    if *scale > 0.0 {
                        let map = self.code_maps[j].as_ref().expect("qualitative map");
                        let hit = map[codes[row] as usize];
                        if hit.is_none() {
                            unseen.push((
                                self.dataset.schema().columns[j].name.clone(),
                                levels[codes[row] as usize].clone(),
                            ));
                        }
                        for (slot, &p_l) in proportions.iter().enumerate() {
                            let indicator = if hit == Some(slot) { 1.0 } else { 0.0 };
                            z[at + slot] = scale * (indicator - p_l) / p_l.sqrt();
                        }
                    }
                }
                _ => unreachable!("validated in Projector::new"),
            }
        }
        let scores = factors
            .iter()
            .map(|&i| {
                let mut acc = model.score_offsets[i];
                for (p, &zv) in z.iter().enumerate() {
                    acc += zv * model.loadings[(p, i)];
                }
                acc
            })
            .collect();
        Projection { scores, unseen }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnSpec, Dataset, FeatureKind, Schema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quant_dataset(columns: Vec<Vec<f64>>) -> Dataset {
        let specs = (0..columns.len())
            .map(|i| ColumnSpec {
                name: format!("q{i}"),
                kind: FeatureKind::Quantitative,
            })
            .collect();
        let cols = columns.into_iter().map(Column::Quantitative).collect();
        Dataset::new(Schema::new(specs).unwrap(), cols).unwrap()
    }

    fn mixed_dataset(quants: Vec<Vec<f64>>, quals: Vec<Vec<&str>>) -> Dataset {
        let mut specs = Vec::new();
        let mut cols = Vec::new();
        for (i, q) in quants.into_iter().enumerate() {
            specs.push(ColumnSpec {
                name: format!("q{i}"),
                kind: FeatureKind::Quantitative,
            });
            cols.push(Column::Quantitative(q));
        }
        for (i, tokens) in quals.into_iter().enumerate() {
            specs.push(ColumnSpec {
                name: format!("c{i}"),
                kind: FeatureKind::Qualitative,
            });
            let mut levels: Vec<String> = Vec::new();
            let codes = tokens
                .iter()
                .map(|t| match levels.iter().position(|l| l == t) {
                    Some(p) => p as u32,
                    None => {
                        levels.push(t.to_string());
                        (levels.len() - 1) as u32
                    }
                })
                .collect();
            cols.push(Column::Qualitative { codes, levels });
        }
        Dataset::new(Schema::new(specs).unwrap(), cols).unwrap()
    }

    #[test]
    fn association_of_column_with_itself_is_one() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 2.5];
        let a = association(ColumnSlice::Quant(&x), ColumnSlice::Quant(&x));
        assert!((a - 1.0).abs() < 1e-12, "got {a}");
    }

    #[test]
    fn association_perfect_linear_dependence() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![2.0, 4.0, 6.0, 8.0];
        let a = association(ColumnSlice::Quant(&x), ColumnSlice::Quant(&y));
        assert!((a - 1.0).abs() < 1e-12, "got {a}");
    }

    #[test]
    fn association_zero_variance_is_zero() {
        let x = vec![3.0; 6];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(
            association(ColumnSlice::Quant(&x), ColumnSlice::Quant(&y)),
            0.0
        );
        assert_eq!(
            association(ColumnSlice::Quant(&x), ColumnSlice::Quant(&x)),
            0.0
        );
    }

    /// Brute-force chi-square from the definition sum((o-e)^2/e), as an
    /// independent route to the implementation's algebraic form.
    fn chi_sq_oracle(x: &[u32], lx: usize, y: &[u32], ly: usize) -> f64 {
        let n = x.len() as f64;
        let mut joint = vec![vec![0.0; ly]; lx];
        let mut rows = vec![0.0; lx];
        let mut cols = vec![0.0; ly];
        for (&a, &b) in x.iter().zip(y) {
            joint[a as usize][b as usize] += 1.0;
            rows[a as usize] += 1.0;
            cols[b as usize] += 1.0;
        }
        let mut chi = 0.0;
        for a in 0..lx {
            for b in 0..ly {
                let e = rows[a] * cols[b] / n;
                if e > 0.0 {
                    let d = joint[a][b] - e;
                    chi += d * d / e;
                }
            }
        }
        chi
    }

    #[test]
    fn independent_qualitative_columns_associate_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let x: Vec<u32> = (0..n).map(|_| rng.random_range(0..4u32)).collect();
        let y: Vec<u32> = (0..n).map(|_| rng.random_range(0..4u32)).collect();
        let got = association(
            ColumnSlice::Qual {
                codes: &x,
                level_count: 4,
            },
            ColumnSlice::Qual {
                codes: &y,
                level_count: 4,
            },
        );
        assert!(got < 0.01, "independent columns associated at {got}");
        let expected = chi_sq_oracle(&x, 4, &y, 4) / (n as f64 * 3.0);
        assert!(
            (got - expected).abs() < 1e-12,
            "impl {got} vs oracle {expected}"
        );
    }

    #[test]
    fn association_is_symmetric_for_mixed_pairs() {
        let y = vec![0.3, 1.7, 0.9, 2.4, 1.1, 0.2];
        let codes = vec![0u32, 1, 0, 1, 0, 1];
        let q = ColumnSlice::Quant(&y);
        let c = ColumnSlice::Qual {
            codes: &codes,
            level_count: 2,
        };
        assert_eq!(association(q, c), association(c, q));
    }

    /// PCA oracle through the independent route: directions from the
    /// covariance eigendecomposition (the implementation finds them by
    /// SVD of the centered data), scores as the projection in the shared
    /// scale-only frame (data over its standard deviations).
    fn pca_oracle(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = columns[0].len();
        let k = columns.len();
        let mut scaled = DMatrix::<f64>::zeros(n, k);
        for (j, col) in columns.iter().enumerate() {
            let mean = mean_of(col);
            let var: f64 =
                col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let std = var.sqrt();
            for (i, &x) in col.iter().enumerate() {
                scaled[(i, j)] = x / std;
            }
        }
        let col_means: Vec<f64> = (0..k)
            .map(|j| scaled.column(j).iter().sum::<f64>() / n as f64)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += (scaled[(i, a)] - col_means[a]) * (scaled[(i, b)] - col_means[b]);
                }
                cov[(a, b)] = acc / (n - 1) as f64;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut v = DMatrix::<f64>::zeros(k, k);
        for (dst, &src) in order.iter().enumerate() {
            for row in 0..k {
                v[(row, dst)] = eig.eigenvectors[(row, src)];
            }
        }
        let scores = scaled * v;
        (0..k)
            .map(|j| scores.column(j).iter().copied().collect())
            .collect()
    }

    fn max_abs_diff_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
        let same: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let flip: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x + y).abs())
            .fold(0.0, f64::max);
        same.min(flip)
    }

    #[test]
    fn quantitative_famd_matches_pca_oracle() {
        for seed in [3u64, 17, 99] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let columns: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..100).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let ds = quant_dataset(columns.clone());
            let (_, scores) = fit_famd(&ds, 0).unwrap();
            let oracle = pca_oracle(&columns);
            #[allow(clippy::needless_range_loop)]
            for j in 0..5 {
                let diff = max_abs_diff_up_to_sign(&scores.columns[j], &oracle[j]);
                assert!(diff < 1e-6, "factor {j} off by {diff} (seed {seed})");
            }
        }
    }

    #[test]
    fn perfectly_correlated_pair_is_rank_one() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (model, _) = fit_famd(&quant_dataset(vec![x, y]), 0).unwrap();
        let total: f64 = model.eigenvalues.iter().sum();
        assert!((model.eigenvalues[0] - total).abs() < 1e-9);
        assert!(model.eigenvalues[1].abs() < 1e-9);
    }

    #[test]
    fn loadings_orthonormal_and_trace_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let quants: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..300).map(|_| rng.random::<f64>()).collect())
            .collect();
        let tokens: Vec<&str> = (0..300)
            .map(|_| ["a", "b", "c"][rng.random_range(0..3usize)])
            .collect();
        let ds = mixed_dataset(quants, vec![tokens]);
        let (model, _) = fit_famd(&ds, 0).unwrap();

        let gram = model.loadings.transpose() * &model.loadings;
        for i in 0..model.factor_count() {
            for j in 0..model.factor_count() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expect).abs() < 1e-8,
                    "gram[{i},{j}] = {}",
                    gram[(i, j)]
                );
            }
        }

        assert!(
            (model.total_inertia - model.relation.trace()).abs() < 1e-6,
            "total inertia {} vs relation trace {}",
            model.total_inertia,
            model.relation.trace()
        );

        // all-quantitative schemas retain the whole spectrum, so there the
        // K eigenvalues themselves carry the trace
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let quant_only = quant_dataset(
            (0..4)
                .map(|_| (0..200).map(|_| rng.random::<f64>()).collect())
                .collect(),
        );
        let (qmodel, _) = fit_famd(&quant_only, 0).unwrap();
        let eig_sum: f64 = qmodel.eigenvalues.iter().sum();
        assert!((eig_sum - qmodel.relation.trace()).abs() < 1e-6);
        assert!((eig_sum - qmodel.total_inertia).abs() < 1e-9);
    }

    #[test]
    fn projection_reproduces_training_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let quants: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..120).map(|_| rng.random::<f64>() * 3.0).collect())
            .collect();
        let tokens: Vec<&str> = (0..120)
            .map(|_| ["x", "y"][rng.random_range(0..2usize)])
            .collect();
        let ds = mixed_dataset(quants, vec![tokens]);
        let (model, scores) = fit_famd(&ds, 0).unwrap();
        let projector = Projector::new(&model, &ds).unwrap();
        let all: Vec<usize> = (0..model.factor_count()).collect();
        for row in [0usize, 17, 119] {
            let proj = projector.project_onto(row, &all);
            assert!(proj.unseen.is_empty());
            for i in 0..model.factor_count() {
                assert!(
                    (proj.scores[i] - scores.columns[i][row]).abs() < 1e-9,
                    "row {row} factor {i}"
                );
            }
        }
    }

    #[test]
    fn projecting_the_mean_gives_zero_standardized_scores() {
        // the column-mean sample lands exactly on the per-factor score
        // offsets, i.e. its standardized scores (before the scale-frame
        // shift is added back) are all zero
        let cols = vec![vec![1.0, 2.0, 3.0, 6.0], vec![0.5, 1.5, 2.5, 3.5]];
        let ds = quant_dataset(cols.clone());
        let (model, _) = fit_famd(&ds, 0).unwrap();
        let means: Vec<CellRef> = cols
            .iter()
            .map(|c| CellRef::Quant(c.iter().sum::<f64>() / c.len() as f64))
            .collect();
        let proj = project(&model, &means).unwrap();
        for (s, offset) in proj.scores.iter().zip(&model.score_offsets) {
            assert!(
                (s - offset).abs() < 1e-12,
                "standardized residual {}",
                s - offset
            );
        }
    }

    #[test]
    fn projection_is_affine_linear_on_quantitative_schemas() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..80).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ds = quant_dataset(cols);
        let (model, _) = fit_famd(&ds, 0).unwrap();
        let x = [0.3, -1.0, 2.0, 0.7];
        let y = [1.1, 0.4, -0.5, 0.0];
        let a = 0.35;
        let mix: Vec<CellRef> = x
            .iter()
            .zip(&y)
            .map(|(&xv, &yv)| CellRef::Quant(a * xv + (1.0 - a) * yv))
            .collect();
        let px = project(&model, &x.map(CellRef::Quant)).unwrap().scores;
        let py = project(&model, &y.map(CellRef::Quant)).unwrap().scores;
        let pm = project(&model, &mix).unwrap().scores;
        for i in 0..4 {
            let expect = a * px[i] + (1.0 - a) * py[i];
            assert!((pm[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn unseen_category_projects_with_warning() {
        let quants = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let tokens = vec!["a", "b", "a", "b"];
        let ds = mixed_dataset(quants, vec![tokens]);
        let (model, _) = fit_famd(&ds, 0).unwrap();
        let cells = [CellRef::Quant(2.0), CellRef::Token("zzz")];
        let proj = project(&model, &cells).unwrap();
        assert_eq!(proj.unseen.len(), 1);
        assert_eq!(proj.unseen[0].1, "zzz");
        // the qualitative block contributed nothing: projecting with the
        // block zeroed must equal projecting any token-free equivalent
        let seen = project(&model, &[CellRef::Quant(2.0), CellRef::Token("a")]).unwrap();
        assert_eq!(seen.unseen.len(), 0);
        assert_ne!(proj.scores, seen.scores);
    }

    #[test]
    fn constant_dataset_is_rejected() {
        let ds = quant_dataset(vec![vec![5.0; 10], vec![-1.0; 10]]);
        assert!(matches!(fit_famd(&ds, 0), Err(FamdError::DegenerateInput)));
    }
}
