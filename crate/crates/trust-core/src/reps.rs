//! Representative selection: rank factors by mutual information with the
//! predicted labels, keep the top k, and normalize their weights.
//!
//! Factor values are binned equal-width over the concatenated per-class
//! scores (shared edges across classes), and entropies are in bits. The
//! log base only rescales every weight uniformly, so it cannot change the
//! ranking. Ties on equal information break toward the lower factor index
//! so selection is reproducible.

use crate::data::ClassId;
use crate::famd::FactorScores;
use crate::par;
use thiserror::Error;

/// Default bin count for factor discretization.
pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Error)]
pub enum RepsError {
    #[error("labels ({labels}) and factor values ({values}) differ in length")]
    LengthMismatch { labels: usize, values: usize },
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("k must be in 1..={max}, got {k}")]
    BadK { k: usize, max: usize },
    #[error("labels are not the class-blocked concatenation of the score rows")]
    BlockMismatch,
    #[error("factor values must be finite")]
    NonFinite,
    #[error("all factors carry zero information about the labels")]
    NoInformativeFactors,
}

/// Equal-width discretization of a real vector.
#[derive(Debug, Clone)]
pub struct BinnedVariable {
    /// B+1 strictly increasing boundaries.
    pub edges: Vec<f64>,
    /// Occupancy per bin; sums to N.
    pub counts: Vec<usize>,
    /// Bin index per observation, each < B.
    pub assignments: Vec<usize>,
}

/// Bins `values` into `bins` equal-width cells over [min, max]. A constant
/// vector gets a unit-width window around the value so the edges stay
/// strictly increasing; everything lands in one bin.
pub fn bin_equal_width(values: &[f64], bins: usize) -> Result<BinnedVariable, RepsError> {
    if bins < 2 {
        return Err(RepsError::TooFewBins(bins));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RepsError::NonFinite);
    }
    let lo_raw = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_raw = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi_raw > lo_raw {
        (lo_raw, hi_raw)
    } else {
        (lo_raw - 0.5, lo_raw + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    let assignments: Vec<usize> = values
        .iter()
        .map(|&v| {
            let idx = ((v - lo) / width) as usize;
            let idx = idx.min(bins - 1);
            counts[idx] += 1;
            idx
        })
        .collect();
    Ok(BinnedVariable {
        edges,
        counts,
        assignments,
    })
}

/// Shannon entropy of the label distribution, in bits. Empty-probability
/// classes contribute nothing.
pub fn entropy(labels: &[ClassId]) -> f64 {
    assert!(!labels.is_empty(), "entropy of an empty label vector");
    let classes = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information (bits) between the labels and a binned real factor:
/// H(y) minus the conditional entropy of y given the bin, both read off
/// the joint contingency table. Result is clamped into [0, H(y)].
pub fn mutual_information(
    labels: &[ClassId],
    factor: &[f64],
    bins: usize,
) -> Result<f64, RepsError> {
    if labels.len() != factor.len() {
        return Err(RepsError::LengthMismatch {
            labels: labels.len(),
            values: factor.len(),
        });
    }
    let binned = bin_equal_width(factor, bins)?;
    let classes = labels.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; classes * bins];
    for (&label, &bin) in labels.iter().zip(&binned.assignments) {
        joint[label * bins + bin] += 1;
    }
    let n = labels.len() as f64;
    // H(y | F) = -sum_{c,bin} P(c,bin) log2( P(c,bin) / P(bin) )
    let mut conditional = 0.0;
    for bin in 0..bins {
        let bin_total = binned.counts[bin];
        if bin_total == 0 {
            continue;
        }
        let p_bin = bin_total as f64 / n;
        for c in 0..classes {
            let count = joint[c * bins + bin];
            if count == 0 {
                continue;
            }
            let p_joint = count as f64 / n;
            conditional -= p_joint * (p_joint / p_bin).log2();
        }
    }
    let h = entropy(labels);
    Ok((h - conditional).clamp(0.0, h))
}

/// Factors ordered by raw information weight, descending.
#[derive(Debug, Clone)]
pub struct ImportanceRanking {
    /// (factor index, raw weight) pairs, weight non-increasing.
    pub entries: Vec<(usize, f64)>,
}

/// The top-k factors with raw and normalized importance weights.
#[derive(Debug, Clone)]
pub struct RepresentativeSet {
    pub indices: Vec<usize>,
    pub raw_weights: Vec<f64>,
    /// Raw weights divided by their sum; sums to 1.
    pub normalized_weights: Vec<f64>,
    pub ranking: ImportanceRanking,
}

impl RepresentativeSet {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

/// Ranks every factor by mutual information between the predicted labels
/// and the vertical concatenation of the per-class factor columns, then
/// keeps the k best. `labels` must be the class-blocked label vector that
/// matches the concatenation order of `scores` (class 0 rows first, then
/// class 1, ...).
pub fn pick_representatives(
    scores: &[FactorScores],
    labels: &[ClassId],
    k: usize,
    bins: usize,
) -> Result<RepresentativeSet, RepsError> {
    let factor_count = scores.first().map_or(0, |s| s.columns.len());
    if k == 0 || k > factor_count {
        return Err(RepsError::BadK {
            k,
            max: factor_count,
        });
    }
    let total_rows: usize = scores.iter().map(FactorScores::n_rows).sum();
    if labels.len() != total_rows {
        return Err(RepsError::LengthMismatch {
            labels: labels.len(),
            values: total_rows,
        });
    }
    let mut at = 0;
    for part in scores {
        for offset in 0..part.n_rows() {
            if labels[at + offset] != part.class {
                return Err(RepsError::BlockMismatch);
            }
        }
        at += part.n_rows();
    }

    let weights: Vec<f64> = {
        let results = par::map_range(factor_count, |i| {
            let mut concatenated = Vec::with_capacity(total_rows);
            for part in scores {
                concatenated.extend_from_slice(part.factor(i));
            }
            mutual_information(labels, &concatenated, bins)
        });
        let mut weights = Vec::with_capacity(factor_count);
        for r in results {
            weights.push(r?);
        }
        weights
    };

    let mut entries: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let top = &entries[..k];
    let raw: Vec<f64> = top.iter().map(|&(_, w)| w).collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(RepsError::NoInformativeFactors);
    }
    Ok(RepresentativeSet {
        indices: top.iter().map(|&(i, _)| i).collect(),
        raw_weights: raw.clone(),
        normalized_weights: raw.iter().map(|w| w / sum).collect(),
        ranking: ImportanceRanking { entries },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_balanced_binary_is_one_bit() {
        let labels = [0, 1].repeat(500);
        assert!((entropy(&labels) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_single_class_is_zero() {
        assert_eq!(entropy(&vec![0; 100]), 0.0);
    }

    #[test]
    fn entropy_quarter_three_quarters() {
        let mut labels = vec![0; 25];
        labels.extend(vec![1; 75]);
        assert!((entropy(&labels) - 0.811278).abs() < 1e-6);
    }

    #[test]
    fn mi_of_label_copy_equals_label_entropy() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 3).collect();
        let factor: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let mi = mutual_information(&labels, &factor, 16).unwrap();
        assert!((mi - entropy(&labels)).abs() < 1e-12);
    }

    #[test]
    fn mi_of_constant_factor_is_zero() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let factor = vec![7.5; 100];
        assert_eq!(mutual_information(&labels, &factor, 8).unwrap(), 0.0);
    }

    /// Joint-histogram MI from the symmetric definition
    /// sum p(c,b) log2( p(c,b) / (p(c) p(b)) ) — the independent route.
    fn mi_oracle(labels: &[usize], factor: &[f64], bins: usize) -> f64 {
        let binned = bin_equal_width(factor, bins).unwrap();
        let classes = labels.iter().max().unwrap() + 1;
        let n = labels.len() as f64;
        let mut joint = vec![vec![0.0; bins]; classes];
        let mut label_marginal = vec![0.0; classes];
        for (&l, &b) in labels.iter().zip(&binned.assignments) {
            joint[l][b] += 1.0;
            label_marginal[l] += 1.0;
        }
        let mut mi = 0.0;
        #[allow(clippy::needless_range_loop)]
        for c in 0..classes {
            for b in 0..bins {
                if joint[c][b] > 0.0 {
                    let p_joint = joint[c][b] / n;
                    let p_c = label_marginal[c] / n;
                    let p_b = binned.counts[b] as f64 / n;
                    mi += p_joint * (p_joint / (p_c * p_b)).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn mi_of_independent_factor_is_near_zero_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let labels: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2usize)).collect();
        let factor: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let mi = mutual_information(&labels, &factor, 32).unwrap();
        assert!(mi < 0.01, "independent MI was {mi}");
        let oracle = mi_oracle(&labels, &factor, 32);
        assert!((mi - oracle).abs() < 1e-12);
    }

    #[test]
    fn mi_three_term_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<usize> = (0..2_000).map(|_| rng.random_range(0..3usize)).collect();
        let factor: Vec<f64> = labels
            .iter()
            .map(|&l| l as f64 + rng.random::<f64>() * 2.0)
            .collect();
        let bins = 16;
        let mi = mutual_information(&labels, &factor, bins).unwrap();
        // H(y) + H(F) - H(y, F)
        let binned = bin_equal_width(&factor, bins).unwrap();
        let h_f = entropy(&binned.assignments);
        let joint_codes: Vec<usize> = labels
            .iter()
            .zip(&binned.assignments)
            .map(|(&l, &b)| l * bins + b)
            .collect();
        let h_joint = entropy(&joint_codes);
        let alt = entropy(&labels) + h_f - h_joint;
        assert!((mi - alt).abs() < 1e-12, "mi {mi} vs identity {alt}");
    }

    fn scores_from_columns(class: usize, columns: Vec<Vec<f64>>) -> FactorScores {
        FactorScores { class, columns }
    }

    #[test]
    fn picks_the_label_aligned_factor_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n_per = 2_000;
        // factor 3 equals the class label, everything else is noise
        let make_class = |class: usize, rng: &mut ChaCha8Rng| {
            let columns: Vec<Vec<f64>> = (0..5)
                .map(|i| {
                    (0..n_per)
                        .map(|_| {
                            if i == 3 {
                                class as f64
                            } else {
                                rng.random::<f64>()
                            }
                        })
                        .collect()
                })
                .collect();
            scores_from_columns(class, columns)
        };
        let scores = vec![make_class(0, &mut rng), make_class(1, &mut rng)];
        let labels: Vec<usize> = std::iter::repeat_n(0, n_per)
            .chain(std::iter::repeat_n(1, n_per))
            .collect();
        let reps = pick_representatives(&scores, &labels, 2, DEFAULT_BINS).unwrap();
        assert_eq!(reps.indices[0], 3);
        let sum: f64 = reps.normalized_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_factor_count_returns_full_ranking() {
        let scores = vec![
            scores_from_columns(0, vec![vec![0.0, 0.1], vec![5.0, 5.2]]),
            scores_from_columns(1, vec![vec![1.0, 1.1], vec![5.1, 5.3]]),
        ];
        let labels = vec![0, 0, 1, 1];
        let reps = pick_representatives(&scores, &labels, 2, 8).unwrap();
        assert_eq!(reps.k(), 2);
        assert_eq!(reps.indices[0], 0, "the separated factor ranks first");
        let ranked: Vec<usize> = reps.ranking.entries.iter().map(|e| e.0).collect();
        assert_eq!(reps.indices, ranked[..2].to_vec());
    }

    #[test]
    fn equal_weights_tie_break_to_lower_index() {
        // both factors track the label perfectly: identical MI, so the
        // tie resolves by factor index
        let lo = vec![0.0; 4];
        let hi = vec![1.0; 4];
        let scores = vec![
            scores_from_columns(0, vec![lo.clone(), lo.clone()]),
            scores_from_columns(1, vec![hi.clone(), hi.clone()]),
        ];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let reps = pick_representatives(&scores, &labels, 2, 4).unwrap();
        assert_eq!(reps.indices, vec![0, 1]);
        assert_eq!(reps.raw_weights[0], reps.raw_weights[1]);
    }

    #[test]
    fn rejects_bad_k_and_mismatched_blocks() {
        let scores = vec![
            scores_from_columns(0, vec![vec![0.0, 1.0]]),
            scores_from_columns(1, vec![vec![2.0, 3.0]]),
        ];
        assert!(matches!(
            pick_representatives(&scores, &[0, 0, 1, 1], 5, 8),
            Err(RepsError::BadK { k: 5, max: 1 })
        ));
        assert!(matches!(
            pick_representatives(&scores, &[0, 1, 0, 1], 1, 8),
            Err(RepsError::BlockMismatch)
        ));
    }
}
