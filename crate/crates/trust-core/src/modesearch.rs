//! Mode-count selection for the per-representative mixtures.
//!
//! A candidate assigns one mode count per class. Scoring a candidate fits
//! each class's mixture with its candidate count, labels every training
//! value (all classes concatenated) by density argmax, and takes the MCC
//! of that labeling against the class of origin. The full search scores
//! every lattice point in the zone; the fast search scores only the
//! center of each sub-zone and then exhausts the winning sub-zone.
//!
//! Mixture fits are memoized per (class, mode count) — candidate scores
//! only ever combine per-class fits, so the cache changes nothing but
//! time. Every fit reuses the caller's seed, which keeps candidate scores
//! comparable and the whole search deterministic.

use crate::data::ClassId;
use crate::metrics::ConfusionMatrix;
use crate::mmg;
use crate::par;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModeSearchError {
    #[error("zone is empty or inverted: lo {lo:?}, hi {hi:?}")]
    EmptyZone { lo: Vec<usize>, hi: Vec<usize> },
    #[error("zone bounds must cover every class: {classes} classes, {bounds} bounds")]
    WrongClassCount { classes: usize, bounds: usize },
    #[error("mode counts start at 1")]
    ZeroLowerBound,
    #[error("sub-zone edge must be at least 1")]
    ZeroSubzoneEdge,
    #[error("need values for at least 2 classes, got {0}")]
    TooFewClasses(usize),
}

/// Inclusive per-class mode-count bounds plus the sub-zone edge length
/// used by the fast search. The final sub-zone along an axis may be
/// shorter when the edge does not divide the range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchZone {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub subzone_edge: usize,
}

impl SearchZone {
    /// Same bounds on every class axis.
    pub fn uniform(classes: usize, lo: usize, hi: usize, subzone_edge: usize) -> Self {
        SearchZone {
            lo: vec![lo; classes],
            hi: vec![hi; classes],
            subzone_edge,
        }
    }

    /// Default bounds: 1..=20 per class, 5x5 sub-zones.
    pub fn default_for(classes: usize) -> Self {
        SearchZone::uniform(classes, 1, 20, 5)
    }

    pub fn validate(&self, classes: usize) -> Result<(), ModeSearchError> {
        if self.lo.len() != classes || self.hi.len() != classes {
            return Err(ModeSearchError::WrongClassCount {
                classes,
                bounds: self.lo.len().min(self.hi.len()),
            });
        }
        if self.lo.contains(&0) {
            return Err(ModeSearchError::ZeroLowerBound);
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > h) {
            return Err(ModeSearchError::EmptyZone {
                lo: self.lo.clone(),
                hi: self.hi.clone(),
            });
        }
        if self.subzone_edge == 0 {
            return Err(ModeSearchError::ZeroSubzoneEdge);
        }
        Ok(())
    }

    /// Number of lattice points.
    pub fn volume(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l + 1)
            .product()
    }

    /// True when the zone fits inside a single sub-zone.
    pub fn fits_one_subzone(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .all(|(l, h)| h - l < self.subzone_edge)
    }

    /// All lattice points in lexicographic order (class 0 varies slowest).
    fn lattice(&self) -> Vec<Vec<usize>> {
        let mut points = Vec::with_capacity(self.volume());
        let mut current = self.lo.clone();
        loop {
            points.push(current.clone());
            let mut axis = current.len();
            loop {
                if axis == 0 {
                    return points;
                }
                axis -= 1;
                if current[axis] < self.hi[axis] {
                    current[axis] += 1;
                    break;
                }
                current[axis] = self.lo[axis];
            }
        }
    }

    /// Splits every axis into runs of at most `subzone_edge` and returns
    /// the cartesian product as sub-zones, in lexicographic order.
    fn subzones(&self) -> Vec<SearchZone> {
        let per_axis: Vec<Vec<(usize, usize)>> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let mut runs = Vec::new();
                let mut start = l;
                while start <= h {
                    let end = (start + self.subzone_edge - 1).min(h);
                    runs.push((start, end));
                    start = end + 1;
                }
                runs
            })
            .collect();
        let mut zones = Vec::new();
        let mut pick = vec![0usize; per_axis.len()];
        loop {
            let lo = pick
                .iter()
                .enumerate()
                .map(|(a, &i)| per_axis[a][i].0)
                .collect();
            let hi = pick
                .iter()
                .enumerate()
                .map(|(a, &i)| per_axis[a][i].1)
                .collect();
            zones.push(SearchZone {
                lo,
                hi,
                subzone_edge: self.subzone_edge,
            });
            let mut axis = pick.len();
            loop {
                if axis == 0 {
                    return zones;
                }
                axis -= 1;
                if pick[axis] + 1 < per_axis[axis].len() {
                    pick[axis] += 1;
                    break;
                }
                pick[axis] = 0;
            }
        }
    }

    /// Floor midpoint of each axis range.
    fn center(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l + (h - l) / 2)
            .collect()
    }
}

/// Chosen mode counts for one representative.
#[derive(Debug, Clone)]
pub struct ModeAssignment {
    /// One mode count per class.
    pub modes: Vec<usize>,
    /// MCC of the winning candidate.
    pub score: f64,
    /// Candidates scored to reach the answer.
    pub evaluations: usize,
    /// True when some scored candidate lacked data (scored as -1).
    pub insufficient_seen: bool,
}

/// Outcome of scoring a single candidate.
#[derive(Debug, Clone, Copy)]
pub struct ScoredCandidate {
    /// MCC in [-1, 1]; -1 when the candidate could not be fit.
    pub score: f64,
    /// True when some class had fewer than `2 * modes` values.
    pub insufficient: bool,
}

/// Per-(class, mode-count) log-likelihood tables over the concatenated
/// values; `None` marks infeasible fits.
type LlCache = HashMap<(ClassId, usize), Option<Vec<f64>>>;

fn concatenate(values_per_class: &[&[f64]]) -> (Vec<f64>, Vec<ClassId>) {
    let mut all = Vec::new();
    let mut labels = Vec::new();
    for (c, vals) in values_per_class.iter().enumerate() {
        all.extend_from_slice(vals);
        labels.extend(std::iter::repeat_n(c, vals.len()));
    }
    (all, labels)
}

fn fit_table(
    class_values: &[f64],
    all_values: &[f64],
    modes: usize,
    seed: u64,
) -> Option<Vec<f64>> {
    if class_values.len() < 2 * modes {
        return None;
    }
    let density = mmg::em_fit(class_values, modes, seed).ok()?;
    Some(
        all_values
            .iter()
            .map(|&v| mmg::rep_log_likelihood(&density, v))
            .collect(),
    )
}

/// Fills the cache for every (class, mode) pair needed, in parallel.
fn prefetch(
    cache: &mut LlCache,
    needed: &[(ClassId, usize)],
    values_per_class: &[&[f64]],
    all_values: &[f64],
    seed: u64,
) {
    let missing: Vec<(ClassId, usize)> = needed
        .iter()
        .copied()
        .filter(|key| !cache.contains_key(key))
        .collect();
    let tables = par::map_slice(&missing, |&(c, m)| {
        fit_table(values_per_class[c], all_values, m, seed)
    });
    for (key, table) in missing.into_iter().zip(tables) {
        cache.insert(key, table);
    }
}

fn score_candidate(
    cache: &LlCache,
    candidate: &[usize],
    labels: &[ClassId],
    classes: usize,
) -> ScoredCandidate {
    let mut tables: Vec<&Vec<f64>> = Vec::with_capacity(classes);
    for (c, &m) in candidate.iter().enumerate() {
        match cache.get(&(c, m)) {
            Some(Some(table)) => tables.push(table),
            _ => {
                return ScoredCandidate {
                    score: -1.0,
                    insufficient: true,
                }
            }
        }
    }
    let assigned: Vec<ClassId> = (0..labels.len())
        .map(|n| {
            let mut best = 0;
            for c in 1..classes {
                if tables[c][n] > tables[best][n] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let cm = ConfusionMatrix::from_labels(labels, &assigned, classes)
        .expect("labels are constructed in range");
    ScoredCandidate {
        score: cm.mcc(),
        insufficient: false,
    }
}

/// Replacement rule: higher score wins; on equal score the smaller total
/// mode count wins; remaining ties keep the earlier (lexicographically
/// smaller) candidate.
fn better(candidate: (&[usize], f64), best: (&[usize], f64)) -> bool {
    let (cand_modes, cand_score) = candidate;
    let (best_modes, best_score) = best;
    if cand_score != best_score {
        return cand_score > best_score;
    }
    let cand_total: usize = cand_modes.iter().sum();
    let best_total: usize = best_modes.iter().sum();
    cand_total < best_total
}

/// Fits each class with the candidate's mode counts and returns the MCC of
/// labeling the concatenated values by per-class density argmax against
/// the class of origin. Infeasible candidates score -1 and are flagged.
pub fn score_assignment(
    values_per_class: &[&[f64]],
    candidate: &[usize],
    seed: u64,
) -> ScoredCandidate {
    assert_eq!(values_per_class.len(), candidate.len());
    let (all_values, labels) = concatenate(values_per_class);
    let mut cache = LlCache::new();
    let needed: Vec<(ClassId, usize)> = candidate.iter().copied().enumerate().collect();
    prefetch(&mut cache, &needed, values_per_class, &all_values, seed);
    score_candidate(&cache, candidate, &labels, values_per_class.len())
}

fn grid_search_cached(
    values_per_class: &[&[f64]],
    zone: &SearchZone,
    seed: u64,
    cache: &mut LlCache,
    all_values: &[f64],
    labels: &[ClassId],
) -> ModeAssignment {
    let classes = values_per_class.len();
    let needed: Vec<(ClassId, usize)> = (0..classes)
        .flat_map(|c| (zone.lo[c]..=zone.hi[c]).map(move |m| (c, m)))
        .collect();
    prefetch(cache, &needed, values_per_class, all_values, seed);

    let lattice = zone.lattice();
    let scored = par::map_slice(&lattice, |candidate| {
        score_candidate(cache, candidate, labels, classes)
    });

    let mut best_idx = 0;
    let mut insufficient_seen = scored[0].insufficient;
    for i in 1..lattice.len() {
        insufficient_seen |= scored[i].insufficient;
        if better(
            (&lattice[i], scored[i].score),
            (&lattice[best_idx], scored[best_idx].score),
        ) {
            best_idx = i;
        }
    }
    ModeAssignment {
        modes: lattice[best_idx].clone(),
        score: scored[best_idx].score,
        evaluations: lattice.len(),
        insufficient_seen,
    }
}

/// Exhaustive search: scores every lattice point in the zone and returns
/// the maximizer under the tie rule.
pub fn grid_mode_select(
    values_per_class: &[&[f64]],
    zone: &SearchZone,
    seed: u64,
) -> Result<ModeAssignment, ModeSearchError> {
    if values_per_class.len() < 2 {
        return Err(ModeSearchError::TooFewClasses(values_per_class.len()));
    }
    zone.validate(values_per_class.len())?;
    let (all_values, labels) = concatenate(values_per_class);
    let mut cache = LlCache::new();
    Ok(grid_search_cached(
        values_per_class,
        zone,
        seed,
        &mut cache,
        &all_values,
        &labels,
    ))
}

/// Two-stage search: scores each sub-zone's center, then exhausts the
/// winning sub-zone. Much cheaper than the full grid on large zones at a
/// small accuracy cost.
pub fn fast_grid_select(
    values_per_class: &[&[f64]],
    zone: &SearchZone,
    seed: u64,
) -> Result<ModeAssignment, ModeSearchError> {
    if values_per_class.len() < 2 {
        return Err(ModeSearchError::TooFewClasses(values_per_class.len()));
    }
    zone.validate(values_per_class.len())?;
    let classes = values_per_class.len();
    let (all_values, labels) = concatenate(values_per_class);
    let mut cache = LlCache::new();

    let subzones = zone.subzones();
    let centers: Vec<Vec<usize>> = subzones.iter().map(SearchZone::center).collect();
    let needed: Vec<(ClassId, usize)> = centers
        .iter()
        .flat_map(|center| center.iter().copied().enumerate())
        .collect();
    prefetch(&mut cache, &needed, values_per_class, &all_values, seed);

    let center_scores = par::map_slice(&centers, |center| {
        score_candidate(&cache, center, &labels, classes)
    });
    let mut best_idx = 0;
    let mut insufficient_seen = center_scores[0].insufficient;
    for i in 1..centers.len() {
        insufficient_seen |= center_scores[i].insufficient;
        if better(
            (&centers[i], center_scores[i].score),
            (&centers[best_idx], center_scores[best_idx].score),
        ) {
            best_idx = i;
        }
    }

    let mut result = grid_search_cached(
        values_per_class,
        &subzones[best_idx],
        seed,
        &mut cache,
        &all_values,
        &labels,
    );
    result.evaluations += centers.len();
    result.insufficient_seen |= insufficient_seen;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn draws(mean: f64, std: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let normal = Normal::new(mean, std).unwrap();
        (0..n).map(|_| normal.sample(rng)).collect()
    }

    #[test]
    fn separated_classes_score_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = draws(0.0, 1.0, 3_000, &mut rng);
        let b = draws(10.0, 1.0, 3_000, &mut rng);
        let scored = score_assignment(&[&a, &b], &[1, 1], 0);
        assert!(scored.score > 0.99, "score {}", scored.score);
        assert!(!scored.insufficient);
    }

    #[test]
    fn identical_distributions_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = draws(0.0, 1.0, 10_000, &mut rng);
        let b = draws(0.0, 1.0, 10_000, &mut rng);
        for candidate in [[1, 1], [2, 1], [2, 3]] {
            let scored = score_assignment(&[&a, &b], &candidate, 0);
            assert!(
                scored.score.abs() < 0.05,
                "candidate {candidate:?} scored {}",
                scored.score
            );
        }
    }

    #[test]
    fn perfect_separation_scores_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = draws(0.0, 0.1, 500, &mut rng);
        let b = draws(100.0, 0.1, 500, &mut rng);
        let scored = score_assignment(&[&a, &b], &[1, 1], 0);
        assert_eq!(scored.score, 1.0);
    }

    #[test]
    fn insufficient_data_scores_minus_one() {
        let a = [0.0, 1.0, 2.0];
        let b = [5.0, 6.0, 7.0];
        let scored = score_assignment(&[&a, &b], &[2, 1], 0);
        assert_eq!(scored.score, -1.0);
        assert!(scored.insufficient);
    }

    #[test]
    fn grid_finds_the_bimodal_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut a = draws(0.0, 1.0, 2_000, &mut rng);
        a.extend(draws(10.0, 1.0, 2_000, &mut rng));
        let b = draws(5.0, 1.0, 4_000, &mut rng);
        let zone = SearchZone::uniform(2, 1, 4, 5);
        let picked = grid_mode_select(&[&a, &b], &zone, 0).unwrap();
        assert_eq!(picked.modes, vec![2, 1]);
        assert_eq!(picked.evaluations, 16);

        // exhaustive oracle: no lattice point may beat the winner
        for m1 in 1..=4 {
            for m2 in 1..=4 {
                let scored = score_assignment(&[&a, &b], &[m1, m2], 0);
                assert!(
                    scored.score <= picked.score + 1e-12,
                    "({m1},{m2}) scored {} above winner {}",
                    scored.score,
                    picked.score
                );
            }
        }
    }

    #[test]
    fn singleton_zone_is_returned_unsearched() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = draws(0.0, 1.0, 200, &mut rng);
        let b = draws(4.0, 1.0, 200, &mut rng);
        let zone = SearchZone::uniform(2, 1, 1, 5);
        let picked = grid_mode_select(&[&a, &b], &zone, 0).unwrap();
        assert_eq!(picked.modes, vec![1, 1]);
        assert_eq!(picked.evaluations, 1);
        let rescored = score_assignment(&[&a, &b], &[1, 1], 0);
        assert_eq!(picked.score, rescored.score);
    }

    #[test]
    fn all_tied_scores_resolve_to_the_smallest_candidate() {
        // identical value multisets for both classes: every candidate's
        // confusion matrix has proportional rows, so every MCC is 0 and
        // the tie rule must hand back (1, 1)
        let values: Vec<f64> = (0..40).map(|i| (i % 10) as f64).collect();
        let zone = SearchZone::uniform(2, 1, 3, 5);
        let picked = grid_mode_select(&[&values, &values], &zone, 0).unwrap();
        assert_eq!(picked.modes, vec![1, 1]);
        assert_eq!(picked.score, 0.0);
    }

    #[test]
    fn fast_matches_grid_on_small_zone() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut a = draws(-3.0, 0.8, 1_500, &mut rng);
        a.extend(draws(3.0, 0.8, 1_500, &mut rng));
        let b = draws(0.0, 1.0, 3_000, &mut rng);
        let zone = SearchZone::uniform(2, 1, 4, 5);
        assert!(zone.fits_one_subzone());
        let full = grid_mode_select(&[&a, &b], &zone, 0).unwrap();
        let fast = fast_grid_select(&[&a, &b], &zone, 0).unwrap();
        assert_eq!(full.modes, fast.modes);
        assert_eq!(full.score, fast.score);
    }

    #[test]
    fn fast_evaluation_budget_on_a_twenty_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut a = draws(0.0, 1.0, 400, &mut rng);
        a.extend(draws(10.0, 1.0, 400, &mut rng));
        let b = draws(5.0, 1.0, 800, &mut rng);
        let zone = SearchZone::default_for(2);
        let fast = fast_grid_select(&[&a, &b], &zone, 0).unwrap();
        // sixteen 5x5 sub-zone centers plus one exhausted 5x5 sub-zone
        assert_eq!(fast.evaluations, 16 + 25);
        assert!(fast.evaluations < zone.volume());
        let ratio = zone.volume() as f64 / fast.evaluations as f64;
        assert!(ratio >= 4.0, "evaluation ratio {ratio}");
        let full = grid_mode_select(&[&a, &b], &zone, 0).unwrap();
        assert!(fast.score <= full.score + 1e-12);
        assert!(
            fast.score >= 0.99 * full.score,
            "fast {} vs full {}",
            fast.score,
            full.score
        );
    }

    #[test]
    fn partial_subzones_cover_the_whole_zone() {
        let zone = SearchZone::uniform(2, 1, 7, 3);
        let subzones = zone.subzones();
        assert_eq!(subzones.len(), 9);
        let covered: usize = subzones.iter().map(SearchZone::volume).sum();
        assert_eq!(covered, zone.volume());
        assert_eq!(subzones.last().unwrap().hi, vec![7, 7]);
    }

    #[test]
    fn search_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut a = draws(0.0, 1.0, 600, &mut rng);
        a.extend(draws(6.0, 1.0, 600, &mut rng));
        let b = draws(3.0, 2.0, 1_200, &mut rng);
        let zone = SearchZone::uniform(2, 1, 6, 3);
        let first = fast_grid_select(&[&a, &b], &zone, 9).unwrap();
        let second = fast_grid_select(&[&a, &b], &zone, 9).unwrap();
        assert_eq!(first.modes, second.modes);
        assert_eq!(first.score, second.score);
        assert_eq!(first.evaluations, second.evaluations);
    }

    #[test]
    fn zone_validation() {
        assert!(matches!(
            SearchZone::uniform(2, 0, 4, 5).validate(2),
            Err(ModeSearchError::ZeroLowerBound)
        ));
        assert!(matches!(
            SearchZone {
                lo: vec![3, 3],
                hi: vec![2, 4],
                subzone_edge: 2
            }
            .validate(2),
            Err(ModeSearchError::EmptyZone { .. })
        ));
        assert!(matches!(
            SearchZone::uniform(3, 1, 4, 5).validate(2),
            Err(ModeSearchError::WrongClassCount { .. })
        ));
    }
}
