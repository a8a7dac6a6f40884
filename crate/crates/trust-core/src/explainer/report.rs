//! Human-facing report tables and density-curve export.
//!
//! The report mirrors how a batch of explanations is read: one
//! log-likelihood matrix per class (samples x representatives), a winner
//! grid marking which class each representative voted for, and the
//! weighted totals with the final label. Representatives that disagree
//! with the final label are called out — individual representatives are
//! allowed to be wrong as long as the weighted total lands right.

use super::{ExplainError, TrustCore};
use crate::data::ClassId;
use crate::mmg::{self, Explanation};
use serde::Serialize;
use std::fmt::Write as _;

/// Tabular view over a batch of explanations.
#[derive(Debug, Clone, Serialize)]
pub struct ExplanationReport {
    pub class_count: usize,
    pub rep_count: usize,
    /// `per_class[c][s][i]`: log-likelihood of sample s's representative i
    /// under class c.
    pub per_class: Vec<Vec<Vec<f64>>>,
    /// `winners[s][i]`: class with the highest per-representative
    /// log-likelihood (ties to the lowest class index).
    pub winners: Vec<Vec<ClassId>>,
    /// `totals[s][c]`: importance-weighted total log-likelihood.
    pub totals: Vec<Vec<f64>>,
    /// Final label per sample (argmax of the totals).
    pub labels: Vec<ClassId>,
    pub margins: Vec<f64>,
    /// True where at least one representative voted against the final label.
    pub disagreements: Vec<bool>,
}

/// Assembles the report tables from explanations produced by this core.
pub fn report(core: &TrustCore, explanations: &[Explanation]) -> ExplanationReport {
    let class_count = core.class_count;
    let rep_count = core.k();

    let per_class: Vec<Vec<Vec<f64>>> = (0..class_count)
        .map(|c| {
            explanations
                .iter()
                .map(|e| e.per_class[c].per_rep.clone())
                .collect()
        })
        .collect();

    let winners: Vec<Vec<ClassId>> = explanations
        .iter()
        .map(|e| {
            (0..rep_count)
                .map(|i| {
                    let mut best = 0;
                    for c in 1..class_count {
                        if e.per_class[c].per_rep[i] > e.per_class[best].per_rep[i] {
                            best = c;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();

    let labels: Vec<ClassId> = explanations.iter().map(|e| e.label).collect();
    let disagreements = winners
        .iter()
        .zip(&labels)
        .map(|(votes, &label)| votes.iter().any(|&v| v != label))
        .collect();

    ExplanationReport {
        class_count,
        rep_count,
        per_class,
        winners,
        totals: explanations
            .iter()
            .map(|e| e.per_class.iter().map(|cl| cl.total).collect())
            .collect(),
        labels,
        margins: explanations.iter().map(|e| e.margin).collect(),
        disagreements,
    }
}

impl ExplanationReport {
    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    /// Aligned plain-text rendering of the matrices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in 0..self.class_count {
            let _ = writeln!(out, "Log-likelihood per representative, class {c}:");
            let _ = write!(out, "{:>8}", "sample");
            for i in 0..self.rep_count {
                let _ = write!(out, "{:>12}", format!("R{}", i + 1));
            }
            out.push('\n');
            for (s, row) in self.per_class[c].iter().enumerate() {
                let _ = write!(out, "{:>8}", s + 1);
                for v in row {
                    let _ = write!(out, "{v:>12.4}");
                }
                out.push('\n');
            }
            out.push('\n');
        }

        let _ = writeln!(out, "Winning class per representative:");
        let _ = write!(out, "{:>8}", "sample");
        for i in 0..self.rep_count {
            let _ = write!(out, "{:>6}", format!("R{}", i + 1));
        }
        let _ = writeln!(out, "{:>8}", "final");
        for (s, votes) in self.winners.iter().enumerate() {
            let _ = write!(out, "{:>8}", s + 1);
            for v in votes {
                let _ = write!(out, "{v:>6}");
            }
            let _ = write!(out, "{:>8}", self.labels[s]);
            if self.disagreements[s] {
                out.push_str("  (split vote)");
            }
            out.push('\n');
        }
        out.push('\n');

        let _ = writeln!(out, "Weighted total log-likelihood:");
        let _ = write!(out, "{:>8}", "sample");
        for c in 0..self.class_count {
            let _ = write!(out, "{:>12}", format!("class {c}"));
        }
        let _ = writeln!(out, "{:>8}{:>12}", "label", "margin");
        for (s, totals) in self.totals.iter().enumerate() {
            let _ = write!(out, "{:>8}", s + 1);
            for t in totals {
                let _ = write!(out, "{t:>12.4}");
            }
            let _ = writeln!(out, "{:>8}{:>12.4}", self.labels[s], self.margins[s]);
        }
        out
    }
}

/// Sampled pdf curve for one (representative, class) pair.
#[derive(Debug, Clone, Serialize)]
pub struct CurveClass {
    pub class: ClassId,
    /// (weight, mean, std) per mixture component.
    pub components: Vec<(f64, f64, f64)>,
    /// (x, pdf(x)) samples over the export range.
    pub points: Vec<(f64, f64)>,
}

/// Density curves of one representative across all classes, sampled over
/// the union of every component's mean +/- 6 std.
#[derive(Debug, Clone, Serialize)]
pub struct CurveExport {
    pub rep_index: usize,
    pub lo: f64,
    pub hi: f64,
    pub classes: Vec<CurveClass>,
}

impl CurveExport {
    /// Two-column text (x, pdf) with a component-parameter header,
    /// suitable for any plotting tool.
    pub fn to_text(&self, class: ClassId) -> String {
        let curve = &self.classes[class];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# representative {} class {}",
            self.rep_index + 1,
            class
        );
        for (w, mu, sigma) in &curve.components {
            let _ = writeln!(
                out,
                "# component weight={w:.17e} mean={mu:.17e} std={sigma:.17e}"
            );
        }
        for (x, pdf) in &curve.points {
            let _ = writeln!(out, "{x:.17e} {pdf:.17e}");
        }
        out
    }
}

/// Samples every class's fitted density for representative `rep_index` at
/// `points` (at least 512) evenly spaced positions.
pub fn export_curves(
    core: &TrustCore,
    rep_index: usize,
    points: usize,
) -> Result<CurveExport, ExplainError> {
    if rep_index >= core.k() {
        return Err(ExplainError::RepOutOfRange {
            index: rep_index,
            k: core.k(),
        });
    }
    let points = points.max(512);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for density in &core.densities[rep_index] {
        for c in &density.components {
            lo = lo.min(c.mean - 6.0 * c.std);
            hi = hi.max(c.mean + 6.0 * c.std);
        }
    }
    let step = (hi - lo) / (points - 1) as f64;

    let classes = core.densities[rep_index]
        .iter()
        .map(|density| CurveClass {
            class: density.class,
            components: density
                .components
                .iter()
                .map(|c| (c.weight, c.mean, c.std))
                .collect(),
            points: (0..points)
                .map(|p| {
                    let x = lo + p as f64 * step;
                    (x, mmg::rep_log_likelihood(density, x).exp())
                })
                .collect(),
        })
        .collect();

    Ok(CurveExport {
        rep_index,
        lo,
        hi,
        classes,
    })
}
