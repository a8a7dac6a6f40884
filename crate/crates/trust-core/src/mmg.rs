//! One-dimensional multi-modal Gaussian densities.
//!
//! Each representative/class pair gets its own mixture, fitted by EM on
//! that class's representative values. Component weights sum to one, and
//! every component carries the precomputed constant
//! `alpha = ln(weight) - ln(std) - ln(2*pi)/2`, so a log-density
//! evaluation is a max-shifted log-sum-exp over
//! `alpha_m - ((x - mean_m) / std_m)^2 / 2`.
//!
//! EM initialization is deterministic: component means sit at evenly
//! spaced quantiles of the data, standard deviations start at the sample
//! std over the mode count, and weights start uniform. The seed only
//! perturbs coincident initial means (heavily duplicated data), so a
//! fixed seed always reproduces the same fit.

use crate::data::ClassId;
use crate::par;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Lower bound on component standard deviations. Near-duplicate data
/// collapses EM components otherwise.
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Weights never reach exactly zero so `ln(weight)` stays finite.
const WEIGHT_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.8378770664093453;

/// EM stops when the data log-likelihood improves by less than this.
pub const EM_TOLERANCE: f64 = 1e-6;

/// Iteration cap for one EM fit.
pub const EM_MAX_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum MmgError {
    #[error("fitting {modes} modes needs at least {needed} values, got {values}")]
    InsufficientData {
        modes: usize,
        needed: usize,
        values: usize,
    },
    #[error("mode count must be at least 1")]
    ZeroModes,
    #[error("values must be finite")]
    NonFinite,
}

/// One Gaussian component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
    /// ln(weight) - ln(std) - ln(2 pi)/2, fixed once the fit settles.
    pub alpha: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: f64, std: f64) -> Self {
        let std = std.max(SIGMA_FLOOR);
        GaussianComponent {
            weight,
            mean,
            std,
            alpha: weight.ln() - std.ln() - 0.5 * LN_2PI,
        }
    }
}

/// Fitted mixture for one (representative, class) slot.
#[derive(Debug, Clone)]
pub struct MmgDensity {
    pub components: Vec<GaussianComponent>,
    pub rep_index: usize,
    pub class: ClassId,
    /// True when any component std had to be clamped to [`SIGMA_FLOOR`].
    pub clamped: bool,
}

impl MmgDensity {
    pub fn mode_count(&self) -> usize {
        self.components.len()
    }

    /// Tags the density with its grid position.
    pub fn positioned(mut self, rep_index: usize, class: ClassId) -> Self {
        self.rep_index = rep_index;
        self.class = class;
        self
    }
}

/// Per-iteration data log-likelihoods of an EM run (natural log).
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub log_likelihoods: Vec<f64>,
}

/// Max-shifted log-sum-exp; empty input is negative infinity.
pub fn logsumexp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

fn quantile_init(values: &[f64], modes: usize, seed: u64) -> Vec<GaussianComponent> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();

    let mut means: Vec<f64> = (0..modes)
        .map(|m| {
            let q = (m as f64 + 0.5) / modes as f64;
            sorted[((q * (n - 1) as f64).round() as usize).min(n - 1)]
        })
        .collect();
    // heavily duplicated data can give coincident quantiles; spread them
    // with a tiny seeded jitter so components can specialize
    let coincident = means.windows(2).any(|w| w[0] == w[1]);
    if coincident {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = if std > 0.0 { std * 1e-3 } else { 1e-6 };
        for (m, mean) in means.iter_mut().enumerate() {
            *mean += spread * (m as f64 + rng.random::<f64>());
        }
    }

    let init_std = (std / modes as f64).max(SIGMA_FLOOR);
    means
        .into_iter()
        .map(|mu| GaussianComponent::new(1.0 / modes as f64, mu, init_std))
        .collect()
}

struct Accumulator {
    log_likelihood: f64,
    resp_sum: Vec<f64>,
    weighted_x: Vec<f64>,
    weighted_sq_dev: Vec<f64>,
}

/// E-step over a chunk: responsibilities via log-sum-exp, accumulating the
/// statistics the M-step needs. Squared deviations are taken around the
/// current means to keep the one-pass variance well-conditioned.
fn accumulate_chunk(chunk: &[f64], components: &[GaussianComponent]) -> Accumulator {
    let m = components.len();
    let mut acc = Accumulator {
        log_likelihood: 0.0,
        resp_sum: vec![0.0; m],
        weighted_x: vec![0.0; m],
        weighted_sq_dev: vec![0.0; m],
    };
    let mut terms = vec![0.0; m];
    for &x in chunk {
        for (j, c) in components.iter().enumerate() {
            let z = (x - c.mean) / c.std;
            terms[j] = c.alpha - 0.5 * z * z;
        }
        let lse = logsumexp(&terms);
        acc.log_likelihood += lse;
        for (j, c) in components.iter().enumerate() {
            let r = (terms[j] - lse).exp();
            acc.resp_sum[j] += r;
            acc.weighted_x[j] += r * x;
            acc.weighted_sq_dev[j] += r * (x - c.mean) * (x - c.mean);
        }
    }
    acc
}

/// Fits a mixture with exactly `modes` components by EM and returns the
/// density along with its per-iteration log-likelihood trace.
pub fn em_fit_traced(
    values: &[f64],
    modes: usize,
    seed: u64,
) -> Result<(MmgDensity, EmTrace), MmgError> {
    if modes == 0 {
        return Err(MmgError::ZeroModes);
    }
    if values.len() < 2 * modes {
        return Err(MmgError::InsufficientData {
            modes,
            needed: 2 * modes,
            values: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MmgError::NonFinite);
    }

    let n = values.len() as f64;
    let mut components = quantile_init(values, modes, seed);
    let mut clamped = false;
    let mut trace = Vec::new();

    for _ in 0..EM_MAX_ITERS {
        let partials = par::map_chunks(values, |_, chunk| accumulate_chunk(chunk, &components));
        let mut ll = 0.0;
        let mut resp_sum = vec![0.0; modes];
        let mut weighted_x = vec![0.0; modes];
        let mut weighted_sq_dev = vec![0.0; modes];
        for part in partials {
            ll += part.log_likelihood;
            for j in 0..modes {
                resp_sum[j] += part.resp_sum[j];
                weighted_x[j] += part.weighted_x[j];
                weighted_sq_dev[j] += part.weighted_sq_dev[j];
            }
        }

        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < EM_TOLERANCE);
        trace.push(ll);

        let mut weights: Vec<f64> = resp_sum
            .iter()
            .map(|&r| (r / n).max(WEIGHT_FLOOR))
            .collect();
        let weight_total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= weight_total;
        }
        let mut next = Vec::with_capacity(modes);
        for j in 0..modes {
            let (mean, var) = if resp_sum[j] > 0.0 {
                let new_mean = weighted_x[j] / resp_sum[j];
                let shift = new_mean - components[j].mean;
                let var = (weighted_sq_dev[j] / resp_sum[j] - shift * shift).max(0.0);
                (new_mean, var)
            } else {
                (components[j].mean, components[j].std * components[j].std)
            };
            let std = var.sqrt();
            if std < SIGMA_FLOOR {
                clamped = true;
            }
            next.push(GaussianComponent::new(weights[j], mean, std));
        }
        components = next;

        if converged {
            break;
        }
    }

    Ok((
        MmgDensity {
            components,
            rep_index: 0,
            class: 0,
            clamped,
        },
        EmTrace {
            log_likelihoods: trace,
        },
    ))
}

/// [`em_fit_traced`] without the trace.
pub fn em_fit(values: &[f64], modes: usize, seed: u64) -> Result<MmgDensity, MmgError> {
    em_fit_traced(values, modes, seed).map(|(d, _)| d)
}

/// Log-density of `value` under the mixture, evaluated with the max-shift
/// trick so distant values neither overflow nor underflow.
pub fn rep_log_likelihood(density: &MmgDensity, value: f64) -> f64 {
    assert!(value.is_finite(), "log-likelihood of a non-finite value");
    let mut max = f64::NEG_INFINITY;
    for c in &density.components {
        let z = (value - c.mean) / c.std;
        let term = c.alpha - 0.5 * (z * z).min(1e300);
        if term > max {
            max = term;
        }
    }
    let mut sum = 0.0;
    for c in &density.components {
        let z = (value - c.mean) / c.std;
        let term = c.alpha - 0.5 * (z * z).min(1e300);
        sum += (term - max).exp();
    }
    max + sum.ln()
}

/// Per-class evaluation of one sample.
#[derive(Debug, Clone)]
pub struct ClassLikelihood {
    pub class: ClassId,
    /// Log-likelihood of each representative value under this class.
    pub per_rep: Vec<f64>,
    /// Importance-weighted sum of `per_rep`.
    pub total: f64,
}

/// The explainer's verdict for one sample.
#[derive(Debug, Clone)]
pub struct Explanation {
    /// Projected representative values, one row per class (each class
    /// projects the sample with its own factor basis).
    pub projected: Vec<Vec<f64>>,
    pub per_class: Vec<ClassLikelihood>,
    /// Argmax class of the totals; ties break to the lowest class index.
    pub label: ClassId,
    /// Best total minus runner-up total (non-negative).
    pub margin: f64,
    /// (column, token) pairs the factor models had never seen.
    pub unseen: Vec<(String, String)>,
}

impl Explanation {
    /// Representative values as seen by the winning class's model.
    pub fn projected_for_label(&self) -> &[f64] {
        &self.projected[self.label]
    }
}

/// Scores one sample against every class: log-likelihood per
/// representative, importance-weighted totals, and the argmax label.
///
/// `densities[i][c]` is the mixture for representative i under class c;
/// `projected[c][i]` is the sample's i-th representative value under class
/// c's factor basis.
pub fn explain(
    densities: &[Vec<MmgDensity>],
    weights: &[f64],
    projected: Vec<Vec<f64>>,
    unseen: Vec<(String, String)>,
) -> Explanation {
    let class_count = projected.len();
    let k = weights.len();
    debug_assert!(densities.len() == k);

    let per_class: Vec<ClassLikelihood> = (0..class_count)
        .map(|c| {
            let per_rep: Vec<f64> = (0..k)
                .map(|i| rep_log_likelihood(&densities[i][c], projected[c][i]))
                .collect();
            let total = weights.iter().zip(&per_rep).map(|(w, l)| w * l).sum();
            ClassLikelihood {
                class: c,
                per_rep,
                total,
            }
        })
        .collect();

    let mut label = 0;
    for c in 1..class_count {
        if per_class[c].total > per_class[label].total {
            label = c;
        }
    }
    let mut runner_up = f64::NEG_INFINITY;
    for (c, cl) in per_class.iter().enumerate() {
        if c != label && cl.total > runner_up {
            runner_up = cl.total;
        }
    }
    let margin = if runner_up.is_finite() {
        per_class[label].total - runner_up
    } else {
        0.0
    };

    Explanation {
        projected,
        per_class,
        label,
        margin,
        unseen,
    }
}
