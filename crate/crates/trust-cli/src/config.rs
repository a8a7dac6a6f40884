//! CLI argument surface. Every flag can also be set through a `TRUST_`
//! environment variable; the effective configuration is echoed verbatim
//! into the run manifest so outputs are reproducible.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "trust",
    about = "Statistical explainer for black-box classifiers on tabular data",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an explainer core from data and predicted labels.
    Build(RunConfig),
    /// Explain samples against a built core (writes explanations + report).
    Explain(RunConfig),
    /// Explain samples and score fidelity against the primary model's labels.
    Evaluate(RunConfig),
    /// Run the mode search alone and write the chosen mode counts.
    Modes(RunConfig),
    /// Export density curves for plotting.
    Curves(RunConfig),
    /// Timing harness: explain-time scaling, mode-search comparison, and
    /// the perturbation-baseline comparison.
    Bench(RunConfig),
    /// Generate a labeled synthetic CSV from a mixture spec.
    Synth(RunConfig),
}

impl Command {
    pub fn config(&self) -> &RunConfig {
        match self {
            Command::Build(c)
            | Command::Explain(c)
            | Command::Evaluate(c)
            | Command::Modes(c)
            | Command::Curves(c)
            | Command::Bench(c)
            | Command::Synth(c) => c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Build(_) => "build",
            Command::Explain(_) => "explain",
            Command::Evaluate(_) => "evaluate",
            Command::Modes(_) => "modes",
            Command::Curves(_) => "curves",
            Command::Bench(_) => "bench",
            Command::Synth(_) => "synth",
        }
    }
}

/// All tunables in one place; each subcommand validates the subset it
/// needs before any stage runs.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunConfig {
    /// Number of representatives.
    #[arg(long, env = "TRUST_K", default_value_t = 4)]
    pub k: usize,

    /// Bin count for the mutual-information ranking.
    #[arg(long, env = "TRUST_BINS", default_value_t = 64)]
    pub bins: usize,

    /// Largest mode count per class in the search zone (lower bound is 1).
    #[arg(long, env = "TRUST_ZONE_MAX", default_value_t = 20)]
    pub zone_max: usize,

    /// Sub-zone edge length for the fast mode search.
    #[arg(long, env = "TRUST_SUBZONE", default_value_t = 5)]
    pub subzone: usize,

    /// Exhaustive grid search instead of the fast sub-zone search.
    #[arg(long, env = "TRUST_FULL_SEARCH", default_value_t = false)]
    pub full_search: bool,

    #[arg(long, env = "TRUST_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Train fraction for commands that split (bench).
    #[arg(long, env = "TRUST_RATIO", default_value_t = 0.8)]
    pub ratio: f64,

    /// Class treated as positive (attack) in metrics.
    #[arg(long, env = "TRUST_POSITIVE_CLASS", default_value_t = 1)]
    pub positive_class: usize,

    /// Data CSV.
    #[arg(long, env = "TRUST_DATA")]
    pub data: Option<PathBuf>,

    /// Schema sidecar JSON.
    #[arg(long, env = "TRUST_SCHEMA")]
    pub schema: Option<PathBuf>,

    /// Predictions file (one class index per line); overrides the
    /// schema's label column as the label source.
    #[arg(long, env = "TRUST_PREDICTIONS")]
    pub predictions: Option<PathBuf>,

    /// Core file to write (build) or read (explain/evaluate/curves).
    #[arg(long, env = "TRUST_CORE")]
    pub core: Option<PathBuf>,

    /// Output directory; all artifacts and the run manifest land here.
    #[arg(long, env = "TRUST_OUT")]
    pub out: Option<PathBuf>,

    /// Synthetic-data spec JSON (synth, bench).
    #[arg(long, env = "TRUST_SPEC")]
    pub spec: Option<PathBuf>,

    /// Representative index for curve export (default: all).
    #[arg(long, env = "TRUST_REP")]
    pub rep: Option<usize>,

    /// Samples per curve (at least 512).
    #[arg(long, env = "TRUST_POINTS", default_value_t = 1024)]
    pub points: usize,

    /// Number of samples echoed into the explanation report tables.
    #[arg(long, env = "TRUST_REPORT_SAMPLES", default_value_t = 6)]
    pub report_samples: usize,

    /// Worker threads (default: all cores; 1 = sequential).
    #[arg(long, env = "TRUST_WORKERS")]
    pub workers: Option<usize>,

    /// Batch sizes for the bench scaling series.
    #[arg(
        long,
        env = "TRUST_SIZES",
        value_delimiter = ',',
        default_value = "1000,5000,10000,50000,100000"
    )]
    pub sizes: Vec<usize>,

    /// Perturbations per sample for the baseline surrogate.
    #[arg(long, env = "TRUST_PERTURBATIONS", default_value_t = 300)]
    pub perturbations: usize,
}

impl RunConfig {
    /// Effective worker count for the manifest and timing records.
    pub fn effective_workers(&self) -> usize {
        #[cfg(feature = "parallel")]
        {
            self.workers.unwrap_or_else(rayon::current_num_threads)
        }
        #[cfg(not(feature = "parallel"))]
        {
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[test]
    fn defaults_parse() {
        let cli = Cli::parse_from(["trust", "synth", "--spec", "s.json", "--out", "o"]);
        let config = cli.command.config();
        assert_eq!(config.k, 4);
        assert_eq!(config.bins, 64);
        assert_eq!(config.zone_max, 20);
        assert_eq!(config.subzone, 5);
        assert_eq!(config.sizes, vec![1000, 5000, 10000, 50000, 100000]);
    }

    #[test]
    fn flags_mirror_run_config() {
        let cli = Cli::parse_from([
            "trust",
            "build",
            "--data",
            "d.csv",
            "--schema",
            "s.json",
            "--predictions",
            "p.txt",
            "--core",
            "c.trust",
            "--out",
            "o",
            "--k",
            "8",
            "--bins",
            "32",
            "--zone-max",
            "10",
            "--subzone",
            "2",
            "--seed",
            "9",
            "--ratio",
            "0.7",
            "--positive-class",
            "0",
        ]);
        let config = cli.command.config();
        assert_eq!(config.k, 8);
        assert_eq!(config.bins, 32);
        assert_eq!(config.zone_max, 10);
        assert_eq!(config.subzone, 2);
        assert_eq!(config.seed, 9);
        assert_eq!(config.ratio, 0.7);
        assert_eq!(config.positive_class, 0);
        assert!(config.data.is_some() && config.core.is_some());
    }
}
