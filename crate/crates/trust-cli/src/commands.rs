//! Subcommand implementations. Every command validates its inputs up
//! front, writes its artifacts under `--out`, and finishes by writing a
//! run manifest that echoes the effective configuration. Structured
//! outputs carry no timestamps, so identical configurations over
//! identical inputs yield byte-identical artifacts (the manifest is the
//! one exception: it records the start time).

use crate::bench::{
    baseline_comparison, explain_scaling, harness_fixture, mode_search_comparison, r_squared,
    TimingRecord,
};
use crate::config::{Command, RunConfig};
use crate::synth::{generate_synthetic, write_csv, SynthSpec};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use trust_core::data::{load_labeled, load_predictions, load_schema, ClassId, LabeledDataset};
use trust_core::explainer::{
    build_core, explain_batch, export_curves, load_core, report, save_core, BuildParams, TrustCore,
};
use trust_core::mmg::Explanation;
use trust_core::modesearch::SearchZone;

/// Dispatches a parsed command, pinning the worker pool when requested.
pub fn run(command: &Command) -> Result<()> {
    let config = command.config();
    #[cfg(feature = "parallel")]
    {
        if let Some(workers) = config.workers {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .context("building worker pool")?;
            return pool.install(|| dispatch(command));
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if config.workers.map_or(false, |w| w > 1) {
            eprintln!("note: built without the `parallel` feature; running sequentially");
        }
    }
    dispatch(command)
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Build(c) => cmd_build(c, command.name()),
        Command::Explain(c) => cmd_explain(c, command.name()),
        Command::Evaluate(c) => cmd_evaluate(c, command.name()),
        Command::Modes(c) => cmd_modes(c, command.name()),
        Command::Curves(c) => cmd_curves(c, command.name()),
        Command::Bench(c) => cmd_bench(c, command.name()),
        Command::Synth(c) => cmd_synth(c, command.name()),
    }
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let out = config.out.clone().context("--out is required")?;
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(out)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("{flag} is required for this command"))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    machine: Machine,
    started_unix: u64,
    elapsed_seconds: f64,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Machine {
    os: &'static str,
    arch: &'static str,
    workers: usize,
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: &RunConfig,
    run: &RunClock,
    artifacts: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        command,
        config,
        machine: Machine {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            workers: config.effective_workers(),
        },
        started_unix: run.started_unix,
        elapsed_seconds: run.clock.elapsed().as_secs_f64(),
        artifacts: artifacts
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&out.join("run_manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Wall-clock bookkeeping for the manifest (timestamps and durations live
/// only there, keeping every other artifact reproducible byte for byte).
struct RunClock {
    started_unix: u64,
    clock: std::time::Instant,
}

impl RunClock {
    fn start() -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunClock {
            started_unix,
            clock: std::time::Instant::now(),
        }
    }
}

fn load_labeled_inputs(config: &RunConfig) -> Result<LabeledDataset> {
    let data = required(&config.data, "--data")?;
    let schema_path = required(&config.schema, "--schema")?;
    let schema = load_schema(schema_path).context("loading schema sidecar")?;
    load_labeled(data, &schema, config.predictions.as_deref()).context("loading data with labels")
}

fn zone_for(config: &RunConfig, classes: usize) -> SearchZone {
    SearchZone::uniform(classes, 1, config.zone_max, config.subzone)
}

fn build_params(config: &RunConfig, classes: usize) -> BuildParams {
    BuildParams {
        k: config.k,
        bins: config.bins,
        zone: zone_for(config, classes),
        seed: config.seed,
        fast_search: !config.full_search,
    }
}

#[derive(Serialize)]
struct BuildSummary {
    classes: usize,
    class_counts: Vec<usize>,
    k: usize,
    representatives: Vec<RepSummary>,
}

#[derive(Serialize)]
struct RepSummary {
    rep: usize,
    factor: usize,
    weight: f64,
    modes: Vec<usize>,
    search_score: f64,
    search_evaluations: usize,
}

fn summarize_core(core: &TrustCore, counts: Vec<usize>) -> BuildSummary {
    BuildSummary {
        classes: core.class_count,
        class_counts: counts,
        k: core.k(),
        representatives: (0..core.k())
            .map(|i| RepSummary {
                rep: i,
                factor: core.reps.indices[i],
                weight: core.reps.normalized_weights[i],
                modes: core.modes[i].modes.clone(),
                search_score: core.modes[i].score,
                search_evaluations: core.modes[i].evaluations,
            })
            .collect(),
    }
}

fn cmd_build(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let labeled = load_labeled_inputs(config)?;
    let core_path = config
        .core
        .clone()
        .unwrap_or_else(|| out.join("core.trust"));

    let core = build_core(&labeled, &build_params(config, labeled.class_count))?;
    save_core(&core, &core_path).context("writing core file")?;

    let mut counts = vec![0usize; labeled.class_count];
    for &l in &labeled.labels {
        counts[l] += 1;
    }
    let summary_path = out.join("build_summary.json");
    write_json(&summary_path, &summarize_core(&core, counts))?;

    write_manifest(&out, name, config, &run, &[core_path, summary_path])?;
    Ok(())
}

#[derive(Serialize)]
struct ExplanationRecord<'a> {
    index: usize,
    label: ClassId,
    margin: f64,
    totals: Vec<f64>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    unseen: &'a [(String, String)],
}

fn write_explanations(path: &Path, explanations: &[Explanation]) -> Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    for (index, explanation) in explanations.iter().enumerate() {
        let record = ExplanationRecord {
            index,
            label: explanation.label,
            margin: explanation.margin,
            totals: explanation.per_class.iter().map(|c| c.total).collect(),
            unseen: &explanation.unseen,
        };
        serde_json::to_writer(&mut writer, &record).context("serializing explanation")?;
        writer
            .write_all(b"\n")
            .context("writing explanation line")?;
    }
    Ok(())
}

fn load_core_and_data(config: &RunConfig) -> Result<(TrustCore, trust_core::data::Dataset)> {
    let core_path = required(&config.core, "--core")?;
    let core = load_core(core_path).context("loading core file")?;
    let data_path = required(&config.data, "--data")?;
    let schema_path = required(&config.schema, "--schema")?;
    let schema = load_schema(schema_path).context("loading schema sidecar")?;
    let data = trust_core::data::load_csv(data_path, &schema).context("loading data")?;
    Ok((core, data))
}

fn cmd_explain(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let (core, data) = load_core_and_data(config)?;
    let outcome = explain_batch(&core, &data, None)?;

    let explanations_path = out.join("explanations.jsonl");
    write_explanations(&explanations_path, &outcome.explanations)?;

    let shown = config.report_samples.min(outcome.explanations.len());
    let tables = report(&core, &outcome.explanations[..shown]);
    let report_json = out.join("report.json");
    write_json(&report_json, &tables)?;
    let report_txt = out.join("report.txt");
    std::fs::write(&report_txt, tables.to_text())
        .with_context(|| format!("writing {}", report_txt.display()))?;

    write_manifest(
        &out,
        name,
        config,
        &run,
        &[explanations_path, report_json, report_txt],
    )?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    classes: usize,
    positive_class: usize,
    confusion: Vec<Vec<u64>>,
    mcc: f64,
    accuracy: f64,
    undetected_rate: Option<f64>,
    samples: u64,
}

fn metrics_text(report: &MetricsReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "samples        {:>12}", report.samples);
    let _ = writeln!(out, "accuracy       {:>12.4}", report.accuracy);
    let _ = writeln!(out, "mcc            {:>12.4}", report.mcc);
    match report.undetected_rate {
        Some(ur) => {
            let _ = writeln!(out, "undetected     {ur:>12.4}");
        }
        None => {
            let _ = writeln!(out, "undetected     {:>12}", "n/a");
        }
    }
    let _ = writeln!(
        out,
        "\nconfusion (rows = primary label, cols = explained label):"
    );
    let _ = write!(out, "{:>10}", "");
    for c in 0..report.classes {
        let _ = write!(out, "{:>12}", format!("as {c}"));
    }
    out.push('\n');
    for (r, row) in report.confusion.iter().enumerate() {
        let _ = write!(out, "{:>10}", format!("class {r}"));
        for v in row {
            let _ = write!(out, "{v:>12}");
        }
        out.push('\n');
    }
    out
}

fn cmd_evaluate(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let (core, data) = load_core_and_data(config)?;

    // primary labels: predictions file, or the schema's label column
    let labels: Vec<ClassId> = match &config.predictions {
        Some(path) => load_predictions(path).context("loading predictions")?,
        None => {
            let schema = load_schema(required(&config.schema, "--schema")?)?;
            if schema.label_column.is_none() {
                bail!("evaluate needs --predictions or a schema label_column");
            }
            load_labeled(required(&config.data, "--data")?, &schema, None)?.labels
        }
    };

    let outcome = explain_batch(&core, &data, Some(&labels))?;
    let fidelity = outcome
        .fidelity
        .expect("labels were provided")
        .with_positive_class(config.positive_class);

    let metrics = MetricsReport {
        classes: fidelity.classes(),
        positive_class: config.positive_class,
        confusion: (0..fidelity.classes())
            .map(|r| {
                (0..fidelity.classes())
                    .map(|a| fidelity.get(r, a))
                    .collect()
            })
            .collect(),
        mcc: fidelity.mcc(),
        accuracy: fidelity.accuracy(),
        undetected_rate: fidelity.undetected_rate().ok(),
        samples: fidelity.total(),
    };
    let metrics_json = out.join("metrics.json");
    write_json(&metrics_json, &metrics)?;
    let metrics_txt = out.join("metrics.txt");
    std::fs::write(&metrics_txt, metrics_text(&metrics))
        .with_context(|| format!("writing {}", metrics_txt.display()))?;

    write_manifest(&out, name, config, &run, &[metrics_json, metrics_txt])?;
    Ok(())
}

fn cmd_modes(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let labeled = load_labeled_inputs(config)?;

    // run the pipeline up to the mode search
    let partition = trust_core::data::partition_by_label(&labeled)?;
    let fitted: Vec<_> = partition
        .parts
        .iter()
        .enumerate()
        .map(|(c, part)| trust_core::famd::fit_famd(part, c))
        .collect::<Result<Vec<_>, _>>()
        .context("factor-analysis stage")?;
    let scores: Vec<_> = fitted.into_iter().map(|(_, s)| s).collect();
    let labels: Vec<ClassId> = scores
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.class, s.n_rows()))
        .collect();
    let reps = trust_core::reps::pick_representatives(&scores, &labels, config.k, config.bins)
        .context("representative stage")?;

    let zone = zone_for(config, labeled.class_count);
    #[derive(Serialize)]
    struct ModeRecord {
        rep: usize,
        factor: usize,
        weight: f64,
        modes: Vec<usize>,
        score: f64,
        evaluations: usize,
    }
    let mut records = Vec::with_capacity(config.k);
    for (i, &factor) in reps.indices.iter().enumerate() {
        let values: Vec<&[f64]> = scores.iter().map(|s| s.factor(factor)).collect();
        let assignment = if config.full_search {
            trust_core::modesearch::grid_mode_select(&values, &zone, config.seed)
        } else {
            trust_core::modesearch::fast_grid_select(&values, &zone, config.seed)
        }
        .context("mode-search stage")?;
        records.push(ModeRecord {
            rep: i,
            factor,
            weight: reps.normalized_weights[i],
            modes: assignment.modes,
            score: assignment.score,
            evaluations: assignment.evaluations,
        });
    }

    let modes_path = out.join("modes.json");
    write_json(&modes_path, &records)?;
    write_manifest(&out, name, config, &run, &[modes_path])?;
    Ok(())
}

fn cmd_curves(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let core_path = required(&config.core, "--core")?;
    let core = load_core(core_path).context("loading core file")?;

    let reps: Vec<usize> = match config.rep {
        Some(i) => vec![i],
        None => (0..core.k()).collect(),
    };
    let mut artifacts = Vec::new();
    for rep_index in reps {
        let export = export_curves(&core, rep_index, config.points)?;
        let json_path = out.join(format!("curves_rep{rep_index}.json"));
        write_json(&json_path, &export)?;
        artifacts.push(json_path);
        for class in 0..core.class_count {
            let txt_path = out.join(format!("curves_rep{rep_index}_class{class}.txt"));
            std::fs::write(&txt_path, export.to_text(class))
                .with_context(|| format!("writing {}", txt_path.display()))?;
            artifacts.push(txt_path);
        }
    }
    write_manifest(&out, name, config, &run, &artifacts)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary {
    scaling_r_squared: f64,
    scaling_sizes: Vec<usize>,
    scaling_seconds: Vec<f64>,
    baseline_speedup: f64,
    mode_search_full_evaluations: u64,
    mode_search_fast_evaluations: u64,
    mode_search_evaluation_ratio: f64,
    workers: usize,
}

fn cmd_bench(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let workers = config.effective_workers();
    let mut records: Vec<TimingRecord> = Vec::new();

    let t0 = std::time::Instant::now();
    let (core, reference, train) =
        harness_fixture(20_000, 4, config.k.min(6), config.seed).context("bench fixture")?;
    records.push(TimingRecord {
        stage: "build".into(),
        n: train.n_rows(),
        k: core.k(),
        wall_seconds: t0.elapsed().as_secs_f64(),
        evaluations: None,
        workers,
    });

    // explain-time scaling over batch size
    let scaling = explain_scaling(&core, 4, &config.sizes, 3, config.seed, workers)?;
    let xs: Vec<f64> = scaling.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = scaling.iter().map(|r| r.wall_seconds).collect();
    let scaling_r = r_squared(&xs, &ys);
    records.extend(scaling.iter().cloned());

    // full vs fast mode search
    let zone = zone_for(config, 2);
    let (full, fast) = mode_search_comparison(2_000, &zone, config.seed, workers)?;
    let full_evals = full.evaluations.unwrap_or(0);
    let fast_evals = fast.evaluations.unwrap_or(1);
    records.push(full.clone());
    records.push(fast.clone());

    // core explanation vs the perturbation baseline on 1,000 samples
    let batch = generate_synthetic(&SynthSpec::separable(1_000, 4, config.seed + 99))?;
    let (core_rec, baseline_rec) = baseline_comparison(
        &core,
        &reference,
        &batch.data,
        config.perturbations,
        config.seed,
        workers,
    )?;
    let speedup = baseline_rec.wall_seconds / core_rec.wall_seconds.max(1e-12);
    records.push(core_rec);
    records.push(baseline_rec);

    let timings_path = out.join("timings.jsonl");
    let mut file = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&timings_path)
            .with_context(|| format!("opening {}", timings_path.display()))?,
    );
    for record in &records {
        serde_json::to_writer(&mut file, record).context("serializing timing record")?;
        file.write_all(b"\n").context("writing timing record")?;
    }
    drop(file);

    let summary = BenchSummary {
        scaling_r_squared: scaling_r,
        scaling_sizes: scaling.iter().map(|r| r.n).collect(),
        scaling_seconds: ys,
        baseline_speedup: speedup,
        mode_search_full_evaluations: full_evals,
        mode_search_fast_evaluations: fast_evals,
        mode_search_evaluation_ratio: full_evals as f64 / fast_evals as f64,
        workers,
    };
    let summary_path = out.join("bench_summary.json");
    write_json(&summary_path, &summary)?;

    write_manifest(&out, name, config, &run, &[timings_path, summary_path])?;
    Ok(())
}

fn cmd_synth(config: &RunConfig, name: &str) -> Result<()> {
    let run = RunClock::start();
    let out = out_dir(config)?;
    let spec_path = required(&config.spec, "--spec")?;
    let spec = SynthSpec::load(spec_path).context("loading synth spec")?;
    let labeled = generate_synthetic(&spec)?;

    let csv_path = out.join("data.csv");
    write_csv(&labeled, &spec.label_column, &csv_path)?;
    let schema_path = out.join("schema.json");
    write_json(&schema_path, &spec.schema())?;

    write_manifest(&out, name, config, &run, &[csv_path, schema_path])?;
    Ok(())
}
