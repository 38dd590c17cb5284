use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ifac::classifier::score;
use ifac::data::split_dataset;
use ifac::metrics::{write_rows_csv, MethodReport};
use ifac::pipeline::{
    self, files, load_inputs, prepare, read_jsonl, run_prepared, sweep, sweep_rows, write_artifacts,
    write_json, write_sweep_csv, ClassifierChoice, RunConfig,
};
use ifac::review::{Explanation, ReviewStore};
use ifac::rules::{filter_high_slift, mine_rules, summarize};
use ifac::synthetic::{generate_synthetic, SyntheticSpec};

use crate::plot;

/// Marks errors caused by how the tool was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "ifac", version, about = "Interpretable and fair abstaining classifier")]
pub struct Cli {
    /// JSON file with run settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub run: RunArgs,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Dataset CSV.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Column-role manifest JSON.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Use external probabilities (CSV `id,p_pos`) instead of the built-in classifier.
    #[arg(long, global = true, value_name = "CSV")]
    pub predictions: Option<PathBuf>,
    /// Target coverage c.
    #[arg(short = 'c', long, global = true)]
    pub coverage: Option<f64>,
    /// Unfair reject weight w_u.
    #[arg(short = 'w', long, global = true)]
    pub unfair_weight: Option<f64>,
    /// Neighbors per group in situation testing.
    #[arg(short = 'k', long, global = true)]
    pub k: Option<usize>,
    /// Situation-testing discrimination threshold.
    #[arg(short = 't', long = "threshold", global = true)]
    pub t: Option<f64>,
    #[arg(long, global = true)]
    pub min_support: Option<f64>,
    #[arg(long, global = true)]
    pub min_confidence: Option<f64>,
    /// Significance level for rule filtering.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Cap on legal items per rule antecedent; 0 removes the cap.
    #[arg(long, global = true)]
    pub max_legal_items: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of test resamples for mean and standard error.
    #[arg(long, global = true)]
    pub resamples: Option<usize>,
    /// Artifact directory.
    #[arg(short, long, global = true, env = "IFAC_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted-bias synthetic dataset and its manifest.
    Generate {
        #[arg(short, long, default_value_t = 20_000)]
        n: usize,
        #[arg(long)]
        bias: Option<f64>,
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Split the dataset into train, val1, val2 and test.
    Split,
    /// Fit the base classifier on the training part.
    Train,
    /// Mine and filter discriminatory rules on val1.
    Mine,
    /// Audit val2 and fit the reject thresholds.
    Calibrate,
    /// Run every stage and write all artifacts.
    Run,
    /// Recompute reports from stored outcomes and draw the fairness chart.
    Evaluate,
    /// Evaluate a grid of coverages and unfair weights.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0])]
        coverages: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
        weights: Vec<f64>,
    },
    /// Serve the review API over the artifact directory.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: String,
    },
    /// Print the explanation of one unfair-path decision.
    Explain { id: String },
}

/// Defaults, then the config file, then flags and the environment.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let a = &cli.run;
    if let Some(v) = &a.dataset {
        config.dataset = v.clone();
    }
    if let Some(v) = &a.manifest {
        config.manifest = v.clone();
    }
    if let Some(v) = &a.predictions {
        config.classifier = ClassifierChoice::External { path: v.clone() };
    }
    macro_rules! set {
        ($($src:ident => $($dst:ident).+),* $(,)?) => {
            $( if let Some(v) = a.$src { config.$($dst).+ = v; } )*
        };
    }
    set!(
        coverage => coverage,
        unfair_weight => unfair_weight,
        k => k,
        t => t,
        min_support => mining.min_support,
        min_confidence => mining.min_confidence,
        alpha => mining.significance_alpha,
        seed => seed,
        resamples => resamples,
    );
    if let Some(v) = a.max_legal_items {
        config.mining.max_legal_items = (v > 0).then_some(v);
    }
    if let Some(v) = &a.output_dir {
        config.output_dir = v.clone();
    }
    Ok(config)
}

fn require_inputs(config: &RunConfig) -> anyhow::Result<()> {
    if config.dataset.as_os_str().is_empty() || config.manifest.as_os_str().is_empty() {
        bail!(UsageError("--dataset and --manifest are required (or set them in --config)".into()));
    }
    Ok(())
}

fn write_config(config: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    write_json(&config.output_dir.join(files::CONFIG), config)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let config = resolve_config(cli)?;
    let out = config.output_dir.clone();
    match &cli.command {
        Command::Generate {
            n,
            bias,
            signal,
            noise,
        } => {
            let defaults = SyntheticSpec::default();
            let spec = SyntheticSpec {
                n: *n,
                bias: bias.unwrap_or(defaults.bias),
                signal: signal.unwrap_or(defaults.signal),
                noise: noise.unwrap_or(defaults.noise),
                ..defaults
            };
            let ds = generate_synthetic(&spec, config.seed)?;
            ds.write_to(&out)?;
            println!("wrote {} rows to {}", n, out.join("data.csv").display());
        }
        Command::Split => {
            require_inputs(&config)?;
            let (manifest, data) = load_inputs(&config)?;
            let split = split_dataset(&data, config.fractions, config.seed).map_err(|e| e.in_stage("split"))?;
            write_config(&config)?;
            write_json(&out.join(files::MANIFEST), &manifest)?;
            write_json(&out.join(files::SPLIT), &split.ids())?;
            println!(
                "train {} / val1 {} / val2 {} / test {}",
                split.train.len(),
                split.val1.len(),
                split.val2.len(),
                split.test.len()
            );
        }
        Command::Train => {
            require_inputs(&config)?;
            let (manifest, data) = load_inputs(&config)?;
            let split = split_dataset(&data, config.fractions, config.seed).map_err(|e| e.in_stage("split"))?;
            let classifier = train(&config, &split, &manifest)?;
            let scored = score(&classifier, &split.val1).map_err(|e| e.in_stage("score"))?;
            let correct = scored.iter().filter(|s| s.instance.label == Some(s.prediction)).count();
            write_config(&config)?;
            write_json(&out.join(files::SPLIT), &split.ids())?;
            write_json(&out.join(files::CLASSIFIER), &classifier)?;
            println!("val1 accuracy {:.4}", correct as f64 / scored.len().max(1) as f64);
        }
        Command::Mine => {
            require_inputs(&config)?;
            let (manifest, data) = load_inputs(&config)?;
            let split = split_dataset(&data, config.fractions, config.seed).map_err(|e| e.in_stage("split"))?;
            let classifier = train(&config, &split, &manifest)?;
            let scored = score(&classifier, &split.val1).map_err(|e| e.in_stage("score"))?;
            let candidates = mine_rules(&scored, &manifest, &config.mining).map_err(|e| e.in_stage("mine"))?;
            let total = candidates.len();
            let rules = filter_high_slift(candidates, config.mining.significance_alpha);
            write_config(&config)?;
            write_json(&out.join(files::RULES), &rules)?;
            println!("{} of {total} candidate rules kept: {:?}", rules.len(), summarize(&rules));
            for rule in rules.iter().take(10) {
                println!("  {rule}");
            }
        }
        Command::Calibrate => {
            require_inputs(&config)?;
            let (manifest, data) = load_inputs(&config)?;
            let prepared = prepare(&data, &manifest, &config)?;
            let model = pipeline::calibrate(&prepared, config.coverage, config.unfair_weight)?;
            write_config(&config)?;
            write_json(&out.join(files::SPLIT), &prepared.split.ids())?;
            write_json(&out.join(files::RULES), &prepared.rules)?;
            write_json(&out.join(files::MODEL), &model)?;
            let b = &model.budget;
            println!(
                "val2: {} fair / {} unfair; rejections {} ({} unfair, {} uncertain)",
                b.n_fair, b.n_unfair, b.n_rej, b.n_ufr, b.n_ucr
            );
            println!("tau_f {:?}, tau_u {:?}, UBAC {:?}", model.tau_f, model.tau_u, model.ubac_threshold);
        }
        Command::Run => {
            require_inputs(&config)?;
            let (manifest, data) = load_inputs(&config)?;
            let prepared = prepare(&data, &manifest, &config)?;
            let result = run_prepared(&prepared, config.coverage, config.unfair_weight)?;
            write_artifacts(&out, &config, &prepared, &result).map_err(|e| e.in_stage("write"))?;
            print_reports(&result.reports);
            println!("artifacts in {}", out.display());
        }
        Command::Evaluate => {
            let store = ReviewStore::open(&out).map_err(|e| e.in_stage("load"))?;
            let reports = store.report()?;
            write_reports(&out, &reports)?;
            let chart = out.join("fairness.svg");
            fs::write(&chart, plot::fairness_chart(&reports)).with_context(|| chart.display().to_string())?;
            print_reports(&reports);
            println!("chart in {}", chart.display());
        }
        Command::Sweep { coverages, weights } => {
            require_inputs(&config)?;
            if coverages.is_empty() || weights.is_empty() {
                bail!(UsageError("sweep needs at least one coverage and one weight".into()));
            }
            let (manifest, data) = load_inputs(&config)?;
            let prepared = prepare(&data, &manifest, &config)?;
            let grid: Vec<(f64, f64)> =
                coverages.iter().flat_map(|&c| weights.iter().map(move |&w| (c, w))).collect();
            let cells = sweep(&prepared, &grid)?;
            for cell in &cells {
                if let Err(e) = &cell.reports {
                    log::warn!("cell c={} w_u={} failed: {e}", cell.coverage, cell.unfair_weight);
                    eprintln!("cell c={} w_u={} failed: {e}", cell.coverage, cell.unfair_weight);
                }
            }
            let rows = sweep_rows(&cells);
            write_config(&config)?;
            let csv_path = out.join("sweep.csv");
            write_sweep_csv(&rows, fs::File::create(&csv_path).with_context(|| csv_path.display().to_string())?)?;
            write_json(&out.join("sweep.json"), &rows)?;
            let chart = out.join("sweep.svg");
            fs::write(&chart, plot::sweep_chart(&rows)).with_context(|| chart.display().to_string())?;
            println!("{} cells, {} rows; table in {}", cells.len(), rows.len(), csv_path.display());
        }
        Command::Serve { addr } => {
            let store = ReviewStore::open(&out).map_err(|e| e.in_stage("load"))?;
            println!("serving {} rejections from {}", store.rejections(0, 0).total, out.display());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::server::serve(store, addr))?;
        }
        Command::Explain { id } => {
            let explanations: Vec<Explanation> = read_jsonl(&out.join(files::EXPLANATIONS))?;
            let Some(e) = explanations.iter().find(|e| e.id.as_str() == id) else {
                return Err(ifac::Error::Data(format!("no unfair-path decision for instance `{id}`")).into());
            };
            println!("{}", serde_json::to_string_pretty(e)?);
        }
    }
    Ok(())
}

fn train(
    config: &RunConfig,
    split: &ifac::data::SplitBundle,
    manifest: &ifac::data::DatasetManifest,
) -> anyhow::Result<ifac::classifier::ProbClassifier> {
    let model = match &config.classifier {
        ClassifierChoice::Builtin => ifac::classifier::fit_builtin(&split.train, manifest),
        ClassifierChoice::External { path } => ifac::classifier::ExternalTable::load(path)
            .map(ifac::classifier::ProbClassifier::ExternalTable),
    };
    Ok(model.map_err(|e| e.in_stage("train"))?)
}

fn write_reports(dir: &Path, reports: &[MethodReport]) -> anyhow::Result<()> {
    write_json(&dir.join(files::REPORT_JSON), reports)?;
    let rows: Vec<_> = reports.iter().flat_map(MethodReport::rows).collect();
    let path = dir.join(files::REPORT_CSV);
    write_rows_csv(&rows, fs::File::create(&path).with_context(|| path.display().to_string())?)?;
    Ok(())
}

fn fmt_est(e: Option<ifac::metrics::Estimate>) -> String {
    e.map_or_else(|| "-".into(), |e| format!("{:.4}±{:.4}", e.mean, e.stderr))
}

fn print_reports(reports: &[MethodReport]) {
    println!(
        "{:<6} {:>16} {:>16} {:>16} {:>9} {:>9}",
        "method", "coverage", "accuracy", "recall", "PDR rng", "PDR std"
    );
    for r in reports {
        let pdr = r.fairness.pdr;
        println!(
            "{:<6} {:>16} {:>16} {:>16} {:>9} {:>9}",
            r.method.to_string(),
            fmt_est(r.performance.coverage),
            fmt_est(r.performance.accuracy),
            fmt_est(r.performance.recall),
            pdr.map_or("-".into(), |d| format!("{:.4}", d.range)),
            pdr.map_or("-".into(), |d| format!("{:.4}", d.std)),
        );
    }
}

/// Exit status for a failed command: 1 usage, 2 data, 3 pipeline.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if let Some(e) = err.downcast_ref::<ifac::Error>() {
        return if e.is_data_error() { 2 } else { 3 };
    }
    if err.downcast_ref::<std::io::Error>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    3
}
