//! `retifuse`: ingest, segment, extract, train, evaluate and grid stages of
//! the fundus grading pipeline.
//!
//! Exit status is 0 on success, 1 when some records or cells failed, and 2
//! for usage, configuration or fatal I/O errors.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, Source};
use settings::Overrides;

#[derive(Parser, Debug)]
#[command(name = "retifuse", version, about = "Diabetic-retinopathy grading with fused handcrafted and deep features")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML file with RunConfig fields; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for splits, classifiers and the seeded provider [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// `seeded` or an exported model file; repeat or comma-separate for several backbones.
    #[arg(long, global = true, value_name = "NAME|MODEL")]
    provider: Vec<String>,
    /// Comma list out of knn, linear_svm, random_forest, adaboost, grad_boost (or svm, rf, ada, gb).
    #[arg(long, global = true, value_name = "LIST")]
    classifiers: Option<String>,
    /// Training share of each class [default: 0.8].
    #[arg(long, global = true)]
    train_frac: Option<f64>,
    /// Output directory [default: run].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Width of the deep embedding [default: 64].
    #[arg(long, global = true)]
    deep_dim: Option<usize>,
    /// hybrid, deep_only or handcrafted_only [default: hybrid].
    #[arg(long, global = true)]
    feature_set: Option<String>,
    /// Any other parameter, e.g. `segmentation.block_size=31` or `train.rf_trees=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
struct Data {
    /// Manifest CSV written by `ingest`.
    #[arg(long, value_name = "CSV")]
    manifest: Option<PathBuf>,
    /// Dataset directory with one subdirectory per grade. Alone it is
    /// ingested on the fly; with --manifest it anchors the manifest paths,
    /// which otherwise resolve against the manifest's directory.
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
}

impl Data {
    fn source(&self) -> Source {
        match (&self.manifest, &self.root) {
            (Some(m), r) => Source::Manifest(m.clone(), r.clone()),
            (None, Some(r)) => Source::Root(r.clone()),
            (None, None) => unreachable!("clap requires one of --manifest or --root"),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate a dataset directory into a manifest CSV.
    Ingest {
        #[arg(long, value_name = "DIR")]
        root: PathBuf,
        /// Manifest path [default: <out>/manifest.csv].
        #[arg(long, value_name = "CSV")]
        manifest_out: Option<PathBuf>,
    },
    /// Write one region-of-interest mask PNG per record to <out>/masks.
    Segment(Data),
    /// Build the fused feature cache for each provider under <out>/cache.
    Extract(Data),
    /// Fit classifiers per provider; models go to <out>/models.
    Train(Data),
    /// Score saved models on the validation split.
    Evaluate {
        #[command(flatten)]
        data: Data,
        /// Model files or directories [default: <out>/models].
        #[arg(long = "model", value_name = "PATH")]
        models: Vec<PathBuf>,
        /// Score every record instead of the validation split.
        #[arg(long)]
        all_records: bool,
    },
    /// Every provider × classifier cell: grid.csv, cells/*.json and heatmaps.
    Grid(Data),
    /// Generate a synthetic fundus dataset.
    Synth {
        #[arg(long, value_name = "DIR")]
        root: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let g = cli.global;
    let cfg = Overrides {
        config: g.config,
        seed: g.seed,
        train_frac: g.train_frac,
        out: g.out,
        providers: g.provider,
        classifiers: g.classifiers,
        deep_dim: g.deep_dim,
        feature_set: g.feature_set,
        sets: g.sets,
    }
    .resolve()?;
    rayon::ThreadPoolBuilder::new().num_threads(g.jobs).build_global()?;
    log::debug!("effective config:\n{}", cfg.to_toml());
    match cli.command {
        Command::Ingest { root, manifest_out } => commands::cmd_ingest(&cfg, &root, manifest_out.as_deref()),
        Command::Segment(d) => commands::cmd_segment(&cfg, &d.source()),
        Command::Extract(d) => commands::cmd_extract(&cfg, &d.source()),
        Command::Train(d) => commands::cmd_train(&cfg, &d.source()),
        Command::Evaluate { data, models, all_records } => {
            let models = if models.is_empty() { vec![cfg.output_dir.join("models")] } else { models };
            commands::cmd_evaluate(&cfg, &data.source(), &models, all_records)
        }
        Command::Grid(d) => commands::cmd_grid(&cfg, &d.source()),
        Command::Synth { root, per_class } => commands::synth(&cfg, &root, per_class),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
