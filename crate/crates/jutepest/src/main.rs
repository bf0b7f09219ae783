//! `jutepest` command-line front end.
//!
//! Exit status: 0 success, 1 runtime failure (I/O, decoding, integrity,
//! training), 2 invalid configuration or usage, 3 a prerequisite stage
//! has not been run or its outputs are stale, 4 the workdir is locked by
//! another run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jutepest::config::{Overrides, PipelineConfig};
use jutepest::pipeline::Pipeline;
use jutepest::Error;
use jutepest_core::backbone::BackboneId;

#[derive(Parser)]
#[command(name = "jutepest", version, about = "Jute pest image classification by transfer learning")]
struct Cli {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory for all artifacts.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Dataset root with one folder per class.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<u32>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the dataset and preprocess every image.
    Ingest,
    /// Stratified train/validation/test split.
    Split,
    /// Write augmented copies of the training (and validation) images.
    Augment,
    /// Train the head of one backbone (all configured ones if omitted).
    Train {
        #[arg(long)]
        backbone: Option<BackboneId>,
    },
    /// Score trained models on the test split.
    Evaluate {
        #[arg(long)]
        backbone: Option<BackboneId>,
    },
    /// Figures and tables for every evaluated model.
    Report,
    /// Classify one image; prints the class name and its probability.
    Predict {
        #[arg(long)]
        image: PathBuf,
        /// Defaults to the most accurate evaluated model.
        #[arg(long)]
        backbone: Option<BackboneId>,
    },
    /// Every stage for every configured backbone.
    All {
        /// Restrict the run to these backbones.
        #[arg(long)]
        backbone: Vec<BackboneId>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&Overrides {
        dataset_root: cli.dataset,
        workdir: cli.workdir,
        seed: cli.seed,
        epochs: cli.epochs,
        batch_size: cli.batch_size,
        learning_rate: cli.lr,
    });
    if let Command::All { backbone } = &cli.command {
        if !backbone.is_empty() {
            cfg.backbones = backbone.clone();
        }
    }
    let selected = |b: &Option<BackboneId>, cfg: &PipelineConfig| b.map_or_else(|| cfg.backbones.clone(), |b| vec![b]);
    let p = Pipeline::new(cfg)?;
    if let Command::Predict { image, backbone } = &cli.command {
        let out = p.predict(image, *backbone)?;
        log::info!("model: {}", out.backbone);
        println!("{}\t{:.4}", out.class_name, out.probability);
        return Ok(());
    }
    let _lock = p.begin()?;
    match &cli.command {
        Command::Ingest => drop(p.ingest()?),
        Command::Split => drop(p.split()?),
        Command::Augment => drop(p.augment()?),
        Command::Train { backbone } => {
            for id in selected(backbone, p.config()) {
                p.train(id)?;
            }
        }
        Command::Evaluate { backbone } => {
            for id in selected(backbone, p.config()) {
                p.evaluate(id)?;
            }
        }
        Command::Report => drop(p.report()?),
        Command::All { .. } => drop(p.all()?),
        Command::Predict { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
