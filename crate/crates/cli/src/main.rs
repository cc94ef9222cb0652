//! `scenesound` — joint sound event detection and scene classification.
//!
//! Subcommands cover the full pipeline: `synth` generates the benchmark
//! corpus, `train` fits a model, `evaluate` scores a checkpoint, `predict`
//! writes per-clip annotations, `gradcheck` verifies gradients against
//! finite differences, and `sweep-alpha` traces metrics over the scene-loss
//! weight. Every run is reproducible from its config file and seed; output
//! files carry the config hash in a header comment.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use commands::CliError;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "scenesound", version, about = "Joint sound event detection and acoustic scene classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark corpus (WAVs, annotations, index)
    Synth(CommonArgs),
    /// Train a model and write checkpoint + history CSV
    Train(CommonArgs),
    /// Score a checkpoint on a corpus and write a metrics CSV
    Evaluate(CommonArgs),
    /// Write per-clip event annotations and scene predictions
    Predict(CommonArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(CommonArgs),
    /// Cross-validate over a list of scene-loss weights
    SweepAlpha(CommonArgs),
}

/// Shared flags. Values given here override the config file, which overrides
/// built-in defaults.
#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialization, shuffling, and corpus generation
    #[arg(long)]
    seed: Option<u64>,
    /// Scene-loss weight in the joint objective
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Segment width (frames) for segment-based scoring
    #[arg(long)]
    segment_frames: Option<usize>,
    /// Numeric precision: 32 or 64
    #[arg(long)]
    precision: Option<String>,
    /// Corpus directory (index.tsv, audio/, ann/)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Checkpoint file (evaluate / predict input)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Single fold to hold out (train) or select (evaluate / predict)
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Event activation threshold
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated alpha values for sweep-alpha
    #[arg(long)]
    alphas: Option<String>,
    /// Clips generated per scene (synth)
    #[arg(long)]
    clips_per_scene: Option<usize>,
    /// Clip length in whole seconds (synth)
    #[arg(long)]
    clip_seconds: Option<u32>,
    /// Write a checkpoint every N epochs (0 = only at the end)
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl CommonArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
            cfg.apply_file(&text, &path.display().to_string()).map_err(CliError::Validation)?;
        }
        macro_rules! flag {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        flag!(seed);
        flag!(alpha);
        flag!(folds);
        flag!(segment_frames);
        flag!(epochs);
        flag!(learning_rate);
        flag!(batch_size);
        flag!(threshold);
        flag!(clips_per_scene);
        flag!(clip_seconds);
        flag!(checkpoint_every);
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.corpus {
            cfg.corpus = Some(v);
        }
        if let Some(v) = self.checkpoint {
            cfg.checkpoint = Some(v);
        }
        if let Some(v) = self.fold {
            cfg.fold = Some(v);
        }
        if let Some(p) = &self.precision {
            cfg.precision =
                scenesound_core::train::Precision::parse(p).map_err(|e| CliError::Validation(e.to_string()))?;
        }
        if let Some(list) = &self.alphas {
            cfg.alphas = config::parse_f64_list(list).map_err(CliError::Validation)?;
        }
        cfg.validate().map_err(CliError::Validation)?;
        Ok(cfg)
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {}", e.message());
        return e.exit_code();
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let (cfg, run): (Result<RunConfig, CliError>, fn(&RunConfig) -> Result<(), CliError>) = match cli.command {
        Command::Synth(args) => (args.into_config(), commands::cmd_synth),
        Command::Train(args) => (args.into_config(), commands::cmd_train),
        Command::Evaluate(args) => (args.into_config(), commands::cmd_evaluate),
        Command::Predict(args) => (args.into_config(), commands::cmd_predict),
        Command::Gradcheck(args) => (args.into_config(), commands::cmd_gradcheck),
        Command::SweepAlpha(args) => (args.into_config(), commands::cmd_sweep_alpha),
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// `SCENESOUND_THREADS` caps the worker pool; results are identical at any
/// thread count because reductions run in fixed clip order.
fn init_thread_pool() -> Result<(), CliError> {
    match std::env::var("SCENESOUND_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| CliError::Validation(format!("SCENESOUND_THREADS={raw:?} is not a positive integer")))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
        }
    }
}
