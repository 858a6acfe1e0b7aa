mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{InputRule, Method, Precision, RunConfig};
use heatlens::Error;

#[derive(Debug, Parser)]
#[command(
    name = "heatlens",
    version,
    about = "Classify images and explain the decisions with pixel heatmaps"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Arithmetic precision for inference and attribution.
    #[arg(long, global = true, value_enum)]
    precision: Option<Precision>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Weight manifest (overrides the config).
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Class manifest, one label per line (overrides the config).
    #[arg(long, global = true)]
    classes: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank the classes for one image.
    Classify {
        image: PathBuf,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Write a heatmap explaining one decision.
    Explain(ExplainArgs),
    /// Score a `label,score` CSV against a threshold.
    Evaluate {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Run the built-in oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Inspect or create weight files.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    image: PathBuf,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Class to explain; defaults to the top-scoring class.
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    input_rule: Option<InputRule>,
    /// Also write one heatmap per layer (LRP only).
    #[arg(long)]
    export_layers: bool,
    /// Grad-CAM layer.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    baseline: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum WeightsCommand {
    /// Print the layer table and verify the checksum.
    Inspect { path: PathBuf },
    /// Write seeded random weights for the configured network.
    Init {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl ExplainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.explain;
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    e.$target = v;
                }
            )*};
        }
        set!(method => method, epsilon => epsilon, input_rule => input_rule, patch => patch, stride => stride,
             baseline => baseline, samples => samples, seed => seed, clip => clip_percentile);
        if self.target.is_some() {
            e.target = self.target;
        }
        if self.layer.is_some() {
            e.layer = self.layer.clone();
        }
        if self.sigma.is_some() {
            e.sigma = self.sigma;
        }
        if self.export_layers {
            e.export_layers = true;
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Usage(_) | Error::Config(_) => 2,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Load(_)
        | Error::Image(_)
        | Error::EmptyInput(_) => 3,
        Error::Dimension { .. } | Error::WeightStore(_) => 4,
        Error::Numerical(_) | Error::UndefinedAuc(_) => 1,
    }
}

fn run(cli: Cli) -> heatlens::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.weights.is_some() {
        cfg.weights = cli.weights.clone();
    }
    if cli.classes.is_some() {
        cfg.classes = cli.classes.clone();
    }
    if cli.out.is_some() {
        cfg.output_dir = cli.out.clone();
    }
    if cli.precision.is_some() {
        cfg.precision = cli.precision;
    }
    if let Command::Explain(args) = &cli.command {
        args.apply(&mut cfg);
    }
    cfg.validate()?;
    let json = cli.json;
    match cli.command {
        Command::Classify { image, top_k } => commands::classify(&cfg, &image, top_k, json),
        Command::Explain(args) => commands::explain(&cfg, &args.image, json),
        Command::Evaluate { csv, threshold } => commands::evaluate(&cfg, &csv, threshold, json),
        Command::Selftest { seed, inject_fault } => {
            Ok(commands::selftest(seed, inject_fault, json))
        }
        Command::Weights(WeightsCommand::Inspect { path }) => {
            commands::weights_inspect(&path, json)
        }
        Command::Weights(WeightsCommand::Init { path, seed }) => {
            commands::weights_init(&cfg, &path, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
