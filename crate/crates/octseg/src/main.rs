use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use octseg::commands::{self, OverlaySource};
use octseg::config::RunConfig;
use octseg::error::{Error, Result};

/// Cascaded retinal layer and fluid segmentation of OCT volumes.
#[derive(Parser)]
#[command(name = "octseg", version)]
struct Cli {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for generation, inference and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic phantom corpus and its manifest.
    PhantomGen {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        num_volumes: Option<usize>,
        /// Replace a non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Train the cascade and the fluid filter; writes a run directory.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every B-scan of the manifest's volumes.
    Infer {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dice report of a predictions directory against the manifest truth.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Volume-level k-fold cross-validation of the full cascade.
    CrossValidate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Colour overlays of truth, predictions or a bundle's output.
    RenderOverlay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "bundle")]
        predictions: Option<PathBuf>,
        /// Run the bundle; also writes the stage-1 distance maps.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print or check configuration.
    Config {
        /// Print the full default configuration.
        #[arg(long)]
        dump_defaults: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Usage(format!("--jobs: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let run_dir = || cfg.paths.runs.join(&cfg.paths.run_name);
    match cli.command {
        Command::PhantomGen { out, num_volumes, overwrite } => {
            let mut cfg = cfg.clone();
            if let Some(n) = num_volumes {
                cfg.phantom.num_volumes = n;
            }
            commands::phantom_gen(&cfg, &out.unwrap_or_else(|| cfg.paths.corpus.clone()), overwrite)?;
        }
        Command::Train { manifest, out } => {
            commands::train(&cfg, &manifest, &out.unwrap_or_else(run_dir))?;
        }
        Command::Infer { bundle, manifest, out } => commands::infer(&bundle, &manifest, &out)?,
        Command::Evaluate { manifest, predictions, out } => {
            let r = commands::evaluate(&manifest, &predictions, &out)?;
            eprintln!("mean layer Dice {:?} over {} B-scans", r.corpus.mean_layer_dice(), r.corpus.num_bscans);
        }
        Command::CrossValidate { manifest, folds, out } => {
            let k = folds.unwrap_or(cfg.eval.folds);
            commands::cross_validate_cmd(&cfg, &manifest, k, &out.unwrap_or_else(run_dir))?;
        }
        Command::RenderOverlay { manifest, predictions, bundle, alpha, out } => {
            let source = match (predictions, bundle) {
                (Some(p), _) => OverlaySource::Predictions(p),
                (None, Some(b)) => OverlaySource::Bundle(b),
                (None, None) => OverlaySource::Truth,
            };
            let alpha = alpha.unwrap_or(cfg.eval.overlay_alpha);
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::Usage(format!("--alpha must lie in [0, 1], got {alpha}")));
            }
            commands::render_overlay(&manifest, &source, alpha, &out)?;
        }
        Command::Config { dump_defaults } => {
            if dump_defaults {
                print!("{}", RunConfig::default().to_json());
            } else {
                print!("{}", cfg.to_json());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { octseg::error::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
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
