//! `toktrans`: the command-line harness. Exits 0 on success; any failure
//! prints a single `error[tag]: message` line on stderr and exits 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toktrans_cli::cmd;
use toktrans_cli::config::Split;
use toktrans_cli::error::{CliError, Result};
use toktrans_cli::RunConfig;

#[derive(Parser)]
#[command(name = "toktrans", version, about = "Token-transducer training and evaluation harness")]
struct Cli {
    /// Flat key = value configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration's `seed` key.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Allow clobbering outputs that already exist.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/dev/test corpus.
    GenData {
        /// Corpus directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the k-means token codebook on training frames.
    FitKmeans {
        #[arg(long)]
        corpus: PathBuf,
        /// Codebook file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the transducer.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Run directory for checkpoint and logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a split and score token and symbol error rates.
    DecodeEval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split to evaluate: train, dev, or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Render lattice diagnostics for one utterance.
    Viz {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Utterance index within the split.
        #[arg(long)]
        utterance: usize,
    },
    /// Reference-crop ablation across seeds.
    AblateCrop {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate decoded length with reference speaking rate.
    RateControl {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData { out } => {
            let summaries = cmd::gen_data::run(&cfg, out, cli.force)?;
            for s in summaries {
                println!(
                    "{}: {} utterances, {} frames, rates {:.3}..{:.3}",
                    s.split.name(),
                    s.utterances,
                    s.frames,
                    s.min_rate,
                    s.max_rate
                );
            }
        }
        Command::FitKmeans { corpus, out } => {
            let s = cmd::fit_kmeans::run(&cfg, corpus, out)?;
            println!(
                "fit {} clusters on {} frames in {} iters, inertia {:.2}, purity {:.4}",
                s.clusters, s.frames, s.iters, s.inertia, s.purity
            );
        }
        Command::Train { corpus, codebook, out } => {
            let run = cmd::train::run(&cfg, corpus, codebook, out)?;
            let last = run.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!("trained {} steps, final loss {last:.4}", run.log.len());
        }
        Command::DecodeEval { corpus, codebook, checkpoint, out, split } => {
            cmd::decode_eval::run(
                &cfg,
                corpus,
                codebook,
                checkpoint,
                out,
                Split::from_name(split)?,
            )?;
        }
        Command::Viz { corpus, codebook, checkpoint, out, split, utterance } => {
            cmd::viz::run(
                &cfg,
                corpus,
                codebook,
                checkpoint,
                out,
                Split::from_name(split)?,
                *utterance,
            )?;
        }
        Command::AblateCrop { corpus, codebook, out } => {
            cmd::ablate_crop::run(&cfg, corpus, codebook, out)?;
        }
        Command::RateControl { corpus, checkpoint, out } => {
            cmd::rate_control::run(&cfg, corpus, checkpoint, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if err.use_stderr() => {
            // Keep the first stderr line machine-parsable, then clap's
            // rendered diagnostics for the human.
            eprintln!("{}", CliError::args("invalid command line"));
            let _ = err.print();
            return ExitCode::from(2);
        }
        Err(help) => {
            // --help and --version land here and are not errors.
            let _ = help.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
