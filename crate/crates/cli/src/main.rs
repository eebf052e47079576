use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "simpdom", version, about = "Few-shot attribute extraction from detail pages")]
struct Cli {
    /// Worker threads for data-parallel stages; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Do not read or write the preprocessing cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Corpus root holding `<vertical>/<site>/pages/*.htm`.
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vertical: String,
    /// Strict JSON training configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Number of seed (training) sites.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Seed for the site permutation; also overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub rotation: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a small synthetic corpus (book and movie verticals).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        pages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse, classify, align and featurize sites into the cache.
    Preprocess {
        #[arg(long, default_value = "corpus")]
        corpus: PathBuf,
        /// Only this vertical; all verticals when omitted.
        #[arg(long)]
        vertical: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model on the seed sites of one split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        /// Checkpoint path; the vocabulary is written next to it.
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
        /// Loss log path (default `<out>.loss.json`).
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
    /// Continue training a cross-head checkpoint on another vertical.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, default_value = "finetuned.ckpt")]
        out: PathBuf,
        #[arg(long)]
        loss_log: Option<PathBuf>,
    },
    /// Score a checkpoint on held-out sites, or run a full protocol.
    Eval {
        /// Score this model on every site of the vertical it was not trained on.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        /// Protocol runs: number of rotations (default all).
        #[arg(long)]
        rotations: Option<usize>,
        /// Cross-vertical protocol: pretrain on this vertical first.
        #[arg(long)]
        source: Option<String>,
        /// Settings for the finetune stage of the cross protocol.
        #[arg(long)]
        finetune_config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Extract attribute values from pages with a trained model.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Pages of one site; they are classified together.
        #[arg(required = true)]
        pages: Vec<PathBuf>,
    },
    /// Dump the friend circle of every variable node of a page.
    InspectCircles {
        page: PathBuf,
        /// Other pages of the same site, used only to tell fixed from variable nodes.
        #[arg(long, num_args = 1..)]
        context: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's ancestor count.
        #[arg(long)]
        k: Option<usize>,
        /// Report every friend instead of the trimmed list.
        #[arg(long)]
        untrimmed: bool,
        /// Only the node with this indexed XPath.
        #[arg(long)]
        node_xpath: Option<String>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = commands::Context::new(cli.jobs, cli.no_cache)?;
    match cli.command {
        Command::Synth { out, pages, seed } => commands::synth(&out, pages, seed),
        Command::Preprocess { corpus, vertical, config } => {
            commands::preprocess(&ctx, &corpus, vertical.as_deref(), config.as_deref())
        }
        Command::Train { data, split, out, loss_log } => commands::train(&ctx, &data, &split, &out, loss_log),
        Command::Finetune { checkpoint, data, split, out, loss_log } => {
            commands::finetune(&ctx, &checkpoint, &data, &split, &out, loss_log)
        }
        Command::Eval { checkpoint, data, split, rotations, source, finetune_config, format, report } => {
            let protocol = commands::Protocol { rotations, source, finetune_config };
            commands::eval(&ctx, checkpoint.as_deref(), &data, &split, &protocol, format, report.as_deref())
        }
        Command::Extract { checkpoint, pages } => commands::extract(&ctx, &checkpoint, &pages),
        Command::InspectCircles { page, context, config, k, untrimmed, node_xpath } => {
            commands::inspect(&page, &context, config.as_deref(), k, untrimmed, node_xpath.as_deref())
        }
    }
}
