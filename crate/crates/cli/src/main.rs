//! `relshift`: train incremental embeddings, fit relation projections and
//! run the diachronic evaluation grid.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "relshift", version, about = "Diachronic relation projections over incrementally trained embeddings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-worker training; identical inputs give identical outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Model file format: text or binary.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a CBOW model from scratch.
    Train {
        /// Corpus file(s), one sentence per line; several are concatenated.
        #[arg(long)]
        corpus: Vec<PathBuf>,
        /// Output snapshot stem.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Year the corpus stands for (mixed into the seed under per_year).
        #[arg(long)]
        year: Option<i32>,
    },
    /// Continue training a snapshot on new text.
    Update {
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Never add new words.
        #[arg(long)]
        static_vocab: bool,
    },
    /// Fit a projection from gold pairs on one snapshot.
    Project {
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        /// forward (source to target) or reverse.
        #[arg(long)]
        direction: Option<String>,
        /// Only use pairs up to this year.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Run the year-to-year evaluation grid, or leave-one-out with --loo.
    Evaluate {
        /// Directory of `<regime>/<year>.<ext>` or `<year>.<ext>` snapshots.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave-one-out on the single snapshot given by --snapshot.
        #[arg(long)]
        loo: bool,
        #[arg(long, requires = "loo")]
        snapshot: Option<PathBuf>,
        /// tsv or jsonl.
        #[arg(long, value_parser = commands::parse_report_format)]
        report_format: Option<relshift::eval::ReportFormat>,
    },
    /// Generate synthetic corpora and gold pairs.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit planted linear pairs in a fixed embedding instead.
        #[arg(long)]
        linear: bool,
    },
}

fn set_path(config: &mut RunConfig, key: &str, value: &Option<PathBuf>) -> Result<(), ConfigError> {
    match value {
        Some(p) => config.set(key, &p.to_string_lossy()),
        None => Ok(()),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let g = &cli.global;
    let mut config = RunConfig::load(g.config.as_deref())?;
    for pair in &g.overrides {
        config.set_pair(pair)?;
    }
    if let Some(seed) = g.seed {
        config.train.seed = seed;
    }
    if g.deterministic {
        config.train.workers = 1;
    }
    if let Some(format) = &g.format {
        config.set("format", format)?;
    }
    match &cli.command {
        Command::Train { corpus, out, year } => {
            if !corpus.is_empty() {
                config.corpus = corpus.clone();
            }
            set_path(&mut config, "output", out)?;
            if let Some(y) = year {
                config.year = Some(*y);
            }
        }
        Command::Update { snapshot, corpus, out, static_vocab } => {
            set_path(&mut config, "snapshot", snapshot)?;
            if !corpus.is_empty() {
                config.corpus = corpus.clone();
            }
            set_path(&mut config, "output", out)?;
            if *static_vocab {
                config.train.expand_threshold = None;
            }
        }
        Command::Project { snapshot, gold, out, lambda, direction, year } => {
            set_path(&mut config, "snapshot", snapshot)?;
            set_path(&mut config, "gold", gold)?;
            set_path(&mut config, "output", out)?;
            if let Some(l) = lambda {
                config.lambda = *l;
            }
            if let Some(d) = direction {
                config.set("direction", d)?;
            }
            if let Some(y) = year {
                config.year = Some(*y);
            }
        }
        Command::Evaluate { snapshots, gold, out, snapshot, report_format, .. } => {
            set_path(&mut config, "snapshot_dir", snapshots)?;
            set_path(&mut config, "gold", gold)?;
            set_path(&mut config, "output", out)?;
            set_path(&mut config, "snapshot", snapshot)?;
            if let Some(f) = report_format {
                config.report_format = *f;
            }
        }
        Command::Synth { out, .. } => set_path(&mut config, "output", out)?,
    }
    config.train.validate().map_err(|e| ConfigError::Value {
        key: "train".into(),
        value: String::new(),
        reason: e.to_string(),
    })?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = resolve(cli)?;
    match cli.command {
        Command::Train { .. } => commands::train(&config),
        Command::Update { .. } => commands::update(&config),
        Command::Project { .. } => commands::project(&config),
        Command::Evaluate { loo: true, .. } => commands::evaluate_loo(&config),
        Command::Evaluate { .. } => commands::evaluate(&config),
        Command::Synth { linear, .. } => commands::synth(&config, linear),
    }
}

/// 2 configuration, 3 input/output, 4 numerical, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use relshift::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::Plan(_) => 2,
                E::Io { .. } | E::Stream(_) | E::Parse { .. } => 3,
                e if e.is_numerical() => 4,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

/// The error chain joined with ": ", skipping causes already spelled out
/// by an outer message.
fn describe(err: &anyhow::Error) -> String {
    let mut text = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text.push_str(": ");
            text.push_str(&c);
        }
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
