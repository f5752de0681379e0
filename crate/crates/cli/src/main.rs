//! `binllm`: ingest → train → encode → corpus → eval.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 internal error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CorpusSelection, RunConfig, ScorerName};
use error::{Class, Failure};

#[derive(Debug, Parser)]
#[command(name = "binllm", version, about = "Binary collaborative codes for LLM recommendation")]
struct Cli {
    /// Flat TOML file of run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overrides any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = RunConfig::parse_override)]
    overrides: Vec<(String, toml::Value)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read interactions, label them and write the chronological split.
    Ingest {
        /// Interaction file; overrides `interactions`.
        #[arg(long)]
        interactions: Option<PathBuf>,
    },
    /// Train a BinMF or MF model on the split.
    Train,
    /// Dump the binary code of every user and item.
    Encode {
        #[arg(long, value_parser = ["binary", "dot_decimal"])]
        format: Option<String>,
    },
    /// Write prompt corpora for every partition.
    Corpus {
        #[arg(long, value_enum)]
        mode: Option<CorpusSelection>,
        /// Item title file; overrides `catalog`.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Score the test partition and report AUC/UAUC per segment.
    Eval {
        #[arg(long, value_enum)]
        scorer: Option<ScorerName>,
        /// Score dump for `--scorer dump`; overrides `score_dump`.
        #[arg(long)]
        score_dump: Option<PathBuf>,
    },
}

fn value<T: serde::Serialize>(v: T) -> toml::Value {
    toml::Value::try_from(v).expect("flag value serializes")
}

impl Cli {
    /// Command-line settings in increasing precedence.
    fn overrides(&self) -> Vec<(String, toml::Value)> {
        let mut out = self.overrides.clone();
        let mut put = |key: &str, v: toml::Value| out.push((key.to_owned(), v));
        if let Some(seed) = self.seed {
            put("seed", value(seed));
        }
        if let Some(dir) = &self.out_dir {
            put("out_dir", value(dir));
        }
        match &self.command {
            Command::Ingest { interactions: Some(p) } => put("interactions", value(p)),
            Command::Encode { format: Some(f) } => put("code_format", value(f)),
            Command::Corpus { mode, catalog } => {
                if let Some(m) = mode {
                    put("corpus_mode", value(m));
                }
                if let Some(c) = catalog {
                    put("catalog", value(c));
                }
            }
            Command::Eval { scorer, score_dump } => {
                if let Some(s) = scorer {
                    put("scorer", value(s));
                }
                if let Some(p) = score_dump {
                    put("score_dump", value(p));
                }
            }
            _ => {}
        }
        out
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides()).map_err(Failure::user)?;
    match cli.command {
        Command::Ingest { .. } => commands::ingest(&cfg),
        Command::Train => commands::train_model(&cfg),
        Command::Encode { .. } => commands::encode(&cfg),
        Command::Corpus { .. } => commands::corpus(&cfg),
        Command::Eval { .. } => commands::eval(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Class::User.exit_code() } else { ExitCode::SUCCESS };
        }
    };
    // Panics are invariant violations, not user errors.
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(failure)) => {
            eprintln!("error: {failure}");
            failure.class.exit_code()
        }
        Err(_) => Class::Internal.exit_code(),
    }
}
