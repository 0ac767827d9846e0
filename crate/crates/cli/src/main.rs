use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use treeseq::decode::DecodeOptions;
use treeseq::eval::{EvalConfig, DEFAULT_BUCKETS};

mod commands;
mod config;

use commands::{EvalRequest, ParseRequest};
use config::RunConfig;

/// Directory for train and gen-corpus outputs, overriding the config file.
const OUTPUT_DIR_ENV: &str = "TREESEQ_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "treeseq", version, about = "Sequence-to-sequence constituency parser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from bracketed treebanks.
    Train(TrainArgs),
    /// Parse pre-tokenized sentences, one per line.
    Parse(ParseArgs),
    /// Labeled bracket F1 of predicted trees against gold trees.
    Eval(EvalArgs),
    /// Write the linearized form of every tree, tags normalized to XX.
    Linearize(LinearizeArgs),
    /// Rebuild trees from symbol sequences and their sentences.
    Delinearize(DelinearizeArgs),
    /// Sample a train/dev/test treebank from a weighted toy grammar.
    GenCorpus(GenCorpusArgs),
    /// Print the header of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct TrainArgs {
    /// TOML run configuration; flags below override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// word2vec text file for the input embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    input_vocab: Option<PathBuf>,
    #[arg(long)]
    output_vocab: Option<PathBuf>,
    #[arg(long)]
    vocab_cap: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    dtype: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    decay_start_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Beam width for dev evaluation during training.
    #[arg(long)]
    eval_beam: Option<usize>,
}

impl TrainArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        let d = &mut cfg.data;
        set(&mut d.train, self.train.map(Some));
        set(&mut d.dev, self.dev.map(Some));
        set(&mut d.embeddings, self.embeddings.map(Some));
        set(&mut d.input_vocab, self.input_vocab.map(Some));
        set(&mut d.output_vocab, self.output_vocab.map(Some));
        set(&mut d.input_vocab_cap, self.vocab_cap);
        let m = &mut cfg.model;
        set(&mut m.layers, self.layers);
        set(&mut m.hidden, self.hidden);
        set(&mut m.embed, self.embed);
        set(&mut m.dtype, self.dtype);
        let t = &mut cfg.train;
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.lr_decay, self.lr_decay);
        set(&mut t.decay_start_epoch, self.decay_start_epoch);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.max_epochs, self.max_epochs);
        set(&mut t.max_steps, self.max_steps.map(Some));
        set(&mut t.dropout_rate, self.dropout);
        set(&mut t.grad_clip_norm, self.clip);
        set(&mut t.seed, self.seed);
        set(&mut t.eval_every, self.eval_every);
        set(&mut t.patience, self.patience);
        set(&mut t.eval_beam, self.eval_beam);
        set(&mut cfg.output.dir, self.output_dir.map(Some));
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Checkpoint file; give several to decode with their ensemble.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Tokenized sentences, one per line.
    #[arg(short, long)]
    input: PathBuf,
    /// Bracketed trees, one per line; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Write one attention TSV per sentence into this directory.
    #[arg(long)]
    attention: Option<PathBuf>,
    /// Decoding threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Drop punctuation-tagged words before scoring.
    #[arg(long)]
    delete_punct: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the text report to a file as well as stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write F1 by sentence length as TSV.
    #[arg(long)]
    buckets: Option<PathBuf>,
    /// Comma-separated length bounds for --buckets.
    #[arg(long)]
    bucket_bounds: Option<String>,
    /// Statistics file written by parse, for the malformed rate.
    #[arg(long)]
    parse_stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LinearizeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Keep part-of-speech tags instead of normalizing them to XX.
    #[arg(long)]
    keep_tags: bool,
}

#[derive(Args, Debug)]
struct DelinearizeArgs {
    /// Symbol sequences, one per line.
    #[arg(long)]
    symbols: PathBuf,
    /// Tokenized sentences aligned with the sequences.
    #[arg(long)]
    sentences: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    /// Grammar file; the built-in grammar when absent.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 200)]
    dev: usize,
    #[arg(long, default_value_t = 200)]
    test: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    checkpoint: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let config_path = args.config.clone();
            let cfg = args.resolve()?;
            let summary = commands::train_cmd(&cfg).with_context(|| match &config_path {
                Some(p) => format!("training with config {}", p.display()),
                None => "training".to_string(),
            })?;
            match summary.best_f1 {
                Some(f1) => println!(
                    "best dev F1 {f1:.2} at step {} of {}; saved {}",
                    summary.best_step,
                    summary.steps,
                    summary.best_path.display()
                ),
                None => println!("no updates; saved initial model to {}", summary.best_path.display()),
            }
        }
        Command::Parse(args) => {
            let cfg = RunConfig::load(args.config.as_deref())?;
            let options = DecodeOptions {
                beam_size: args.beam.unwrap_or(cfg.decode.beam),
                max_len: args.max_len.or(cfg.decode.max_len),
            };
            let stats = commands::parse_cmd(&ParseRequest {
                checkpoints: &args.checkpoints,
                input: &args.input,
                output: args.output.as_deref(),
                attention_dir: args.attention.as_deref(),
                options,
                threads: args.threads.unwrap_or(cfg.decode.threads),
            })?;
            eprintln!(
                "parsed {} sentences in {:.2}s ({:.1} sentences/second), {} repaired (malformed rate {:.4}), {} empty lines skipped",
                stats.sentences,
                stats.seconds,
                stats.sentences_per_second,
                stats.repaired,
                stats.malformed_rate,
                stats.skipped_empty
            );
        }
        Command::Eval(args) => {
            let cfg = RunConfig::load(args.config.as_deref())?;
            let bounds = match &args.bucket_bounds {
                Some(s) => commands::parse_bounds(s)?,
                None if !cfg.eval.buckets.is_empty() => cfg.eval.buckets.clone(),
                None => DEFAULT_BUCKETS.to_vec(),
            };
            let config = EvalConfig {
                delete_punct: args.delete_punct || cfg.eval.delete_punct,
                buckets: bounds,
                ..EvalConfig::default()
            };
            let report = commands::eval_cmd(&EvalRequest {
                gold: &args.gold,
                pred: &args.pred,
                config,
                json: args.json.as_deref().or(cfg.output.report.as_deref()),
                report: args.report.as_deref(),
                buckets: args.buckets.as_deref().or(cfg.output.buckets.as_deref()),
                stats: args.parse_stats.as_deref(),
            })?;
            print!("{report}");
        }
        Command::Linearize(args) => {
            commands::linearize_cmd(&args.input, args.output.as_deref(), args.keep_tags)?;
        }
        Command::Delinearize(args) => {
            commands::delinearize_cmd(&args.symbols, &args.sentences, args.output.as_deref())?;
        }
        Command::GenCorpus(args) => {
            let corpus = commands::gen_corpus_cmd(
                args.grammar.as_deref(),
                (args.train, args.dev, args.test),
                args.seed,
                &args.output_dir,
            )?;
            eprintln!(
                "wrote {} train, {} dev, {} test trees to {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                display(&args.output_dir)
            );
        }
        Command::InspectCheckpoint(args) => {
            let summary = commands::inspect_cmd(&args.checkpoint)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{summary}");
            }
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
