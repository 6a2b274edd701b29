//! `dialectid`: corpus statistics, training, classification, evaluation
//! and synthetic corpus generation from one binary.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dialectid::corpus::{self, LabeledSentence};
use dialectid::eval::{self, SplitMode};
use dialectid::pipeline::{train_arch, Arch, ArchTrainer, PipelineConfig, SavedModel};
use dialectid::svm::GammaMode;
use dialectid::synthgen::{self, SynthConfig};
use dialectid::Error;

/// Fixed default seed so repeated invocations are reproducible.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "dialectid", version, about = "Dialect identification toolkit")]
struct Cli {
    /// Base random seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Maximum parallel evaluation runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus statistics per variety (token counts, sentence lengths).
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to $DIALECTID_OUT or the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Train one model family on a full corpus.
    Train {
        /// One of: textcat, svm, cnn, lstm, clstm.
        #[arg(long)]
        arch: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Model output path (a directory for textcat, a file otherwise).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Classify sentences from a file or stdin, one per line.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Input text file; reads stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// How many ranked labels to print per line.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Stratified Monte Carlo cross-validation for one or more families.
    Evaluate {
        /// Comma-separated families, or "all".
        #[arg(long)]
        arch: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// sentence or document level splitting.
        #[arg(long, default_value = "sentence")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic labeled corpus from class-specific Markov chains.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        sentences_per_class: usize,
        /// 0 = identical class distributions, 1 = fully divergent.
        #[arg(long, default_value_t = 1.0)]
        divergence: f64,
        #[arg(long, default_value_t = 25)]
        sentences_per_document: usize,
    },
    /// Print nearest neighbors from the embedding table inside a model file.
    Dump {
        #[arg(long)]
        model: PathBuf,
        /// Tokens to look up.
        #[arg(long, required = true, num_args = 1..)]
        token: Vec<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

/// Hyperparameter overrides shared by train and evaluate.
#[derive(Args)]
struct Overrides {
    /// TextCat n-gram profile size.
    #[arg(long)]
    profile_size: Option<usize>,
    /// Embedding dimensionality.
    #[arg(long)]
    dim: Option<usize>,
    /// Subword hash buckets (power of two).
    #[arg(long)]
    buckets: Option<usize>,
    /// Skip-gram epochs.
    #[arg(long)]
    embed_epochs: Option<usize>,
    /// Minimum token frequency kept in the embedding vocabulary.
    #[arg(long)]
    min_count: Option<u64>,
    /// Maximum sentence length in tokens for embedding matrices.
    #[arg(long)]
    max_len: Option<usize>,
    /// Neural training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Neural learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// LSTM / C-LSTM hidden units.
    #[arg(long)]
    hidden: Option<usize>,
    /// Convolution filters per kernel size.
    #[arg(long)]
    filters: Option<usize>,
    /// RBF gamma: "scale" or a decimal.
    #[arg(long)]
    gamma: Option<String>,
    /// SVM soft-margin C.
    #[arg(long)]
    c_param: Option<f64>,
    /// Varieties with at most this many tokens are dropped.
    #[arg(long, default_value_t = 10_000)]
    min_variety_tokens: u64,
    /// Sentences with fewer tokens than this are dropped.
    #[arg(long, default_value_t = 5)]
    min_sentence_len: usize,
}

impl Overrides {
    fn apply(&self, seed: u64) -> Result<PipelineConfig, Error> {
        let mut cfg = PipelineConfig::default();
        if let Some(v) = self.profile_size {
            cfg.profile_size = v;
        }
        if let Some(v) = self.dim {
            cfg.embedding.dim = v;
        }
        if let Some(v) = self.buckets {
            cfg.embedding.bucket_count = v;
        }
        if let Some(v) = self.embed_epochs {
            cfg.embedding.epochs = v;
        }
        if let Some(v) = self.min_count {
            cfg.embedding.min_count = v;
        }
        if let Some(v) = self.max_len {
            cfg.max_len = v;
        }
        for train in [
            &mut cfg.cnn.train,
            &mut cfg.lstm.train,
            &mut cfg.clstm.train,
        ] {
            if let Some(v) = self.epochs {
                train.epochs = v;
            }
            if let Some(v) = self.lr {
                train.learning_rate = v;
            }
            if let Some(v) = self.batch_size {
                train.batch_size = v;
            }
            if let Some(v) = self.dropout {
                train.dropout = v;
            }
            train.seed = seed;
        }
        if let Some(v) = self.hidden {
            cfg.lstm.hidden_size = v;
            cfg.clstm.hidden_size = v;
        }
        if let Some(v) = self.filters {
            cfg.cnn.filters_per_size = v;
            cfg.clstm.filters_per_size = v;
        }
        if let Some(g) = &self.gamma {
            cfg.svm.gamma = if g == "scale" {
                GammaMode::Scale
            } else {
                let value: f64 = g.parse().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "--gamma expects \"scale\" or a decimal, got {g:?}"
                    ))
                })?;
                if value <= 0.0 {
                    return Err(Error::InvalidConfig("--gamma must be positive".into()));
                }
                GammaMode::Fixed(value)
            };
        }
        if let Some(v) = self.c_param {
            cfg.svm.c = v;
        }
        cfg.embedding.seed = seed;
        Ok(cfg)
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::Manifest { .. }
        | Error::InvalidConfig(_)
        | Error::InvalidLabel(_) => 2,
        Error::DimensionMismatch { .. }
        | Error::Model(_)
        | Error::NoData
        | Error::EmptyInput(_)
        | Error::DegenerateFeatures(_) => 3,
        Error::Training { .. } => 4,
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("DIALECTID_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_dataset(
    manifest: &Path,
    overrides: &Overrides,
) -> Result<Vec<LabeledSentence>, Error> {
    let corpus = corpus::load_corpus(manifest)?;
    corpus::prepare_dataset(
        &corpus,
        overrides.min_variety_tokens,
        overrides.min_sentence_len,
    )
}

fn parse_archs(spec: &str) -> Result<Vec<Arch>, Error> {
    if spec == "all" {
        return Ok(Arch::ALL.to_vec());
    }
    spec.split(',').map(|s| s.trim().parse()).collect()
}

fn cmd_stats(manifest: &Path, out: Option<PathBuf>, json: bool) -> Result<(), Error> {
    let corpus = corpus::load_corpus(manifest)?;
    let stats = corpus::compute_stats(&corpus);
    let dir = out_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (name, body) = if json {
        ("corpus_stats.json", stats.to_json())
    } else {
        ("corpus_stats.csv", stats.to_csv())
    };
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(
    arch: &str,
    manifest: &Path,
    out: &Path,
    overrides: &Overrides,
    seed: u64,
) -> Result<(), Error> {
    let arch: Arch = arch.parse()?;
    let cfg = overrides.apply(seed)?;
    let dataset = load_dataset(manifest, overrides)?;
    let model = train_arch(arch, &dataset, &cfg, seed)?;
    model.save(out)?;
    if let SavedModel::Neural { net, .. } = &model {
        let log_path = out.with_extension("train_log.csv");
        let mut log = String::from("epoch,train_loss,heldout_loss\n");
        for e in &net.log {
            log.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.heldout_loss));
        }
        std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    }
    println!(
        "trained {} on {} sentences (config {}), wrote {}",
        arch.tag(),
        dataset.len(),
        cfg.config_hash(),
        out.display()
    );
    Ok(())
}

fn cmd_classify(model: &Path, input: Option<PathBuf>, top: usize) -> Result<(), Error> {
    let model = SavedModel::load(model)?;
    let reader: Box<dyn BufRead> = match &input {
        Some(path) => Box::new(std::io::BufReader::new(
            std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(input.as_deref().unwrap_or(Path::new("stdin")), e))?;
        let tokens = dialectid::pipeline::normalize_line(&line);
        if tokens.is_empty() {
            writeln!(out, "{}\tSKIP", i + 1).ok();
            continue;
        }
        let ranked = model.classify_tokens(&tokens)?;
        let best = ranked[0].0.as_str().to_string();
        let cols: Vec<String> = ranked
            .iter()
            .take(top)
            .map(|(l, p)| format!("{l}:{p:.4}"))
            .collect();
        writeln!(out, "{}\t{}\t{}", i + 1, best, cols.join("\t")).ok();
    }
    Ok(())
}

fn cmd_evaluate(
    arch_spec: &str,
    manifest: &Path,
    runs: usize,
    split: &str,
    out: Option<PathBuf>,
    overrides: &Overrides,
    seed: u64,
    jobs: usize,
) -> Result<(), Error> {
    let archs = parse_archs(arch_spec)?;
    let mode = match split {
        "sentence" => SplitMode::Sentence,
        "document" => SplitMode::Document,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown split mode {other:?}; valid values: sentence, document"
            )))
        }
    };
    if runs == 0 {
        return Err(Error::InvalidConfig("--runs must be at least 1".into()));
    }
    let cfg = overrides.apply(seed)?;
    let dataset = load_dataset(manifest, overrides)?;
    let dir = out_dir(out);

    // Collect everything first; files are only written once all
    // architectures succeed, so a failed run leaves no partial outputs.
    let mut reports = Vec::new();
    for arch in &archs {
        let trainer = ArchTrainer {
            arch: *arch,
            config: cfg.clone(),
        };
        let report = eval::run_experiment(&trainer, &dataset, runs, seed, mode, jobs)?;
        println!(
            "{}: macro P={:.4} R={:.4} F1={:.4} over {} runs",
            report.model, report.macro_precision, report.macro_recall, report.macro_f1, runs
        );
        reports.push(report);
    }
    for report in &reports {
        eval::emit_report(report, &dir)?;
    }
    if reports.len() > 1 {
        let merged = eval::merged_csv(&reports)?;
        let path = dir.join("merged_results.csv");
        std::fs::write(&path, merged).map_err(|e| Error::io(&path, e))?;
    }
    println!("reports written to {}", dir.display());
    Ok(())
}

fn cmd_synth(
    out: &Path,
    classes: usize,
    sentences_per_class: usize,
    divergence: f64,
    sentences_per_document: usize,
    seed: u64,
) -> Result<(), Error> {
    let config = SynthConfig {
        classes,
        sentences_per_class,
        divergence,
        sentences_per_document,
        seed,
        ..Default::default()
    };
    let corpus = synthgen::generate(&config)?;
    synthgen::write_corpus(&corpus, &config, out)?;
    println!(
        "wrote {} documents across {} classes to {}",
        corpus.documents.len(),
        classes,
        out.display()
    );
    Ok(())
}

fn cmd_dump(model: &Path, tokens: &[String], top: usize) -> Result<(), Error> {
    let model = SavedModel::load(model)?;
    let embeddings = model.embeddings().ok_or_else(|| {
        Error::Model("this model has no embedding table (textcat profiles)".into())
    })?;
    for token in tokens {
        println!("{token}:");
        for (neighbor, sim) in embeddings.nearest_neighbors(token, top) {
            println!("  {neighbor}\t{sim:.4}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Stats { manifest, out, json } => cmd_stats(&manifest, out, json),
        Command::Train {
            arch,
            manifest,
            out,
            overrides,
        } => cmd_train(&arch, &manifest, &out, &overrides, cli.seed),
        Command::Classify { model, input, top } => cmd_classify(&model, input, top),
        Command::Evaluate {
            arch,
            manifest,
            runs,
            split,
            out,
            overrides,
        } => cmd_evaluate(
            &arch, &manifest, runs, &split, out, &overrides, cli.seed, cli.jobs,
        ),
        Command::Synth {
            out,
            classes,
            sentences_per_class,
            divergence,
            sentences_per_document,
        } => cmd_synth(
            &out,
            classes,
            sentences_per_class,
            divergence,
            sentences_per_document,
            cli.seed,
        ),
        Command::Dump { model, token, top } => cmd_dump(&model, &token, top),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
