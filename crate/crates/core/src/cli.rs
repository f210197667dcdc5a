//! The `revlm` command line.
//!
//! Every subcommand that produces artifacts writes them into `--out`
//! together with `config.json` (the fully resolved settings, enough to
//! rerun it) and `meta.json` (version, argv and a timestamp). Only
//! `meta.json` changes between identical runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bilm::{train_bilm, BiLmConfig, BiLmModel, Combine, ExtractOptions, StateKind};
use crate::corpus::{
    build_vocab_from_text, encode, encode_labeled, parse_labeled, read_text, segment, split_paragraphs,
    Corpus, Sentence, Vocab,
};
use crate::domaincls::{train_domaincls, DomainConfig, DomainModel, Granularity};
use crate::embed::{average_states, normalize, EmbeddingTable, Normalization, Provenance};
use crate::error::Error;
use crate::labeler::{docs_from_texts, format_labels, iterate_labeling, LabelerConfig};
use crate::lm::{perplexity, rank_probe, run_experiment_suite, InputSpec, LmConfig, LmModel, Manifest};
use crate::numcore::{AdamConfig, Checkpoint};
use crate::train::TrainConfig;
use crate::word2vec::{train_word2vec, W2vConfig, W2vMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "revlm", version, about = "Pre-trained embeddings for LSTM language models")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "RTL_SEED", default_value_t = crate::DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a vocabulary file from a text corpus.
    Vocab(VocabArgs),
    /// Train word2vec embeddings.
    W2v(W2vArgs),
    /// Train a bidirectional LM and export averaged state embeddings.
    Bilm(BilmArgs),
    /// Assign domain labels to paragraphs with iterative LSA clustering.
    Label(LabelArgs),
    /// Train the bi-LSTM domain classifier and export its embeddings.
    Domaincls(DomainArgs),
    /// Average a trained model's states over a corpus into an embedding table.
    EmbedAvg(EmbedAvgArgs),
    /// Train the LSTM language model.
    LmTrain(LmTrainArgs),
    /// Perplexity of a trained LM on a corpus.
    Eval(EvalArgs),
    /// Run a manifest of LM experiments and write the report.
    Suite(SuiteArgs),
    /// Rank of one word under a trained LM.
    Probe(ProbeArgs),
}

#[derive(Debug, Args, Serialize)]
struct VocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    max_size: usize,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl TrainArgs {
    fn apply(&self, mut t: TrainConfig, seed: u64) -> TrainConfig {
        t.seed = seed;
        if let Some(e) = self.epochs {
            t.epochs = e;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(lr) = self.lr {
            t.adam = AdamConfig { lr, ..t.adam };
        }
        t
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NormArg {
    None,
    Unit,
    Meanvar,
    MeanvarLiteral,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::None => Normalization::None,
            NormArg::Unit => Normalization::Unit,
            NormArg::Meanvar => Normalization::Meanvar,
            NormArg::MeanvarLiteral => Normalization::MeanvarLiteral,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Cbow,
    SkipGram,
}

#[derive(Debug, Args, Serialize)]
struct W2vArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, value_enum, default_value = "cbow")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StateArg {
    Cell,
    Hidden,
}

impl From<StateArg> for StateKind {
    fn from(s: StateArg) -> Self {
        match s {
            StateArg::Cell => StateKind::Cell,
            StateArg::Hidden => StateKind::Hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CombineArg {
    Concat,
    Average,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GranularityArg {
    Paragraph,
    Sentence,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Paragraph => Granularity::Paragraph,
            GranularityArg::Sentence => Granularity::Sentence,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct BilmArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    emb_dim: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, default_value_t = 50_000)]
    max_vocab: usize,
    #[arg(long, value_enum, default_value = "cell")]
    state: StateArg,
    #[arg(long, value_enum, default_value = "concat")]
    combine: CombineArg,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
struct LabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    #[arg(long)]
    initial_k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct DomainArgs {
    /// `__label__<id>\t<paragraph>` lines.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    emb_dim: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "paragraph")]
    granularity: GranularityArg,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, value_enum, default_value = "hidden")]
    state: StateArg,
    #[arg(long, default_value_t = 50_000)]
    max_vocab: usize,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
struct EmbedAvgArgs {
    /// A bi-LM or domain-classifier checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Plain or `__label__` text to average over.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the model's own setting.
    #[arg(long, value_enum)]
    state: Option<StateArg>,
    #[arg(long, value_enum, default_value = "concat")]
    combine: CombineArg,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, value_enum)]
    granularity: Option<GranularityArg>,
}

#[derive(Debug, Args, Serialize)]
struct LmTrainArgs {
    #[arg(long)]
    train_corpus: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Pre-trained embedding text file; a learned embedding when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Let training update the pre-trained table.
    #[arg(long)]
    unfreeze: bool,
    /// Learned compression width after the pre-trained table.
    #[arg(long)]
    compression: Option<usize>,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormArg,
    #[arg(long, default_value_t = 256)]
    emb_dim: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, default_value_t = 2)]
    patience: usize,
    #[arg(long, default_value_t = 50_000)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SuiteArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ProbeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
    /// 1-based word index within the sentence.
    #[arg(long)]
    position: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand, printing to
/// stdout. Returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch_with(argv, &mut std::io::stdout())
}

/// [`dispatch`] writing command output to `out`.
pub fn dispatch_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let seed = cli.seed;
    let res = match &cli.command {
        Command::Vocab(a) => cmd_vocab(a, seed, &argv),
        Command::W2v(a) => cmd_w2v(a, seed, &argv),
        Command::Bilm(a) => cmd_bilm(a, seed, &argv),
        Command::Label(a) => cmd_label(a, seed, &argv),
        Command::Domaincls(a) => cmd_domaincls(a, seed, &argv),
        Command::EmbedAvg(a) => cmd_embed_avg(a, seed, &argv),
        Command::LmTrain(a) => cmd_lm_train(a, seed, &argv),
        Command::Eval(a) => cmd_eval(a, seed, &argv, out),
        Command::Suite(a) => cmd_suite(a, seed, &argv, out),
        Command::Probe(a) => cmd_probe(a, seed, &argv, out),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Creates `dir` and writes `config.json` and `meta.json` into it.
fn start_run(dir: &Path, command: &str, seed: u64, config: Value, argv: &[OsString]) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let resolved = json!({
        "command": command,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    write_file(&dir.join("config.json"), (serde_json::to_string_pretty(&resolved)? + "\n").as_bytes())?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "unix_time": now,
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(&dir.join("meta.json"), (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Error> {
    write_file(path, (serde_json::to_string_pretty(v)? + "\n").as_bytes())
}

fn usage(cond: bool, msg: &str) -> CliResult {
    if cond {
        Ok(())
    } else {
        Err(Failure::Usage(msg.to_string()))
    }
}

fn load_plain(path: &Path, max_size: usize, min_count: u64) -> Result<Corpus, Error> {
    let text = read_text(path)?;
    let vocab = build_vocab_from_text(&text, max_size, min_count)?;
    let c = encode(&text, &vocab);
    if c.num_sentences() == 0 {
        return Err(Error::Data(format!("{}: no sentences", path.display())));
    }
    Ok(c)
}

fn is_labeled(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.starts_with(crate::corpus::LABEL_PREFIX))
}

/// Encodes plain or labeled text under an existing vocabulary.
fn encode_any(path: &Path, vocab: &Vocab) -> Result<Corpus, Error> {
    let text = read_text(path)?;
    let c = if is_labeled(&text) {
        encode_labeled(&parse_labeled(&text, path)?, vocab)
    } else {
        encode(&text, vocab)
    };
    if c.num_sentences() == 0 {
        return Err(Error::Data(format!("{}: no sentences", path.display())));
    }
    Ok(c)
}

fn cmd_vocab(a: &VocabArgs, seed: u64, argv: &[OsString]) -> CliResult {
    usage(a.max_size >= 1, "--max-size must be at least 1")?;
    let text = read_text(&a.corpus)?;
    let vocab = build_vocab_from_text(&text, a.max_size, a.min_count)?;
    start_run(&a.out, "vocab", seed, serde_json::to_value(a).map_err(Error::from)?, argv)?;
    vocab.save(&a.out.join("vocab.tsv"))?;
    Ok(())
}

fn cmd_w2v(a: &W2vArgs, seed: u64, argv: &[OsString]) -> CliResult {
    let cfg = W2vConfig {
        dim: a.dim,
        window: a.window,
        negatives: a.negatives,
        mode: match a.mode {
            ModeArg::Cbow => W2vMode::Cbow,
            ModeArg::SkipGram => W2vMode::SkipGram,
        },
        epochs: a.epochs,
        lr: a.lr,
        min_count: a.min_count,
        subsample: a.subsample,
        seed,
        ..W2vConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = load_plain(&a.corpus, usize::MAX, 1)?;
    let config = json!({ "corpus": a.corpus, "word2vec": cfg, "normalize": a.normalize });
    start_run(&a.out, "w2v", seed, config, argv)?;
    let out = train_word2vec(&corpus, &cfg)?;
    let table = normalize(&out.table, a.normalize.into())?;
    table.save(&a.out.join("embeddings.txt"))?;
    write_json(&a.out.join("losses.json"), &json!({ "epoch_losses": out.epoch_losses }))?;
    Ok(())
}

fn cmd_bilm(a: &BilmArgs, seed: u64, argv: &[OsString]) -> CliResult {
    usage(a.emb_dim >= 1 && a.hidden >= 1, "--emb-dim and --hidden must be positive")?;
    let cfg = BiLmConfig {
        emb_dim: a.emb_dim,
        hidden: a.hidden,
        clip: a.clip,
        train: a.train.apply(TrainConfig::default(), seed),
    };
    let extract = ExtractOptions {
        state: a.state.into(),
        combine: match a.combine {
            CombineArg::Concat => Combine::Concat,
            CombineArg::Average => Combine::Average,
        },
        clip: None,
    };
    let corpus = load_plain(&a.corpus, a.max_vocab, 1)?;
    let config = json!({ "corpus": a.corpus, "max_vocab": a.max_vocab, "bilm": cfg, "extract": extract });
    start_run(&a.out, "bilm", seed, config, argv)?;
    let trained = train_bilm(&corpus, &cfg)?;
    trained.model.to_checkpoint().save(&a.out.join("model.ckpt"))?;
    trained.model.embeddings(&corpus, &extract)?.save(&a.out.join("embeddings.txt"))?;
    write_json(&a.out.join("losses.json"), &json!({ "epoch_losses": trained.epoch_losses }))?;
    Ok(())
}

fn cmd_label(a: &LabelArgs, seed: u64, argv: &[OsString]) -> CliResult {
    usage(a.k >= 1 && a.d >= 1 && a.rounds >= 1, "--k, --d and --rounds must be positive")?;
    let cfg = LabelerConfig {
        k: a.k,
        d: a.d,
        tau: a.tau,
        rounds: a.rounds,
        initial_k: a.initial_k,
        seed,
    };
    let text = read_text(&a.corpus)?;
    let paragraphs = split_paragraphs(&text);
    let (vocab, docs) = docs_from_texts(&paragraphs, 1)?;
    start_run(&a.out, "label", seed, json!({ "corpus": a.corpus, "labeler": cfg }), argv)?;
    let labeling = iterate_labeling(&docs, vocab.len(), &cfg)?;
    write_file(&a.out.join("labeled.txt"), format_labels(&paragraphs, &labeling.labels).as_bytes())?;
    write_json(&a.out.join("labeling.json"), &labeling)?;
    Ok(())
}

fn cmd_domaincls(a: &DomainArgs, seed: u64, argv: &[OsString]) -> CliResult {
    usage(a.emb_dim >= 1 && a.hidden >= 1, "--emb-dim and --hidden must be positive")?;
    let cfg = DomainConfig {
        emb_dim: a.emb_dim,
        hidden: a.hidden,
        granularity: a.granularity.into(),
        clip: a.clip,
        state: a.state.into(),
        train: a.train.apply(TrainConfig::default(), seed),
    };
    let text = read_text(&a.corpus)?;
    let lines = parse_labeled(&text, &a.corpus)?;
    let joined: String = lines.iter().map(|l| format!("{}\n\n", l.text)).collect();
    let vocab = build_vocab_from_text(&joined, a.max_vocab, 1)?;
    let corpus = encode_labeled(&lines, &vocab);
    let config = json!({ "corpus": a.corpus, "max_vocab": a.max_vocab, "domaincls": cfg });
    start_run(&a.out, "domaincls", seed, config, argv)?;
    let trained = train_domaincls(&corpus, &cfg)?;
    let model = &trained.model;
    model.to_checkpoint().save(&a.out.join("model.ckpt"))?;
    model.embeddings(&corpus)?.save(&a.out.join("embeddings.txt"))?;
    let metrics = json!({
        "epoch_losses": trained.epoch_losses,
        "train_accuracy": model.accuracy(&corpus, cfg.granularity)?,
    });
    write_json(&a.out.join("metrics.json"), &metrics)?;
    Ok(())
}

fn cmd_embed_avg(a: &EmbedAvgArgs, seed: u64, argv: &[OsString]) -> CliResult {
    let ck = Checkpoint::load(&a.model)?;
    start_run(&a.out, "embed-avg", seed, serde_json::to_value(a).map_err(Error::from)?, argv)?;
    let table = match ck.kind.as_str() {
        crate::bilm::CHECKPOINT_KIND => {
            let model = BiLmModel::from_checkpoint(&ck)?;
            let corpus = encode_any(&a.corpus, &model.vocab)?;
            let opts = ExtractOptions {
                state: a.state.map_or(StateKind::Cell, Into::into),
                combine: match a.combine {
                    CombineArg::Concat => Combine::Concat,
                    CombineArg::Average => Combine::Average,
                },
                clip: a.clip,
            };
            model.embeddings(&corpus, &opts)?
        }
        crate::domaincls::CHECKPOINT_KIND => {
            let model = DomainModel::from_checkpoint(&ck)?;
            let corpus = encode_any(&a.corpus, &model.vocab)?;
            let granularity = a.granularity.map_or(model.config.granularity, Into::into);
            let state = a.state.map_or(model.config.state, Into::into);
            let clip = a.clip.or(model.config.clip);
            let stream = model.extract_states(&corpus, granularity, state, clip)?;
            average_states(&model.vocab, 2 * model.params.hidden(), &stream, Provenance::Domaincls)?.0
        }
        other => {
            return Err(Failure::Data(Error::Data(format!(
                "{}: checkpoint kind {other:?} has no states to average",
                a.model.display()
            ))))
        }
    };
    table.save(&a.out.join("embeddings.txt"))?;
    Ok(())
}

fn cmd_lm_train(a: &LmTrainArgs, seed: u64, argv: &[OsString]) -> CliResult {
    usage(a.emb_dim >= 1 && a.hidden >= 1, "--emb-dim and --hidden must be positive")?;
    usage(
        a.embeddings.is_some() || (a.compression.is_none() && !a.unfreeze),
        "--compression and --unfreeze need --embeddings",
    )?;
    let cfg = LmConfig {
        emb_dim: a.emb_dim,
        hidden: a.hidden,
        clip: a.clip,
        patience: Some(a.patience),
        train: a.train.apply(TrainConfig::default(), seed),
    };
    let train = load_plain(&a.train_corpus, a.max_vocab, a.min_count)?;
    let valid = match &a.valid {
        Some(p) => Some(encode_any(p, &train.vocab)?),
        None => None,
    };
    let table = match &a.embeddings {
        Some(p) => Some(normalize(&EmbeddingTable::load(p)?, a.normalize.into())?),
        None => None,
    };
    let config = json!({
        "train_corpus": a.train_corpus,
        "valid": a.valid,
        "embeddings": a.embeddings,
        "frozen": !a.unfreeze,
        "compression": a.compression,
        "normalize": a.normalize,
        "max_vocab": a.max_vocab,
        "min_count": a.min_count,
        "lm": cfg,
    });
    start_run(&a.out, "lm-train", seed, config, argv)?;
    let input = match &table {
        Some(t) => InputSpec::Pretrained {
            table: t,
            frozen: !a.unfreeze,
            compression: a.compression,
        },
        None => InputSpec::Learned,
    };
    let trained = crate::lm::train_lm(&train, input, &cfg, valid.as_ref())?;
    trained.model.to_checkpoint().save(&a.out.join("model.ckpt"))?;
    let metrics = json!({
        "epoch_losses": trained.epoch_losses,
        "valid_ppl": trained.valid_ppl,
        "best_epoch": trained.best_epoch,
        "train_ppl": perplexity(&trained.model, &train)?,
        "missing_rows": trained.missing_rows.len(),
    });
    write_json(&a.out.join("metrics.json"), &metrics)?;
    Ok(())
}

fn load_lm(path: &Path) -> Result<LmModel, Error> {
    LmModel::from_checkpoint(&Checkpoint::load(path)?)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Error> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_eval(a: &EvalArgs, seed: u64, argv: &[OsString], out: &mut dyn Write) -> CliResult {
    let model = load_lm(&a.model)?;
    let corpus = encode_any(&a.corpus, &model.vocab)?;
    let ppl = perplexity(&model, &corpus)?;
    let tokens: usize = corpus.sentences().map(|s| s.ids.len() - 1).sum();
    emit(out, &format!("perplexity {ppl:.6} over {tokens} tokens\n"))?;
    if let Some(dir) = &a.out {
        start_run(dir, "eval", seed, serde_json::to_value(a).map_err(Error::from)?, argv)?;
        write_json(&dir.join("eval.json"), &json!({ "perplexity": ppl, "tokens": tokens }))?;
    }
    Ok(())
}

fn cmd_suite(a: &SuiteArgs, seed: u64, argv: &[OsString], out: &mut dyn Write) -> CliResult {
    let raw = read_text(&a.manifest)?;
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| Error::parse(&a.manifest, e.line(), format!("bad manifest: {e}")))?;
    let mut manifest: Manifest = serde_json::from_value(value.clone())
        .map_err(|e| Error::parse(&a.manifest, 0, format!("bad manifest: {e}")))?;
    if value.get("seeds").is_none() {
        manifest.seeds = vec![seed];
    }
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    manifest.resolve_paths(base);
    start_run(&a.out, "suite", seed, serde_json::to_value(&manifest).map_err(Error::from)?, argv)?;
    let report = run_experiment_suite(&manifest)?;
    write_file(&a.out.join("report.json"), report.to_json()?.as_bytes())?;
    let table = report.to_table();
    write_file(&a.out.join("report.txt"), table.as_bytes())?;
    emit(out, &table)?;
    Ok(())
}

fn cmd_probe(a: &ProbeArgs, seed: u64, argv: &[OsString], out: &mut dyn Write) -> CliResult {
    let model = load_lm(&a.model)?;
    let tokens: Vec<String> = segment(&a.text).into_iter().flatten().flatten().collect();
    usage(!tokens.is_empty(), "--text has no words")?;
    let sentence = Sentence::from_tokens(&tokens, &model.vocab);
    let result = rank_probe(&model, &sentence, a.position)?;
    let text = result.report();
    emit(out, &text)?;
    if let Some(dir) = &a.out {
        start_run(dir, "probe", seed, serde_json::to_value(a).map_err(Error::from)?, argv)?;
        write_file(&dir.join("probe.txt"), text.as_bytes())?;
        write_json(&dir.join("probe.json"), &result)?;
    }
    Ok(())
}
