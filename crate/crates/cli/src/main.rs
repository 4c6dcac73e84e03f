use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use authorguard::corpus::{
    balance_pairs, generate_test_pairs, generate_train_pairs, load_corpus, load_pairs, split_accounts,
    write_pairs, Corpus, LoadMode, PairExample,
};
use authorguard::detection::{replay_corpus, summarize, write_detection_log, BaselinePolicy};
use authorguard::eval::{evaluate_pairs, sweep_thresholds, write_sweep_csv, MetricsReport};
use authorguard::synth::{generate_corpus, SynthSpec};
use authorguard::text::{
    build_vocab, cooccurrence_embeddings, load_embedding_file, write_embeddings, EmbeddingSource, EmbeddingTable, Tokenizer,
    Vocabulary,
};
use authorguard::verifier::{
    calibrate_threshold, load_checkpoint_for_vocab, save_checkpoint, toy_gradient_check, train, MergeMode,
    TrainReport, Verifier, VerifierConfig, VerifierModel,
};
use authorguard::{seed, PairLabel};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(name = "authorguard", version, about = "Compromised-account detection by post authorship verification")]
struct Cli {
    /// Worker cap. Training is sequential, so only 1 worker is ever used.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with known compromise points.
    Synth(SynthArgs),
    /// Build training and test pair files from a corpus.
    Pairs(PairsArgs),
    /// Train a verifier, calibrate its threshold and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a trained model on a pair file, or compare two embedding files.
    Eval(EvalArgs),
    /// Replay account timelines and write the detection log.
    Detect(DetectArgs),
    /// Finite-difference check of the full model's gradients on a toy problem.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    n_accounts: Option<usize>,
    #[arg(long)]
    posts_per_account: Option<usize>,
    #[arg(long)]
    fraction_compromised: Option<f64>,
    #[arg(long)]
    style_overlap: Option<f64>,
    /// Earliest compromise point as a fraction of the timeline.
    #[arg(long)]
    compromise_lo: Option<f64>,
    /// Latest compromise point as a fraction of the timeline.
    #[arg(long)]
    compromise_hi: Option<f64>,
    #[arg(long)]
    slice_size: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    zipf_lo: Option<f64>,
    #[arg(long)]
    zipf_hi: Option<f64>,
    #[arg(long)]
    mean_length_lo: Option<usize>,
    #[arg(long)]
    mean_length_hi: Option<usize>,
    #[arg(long)]
    inherit_style_params: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus JSONL output; ground truth goes to <out>.truth.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write co-occurrence word vectors of the generated text (GloVe text format).
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    embeddings_dim: usize,
    /// Neighbour-averaging rounds applied to the co-occurrence vectors.
    #[arg(long, default_value_t = 10)]
    embeddings_smoothing: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Strict,
    Label,
}

impl From<ModeArg> for LoadMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => LoadMode::Strict,
            ModeArg::Label => LoadMode::Label,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct PairsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    /// Threshold-calibration pairs (compromised-style pairs on the training accounts).
    #[arg(long)]
    validation_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split accounts: this fraction trains, the rest is held out for test pairs.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Same-author pairs sampled per healthy account for test pairs.
    #[arg(long, default_value_t = 50)]
    healthy_cap: usize,
    /// Downsample the majority label of training pairs to this multiple of the minority.
    #[arg(long)]
    balance_ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    mode: ModeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MergeArg {
    Symmetric,
    Concat,
}

/// Verifier settings; unset flags take the library defaults.
#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    merge_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    embeddings_trainable: bool,
    #[arg(long, value_enum)]
    merge: Option<MergeArg>,
    #[arg(long)]
    shared_encoder: Option<bool>,
    #[arg(long)]
    early_stop_accuracy: Option<f64>,
    /// Minimum corpus count for a token to enter the vocabulary.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

impl ModelArgs {
    fn config(&self, table_dim: Option<usize>) -> VerifierConfig {
        let d = VerifierConfig::default();
        VerifierConfig {
            embedding_dim: self.embedding_dim.or(table_dim).unwrap_or(d.embedding_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            merge_hidden: self.merge_hidden.unwrap_or(d.merge_hidden),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed,
            embeddings_trainable: self.embeddings_trainable,
            merge: match self.merge {
                Some(MergeArg::Concat) => MergeMode::Concat,
                Some(MergeArg::Symmetric) => MergeMode::Symmetric,
                None => d.merge,
            },
            shared_encoder: self.shared_encoder.unwrap_or(d.shared_encoder),
            early_stop_accuracy: self.early_stop_accuracy.or(d.early_stop_accuracy),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Training pairs; generated from the whole corpus and balanced when absent.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Pairs used to calibrate the threshold; 0.5 is used when absent.
    #[arg(long)]
    validation_pairs: Option<PathBuf>,
    /// GloVe or word2vec text embeddings; random vectors when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    balance_ratio: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Pairs to evaluate.
    #[arg(long)]
    pairs: PathBuf,
    /// Directory written by `train`.
    #[arg(long, required_unless_present = "compare_embeddings", conflicts_with = "compare_embeddings")]
    model_dir: Option<PathBuf>,
    /// Train and evaluate the same experiment under two embedding files.
    #[arg(long, num_args = 2, value_names = ["A", "B"], requires = "train_pairs")]
    compare_embeddings: Option<Vec<PathBuf>>,
    /// Training pairs for --compare-embeddings.
    #[arg(long)]
    train_pairs: Option<PathBuf>,
    /// Calibration pairs for --compare-embeddings.
    #[arg(long)]
    validation_pairs: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Override the stored threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated thresholds to sweep.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    /// CSV output for --sweep.
    #[arg(long, requires = "sweep")]
    sweep_csv: Option<PathBuf>,
    /// JSON report output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyArg {
    Quarantine,
    AlwaysUpdate,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Quarantine)]
    policy: PolicyArg,
    /// Detection log (JSONL); the summary goes to <out>.summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Label)]
    mode: ModeArg,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MergeArg::Symmetric)]
    merge: MergeArg,
    #[arg(long, default_value_t = true)]
    shared_encoder: bool,
    /// Also write the report here (plus a manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    /// Bad input or usage; exit 1.
    Invalid(String),
    /// Failure of the tool itself; exit 2.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn invalid<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Invalid(format!("{context}: {e}"))
}

fn internal<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Internal(format!("{context}: {e}"))
}

type Result<T> = std::result::Result<T, CliError>;

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(internal(path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Written next to every run's outputs. Holds no timestamps, so identical
/// runs produce identical manifests.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    jobs: usize,
    args: serde_json::Value,
    resolved: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

struct Run {
    subcommand: &'static str,
    jobs: usize,
    args: serde_json::Value,
    resolved: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new<A: Serialize>(subcommand: &'static str, jobs: usize, args: &A) -> Self {
        Run {
            subcommand,
            jobs,
            args: serde_json::to_value(args).expect("arguments serialize"),
            resolved: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn finish(self, manifest_path: &Path) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
                .collect()
        };
        let manifest = RunManifest {
            tool: "authorguard",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            jobs: self.jobs,
            args: self.args,
            resolved: self.resolved,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
        };
        write_json(manifest_path, &manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(internal("serializing JSON"))?;
    text.push('\n');
    fs::write(path, text).map_err(internal(path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(invalid(path.display()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(invalid(path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(internal(parent.display()))?;
    }
    File::create(path).map(BufWriter::new).map_err(internal(path.display()))
}

fn write_pair_file(path: &Path, pairs: &[PairExample]) -> Result<()> {
    let mut w = create(path)?;
    write_pairs(&mut w, pairs).map_err(internal(path.display()))?;
    w.flush().map_err(internal(path.display()))
}

fn read_corpus_file(path: &Path, mode: LoadMode) -> Result<Corpus> {
    load_corpus(path, mode).map_err(invalid(path.display()))
}

fn read_pair_file(path: &Path, corpus: &Corpus) -> Result<Vec<PairExample>> {
    let pairs = load_pairs(path).map_err(invalid(path.display()))?;
    authorguard::corpus::check_pairs(corpus, &pairs).map_err(invalid(path.display()))?;
    Ok(pairs)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_accounts: a.n_accounts.unwrap_or(d.n_accounts),
        posts_per_account: a.posts_per_account.unwrap_or(d.posts_per_account),
        fraction_compromised: a.fraction_compromised.unwrap_or(d.fraction_compromised),
        style_overlap: a.style_overlap.unwrap_or(d.style_overlap),
        compromise_point_range: (
            a.compromise_lo.unwrap_or(d.compromise_point_range.0),
            a.compromise_hi.unwrap_or(d.compromise_point_range.1),
        ),
        slice_size: a.slice_size.unwrap_or(d.slice_size),
        pool_size: a.pool_size.unwrap_or(d.pool_size),
        zipf_exponent_range: (
            a.zipf_lo.unwrap_or(d.zipf_exponent_range.0),
            a.zipf_hi.unwrap_or(d.zipf_exponent_range.1),
        ),
        mean_post_length_range: (
            a.mean_length_lo.unwrap_or(d.mean_post_length_range.0),
            a.mean_length_hi.unwrap_or(d.mean_post_length_range.1),
        ),
        inherit_style_params: a.inherit_style_params,
    };
    let out = generate_corpus(&spec, a.seed).map_err(invalid("synth"))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.embeddings_out {
        if a.embeddings_dim == 0 {
            return Err(CliError::Invalid("--embeddings-dim must be positive".into()));
        }
        let tokenizer = Tokenizer::default();
        let (vocab, table) = cooccurrence_embeddings(&out.corpus, &tokenizer, a.embeddings_dim, a.embeddings_smoothing, a.seed)
            .map_err(invalid("embeddings"))?;
        let mut w = create(path)?;
        write_embeddings(&mut w, &vocab, &table).map_err(internal(path.display()))?;
        w.flush().map_err(internal(path.display()))?;
        outputs.push(path.clone());
    }
    let mut w = create(&a.out)?;
    out.corpus.write_jsonl(&mut w).map_err(internal(a.out.display()))?;
    w.flush().map_err(internal(a.out.display()))?;
    let truth = sidecar(&a.out, ".truth.json");
    write_json(&truth, &out.manifest)?;

    let mut run = Run::new("synth", cli.jobs, a);
    run.resolved = serde_json::json!({ "spec": spec, "seed": a.seed });
    outputs.push(truth);
    run.outputs = outputs;
    run.finish(&sidecar(&a.out, ".manifest.json"))?;
    log::info!("wrote {} posts for {} accounts", out.corpus.total_posts(), out.corpus.n());
    Ok(())
}

fn cmd_pairs(cli: &Cli, a: &PairsArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.input, a.mode.into())?;
    let (train_side, test_side) = match a.train_fraction {
        Some(f) => split_accounts(&corpus, f, a.seed).map_err(invalid("split"))?,
        None => (corpus.clone(), corpus.clone()),
    };
    let mut train_pairs = generate_train_pairs(&train_side);
    if let Some(ratio) = a.balance_ratio {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(CliError::Invalid("--balance-ratio must be >= 1".into()));
        }
        let balanced = balance_pairs(&train_pairs, ratio, a.seed);
        if balanced.single_label {
            log::warn!("training pairs hold a single label; nothing to balance");
        }
        train_pairs = balanced.pairs;
    }
    let test_pairs = generate_test_pairs(&test_side, a.healthy_cap, a.seed);
    write_pair_file(&a.train_out, &train_pairs)?;
    write_pair_file(&a.test_out, &test_pairs)?;
    let mut outputs = vec![a.train_out.clone(), a.test_out.clone()];
    if let Some(v) = &a.validation_out {
        let val = generate_test_pairs(&train_side, a.healthy_cap, seed::derive(a.seed, 1));
        write_pair_file(v, &val)?;
        outputs.push(v.clone());
    }
    let mut run = Run::new("pairs", cli.jobs, a);
    run.resolved = serde_json::json!({
        "train_accounts": train_side.accounts.iter().map(|x| &x.account_id).collect::<Vec<_>>(),
        "test_accounts": test_side.accounts.iter().map(|x| &x.account_id).collect::<Vec<_>>(),
        "train_pairs": train_pairs.len(),
        "test_pairs": test_pairs.len(),
    });
    run.inputs = vec![a.input.clone()];
    run.outputs = outputs;
    run.finish(&sidecar(&a.train_out, ".manifest.json"))?;
    log::info!("{} training pairs, {} test pairs", train_pairs.len(), test_pairs.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ThresholdFile {
    tau: f64,
    f_measure: Option<f64>,
    degenerate: bool,
    /// False when no validation pairs were given and 0.5 was kept.
    calibrated: bool,
}

const MODEL_FILE: &str = "model.avf";
const VOCAB_FILE: &str = "vocab.txt";
const THRESHOLD_FILE: &str = "threshold.json";

fn embedding_table(vocab: &Vocabulary, path: Option<&Path>, m: &ModelArgs) -> Result<EmbeddingTable> {
    let mut table = match path {
        Some(p) => load_embedding_file(p, vocab, m.seed).map_err(invalid(p.display()))?,
        None => {
            let d = m.embedding_dim.unwrap_or(VerifierConfig::default().embedding_dim);
            EmbeddingTable::random(vocab, d, seed::derive(m.seed, 0xE7B), EmbeddingSource::RandomInit)
        }
    };
    table.trainable = m.embeddings_trainable;
    Ok(table)
}

struct Fitted {
    verifier: Verifier,
    report: TrainReport,
    threshold: ThresholdFile,
}

fn fit(
    corpus: &Corpus,
    table: EmbeddingTable,
    vocab: &Vocabulary,
    config: VerifierConfig,
    train_pairs: &[PairExample],
    validation_pairs: &[PairExample],
) -> Result<Fitted> {
    let model = VerifierModel::init(config, Tokenizer::default(), vocab, table).map_err(invalid("model"))?;
    let verifier = Verifier::new(model, vocab.clone()).map_err(internal("model"))?;
    let encoded = verifier.encode_pairs(corpus, train_pairs).map_err(invalid("training pairs"))?;
    let (model, report) = train(verifier.model, &encoded, &[]).map_err(|e| match e {
        authorguard::verifier::VerifierError::SingleLabel(_) => CliError::Invalid(format!("train: {e}")),
        other => CliError::Internal(format!("train: {other}")),
    })?;
    let verifier = Verifier::new(model, vocab.clone()).map_err(internal("model"))?;
    let threshold = if validation_pairs.is_empty() {
        ThresholdFile {
            tau: 0.5,
            f_measure: None,
            degenerate: false,
            calibrated: false,
        }
    } else {
        let scores = verifier.score_pairs(corpus, validation_pairs).map_err(invalid("validation pairs"))?;
        let labels: Vec<PairLabel> = validation_pairs.iter().map(|p| p.label).collect();
        let c = calibrate_threshold(&scores, &labels).map_err(invalid("calibration"))?;
        ThresholdFile {
            tau: c.tau,
            f_measure: c.f_measure,
            degenerate: c.degenerate,
            calibrated: true,
        }
    };
    Ok(Fitted {
        verifier,
        report,
        threshold,
    })
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.corpus, LoadMode::Label)?;
    let m = &a.model;
    let tokenizer = Tokenizer::default();
    let vocab = build_vocab(&corpus, &tokenizer, m.min_count).map_err(invalid("vocabulary"))?;
    let table = embedding_table(&vocab, a.embeddings.as_deref(), m)?;
    let config = m.config(a.embeddings.as_ref().map(|_| table.dim));
    let mut inputs = vec![a.corpus.clone()];
    let train_pairs = match &a.pairs {
        Some(p) => {
            inputs.push(p.clone());
            read_pair_file(p, &corpus)?
        }
        None => balance_pairs(&generate_train_pairs(&corpus), a.balance_ratio, m.seed).pairs,
    };
    let validation = match &a.validation_pairs {
        Some(p) => {
            inputs.push(p.clone());
            read_pair_file(p, &corpus)?
        }
        None => Vec::new(),
    };
    inputs.extend(a.embeddings.clone());

    let fitted = fit(&corpus, table, &vocab, config.clone(), &train_pairs, &validation)?;
    fs::create_dir_all(&a.out_dir).map_err(internal(a.out_dir.display()))?;
    let model_path = a.out_dir.join(MODEL_FILE);
    let vocab_path = a.out_dir.join(VOCAB_FILE);
    let threshold_path = a.out_dir.join(THRESHOLD_FILE);
    save_checkpoint(&fitted.verifier.model, &model_path).map_err(internal("checkpoint"))?;
    let mut w = create(&vocab_path)?;
    vocab.write_text(&mut w).map_err(internal(vocab_path.display()))?;
    w.flush().map_err(internal(vocab_path.display()))?;
    write_json(&threshold_path, &fitted.threshold)?;
    write_json(&a.out_dir.join("train_report.json"), &fitted.report)?;

    let mut run = Run::new("train", cli.jobs, a);
    run.resolved = serde_json::json!({
        "config": config,
        "tokenizer": tokenizer,
        "train_pairs": train_pairs.len(),
        "validation_pairs": validation.len(),
    });
    run.inputs = inputs;
    run.outputs = vec![model_path, vocab_path, threshold_path];
    run.finish(&a.out_dir.join("manifest.json"))?;
    if let Some(loss) = fitted.report.final_loss() {
        log::info!("final training loss {loss:.6}, tau {}", fitted.threshold.tau);
    }
    Ok(())
}

fn load_model_dir(dir: &Path) -> Result<(Verifier, ThresholdFile, Vec<PathBuf>)> {
    let vocab_path = dir.join(VOCAB_FILE);
    let model_path = dir.join(MODEL_FILE);
    let threshold_path = dir.join(THRESHOLD_FILE);
    let file = File::open(&vocab_path).map_err(invalid(vocab_path.display()))?;
    let vocab = Vocabulary::read_text(BufReader::new(file)).map_err(invalid(vocab_path.display()))?;
    let model = load_checkpoint_for_vocab(&model_path, &vocab).map_err(invalid(model_path.display()))?;
    let threshold: ThresholdFile = read_json(&threshold_path)?;
    let verifier = Verifier::new(model, vocab).map_err(invalid(dir.display()))?;
    Ok((verifier, threshold, vec![model_path, vocab_path, threshold_path]))
}

fn check_tau(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(CliError::Invalid(format!("--tau must lie in (0, 1), got {tau}")))
    }
}

#[derive(Serialize)]
struct EvalReport {
    tau: f64,
    pairs: usize,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct ComparisonEntry {
    embeddings: String,
    dim: usize,
    coverage: f64,
    tau: f64,
    final_loss: Option<f64>,
    metrics: MetricsReport,
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.corpus, LoadMode::Label)?;
    let pairs = read_pair_file(&a.pairs, &corpus)?;
    let mut run = Run::new("eval", cli.jobs, a);
    run.inputs = vec![a.corpus.clone(), a.pairs.clone()];
    let mut outputs = vec![a.out.clone()];

    if let Some(files) = &a.compare_embeddings {
        let train_path = a.train_pairs.as_ref().expect("clap requires --train-pairs");
        let train_pairs = read_pair_file(train_path, &corpus)?;
        let validation = match &a.validation_pairs {
            Some(p) => read_pair_file(p, &corpus)?,
            None => Vec::new(),
        };
        let vocab = build_vocab(&corpus, &Tokenizer::default(), a.model.min_count).map_err(invalid("vocabulary"))?;
        let mut entries = Vec::new();
        for file in files {
            let table = embedding_table(&vocab, Some(file), &a.model)?;
            let coverage = embedding_coverage(file, &vocab)?;
            let config = a.model.config(Some(table.dim));
            let dim = table.dim;
            let fitted = fit(&corpus, table, &vocab, config, &train_pairs, &validation)?;
            let tau = match a.tau {
                Some(t) => check_tau(t)?,
                None => fitted.threshold.tau,
            };
            let metrics = evaluate_pairs(&fitted.verifier, &corpus, tau, &pairs).map_err(invalid("eval"))?;
            entries.push(ComparisonEntry {
                embeddings: file.display().to_string(),
                dim,
                coverage,
                tau,
                final_loss: fitted.report.final_loss(),
                metrics,
            });
        }
        print!("{}", comparison_table(&entries));
        write_json(&a.out, &entries)?;
        run.inputs.push(train_path.clone());
        run.inputs.extend(a.validation_pairs.clone());
        run.inputs.extend(files.iter().cloned());
        run.resolved = serde_json::json!({ "config": a.model.config(None) });
    } else {
        let dir = a.model_dir.as_ref().expect("clap requires --model-dir");
        let (verifier, threshold, model_files) = load_model_dir(dir)?;
        let tau = match a.tau {
            Some(t) => check_tau(t)?,
            None => threshold.tau,
        };
        let metrics = evaluate_pairs(&verifier, &corpus, tau, &pairs).map_err(invalid("eval"))?;
        println!("tau {tau} over {} pairs", pairs.len());
        println!("{metrics}");
        write_json(
            &a.out,
            &EvalReport {
                tau,
                pairs: pairs.len(),
                metrics,
            },
        )?;
        if !a.sweep.is_empty() {
            let rows = sweep_thresholds(&verifier, &corpus, &pairs, &a.sweep).map_err(invalid("sweep"))?;
            if let Some(csv) = &a.sweep_csv {
                let mut w = create(csv)?;
                write_sweep_csv(&mut w, &rows).map_err(internal(csv.display()))?;
                w.flush().map_err(internal(csv.display()))?;
                outputs.push(csv.clone());
            } else {
                write_sweep_csv(std::io::stdout().lock(), &rows).map_err(internal("stdout"))?;
            }
        }
        run.inputs.extend(model_files);
        run.resolved = serde_json::json!({ "tau": tau });
    }
    run.outputs = outputs;
    run.finish(&sidecar(&a.out, ".manifest.json"))
}

/// Share of non-reserved vocabulary tokens that have a vector in `path`.
fn embedding_coverage(path: &Path, vocab: &Vocabulary) -> Result<f64> {
    let text = fs::read_to_string(path).map_err(invalid(path.display()))?;
    let listed: std::collections::HashSet<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    let tokens = &vocab.tokens()[2..];
    let hit = tokens.iter().filter(|t| listed.contains(t.as_str())).count();
    Ok(hit as f64 / tokens.len().max(1) as f64)
}

fn comparison_table(entries: &[ComparisonEntry]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("embeddings".into(), entries.iter().map(|e| file_label(&e.embeddings)).collect()),
        ("dim".into(), entries.iter().map(|e| e.dim.to_string()).collect()),
        ("coverage".into(), entries.iter().map(|e| format!("{:.4}", e.coverage)).collect()),
        ("tau".into(), entries.iter().map(|e| format!("{:.2}", e.tau)).collect()),
    ];
    for (name, get) in [
        ("accuracy", (|m: &MetricsReport| m.accuracy) as fn(&MetricsReport) -> authorguard::Metric),
        ("precision", |m| m.precision),
        ("recall", |m| m.recall),
        ("f_measure", |m| m.f_measure),
    ] {
        rows.push((name.into(), entries.iter().map(|e| get(&e.metrics).to_string()).collect()));
    }
    let width = rows
        .iter()
        .flat_map(|(_, v)| v.iter().map(String::len))
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    for (name, vals) in rows {
        out.push_str(&format!("{name:<12}"));
        for v in vals {
            out.push_str(&format!(" {v:>width$}"));
        }
        out.push('\n');
    }
    out
}

fn file_label(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map_or_else(|| path.to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_detect(cli: &Cli, a: &DetectArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.corpus, a.mode.into())?;
    let (verifier, threshold, model_files) = load_model_dir(&a.model_dir)?;
    let tau = check_tau(a.tau.unwrap_or(threshold.tau))?;
    let policy = match a.policy {
        PolicyArg::Quarantine => BaselinePolicy::Quarantine,
        PolicyArg::AlwaysUpdate => BaselinePolicy::AlwaysUpdate,
    };
    let replays = replay_corpus(&verifier, tau, &corpus, policy).map_err(invalid("detect"))?;
    let mut w = create(&a.out)?;
    for r in &replays {
        write_detection_log(&mut w, &r.events).map_err(internal(a.out.display()))?;
    }
    w.flush().map_err(internal(a.out.display()))?;
    let summary = summarize(&replays);
    let per_account: Vec<_> = replays
        .iter()
        .map(|r| serde_json::json!({ "account_id": r.account_id, "delay": r.delay, "false_flags": r.false_flags }))
        .collect();
    let summary_path = sidecar(&a.out, ".summary.json");
    write_json(&summary_path, &serde_json::json!({ "tau": tau, "summary": summary, "accounts": per_account }))?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(internal("summary"))?);

    let mut run = Run::new("detect", cli.jobs, a);
    run.resolved = serde_json::json!({ "tau": tau, "policy": a.policy });
    run.inputs = vec![a.corpus.clone()];
    run.inputs.extend(model_files);
    run.outputs = vec![a.out.clone(), summary_path];
    run.finish(&sidecar(&a.out, ".manifest.json"))
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let base = VerifierConfig {
        merge: match a.merge {
            MergeArg::Symmetric => MergeMode::Symmetric,
            MergeArg::Concat => MergeMode::Concat,
        },
        shared_encoder: a.shared_encoder,
        ..VerifierConfig::default()
    };
    let report = toy_gradient_check(a.seed, &base).map_err(internal("gradcheck"))?;
    let summary = serde_json::json!({
        "checked": report.checked,
        "max_rel_error": report.max_rel_error,
        "mean_rel_error": report.mean_rel_error,
        "failures": report.failures.len(),
        "passed": report.passed,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(internal("report"))?);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        let mut run = Run::new("gradcheck", cli.jobs, a);
        run.outputs = vec![out.clone()];
        run.finish(&sidecar(out, ".manifest.json"))?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "gradient check failed: max relative error {:.3e}",
            report.max_rel_error
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Pairs(a) => cmd_pairs(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Detect(a) => cmd_detect(&cli, a),
        Command::Gradcheck(a) => cmd_gradcheck(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Invalid(_) => 1,
                CliError::Internal(_) => 2,
            })
        }
    }
}
