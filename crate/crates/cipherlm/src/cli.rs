//! `cipherlm` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Passkeys are only
//! read from the environment variable named by `--passkey-env`.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cipherlm_core::adapt::{adapt_lm, replay_randomness, Permutation};
use cipherlm_core::analysis::{
    distance_audit, max_drift, nn_recovery_accuracy, ranked_list_overlap, Alignment, AuditRow,
    RecoverabilityReport,
};
use cipherlm_core::cipher::{encrypt_vocab, DEFAULT_DIGEST_BYTES};
use cipherlm_core::tokenize::{encrypt_stream, wordpiece_tokenize};
use cipherlm_core::trainer::{evaluate, featurize_all, train_head, Pipeline, TrainConfig};
use cipherlm_core::vocab::DEFAULT_SPECIALS;
use cipherlm_core::{EmbeddingMatrix, KeyMaterial};
use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::io;
use crate::service::{self, Model};

/// Must agree with `cipherlm_core::adapt::FORMAT_VERSION`.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (bundle format 1)");

#[derive(Debug, Parser)]
#[command(name = "cipherlm", version = VERSION, about = "Passkey-adapted tokenizers and embeddings for encrypted inference")]
pub struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encrypt, transform and shuffle a vocabulary/embedding pair into a bundle.
    Adapt(AdaptArgs),
    /// Tokenize and encrypt text, one cipher line per input line.
    Encrypt(EncryptArgs),
    /// Train a classifier head on plaintext or encrypted features.
    Train(TrainArgs),
    /// Serve encrypted inference over HTTP.
    Serve(ServeArgs),
    /// Encrypt text locally and query a server.
    Infer(InferArgs),
    /// Measure token recoverability between original and adapted embeddings.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct KeyArgs {
    /// Name of the environment variable holding the passkey.
    #[arg(long, value_name = "VAR")]
    pub passkey_env: String,
    #[arg(long, default_value_t = DEFAULT_DIGEST_BYTES)]
    pub digest_bytes: usize,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long, default_value_t = 3)]
    pub nglide: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncryptArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    /// Text to encrypt; read from standard input when omitted or "-".
    #[arg(long)]
    pub text: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Adapted bundle directory (encrypted pipeline; needs --vocab and --passkey-env).
    #[arg(long, conflicts_with = "plain", requires_all = ["vocab", "passkey_env"])]
    pub bundle: Option<PathBuf>,
    /// Plaintext pipeline as "<vocab>,<emb>".
    #[arg(long, value_name = "VOCAB,EMB", required_unless_present = "bundle")]
    pub plain: Option<String>,
    /// Plaintext vocabulary used by the client side of the encrypted pipeline.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "VAR")]
    pub passkey_env: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub server: String,
    #[arg(long)]
    pub vocab: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Original (pre-adaptation) CLM1 embedding matrix.
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output path of the JSON report.
    #[arg(long)]
    pub report: PathBuf,
    /// Write the sampled pair distances here (requires --passkey-env to undo the shuffle).
    #[arg(long)]
    pub distance_csv: Option<PathBuf>,
    /// Passkey variable; lets the distance audit undo the shuffle.
    #[arg(long, value_name = "VAR")]
    pub passkey_env: Option<String>,
    /// Score nearest-neighbor matches against the true shuffle instead of by index.
    #[arg(long, requires = "passkey_env")]
    pub permutation_known: bool,
    /// Original rows probed by the nearest-neighbor search (0 = all).
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub anchors: usize,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<cipherlm_core::Error> for Failure {
    fn from(e: cipherlm_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Adapt(a) => adapt(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Train(a) => train(a),
        Command::Serve(a) => serve(a),
        Command::Infer(a) => infer(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn passkey_from_env(var: &str) -> CliResult<Vec<u8>> {
    match std::env::var_os(var) {
        Some(v) if !v.is_empty() => Ok(v.into_encoded_bytes()),
        Some(_) => Err(Failure::Usage(format!(
            "environment variable {var} is empty"
        ))),
        None => Err(Failure::Usage(format!(
            "environment variable {var} is not set"
        ))),
    }
}

fn key_material(var: &str, digest_bytes: usize) -> CliResult<KeyMaterial> {
    let passkey = passkey_from_env(var)?;
    KeyMaterial::derive(&passkey, digest_bytes).map_err(|e| Failure::Usage(e.to_string()))
}

fn adapt(a: AdaptArgs) -> CliResult {
    let passkey = passkey_from_env(&a.key.passkey_env)?;
    let vocab = io::load_vocab(&a.vocab, &DEFAULT_SPECIALS)?;
    let emb = io::load_matrix(&a.emb)?;
    let bundle = adapt_lm(&vocab, &emb, &passkey, a.nglide, a.key.digest_bytes)?;
    io::write_bundle(&bundle, &a.out)?;
    log::info!(
        "adapted {} tokens x {} dims, nglide={}",
        vocab.len(),
        emb.cols(),
        a.nglide
    );
    Ok(())
}

fn encrypt(a: EncryptArgs) -> CliResult {
    let km = key_material(&a.key.passkey_env, a.key.digest_bytes)?;
    let vocab = io::load_vocab(&a.vocab, &DEFAULT_SPECIALS)?;
    let (_, map) = encrypt_vocab(&vocab, &km)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut emit = |line: &str| -> CliResult {
        let cs = encrypt_stream(&wordpiece_tokenize(line, &vocab, true), &map)?;
        writeln!(out, "{}", cs.to_line()).map_err(|e| Error::io("<stdout>", e))?;
        Ok(())
    };
    match a.text.as_deref() {
        Some(t) if t != "-" => {
            for line in t.lines() {
                emit(line)?;
            }
        }
        _ => {
            for line in std::io::stdin().lock().lines() {
                emit(&line.map_err(|e| Error::io("<stdin>", e))?)?;
            }
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let data = io::load_tsv(&a.data)?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        l2: a.l2,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (features, labels) = if let Some(dir) = &a.bundle {
        let (Some(vocab_path), Some(var)) = (&a.vocab, &a.passkey_env) else {
            return Err(Failure::Usage(
                "--bundle requires --vocab and --passkey-env".into(),
            ));
        };
        let bundle = io::load_bundle(dir)?;
        let km = key_material(var, bundle.manifest().digest_bytes)?;
        bundle.manifest().check_key(&km)?;
        let vocab = io::load_vocab(vocab_path, &DEFAULT_SPECIALS)?;
        let (_, cipher_map) = encrypt_vocab(&vocab, &km)?;
        featurize_all(
            &data,
            &Pipeline::Encrypted {
                vocab: &vocab,
                cipher_map: &cipher_map,
                bundle: &bundle,
                lowercase: true,
            },
        )?
    } else {
        let pair = a.plain.as_deref().unwrap_or_default();
        let (v, e) = pair
            .split_once(',')
            .ok_or_else(|| Failure::Usage("--plain expects <vocab>,<emb>".into()))?;
        let vocab = io::load_vocab(v, &DEFAULT_SPECIALS)?;
        let emb = io::load_matrix(e)?;
        if vocab.len() != emb.rows() {
            return Err(Failure::Runtime(
                cipherlm_core::Error::Consistency(format!(
                    "vocabulary has {} tokens but matrix has {} rows",
                    vocab.len(),
                    emb.rows()
                ))
                .into(),
            ));
        }
        featurize_all(
            &data,
            &Pipeline::Plain {
                vocab: &vocab,
                emb: &emb,
                lowercase: true,
            },
        )?
    };
    let head = train_head(&features, &labels, &cfg)?;
    let metrics = evaluate(&head, &features, &labels)?;
    io::save_head(&head, &a.out)?;
    println!(
        "trained on {} examples: accuracy {:.4}, objective {:.6}",
        labels.len(),
        metrics.accuracy,
        head.final_loss
    );
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let bundle = io::load_bundle(&a.bundle)?;
    let head = io::load_head(&a.head)?;
    let model = Arc::new(Model::new(bundle, head)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Startup(e.to_string()))?;
    rt.block_on(async {
        let listener = service::bind(&a.bind).await?;
        let local = listener
            .local_addr()
            .map_err(|e| Error::Startup(e.to_string()))?;
        eprintln!("listening on http://{local}");
        service::serve_with_shutdown(listener, model, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn infer(a: InferArgs) -> CliResult {
    let km = key_material(&a.key.passkey_env, a.key.digest_bytes)?;
    let vocab = io::load_vocab(&a.vocab, &DEFAULT_SPECIALS)?;
    let client = crate::client::Client::new(&a.server, vocab, &km)?;
    let resp = client.infer(&a.text).map_err(|e| match e {
        Error::Validation(m) => Failure::Usage(m),
        other => Failure::Runtime(other),
    })?;
    let line = serde_json::to_string(&resp).map_err(|e| Error::json("response", e))?;
    println!("{line}");
    Ok(())
}

/// Reorders shuffled bundle rows back to original vocabulary order.
fn unshuffle(emb: &EmbeddingMatrix, p: &Permutation) -> cipherlm_core::Result<EmbeddingMatrix> {
    let inv = p.inverse();
    let mut data = Vec::with_capacity(emb.as_slice().len());
    for old in 0..emb.rows() {
        data.extend_from_slice(emb.row(inv.map()[old]));
    }
    EmbeddingMatrix::new(emb.rows(), emb.cols(), data)
}

pub fn write_audit_csv(rows: &[AuditRow], path: &Path) -> crate::error::Result<()> {
    let mut out = String::from("i,j,d_orig,d_trans,drift\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.i, r.j, r.d_orig, r.d_trans, r.drift
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let orig = io::load_matrix(&a.orig)?;
    let bundle = io::load_bundle(&a.bundle)?;
    let permutation = match &a.passkey_env {
        Some(var) => {
            let km = key_material(var, bundle.manifest().digest_bytes)?;
            Some(replay_randomness(&km, bundle.manifest())?.1)
        }
        None => None,
    };
    if a.distance_csv.is_some() && permutation.is_none() {
        return Err(Failure::Usage(
            "--distance-csv needs --passkey-env to align rows".into(),
        ));
    }
    let alignment = match &permutation {
        Some(p) if a.permutation_known => Alignment::Known(p),
        _ => Alignment::ByIndex,
    };
    let samples = (a.samples > 0).then_some(a.samples);
    let nn = nn_recovery_accuracy(&orig, bundle.emb(), alignment, samples, a.seed)?;
    let overlap = ranked_list_overlap(&orig, bundle.emb(), a.k, a.anchors, a.seed)?;
    let drift = match &permutation {
        Some(p) => {
            let aligned = unshuffle(bundle.emb(), p)?;
            let rows = distance_audit(&orig, &aligned, a.pairs, a.seed)?;
            if let Some(path) = &a.distance_csv {
                write_audit_csv(&rows, path)?;
            }
            Some(max_drift(&rows))
        }
        None => None,
    };
    let report = RecoverabilityReport {
        nn_accuracy: nn,
        rank_overlap_at_k: overlap,
        k: a.k,
        sample_size: samples.unwrap_or(orig.rows()).min(orig.rows()),
        distance_drift_max: drift,
    };
    std::fs::write(&a.report, io::to_json_text(&report, "report")?)
        .map_err(|e| Error::io(&a.report, e))?;
    println!(
        "{}",
        serde_json::to_string(&report).map_err(|e| Error::json("report", e))?
    );
    Ok(())
}
