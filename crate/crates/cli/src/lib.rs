//! `mvae` command-line driver: train, evaluate, ablate, synth-data,
//! gradcheck.
//!
//! Every command is reproducible from its flags, seed and input bytes.
//! Checkpoints and CSVs contain no wall-clock data; the timestamp of a run
//! lives only in its manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use mvae_core::dataio::{
    append_metrics, load_gzsl_dataset, parse_config, write_gzsl_dataset, write_metrics, MetricsRow,
    ATTRIBUTES_FILE, FEATURES_FILE, LABELS_FILE, NOVEL_FILE, SEEN_FILE, TEST_NOVEL_INDEX_FILE,
    TEST_SEEN_INDEX_FILE, TRAIN_INDEX_FILE,
};
use mvae_core::gzsl::{fit_and_evaluate, run_ablation};
use mvae_core::mvae::checkpoint::{load_model, save_model};
use mvae_core::mvae::{check_model_gradients, dataset_loss, train_model};
use mvae_core::dataio::generate_synthetic;
use mvae_core::{Error, ModelConfig, MvaeModel, SyntheticSpec, Variant};
use serde_json::json;
use sha2::{Digest, Sha256};

pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

pub const CHECKPOINT_FILE: &str = "checkpoint.mvm";
pub const CLASSIFIER_FILE: &str = "classifier.mvm";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_MANIFEST_FILE: &str = "evaluate_manifest.json";

/// Dataset files hashed into the fingerprint, in hashing order.
const DATASET_FILES: [&str; 8] = [
    FEATURES_FILE,
    LABELS_FILE,
    ATTRIBUTES_FILE,
    SEEN_FILE,
    NOVEL_FILE,
    TRAIN_INDEX_FILE,
    TEST_SEEN_INDEX_FILE,
    TEST_NOVEL_INDEX_FILE,
];

#[derive(Debug, Parser)]
#[command(name = "mvae", version, about = "Multimodal VAE for generalized zero-shot learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, per-epoch metrics and manifest.
    Train(RunArgs),
    /// Fit the GZSL classifier on a trained model and append S, N, H.
    Evaluate(EvalArgs),
    /// Train and evaluate mvae, baseline1 and baseline2 with one seed.
    Ablate(RunArgs),
    /// Write a synthetic dataset directory.
    SynthData(SynthArgs),
    /// Check analytic gradients of the full loss against finite differences.
    Gradcheck(GradArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` config file; unset keys take the published defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Directory receiving the classifier and the appended metrics row.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed stored in the checkpoint.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow replacing an existing classifier file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub seen: usize,
    #[arg(long, default_value_t = 3)]
    pub novel: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub d_img: usize,
    #[arg(long, default_value_t = 16)]
    pub d_attr: usize,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    #[arg(long, default_value_t = 6)]
    pub d_img: usize,
    #[arg(long, default_value_t = 4)]
    pub d_attr: usize,
    #[arg(long, default_value_t = 8)]
    pub embed_hidden: usize,
    #[arg(long, default_value_t = 5)]
    pub d_attr_embed: usize,
    #[arg(long, default_value_t = 10)]
    pub vae_hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub latent: usize,
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Check one variant only (default: all three).
    #[arg(long)]
    pub variant: Option<Variant>,
}

/// A failed command: message for stderr and the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } | Error::Domain(_) => EXIT_USAGE,
            ref e if e.is_data_error() => EXIT_DATA,
            _ => EXIT_VERIFICATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::SynthData(a) => cmd_synth_data(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<ModelConfig> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => ModelConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `out`, refusing a non-empty directory unless `force`.
fn prepare_out_dir(out: &Path, force: bool) -> CliResult<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(CliError::usage(format!("{} exists and is not a directory", out.display())));
        }
        let non_empty = fs::read_dir(out)
            .map_err(|e| Error::io(out, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::usage(format!(
                "output directory {} is not empty; pass --force to write into it",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(())
}

/// SHA-256 over the name and bytes of every dataset file present.
pub fn dataset_fingerprint(dir: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    for name in DATASET_FILES {
        let p = dir.join(name);
        if p.is_file() {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Deterministic run identifier: seed plus the dataset fingerprint prefix.
pub fn run_id(seed: u64, fingerprint: &str) -> String {
    format!("s{seed}-{}", &fingerprint[..8.min(fingerprint.len())])
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_manifest(
    path: &Path,
    command: &str,
    run_id: &str,
    cfg: &ModelConfig,
    data_dir: &Path,
    fingerprint: &str,
    artifacts: serde_json::Value,
) -> CliResult<()> {
    let config: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let manifest = json!({
        "command": command,
        "run_id": run_id,
        "timestamp_unix": unix_time(),
        "seed": cfg.seed,
        "config": config,
        "config_text": cfg.to_config_string(),
        "data_dir": data_dir.display().to_string(),
        "dataset_fingerprint_sha256": fingerprint,
        "artifacts": artifacts,
        "log": "stderr",
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn cmd_train(a: &RunArgs) -> CliResult<()> {
    let mut cfg = resolve_config(a.config.as_deref(), a.seed)?;
    let ds = load_gzsl_dataset(&a.data_dir)?;
    cfg.d_img = ds.d_img();
    let fingerprint = dataset_fingerprint(&a.data_dir)?;
    let id = run_id(cfg.seed, &fingerprint);
    prepare_out_dir(&a.out, a.force)?;
    info!("run {id}: training {} for {} epochs", cfg.variant, cfg.epochs);

    let mut rows = Vec::with_capacity(cfg.epochs);
    let (model, _) = train_model(&cfg, &ds, |epoch, c| {
        info!(
            "epoch {epoch}: total={:.6} recon={:.6} kl={:.6} wass={:.6}",
            c.total, c.recon, c.kl, c.wass
        );
        rows.push(MetricsRow {
            run_id: id.clone(),
            variant: cfg.variant.to_string(),
            epoch,
            loss_total: c.total,
            loss_recon: c.recon,
            loss_kl: c.kl,
            loss_wass: c.wass,
            seen_acc: None,
            novel_acc: None,
            harmonic_mean: None,
        });
    })?;
    save_model(a.out.join(CHECKPOINT_FILE), &model)?;
    write_metrics(a.out.join(METRICS_FILE), &rows)?;
    write_manifest(
        &a.out.join(MANIFEST_FILE),
        "train",
        &id,
        model.config(),
        &a.data_dir,
        &fingerprint,
        json!({ "checkpoint": CHECKPOINT_FILE, "metrics": METRICS_FILE }),
    )?;
    info!("wrote {}", a.out.display());
    Ok(())
}

pub fn cmd_evaluate(a: &EvalArgs) -> CliResult<()> {
    let mut model = load_model(&a.checkpoint)?;
    if let Some(s) = a.seed {
        let cfg = ModelConfig {
            seed: s,
            ..model.config().clone()
        };
        let blocks = model.params().into_iter().cloned().collect();
        model = MvaeModel::from_blocks(&cfg, blocks)?;
    }
    let ds = load_gzsl_dataset(&a.data_dir)?;
    if ds.d_img() != model.d_img() || ds.d_attr() != model.d_attr() {
        return Err(Error::Dimension(format!(
            "checkpoint {} expects d_img={} d_attr={}, dataset {} has d_img={} d_attr={}",
            a.checkpoint.display(),
            model.d_img(),
            model.d_attr(),
            a.data_dir.display(),
            ds.d_img(),
            ds.d_attr()
        ))
        .into());
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let clf_path = a.out.join(CLASSIFIER_FILE);
    if clf_path.exists() && !a.force {
        return Err(CliError::usage(format!(
            "{} exists; pass --force to replace it",
            clf_path.display()
        )));
    }
    let fingerprint = dataset_fingerprint(&a.data_dir)?;
    let cfg = model.config().clone();
    let id = run_id(cfg.seed, &fingerprint);
    info!("run {id}: evaluating {} checkpoint", cfg.variant);

    let (clf, mut m) = fit_and_evaluate(&model, &ds)?;
    m.run_id = id.clone();
    m.epoch = cfg.epochs;
    m.losses = dataset_loss(&model, &ds)?;
    clf.save(&clf_path)?;
    append_metrics(a.out.join(METRICS_FILE), &[m.to_row()])?;
    write_manifest(
        &a.out.join(EVAL_MANIFEST_FILE),
        "evaluate",
        &id,
        &cfg,
        &a.data_dir,
        &fingerprint,
        json!({
            "checkpoint": a.checkpoint.display().to_string(),
            "classifier": CLASSIFIER_FILE,
            "metrics": METRICS_FILE,
        }),
    )?;
    println!(
        "variant={} S={:.6} N={:.6} H={:.6}",
        m.variant, m.seen_acc, m.novel_acc, m.harmonic
    );
    Ok(())
}

pub fn cmd_ablate(a: &RunArgs) -> CliResult<()> {
    let mut cfg = resolve_config(a.config.as_deref(), a.seed)?;
    let ds = load_gzsl_dataset(&a.data_dir)?;
    cfg.d_img = ds.d_img();
    let fingerprint = dataset_fingerprint(&a.data_dir)?;
    let id = run_id(cfg.seed, &fingerprint);
    prepare_out_dir(&a.out, a.force)?;
    info!("run {id}: ablation over {} epochs", cfg.epochs);
    let results = run_ablation(&cfg, &ds, &id, a.out.join(METRICS_FILE))?;
    for m in &results {
        println!(
            "variant={} S={:.6} N={:.6} H={:.6} loss_wass={:.6}",
            m.variant, m.seen_acc, m.novel_acc, m.harmonic, m.losses.wass
        );
    }
    write_manifest(
        &a.out.join(MANIFEST_FILE),
        "ablate",
        &id,
        &cfg,
        &a.data_dir,
        &fingerprint,
        json!({ "metrics": METRICS_FILE }),
    )?;
    Ok(())
}

pub fn cmd_synth_data(a: &SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        seen: a.seen,
        novel: a.novel,
        per_class: a.per_class,
        d_img: a.d_img,
        d_attr: a.d_attr,
        spread: a.spread,
        seed: a.seed,
    };
    let ds = generate_synthetic(&spec)?;
    prepare_out_dir(&a.out, a.force)?;
    write_gzsl_dataset(&a.out, &ds)?;
    info!(
        "wrote {} samples ({} seen, {} novel classes) to {}",
        ds.labels().len(),
        a.seen,
        a.novel,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_gradcheck(a: &GradArgs) -> CliResult<()> {
    let variants = match a.variant {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let mut all_passed = true;
    for v in variants {
        let cfg = ModelConfig {
            d_img: a.d_img,
            embed_hidden: a.embed_hidden,
            d_attr_embed: a.d_attr_embed,
            vae_hidden: a.vae_hidden,
            latent: a.latent,
            batch: a.batch,
            variant: v,
            seed: a.seed,
            ..ModelConfig::default()
        };
        cfg.validate()?;
        let report = check_model_gradients(&cfg, a.d_attr, a.classes.max(1), a.batch, vec![], a.tolerance)?;
        println!("[{v}]\n{report}");
        all_passed &= report.passed();
    }
    if all_passed {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_VERIFICATION,
            message: "gradient check failed".into(),
        })
    }
}
