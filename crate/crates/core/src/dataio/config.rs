//! Run configuration and its `key = value` text form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::OptimizerKind;

/// Model family trained by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Single encoder–decoder over the concatenated embedding, full loss.
    Mvae,
    /// Same architecture, Wasserstein term disabled.
    Baseline1,
    /// Separate encoder–decoder pair per modality.
    Baseline2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mvae, Variant::Baseline1, Variant::Baseline2];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mvae => "mvae",
            Variant::Baseline1 => "baseline1",
            Variant::Baseline2 => "baseline2",
        }
    }
}

/// How the distance between image features and semantic embeddings is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WassersteinMode {
    /// W2 between the pooled 1-D distributions of all entries.
    Quantile1d,
    /// Closed-form W2 between per-dimension Gaussian fits; needs equal widths.
    GaussianDiag,
}

impl WassersteinMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WassersteinMode::Quantile1d => "quantile-1d",
            WassersteinMode::GaussianDiag => "gaussian-diag",
        }
    }
}

/// Feature space the downstream classifier works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierSpace {
    Reconstruction,
    Latent,
}

impl ClassifierSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierSpace::Reconstruction => "reconstruction",
            ClassifierSpace::Latent => "latent",
        }
    }
}

macro_rules! display_via_as_str {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    )*};
}
display_via_as_str!(Variant, WassersteinMode, ClassifierSpace);

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mvae" => Ok(Variant::Mvae),
            "baseline1" => Ok(Variant::Baseline1),
            "baseline2" => Ok(Variant::Baseline2),
            _ => Err(format!("expected mvae, baseline1 or baseline2, found {s:?}")),
        }
    }
}

impl FromStr for WassersteinMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quantile-1d" => Ok(WassersteinMode::Quantile1d),
            "gaussian-diag" => Ok(WassersteinMode::GaussianDiag),
            _ => Err(format!("expected quantile-1d or gaussian-diag, found {s:?}")),
        }
    }
}

impl FromStr for ClassifierSpace {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reconstruction" => Ok(ClassifierSpace::Reconstruction),
            "latent" => Ok(ClassifierSpace::Latent),
            _ => Err(format!("expected reconstruction or latent, found {s:?}")),
        }
    }
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("expected adam or sgd, found {s:?}")),
    }
}

fn optimizer_str(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Adam => "adam",
        OptimizerKind::Sgd => "sgd",
    }
}

/// Every dimension, weight and schedule setting of a run.
///
/// Defaults are the published architecture: 2048-d image features, a
/// 1450-unit embedding hidden layer, 1200-d semantic embedding, 1660 VAE
/// hidden units, a 64-d latent space, 100 epochs of batch 50.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_img: usize,
    pub embed_hidden: usize,
    pub d_attr_embed: usize,
    pub vae_hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub variant: Variant,
    pub wasserstein_mode: WassersteinMode,
    pub embed_final_relu: bool,
    /// Probability that a training sample has one modality block of the
    /// encoder input zeroed (image or semantic, equally likely). The
    /// reconstruction target stays the full combined embedding.
    pub modality_dropout: f64,
    pub classifier_space: ClassifierSpace,
    pub classifier_seen_unmasked: bool,
    pub n_syn_per_novel: usize,
    pub classifier_hidden1: usize,
    pub classifier_hidden2: usize,
    pub classifier_epochs: usize,
    pub classifier_lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_img: 2048,
            embed_hidden: 1450,
            d_attr_embed: 1200,
            vae_hidden: 1660,
            latent: 64,
            epochs: 100,
            batch: 50,
            alpha: 1.0,
            gamma: 1.0,
            beta: 1.0,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            variant: Variant::Mvae,
            wasserstein_mode: WassersteinMode::Quantile1d,
            embed_final_relu: true,
            modality_dropout: 0.0,
            classifier_space: ClassifierSpace::Reconstruction,
            classifier_seen_unmasked: false,
            n_syn_per_novel: 200,
            classifier_hidden1: 512,
            classifier_hidden2: 256,
            classifier_epochs: 30,
            classifier_lr: 1e-3,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Semantic embedding as wide as the image features, which the
    /// `gaussian-diag` distance requires.
    pub fn aligned(mut self) -> Self {
        self.d_attr_embed = self.d_img;
        self.wasserstein_mode = WassersteinMode::GaussianDiag;
        self
    }

    /// The desk-scale configuration used for the committed synthetic
    /// benchmark (64-d features, 16-d attributes, 13 classes).
    ///
    /// The synthetic image features are signed, so the embedding output is
    /// left linear, and modality dropout teaches the encoder to map `[x, 0]`
    /// and `[0, φ]` to the same region.
    pub fn synthetic_benchmark() -> Self {
        ModelConfig {
            d_img: 64,
            embed_hidden: 64,
            d_attr_embed: 32,
            vae_hidden: 128,
            latent: 16,
            beta: 0.01,
            embed_final_relu: false,
            modality_dropout: 0.5,
            n_syn_per_novel: 200,
            classifier_hidden1: 64,
            classifier_hidden2: 32,
            ..ModelConfig::default()
        }
    }

    pub fn combined_width(&self) -> usize {
        self.d_img + self.d_attr_embed
    }

    /// Wasserstein weight actually applied: Baseline I drops the term.
    pub fn effective_gamma(&self) -> f64 {
        match self.variant {
            Variant::Baseline1 => 0.0,
            _ => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_img", self.d_img),
            ("embed_hidden", self.embed_hidden),
            ("d_attr_embed", self.d_attr_embed),
            ("vae_hidden", self.vae_hidden),
            ("latent", self.latent),
            ("batch", self.batch),
            ("classifier_hidden1", self.classifier_hidden1),
            ("classifier_hidden2", self.classifier_hidden2),
        ];
        for (k, v) in dims {
            if v == 0 {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("{k} must be at least 1"),
                });
            }
        }
        for (k, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("{k} must be a finite non-negative weight, got {v}"),
                });
            }
        }
        for (k, v) in [("lr", self.lr), ("classifier_lr", self.classifier_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config {
                    line: 0,
                    msg: format!("{k} must be positive, got {v}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.modality_dropout) {
            return Err(Error::Config {
                line: 0,
                msg: format!("modality_dropout must lie in [0, 1], got {}", self.modality_dropout),
            });
        }
        Ok(())
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?} as a number"))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            v.parse().map_err(|_| format!("expected true or false, found {v:?}"))
        }
        match key {
            "d_img" => self.d_img = num(value)?,
            "embed_hidden" => self.embed_hidden = num(value)?,
            "d_attr_embed" => self.d_attr_embed = num(value)?,
            "vae_hidden" => self.vae_hidden = num(value)?,
            "latent" => self.latent = num(value)?,
            "epochs" => self.epochs = num(value)?,
            "batch" => self.batch = num(value)?,
            "alpha" => self.alpha = num(value)?,
            "gamma" => self.gamma = num(value)?,
            "beta" => self.beta = num(value)?,
            "lr" => self.lr = num(value)?,
            "optimizer" => self.optimizer = parse_optimizer(value)?,
            "variant" => self.variant = value.parse()?,
            "wasserstein_mode" => self.wasserstein_mode = value.parse()?,
            "embed_final_relu" => self.embed_final_relu = flag(value)?,
            "modality_dropout" => self.modality_dropout = num(value)?,
            "classifier_space" => self.classifier_space = value.parse()?,
            "classifier_seen_unmasked" => self.classifier_seen_unmasked = flag(value)?,
            "n_syn_per_novel" => self.n_syn_per_novel = num(value)?,
            "classifier_hidden1" => self.classifier_hidden1 = num(value)?,
            "classifier_hidden2" => self.classifier_hidden2 = num(value)?,
            "classifier_epochs" => self.classifier_epochs = num(value)?,
            "classifier_lr" => self.classifier_lr = num(value)?,
            "seed" => self.seed = num(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// All keys with their values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_img", self.d_img.to_string()),
            ("embed_hidden", self.embed_hidden.to_string()),
            ("d_attr_embed", self.d_attr_embed.to_string()),
            ("vae_hidden", self.vae_hidden.to_string()),
            ("latent", self.latent.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("alpha", self.alpha.to_string()),
            ("gamma", self.gamma.to_string()),
            ("beta", self.beta.to_string()),
            ("lr", self.lr.to_string()),
            ("optimizer", optimizer_str(self.optimizer).to_string()),
            ("variant", self.variant.to_string()),
            ("wasserstein_mode", self.wasserstein_mode.to_string()),
            ("embed_final_relu", self.embed_final_relu.to_string()),
            ("modality_dropout", self.modality_dropout.to_string()),
            ("classifier_space", self.classifier_space.to_string()),
            ("classifier_seen_unmasked", self.classifier_seen_unmasked.to_string()),
            ("n_syn_per_novel", self.n_syn_per_novel.to_string()),
            ("classifier_hidden1", self.classifier_hidden1.to_string()),
            ("classifier_hidden2", self.classifier_hidden2.to_string()),
            ("classifier_epochs", self.classifier_epochs.to_string()),
            ("classifier_lr", self.classifier_lr.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Fully materialized `key = value` text; parses back to `self`.
    pub fn to_config_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Parses `key = value` lines over the defaults. `#` starts a comment.
pub fn parse_config_str(text: &str) -> Result<ModelConfig> {
    parse_config_over(ModelConfig::default(), text)
}

/// Like [`parse_config_str`] but starting from `base` instead of the defaults.
pub fn parse_config_over(mut cfg: ModelConfig, text: &str) -> Result<ModelConfig> {
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            msg: format!("expected `key = value`, found {line:?}"),
        })?;
        cfg.set(key.trim(), value.trim())
            .map_err(|msg| Error::Config { line: line_no, msg })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
