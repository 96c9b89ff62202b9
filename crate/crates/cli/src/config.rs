//! Experiment configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use fifthspace::score::beats;
use fifthspace::vae::{assign_loss, LossKind, TrainConfig};
use fifthspace::{Beats, EncodingId};
use serde::Deserialize;

use crate::CliError;

/// Everything one experiment run needs. `seed` drives the split, the
/// parameter init, and the training loop, so a config fixes the run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub corpus_dir: PathBuf,
    pub encoding: EncodingId,
    pub segment_length: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub resolution: Beats,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn loss_kind(&self) -> LossKind {
        self.train.loss_kind
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::Usage(format!(
                "split_ratio must be in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.segment_length < 1 {
            return Err(CliError::Usage("segment_length must be >= 1".into()));
        }
        if self.train.latent_dim < 2 {
            return Err(CliError::Usage(
                "latent_dim must be >= 2 for the 2-D projection".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    corpus_dir: Option<PathBuf>,
    encoding: Option<String>,
    segment_length: Option<usize>,
    split_ratio: Option<f64>,
    seed: Option<u64>,
    /// Beats per grid step as "num/den", e.g. "1/4".
    resolution: Option<String>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    train: RawTrain,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    dropout_rate: Option<f64>,
    latent_dim: Option<usize>,
    hidden_dim: Option<usize>,
    learning_rate: Option<f64>,
}

/// Flag-level settings that win over the file. Every field is optional.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus_dir: Option<PathBuf>,
    pub encoding: Option<String>,
    pub segment_length: Option<usize>,
    pub split_ratio: Option<f64>,
    pub seed: Option<u64>,
    pub resolution: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub latent_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub learning_rate: Option<f64>,
}

pub fn encoding_from_name(name: &str) -> Result<EncodingId, CliError> {
    EncodingId::ALL
        .into_iter()
        .find(|id| id.as_str() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = EncodingId::ALL.iter().map(|id| id.as_str()).collect();
            CliError::Usage(format!(
                "unknown encoding {name:?}; expected one of {}",
                known.join(", ")
            ))
        })
}

fn resolution_from_str(text: &str) -> Result<Beats, CliError> {
    let bad = || CliError::Usage(format!("resolution {text:?} is not \"num/den\" in beats"));
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text.trim(), "1"),
    };
    let num: i64 = num.parse().map_err(|_| bad())?;
    let den: i64 = den.parse().map_err(|_| bad())?;
    if num <= 0 || den <= 0 {
        return Err(bad());
    }
    Ok(beats(num, den))
}

/// Reads the TOML file (if given), layers `over` on top, fills defaults,
/// and validates. The train seed and loss kind are derived, not settable:
/// the seed is the experiment seed and the loss follows the encoding.
pub fn load_config(path: Option<&Path>, over: &Overrides) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => RawConfig::default(),
    };

    let corpus_dir = over
        .corpus_dir
        .clone()
        .or(raw.corpus_dir)
        .ok_or_else(|| CliError::Usage("corpus_dir is required (config or --corpus-dir)".into()))?;
    let encoding_name = over
        .encoding
        .clone()
        .or(raw.encoding)
        .ok_or_else(|| CliError::Usage("encoding is required (config or --encoding)".into()))?;
    let encoding = encoding_from_name(&encoding_name)?;
    let output_dir = over
        .output_dir
        .clone()
        .or(raw.output_dir)
        .ok_or_else(|| CliError::Usage("output_dir is required (config or --output-dir)".into()))?;
    let resolution = match over.resolution.clone().or(raw.resolution) {
        Some(text) => resolution_from_str(&text)?,
        None => beats(1, 4),
    };

    let mut train = TrainConfig::new(assign_loss(encoding));
    let seed = over.seed.or(raw.seed).unwrap_or(0);
    train.seed = seed;
    if let Some(v) = over.epochs.or(raw.train.epochs) {
        train.epochs = v;
    }
    if let Some(v) = over.batch_size.or(raw.train.batch_size) {
        train.batch_size = v;
    }
    if let Some(v) = over.dropout_rate.or(raw.train.dropout_rate) {
        train.dropout_rate = v;
    }
    if let Some(v) = over.latent_dim.or(raw.train.latent_dim) {
        train.latent_dim = v;
    }
    if let Some(v) = over.hidden_dim.or(raw.train.hidden_dim) {
        train.hidden_dim = v;
    }
    if let Some(v) = over.learning_rate.or(raw.train.learning_rate) {
        train.learning_rate = v;
    }

    let config = ExperimentConfig {
        corpus_dir,
        encoding,
        segment_length: over.segment_length.or(raw.segment_length).unwrap_or(10),
        split_ratio: over.split_ratio.or(raw.split_ratio).unwrap_or(0.6),
        seed,
        resolution,
        output_dir,
        train,
    };
    config.validate()?;
    Ok(config)
}
