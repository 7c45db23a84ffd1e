//! Run configuration: built-in defaults, overridden by an optional JSON
//! config file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use medentropy::corpus::SplitRatios;
use medentropy::entropy::InitialEntropyMode;
use medentropy::nncore::AdamHyper;
use medentropy::seq2seq::{ModelConfig, TrainOptions};
use medentropy::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

/// Flags accepted by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct GlobalFlags {
    /// JSON file with any subset of the run configuration fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for generation, initialization, shuffling and splitting [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// GRU depth of encoder and decoder.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub layers: Option<u8>,
    #[arg(long, global = true)]
    pub attention: Option<OnOff>,
    #[arg(long = "teacher-forcing", global = true)]
    pub teacher_forcing: Option<OnOff>,
    #[arg(long = "embed-dim", global = true)]
    pub embed_dim: Option<usize>,
    #[arg(long = "hidden-dim", global = true)]
    pub hidden_dim: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// uniform-proc, uniform-diag or empirical.
    #[arg(long = "initial-entropy", global = true, value_parser = parse_mode)]
    pub initial_entropy: Option<InitialEntropyMode>,
}

fn parse_mode(s: &str) -> std::result::Result<InitialEntropyMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Fully resolved configuration, echoed into every manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub num_layers: usize,
    pub attention: bool,
    pub teacher_forcing: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
    pub prefix_supervision: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub initial_entropy: InitialEntropyMode,
    pub min_count: usize,
    pub split: SplitRatios,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::new(0, 0);
        let train = TrainOptions::default();
        RunConfig {
            seed: DEFAULT_SEED,
            num_layers: model.num_layers,
            attention: model.attention,
            teacher_forcing: model.teacher_forcing,
            embed_dim: model.embed_dim,
            hidden_dim: model.hidden_dim,
            max_decode_len: model.max_decode_len,
            prefix_supervision: model.prefix_supervision,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.hyper.learning_rate,
            beta1: train.hyper.beta1,
            beta2: train.hyper.beta2,
            epsilon: train.hyper.epsilon,
            initial_entropy: InitialEntropyMode::default(),
            min_count: 1,
            split: SplitRatios::default(),
        }
    }
}

/// The config file: any subset of [`RunConfig`].
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    num_layers: Option<usize>,
    attention: Option<bool>,
    teacher_forcing: Option<bool>,
    embed_dim: Option<usize>,
    hidden_dim: Option<usize>,
    max_decode_len: Option<usize>,
    prefix_supervision: Option<bool>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    initial_entropy: Option<InitialEntropyMode>,
    min_count: Option<usize>,
    split: Option<SplitRatios>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn resolve(flags: &GlobalFlags) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        set(&mut cfg.seed, flags.seed);
        set(&mut cfg.num_layers, flags.layers.map(usize::from));
        set(&mut cfg.attention, flags.attention.map(bool::from));
        set(
            &mut cfg.teacher_forcing,
            flags.teacher_forcing.map(bool::from),
        );
        set(&mut cfg.embed_dim, flags.embed_dim);
        set(&mut cfg.hidden_dim, flags.hidden_dim);
        set(&mut cfg.epochs, flags.epochs);
        set(&mut cfg.batch_size, flags.batch_size);
        set(&mut cfg.learning_rate, flags.lr);
        set(&mut cfg.initial_entropy, flags.initial_entropy);
        cfg.adam().validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let f: ConfigFile = serde_json::from_str(&text)?;
        set(&mut self.seed, f.seed);
        set(&mut self.num_layers, f.num_layers);
        set(&mut self.attention, f.attention);
        set(&mut self.teacher_forcing, f.teacher_forcing);
        set(&mut self.embed_dim, f.embed_dim);
        set(&mut self.hidden_dim, f.hidden_dim);
        set(&mut self.max_decode_len, f.max_decode_len);
        set(&mut self.prefix_supervision, f.prefix_supervision);
        set(&mut self.epochs, f.epochs);
        set(&mut self.batch_size, f.batch_size);
        set(&mut self.learning_rate, f.learning_rate);
        set(&mut self.beta1, f.beta1);
        set(&mut self.beta2, f.beta2);
        set(&mut self.epsilon, f.epsilon);
        set(&mut self.initial_entropy, f.initial_entropy);
        set(&mut self.min_count, f.min_count);
        set(&mut self.split, f.split);
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn model_config(&self, proc_vocab_size: usize, diag_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            attention: self.attention,
            teacher_forcing: self.teacher_forcing,
            proc_vocab_size,
            diag_vocab_size,
            max_decode_len: self.max_decode_len,
            seed: self.seed,
            prefix_supervision: self.prefix_supervision,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            hyper: self.adam(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"seed": 7, "epochs": 3, "hidden_dim": 12, "min_count": 2}"#,
        )
        .unwrap();
        let flags = GlobalFlags {
            config: Some(path),
            epochs: Some(9),
            attention: Some(OnOff::Off),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(
            (cfg.seed, cfg.epochs, cfg.hidden_dim, cfg.min_count),
            (7, 9, 12, 2)
        );
        assert!(!cfg.attention);
        assert_eq!(cfg.embed_dim, RunConfig::default().embed_dim);
    }

    #[test]
    fn default_seed_is_42() {
        assert_eq!(
            RunConfig::resolve(&GlobalFlags::default()).unwrap().seed,
            42
        );
    }

    #[test]
    fn unknown_config_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sed": 7}"#).unwrap();
        let flags = GlobalFlags {
            config: Some(path),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
