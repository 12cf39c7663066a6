//! Run configuration: one JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emg_voicing::data::{Split, SynthConfig};
use emg_voicing::model::ModelConfig;
use emg_voicing::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out: PathBuf,
    /// Dataset root; `<out>/dataset` when unset.
    pub dataset: Option<PathBuf>,
    /// Checkpoint for `eval` and `analyze`; `<out>/best.mprm` when unset.
    pub checkpoint: Option<PathBuf>,
    /// Tab-separated `utterance<TAB>hypothesis words` lines scored by `eval`.
    pub hypotheses: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            dataset: None,
            checkpoint: None,
            hypotheses: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Split scored by `eval` and `analyze`.
    pub split: Split,
    /// Train the phoneme-context baseline in `analyze`.
    pub context_baseline: bool,
    pub baseline_epochs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            context_baseline: true,
            baseline_epochs: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds data synthesis, initialization, batching, dropout and the baseline.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    /// Desk scale, matched to the default synthetic data.
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            seed: 0,
            model: ModelConfig {
                in_channels: synth.channels,
                phoneme_count: synth.phonemes,
                ..ModelConfig::desk()
            },
            train: TrainConfig {
                max_batch_samples: 16_000,
                warmup: 100,
                epochs: 50,
                ..TrainConfig::default()
            },
            synth,
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Values given on the command line; each replaces the file value when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub hypotheses: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let cfg: Self = serde_json::from_value(value.clone())?;
        for section in ["train", "synth"] {
            if let Some(s) = value.get(section).and_then(|s| s.get("seed")) {
                if s.as_u64() != Some(cfg.seed) {
                    bail!("{section}.seed differs from the top-level \"seed\", which seeds everything");
                }
            }
        }
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults), applies flags and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.paths.out = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(c) = &overrides.checkpoint {
            cfg.paths.checkpoint = Some(c.clone());
        }
        if let Some(d) = &overrides.dataset {
            cfg.paths.dataset = Some(d.clone());
        }
        if let Some(h) = &overrides.hypotheses {
            cfg.paths.hypotheses = Some(h.clone());
        }
        cfg.synth.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().context("model")?;
        self.train.validate().context("train")?;
        self.synth.validate().context("synth")?;
        if self.eval.baseline_epochs == 0 && self.eval.context_baseline {
            bail!("eval.baseline_epochs must be positive when the context baseline is enabled");
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths
            .dataset
            .clone()
            .unwrap_or_else(|| self.paths.out.join("dataset"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.out.join("best.mprm"))
    }

    /// Writes the effective configuration as `<out>/<command>_config.json`.
    pub fn echo(&self, command: &str) -> Result<()> {
        let path = self.paths.out.join(format!("{command}_config.json"));
        std::fs::create_dir_all(&self.paths.out)
            .with_context(|| format!("creating {}", self.paths.out.display()))?;
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
