//! Experiment configuration: model, training, corpus, adapter placement and
//! feature-extraction settings, loadable from a sectioned key=value file.
//!
//! ```text
//! [encoder]
//! hidden_size = 64
//! n_blocks = 6
//!
//! [adapter]
//! aux = both
//! xvector_block = 2
//! ```
//!
//! Unknown keys are rejected. Command-line `--set section.key=value`
//! overrides win over file values.

use std::path::Path;

use crate::corpus::{CorpusParams, Severity};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::xvector::XvectorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxSelection {
    None,
    Fmllr,
    Xvector,
    Both,
}

impl AuxSelection {
    pub fn parse(s: &str) -> Result<AuxSelection> {
        match s {
            "none" => Ok(AuxSelection::None),
            "fmllr" => Ok(AuxSelection::Fmllr),
            "xvector" => Ok(AuxSelection::Xvector),
            "both" => Ok(AuxSelection::Both),
            other => Err(Error::Config(format!("unknown aux selection: {other}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AuxSelection::None => "none",
            AuxSelection::Fmllr => "fmllr",
            AuxSelection::Xvector => "xvector",
            AuxSelection::Both => "both",
        }
    }

    pub fn wants_fmllr(&self) -> bool {
        matches!(self, AuxSelection::Fmllr | AuxSelection::Both)
    }

    pub fn wants_xvector(&self) -> bool {
        matches!(self, AuxSelection::Xvector | AuxSelection::Both)
    }
}

#[derive(Debug, Clone)]
pub struct AdapterSettings {
    /// Block for the x-vector adapter (intermediate placement).
    pub xvector_block: usize,
    /// Block for the fMLLR adapter; 0 means the final block.
    pub fmllr_block: usize,
    /// Bottleneck width; 0 means hidden_size/16.
    pub bottleneck_dim: usize,
    pub aux_proj_dim: usize,
    pub relu_after_up: bool,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        AdapterSettings {
            xvector_block: 2,
            fmllr_block: 0,
            bottleneck_dim: 0,
            aux_proj_dim: 64,
            relu_after_up: false,
        }
    }
}

impl AdapterSettings {
    pub fn fmllr_block_for(&self, n_blocks: usize) -> usize {
        if self.fmllr_block == 0 {
            n_blocks
        } else {
            self.fmllr_block
        }
    }

    pub fn bottleneck_for(&self, hidden: usize) -> usize {
        if self.bottleneck_dim == 0 {
            (hidden / 16).max(1)
        } else {
            self.bottleneck_dim
        }
    }
}

#[derive(Debug, Clone)]
pub struct FmllrSettings {
    /// Width of the LDA projection and hence of the fMLLR features.
    pub lda_dim: usize,
    pub gmm_components: usize,
    pub gmm_iters: usize,
    pub fmllr_iters: usize,
}

impl FmllrSettings {
    pub fn desk_scale() -> Self {
        FmllrSettings { lda_dim: 8, gmm_components: 8, gmm_iters: 10, fmllr_iters: 5 }
    }

    /// Reference widths of the full-size recipe (40-dimensional features).
    pub fn paper_scale() -> Self {
        FmllrSettings { lda_dim: 40, gmm_components: 64, gmm_iters: 10, fmllr_iters: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub corpus: CorpusParams,
    pub aux: AuxSelection,
    pub adapter: AdapterSettings,
    pub fmllr: FmllrSettings,
    pub xvector: XvectorConfig,
}

impl ExperimentConfig {
    pub fn desk_scale() -> Self {
        ExperimentConfig {
            encoder: EncoderConfig::desk_scale(),
            train: TrainConfig::desk_scale(),
            corpus: CorpusParams::desk_scale(),
            aux: AuxSelection::None,
            adapter: AdapterSettings::default(),
            fmllr: FmllrSettings::desk_scale(),
            xvector: XvectorConfig::desk_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.corpus.validate()?;
        if self.aux == AuxSelection::Both {
            let fb = self.adapter.fmllr_block_for(self.encoder.n_blocks);
            if fb == self.adapter.xvector_block {
                return Err(Error::Config(format!(
                    "dual adapters need distinct blocks; both resolve to {fb}"
                )));
            }
        }
        if self.corpus.feature_dim != self.encoder.subsample_factor {
            return Err(Error::Config(format!(
                "corpus feature dim {} must equal the encoder subsample factor {} so the \
                 pseudo-waveform rendering stays frame-aligned",
                self.corpus.feature_dim, self.encoder.subsample_factor
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::desk_scale();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            self.set(&format!("{section}.{}", key.trim()), value.trim())?;
        }
        Ok(())
    }

    /// Set one value by `section.key` path.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        fn int(v: &str, path: &str) -> Result<usize> {
            v.parse().map_err(|_| Error::Config(format!("{path}: expected integer, got {v}")))
        }
        fn real(v: &str, path: &str) -> Result<f64> {
            v.parse().map_err(|_| Error::Config(format!("{path}: expected number, got {v}")))
        }
        fn flag(v: &str, path: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("{path}: expected boolean, got {v}"))),
            }
        }
        match path {
            "encoder.hidden_size" => self.encoder.hidden_size = int(value, path)?,
            "encoder.n_blocks" => self.encoder.n_blocks = int(value, path)?,
            "encoder.n_heads" => self.encoder.n_heads = int(value, path)?,
            "encoder.subsample_factor" => self.encoder.subsample_factor = int(value, path)?,
            "encoder.ffn_width" => self.encoder.ffn_width = int(value, path)?,

            "train.peak_lr" => self.train.peak_lr = real(value, path)?,
            "train.warmup_steps" => self.train.warmup_steps = int(value, path)?,
            "train.total_steps" => self.train.total_steps = int(value, path)?,
            "train.beta1" => self.train.beta1 = real(value, path)?,
            "train.beta2" => self.train.beta2 = real(value, path)?,
            "train.epsilon" => self.train.epsilon = real(value, path)?,
            "train.weight_decay" => self.train.weight_decay = real(value, path)?,
            "train.grad_clip_norm" => self.train.grad_clip_norm = real(value, path)?,
            "train.epochs" => self.train.epochs = int(value, path)?,
            "train.seed" => self.train.seed = int(value, path)? as u64,
            "train.stage1_steps" => self.train.stage1_steps = int(value, path)?,
            "train.batch_size" => self.train.batch_size = int(value, path)?,

            "corpus.language" => self.corpus.language = value.to_string(),
            "corpus.n_phones" => self.corpus.n_phones = int(value, path)?,
            "corpus.n_words" => self.corpus.n_words = int(value, path)?,
            "corpus.word_phones_min" => self.corpus.word_phones_min = int(value, path)?,
            "corpus.word_phones_max" => self.corpus.word_phones_max = int(value, path)?,
            "corpus.speakers_vl" => {
                self.corpus.speakers_per_tier.insert(Severity::VeryLow, int(value, path)?);
            }
            "corpus.speakers_l" => {
                self.corpus.speakers_per_tier.insert(Severity::Low, int(value, path)?);
            }
            "corpus.speakers_m" => {
                self.corpus.speakers_per_tier.insert(Severity::Mid, int(value, path)?);
            }
            "corpus.speakers_h" => {
                self.corpus.speakers_per_tier.insert(Severity::High, int(value, path)?);
            }
            "corpus.utterances_per_speaker" => {
                self.corpus.utterances_per_speaker = int(value, path)?
            }
            "corpus.feature_dim" => self.corpus.feature_dim = int(value, path)?,
            "corpus.frames_per_phone" => self.corpus.frames_per_phone = int(value, path)?,
            "corpus.template_seed" => self.corpus.template_seed = int(value, path)? as u64,
            "corpus.clean" => self.corpus.clean = flag(value, path)?,
            "corpus.distortion_base" => self.corpus.distortion_base = real(value, path)?,
            "corpus.offset_base" => self.corpus.offset_base = real(value, path)?,
            "corpus.jitter_base" => self.corpus.jitter_base = real(value, path)?,
            "corpus.noise_base" => self.corpus.noise_base = real(value, path)?,

            "adapter.aux" => self.aux = AuxSelection::parse(value)?,
            "adapter.xvector_block" => self.adapter.xvector_block = int(value, path)?,
            "adapter.fmllr_block" => self.adapter.fmllr_block = int(value, path)?,
            "adapter.bottleneck_dim" => self.adapter.bottleneck_dim = int(value, path)?,
            "adapter.aux_proj_dim" => self.adapter.aux_proj_dim = int(value, path)?,
            "adapter.relu_after_up" => self.adapter.relu_after_up = flag(value, path)?,

            "fmllr.lda_dim" => self.fmllr.lda_dim = int(value, path)?,
            "fmllr.gmm_components" => self.fmllr.gmm_components = int(value, path)?,
            "fmllr.gmm_iters" => self.fmllr.gmm_iters = int(value, path)?,
            "fmllr.fmllr_iters" => self.fmllr.fmllr_iters = int(value, path)?,

            "xvector.layer_width" => self.xvector.layer_width = int(value, path)?,
            "xvector.embed_dim" => self.xvector.embed_dim = int(value, path)?,
            "xvector.epochs" => self.xvector.epochs = int(value, path)?,
            "xvector.lr" => self.xvector.lr = real(value, path)?,
            "xvector.seed" => self.xvector.seed = int(value, path)? as u64,

            other => return Err(Error::Config(format!("unknown config key: {other}"))),
        }
        Ok(())
    }
}

/// Parse repeated `--set section.key=value` overrides.
pub fn apply_overrides(cfg: &mut ExperimentConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let Some((path, value)) = o.split_once('=') else {
            return Err(Error::Config(format!("override {o:?} is not section.key=value")));
        };
        cfg.set(path.trim(), value.trim())?;
    }
    Ok(())
}
