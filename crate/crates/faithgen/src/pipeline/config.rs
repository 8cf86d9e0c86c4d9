//! The run configuration file: one TOML document holding every knob of a
//! run. Defaults mirror the reference training setup (batch 32, learning
//! rate 3e-5, source/target lengths 600/128, Adam).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::contrast::SamplerConfig;
use crate::control::HallucinationTag;
use crate::eval::RemoteJudgeConfig;
use crate::model::{Ablation, ContrastiveConfig, DecodeStrategy, ModelConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataPaths,
    pub model: ModelSettings,
    pub sampler: SamplerSettings,
    /// "lexical-overlap" (default) or "lexical-overlap-no-stopwords".
    pub scorer: String,
    pub train: TrainSettings,
    pub decode: DecodeSettings,
    pub judge: JudgeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataPaths::default(),
            model: ModelSettings::default(),
            sampler: SamplerSettings::default(),
            scorer: "lexical-overlap".to_string(),
            train: TrainSettings::default(),
            decode: DecodeSettings::default(),
            judge: JudgeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub dropout: f64,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden_dim: m.hidden_dim,
            ffn_dim: m.ffn_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            attention_heads: m.attention_heads,
            dropout: m.dropout,
            max_source_len: m.max_source_len,
            max_target_len: m.max_target_len,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
        }
    }
}

impl ModelSettings {
    pub fn to_model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden_dim: self.hidden_dim,
            ffn_dim: self.ffn_dim,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            attention_heads: self.attention_heads,
            dropout: self.dropout,
            max_source_len: self.max_source_len,
            max_target_len: self.max_target_len,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub positive_count: usize,
    pub negative_count: usize,
    pub house_heuristic: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            positive_count: 2,
            negative_count: 4,
            house_heuristic: false,
        }
    }
}

impl SamplerSettings {
    pub fn to_sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            positive_count: self.positive_count,
            negative_count: self.negative_count,
            house_heuristic: self.house_heuristic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    /// "full", "control-only", "contrastive-only" or "ce-only".
    pub ablation: String,
    pub contrastive: ContrastiveConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 5,
            ablation: "full".to_string(),
            contrastive: ContrastiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSettings {
    /// "greedy" or "beam".
    pub strategy: String,
    pub beam_width: usize,
    /// Default control token at inference; the most faithful bucket.
    pub tag: String,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            strategy: "greedy".to_string(),
            beam_width: 4,
            tag: "hal_low".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSettings {
    /// "mock" or "remote".
    pub mode: String,
    pub with_fluency: bool,
    pub remote: Option<RemoteJudgeConfig>,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        Self {
            mode: "mock".to_string(),
            with_fluency: false,
            remote: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&raw)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.data.train.as_os_str().is_empty() {
            return Err(PipelineError::Config("data.train path is required".into()));
        }
        self.parsed_scorer()?;
        self.parsed_ablation()?;
        self.parsed_strategy()?;
        self.parsed_tag()?;
        if self.sampler.positive_count == 0 || self.sampler.negative_count == 0 {
            return Err(PipelineError::Config(
                "sampler.positive_count and sampler.negative_count must be > 0".into(),
            ));
        }
        match self.judge.mode.as_str() {
            "mock" => Ok(()),
            "remote" => {
                if self.judge.remote.is_none() {
                    return Err(PipelineError::Config(
                        "judge.mode = \"remote\" requires a [judge.remote] section".into(),
                    ));
                }
                Ok(())
            }
            other => Err(PipelineError::Config(format!("unknown judge mode {other:?}"))),
        }?;
        // Surface invalid model dimensions before any stage runs.
        self.model
            .to_model_config(1, self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn parsed_scorer(&self) -> Result<crate::control::LexicalOverlapScorer, PipelineError> {
        match self.scorer.as_str() {
            "lexical-overlap" => Ok(crate::control::LexicalOverlapScorer::new()),
            "lexical-overlap-no-stopwords" => Ok(crate::control::LexicalOverlapScorer::without_stopwords()),
            other => Err(PipelineError::Config(format!("unknown scorer {other:?}"))),
        }
    }

    pub fn parsed_ablation(&self) -> Result<Ablation, PipelineError> {
        self.train.ablation.parse().map_err(PipelineError::Config)
    }

    pub fn parsed_strategy(&self) -> Result<DecodeStrategy, PipelineError> {
        match self.decode.strategy.as_str() {
            "greedy" => Ok(DecodeStrategy::Greedy),
            "beam" => {
                if self.decode.beam_width == 0 {
                    return Err(PipelineError::Config("decode.beam_width must be > 0".into()));
                }
                Ok(DecodeStrategy::Beam {
                    width: self.decode.beam_width,
                })
            }
            other => Err(PipelineError::Config(format!("unknown decode strategy {other:?}"))),
        }
    }

    pub fn parsed_tag(&self) -> Result<HallucinationTag, PipelineError> {
        HallucinationTag::parse(&self.decode.tag)
            .ok_or_else(|| PipelineError::Config(format!("unknown decode tag {:?}", self.decode.tag)))
    }

    /// Canonical serialized form, hashed into the manifest.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.model.batch_size, 32);
        assert!((c.model.learning_rate - 3e-5).abs() < 1e-18);
        assert_eq!(c.model.max_source_len, 600);
        assert_eq!(c.model.max_target_len, 128);
        assert_eq!(c.sampler.positive_count, 2);
        assert_eq!(c.sampler.negative_count, 4);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let text = c.canonical_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.canonical_toml(), text);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = toml::from_str::<RunConfig>("unknown_knob = 3").unwrap_err();
        assert!(err.to_string().contains("unknown_knob"));
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut c = RunConfig::default();
        c.data.train = "train.jsonl".into();
        c.scorer = "bartscore".into();
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let mut c = RunConfig::default();
        c.data.train = "train.jsonl".into();
        c.model.attention_heads = 3; // does not divide hidden_dim 128
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
    }
}
