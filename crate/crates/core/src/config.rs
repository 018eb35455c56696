//! Pipeline configuration file (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::ScoreSpace;
use crate::detect::EventConfig;
use crate::embed::InputMode;
use crate::error::{Error, Result};
use crate::preprocess::{DenoiseConfig, MelConfig, SegmentConfig};

/// Which embeddings shape the PCA projection during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PcaFit {
    /// Labelled training calls only.
    #[default]
    Training,
    /// Training calls plus an extra unlabelled pool.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    /// Program and leading arguments; `--manifest`, `--out` and `--model`
    /// are appended.
    pub command: Vec<String>,
    pub dimension: usize,
    #[serde(default = "default_input_mode")]
    pub input_mode: InputMode,
}

fn default_input_mode() -> InputMode {
    InputMode::Waveform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub activity_frac: f64,
    pub expand: f64,
    pub duration_buffer: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            activity_frac: 0.2,
            expand: 0.5,
            duration_buffer: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// A detection matches a truth call when their overlap covers at least
    /// this fraction of the truth interval.
    pub min_overlap: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { min_overlap: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Base directory for recording paths in annotation files.
    pub data_root: PathBuf,
    pub sample_rate: u32,
    /// Target species band for field recordings; estimated from the target
    /// calls when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<(f64, f64)>,
    pub provider: String,
    pub variance_target: f64,
    pub target_recall: f64,
    pub score_space: ScoreSpace,
    pub pca_fit: PcaFit,
    /// Parallel recordings; 0 uses every core.
    pub workers: usize,
    pub segment: SegmentConfig,
    pub denoise: DenoiseConfig,
    pub mel: MelConfig,
    pub event: EventConfig,
    pub analysis: AnalysisConfig,
    pub evaluate: EvaluateConfig,
    /// Bridge providers keyed by provider id.
    #[serde(skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub bridge: std::collections::BTreeMap<String, BridgeConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("."),
            sample_rate: crate::audio::PIPELINE_RATE,
            band: None,
            provider: crate::embed::BASELINE_ID.to_string(),
            variance_target: 0.95,
            target_recall: 0.9,
            score_space: ScoreSpace::SoftmaxProbability,
            pca_fit: PcaFit::Training,
            workers: 0,
            segment: SegmentConfig::default(),
            denoise: DenoiseConfig::default(),
            mel: MelConfig::default(),
            event: EventConfig::default(),
            analysis: AnalysisConfig::default(),
            evaluate: EvaluateConfig::default(),
            bridge: Default::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Data(format!("serializing config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(format!("config: {m}")));
        if self.sample_rate < 1000 {
            return bad(format!("sample_rate {} too low", self.sample_rate));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if let Some((lo, hi)) = self.band {
            if !(lo > 0.0 && lo < hi && hi < nyquist) {
                return bad(format!("band ({lo}, {hi}) must satisfy 0 < low < high < {nyquist}"));
            }
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return bad("variance_target must be in (0, 1]".into());
        }
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return bad("target_recall must be in (0, 1]".into());
        }
        if !(self.segment.clip_len_s > 0.0) || !self.segment.target_db.is_finite() {
            return bad("segment.clip_len_s must be positive".into());
        }
        if self.mel.n_mels == 0 || self.mel.n_frames == 0 || !(self.mel.floor_db < 0.0) {
            return bad("mel grid must be non-empty with a negative floor".into());
        }
        let a = &self.analysis;
        if !(a.activity_frac > 0.0 && a.activity_frac <= 1.0) || !(a.expand >= 0.0) || !(a.duration_buffer >= 0.0) {
            return bad("analysis parameters out of range".into());
        }
        if !(self.evaluate.min_overlap > 0.0 && self.evaluate.min_overlap <= 1.0) {
            return bad("evaluate.min_overlap must be in (0, 1]".into());
        }
        for (id, b) in &self.bridge {
            if b.command.is_empty() || b.dimension == 0 {
                return bad(format!("bridge {id:?} needs a command and a positive dimension"));
            }
        }
        self.denoise.validate().or_else(|e| bad(e.to_string()))?;
        self.event.validate().or_else(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.data_root.join(path)
        }
    }
}
