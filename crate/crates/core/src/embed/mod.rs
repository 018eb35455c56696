//! Call embeddings: providers, the external bridge protocol, and PCA.

mod baseline;
pub mod exchange;
mod pca;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_embed, BaselineProvider, BASELINE_ID, BASELINE_TILES};
pub use exchange::{external_embed, ExternalProvider};
pub use pca::{fit_pca, PcaModel};

use crate::error::Result;
use crate::preprocess::{CallSegment, MelSpectrogram};

/// A real vector representing one call.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
    /// Id of the segment this vector was computed from.
    pub segment_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Waveform,
    Spectrogram,
}

/// One call handed to a provider, in both representations.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub segment: &'a CallSegment,
    pub mel: &'a MelSpectrogram,
}

/// Anything that turns calls into fixed-length vectors deterministically.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    /// Output length, when known before the first call.
    fn dimension(&self) -> Option<usize>;
    fn input_mode(&self) -> InputMode;
    /// One vector per input, in input order.
    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>>;
}

/// Stable identifier of a call: `{source}:{start}-{end}` with millisecond
/// precision.
pub fn segment_id(source_id: &str, start_s: f64, end_s: f64) -> String {
    format!("{source_id}:{start_s:.3}-{end_s:.3}")
}
