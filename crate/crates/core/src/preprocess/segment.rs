use serde::{Deserialize, Serialize};

use crate::audio::{normalize_amplitude, AudioClip, LevelMode};
use crate::error::{Error, Result};

/// A fixed-length, centered, zero-padded and level-normalized call excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct CallSegment {
    pub clip: AudioClip,
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: Option<String>,
}

impl CallSegment {
    /// Raw (pre-padding) call duration.
    pub fn call_duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub clip_len_s: f64,
    pub target_db: f64,
    pub level_mode: LevelMode,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            clip_len_s: 2.0,
            target_db: -20.0,
            level_mode: LevelMode::Rms,
        }
    }
}

/// Cuts `[start_s, end_s)` out of `clip` into a `clip_len_s` segment.
///
/// Short calls are centered between zeros; long calls are cropped to the
/// window centered on their midpoint.
pub fn segment_call(
    clip: &AudioClip,
    start_s: f64,
    end_s: f64,
    cfg: &SegmentConfig,
    label: Option<String>,
) -> Result<CallSegment> {
    if !(start_s >= 0.0 && start_s < end_s && end_s <= clip.duration_s() + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "call interval [{start_s}, {end_s}) outside recording of {:.3} s",
            clip.duration_s()
        )));
    }
    if !(cfg.clip_len_s > 0.0) {
        return Err(Error::InvalidParameter("clip length must be positive".into()));
    }
    let rate = clip.sample_rate as f64;
    let n = clip.samples.len();
    let first = ((start_s * rate).round() as usize).min(n);
    let last = ((end_s * rate).round() as usize).min(n);
    if last <= first {
        return Err(Error::InvalidParameter(format!(
            "call interval [{start_s}, {end_s}) is shorter than one sample"
        )));
    }
    let target = (cfg.clip_len_s * rate).round() as usize;
    let call = &clip.samples[first..last];

    let mut samples = vec![0.0; target];
    if call.len() <= target {
        let offset = (target - call.len()) / 2;
        samples[offset..offset + call.len()].copy_from_slice(call);
    } else {
        let offset = (call.len() - target) / 2;
        samples.copy_from_slice(&call[offset..offset + target]);
    }
    let raw = AudioClip::new(samples, clip.sample_rate, clip.source_id.clone())?;
    let clip = normalize_amplitude(&raw, cfg.target_db, cfg.level_mode).map_err(|_| {
        Error::SilentSegment(format!(
            "{} [{start_s:.3}, {end_s:.3}) contains no signal",
            clip.source_id
        ))
    })?;
    Ok(CallSegment {
        source_id: clip.source_id.clone(),
        clip,
        start_s,
        end_s,
        label,
    })
}
