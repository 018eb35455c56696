//! Species call statistics from average spectrograms.
//!
//! Frequency range comes from thresholding the average dB grid of a species'
//! labeled calls; duration comes from the annotated call bounds, with an
//! image-extent estimate available when annotations are loose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::MelSpectrogram;

/// Lowest frequency an estimated band may start at.
pub const MIN_BAND_HZ: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesCallStats {
    pub species: String,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Mean call duration including the buffer on both ends.
    pub mean_duration_s: f64,
    pub n_calls: usize,
}

/// Element-wise mean of dB grids sharing the same axes.
pub fn average_spectrogram(grids: &[MelSpectrogram]) -> Result<MelSpectrogram> {
    let first = grids
        .first()
        .ok_or_else(|| Error::InvalidParameter("no spectrograms to average".into()))?;
    if let Some(i) = grids.iter().position(|g| !g.same_axes(first)) {
        return Err(Error::InvalidParameter(format!(
            "spectrogram {i} has axes different from spectrogram 0"
        )));
    }
    let n = grids.len() as f64;
    let mut values = vec![0.0; first.values.len()];
    for g in grids {
        for (acc, v) in values.iter_mut().zip(&g.values) {
            *acc += v;
        }
    }
    values.iter_mut().for_each(|v| *v /= n);
    Ok(MelSpectrogram {
        values,
        ..first.clone()
    })
}

/// Widens `[low, high]` by `expand * width / 2` per side, clamped to
/// `[MIN_BAND_HZ, 0.99 * nyquist]`.
pub fn expand_band(low: f64, high: f64, expand: f64, nyquist: f64) -> (f64, f64) {
    let pad = expand * (high - low) / 2.0;
    ((low - pad).max(MIN_BAND_HZ), (high + pad).min(0.99 * nyquist))
}

/// Mel bands holding any cell within `activity_frac` of the dynamic range
/// below the grid maximum, as `(lowest, highest)`.
pub fn active_bands(avg: &MelSpectrogram, activity_frac: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&activity_frac) {
        return Err(Error::InvalidParameter(format!(
            "activity fraction {activity_frac} outside [0, 1]"
        )));
    }
    let (max, min) = (avg.max_value(), avg.min_value());
    if !(max > min) {
        return Err(Error::NoSignal("average spectrogram is flat".into()));
    }
    let cutoff = max - activity_frac * (max - min);
    let active: Vec<usize> = (0..avg.n_mels)
        .filter(|&b| avg.row(b).iter().any(|&v| v >= cutoff))
        .collect();
    match (active.first(), active.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::NoSignal("no active cells".into())),
    }
}

/// Frequency range of the active region, expanded by `expand` of its width.
pub fn estimate_freq_range(avg: &MelSpectrogram, activity_frac: f64, expand: f64) -> Result<(f64, f64)> {
    let (lo, hi) = active_bands(avg, activity_frac)?;
    let nyquist = *avg.edges_hz.last().expect("mel edges");
    Ok(expand_band(
        avg.band_lower_hz(lo),
        avg.band_upper_hz(hi),
        expand,
        nyquist,
    ))
}

/// Mean raw call duration with `buffer` of it added to each end.
pub fn estimate_call_duration(raw_durations_s: &[f64], buffer: f64) -> Result<f64> {
    if raw_durations_s.is_empty() {
        return Err(Error::InvalidParameter("no calls to measure".into()));
    }
    if raw_durations_s.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidParameter("call durations must be positive".into()));
    }
    let mean = raw_durations_s.iter().sum::<f64>() / raw_durations_s.len() as f64;
    Ok(mean * (1.0 + 2.0 * buffer))
}

/// Duration from the time extent of active cells, for calls without tight
/// annotation bounds.
pub fn estimate_duration_from_image(avg: &MelSpectrogram, activity_frac: f64, buffer: f64) -> Result<f64> {
    let (max, min) = (avg.max_value(), avg.min_value());
    if !(max > min) {
        return Err(Error::NoSignal("average spectrogram is flat".into()));
    }
    let cutoff = max - activity_frac * (max - min);
    let active: Vec<usize> = (0..avg.n_frames)
        .filter(|&t| (0..avg.n_mels).any(|b| avg.get(b, t) >= cutoff))
        .collect();
    let (first, last) = match (active.first(), active.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::NoSignal("no active frames".into())),
    };
    let step = if avg.n_frames > 1 {
        avg.time_axis[1] - avg.time_axis[0]
    } else {
        0.0
    };
    let extent = (last - first + 1) as f64 * step;
    Ok(extent * (1.0 + 2.0 * buffer))
}

const CLIP_GRID_S: f64 = 0.5;

/// Longest buffered duration across species, rounded up to a 0.5 s grid.
pub fn suggest_clip_length(stats: &[SpeciesCallStats]) -> Result<f64> {
    let longest = stats
        .iter()
        .map(|s| s.mean_duration_s)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))))
        .ok_or_else(|| Error::InvalidParameter("no species statistics".into()))?;
    let steps = (longest / CLIP_GRID_S - 1e-9).ceil().max(1.0);
    Ok(steps * CLIP_GRID_S)
}
