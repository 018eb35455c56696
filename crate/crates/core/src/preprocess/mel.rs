use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::segment::CallSegment;
use crate::dsp::hann;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MelScale {
    #[default]
    Htk,
    Slaney,
}

pub fn hz_to_mel(hz: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 2595.0 * (1.0 + hz / 700.0).log10(),
        MelScale::Slaney => {
            let (f_sp, min_log_hz) = (200.0 / 3.0, 1000.0);
            let min_log_mel = min_log_hz / f_sp;
            let logstep = 6.4f64.ln() / 27.0;
            if hz >= min_log_hz {
                min_log_mel + (hz / min_log_hz).ln() / logstep
            } else {
                hz / f_sp
            }
        }
    }
}

pub fn mel_to_hz(mel: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * (10f64.powf(mel / 2595.0) - 1.0),
        MelScale::Slaney => {
            let (f_sp, min_log_hz) = (200.0 / 3.0, 1000.0);
            let min_log_mel = min_log_hz / f_sp;
            let logstep = 6.4f64.ln() / 27.0;
            if mel >= min_log_mel {
                min_log_hz * (logstep * (mel - min_log_mel)).exp()
            } else {
                mel * f_sp
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub n_frames: usize,
    pub floor_db: f64,
    pub fmin: f64,
    /// Upper band edge; Nyquist when absent.
    pub fmax: Option<f64>,
    pub scale: MelScale,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 227,
            n_frames: 227,
            floor_db: -40.0,
            fmin: 0.0,
            fmax: None,
            scale: MelScale::Htk,
        }
    }
}

/// Peak-referenced dB mel-spectrogram; `values` is row-major by mel band.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub n_mels: usize,
    pub n_frames: usize,
    /// Band center frequencies, lowest first.
    pub freq_axis: Vec<f64>,
    /// Frame center times in seconds.
    pub time_axis: Vec<f64>,
    /// Triangle corner frequencies: band `b` spans `edges_hz[b]..edges_hz[b + 2]`.
    pub edges_hz: Vec<f64>,
    pub floor_db: f64,
}

impl MelSpectrogram {
    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.n_frames + frame]
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.values[band * self.n_frames..(band + 1) * self.n_frames]
    }

    pub fn band_lower_hz(&self, band: usize) -> f64 {
        self.edges_hz[band]
    }

    pub fn band_upper_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 2]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn same_axes(&self, other: &Self) -> bool {
        self.n_mels == other.n_mels
            && self.n_frames == other.n_frames
            && self.freq_axis == other.freq_axis
            && self.time_axis == other.time_axis
    }
}

/// Triangular filterbank weights, `n_mels` rows of `n_bins` each.
fn filterbank(edges: &[f64], n_bins: usize, bin_hz: f64) -> Vec<Vec<f64>> {
    (0..edges.len() - 2)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Computes the `n_mels × n_frames` dB mel-spectrogram of a segment.
///
/// The hop is `floor(len / n_frames)` and the window the next power of two
/// at or above twice the hop; the signal is zero-padded at the end so exactly
/// `n_frames` frames fit. Power is referenced to the grid maximum and
/// floored at `floor_db`.
pub fn mel_spectrogram(segment: &CallSegment, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let clip = &segment.clip;
    let rate = clip.sample_rate as f64;
    let n = clip.samples.len();
    if cfg.n_mels == 0 || cfg.n_frames == 0 || n < cfg.n_frames {
        return Err(Error::InvalidParameter(format!(
            "segment of {n} samples cannot yield {} frames",
            cfg.n_frames
        )));
    }
    let fmax = cfg.fmax.unwrap_or(rate / 2.0);
    if !(cfg.fmin >= 0.0 && cfg.fmin < fmax && fmax <= rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "mel range ({}, {fmax}) invalid",
            cfg.fmin
        )));
    }
    let hop = n / cfg.n_frames;
    let win = (2 * hop).next_power_of_two();
    let needed = (cfg.n_frames - 1) * hop + win;
    let mut padded = clip.samples.clone();
    padded.resize(needed.max(n), 0.0);

    let (mel_lo, mel_hi) = (hz_to_mel(cfg.fmin, cfg.scale), hz_to_mel(fmax, cfg.scale));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| {
            mel_to_hz(
                mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64,
                cfg.scale,
            )
        })
        .collect();
    let n_bins = win / 2 + 1;
    let weights = filterbank(&edges, n_bins, rate / win as f64);

    let window = hann(win);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(win);
    let mut buf = vec![Complex64::new(0.0, 0.0); win];
    let mut power = vec![0.0; cfg.n_mels * cfg.n_frames];
    let mut spectrum = vec![0.0; n_bins];
    for t in 0..cfg.n_frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in spectrum.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for (m, w) in weights.iter().enumerate() {
            power[m * cfg.n_frames + t] = w.iter().zip(&spectrum).map(|(a, b)| a * b).sum();
        }
    }

    let peak = power.iter().copied().fold(0.0f64, f64::max);
    if !(peak > 0.0) {
        return Err(Error::SilentSegment(format!(
            "{} has no spectral energy",
            segment.source_id
        )));
    }
    let values = power
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                cfg.floor_db
            } else {
                (10.0 * (p / peak).log10()).max(cfg.floor_db)
            }
        })
        .collect();
    Ok(MelSpectrogram {
        values,
        n_mels: cfg.n_mels,
        n_frames: cfg.n_frames,
        freq_axis: edges[1..=cfg.n_mels].to_vec(),
        time_axis: (0..cfg.n_frames)
            .map(|t| (t * hop) as f64 / rate + win as f64 / (2.0 * rate))
            .collect(),
        edges_hz: edges,
        floor_db: cfg.floor_db,
    })
}
