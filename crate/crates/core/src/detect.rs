//! Class-agnostic call event detection from Morlet wavelet features.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::Stft;
use crate::error::{Error, Result};

/// Nondimensional frequency of the Morlet wavelet.
pub const MORLET_OMEGA0: f64 = 6.0;

/// Center frequency of the Morlet wavelet in cycles per unit scale.
pub fn morlet_center_frequency() -> f64 {
    MORLET_OMEGA0 / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_feature: f64,
}

impl DetectionEvent {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub values: Vec<f64>,
    pub sample_rate: u32,
}

impl FeatureSeries {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// How the event threshold relates to the mean smoothed feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `(1 + frac) * mean`
    #[default]
    AboveMean,
    /// `frac * mean`
    FractionOfMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventConfig {
    pub floor_hz: f64,
    pub ceil_hz: f64,
    pub stft_window: usize,
    pub stft_hop: usize,
    pub n_scales: usize,
    pub window_s: f64,
    pub threshold_frac: f64,
    pub threshold_mode: ThresholdMode,
    pub min_duration_s: f64,
    pub merge_gap_s: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            floor_hz: 20.0,
            ceil_hz: 8000.0,
            stft_window: 2048,
            stft_hop: 512,
            n_scales: 20,
            window_s: 0.15,
            threshold_frac: 0.10,
            threshold_mode: ThresholdMode::AboveMean,
            min_duration_s: 0.5,
            merge_gap_s: 0.1,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("event detector: {m}")));
        if !(self.floor_hz > 0.0 && self.floor_hz < self.ceil_hz) {
            return bad("need 0 < floor_hz < ceil_hz");
        }
        if self.stft_window < 4 || self.stft_hop == 0 {
            return bad("STFT window/hop invalid");
        }
        if self.n_scales == 0 {
            return bad("n_scales must be ≥ 1");
        }
        if !(self.window_s > 0.0) {
            return bad("smoothing window must be positive");
        }
        if !(self.threshold_frac >= 0.0) || !(self.min_duration_s >= 0.0) || !(self.merge_gap_s >= 0.0) {
            return bad("threshold, minimum duration and merge gap must be non-negative");
        }
        Ok(())
    }
}

/// Lowest and highest STFT bins whose time-averaged magnitude exceeds 10% of
/// the strongest bin, clamped to `[floor_hz, ceil_hz]`.
pub fn significant_band(clip: &AudioClip, cfg: &EventConfig) -> Result<(f64, f64)> {
    if clip.samples.len() < cfg.stft_window {
        return Err(Error::TooShort {
            got: clip.samples.len(),
            need: cfg.stft_window,
        });
    }
    let spec = Stft::new(cfg.stft_window, cfg.stft_hop).analyze(&clip.samples);
    let n_bins = spec.n_bins();
    let mut avg = vec![0.0; n_bins];
    for frame in &spec.frames {
        for (a, c) in avg.iter_mut().zip(frame) {
            *a += c.norm();
        }
    }
    let peak = avg.iter().copied().fold(0.0f64, f64::max);
    let fallback = (cfg.floor_hz, cfg.ceil_hz);
    if !(peak > 0.0) {
        return Ok(fallback);
    }
    let significant: Vec<usize> = (0..n_bins).filter(|&k| avg[k] > 0.1 * peak).collect();
    let bin_hz = clip.sample_rate as f64 / cfg.stft_window as f64;
    let (lo, hi) = match (significant.first(), significant.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Ok(fallback),
    };
    let (lo, hi) = if lo == hi {
        (lo.saturating_sub(1), (hi + 1).min(n_bins - 1))
    } else {
        (lo, hi)
    };
    let clamp = |f: f64| f.clamp(cfg.floor_hz, cfg.ceil_hz);
    let (fmin, fmax) = (clamp(lo as f64 * bin_hz), clamp(hi as f64 * bin_hz));
    if fmin < fmax {
        Ok((fmin, fmax))
    } else {
        Ok(fallback)
    }
}

/// Center frequencies from `fmax` down to `fmin`, log-spaced.
pub fn scale_frequencies(fmin: f64, fmax: f64, n_scales: usize) -> Vec<f64> {
    if n_scales == 1 {
        return vec![(fmin * fmax).sqrt()];
    }
    (0..n_scales)
        .map(|i| fmax * (fmin / fmax).powf(i as f64 / (n_scales - 1) as f64))
        .collect()
}

/// Sum over log-spaced Morlet scales of the CWT coefficient magnitudes.
///
/// The transform runs in the frequency domain with an analytic Morlet whose
/// spectral peak is 2, so a unit-amplitude tone at a scale's center
/// frequency yields coefficients of magnitude 1 at that scale.
pub fn cwt_features(clip: &AudioClip, fmin: f64, fmax: f64, n_scales: usize) -> Result<FeatureSeries> {
    let rate = clip.sample_rate as f64;
    if !(fmin > 0.0 && fmin < fmax && fmax <= rate / 2.0) || n_scales == 0 {
        return Err(Error::InvalidParameter(format!(
            "wavelet band ({fmin}, {fmax}) invalid for {rate} Hz"
        )));
    }
    let n = clip.samples.len();
    let scales: Vec<f64> = scale_frequencies(fmin, fmax, n_scales)
        .into_iter()
        .map(|f| morlet_center_frequency() * rate / f)
        .collect();
    let widest = scales.iter().copied().fold(0.0, f64::max);
    let len = (n + (8.0 * widest).ceil() as usize).next_power_of_two();

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut spectrum: Vec<Complex64> = clip
        .samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    forward.process(&mut spectrum);

    let magnitudes = |scale: f64| -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for k in 1..=len / 2 {
            let omega = 2.0 * PI * k as f64 / len as f64;
            let g = 2.0 * (-0.5 * (scale * omega - MORLET_OMEGA0).powi(2)).exp();
            if g > 1e-300 {
                buf[k] = spectrum[k] * g;
            }
        }
        inverse.process(&mut buf);
        buf[..n].iter().map(|c| c.norm() / len as f64).collect()
    };

    let mut values = vec![0.0; n];
    let chunk = rayon::current_num_threads().max(1);
    for group in scales.chunks(chunk) {
        let parts: Vec<Vec<f64>> = group.par_iter().map(|&s| magnitudes(s)).collect();
        for part in parts {
            for (acc, v) in values.iter_mut().zip(part) {
                *acc += v;
            }
        }
    }
    Ok(FeatureSeries {
        values,
        sample_rate: clip.sample_rate,
    })
}

/// Centered moving average over `round(window_s * rate)` samples; windows
/// shrink at the series edges.
pub fn smooth(features: &FeatureSeries, window_s: f64) -> Result<FeatureSeries> {
    if !(window_s > 0.0) {
        return Err(Error::InvalidParameter("smoothing window must be positive".into()));
    }
    let n = features.values.len();
    let w = ((window_s * features.sample_rate as f64).round() as usize).max(1);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in &features.values {
        acc += v;
        prefix.push(acc);
    }
    let before = (w - 1) / 2;
    let after = w - 1 - before;
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    Ok(FeatureSeries {
        values,
        sample_rate: features.sample_rate,
    })
}

/// Runs above the threshold, merged across short gaps, minus short events.
pub fn detect_events(features: &FeatureSeries, cfg: &EventConfig) -> Vec<DetectionEvent> {
    let mean = features.mean();
    let threshold = match cfg.threshold_mode {
        ThresholdMode::AboveMean => (1.0 + cfg.threshold_frac) * mean,
        ThresholdMode::FractionOfMean => cfg.threshold_frac * mean,
    };
    let rate = features.sample_rate as f64;
    let v = &features.values;

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &x) in v.iter().enumerate() {
        match (x > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, v.len()));
    }

    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(last) if ((run.0 - last.1) as f64 / rate) < cfg.merge_gap_s => last.1 = run.1,
            _ => merged.push(run),
        }
    }

    merged
        .into_iter()
        .filter(|&(s, e)| (e - s) as f64 / rate >= cfg.min_duration_s)
        .map(|(s, e)| DetectionEvent {
            start_s: s as f64 / rate,
            end_s: e as f64 / rate,
            peak_feature: v[s..e].iter().copied().fold(0.0, f64::max),
        })
        .collect()
}

/// Significant band, wavelet features, smoothing and thresholding in one go.
pub fn detect_in_clip(clip: &AudioClip, cfg: &EventConfig) -> Result<Vec<DetectionEvent>> {
    cfg.validate()?;
    let (fmin, fmax) = significant_band(clip, cfg)?;
    let raw = cwt_features(clip, fmin, fmax, cfg.n_scales)?;
    let smoothed = smooth(&raw, cfg.window_s)?;
    Ok(detect_events(&smoothed, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    const FS: u32 = 22_050;

    fn series(values: Vec<f64>, rate: u32) -> FeatureSeries {
        FeatureSeries {
            values,
            sample_rate: rate,
        }
    }

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, FS, "c").unwrap()
    }

    fn tone_at(f: f64, n: usize, active: impl Fn(f64) -> bool) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / FS as f64;
                if active(t) {
                    0.5 * (2.0 * PI * f * t).sin()
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn tone_band_brackets_tone() {
        let c = clip(tone_at(500.0, 2 * FS as usize, |_| true));
        let (lo, hi) = significant_band(&c, &EventConfig::default()).unwrap();
        let bin = FS as f64 / 2048.0;
        // Hann main lobe spans two bins each side of the peak
        assert!(lo <= 500.0 && 500.0 <= hi, "{lo}..{hi}");
        assert!(500.0 - lo <= 2.0 * bin && hi - 500.0 <= 2.0 * bin, "{lo}..{hi}");
    }

    #[test]
    fn noise_and_silence_fall_back_to_clamps() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let noise = clip((0..4 * FS as usize).map(|_| normal.sample(&mut rng)).collect());
        let cfg = EventConfig::default();
        assert_eq!(significant_band(&noise, &cfg).unwrap(), (20.0, 8000.0));
        let silence = clip(vec![0.0; FS as usize]);
        assert_eq!(significant_band(&silence, &cfg).unwrap(), (20.0, 8000.0));
        assert!(significant_band(&clip(vec![0.0; 100]), &cfg).is_err());
    }

    #[test]
    fn scales_are_log_spaced_from_the_top() {
        let f = scale_frequencies(100.0, 1600.0, 5);
        let expect = [1600.0, 800.0, 400.0, 200.0, 100.0];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cwt_of_silence_is_zero_and_linear_in_gain() {
        let z = cwt_features(&clip(vec![0.0; 5000]), 200.0, 2000.0, 20).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let x = tone_at(700.0, 6000, |t| t > 0.1);
        let a = cwt_features(&clip(x.clone()), 200.0, 2000.0, 20).unwrap();
        let b = cwt_features(&clip(x.iter().map(|v| 2.0 * v).collect()), 200.0, 2000.0, 20).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert_eq!(2.0 * p, *q);
        }
    }

    #[test]
    fn tone_features_dominate_silence() {
        let (fmin, fmax) = (300.0f64, 1200.0);
        let fmid = (fmin * fmax).sqrt();
        let n = 3 * FS as usize;
        let x = tone_at(fmid, n, |t| (1.0..2.0).contains(&t));
        let f = cwt_features(&clip(x), fmin, fmax, 20).unwrap();
        let at = |t: f64| f.values[(t * FS as f64) as usize];
        let quiet = at(0.3).max(at(2.7));
        for t in [1.2, 1.5, 1.8] {
            assert!(at(t) > 10.0 * quiet, "{} vs {}", at(t), quiet);
        }
    }

    #[test]
    fn unit_tone_at_scale_center_has_unit_coefficient() {
        let x = tone_at(1000.0, 2 * FS as usize, |_| true);
        let f = cwt_features(&clip(x), 999.0, 1001.0, 1).unwrap();
        let mid = f.values[FS as usize];
        assert!((mid - 0.5).abs() < 1e-3, "{mid}");
    }

    #[test]
    fn rejects_invalid_band() {
        let c = clip(vec![0.0; 100]);
        assert!(cwt_features(&c, 500.0, 200.0, 20).is_err());
        assert!(cwt_features(&c, 0.0, 200.0, 20).is_err());
        assert!(cwt_features(&c, 100.0, 20_000.0, 20).is_err());
    }

    #[test]
    fn smoothing_constants_impulses_and_ramps() {
        let c = smooth(&series(vec![3.0; 1000], 100), 0.15).unwrap();
        assert!(c.values.iter().all(|&v| (v - 3.0).abs() < 1e-12));

        let mut imp = vec![0.0; 1001];
        imp[500] = 1.0;
        let s = smooth(&series(imp, 100), 0.15).unwrap();
        let w = 15;
        let plateau: Vec<usize> = (0..1001).filter(|&i| s.values[i] > 0.0).collect();
        assert_eq!(plateau.len(), w);
        assert!(plateau.iter().all(|&i| (s.values[i] - 1.0 / w as f64).abs() < 1e-12));

        let ramp: Vec<f64> = (0..1000).map(|i| 0.5 * i as f64 + 2.0).collect();
        let r = smooth(&series(ramp.clone(), 100), 0.15).unwrap();
        for (v, x) in r.values[10..990].iter().zip(&ramp[10..990]) {
            assert!((v - x).abs() < 1e-9);
        }
        assert_eq!(r.values.len(), 1000);
    }

    fn bursts(rate: u32, secs: f64, spans: &[(f64, f64)]) -> FeatureSeries {
        let n = (secs * rate as f64) as usize;
        series(
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    if spans.iter().any(|&(a, b)| t >= a && t < b) {
                        10.0
                    } else {
                        1.0
                    }
                })
                .collect(),
            rate,
        )
    }

    #[test]
    fn constant_features_have_no_events() {
        assert!(detect_events(&series(vec![2.0; 5000], 1000), &EventConfig::default()).is_empty());
    }

    #[test]
    fn single_burst_is_found() {
        let f = bursts(1000, 10.0, &[(4.0, 5.0)]);
        let ev = detect_events(&f, &EventConfig::default());
        assert_eq!(ev.len(), 1);
        let inter = ev[0].end_s.min(5.0) - ev[0].start_s.max(4.0);
        let union = ev[0].end_s.max(5.0) - ev[0].start_s.min(4.0);
        assert!(inter / union >= 0.7);
        assert_eq!(ev[0].peak_feature, 10.0);
    }

    #[test]
    fn close_bursts_merge_and_far_bursts_drop() {
        let cfg = EventConfig::default();
        let near = detect_events(&bursts(1000, 10.0, &[(4.0, 4.3), (4.35, 4.65)]), &cfg);
        assert_eq!(near.len(), 1);
        assert!(near[0].duration_s() >= 0.5);
        let far = detect_events(&bursts(1000, 10.0, &[(3.0, 3.3), (4.3, 4.6)]), &cfg);
        assert!(far.is_empty());
    }

    #[test]
    fn fraction_of_mean_mode_sits_below_mean() {
        let cfg = EventConfig {
            threshold_mode: ThresholdMode::FractionOfMean,
            ..EventConfig::default()
        };
        let ev = detect_events(&series(vec![2.0; 5000], 1000), &cfg);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].start_s, ev[0].end_s), (0.0, 5.0));
    }
}
