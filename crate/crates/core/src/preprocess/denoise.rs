use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::Stft;
use crate::error::{Error, Result};

/// Stationary spectral-gating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub window: usize,
    pub hop: usize,
    /// Gate sits this many standard deviations above the per-bin mean (in dB).
    pub n_std: f64,
    /// Mask smoothing extent in frames.
    pub smooth_frames: usize,
    /// Mask smoothing extent in frequency bins.
    pub smooth_bins: usize,
    /// 1.0 removes gated bins entirely.
    pub prop_decrease: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            window: 2048,
            hop: 512,
            n_std: 1.5,
            smooth_frames: 3,
            smooth_bins: 3,
            prop_decrease: 1.0,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 4 || self.hop == 0 || self.hop > self.window {
            return Err(Error::InvalidParameter(format!(
                "denoise window {} / hop {} invalid",
                self.window, self.hop
            )));
        }
        if self.smooth_frames == 0 || self.smooth_bins == 0 {
            return Err(Error::InvalidParameter("mask smoothing extents must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.prop_decrease) || !self.n_std.is_finite() {
            return Err(Error::InvalidParameter("prop_decrease must be in [0, 1]".into()));
        }
        Ok(())
    }
}

const MIN_AMPLITUDE: f64 = 1e-10;

/// Stationary spectral gating.
///
/// Each frequency bin's noise gate is the mean plus `n_std` standard
/// deviations of its dB magnitude over the whole clip. Bins above their gate
/// keep full gain, the rest are attenuated by `prop_decrease`, and the binary
/// mask is box-smoothed in time and frequency before resynthesis.
pub fn denoise(clip: &AudioClip, cfg: &DenoiseConfig) -> Result<AudioClip> {
    cfg.validate()?;
    if clip.samples.len() < cfg.window {
        return Err(Error::TooShort {
            got: clip.samples.len(),
            need: cfg.window,
        });
    }
    let stft = Stft::new(cfg.window, cfg.hop);
    let mut spec = stft.analyze(&clip.samples);
    let n_frames = spec.frames.len();
    let n_bins = spec.n_bins();

    let db: Vec<Vec<f64>> = spec
        .frames
        .iter()
        .map(|f| f.iter().map(|c| 20.0 * c.norm().max(MIN_AMPLITUDE).log10()).collect())
        .collect();

    let gate: Vec<f64> = (0..n_bins)
        .map(|k| {
            let mean = db.iter().map(|f| f[k]).sum::<f64>() / n_frames as f64;
            let var = db.iter().map(|f| (f[k] - mean).powi(2)).sum::<f64>() / n_frames as f64;
            mean + cfg.n_std * var.sqrt()
        })
        .collect();

    let mask: Vec<Vec<f64>> = db
        .iter()
        .map(|f| {
            f.iter()
                .zip(&gate)
                .map(|(v, g)| if v > g { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let smoothed = box_smooth(&mask, cfg.smooth_frames, cfg.smooth_bins);

    for (frame, gains) in spec.frames.iter_mut().zip(&smoothed) {
        for (c, m) in frame.iter_mut().zip(gains) {
            *c *= 1.0 - cfg.prop_decrease * (1.0 - m);
        }
    }
    Ok(clip.with_samples(stft.synthesize(&spec)))
}

/// Mean over a centered `frames × bins` neighborhood, shrinking at the edges.
#[allow(clippy::needless_range_loop)]
fn box_smooth(mask: &[Vec<f64>], frames: usize, bins: usize) -> Vec<Vec<f64>> {
    let n_t = mask.len();
    let n_k = mask.first().map_or(0, Vec::len);
    let (rt, rk) = (frames / 2, bins / 2);
    let mut out = vec![vec![0.0; n_k]; n_t];
    for t in 0..n_t {
        let (t0, t1) = (t.saturating_sub(rt), (t + frames - rt).min(n_t));
        for k in 0..n_k {
            let (k0, k1) = (k.saturating_sub(rk), (k + bins - rk).min(n_k));
            let mut acc = 0.0;
            for row in &mask[t0..t1] {
                acc += row[k0..k1].iter().sum::<f64>();
            }
            out[t][k] = acc / ((t1 - t0) * (k1 - k0)) as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const FS: u32 = 22_050;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn stationary_white_noise_is_suppressed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 0.01).unwrap(); // -40 dBFS RMS
        let x: Vec<f64> = (0..5 * FS as usize).map(|_| normal.sample(&mut rng)).collect();
        let clip = AudioClip::new(x, FS, "noise").unwrap();
        let out = denoise(&clip, &DenoiseConfig::default()).unwrap();
        assert_eq!(out.samples.len(), clip.samples.len());
        let drop = db(clip.rms()) - db(out.rms());
        assert!(drop >= 6.0, "only {drop:.2} dB");
    }

    #[test]
    fn clean_tone_call_is_preserved() {
        // 0.5 s tone at -20 dBFS RMS centered in 2 s of digital silence
        let n = 2 * FS as usize;
        let amp = 0.1 * 2f64.sqrt();
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FS as f64;
                if (0.75..1.25).contains(&t) {
                    amp * (2.0 * PI * 400.0 * t).sin()
                } else {
                    0.0
                }
            })
            .collect();
        let clip = AudioClip::new(x, FS, "tone").unwrap();
        let out = denoise(&clip, &DenoiseConfig::default()).unwrap();
        let change = (db(out.rms()) - db(clip.rms())).abs();
        assert!(change <= 3.0, "{change:.2} dB");
    }

    #[test]
    fn silence_stays_silent() {
        let clip = AudioClip::new(vec![0.0; 4 * 2048], FS, "z").unwrap();
        let out = denoise(&clip, &DenoiseConfig::default()).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_clip_is_rejected() {
        let clip = AudioClip::new(vec![0.1; 1000], FS, "s").unwrap();
        assert!(matches!(
            denoise(&clip, &DenoiseConfig::default()),
            Err(Error::TooShort { got: 1000, need: 2048 })
        ));
    }

    #[test]
    fn smoothing_shrinks_at_edges() {
        let mask = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let s = box_smooth(&mask, 3, 3);
        assert!((s[0][0] - 0.25).abs() < 1e-12);
        assert!((s[1][1] - 0.25).abs() < 1e-12);
    }
}
