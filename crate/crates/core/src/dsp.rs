//! Shared short-time Fourier machinery.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex spectrogram with centered, zero-padded frames.
///
/// `frames[t][k]` holds bin `k` (0..=window/2) of frame `t`; frame `t` is
/// centered on sample `t * hop`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub frames: Vec<Vec<Complex64>>,
    pub window_len: usize,
    pub hop: usize,
    pub signal_len: usize,
}

impl Spectrum {
    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|c| c.norm()).collect())
            .collect()
    }
}

pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(window_len: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: hann(window_len),
            hop,
            forward: planner.plan_fft_forward(window_len),
            inverse: planner.plan_fft_inverse(window_len),
        }
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    fn n_frames(&self, signal_len: usize) -> usize {
        signal_len / self.hop + 1
    }

    pub fn analyze(&self, signal: &[f64]) -> Spectrum {
        let n = self.window.len();
        let half = n / 2;
        let n_frames = self.n_frames(signal.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut frames = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let center = t * self.hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = (center + i) as isize - half as isize;
                let x = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex64::new(x * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            frames.push(buf[..=half].to_vec());
        }
        Spectrum {
            frames,
            window_len: n,
            hop: self.hop,
            signal_len: signal.len(),
        }
    }

    /// Weighted overlap-add inverse; returns exactly `spec.signal_len` samples.
    pub fn synthesize(&self, spec: &Spectrum) -> Vec<f64> {
        let n = self.window.len();
        let half = n / 2;
        let total = spec.signal_len + n;
        let mut out = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (t, frame) in spec.frames.iter().enumerate() {
            buf[..=half].copy_from_slice(frame);
            for k in 1..(n - half) {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            for i in 0..n {
                let w = self.window[i];
                out[start + i] += buf[i].re / n as f64 * w;
                norm[start + i] += w * w;
            }
        }
        (0..spec.signal_len)
            .map(|i| {
                let j = i + half;
                if norm[j] > 1e-10 {
                    out[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stft_round_trip_is_identity() {
        let x: Vec<f64> = (0..5000)
            .map(|i| (i as f64 * 0.013).sin() + 0.3 * (i as f64 * 0.31).cos())
            .collect();
        let stft = Stft::new(512, 128);
        let y = stft.synthesize(&stft.analyze(&x));
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn hann_is_periodic() {
        let w = hann(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-12);
        assert!((w[2] - w[6]).abs() < 1e-12);
    }
}
