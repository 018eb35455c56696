use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Prototype order; the bandpass has twice as many poles.
const ORDER: usize = 4;

/// Second-order section `[b0, b1, b2, a1, a2]` with `a0 = 1`.
type Biquad = [f64; 5];

/// Butterworth bandpass as cascaded biquads, applied forward and backward.
#[derive(Debug, Clone)]
pub struct ButterworthBandpass {
    sections: Vec<Biquad>,
    pad: usize,
}

impl ButterworthBandpass {
    pub fn design(low_hz: f64, high_hz: f64, sample_rate: u32) -> Result<Self> {
        let fs = sample_rate as f64;
        let nyquist = fs / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::InvalidParameter(format!(
                "bandpass needs 0 < low < high < {nyquist} Hz, got ({low_hz}, {high_hz})"
            )));
        }
        // Pre-warped analog band edges for the bilinear transform.
        let w_lo = 2.0 * fs * (PI * low_hz / fs).tan();
        let w_hi = 2.0 * fs * (PI * high_hz / fs).tan();
        let w0 = (w_lo * w_hi).sqrt();
        let bw = w_hi - w_lo;

        let mut sections = Vec::with_capacity(ORDER);
        for k in 0..ORDER / 2 {
            let theta = PI * (2 * k + ORDER + 1) as f64 / (2 * ORDER) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let half = p * (bw / 2.0);
            let disc = (half * half - w0 * w0).sqrt();
            for s in [half + disc, half - disc] {
                let z = (2.0 * fs + s) / (2.0 * fs - s);
                sections.push([1.0, 0.0, -1.0, -2.0 * z.re, z.norm_sqr()]);
            }
        }

        // Unit gain at the digital image of the analog center.
        let wc = 2.0 * (w0 / (2.0 * fs)).atan();
        let zc = Complex64::from_polar(1.0, -wc);
        let response: f64 = sections
            .iter()
            .map(|s| {
                let num = s[0] + s[1] * zc + s[2] * zc * zc;
                let den = 1.0 + s[3] * zc + s[4] * zc * zc;
                (num / den).norm()
            })
            .product();
        let g = response.powf(-1.0 / sections.len() as f64);
        for s in &mut sections {
            s[0] *= g;
            s[1] *= g;
            s[2] *= g;
        }
        let pad = ((3.0 * fs / low_hz).round() as usize).max(3 * (2 * ORDER + 1));
        Ok(Self { sections, pad })
    }

    fn run_forward(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let y = s[0] * *v + z1;
                z1 = s[1] * *v - s[3] * y + z2;
                z2 = s[2] * *v - s[4] * y;
                *v = y;
            }
        }
    }

    /// Zero-phase filtering with odd-symmetric edge extension.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.run_forward(&mut ext);
        ext.reverse();
        self.run_forward(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// 4th-order Butterworth bandpass applied forward-backward.
pub fn bandpass(clip: &AudioClip, low_hz: f64, high_hz: f64) -> Result<AudioClip> {
    let filter = ButterworthBandpass::design(low_hz, high_hz, clip.sample_rate)?;
    Ok(clip.with_samples(filter.filtfilt(&clip.samples)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::rms;

    const FS: u32 = 22_050;

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / FS as f64).sin()).collect()
    }

    fn clip(x: Vec<f64>) -> AudioClip {
        AudioClip::new(x, FS, "t").unwrap()
    }

    /// Magnitude of the DFT of `x` at frequency `f`, by direct summation.
    fn dft_mag(x: &[f64], f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ph = -2.0 * PI * f * t as f64 / FS as f64;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        re.hypot(im)
    }

    fn interior(x: &[f64]) -> &[f64] {
        &x[FS as usize / 2..x.len() - FS as usize / 2]
    }

    #[test]
    fn isolates_in_band_component() {
        let n = 3 * FS as usize;
        let (a, b, c) = (tone(100.0, n), tone(400.0, n), tone(2000.0, n));
        let mix: Vec<f64> = (0..n).map(|i| a[i] + b[i] + c[i]).collect();
        let out = bandpass(&clip(mix.clone()), 155.0, 674.0).unwrap();
        let (xi, yi) = (interior(&mix), interior(&out.samples));
        let kept = |f: f64| dft_mag(yi, f) / dft_mag(xi, f);
        assert!(kept(400.0) >= 0.9, "{}", kept(400.0));
        assert!(kept(100.0) < 0.9 && kept(2000.0) < 0.9);
        assert!(kept(100.0) < 0.1 && kept(2000.0) < 0.1);
    }

    #[test]
    fn zero_in_zero_out() {
        let out = bandpass(&clip(vec![0.0; 4000]), 155.0, 674.0).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn band_center_passes_and_stopband_attenuates() {
        let (lo, hi) = (155.0, 674.0);
        let n = 3 * FS as usize;
        let gain_db = |f: f64| {
            let x = tone(f, n);
            let y = bandpass(&clip(x.clone()), lo, hi).unwrap().samples;
            20.0 * (rms(interior(&y)) / rms(interior(&x))).log10()
        };
        let center = (lo * hi).sqrt();
        assert!(gain_db(center).abs() < 1.0, "{}", gain_db(center));
        assert!(gain_db(lo / 2.0) <= -20.0);
        let upper = (2.0 * hi).min(0.95 * FS as f64 / 2.0);
        assert!(gain_db(upper) <= -20.0);
        // half-power edges, squared by the second pass
        assert!((gain_db(lo) + 6.02).abs() < 0.5, "{}", gain_db(lo));
        assert!((gain_db(hi) + 6.02).abs() < 0.5, "{}", gain_db(hi));
    }

    #[test]
    fn envelope_peak_is_not_shifted() {
        let n = FS as usize;
        let t0 = 0.5;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / FS as f64;
                (-((t - t0) / 0.05).powi(2)).exp() * (2.0 * PI * 400.0 * t).sin()
            })
            .collect();
        let y = bandpass(&clip(x.clone()), 155.0, 674.0).unwrap().samples;
        let envelope_peak = |v: &[f64]| {
            let w = 200;
            let e: Vec<f64> = (0..v.len() - w)
                .map(|i| v[i..i + w].iter().map(|s| s * s).sum())
                .collect();
            e.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
        };
        let shift = envelope_peak(&x).abs_diff(envelope_peak(&y));
        assert!(shift as f64 / FS as f64 <= 1e-3, "{shift} samples");
    }

    #[test]
    fn rejects_bad_bands() {
        let c = clip(vec![0.0; 100]);
        assert!(bandpass(&c, 700.0, 150.0).is_err());
        assert!(bandpass(&c, 0.0, 150.0).is_err());
        assert!(bandpass(&c, 100.0, 12_000.0).is_err());
    }
}
