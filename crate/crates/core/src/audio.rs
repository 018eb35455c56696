//! Loading, resampling and level normalization of field recordings.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::rms;
use crate::error::{Error, Result};

/// Sample rate every recording is brought to before analysis.
pub const PIPELINE_RATE: u32 = 22_050;

/// A mono waveform with its sample rate and the recording it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("clip has no samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}

/// Reads a PCM WAV file, mean-mixing channels to mono and scaling to [-1, 1].
pub fn load_recording(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::Unreadable {
            path: path.to_path_buf(),
            source,
        },
        other => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "zero channels".into(),
        });
    }
    let bad = |e: hound::Error| Error::UnsupportedEncoding {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(bad)?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(bad)?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    };
    if interleaved.len() < channels {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, source_id)
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(format!("writing {}", path.display()), source),
        other => Error::Data(format!("writing {}: {other}", path.display())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        writer.write_sample(s as f32).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

/// Zero crossings of the interpolation kernel on each side.
const SINC_ZERO_CROSSINGS: f64 = 64.0;
/// Passband edge as a fraction of the lower Nyquist rate.
const SINC_ROLLOFF: f64 = 0.95;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Blackman-windowed sinc evaluated at `d` input samples from the center.
fn sinc_kernel(d: f64, cutoff: f64, half_width: f64) -> f64 {
    if d.abs() >= half_width {
        return 0.0;
    }
    let x = 2.0 * cutoff * d;
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    let u = d / half_width;
    let w = 0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos();
    2.0 * cutoff * sinc * w
}

/// Band-limited resampling by windowed-sinc interpolation.
///
/// A clip already at `target_rate` is returned unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidParameter("target rate must be positive".into()));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(clip.sample_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = clip.sample_rate as u64 / g;
    let n_in = clip.samples.len();
    let n_out = ((n_in as u64 * up) as f64 / down as f64).round().max(1.0) as usize;

    // cycles per input sample
    let cutoff = 0.5 * (up as f64 / down as f64).min(1.0) * SINC_ROLLOFF;
    let half_width = SINC_ZERO_CROSSINGS / (2.0 * cutoff);
    let reach = half_width.ceil() as i64;
    let taps = (2 * reach + 1) as usize;

    // One kernel row per fractional phase when the phase count is small.
    let table: Option<Vec<Vec<f64>>> = (up <= 4096).then(|| {
        (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                (0..taps)
                    .map(|i| sinc_kernel(frac - (i as i64 - reach) as f64, cutoff, half_width))
                    .collect()
            })
            .collect()
    });

    let x = &clip.samples;
    let out: Vec<f64> = (0..n_out as u64)
        .map(|j| {
            let pos = j * down;
            let base = (pos / up) as i64;
            let phase = pos % up;
            let mut acc = 0.0;
            for i in 0..taps {
                let k = base + i as i64 - reach;
                if k < 0 || k >= n_in as i64 {
                    continue;
                }
                let h = match &table {
                    Some(t) => t[phase as usize][i],
                    None => sinc_kernel(phase as f64 / up as f64 - (i as i64 - reach) as f64, cutoff, half_width),
                };
                acc += x[k as usize] * h;
            }
            acc
        })
        .collect();
    AudioClip::new(out, target_rate, clip.source_id.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    #[default]
    Rms,
    Peak,
}

/// Scales a clip so its RMS (or peak) level sits at `target_db` dBFS.
pub fn normalize_amplitude(clip: &AudioClip, target_db: f64, mode: LevelMode) -> Result<AudioClip> {
    let level = match mode {
        LevelMode::Rms => clip.rms(),
        LevelMode::Peak => clip.samples.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    if level == 0.0 || !level.is_finite() {
        return Err(Error::SilentSegment(format!(
            "{} has no energy to normalize",
            clip.source_id
        )));
    }
    let gain = 10f64.powf(target_db / 20.0) / level;
    Ok(clip.with_samples(clip.samples.iter().map(|v| v * gain).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, n: usize, amp: f64) -> AudioClip {
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(s, rate, "sine").unwrap()
    }

    /// Frequency of the largest DFT magnitude, by direct summation.
    fn dft_peak_hz(x: &[f64], rate: u32) -> (f64, f64) {
        let n = x.len();
        let mut best = (0usize, 0.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ph = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            let m = re.hypot(im);
            if m > best.1 {
                best = (k, m);
            }
        }
        (best.0 as f64 * rate as f64 / n as f64, rate as f64 / n as f64)
    }

    #[test]
    fn halves_length_at_two_to_one() {
        let clip = sine(440.0, 44_100, 44_100, 0.5);
        let out = resample(&clip, 22_050).unwrap();
        assert_eq!(out.samples.len(), 22_050);
        assert_eq!(out.sample_rate, 22_050);
    }

    #[test]
    fn matching_rate_is_identity() {
        let clip = sine(440.0, 22_050, 1000, 0.5);
        let once = resample(&clip, 22_050).unwrap();
        assert_eq!(once, clip);
        assert_eq!(resample(&once, 22_050).unwrap(), once);
    }

    #[test]
    fn tone_frequency_survives_downsampling() {
        let n_in = 4096 * 2;
        let clip = sine(440.0, 44_100, n_in, 0.5);
        let (f_in, _) = dft_peak_hz(&clip.samples[..4096], 44_100);
        let out = resample(&clip, 22_050).unwrap();
        // skip the kernel's edge transient
        let (f_out, bin) = dft_peak_hz(&out.samples[64..64 + 2048], 22_050);
        assert!((f_in - 440.0).abs() <= 44_100.0 / 4096.0);
        assert!((f_out - 440.0).abs() <= bin, "{f_out}");
    }

    #[test]
    fn high_tones_survive_and_images_are_suppressed() {
        for &f in &[1000.0, 4000.0, 9000.0, 9900.0] {
            let clip = sine(f, 44_100, 8192, 0.5);
            let out = resample(&clip, 22_050).unwrap();
            let (peak, bin) = dft_peak_hz(&out.samples[100..100 + 1024], 22_050);
            assert!((peak - f).abs() <= bin, "{f} -> {peak}");
        }
        // 15 kHz is above the new Nyquist and must not fold back
        let clip = sine(15_000.0, 44_100, 8192, 0.5);
        let out = resample(&clip, 22_050).unwrap();
        let interior = &out.samples[200..out.samples.len() - 200];
        assert!(rms(interior) < 1e-3 * 0.5, "{}", rms(interior));
    }

    #[test]
    fn upsampling_preserves_duration() {
        let clip = sine(300.0, 16_000, 16_000, 0.5);
        let out = resample(&clip, 22_050).unwrap();
        assert!((out.duration_s() - clip.duration_s()).abs() <= 1.0 / 22_050.0);
    }

    #[test]
    fn rms_normalization_hits_target() {
        let clip = sine(440.0, 22_050, 22_050, 1.0);
        let out = normalize_amplitude(&clip, -20.0, LevelMode::Rms).unwrap();
        assert!((out.rms() - 0.1).abs() / 0.1 < 1e-4);
        let again = normalize_amplitude(&out, -20.0, LevelMode::Rms).unwrap();
        for (a, b) in out.samples.iter().zip(&again.samples) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn dc_normalizes_to_its_magnitude() {
        let clip = AudioClip::new(vec![0.5; 100], 22_050, "dc").unwrap();
        let out = normalize_amplitude(&clip, -20.0, LevelMode::Rms).unwrap();
        assert!(out.samples.iter().all(|v| (v - 0.1).abs() < 1e-12));
    }

    #[test]
    fn peak_mode_scales_peak() {
        let clip = AudioClip::new(vec![0.0, 0.25, -0.5], 22_050, "p").unwrap();
        let out = normalize_amplitude(&clip, -6.0, LevelMode::Peak).unwrap();
        assert!((out.samples[2].abs() - 10f64.powf(-0.3)).abs() < 1e-12);
    }

    #[test]
    fn silent_clip_cannot_be_normalized() {
        let clip = AudioClip::new(vec![0.0; 10], 22_050, "z").unwrap();
        assert!(matches!(
            normalize_amplitude(&clip, -20.0, LevelMode::Rms),
            Err(Error::SilentSegment(_))
        ));
    }
}
