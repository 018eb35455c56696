//! Grayscale PNG renders of spectrograms, low frequencies at the bottom.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use crate::annotations::Detection;
use crate::audio::AudioClip;
use crate::dsp::Stft;
use crate::error::{Error, Result};
use crate::preprocess::MelSpectrogram;

fn to_pixel(v: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_err(path: &Path, e: image::ImageError) -> Error {
    Error::Data(format!("writing {}: {e}", path.display()))
}

/// One pixel per cell, floor black and 0 dB white.
pub fn save_mel_png(mel: &MelSpectrogram, path: &Path) -> Result<()> {
    let (w, h) = (mel.n_frames as u32, mel.n_mels as u32);
    let img = ImageBuffer::from_fn(w, h, |x, y| {
        let band = (h - 1 - y) as usize;
        Luma([to_pixel(mel.get(band, x as usize), mel.floor_db, 0.0)])
    });
    img.save(path).map_err(|e| save_err(path, e))
}

/// Linear-frequency dB spectrogram of a whole recording with detections
/// tinted along the top edge: red for positive, blue for negative.
pub fn save_detection_png(clip: &AudioClip, detections: &[Detection], path: &Path) -> Result<()> {
    const WINDOW: usize = 1024;
    const HOP: usize = 256;
    const MAX_WIDTH: usize = 4000;
    const RANGE_DB: f64 = 80.0;
    let spec = Stft::new(WINDOW, HOP).analyze(&clip.samples);
    let mags = spec.magnitudes();
    let n_frames = mags.len();
    if n_frames == 0 {
        return Err(Error::TooShort {
            got: clip.samples.len(),
            need: WINDOW,
        });
    }
    let stride = n_frames.div_ceil(MAX_WIDTH);
    let width = n_frames.div_ceil(stride);
    let height = spec.n_bins();
    let db: Vec<Vec<f64>> = (0..width)
        .map(|c| {
            let frames = &mags[c * stride..((c + 1) * stride).min(n_frames)];
            (0..height)
                .map(|k| {
                    let m = frames.iter().map(|f| f[k]).fold(0.0f64, f64::max);
                    20.0 * m.max(1e-12).log10()
                })
                .collect()
        })
        .collect();
    let top = db.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let band_px = (height / 40).max(3) as u32;
    let secs_per_col = (stride * HOP) as f64 / clip.sample_rate as f64;
    let mut img: RgbImage = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let v = to_pixel(db[x as usize][height - 1 - y as usize], top - RANGE_DB, top);
        Rgb([v, v, v])
    });
    for d in detections {
        let c0 = (d.start_s / secs_per_col).floor().max(0.0) as u32;
        let c1 = ((d.end_s / secs_per_col).ceil() as u32).min(width as u32);
        let color = if d.decision.is_positive() {
            Rgb([220, 30, 30])
        } else {
            Rgb([40, 90, 220])
        };
        for x in c0..c1 {
            for y in 0..band_px.min(height as u32) {
                img.put_pixel(x, y, color);
            }
        }
    }
    img.save(path).map_err(|e| save_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Decision;

    #[test]
    fn mel_png_has_grid_size() {
        let n = 8;
        let mel = MelSpectrogram {
            values: (0..n * n).map(|i| -((i % 40) as f64)).collect(),
            n_mels: n,
            n_frames: n,
            freq_axis: (0..n).map(|i| i as f64).collect(),
            time_axis: (0..n).map(|i| i as f64).collect(),
            edges_hz: (0..n + 2).map(|i| i as f64).collect(),
            floor_db: -40.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_mel_png(&mel, &p).unwrap();
        let img = image::open(&p).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (8, 8));
        // band 0, frame 0 is 0 dB and sits bottom-left
        assert_eq!(img.get_pixel(0, 7)[0], 255);
    }

    #[test]
    fn detection_png_marks_events() {
        let clip = AudioClip::new((0..22050).map(|i| (i as f64 * 0.1).sin()).collect(), 22050, "r").unwrap();
        let d = Detection {
            recording: "r".into(),
            start_s: 0.25,
            end_s: 0.5,
            score: 0.9,
            decision: Decision::Positive,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        save_detection_png(&clip, &[d], &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        let x = (0.3 * 22050.0 / 256.0) as u32;
        assert_eq!(img.get_pixel(x, 0).0, [220, 30, 30]);
    }
}
