//! Bandpass filtering, spectral gating, call segmentation and mel-spectrograms.

mod bandpass;
mod denoise;
mod mel;
mod segment;

pub use bandpass::{bandpass, ButterworthBandpass};
pub use denoise::{denoise, DenoiseConfig};
pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelConfig, MelScale, MelSpectrogram};
pub use segment::{segment_call, CallSegment, SegmentConfig};
