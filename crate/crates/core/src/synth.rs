//! Seeded synthetic call corpus for demos and tests.
//!
//! Five species with distinct call shapes; species-A and species-B share a
//! frequency band and differ only in temporal structure.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotations::{write_annotations, Annotation};
use crate::audio::{write_wav, AudioClip, PIPELINE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallPattern {
    /// 600 to 450 Hz tonal downsweep with a weak second harmonic.
    Downsweep,
    /// Two short 520 Hz hoots.
    DoubleHoot,
    /// 2 to 3 kHz upsweep.
    Chirp,
    /// Rapid 4 kHz note train.
    Trill,
    /// 1.5 kHz tone with deep vibrato.
    Vibrato,
}

pub const SPECIES: [(&str, CallPattern); 5] = [
    ("species-A", CallPattern::Downsweep),
    ("species-B", CallPattern::DoubleHoot),
    ("species-C", CallPattern::Chirp),
    ("species-D", CallPattern::Trill),
    ("species-E", CallPattern::Vibrato),
];

/// Patterns that appear as unannotated background in every recording.
pub const BACKGROUND: [CallPattern; 3] = [CallPattern::Chirp, CallPattern::Trill, CallPattern::Vibrato];

/// Raised-cosine attack and release over `ramp` samples.
fn envelope(i: usize, n: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let edge = i.min(n - 1 - i);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

/// Sweeps `f(t)` with phase continuity; `f` takes seconds since onset.
fn tone(n: usize, rate: f64, f: impl Fn(f64) -> f64, harmonics: &[(f64, f64)]) -> Vec<f64> {
    let mut phase = 0.0;
    let ramp = (0.02 * rate) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            phase += 2.0 * PI * f(t) / rate;
            let mut s = phase.sin();
            for &(k, g) in harmonics {
                s += g * (k * phase).sin();
            }
            s * envelope(i, n, ramp)
        })
        .collect()
}

/// Per-individual voice: every call of one bird shares it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voice {
    /// Multiplies every frequency.
    pub pitch: f64,
    /// Multiplies every duration.
    pub tempo: f64,
}

impl Voice {
    pub const NEUTRAL: Voice = Voice { pitch: 1.0, tempo: 1.0 };

    /// An individual within `pitch_spread` and `tempo_spread` (fractions)
    /// of the species template.
    pub fn random(rng: &mut impl Rng, pitch_spread: f64, tempo_spread: f64) -> Self {
        let draw = |rng: &mut dyn rand::RngCore, s: f64| if s > 0.0 { 1.0 + rng.gen_range(-s..s) } else { 1.0 };
        Self {
            pitch: draw(rng, pitch_spread),
            tempo: draw(rng, tempo_spread),
        }
    }
}

/// One call in `voice` with small per-call variation; peak near 1.
pub fn render_call(pattern: CallPattern, voice: Voice, rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let r = rate as f64;
    let hz = |rng: &mut dyn rand::RngCore, f: f64| f * voice.pitch * (1.0 + rng.gen_range(-0.015..0.015));
    let secs = |rng: &mut dyn rand::RngCore, d: f64| d * voice.tempo * (1.0 + rng.gen_range(-0.05..0.05));
    let mut out = match pattern {
        CallPattern::Downsweep => {
            let dur = secs(rng, 0.8);
            let (f0, f1) = (hz(rng, 600.0), hz(rng, 450.0));
            tone((dur * r) as usize, r, |t| f0 + (f1 - f0) * t / dur, &[])
        }
        CallPattern::DoubleHoot => {
            let f = hz(rng, 520.0);
            let note = secs(rng, 0.22);
            let gap = secs(rng, 0.18);
            let a = tone((note * r) as usize, r, |_| f, &[]);
            let mut v = a.clone();
            v.extend(std::iter::repeat_n(0.0, (gap * r) as usize));
            v.extend(a);
            v
        }
        CallPattern::Chirp => {
            let dur = secs(rng, 0.6);
            let (f0, f1) = (hz(rng, 2000.0), hz(rng, 3000.0));
            tone((dur * r) as usize, r, |t| f0 + (f1 - f0) * t / dur, &[])
        }
        CallPattern::Trill => {
            let f = hz(rng, 4000.0);
            let notes = rng.gen_range(7..=9);
            let note = (secs(rng, 0.04) * r) as usize;
            let mut v = Vec::new();
            for _ in 0..notes {
                v.extend(tone(note, r, |_| f, &[]));
                v.extend(std::iter::repeat_n(0.0, note));
            }
            v
        }
        CallPattern::Vibrato => {
            let dur = secs(rng, 0.9);
            let fc = hz(rng, 1500.0);
            let depth = 300.0 * voice.pitch;
            let rate_hz = 8.0 / voice.tempo;
            tone(
                (dur * r) as usize,
                r,
                |t| fc + depth * (2.0 * PI * rate_hz * t).sin(),
                &[],
            )
        }
    };
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.iter_mut().for_each(|v| *v /= peak);
    out
}

/// Start and end of a rendered call in seconds.
pub type CallBounds = (f64, f64);

/// A recording with calls placed at fixed onsets over white noise.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub noise_rms: f64,
    /// Pattern, onset in seconds and peak amplitude.
    pub calls: Vec<(CallPattern, f64, f64)>,
    /// Unannotated calls of other birds, same layout as `calls`.
    pub background: Vec<(CallPattern, f64, f64)>,
    /// Voice of the annotated caller; background birds get random voices.
    pub voice: Voice,
}

/// Renders a scene; returned intervals are the exact call extents.
pub fn render_scene(spec: &SceneSpec, rate: u32, rng: &mut impl Rng) -> Result<(Vec<f64>, Vec<CallBounds>)> {
    let n = (spec.duration_s * rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter("scene has no duration".into()));
    }
    let noise =
        Normal::new(0.0, spec.noise_rms.max(0.0)).map_err(|e| Error::InvalidParameter(format!("noise level: {e}")))?;
    let mut x: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    let mut bounds = Vec::new();
    for (k, &(pattern, onset, amp)) in spec.calls.iter().chain(&spec.background).enumerate() {
        let voice = if k < spec.calls.len() {
            spec.voice
        } else {
            Voice::random(rng, 0.05, 0.1)
        };
        let call = render_call(pattern, voice, rate, rng);
        let start = (onset * rate as f64).round() as usize;
        if start + call.len() > n {
            return Err(Error::InvalidParameter(format!(
                "call at {onset} s runs past the scene"
            )));
        }
        for (o, c) in x[start..].iter_mut().zip(&call) {
            *o += amp * c;
        }
        if k < spec.calls.len() {
            bounds.push((start as f64 / rate as f64, (start + call.len()) as f64 / rate as f64));
        }
    }
    Ok((x, bounds))
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub seed: u64,
    pub train_recordings: usize,
    pub test_recordings: usize,
    pub train_calls_per_recording: usize,
    pub test_calls_per_recording: usize,
    /// Spread of individual voices around the species template.
    pub pitch_spread: f64,
    pub tempo_spread: f64,
    /// Unannotated calls of high-pitched species mixed into each recording.
    pub background_calls: usize,
    /// Peak amplitude range of background calls.
    pub background_amp: (f64, f64),
    /// Recording length per annotated call.
    pub slot_s: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            train_recordings: 3,
            test_recordings: 6,
            train_calls_per_recording: 6,
            test_calls_per_recording: 8,
            pitch_spread: 0.02,
            tempo_spread: 0.05,
            background_calls: 0,
            background_amp: (0.03, 0.12),
            slot_s: 2.75,
        }
    }
}

/// Paths of a written corpus; annotation recordings are relative to `root`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub train: Vec<Annotation>,
    pub test: Vec<Annotation>,
}

/// Onsets spread over the recording with random slack, so calls never
/// overlap.
fn onsets(rng: &mut impl Rng, count: usize, slot: f64) -> Vec<f64> {
    (0..count)
        .map(|i| i as f64 * slot + 0.3 + rng.gen_range(0.0..(slot - 1.8).max(0.01)))
        .collect()
}

fn recording(
    rng: &mut ChaCha8Rng,
    pattern: CallPattern,
    n_calls: usize,
    spec: &CorpusSpec,
) -> Result<(AudioClip, Vec<(f64, f64)>)> {
    let duration_s = n_calls as f64 * spec.slot_s;
    let voice = Voice::random(rng, spec.pitch_spread, spec.tempo_spread);
    let noise_rms = 10f64.powf(rng.gen_range(-2.3..-1.7));
    let calls = onsets(rng, n_calls, spec.slot_s)
        .into_iter()
        .map(|t| (pattern, t, rng.gen_range(0.2..0.5)))
        .collect();
    let others: Vec<CallPattern> = BACKGROUND.iter().copied().filter(|&p| p != pattern).collect();
    let background = (0..spec.background_calls)
        .map(|_| {
            let p = others[rng.gen_range(0..others.len())];
            (
                p,
                rng.gen_range(0.0..duration_s - 1.2),
                rng.gen_range(spec.background_amp.0..spec.background_amp.1),
            )
        })
        .collect();
    let scene = SceneSpec {
        duration_s,
        noise_rms,
        calls,
        background,
        voice,
    };
    let (x, bounds) = render_scene(&scene, PIPELINE_RATE, rng)?;
    Ok((AudioClip::new(x, PIPELINE_RATE, "")?, bounds))
}

/// Writes `train/` and `test/` recordings with one species per recording,
/// plus `train.csv` and `test.csv`.
pub fn write_corpus(root: &Path, spec: &CorpusSpec) -> Result<Corpus> {
    if spec.train_calls_per_recording == 0 || spec.test_calls_per_recording == 0 || spec.slot_s < 2.0 {
        return Err(Error::InvalidParameter(
            "need at least one call per recording and 2 s slots".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = |name: &str, per_class: usize, n_calls: usize| -> Result<Vec<Annotation>> {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut rows = Vec::new();
        for (species, pattern) in SPECIES {
            for k in 0..per_class {
                let (clip, bounds) = recording(&mut rng, pattern, n_calls, spec)?;
                let rel = PathBuf::from(name).join(format!("{species}-{k:02}.wav"));
                write_wav(&root.join(&rel), &clip)?;
                rows.extend(bounds.into_iter().map(|(s, e)| Annotation {
                    recording: rel.clone(),
                    start_s: (s * 1000.0).round() / 1000.0,
                    end_s: (e * 1000.0).round() / 1000.0,
                    label: species.to_string(),
                }));
            }
        }
        let csv = root.join(format!("{name}.csv"));
        std::fs::write(&csv, write_annotations(&rows)?)
            .map_err(|e| Error::io(format!("writing {}", csv.display()), e))?;
        Ok(rows)
    };
    let train = split("train", spec.train_recordings, spec.train_calls_per_recording)?;
    let test = split("test", spec.test_recordings, spec.test_calls_per_recording)?;
    Ok(Corpus {
        root: root.to_path_buf(),
        train_csv: root.join("train.csv"),
        test_csv: root.join("test.csv"),
        train,
        test,
    })
}
