//! End-to-end workflows shared by the command-line tool and the tests.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    average_spectrogram, estimate_call_duration, estimate_freq_range, suggest_clip_length, SpeciesCallStats,
};
use crate::annotations::{resolve_recordings, Annotation, Detection};
use crate::audio::{load_recording, resample, AudioClip};
use crate::classify::{evaluate, Decision, EvalMetrics};
use crate::config::PipelineConfig;
use crate::detect::{detect_in_clip, DetectionEvent, EventConfig};
use crate::embed::{segment_id, BaselineProvider, EmbedInput, EmbeddingProvider, ExternalProvider, BASELINE_ID};
use crate::error::{Error, Result};
use crate::preprocess::{
    bandpass, denoise, mel_spectrogram, segment_call, CallSegment, DenoiseConfig, MelConfig, MelSpectrogram,
    SegmentConfig,
};
use crate::profile::{FitParams, Preprocessing, SpeciesProfile};

/// How recordings are conditioned before calls are cut out of them.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub sample_rate: u32,
    /// Applied to field recordings only; training audio is not bandpassed.
    pub band: Option<(f64, f64)>,
    pub denoise: DenoiseConfig,
    pub segment: SegmentConfig,
    pub mel: MelConfig,
}

impl Conditioning {
    pub fn training(cfg: &PipelineConfig) -> Self {
        Self {
            sample_rate: cfg.sample_rate,
            band: None,
            denoise: cfg.denoise.clone(),
            segment: cfg.segment.clone(),
            mel: cfg.mel.clone(),
        }
    }

    pub fn field(p: &Preprocessing) -> Self {
        Self {
            sample_rate: p.sample_rate,
            band: Some(p.band),
            denoise: p.denoise.clone(),
            segment: p.segment.clone(),
            mel: p.mel.clone(),
        }
    }

    /// Loads, resamples, bandpasses (field only) and denoises a recording.
    pub fn condition_recording(&self, path: &Path, source_id: &str) -> Result<AudioClip> {
        let mut clip = load_recording(path)?;
        clip.source_id = source_id.to_string();
        self.condition(&clip)
    }

    pub fn condition(&self, clip: &AudioClip) -> Result<AudioClip> {
        let mut clip = resample(clip, self.sample_rate)?;
        if let Some((lo, hi)) = self.band {
            clip = bandpass(&clip, lo, hi)?;
        }
        denoise(&clip, &self.denoise)
    }

    /// Cuts and renders one call; `None` when the segment is silent.
    pub fn cut(
        &self,
        clip: &AudioClip,
        start_s: f64,
        end_s: f64,
        label: Option<String>,
    ) -> Result<Option<(CallSegment, MelSpectrogram)>> {
        match segment_call(clip, start_s, end_s, &self.segment, label) {
            Ok(seg) => {
                let mel = mel_spectrogram(&seg, &self.mel)?;
                Ok(Some((seg, mel)))
            }
            Err(Error::SilentSegment(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// An annotated call after conditioning; `content` is `None` for segments
/// with no energy left.
#[derive(Debug, Clone)]
pub struct PreparedCall {
    pub annotation: Annotation,
    pub id: String,
    pub content: Option<(CallSegment, MelSpectrogram)>,
}

/// Conditions every annotated recording once and cuts its calls.
///
/// Recordings are processed in parallel; output follows annotation order.
pub fn prepare_calls(annotations: &[Annotation], data_root: &Path, cond: &Conditioning) -> Result<Vec<PreparedCall>> {
    let paths = resolve_recordings(annotations, data_root)?;
    let mut by_recording: Vec<(PathBuf, Vec<usize>)> = Vec::new();
    let mut index: HashMap<&Path, usize> = HashMap::new();
    for (i, a) in annotations.iter().enumerate() {
        let slot = *index.entry(a.recording.as_path()).or_insert_with(|| {
            by_recording.push((a.recording.clone(), Vec::new()));
            by_recording.len() - 1
        });
        by_recording[slot].1.push(i);
    }
    let per_recording: Vec<Vec<(usize, PreparedCall)>> = by_recording
        .par_iter()
        .zip(paths.par_iter())
        .map(|((rel, rows), path)| {
            let source = rel.to_string_lossy();
            let clip = cond.condition_recording(path, &source)?;
            rows.iter()
                .map(|&i| {
                    let a = &annotations[i];
                    let content = cond.cut(&clip, a.start_s, a.end_s.min(clip.duration_s()), Some(a.label.clone()))?;
                    if content.is_none() {
                        warn!(
                            "{source}: call at {:.3}-{:.3} s is silent after conditioning",
                            a.start_s, a.end_s
                        );
                    }
                    Ok((
                        i,
                        PreparedCall {
                            annotation: a.clone(),
                            id: segment_id(&source, a.start_s, a.end_s),
                            content,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<(usize, PreparedCall)> = per_recording.into_iter().flatten().collect();
    out.sort_by_key(|(i, _)| *i);
    let mut seen: HashMap<String, usize> = HashMap::new();
    Ok(out
        .into_iter()
        .map(|(_, mut c)| {
            let n = seen.entry(c.id.clone()).or_default();
            *n += 1;
            if *n > 1 {
                c.id = format!("{}#{}", c.id, n);
            }
            c
        })
        .collect())
}

/// Embeds the calls that have content, returning vectors aligned with
/// `calls` (`None` for silent ones).
pub fn embed_calls(calls: &[PreparedCall], provider: &dyn EmbeddingProvider) -> Result<Vec<Option<Vec<f64>>>> {
    let inputs: Vec<EmbedInput<'_>> = calls
        .iter()
        .filter_map(|c| {
            c.content.as_ref().map(|(segment, mel)| EmbedInput {
                id: &c.id,
                segment,
                mel,
            })
        })
        .collect();
    let mut vectors = provider.embed(&inputs)?.into_iter();
    Ok(calls
        .iter()
        .map(|c| c.content.as_ref().and_then(|_| vectors.next()).map(|v| v.values))
        .collect())
}

/// Builds the configured provider; bridge providers keep their exchange
/// files under `work_dir`.
pub fn make_provider(cfg: &PipelineConfig, provider_id: &str, work_dir: &Path) -> Result<Box<dyn EmbeddingProvider>> {
    if provider_id == BASELINE_ID {
        return Ok(Box::new(BaselineProvider));
    }
    let bridge = cfg.bridge.get(provider_id).ok_or_else(|| {
        Error::Usage(format!(
            "provider {provider_id:?} is neither {BASELINE_ID:?} nor configured under [bridge.{provider_id}]"
        ))
    })?;
    Ok(Box::new(ExternalProvider {
        id: provider_id.to_string(),
        command: bridge.command.clone(),
        dimension: Some(bridge.dimension),
        input_mode: bridge.input_mode,
        work_dir: work_dir.to_path_buf(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub species: Vec<SpeciesCallStats>,
    pub suggested_clip_len_s: f64,
}

/// Per-species band and duration estimates from training-conditioned calls.
/// Also returns each species' average spectrogram.
pub fn analyze(
    annotations: &[Annotation],
    cfg: &PipelineConfig,
) -> Result<(AnalysisReport, BTreeMap<String, MelSpectrogram>)> {
    let calls = prepare_calls(annotations, &cfg.data_root, &Conditioning::training(cfg))?;
    let mut grouped: BTreeMap<String, (Vec<MelSpectrogram>, Vec<f64>)> = BTreeMap::new();
    for c in calls {
        let entry = grouped.entry(c.annotation.label.clone()).or_default();
        entry.1.push(c.annotation.duration_s());
        if let Some((_, mel)) = c.content {
            entry.0.push(mel);
        }
    }
    let mut species = Vec::new();
    let mut averages = BTreeMap::new();
    for (name, (mels, durations)) in grouped {
        if mels.is_empty() {
            return Err(Error::NoSignal(format!("every call of {name:?} is silent")));
        }
        let avg = average_spectrogram(&mels)?;
        let (low_hz, high_hz) = estimate_freq_range(&avg, cfg.analysis.activity_frac, cfg.analysis.expand)
            .map_err(|e| Error::NoSignal(format!("{name}: {e}")))?;
        species.push(SpeciesCallStats {
            species: name.clone(),
            low_hz,
            high_hz,
            mean_duration_s: estimate_call_duration(&durations, cfg.analysis.duration_buffer)?,
            n_calls: mels.len(),
        });
        averages.insert(name, avg);
    }
    let suggested_clip_len_s = suggest_clip_length(&species)?;
    Ok((
        AnalysisReport {
            species,
            suggested_clip_len_s,
        },
        averages,
    ))
}

/// Training output besides the profile itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub class_counts: BTreeMap<String, usize>,
    pub band: (f64, f64),
    pub band_estimated: bool,
    pub n_components: usize,
    pub threshold: f64,
    pub training_recall: f64,
}

/// Builds a species profile from annotated training calls.
///
/// `pca_pool` holds extra annotated calls whose embeddings only shape the
/// PCA projection; they are used when the configuration asks for a pooled
/// fit.
pub fn train(
    annotations: &[Annotation],
    target: &str,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
    pca_pool: &[Annotation],
) -> Result<(SpeciesProfile, TrainingSummary)> {
    let species: Vec<&str> = {
        let mut s: Vec<&str> = annotations.iter().map(|a| a.label.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    if !species.contains(&target) {
        return Err(Error::Data(format!(
            "no calls for target species {target:?}; available: {}",
            species.join(", ")
        )));
    }
    let cond = Conditioning::training(cfg);
    let calls = prepare_calls(annotations, &cfg.data_root, &cond)?;
    if let Some(silent) = calls.iter().find(|c| c.content.is_none()) {
        return Err(Error::SilentSegment(format!(
            "training call {} is silent after denoising",
            silent.id
        )));
    }

    let (band, band_estimated) = match cfg.band {
        Some(b) => (b, false),
        None => {
            let mels: Vec<MelSpectrogram> = calls
                .iter()
                .filter(|c| c.annotation.label == target)
                .filter_map(|c| c.content.as_ref().map(|(_, m)| m.clone()))
                .collect();
            let avg = average_spectrogram(&mels)?;
            (
                estimate_freq_range(&avg, cfg.analysis.activity_frac, cfg.analysis.expand)?,
                true,
            )
        }
    };
    info!(
        "target band {:.1}-{:.1} Hz{}",
        band.0,
        band.1,
        if band_estimated { " (estimated)" } else { "" }
    );

    let vectors = embed_calls(&calls, provider)?;
    let training: Vec<(String, Vec<f64>)> = calls
        .iter()
        .zip(vectors)
        .map(|(c, v)| (c.annotation.label.clone(), v.expect("non-silent call has a vector")))
        .collect();

    let extra: Vec<Vec<f64>> = match cfg.pca_fit {
        crate::config::PcaFit::Pooled if !pca_pool.is_empty() => {
            let pool = prepare_calls(pca_pool, &cfg.data_root, &cond)?;
            embed_calls(&pool, provider)?.into_iter().flatten().collect()
        }
        _ => Vec::new(),
    };

    let profile = SpeciesProfile::fit(
        &training,
        &extra,
        FitParams {
            target_species: target.to_string(),
            provider_id: provider.id().to_string(),
            variance_target: cfg.variance_target,
            target_recall: cfg.target_recall,
            score_space: cfg.score_space,
            preprocessing: Preprocessing {
                sample_rate: cfg.sample_rate,
                band,
                denoise: cfg.denoise.clone(),
                segment: cfg.segment.clone(),
                mel: cfg.mel.clone(),
                event: cfg.event.clone(),
            },
        },
    )?;
    let summary = TrainingSummary {
        class_counts: profile.class_counts.clone(),
        band,
        band_estimated,
        n_components: profile.pca.n_components,
        threshold: profile.threshold,
        training_recall: profile.training_recall,
    };
    Ok((profile, summary))
}

/// Classifies annotated calls under field conditioning, one row per call.
/// Silent calls produce no row.
pub fn classify_calls(
    annotations: &[Annotation],
    data_root: &Path,
    profile: &SpeciesProfile,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Detection>> {
    let cond = Conditioning::field(&profile.preprocessing);
    let calls = prepare_calls(annotations, data_root, &cond)?;
    let vectors = embed_calls(&calls, provider)?;
    let mut rows = Vec::new();
    for (c, v) in calls.iter().zip(vectors) {
        let Some(v) = v else { continue };
        let (decision, score) = match profile.classify_embedding(&v) {
            Ok(r) => r,
            Err(Error::DegenerateProjection) => {
                warn!("{}: embedding has no component in the profile's subspace", c.id);
                continue;
            }
            Err(e) => return Err(e),
        };
        rows.push(Detection {
            recording: c.annotation.recording.to_string_lossy().into_owned(),
            start_s: c.annotation.start_s,
            end_s: c.annotation.end_s,
            score,
            decision,
        });
    }
    Ok(rows)
}

/// Candidate call events in an already conditioned recording.
pub fn find_events(clip: &AudioClip, event: &EventConfig) -> Result<Vec<DetectionEvent>> {
    if clip.samples.iter().all(|&v| v == 0.0) {
        return Ok(Vec::new());
    }
    match detect_in_clip(clip, event) {
        Err(Error::NoSignal(_)) => Ok(Vec::new()),
        other => other,
    }
}

/// Detects and classifies calls in one raw recording.
pub fn detect_clip(
    clip: &AudioClip,
    profile: &SpeciesProfile,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Detection>> {
    let cond = Conditioning::field(&profile.preprocessing);
    let conditioned = cond.condition(clip)?;
    let events = find_events(&conditioned, &profile.preprocessing.event)?;
    let mut cut = Vec::new();
    for ev in &events {
        match cond.cut(&conditioned, ev.start_s, ev.end_s, None)? {
            Some(content) => cut.push(PreparedCall {
                annotation: Annotation {
                    recording: PathBuf::from(&clip.source_id),
                    start_s: ev.start_s,
                    end_s: ev.end_s,
                    label: String::new(),
                },
                id: segment_id(&clip.source_id, ev.start_s, ev.end_s),
                content: Some(content),
            }),
            None => warn!("{}: event at {:.3} s is silent", clip.source_id, ev.start_s),
        }
    }
    let vectors = embed_calls(&cut, provider)?;
    let mut rows = Vec::new();
    for (c, v) in cut.iter().zip(vectors) {
        let v = v.expect("cut calls have content");
        let (decision, score) = match profile.classify_embedding(&v) {
            Ok(r) => r,
            Err(Error::DegenerateProjection) => (Decision::Negative, f64::NAN),
            Err(e) => return Err(e),
        };
        if score.is_nan() {
            warn!("{}: degenerate projection, marked negative", c.id);
        }
        rows.push(Detection {
            recording: clip.source_id.clone(),
            start_s: c.annotation.start_s,
            end_s: c.annotation.end_s,
            score: if score.is_nan() { 0.0 } else { score },
            decision,
        });
    }
    Ok(rows)
}

/// Runs detection over many recordings in parallel.
///
/// Each entry pairs the display name written to the output with the file
/// path. Failed recordings are logged and skipped; the call fails only when
/// every recording failed. Rows are sorted by recording, then start time.
pub fn detect_recordings(
    recordings: &[(String, PathBuf)],
    profile: &SpeciesProfile,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Detection>> {
    if recordings.is_empty() {
        return Err(Error::Usage("no recordings given".into()));
    }
    let results: Vec<Result<Vec<Detection>>> = recordings
        .par_iter()
        .map(|(name, path)| {
            let mut clip = load_recording(path)?;
            clip.source_id = name.clone();
            detect_clip(&clip, profile, provider)
        })
        .collect();
    let mut rows = Vec::new();
    let mut first_err = None;
    let mut failures = 0;
    for ((name, _), r) in recordings.iter().zip(results) {
        match r {
            Ok(d) => rows.extend(d),
            Err(e) => {
                warn!("{name}: {e}");
                failures += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if failures == recordings.len() {
        return Err(first_err.expect("at least one failure"));
    }
    rows.sort_by(|a, b| a.recording.cmp(&b.recording).then(a.start_s.total_cmp(&b.start_s)));
    Ok(rows)
}

fn same_recording(a: &str, b: &Path) -> bool {
    let a = Path::new(a);
    a == b || a.ends_with(b) || b.ends_with(a)
}

/// Matches detections to truth calls and scores target-versus-rest.
///
/// A truth call takes the decision of the unused detection in the same
/// recording with the largest overlap, provided that overlap covers at least
/// `min_overlap` of the truth interval; unmatched truth calls count as
/// negative. Positive detections matching no truth call are false positives.
pub fn match_and_evaluate(
    detections: &[Detection],
    truth: &[Annotation],
    target: &str,
    min_overlap: f64,
) -> Result<EvalMetrics> {
    if truth.is_empty() {
        return Err(Error::Usage("truth table is empty".into()));
    }
    let mut used = vec![false; detections.len()];
    let mut pairs: Vec<(Decision, &str)> = Vec::with_capacity(truth.len());
    for t in truth {
        let need = min_overlap * t.duration_s();
        let best = detections
            .iter()
            .enumerate()
            .filter(|(i, d)| !used[*i] && same_recording(&d.recording, &t.recording))
            .map(|(i, d)| (i, d.end_s.min(t.end_s) - d.start_s.max(t.start_s)))
            .filter(|&(_, ov)| ov > 0.0 && ov >= need - 1e-9)
            .fold(None, |best: Option<(usize, f64)>, (i, ov)| match best {
                Some((_, b)) if b >= ov => best,
                _ => Some((i, ov)),
            });
        let decision = match best {
            Some((i, _)) => {
                used[i] = true;
                detections[i].decision
            }
            None => Decision::Negative,
        };
        pairs.push((decision, t.label.as_str()));
    }
    let mut metrics = evaluate(&pairs, target);
    let stray = detections
        .iter()
        .zip(&used)
        .filter(|(d, &u)| !u && d.decision.is_positive())
        .count();
    if stray > 0 {
        metrics = EvalMetrics::from_counts(metrics.tp, metrics.fp + stray, metrics.fn_, metrics.tn);
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(rows: &[(&str, f64, f64, &str)]) -> Vec<Annotation> {
        rows.iter()
            .map(|&(r, s, e, l)| Annotation {
                recording: r.into(),
                start_s: s,
                end_s: e,
                label: l.into(),
            })
            .collect()
    }

    fn det(r: &str, s: f64, e: f64, d: Decision) -> Detection {
        Detection {
            recording: r.into(),
            start_s: s,
            end_s: e,
            score: 0.5,
            decision: d,
        }
    }

    #[test]
    fn identical_detections_are_perfect() {
        let t = truth(&[("a.wav", 1.0, 2.0, "x"), ("a.wav", 3.0, 4.0, "y")]);
        let d = vec![
            det("a.wav", 1.0, 2.0, Decision::Positive),
            det("a.wav", 3.0, 4.0, Decision::Negative),
        ];
        let m = match_and_evaluate(&d, &t, "x", 0.5).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn no_detections_means_zero_recall() {
        let t = truth(&[("a.wav", 1.0, 2.0, "x")]);
        let m = match_and_evaluate(&[], &t, "x", 0.5).unwrap();
        assert_eq!(m.recall, Some(0.0));
        assert!(match_and_evaluate(&[], &[], "x", 0.5).is_err());
    }

    #[test]
    fn overlap_rule_and_strays() {
        let t = truth(&[("dir/a.wav", 1.0, 2.0, "x")]);
        // 40% overlap is not enough; the stray positive is a false positive.
        let m = match_and_evaluate(&[det("a.wav", 1.6, 2.6, Decision::Positive)], &t, "x", 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (0, 1, 1, 0));
        let m = match_and_evaluate(&[det("a.wav", 1.4, 2.6, Decision::Positive)], &t, "x", 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 0, 0, 0));
        let m = match_and_evaluate(&[det("b.wav", 1.0, 2.0, Decision::Positive)], &t, "x", 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }
}
