//! The trained artifact: PCA, per-species centroids and the decision
//! threshold, plus every preprocessing parameter used to build them.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classify::{median_centroid, select_threshold, Decision, ScoreSpace};
use crate::detect::EventConfig;
use crate::embed::{fit_pca, PcaModel};
use crate::error::{Error, Result};
use crate::preprocess::{DenoiseConfig, MelConfig, SegmentConfig};

pub const PROFILE_FORMAT: &str = "rarecall-profile/1";

/// Classes with fewer training calls than this get a warning.
pub const MIN_CLASS_CALLS: usize = 5;

/// Conditions a recording must be put through before it is comparable with
/// the training calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub sample_rate: u32,
    /// Bandpass applied to field recordings.
    pub band: (f64, f64),
    pub denoise: DenoiseConfig,
    pub segment: SegmentConfig,
    pub mel: MelConfig,
    pub event: EventConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesProfile {
    pub format: String,
    pub target_species: String,
    pub provider_id: String,
    pub provider_dimension: usize,
    pub pca: PcaModel,
    pub centroids: BTreeMap<String, Vec<f64>>,
    pub class_counts: BTreeMap<String, usize>,
    pub score_space: ScoreSpace,
    pub target_recall: f64,
    pub threshold: f64,
    pub training_recall: f64,
    pub preprocessing: Preprocessing,
}

/// Inputs to [`SpeciesProfile::fit`] besides the embeddings.
#[derive(Debug, Clone)]
pub struct FitParams {
    pub target_species: String,
    pub provider_id: String,
    pub variance_target: f64,
    pub target_recall: f64,
    pub score_space: ScoreSpace,
    pub preprocessing: Preprocessing,
}

impl SpeciesProfile {
    /// Builds a profile from labelled raw embeddings.
    ///
    /// PCA is fitted on `training` plus `pca_extra`, which carries unlabelled
    /// embeddings used only to shape the projection.
    pub fn fit(training: &[(String, Vec<f64>)], pca_extra: &[Vec<f64>], params: FitParams) -> Result<Self> {
        let target = &params.target_species;
        let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
        for (label, _) in training {
            *class_counts.entry(label.clone()).or_default() += 1;
        }
        if !class_counts.contains_key(target) {
            let known: Vec<&str> = class_counts.keys().map(String::as_str).collect();
            return Err(Error::Data(format!(
                "no calls for target species {target:?}; available: {}",
                known.join(", ")
            )));
        }
        if class_counts.len() < 2 {
            return Err(Error::Data(format!(
                "training needs at least one species besides {target:?}"
            )));
        }
        for (species, &n) in &class_counts {
            if n < MIN_CLASS_CALLS {
                warn!("species {species:?} has only {n} training call(s)");
            }
        }

        let raw: Vec<Vec<f64>> = training
            .iter()
            .map(|(_, v)| v.clone())
            .chain(pca_extra.iter().cloned())
            .collect();
        let pca = fit_pca(&raw, params.variance_target)?;

        let mut reduced: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for (label, v) in training {
            reduced.entry(label.clone()).or_default().push(pca.project(v)?);
        }
        let centroids = reduced
            .iter()
            .map(|(k, vs)| Ok((k.clone(), median_centroid(vs)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;

        let target_scores = reduced[target]
            .iter()
            .map(|v| params.score_space.target_score(v, &centroids, target))
            .collect::<Result<Vec<f64>>>()?;
        let threshold = select_threshold(&target_scores, params.target_recall)?;
        let hits = target_scores.iter().filter(|&&s| s >= threshold).count();

        Ok(Self {
            format: PROFILE_FORMAT.to_string(),
            target_species: params.target_species,
            provider_id: params.provider_id,
            provider_dimension: pca.input_dim(),
            pca,
            centroids,
            class_counts,
            score_space: params.score_space,
            target_recall: params.target_recall,
            threshold,
            training_recall: hits as f64 / target_scores.len() as f64,
            preprocessing: params.preprocessing,
        })
    }

    /// Scores and decides an already reduced, unit-norm vector.
    pub fn classify_reduced(&self, v: &[f64]) -> Result<(Decision, f64)> {
        if v.len() != self.pca.n_components {
            return Err(Error::DimensionMismatch {
                expected: self.pca.n_components,
                got: v.len(),
            });
        }
        let score = self
            .score_space
            .target_score(v, &self.centroids, &self.target_species)?;
        Ok((Decision::from_score(score, self.threshold), score))
    }

    /// Projects a raw provider embedding and classifies it.
    pub fn classify_embedding(&self, raw: &[f64]) -> Result<(Decision, f64)> {
        self.classify_reduced(&self.pca.project(raw)?)
    }

    /// Structural checks applied to every loaded profile.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("invalid profile: {m}")));
        if self.format != PROFILE_FORMAT {
            return bad(format!("format {:?}, expected {PROFILE_FORMAT:?}", self.format));
        }
        let k = self.pca.n_components;
        if k == 0 || self.pca.components.len() != k || self.pca.explained_variance_ratio.len() != k {
            return bad("inconsistent PCA component count".into());
        }
        if self.pca.input_dim() != self.provider_dimension
            || self.pca.components.iter().any(|c| c.len() != self.provider_dimension)
        {
            return bad("PCA dimension does not match provider dimension".into());
        }
        if self.centroids.len() < 2 || !self.centroids.contains_key(&self.target_species) {
            return bad("needs a target centroid and at least one other".into());
        }
        for (name, c) in &self.centroids {
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if c.len() != k || (norm - 1.0).abs() > 1e-6 {
                return bad(format!("centroid {name:?} is not a unit vector of length {k}"));
            }
        }
        if !self.threshold.is_finite() || !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return bad("threshold or target recall out of range".into());
        }
        let (lo, hi) = self.preprocessing.band;
        if !(lo > 0.0 && lo < hi) {
            return bad(format!("band ({lo}, {hi})"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("serializing profile: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Data(format!("parsing profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}
