//! Centroid classifier: cosine similarity to per-species median centroids,
//! softmax over species, and a recall-targeted decision threshold.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidParameter("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

/// Coordinate-wise median re-normalized to unit length. Even counts take the
/// mean of the two middle values.
pub fn median_centroid(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidParameter("median of no vectors".into()))?;
    let dim = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let mut column = vec![0.0; vectors.len()];
    let med: Vec<f64> = (0..dim)
        .map(|j| {
            for (c, v) in column.iter_mut().zip(vectors) {
                *c = v[j];
            }
            median(&mut column)
        })
        .collect();
    unit(&med).ok_or_else(|| Error::InvalidParameter("median centroid is the zero vector".into()))
}

/// Raw cosine similarity of `v` to every centroid.
pub fn similarities(v: &[f64], centroids: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, f64>> {
    centroids
        .iter()
        .map(|(k, c)| Ok((k.clone(), cosine_similarity(v, c)?)))
        .collect()
}

/// Softmax (temperature 1) of the cosine similarities to each centroid.
pub fn score_call(v: &[f64], centroids: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, f64>> {
    if centroids.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "scoring needs at least 2 centroids, got {}",
            centroids.len()
        )));
    }
    let sims = similarities(v, centroids)?;
    let top = sims.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: BTreeMap<String, f64> = sims.into_iter().map(|(k, s)| (k, (s - top).exp())).collect();
    let z: f64 = exp.values().sum();
    Ok(exp.into_iter().map(|(k, e)| (k, e / z)).collect())
}

/// Largest observed score `t` with `#{s >= t} / n >= target_recall`.
pub fn select_threshold(scores: &[f64], target_recall: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidParameter(
            "no target scores for threshold selection".into(),
        ));
    }
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target recall {target_recall} outside (0, 1]"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // Walking down from the top, the first candidate meeting the target is
    // the largest one. Ties are counted as a block.
    let mut i = 0;
    while i < n {
        let t = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == t {
            j += 1;
        }
        if j as f64 / n as f64 >= target_recall {
            return Ok(t);
        }
        i = j;
    }
    Ok(sorted[n - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    #[default]
    SoftmaxProbability,
    RawCosine,
}

impl ScoreSpace {
    /// Target-class score of reduced vector `v`.
    pub fn target_score(self, v: &[f64], centroids: &BTreeMap<String, Vec<f64>>, target: &str) -> Result<f64> {
        let scores = match self {
            ScoreSpace::SoftmaxProbability => score_call(v, centroids)?,
            ScoreSpace::RawCosine => similarities(v, centroids)?,
        };
        scores
            .get(target)
            .copied()
            .ok_or_else(|| Error::Data(format!("no centroid for target species {target:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Positive,
    Negative,
}

impl Decision {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score >= threshold {
            Decision::Positive
        } else {
            Decision::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Decision::Positive
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Positive => "positive",
            Decision::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "1" | "true" => Ok(Decision::Positive),
            "negative" | "0" | "false" => Ok(Decision::Negative),
            other => Err(Error::Data(format!("unknown decision {other:?}"))),
        }
    }
}

/// Target-versus-rest confusion counts and derived ratios. Ratios with a zero
/// denominator are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl fmt::Display for EvalMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        writeln!(f, "tp={} fp={} fn={} tn={}", self.tp, self.fp, self.fn_, self.tn)?;
        writeln!(f, "accuracy  {}", show(self.accuracy))?;
        writeln!(f, "precision {}", show(self.precision))?;
        writeln!(f, "recall    {}", show(self.recall))?;
        write!(f, "f1        {}", show(self.f1))
    }
}

/// Binary target-versus-rest evaluation.
pub fn evaluate<S: AsRef<str>>(decisions: &[(Decision, S)], target: &str) -> EvalMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (d, label) in decisions {
        match (d.is_positive(), label.as_ref() == target) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    EvalMetrics::from_counts(tp, fp, fn_, tn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroids(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn cosine_examples() {
        let a = [0.3, -1.2, 2.0];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&a, &[0.0; 3]).is_err());
        assert!(cosine_similarity(&a, &[1.0]).is_err());
    }

    #[test]
    fn median_centroid_examples() {
        let v = vec![3.0, 4.0];
        assert_eq!(median_centroid(std::slice::from_ref(&v)).unwrap(), vec![0.6, 0.8]);
        let m = median_centroid(&[vec![1.0, 1.0], vec![2.0, 1.0], vec![100.0, 1.0]]).unwrap();
        assert!((m[0] / m[1] - 2.0).abs() < 1e-12);
        let u = vec![0.6, 0.0, 0.8];
        assert_eq!(median_centroid(&[u.clone(), u.clone(), u.clone()]).unwrap(), u);
        assert!(median_centroid(&[]).is_err());
        assert!(median_centroid(&[vec![1.0], vec![-1.0]]).is_err());
    }

    #[test]
    fn even_count_median_averages_middle() {
        let m = median_centroid(&[vec![1.0, 1.0], vec![3.0, 1.0], vec![5.0, 1.0], vec![9.0, 1.0]]).unwrap();
        assert!((m[0] / m[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        let c = centroids(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]);
        let p = score_call(&[1.0, 1.0], &c).unwrap();
        assert!((p["a"] - 0.5).abs() < 1e-15);
        let p = score_call(&[1.0, 0.0], &c).unwrap();
        let e = std::f64::consts::E;
        assert!((p["a"] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p["a"] - 0.7311).abs() < 1e-4);
        assert!(score_call(&[1.0, 0.0], &centroids(&[("a", vec![1.0, 0.0])])).is_err());
        assert!(score_call(&[1.0, 0.0, 0.0], &c).is_err());
    }

    #[test]
    fn threshold_examples() {
        let s: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(select_threshold(&s, 0.9).unwrap(), 0.2);
        assert_eq!(select_threshold(&s, 1.0).unwrap(), 0.1);
        assert_eq!(select_threshold(&[0.7], 0.9).unwrap(), 0.7);
        assert!(select_threshold(&[], 0.9).is_err());
        assert!(select_threshold(&[0.5], 0.0).is_err());
    }

    #[test]
    fn threshold_counts_ties_together() {
        assert_eq!(select_threshold(&[0.5, 0.5, 0.5, 0.1], 0.5).unwrap(), 0.5);
        assert_eq!(select_threshold(&[0.9, 0.5, 0.5, 0.1], 0.5).unwrap(), 0.5);
    }

    #[test]
    fn boundary_is_inclusive() {
        assert_eq!(Decision::from_score(0.4, 0.4), Decision::Positive);
        assert_eq!(Decision::from_score(0.39, 0.4), Decision::Negative);
    }

    #[test]
    fn evaluate_counts() {
        let mut d = Vec::new();
        d.extend(std::iter::repeat_n((Decision::Positive, "t"), 7));
        d.extend(std::iter::repeat_n((Decision::Positive, "o"), 4));
        d.extend(std::iter::repeat_n((Decision::Negative, "o"), 72));
        let m = evaluate(&d, "t");
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (7, 4, 0, 72));
        assert_eq!(format!("{:.3}", m.accuracy.unwrap()), "0.952");
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(format!("{:.3}", m.f1.unwrap()), "0.778");
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let m = evaluate(&[(Decision::Negative, "o")], "t");
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.accuracy, Some(1.0));
        let empty: [(Decision, &str); 0] = [];
        assert_eq!(evaluate(&empty, "t").accuracy, None);
    }

    #[test]
    fn perfect_classifier() {
        let m = evaluate(&[(Decision::Positive, "t"), (Decision::Negative, "o")], "t");
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            assert_eq!(v, Some(1.0));
        }
    }
}
