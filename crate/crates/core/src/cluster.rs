//! Clustering-quality indices for embedding spaces and cross-provider ranking.
//!
//! All distances are Euclidean. On L2-normalized vectors this orders pairs
//! the same way cosine distance does.

use std::collections::HashMap;
use std::fmt::{self, Debug};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Points grouped by label, with cluster ids in first-appearance order.
struct Partition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    names: Vec<String>,
}

fn partition<L: Eq + Hash + Debug>(points: &[Vec<f64>], labels: &[L]) -> Result<Partition> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points".into()));
    }
    if points.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mut ids: HashMap<&L, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut names = Vec::new();
    let assignment = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let id = *ids.entry(l).or_insert_with(|| {
                members.push(Vec::new());
                names.push(format!("{l:?}"));
                members.len() - 1
            });
            members[id].push(i);
            id
        })
        .collect();
    if members.len() < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    Ok(Partition {
        assignment,
        members,
        names,
    })
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Mean silhouette coefficient; points in singleton clusters contribute 0
/// and `0/0` is taken as 0.
pub fn silhouette<L: Eq + Hash + Debug>(points: &[Vec<f64>], labels: &[L]) -> Result<f64> {
    let part = partition(points, labels)?;
    if points.len() < 3 {
        return Err(Error::InvalidParameter("silhouette needs at least 3 points".into()));
    }
    let d = distance_matrix(points);
    let k = part.members.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, row) in d.iter().enumerate() {
        let own = part.assignment[i];
        if part.members[own].len() < 2 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &dij) in row.iter().enumerate() {
            sums[part.assignment[j]] += dij;
        }
        let a = sums[own] / (part.members[own].len() - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / part.members[c].len() as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

/// Mean over clusters of the worst `(s_i + s_j) / d(c_i, c_j)` ratio, where
/// `s` is the mean distance to the cluster centroid. Lower is better.
pub fn davies_bouldin<L: Eq + Hash + Debug>(points: &[Vec<f64>], labels: &[L]) -> Result<f64> {
    let part = partition(points, labels)?;
    let dim = points[0].len();
    let centroids: Vec<Vec<f64>> = part
        .members
        .iter()
        .map(|m| {
            let mut c = vec![0.0; dim];
            for &i in m {
                for (acc, x) in c.iter_mut().zip(&points[i]) {
                    *acc += x;
                }
            }
            c.iter_mut().for_each(|x| *x /= m.len() as f64);
            c
        })
        .collect();
    let scatter: Vec<f64> = part
        .members
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|&i| euclidean(&points[i], c)).sum::<f64>() / m.len() as f64)
        .collect();
    let k = centroids.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in (0..k).filter(|&j| j != i) {
            let sep = euclidean(&centroids[i], &centroids[j]);
            if sep == 0.0 {
                return Err(Error::IndistinguishableClusters(
                    part.names[i].clone(),
                    part.names[j].clone(),
                ));
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Dunn index; unbounded when every cluster has zero diameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DunnIndex {
    Finite(f64),
    Unbounded,
}

impl DunnIndex {
    pub fn finite(self) -> Option<f64> {
        match self {
            DunnIndex::Finite(v) => Some(v),
            DunnIndex::Unbounded => None,
        }
    }
}

/// Smallest inter-cluster point distance over the largest cluster diameter.
#[allow(clippy::needless_range_loop)]
pub fn dunn<L: Eq + Hash + Debug>(points: &[Vec<f64>], labels: &[L]) -> Result<DunnIndex> {
    let part = partition(points, labels)?;
    let d = distance_matrix(points);
    let mut min_between = f64::INFINITY;
    let mut max_diameter = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if part.assignment[i] == part.assignment[j] {
                max_diameter = max_diameter.max(d[i][j]);
            } else {
                min_between = min_between.min(d[i][j]);
            }
        }
    }
    if max_diameter == 0.0 {
        return Ok(DunnIndex::Unbounded);
    }
    Ok(DunnIndex::Finite(min_between / max_diameter))
}

/// Raw clustering indices of one provider's embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub provider_id: String,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    /// Meaningless while `dunn_unbounded` is set; ranking replaces it with a
    /// capped sentinel.
    pub dunn: f64,
    #[serde(default)]
    pub dunn_unbounded: bool,
    pub n_components: usize,
}

impl ClusterReport {
    pub fn from_points<L: Eq + Hash + Debug>(
        provider_id: impl Into<String>,
        points: &[Vec<f64>],
        labels: &[L],
        n_components: usize,
    ) -> Result<Self> {
        let dunn = dunn(points, labels)?;
        Ok(Self {
            provider_id: provider_id.into(),
            silhouette: silhouette(points, labels)?,
            davies_bouldin: davies_bouldin(points, labels)?,
            dunn: dunn.finite().unwrap_or(0.0),
            dunn_unbounded: dunn == DunnIndex::Unbounded,
            n_components,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub report: ClusterReport,
    /// Set when `report.dunn` is the capped sentinel.
    pub dunn_capped: bool,
    pub silhouette_score: f64,
    pub davies_bouldin_score: f64,
    pub dunn_score: f64,
    pub overall_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    pub entries: Vec<RankedEntry>,
}

/// Score given to every provider when a metric has no spread.
pub const TIE_SCORE: f64 = 0.5;
const DUNN_CAP_FACTOR: f64 = 10.0;

fn min_max(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(spread > 0.0) {
                TIE_SCORE
            } else if higher_is_better {
                (v - lo) / spread
            } else {
                (hi - v) / spread
            }
        })
        .collect()
}

/// Min-max normalizes silhouette and Dunn, inverts and normalizes
/// Davies-Bouldin, averages the three, and sorts best first.
///
/// Ties in the overall score are broken by provider id so the ranking does
/// not depend on input order.
pub fn normalize_and_rank(reports: &[ClusterReport]) -> Result<RankedReport> {
    if reports.len() < 2 {
        return Err(Error::Usage(format!(
            "ranking needs at least 2 providers, got {}",
            reports.len()
        )));
    }
    for r in reports {
        let dunn_ok = r.dunn_unbounded || r.dunn.is_finite();
        if !(r.silhouette.is_finite() && r.davies_bouldin.is_finite() && dunn_ok) {
            return Err(Error::Data(format!("{}: non-finite metric", r.provider_id)));
        }
    }
    let largest_finite = reports
        .iter()
        .filter(|r| !r.dunn_unbounded)
        .map(|r| r.dunn)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let sentinel = largest_finite.map_or(1.0, |v| v * DUNN_CAP_FACTOR);
    let capped: Vec<ClusterReport> = reports
        .iter()
        .map(|r| ClusterReport {
            dunn: if r.dunn_unbounded { sentinel } else { r.dunn },
            ..r.clone()
        })
        .collect();

    let sil = min_max(&capped.iter().map(|r| r.silhouette).collect::<Vec<_>>(), true);
    let db = min_max(&capped.iter().map(|r| r.davies_bouldin).collect::<Vec<_>>(), false);
    let du = min_max(&capped.iter().map(|r| r.dunn).collect::<Vec<_>>(), true);

    let mut entries: Vec<RankedEntry> = capped
        .into_iter()
        .enumerate()
        .map(|(i, report)| RankedEntry {
            dunn_capped: report.dunn_unbounded,
            silhouette_score: sil[i],
            davies_bouldin_score: db[i],
            dunn_score: du[i],
            overall_score: (sil[i] + db[i] + du[i]) / 3.0,
            report,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.overall_score
            .total_cmp(&a.overall_score)
            .then_with(|| a.report.provider_id.cmp(&b.report.provider_id))
    });
    Ok(RankedReport { entries })
}

impl fmt::Display for RankedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .entries
            .iter()
            .map(|e| e.report.provider_id.len())
            .max()
            .unwrap_or(5)
            .max(8);
        writeln!(
            f,
            "{:<width$}  {:>7}  {:>10}  {:>8}  {:>8}  {:>12}",
            "Provider", "Overall", "Silhouette", "DB Index", "Dunn", "N Components"
        )?;
        for e in &self.entries {
            let r = &e.report;
            writeln!(
                f,
                "{:<width$}  {:>7.2}  {:>10.2}  {:>8.2}  {:>7.2}{}  {:>12}",
                r.provider_id,
                e.overall_score,
                r.silhouette,
                r.davies_bouldin,
                r.dunn,
                if e.dunn_capped { "*" } else { " " },
                r.n_components
            )?;
        }
        if self.entries.iter().any(|e| e.dunn_capped) {
            writeln!(f, "* Dunn index unbounded (zero cluster diameter); capped")?;
        }
        Ok(())
    }
}
