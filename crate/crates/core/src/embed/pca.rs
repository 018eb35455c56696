use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes fitted to a set of embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained axes, strongest first; each has its largest-magnitude
    /// coordinate positive.
    pub components: Vec<Vec<f64>>,
    /// Variance fraction per retained axis.
    pub explained_variance_ratio: Vec<f64>,
    pub n_components: usize,
}

/// Fits PCA by SVD of the centered data, keeping the fewest components whose
/// cumulative explained variance reaches `variance_target`.
pub fn fit_pca(data: &[Vec<f64>], variance_target: f64) -> Result<PcaModel> {
    if data.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least 2 samples, got {}",
            data.len()
        )));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "variance target {variance_target} outside (0, 1]"
        )));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter("empty embedding vectors".into()));
    }
    if let Some(bad) = data.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let n = data.len();
    let mut mean = vec![0.0; dim];
    for v in data {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| data[i][j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let power: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let max_k = (n - 1).min(dim).min(order.len());
    let mut k = max_k;
    let mut cumulative = 0.0;
    for (i, p) in power.iter().take(max_k).enumerate() {
        cumulative += p / total;
        if cumulative >= variance_target - 1e-12 {
            k = i + 1;
            break;
        }
    }

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = v_t.row(i).iter().copied().collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            let lead = c
                .iter()
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |best, (j, x)| if x.abs() > best.1 { (j, x.abs()) } else { best },
                )
                .0;
            if c[lead] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio: power[..k].iter().map(|p| p / total).collect(),
        n_components: k,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cumulative_variance(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    /// Coordinates of `v - mean` along the retained components.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: v.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect())
    }

    /// Maps component coordinates back to centered input space.
    pub fn reconstruct_centered(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim()];
        for (c, w) in self.components.iter().zip(coords) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += w * x;
            }
        }
        out
    }

    /// Projects onto the retained components and scales to unit L2 norm.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let coords = self.transform(v)?;
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        let centered = v
            .iter()
            .zip(&self.mean)
            .map(|(x, m)| (x - m).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || norm <= 1e-9 * centered || !norm.is_finite() {
            return Err(Error::DegenerateProjection);
        }
        Ok(coords.iter().map(|x| x / norm).collect())
    }
}
