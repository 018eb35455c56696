use super::{EmbedInput, EmbeddingProvider, EmbeddingVector, InputMode};
use crate::error::{Error, Result};
use crate::preprocess::MelSpectrogram;

pub const BASELINE_ID: &str = "baseline";
/// Tiles per axis; the embedding has `BASELINE_TILES²` coordinates.
pub const BASELINE_TILES: usize = 16;
const GRID: usize = 227;

/// Tile boundaries along an axis of `len`; the last tile takes the remainder.
fn tile_bounds(len: usize) -> Vec<(usize, usize)> {
    let size = len / BASELINE_TILES;
    (0..BASELINE_TILES)
        .map(|i| {
            let end = if i + 1 == BASELINE_TILES { len } else { (i + 1) * size };
            (i * size, end)
        })
        .collect()
}

/// Mean-pools the 227×227 grid over a 16×16 tiling and standardizes the
/// pooled vector to zero mean and unit variance.
pub fn baseline_embed(mel: &MelSpectrogram, segment_ref: &str) -> Result<EmbeddingVector> {
    if mel.n_mels != GRID || mel.n_frames != GRID || mel.values.len() != GRID * GRID {
        return Err(Error::InvalidParameter(format!(
            "baseline embedding needs a {GRID}×{GRID} grid, got {}×{}",
            mel.n_mels, mel.n_frames
        )));
    }
    let rows = tile_bounds(mel.n_mels);
    let cols = tile_bounds(mel.n_frames);
    let mut pooled = Vec::with_capacity(BASELINE_TILES * BASELINE_TILES);
    for &(r0, r1) in &rows {
        for &(c0, c1) in &cols {
            let mut acc = 0.0;
            for b in r0..r1 {
                acc += mel.row(b)[c0..c1].iter().sum::<f64>();
            }
            pooled.push(acc / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let std = (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let values = if std > 0.0 {
        pooled.iter().map(|v| (v - mean) / std).collect()
    } else {
        vec![0.0; pooled.len()]
    };
    Ok(EmbeddingVector {
        values,
        provider_id: BASELINE_ID.into(),
        segment_ref: segment_ref.into(),
    })
}

/// Deterministic in-process provider built on [`baseline_embed`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineProvider;

impl EmbeddingProvider for BaselineProvider {
    fn id(&self) -> &str {
        BASELINE_ID
    }

    fn dimension(&self) -> Option<usize> {
        Some(BASELINE_TILES * BASELINE_TILES)
    }

    fn input_mode(&self) -> InputMode {
        InputMode::Spectrogram
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        inputs.iter().map(|i| baseline_embed(i.mel, i.id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(fill: impl Fn(usize, usize) -> f64) -> MelSpectrogram {
        MelSpectrogram {
            values: (0..GRID * GRID).map(|i| fill(i / GRID, i % GRID)).collect(),
            n_mels: GRID,
            n_frames: GRID,
            freq_axis: (0..GRID).map(|i| i as f64).collect(),
            time_axis: (0..GRID).map(|i| i as f64).collect(),
            edges_hz: (0..GRID + 2).map(|i| i as f64).collect(),
            floor_db: -40.0,
        }
    }

    #[test]
    fn constant_grid_embeds_to_zero() {
        let v = baseline_embed(&grid(|_, _| -12.0), "c").unwrap();
        assert_eq!(v.values.len(), 256);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identical_grids_identical_vectors() {
        let g = grid(|b, t| -(((b * 7 + t * 3) % 40) as f64));
        assert_eq!(
            baseline_embed(&g, "a").unwrap().values,
            baseline_embed(&g.clone(), "a").unwrap().values
        );
    }

    #[test]
    fn energy_in_first_tile_maps_to_first_coordinate() {
        let g = grid(|b, t| if b < 14 && t < 14 { 0.0 } else { -40.0 });
        let v = baseline_embed(&g, "t").unwrap();
        let max = v.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(v.values[0], max);
        assert!(v.values[1..].iter().all(|&x| x < max));
        let mean = v.values.iter().sum::<f64>() / 256.0;
        let var = v.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 256.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn last_tile_absorbs_remainder() {
        let b = tile_bounds(227);
        assert_eq!(b[0], (0, 14));
        assert_eq!(b[15], (210, 227));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let mut g = grid(|_, _| 0.0);
        g.n_frames = 100;
        assert!(baseline_embed(&g, "x").is_err());
    }
}
