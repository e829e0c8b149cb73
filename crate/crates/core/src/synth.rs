//! Synthetic point datasets with known spatial structure.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Point, SpatialDataset};
use crate::error::{GrfError, Result};
use crate::seed;

fn names(s: usize) -> Vec<String> {
    (1..=s).map(|j| format!("x{j}")).collect()
}

fn gaussian(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Tight clusters of `cluster_size` points laid out on a coarse grid.
///
/// Cluster centres are 100 units apart and members sit within one unit of
/// their centre, so each point's `cluster_size - 1` nearest neighbours are
/// exactly its cluster mates. The target is a per-cluster level (alternating
/// in sign between adjacent clusters) plus `noise` times standard normal
/// noise; the two features are uniform and unrelated to the target.
pub fn clustered(n_clusters: usize, cluster_size: usize, noise: f64, seed: u64) -> Result<SpatialDataset> {
    let mut rng = seed::rng(seed);
    let cols = (n_clusters as f64).sqrt().ceil() as usize;
    let mut rows = Vec::new();
    let mut target = Vec::new();
    let mut coords = Vec::new();
    for c in 0..n_clusters {
        let (gx, gy) = (c % cols, c / cols);
        let sign = if (gx + gy) % 2 == 0 { 1.0 } else { -1.0 };
        let level = sign * (5.0 + rng.gen_range(0.0..5.0));
        for _ in 0..cluster_size {
            coords.push(Point::new(
                100.0 * gx as f64 + rng.gen_range(-1.0..1.0),
                100.0 * gy as f64 + rng.gen_range(-1.0..1.0),
            ));
            rows.push(vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]);
            target.push(level + noise * gaussian(&mut rng));
        }
    }
    SpatialDataset::new(rows, target, coords, names(2))
}

/// Quadrant-specific intercepts and slopes for [`regional`].
pub const REGIONAL_COEFFICIENTS: [(f64, [f64; 3]); 4] = [
    (10.0, [3.0, 0.0, 1.0]),
    (30.0, [-2.0, 2.0, 0.0]),
    (-5.0, [0.0, -3.0, 2.0]),
    (20.0, [1.0, 1.0, -2.0]),
];

/// Points uniform on a 100 x 100 square whose target follows a different
/// linear model in each quadrant, plus Gaussian noise with sd `noise`.
/// Features `x1..x3` are uniform on `[0, 10]`.
pub fn regional(n: usize, noise: f64, seed: u64) -> Result<SpatialDataset> {
    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        let p = Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        let q = usize::from(p.x >= 50.0) + 2 * usize::from(p.y >= 50.0);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..10.0)).collect();
        let (b0, b) = REGIONAL_COEFFICIENTS[q];
        let y = b0 + b.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + noise * gaussian(&mut rng);
        coords.push(p);
        rows.push(x);
        target.push(y);
    }
    SpatialDataset::new(rows, target, coords, names(3))
}

/// Replace a `fraction` of targets (at least one row) with `mean + magnitude * sd`.
/// Returns the modified dataset and the affected rows in ascending order.
pub fn with_outliers(
    data: &SpatialDataset,
    fraction: f64,
    magnitude: f64,
    seed: u64,
) -> Result<(SpatialDataset, Vec<usize>)> {
    let n = data.n_rows();
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let y = data.target();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut rng = seed::rng(seed);
    let mut rows = sample(&mut rng, n, count).into_vec();
    rows.sort_unstable();
    let mut target = y.to_vec();
    for &r in &rows {
        target[r] = mean + magnitude * sd;
    }
    Ok((data.with_target(target)?, rows))
}

/// Regular lattice with unit spacing whose target alternates between +1 and
/// -1 like a checkerboard.
///
/// Rook neighbours always differ, so autocorrelation is strongly negative at
/// short range. On a 2-D board the diagonal and distance-two shells share
/// colour and Moran's I turns positive around k = 8..14. A single row
/// (`rows = 1`) stays non-positive at every neighbour count.
pub fn checkerboard(rows: usize, cols: usize, seed: u64) -> Result<SpatialDataset> {
    let mut rng = seed::rng(seed);
    let mut features = Vec::with_capacity(rows * cols);
    let mut target = Vec::with_capacity(rows * cols);
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            coords.push(Point::new(c as f64, r as f64));
            target.push(if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
            features.push(vec![rng.gen_range(0.0..1.0)]);
        }
    }
    SpatialDataset::new(features, target, coords, names(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum SynthKind {
    Clustered,
    Regional,
    Outliers,
    Checkerboard,
}

/// Generate one of the named datasets with roughly `n` rows.
pub fn generate(kind: SynthKind, n: usize, seed: u64) -> Result<SpatialDataset> {
    if n < 4 {
        return Err(GrfError::EmptyData(n));
    }
    match kind {
        SynthKind::Clustered => clustered(n.div_ceil(11), 11, 0.1, seed),
        SynthKind::Regional => regional(n, 2.0, seed),
        SynthKind::Outliers => Ok(with_outliers(&regional(n, 2.0, seed)?, 0.01, 20.0, seed)?.0),
        SynthKind::Checkerboard => {
            let side = (n as f64).sqrt().ceil() as usize;
            checkerboard(side, side, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::NeighborIndex;

    #[test]
    fn cluster_mates_are_nearest() {
        let d = clustered(6, 5, 0.1, 1).unwrap();
        let idx = NeighborIndex::new(d.coords().to_vec());
        for i in 0..d.n_rows() {
            let nb = idx.neighbors_of(i, 4).unwrap();
            assert!(nb.iter().all(|n| n.index / 5 == i / 5));
        }
    }

    #[test]
    fn outliers_replace_expected_count() {
        let d = regional(300, 1.0, 2).unwrap();
        let (o, rows) = with_outliers(&d, 0.01, 20.0, 3).unwrap();
        assert_eq!(rows.len(), 3);
        for i in 0..300 {
            assert_eq!(o.target()[i] != d.target()[i], rows.contains(&i));
        }
    }

    #[test]
    fn alternating_row_is_never_positively_autocorrelated() {
        let d = checkerboard(1, 40, 0).unwrap();
        let scan = crate::spatial::isa_scan(&d, crate::spatial::IsaGrid { k_min: 2, k_max: 39, k_step: 1 }, 0.05).unwrap();
        assert!(scan.results.iter().all(|r| r.moran_i <= 0.0));
        assert_eq!(scan.selected_alpha, 0.0);
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(regional(50, 1.0, 7).unwrap(), regional(50, 1.0, 7).unwrap());
        assert_ne!(regional(50, 1.0, 7).unwrap(), regional(50, 1.0, 8).unwrap());
    }
}
