//! Neighbour search, kernel weights and global spatial autocorrelation.
//!
//! Bandwidths are neighbour counts. Moran's I uses binary k-nearest-neighbour
//! adjacency, row-standardised and not symmetrised; significance comes from
//! the randomisation-assumption variance with a two-sided normal p-value.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{Point, SpatialDataset};
use crate::error::{GrfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

/// Exact k-nearest-neighbour queries over a fixed point set.
///
/// Results are ordered by `(distance, index)`, which makes ties between
/// equidistant or duplicate points deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    points: Vec<Point>,
}

impl NeighborIndex {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// The `k` points nearest to `point`, skipping index `exclude` if given.
    pub fn query(&self, point: Point, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        let available = self.points.len() - usize::from(exclude.is_some_and(|e| e < self.points.len()));
        if k == 0 || k > available {
            return Err(GrfError::KTooLarge { k, available });
        }
        let mut all: Vec<Neighbor> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(index, p)| Neighbor { index, distance: point.distance(p) })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, by_distance_then_index);
            all.truncate(k);
        }
        all.sort_unstable_by(by_distance_then_index);
        Ok(all)
    }

    /// Neighbours of indexed point `i`, excluding itself.
    pub fn neighbors_of(&self, i: usize, k: usize) -> Result<Vec<Neighbor>> {
        self.query(self.points[i], k, Some(i))
    }
}

/// Bisquare kernel `(1 - (d/b)^2)^2` for `d < b`, zero otherwise.
pub fn bisquare(distance: f64, bandwidth: f64) -> f64 {
    if distance < bandwidth {
        let r = distance / bandwidth;
        let t = 1.0 - r * r;
        t * t
    } else {
        0.0
    }
}

pub fn bisquare_weights(distances: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() || distances.iter().any(|d| !(*d >= 0.0)) {
        return Err(GrfError::NonPositiveBandwidthDistance);
    }
    Ok(distances.iter().map(|&d| bisquare(d, bandwidth)).collect())
}

/// Sparse spatial weight matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SpatialWeights {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    /// Binary k-nearest-neighbour adjacency with every row scaled to sum to 1.
    pub fn knn_row_standardized(index: &NeighborIndex, k: usize) -> Result<Self> {
        let w = 1.0 / k as f64;
        let rows = (0..index.len())
            .into_par_iter()
            .map(|i| {
                index
                    .neighbors_of(i, k)
                    .map(|nb| nb.into_iter().map(|n| (n.index, w)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(S0, S1, S2)` of the Cliff-Ord moments.
    fn sums(&self) -> (f64, f64, f64) {
        let n = self.rows.len();
        let mut lookup: HashMap<(usize, usize), f64> = HashMap::new();
        let mut row_sum = vec![0.0; n];
        let mut col_sum = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                *lookup.entry((i, j)).or_insert(0.0) += w;
                row_sum[i] += w;
                col_sum[j] += w;
            }
        }
        let s0: f64 = row_sum.iter().sum();
        let mut s1 = 0.0;
        for (&(i, j), &w) in &lookup {
            match lookup.get(&(j, i)) {
                Some(&back) => s1 += (w + back) * (w + back),
                // (i,j) and its absent mirror (j,i) both contribute w^2
                None => s1 += 2.0 * w * w,
            }
        }
        let s2 = row_sum.iter().zip(&col_sum).map(|(r, c)| (r + c) * (r + c)).sum();
        (s0, 0.5 * s1, s2)
    }
}

/// Global Moran's I with randomisation-assumption inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    /// Neighbour count of the weight matrix, 0 when not k-NN based.
    pub k: usize,
    pub moran_i: f64,
    pub expected_i: f64,
    pub variance: f64,
    pub z_score: f64,
    pub p_value: f64,
}

struct Centered {
    z: Vec<f64>,
    m2: f64,
    b2: f64,
}

fn center(values: &[f64]) -> Result<Centered> {
    let n = values.len();
    if n < 4 {
        return Err(GrfError::TooFewRows(format!("Moran's I inference needs n >= 4, got {n}")));
    }
    if values.iter().any(|v| *v != values[0]) {
        let mean = values.iter().sum::<f64>() / n as f64;
        let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let m2: f64 = z.iter().map(|v| v * v).sum();
        let m4: f64 = z.iter().map(|v| v.powi(4)).sum();
        if m2 > 0.0 {
            let b2 = n as f64 * m4 / (m2 * m2);
            return Ok(Centered { z, m2, b2 });
        }
    }
    Err(GrfError::ZeroVariance)
}

fn inference(k: usize, n: usize, moran_i: f64, s0: f64, s1: f64, s2: f64, b2: f64) -> MoranResult {
    let nf = n as f64;
    let expected_i = -1.0 / (nf - 1.0);
    let s02 = s0 * s0;
    let num = nf * ((nf * nf - 3.0 * nf + 3.0) * s1 - nf * s2 + 3.0 * s02)
        - b2 * ((nf * nf - nf) * s1 - 2.0 * nf * s2 + 6.0 * s02);
    let den = (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * s02;
    let second_moment = num / den;
    let mut variance = second_moment - expected_i * expected_i;
    // Anything below the cancellation error is a true zero (e.g. k = n - 1).
    if variance.abs() <= 1e-10 * second_moment.abs() {
        variance = 0.0;
    }
    let (z_score, p_value) = if variance > 0.0 && variance.is_finite() {
        let z = (moran_i - expected_i) / variance.sqrt();
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
    } else {
        (0.0, 1.0)
    };
    MoranResult { k, moran_i, expected_i, variance, z_score, p_value }
}

/// Moran's I of `values` under the weight matrix `weights`.
pub fn morans_i(values: &[f64], weights: &SpatialWeights) -> Result<MoranResult> {
    if values.len() != weights.len() {
        return Err(GrfError::LengthMismatch { left: values.len(), right: weights.len() });
    }
    let c = center(values)?;
    let (s0, s1, s2) = weights.sums();
    if s0 <= 0.0 {
        return Err(GrfError::InvalidConfig("weight matrix is empty".into()));
    }
    let cross: f64 = weights
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| c.z[i] * row.iter().map(|&(j, w)| w * c.z[j]).sum::<f64>())
        .sum();
    let n = values.len();
    let moran_i = n as f64 / s0 * cross / c.m2;
    let k = weights.rows().first().map_or(0, Vec::len);
    let uniform_k = weights.rows().iter().all(|r| r.len() == k);
    Ok(inference(if uniform_k { k } else { 0 }, n, moran_i, s0, s1, s2, c.b2))
}

/// Moran's I at a single neighbour count.
pub fn morans_i_knn(values: &[f64], index: &NeighborIndex, k: usize) -> Result<MoranResult> {
    let w = SpatialWeights::knn_row_standardized(index, k)?;
    let mut r = morans_i(values, &w)?;
    r.k = k;
    Ok(r)
}

/// Neighbour-count grid `k_min..=k_max` in steps of `k_step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsaGrid {
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
}

impl IsaGrid {
    /// `max(2, ceil(0.05 n))` to `floor(0.95 n)` (capped at `n - 1`), step 1.
    pub fn default_for(n: usize) -> Self {
        let k_min = ((0.05 * n as f64).ceil() as usize).max(2);
        let k_max = ((0.95 * n as f64).floor() as usize).min(n.saturating_sub(1));
        Self { k_min, k_max, k_step: 1 }
    }

    pub fn values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.k_step.max(1)).collect()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.k_step == 0 || self.k_min > self.k_max {
            return Err(GrfError::EmptyGrid("neighbour-count grid"));
        }
        if self.k_min == 0 {
            return Err(GrfError::InvalidConfig("neighbour counts start at 1".into()));
        }
        if self.k_max > n.saturating_sub(1) {
            return Err(GrfError::KTooLarge { k: self.k_max, available: n.saturating_sub(1) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaScanResult {
    pub results: Vec<MoranResult>,
    pub significance: f64,
    /// Neighbour count with the highest z-score (smallest on ties).
    pub selected_lambda: usize,
    /// Moran's I at `selected_lambda` if positive and significant, else 0.
    pub selected_alpha: f64,
}

impl IsaScanResult {
    pub fn selected(&self) -> Option<&MoranResult> {
        self.results.iter().find(|r| r.k == self.selected_lambda)
    }
}

/// Pick the bandwidth and local weight from a scan.
pub fn select_from_scan(results: &[MoranResult], significance: f64) -> Result<(usize, f64)> {
    let mut best: Option<&MoranResult> = None;
    for r in results {
        if r.z_score.is_nan() {
            continue;
        }
        if best.is_none_or(|b| r.z_score > b.z_score) {
            best = Some(r);
        }
    }
    let best = best.ok_or(GrfError::EmptyGrid("no finite z-score in scan"))?;
    let alpha = if best.moran_i > 0.0 && best.p_value < significance {
        // Row-standardised k-NN weights are asymmetric, so I can exceed 1 slightly.
        best.moran_i.min(1.0)
    } else {
        0.0
    };
    Ok((best.k, alpha))
}

/// Incremental spatial autocorrelation of the dataset's target over `grid`.
pub fn isa_scan(data: &SpatialDataset, grid: IsaGrid, significance: f64) -> Result<IsaScanResult> {
    isa_scan_values(data.coords(), data.target(), grid, significance)
}

/// [`isa_scan`] on arbitrary values at `coords`.
///
/// Grows every point's neighbour list one rank at a time and updates the
/// cross-product and weight moments incrementally, so the whole scan costs
/// about one k-NN pass at `k_max`.
pub fn isa_scan_values(coords: &[Point], values: &[f64], grid: IsaGrid, significance: f64) -> Result<IsaScanResult> {
    let n = values.len();
    if coords.len() != n {
        return Err(GrfError::LengthMismatch { left: coords.len(), right: n });
    }
    grid.check(n)?;
    let c = center(values)?;
    let index = NeighborIndex::new(coords.to_vec());
    let k_max = grid.k_max;

    let lists: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|i| index.neighbors_of(i, k_max))
        .collect::<Result<_>>()?;

    // mutual_at[m]: unordered pairs whose larger mutual rank is m.
    let mutual_at: Vec<u64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut hist = vec![0u64; k_max];
            for (r, nb) in lists[i].iter().enumerate() {
                let j = nb.index;
                if j <= i {
                    continue;
                }
                let probe = Neighbor { index: i, distance: nb.distance };
                if let Ok(s) = lists[j].binary_search_by(|x| by_distance_then_index(x, &probe)) {
                    hist[r.max(s)] += 1;
                }
            }
            hist
        })
        .reduce(
            || vec![0u64; k_max],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let wanted = grid.values();
    let mut next = 0;
    let mut cross = 0.0;
    let mut mutual_pairs = 0u64;
    let mut in_degree = vec![0u64; n];
    let mut results = Vec::with_capacity(wanted.len());
    let nf = n as f64;
    for k in 1..=k_max {
        let r = k - 1;
        for (i, list) in lists.iter().enumerate() {
            let j = list[r].index;
            cross += c.z[i] * c.z[j];
            in_degree[j] += 1;
        }
        mutual_pairs += mutual_at[r];
        if next < wanted.len() && wanted[next] == k {
            next += 1;
            let kf = k as f64;
            let s0 = nf;
            let s1 = (2.0 * mutual_pairs as f64 + nf * kf) / (kf * kf);
            let s2: f64 = in_degree.iter().map(|&d| (1.0 + d as f64 / kf).powi(2)).sum();
            let moran_i = cross / kf / c.m2;
            results.push(inference(k, n, moran_i, s0, s1, s2, c.b2));
        }
    }

    let (selected_lambda, selected_alpha) = select_from_scan(&results, significance)?;
    Ok(IsaScanResult { results, significance, selected_lambda, selected_alpha })
}
