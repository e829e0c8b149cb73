//! Weighted CART regression tree.
//!
//! Impurity is the weighted sum of squared deviations from the weighted node
//! mean. Sample weights enter the impurity, the leaf values and the stopping
//! rule. At every node a seeded random subset of `mtry` features is searched;
//! thresholds sit midway between consecutive distinct values, and equal gains
//! go to the lowest feature index, then the lowest threshold.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::SpatialDataset;
use crate::error::{GrfError, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    /// Total weighted impurity decrease attributed to each feature.
    importance_raw: Vec<f64>,
}

/// Relative gain below which a split counts as no improvement.
const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Clone, Copy)]
struct Sample {
    row: usize,
    weight: f64,
}

struct Builder<'a> {
    data: &'a SpatialDataset,
    mtry: usize,
    min_leaf: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    // scratch: (feature value, weight, centred target)
    sorted: Vec<(f64, f64, f64)>,
}

fn weighted_mean_sse(data: &SpatialDataset, samples: &[Sample]) -> (f64, f64, f64) {
    let y = data.target();
    let w: f64 = samples.iter().map(|s| s.weight).sum();
    let mean = samples.iter().map(|s| s.weight * y[s.row]).sum::<f64>() / w;
    let sse = samples
        .iter()
        .map(|s| {
            let d = y[s.row] - mean;
            s.weight * d * d
        })
        .sum();
    (w, mean, sse)
}

impl Builder<'_> {
    fn build(&mut self, samples: &mut [Sample]) -> usize {
        let (_, mean, sse) = weighted_mean_sse(self.data, samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });

        let y = self.data.target();
        let constant = samples.iter().all(|s| y[s.row] == y[samples[0].row]);
        if samples.len() < 2 * self.min_leaf || constant || sse <= 0.0 {
            return id;
        }

        let Some((feature, threshold)) = self.best_split(samples, mean, sse) else {
            return id;
        };

        let mut split = 0;
        for i in 0..samples.len() {
            if self.data.feature(samples[i].row, feature) <= threshold {
                samples.swap(i, split);
                split += 1;
            }
        }
        let (left_samples, right_samples) = samples.split_at_mut(split);
        let (_, _, sse_left) = weighted_mean_sse(self.data, left_samples);
        let (_, _, sse_right) = weighted_mean_sse(self.data, right_samples);
        self.importance[feature] += (sse - sse_left - sse_right).max(0.0);

        let left = self.build(left_samples);
        let right = self.build(right_samples);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let s = self.data.n_features();
        let mut all: Vec<usize> = (0..s).collect();
        for i in 0..self.mtry {
            let j = self.rng.gen_range(i..s);
            all.swap(i, j);
        }
        all.truncate(self.mtry);
        all.sort_unstable();
        all
    }

    fn best_split(&mut self, samples: &[Sample], mean: f64, sse: f64) -> Option<(usize, f64)> {
        let features = self.candidate_features();
        let y = self.data.target();
        let total_w: f64 = samples.iter().map(|s| s.weight).sum();
        let m = samples.len();
        let mut best: Option<(f64, usize, f64)> = None;

        for f in features {
            self.sorted.clear();
            self.sorted.extend(samples.iter().map(|s| {
                (self.data.feature(s.row, f), s.weight, s.weight * (y[s.row] - mean))
            }));
            self.sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut w_left = 0.0;
            let mut a_left = 0.0;
            for i in 1..m {
                let (prev, w, a) = self.sorted[i - 1];
                w_left += w;
                a_left += a;
                let next = self.sorted[i].0;
                if prev == next || i < self.min_leaf || m - i < self.min_leaf {
                    continue;
                }
                let w_right = total_w - w_left;
                // Centred sums: the right-hand sum is -a_left.
                let gain = a_left * a_left / w_left + a_left * a_left / w_right;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    let mut threshold = prev + (next - prev) / 2.0;
                    if threshold >= next {
                        threshold = prev;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }

        match best {
            Some((gain, f, t)) if gain > sse * MIN_RELATIVE_GAIN => Some((f, t)),
            _ => None,
        }
    }
}

impl RegressionTree {
    /// Fit on the multiset `rows` of `data` with per-sample `weights`.
    ///
    /// Zero-weight samples are dropped. A node becomes a leaf when it holds
    /// fewer than `2 * min_leaf_size` samples, its target is constant, or no
    /// split reduces impurity; every child keeps at least `min_leaf_size` samples.
    pub fn fit(
        data: &SpatialDataset,
        rows: &[usize],
        weights: &[f64],
        mtry: usize,
        min_leaf_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if rows.len() != weights.len() {
            return Err(GrfError::LengthMismatch { left: rows.len(), right: weights.len() });
        }
        let s = data.n_features();
        if mtry == 0 || mtry > s {
            return Err(GrfError::InvalidConfig(format!("mtry {mtry} outside [1, {s}]")));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GrfError::InvalidConfig("weights must be finite and non-negative".into()));
        }
        let mut samples: Vec<Sample> = rows
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(&row, &weight)| Sample { row, weight })
            .collect();
        if samples.is_empty() {
            return Err(GrfError::AllWeightsZero);
        }

        let mut builder = Builder {
            data,
            mtry,
            min_leaf: min_leaf_size.max(1),
            rng: seed::rng(seed),
            nodes: Vec::new(),
            importance: vec![0.0; s],
            sorted: Vec::with_capacity(samples.len()),
        };
        builder.build(&mut samples);
        Ok(Self {
            nodes: builder.nodes,
            n_features: s,
            importance_raw: builder.importance,
        })
    }

    /// Unweighted convenience wrapper over [`Self::fit`].
    pub fn fit_unweighted(
        data: &SpatialDataset,
        rows: &[usize],
        mtry: usize,
        min_leaf_size: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::fit(data, rows, &vec![1.0; rows.len()], mtry, min_leaf_size, seed)
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(GrfError::DimensionMismatch { expected: self.n_features, got: row.len() });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split { feature, threshold, left, right } = self.nodes[i] {
            i = if row[feature] <= threshold { left } else { right };
        }
        i
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn importance_raw(&self) -> &[f64] {
        &self.importance_raw
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Point;
    use proptest::prelude::*;

    fn dataset(rows: Vec<Vec<f64>>, target: Vec<f64>) -> SpatialDataset {
        let n = target.len();
        let s = rows[0].len();
        SpatialDataset::new(
            rows,
            target,
            (0..n).map(|i| Point::new(i as f64, 0.0)).collect(),
            (0..s).map(|j| format!("f{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let d = dataset((0..10).map(|i| vec![i as f64]).collect(), vec![5.0; 10]);
        let rows: Vec<usize> = (0..10).collect();
        let w: Vec<f64> = (0..10).map(|i| 0.1 + i as f64).collect();
        let t = RegressionTree::fit(&d, &rows, &w, 1, 1, 3).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[123.0]).unwrap(), 5.0);
        assert!(t.importance_raw().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn separable_depth_one() {
        let mut rows = vec![vec![0.0]; 5];
        rows.extend(vec![vec![1.0]; 5]);
        let mut y = vec![0.0; 5];
        y.extend(vec![1.0; 5]);
        let d = dataset(rows, y);
        let t = RegressionTree::fit_unweighted(&d, &(0..10).collect::<Vec<_>>(), 1, 1, 0).unwrap();
        assert_eq!(t.nodes().len(), 3);
        assert_eq!(t.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(t.predict(&[1.0]).unwrap(), 1.0);
        match t.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn weighted_leaf_mean() {
        // Same feature value: no split possible, so the root leaf holds both.
        let d = dataset(vec![vec![1.0], vec![1.0]], vec![0.0, 10.0]);
        let t = RegressionTree::fit(&d, &[0, 1], &[3.0, 1.0], 1, 1, 0).unwrap();
        assert_eq!(t.predict(&[1.0]).unwrap(), 2.5);
    }

    #[test]
    fn errors() {
        let d = dataset(vec![vec![1.0], vec![2.0]], vec![0.0, 10.0]);
        assert!(matches!(
            RegressionTree::fit(&d, &[0, 1], &[0.0, 0.0], 1, 1, 0),
            Err(GrfError::AllWeightsZero)
        ));
        let t = RegressionTree::fit_unweighted(&d, &[0, 1], 1, 1, 0).unwrap();
        assert!(matches!(t.predict(&[1.0, 2.0]), Err(GrfError::DimensionMismatch { .. })));
    }

    #[test]
    fn min_leaf_size_respected() {
        let d = dataset((0..20).map(|i| vec![i as f64]).collect(), (0..20).map(|i| (i * i) as f64).collect());
        let rows: Vec<usize> = (0..20).collect();
        let t = RegressionTree::fit_unweighted(&d, &rows, 1, 4, 1).unwrap();
        let mut counts = vec![0usize; t.nodes().len()];
        for &r in &rows {
            counts[t.leaf_index(d.row(r))] += 1;
        }
        for (i, n) in t.nodes().iter().enumerate() {
            if matches!(n, Node::Leaf { .. }) {
                assert!(counts[i] >= 4, "leaf {i} holds {}", counts[i]);
            }
        }
    }

    fn random_problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, u64)> {
        (5usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(-5i32..5, 3), n)
                    .prop_map(|r| r.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect()),
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(0.0f64..2.0, n),
                any::<u64>(),
            )
        })
    }

    proptest! {
        #[test]
        fn leaves_replay_weighted_means((rows, y, w, seed) in random_problem()) {
            prop_assume!(w.iter().any(|&v| v > 0.0));
            let d = dataset(rows, y.clone());
            let idx: Vec<usize> = (0..y.len()).collect();
            let t = RegressionTree::fit(&d, &idx, &w, 2, 1, seed).unwrap();

            let mut sum_w = vec![0.0; t.nodes().len()];
            let mut sum_wy = vec![0.0; t.nodes().len()];
            for i in 0..y.len() {
                if w[i] > 0.0 {
                    let leaf = t.leaf_index(d.row(i));
                    sum_w[leaf] += w[i];
                    sum_wy[leaf] += w[i] * y[i];
                }
            }
            let mut leaf_sse = 0.0;
            for i in 0..y.len() {
                if w[i] > 0.0 {
                    let leaf = t.leaf_index(d.row(i));
                    let mean = sum_wy[leaf] / sum_w[leaf];
                    leaf_sse += w[i] * (y[i] - mean).powi(2);
                }
            }
            for (i, node) in t.nodes().iter().enumerate() {
                if let Node::Leaf { value } = node {
                    if sum_w[i] > 0.0 {
                        prop_assert!((value - sum_wy[i] / sum_w[i]).abs() <= 1e-10 * (1.0 + value.abs()));
                    }
                }
            }

            let tw: f64 = w.iter().sum();
            let mean = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / tw;
            let root_sse: f64 = w.iter().zip(&y).map(|(a, b)| a * (b - mean).powi(2)).sum();
            let imp: f64 = t.importance_raw().iter().sum();
            prop_assert!(t.importance_raw().iter().all(|&v| v >= 0.0));
            prop_assert!((imp - (root_sse - leaf_sse)).abs() <= 1e-8 * (1.0 + root_sse));
        }

        #[test]
        fn monotone_transform_invariance((rows, y, _w, seed) in random_problem()) {
            let d = dataset(rows.clone(), y.clone());
            let transformed: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![(r[0] * 0.3).exp() + 2.0 * r[0], r[1], r[2]])
                .collect();
            let dt = dataset(transformed.clone(), y.clone());
            let idx: Vec<usize> = (0..y.len()).collect();
            let a = RegressionTree::fit_unweighted(&d, &idx, 2, 1, seed).unwrap();
            let b = RegressionTree::fit_unweighted(&dt, &idx, 2, 1, seed).unwrap();
            for i in 0..y.len() {
                prop_assert_eq!(a.predict(&rows[i]).unwrap(), b.predict(&transformed[i]).unwrap());
            }
        }
    }
}
