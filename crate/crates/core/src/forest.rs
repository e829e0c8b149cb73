//! Bagged random forest regressor.
//!
//! Used both as the global model and as every local model of a
//! [`TrainedGrf`](crate::grf::TrainedGrf). Optional case weights act twice:
//! as bootstrap sampling probabilities and as impurity weights inside each tree.
//! Tree `t` draws its randomness from `seed::derive(seed, [TREE, t])`, so a
//! forest is bit-identical whatever the worker count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GrfConfig;
use crate::data::SpatialDataset;
use crate::error::{GrfError, Result};
use crate::seed::{self, tag};
use crate::tree::RegressionTree;

/// Draw `size` indices in `0..n` with replacement, uniformly or proportionally
/// to `weights`.
pub fn bootstrap_sample(n: usize, weights: Option<&[f64]>, size: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(GrfError::TooFewRows("bootstrap needs n >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    match weights {
        None => Ok((0..size).map(|_| rng.gen_range(0..n)).collect()),
        Some(w) => {
            if w.len() != n {
                return Err(GrfError::LengthMismatch { left: n, right: w.len() });
            }
            let dist = WeightedIndex::new(w).map_err(|e| match e {
                rand::distributions::WeightedError::AllWeightsZero => GrfError::AllWeightsZero,
                other => GrfError::InvalidConfig(format!("bootstrap weights: {other}")),
            })?;
            Ok((0..size).map(|_| dist.sample(&mut rng)).collect())
        }
    }
}

/// Tree-level settings shared by every tree of a forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub ntree: usize,
    pub mtry: usize,
    pub min_leaf_size: usize,
}

impl ForestParams {
    pub fn from_config(config: &GrfConfig, n_features: usize) -> Self {
        Self {
            ntree: config.ntree,
            mtry: config.mtry.resolve(n_features),
            min_leaf_size: config.min_leaf_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    mtry: usize,
    /// Impurity importance normalised to sum to 1, or all zero.
    importance: Vec<f64>,
}

/// Seeds used for tree `index` of a forest fit with `seed`:
/// `(bootstrap seed, split seed)`.
pub fn tree_seeds(seed: u64, index: usize) -> (u64, u64) {
    let tree_seed = seed::derive(seed, &[tag::TREE, index as u64]);
    (tree_seed, seed::derive(tree_seed, &[tag::SPLIT]))
}

/// Scale `raw` to sum to 1; all zeros when the total is zero.
pub fn normalize_importance(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

impl RandomForest {
    /// Fit on the multiset `rows` of `data`; `weights` (aligned with `rows`)
    /// are optional case weights. Each tree sees a bootstrap sample of size `rows.len()`.
    pub fn fit(
        data: &SpatialDataset,
        rows: &[usize],
        weights: Option<&[f64]>,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(GrfError::TooFewRows("forest needs at least one row".into()));
        }
        if params.ntree == 0 {
            return Err(GrfError::InvalidConfig("ntree must be positive".into()));
        }
        if let Some(w) = weights {
            if w.len() != rows.len() {
                return Err(GrfError::LengthMismatch { left: rows.len(), right: w.len() });
            }
        }
        let m = rows.len();
        let trees = (0..params.ntree)
            .into_par_iter()
            .map(|t| {
                let (boot_seed, split_seed) = tree_seeds(seed, t);
                let picks = bootstrap_sample(m, weights, m, boot_seed)?;
                let tree_rows: Vec<usize> = picks.iter().map(|&p| rows[p]).collect();
                let tree_weights: Vec<f64> = match weights {
                    Some(w) => picks.iter().map(|&p| w[p]).collect(),
                    None => vec![1.0; m],
                };
                RegressionTree::fit(data, &tree_rows, &tree_weights, params.mtry, params.min_leaf_size, split_seed)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut raw = vec![0.0; data.n_features()];
        for t in &trees {
            for (acc, v) in raw.iter_mut().zip(t.importance_raw()) {
                *acc += v;
            }
        }
        Ok(Self {
            trees,
            mtry: params.mtry,
            importance: normalize_importance(&raw),
        })
    }

    /// Plain forest on every row of `data`, seeded with `config.base_seed`.
    /// This is exactly the global model of a GRF fit with the same config.
    pub fn fit_global(data: &SpatialDataset, config: &GrfConfig) -> Result<Self> {
        config.validate_forest(data.n_features())?;
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let params = ForestParams::from_config(config, data.n_features());
        config
            .workers
            .install(|| Self::fit(data, &rows, None, &params, config.base_seed))
    }

    /// Unweighted mean of the tree predictions.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let s = self.n_features();
        if row.len() != s {
            return Err(GrfError::DimensionMismatch { expected: s, got: row.len() });
        }
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_unchecked(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn ntree(&self) -> usize {
        self.trees.len()
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn n_features(&self) -> usize {
        self.importance.len()
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }
}
