//! Metrics, k-fold cross-validation and hyperparameter tuning.
//!
//! CV scores are pooled: R² and RMSE are computed once over the concatenated
//! out-of-fold predictions. Fold `f` fits with seed `derive(seed, [FOLD, f])`
//! whatever the candidate, so every candidate in a search sees the same
//! folds and the same random streams.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GrfConfig, Mtry};
use crate::data::SpatialDataset;
use crate::error::{GrfError, Result};
use crate::forest::RandomForest;
use crate::grf::TrainedGrf;
use crate::seed::{self, tag};
use crate::spatial::{isa_scan, IsaGrid, IsaScanResult};

pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(GrfError::LengthMismatch { left: y.len(), right: yhat.len() });
    }
    if y.len() < 2 {
        return Err(GrfError::TooFewRows("R² needs at least 2 values".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(GrfError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(GrfError::LengthMismatch { left: y.len(), right: yhat.len() });
    }
    if y.is_empty() {
        return Err(GrfError::TooFewRows("RMSE needs at least 1 value".into()));
    }
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Seeded shuffled partition of `n` rows into `folds` groups whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(GrfError::TooFewRows(format!("{folds} folds over {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, &[tag::SHUFFLE])));
    let mut labels = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        labels[row] = pos % folds;
    }
    Ok(labels)
}

/// Size of the smallest training set any fold will see.
pub fn min_training_size(n: usize, folds: usize) -> usize {
    n - n.div_ceil(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Grf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub n_test: usize,
    /// `None` when the fold's targets have no variance (e.g. a single row).
    pub r2: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: ModelKind,
    pub config: GrfConfig,
    pub folds: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldScore>,
    pub pooled_r2: f64,
    pub pooled_rmse: f64,
    pub fold_assignment: Vec<usize>,
    /// Out-of-fold predictions in row order.
    pub predictions: Vec<f64>,
    pub models_fitted: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// k-fold cross-validation of a geographical random forest.
pub fn kfold_cv(data: &SpatialDataset, config: &GrfConfig, folds: usize, seed: u64) -> Result<CvReport> {
    cross_validate(data, config, folds, seed, ModelKind::Grf)
}

/// k-fold cross-validation of the plain global forest.
pub fn kfold_cv_rf(data: &SpatialDataset, config: &GrfConfig, folds: usize, seed: u64) -> Result<CvReport> {
    cross_validate(data, config, folds, seed, ModelKind::Rf)
}

pub fn cross_validate(
    data: &SpatialDataset,
    config: &GrfConfig,
    folds: usize,
    seed: u64,
    model: ModelKind,
) -> Result<CvReport> {
    let start = Instant::now();
    let n = data.n_rows();
    let labels = fold_assignment(n, folds, seed)?;

    let fold_preds = config.workers.install(|| {
        (0..folds)
            .into_par_iter()
            .map(|f| {
                let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
                let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
                let train_data = data.subset(&train)?;
                let fold_config = GrfConfig {
                    base_seed: seed::derive(seed, &[tag::FOLD, f as u64]),
                    ..config.clone()
                };
                let preds: Vec<f64> = match model {
                    ModelKind::Grf => {
                        let m = TrainedGrf::fit(&train_data, &fold_config)?;
                        test.iter()
                            .map(|&i| m.predict(data.coords()[i], data.row(i)).map(|p| p.combined))
                            .collect::<Result<_>>()?
                    }
                    ModelKind::Rf => {
                        let m = RandomForest::fit_global(&train_data, &fold_config)?;
                        test.iter().map(|&i| m.predict(data.row(i))).collect::<Result<_>>()?
                    }
                };
                Ok((test, preds))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let y = data.target();
    let mut predictions = vec![0.0; n];
    let mut per_fold = Vec::with_capacity(folds);
    for (f, (test, preds)) in fold_preds.iter().enumerate() {
        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        for (&i, &p) in test.iter().zip(preds) {
            predictions[i] = p;
        }
        per_fold.push(FoldScore {
            fold: f,
            n_test: test.len(),
            r2: r_squared(&truth, preds).ok(),
            rmse: rmse(&truth, preds)?,
        });
    }

    Ok(CvReport {
        model,
        config: config.clone(),
        folds,
        seed,
        per_fold,
        pooled_r2: r_squared(y, &predictions)?,
        pooled_rmse: rmse(y, &predictions)?,
        fold_assignment: labels,
        predictions,
        models_fitted: folds,
        wall_time: start.elapsed(),
    })
}

/// Candidate values of the two forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestGrids {
    pub ntree: Vec<usize>,
    pub mtry: Vec<Mtry>,
}

/// Candidate values for all four GRF hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrids {
    pub ntree: Vec<usize>,
    pub mtry: Vec<Mtry>,
    pub bandwidth: Vec<usize>,
    pub local_weight: Vec<f64>,
}

impl ForestGrids {
    /// `ntree` over `(0, n/2]` in steps of `ntree_step`; `mtry` over `1..=S`
    /// when `S <= 3`, otherwise `{S, S/3, sqrt S}` without duplicates.
    pub fn default_for(n: usize, n_features: usize, ntree_step: usize) -> Self {
        let half = (n / 2).max(1);
        let step = ntree_step.max(1);
        let mut ntree: Vec<usize> = (1..).map(|i| i * step).take_while(|&t| t <= half).collect();
        if ntree.is_empty() {
            ntree.push(half);
        }
        let mtry = if n_features <= 3 {
            (1..=n_features).map(Mtry::Fixed).collect()
        } else {
            let mut seen = Vec::new();
            let mut out = Vec::new();
            for m in [Mtry::All, Mtry::Third, Mtry::Sqrt] {
                let r = m.resolve(n_features);
                if !seen.contains(&r) {
                    seen.push(r);
                    out.push(m);
                }
            }
            out
        };
        Self { ntree, mtry }
    }
}

impl TuneGrids {
    /// Forest grids as in [`ForestGrids::default_for`]; bandwidth from the
    /// 0.05 to the 0.95 quantile of the smallest CV training set in steps of
    /// `bandwidth_step`; local weight in `{0.25, 0.5, 0.75}`.
    pub fn default_for(n: usize, n_features: usize, folds: usize, ntree_step: usize, bandwidth_step: usize) -> Self {
        let ForestGrids { ntree, mtry } = ForestGrids::default_for(n, n_features, ntree_step);
        let n_fit = min_training_size(n, folds.max(2));
        let lo = ((0.05 * n_fit as f64).ceil() as usize).max(2);
        let hi = ((0.95 * n_fit as f64).floor() as usize).min(n_fit.saturating_sub(1));
        let bandwidth = (lo..=hi).step_by(bandwidth_step.max(1)).collect();
        Self { ntree, mtry, bandwidth, local_weight: vec![0.25, 0.5, 0.75] }
    }

    pub fn n_candidates(&self) -> usize {
        self.ntree.len() * self.mtry.len() * self.bandwidth.len() * self.local_weight.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneMethod {
    Grid,
    Isa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub ntree: usize,
    pub mtry: Mtry,
    pub bandwidth: usize,
    pub local_weight: f64,
    pub pooled_rmse: f64,
    pub pooled_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub method: TuneMethod,
    pub chosen: GrfConfig,
    pub chosen_rmse: f64,
    pub chosen_r2: f64,
    pub candidates_evaluated: usize,
    /// GRF fits consumed by cross-validation (folds x candidates).
    pub grf_fits_performed: usize,
    pub folds: usize,
    pub seed: u64,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// The autocorrelation scan, for `method = isa`.
    pub isa: Option<IsaScanResult>,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn evaluate_candidates(
    data: &SpatialDataset,
    candidates: Vec<GrfConfig>,
    folds: usize,
    seed: u64,
) -> Result<(usize, Vec<LeaderboardEntry>)> {
    if candidates.is_empty() {
        return Err(GrfError::EmptyGrid("no candidates"));
    }
    let board = candidates
        .iter()
        .map(|c| {
            let r = kfold_cv(data, c, folds, seed)?;
            Ok(LeaderboardEntry {
                ntree: c.ntree,
                mtry: c.mtry,
                bandwidth: c.bandwidth,
                local_weight: c.local_weight,
                pooled_rmse: r.pooled_rmse,
                pooled_r2: r.pooled_r2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Lowest RMSE; ties go to fewer trees, then the smaller bandwidth, then grid order.
    let best = board
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.pooled_rmse
                .total_cmp(&b.pooled_rmse)
                .then(a.ntree.cmp(&b.ntree))
                .then(a.bandwidth.cmp(&b.bandwidth))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok((best, board))
}

fn check_bandwidths(bandwidths: &[usize], n: usize, folds: usize) -> Result<()> {
    let max = min_training_size(n, folds).saturating_sub(1);
    match bandwidths.iter().find(|&&b| b < 2 || b > max) {
        Some(&lambda) => Err(GrfError::BandwidthTooLarge { lambda, max }),
        None => Ok(()),
    }
}

/// Exhaustive cross-validated search over all four hyperparameters.
pub fn grid_search(
    data: &SpatialDataset,
    grids: &TuneGrids,
    folds: usize,
    seed: u64,
    base: &GrfConfig,
) -> Result<TuneReport> {
    let start = Instant::now();
    if grids.n_candidates() == 0 {
        return Err(GrfError::EmptyGrid("every grid needs at least one value"));
    }
    fold_assignment(data.n_rows(), folds, seed)?;
    check_bandwidths(&grids.bandwidth, data.n_rows(), folds)?;

    let mut candidates = Vec::with_capacity(grids.n_candidates());
    for &ntree in &grids.ntree {
        for &mtry in &grids.mtry {
            for &bandwidth in &grids.bandwidth {
                for &local_weight in &grids.local_weight {
                    candidates.push(GrfConfig {
                        ntree,
                        mtry,
                        bandwidth,
                        local_weight,
                        enable_i1: false,
                        ..base.clone()
                    });
                }
            }
        }
    }
    let n_candidates = candidates.len();
    let (best, leaderboard) = base.workers.install(|| evaluate_candidates(data, candidates.clone(), folds, seed))?;
    Ok(TuneReport {
        method: TuneMethod::Grid,
        chosen: candidates[best].clone(),
        chosen_rmse: leaderboard[best].pooled_rmse,
        chosen_r2: leaderboard[best].pooled_r2,
        candidates_evaluated: n_candidates,
        grf_fits_performed: folds * n_candidates,
        folds,
        seed,
        leaderboard,
        isa: None,
        wall_time: start.elapsed(),
    })
}

/// Bandwidth and local weight from the autocorrelation scan, then a
/// cross-validated search over the forest grids only.
///
/// The scan consumes no GRF fits. Its bandwidth is capped at what the
/// smallest CV training set supports.
pub fn isa_tune(
    data: &SpatialDataset,
    grids: &ForestGrids,
    folds: usize,
    seed: u64,
    base: &GrfConfig,
) -> Result<TuneReport> {
    let start = Instant::now();
    if grids.ntree.is_empty() || grids.mtry.is_empty() {
        return Err(GrfError::EmptyGrid("forest grids need at least one value"));
    }
    let n = data.n_rows();
    fold_assignment(n, folds, seed)?;
    let scan = base
        .workers
        .install(|| isa_scan(data, IsaGrid::default_for(n), base.significance))?;
    let bandwidth = scan.selected_lambda.min(min_training_size(n, folds).saturating_sub(1));
    let local_weight = scan.selected_alpha;

    let mut candidates = Vec::new();
    for &ntree in &grids.ntree {
        for &mtry in &grids.mtry {
            candidates.push(GrfConfig {
                ntree,
                mtry,
                bandwidth,
                local_weight,
                enable_i1: false,
                ..base.clone()
            });
        }
    }
    let n_candidates = candidates.len();
    let (best, leaderboard) = base.workers.install(|| evaluate_candidates(data, candidates.clone(), folds, seed))?;
    Ok(TuneReport {
        method: TuneMethod::Isa,
        chosen: candidates[best].clone(),
        chosen_rmse: leaderboard[best].pooled_rmse,
        chosen_r2: leaderboard[best].pooled_r2,
        candidates_evaluated: n_candidates,
        grf_fits_performed: folds * n_candidates,
        folds,
        seed,
        leaderboard,
        isa: Some(scan),
        wall_time: start.elapsed(),
    })
}

/// One row of the model-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model: String,
    pub ntree: usize,
    pub mtry: Mtry,
    /// `None` for the plain forest.
    pub bandwidth: Option<usize>,
    pub local_weight: Option<f64>,
    pub r2: f64,
    pub rmse: f64,
}

pub const EXPERIMENT_MODELS: [&str; 7] = [
    "RF",
    "GRF",
    "GRF+I1",
    "GRF+I2",
    "GRF+I3",
    "GRF+I1+I2",
    "GRF+I1+I2+I3",
];

/// Cross-validate the plain forest, the default GRF and every improvement
/// variant. `grid_choice` supplies the hyperparameters of RF, GRF, +I2 and
/// +I3; `isa_choice` those of every variant including I1.
pub fn run_experiments(
    data: &SpatialDataset,
    grid_choice: &GrfConfig,
    isa_choice: &GrfConfig,
    folds: usize,
    seed: u64,
) -> Result<Vec<ExperimentRow>> {
    let plain = |c: &GrfConfig| GrfConfig { enable_i1: false, enable_i2: false, enable_i3: false, ..c.clone() };
    let variants: [(&str, ModelKind, GrfConfig); 7] = [
        ("RF", ModelKind::Rf, plain(grid_choice)),
        ("GRF", ModelKind::Grf, plain(grid_choice)),
        ("GRF+I1", ModelKind::Grf, plain(isa_choice)),
        ("GRF+I2", ModelKind::Grf, GrfConfig { enable_i2: true, ..plain(grid_choice) }),
        ("GRF+I3", ModelKind::Grf, GrfConfig { enable_i3: true, ..plain(grid_choice) }),
        ("GRF+I1+I2", ModelKind::Grf, GrfConfig { enable_i2: true, ..plain(isa_choice) }),
        (
            "GRF+I1+I2+I3",
            ModelKind::Grf,
            GrfConfig { enable_i2: true, enable_i3: true, ..plain(isa_choice) },
        ),
    ];
    variants
        .into_iter()
        .map(|(name, kind, cfg)| {
            let r = cross_validate(data, &cfg, folds, seed, kind)?;
            let spatial = kind == ModelKind::Grf;
            Ok(ExperimentRow {
                model: name.to_string(),
                ntree: cfg.ntree,
                mtry: cfg.mtry,
                bandwidth: spatial.then_some(cfg.bandwidth),
                local_weight: spatial.then_some(cfg.local_weight),
                r2: r.pooled_r2,
                rmse: r.pooled_rmse,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), (25.0f64 / 2.0).sqrt());
        assert!((rmse(&y, &[2.0, 2.0, 2.0]).unwrap() - 0.816_496_580_927_726).abs() < 1e-15);
        assert!(matches!(r_squared(&[1.0, 1.0], &[1.0, 2.0]), Err(GrfError::ZeroVariance)));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(GrfError::LengthMismatch { .. })));
    }

    #[test]
    fn fold_sizes_103_by_10() {
        let labels = fold_assignment(103, 10, 4).unwrap();
        let mut sizes = vec![0; 10];
        for l in labels {
            sizes[l] += 1;
        }
        sizes.sort_unstable();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 10, 10, 11, 11, 11]);
        assert!(fold_assignment(5, 1, 0).is_err());
        assert!(fold_assignment(5, 6, 0).is_err());
    }

    #[test]
    fn leave_one_out() {
        let d = synth::regional(12, 0.5, 1).unwrap();
        let c = GrfConfig { ntree: 5, mtry: Mtry::All, bandwidth: 4, ..Default::default() };
        let r = kfold_cv(&d, &c, 12, 3).unwrap();
        assert!(r.per_fold.iter().all(|f| f.n_test == 1 && f.r2.is_none()));
        assert_eq!(r.models_fitted, 12);
    }

    #[test]
    fn memorised_twins_give_near_perfect_r2() {
        // Every row has three exact twins (same coords, features and target).
        let base = synth::regional(30, 0.0, 5).unwrap();
        let idx: Vec<usize> = (0..30).flat_map(|i| [i; 4]).collect();
        let d = base.subset(&idx).unwrap();
        let c = GrfConfig {
            ntree: 30,
            mtry: Mtry::All,
            bandwidth: 4,
            local_weight: 1.0,
            ..Default::default()
        };
        let r = kfold_cv(&d, &c, 10, 2).unwrap();
        assert!(r.pooled_r2 > 0.99, "pooled R² {}", r.pooled_r2);
    }

    #[test]
    fn grid_counts_and_single_candidate() {
        let d = synth::regional(40, 1.0, 6).unwrap();
        let grids = TuneGrids { ntree: vec![5], mtry: vec![Mtry::Fixed(2)], bandwidth: vec![6], local_weight: vec![0.5] };
        let r = grid_search(&d, &grids, 4, 1, &GrfConfig::default()).unwrap();
        assert_eq!(r.chosen.ntree, 5);
        assert_eq!(r.chosen.bandwidth, 6);
        assert_eq!(r.grf_fits_performed, 4);
        let empty = TuneGrids { bandwidth: vec![], ..grids };
        assert!(matches!(grid_search(&d, &empty, 4, 1, &GrfConfig::default()), Err(GrfError::EmptyGrid(_))));
    }

    #[test]
    fn default_grids() {
        let g = TuneGrids::default_for(325, 3, 10, 20, 5);
        assert_eq!(g.ntree.first(), Some(&20));
        assert_eq!(g.ntree.last(), Some(&160));
        assert_eq!(g.mtry, vec![Mtry::Fixed(1), Mtry::Fixed(2), Mtry::Fixed(3)]);
        // smallest training fold: 325 - 33 = 292
        assert_eq!(g.bandwidth.first(), Some(&15));
        assert!(*g.bandwidth.last().unwrap() <= 277);
        assert_eq!(g.local_weight, vec![0.25, 0.5, 0.75]);
        let f = ForestGrids::default_for(1995, 21, 100);
        assert_eq!(f.mtry, vec![Mtry::All, Mtry::Third, Mtry::Sqrt]);
        assert_eq!(f.ntree.len(), 9);
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let labels = fold_assignment(n, k, seed).unwrap();
            prop_assert_eq!(labels.len(), n);
            let mut sizes = vec![0usize; k];
            for &l in &labels { prop_assert!(l < k); sizes[l] += 1; }
            let lo = *sizes.iter().min().unwrap();
            let hi = *sizes.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn metrics_match_two_pass_recomputation(
            pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60)
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let mut ss_res = 0.0;
            let mut ss_tot = 0.0;
            for i in 0..y.len() {
                ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
                ss_tot += (y[i] - mean) * (y[i] - mean);
            }
            prop_assume!(ss_tot > 1e-6);
            prop_assert!((r_squared(&y, &yhat).unwrap() - (1.0 - ss_res / ss_tot)).abs() <= 1e-10 * (1.0 + ss_res / ss_tot));
            prop_assert!((rmse(&y, &yhat).unwrap() - (ss_res / n).sqrt()).abs() <= 1e-10);
        }
    }
}
