//! Geographical random forest.
//!
//! One global forest on every row plus one local forest anchored at each
//! training instance. A prediction blends the two:
//! `combined = alpha * local + (1 - alpha) * global`.
//!
//! Local training sets are the `bandwidth` nearest instances of an anchor
//! (the anchor included by default), weighted with a bisquare kernel whose
//! radius reaches the farthest member. With `enable_i2` small local sets are
//! bootstrap-expanded; with `enable_i3` the local prediction becomes a
//! kernel-weighted mean over the `bandwidth` nearest local models instead of
//! the single nearest one.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{GrfConfig, Workers};
use crate::data::{Point, SpatialDataset};
use crate::error::{GrfError, Result};
use crate::forest::{ForestParams, RandomForest};
use crate::seed::{self, tag};
use crate::spatial::{bisquare, isa_scan, IsaGrid, IsaScanResult, NeighborIndex};

/// Floor applied to kernel weights that would otherwise be zero at the edge
/// of a neighbourhood.
pub const KERNEL_WEIGHT_FLOOR: f64 = 1e-8;

pub const MODEL_FORMAT: &str = "georf-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Size of the expanded local training set, or `None` when no expansion
/// applies (`|D| >= 2 * ntree`).
pub fn expansion_size(local_size: usize, ntree: usize) -> Option<usize> {
    (local_size < 2 * ntree).then(|| (2 * ntree).min(2 * local_size))
}

/// Bootstrap-expand a small local training set.
///
/// Returns a multiset of `min(2 ntree, 2 |D|)` rows drawn uniformly with
/// replacement when `|D| < 2 ntree`, otherwise `local_rows` unchanged.
pub fn expand_local_samples(local_rows: &[usize], ntree: usize, seed: u64) -> Vec<usize> {
    match expansion_size(local_rows.len(), ntree) {
        Some(size) if !local_rows.is_empty() => {
            let mut rng = seed::rng(seed);
            (0..size).map(|_| local_rows[rng.gen_range(0..local_rows.len())]).collect()
        }
        _ => local_rows.to_vec(),
    }
}

/// Bisquare weights over `distances` with the radius at the largest distance.
/// Weights that vanish at the radius are floored to [`KERNEL_WEIGHT_FLOOR`];
/// if every distance is zero all weights are 1.
pub fn neighborhood_weights(distances: &[f64]) -> Vec<f64> {
    let radius = distances.iter().cloned().fold(0.0, f64::max);
    if radius <= 0.0 {
        return vec![1.0; distances.len()];
    }
    distances
        .iter()
        .map(|&d| bisquare(d, radius).max(KERNEL_WEIGHT_FLOOR))
        .collect()
}

/// `sum(w * p) / sum(w)`, clamped to the range of `predictions` so rounding
/// can never push it outside.
pub fn weighted_blend(weights: &[f64], predictions: &[f64]) -> f64 {
    let num: f64 = weights.iter().zip(predictions).map(|(w, p)| w * p).sum();
    let den: f64 = weights.iter().sum();
    let lo = predictions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = predictions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (num / den).clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub forest: RandomForest,
    /// Rows in the neighbourhood before expansion.
    pub neighborhood_size: usize,
    /// Rows the local forest was trained on (after any expansion).
    pub training_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingStats {
    /// Local models whose training set was bootstrap-expanded.
    pub expanded_count: usize,
    pub sample_sizes: Vec<usize>,
}

/// Column names a model was trained with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSchema {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub coord_names: [String; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfPrediction {
    pub combined: f64,
    pub local: f64,
    pub global: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGrf {
    /// Configuration with bandwidth and local weight as actually used.
    config: GrfConfig,
    schema: ModelSchema,
    global_forest: RandomForest,
    local_models: Vec<LocalModel>,
    anchors: NeighborIndex,
    anchor_ids: Vec<String>,
    training_stats: TrainingStats,
    isa: Option<IsaScanResult>,
}

static FITS_STARTED: AtomicU64 = AtomicU64::new(0);

/// Number of [`TrainedGrf::fit`] calls made by this process so far.
pub fn fits_started() -> u64 {
    FITS_STARTED.load(Ordering::Relaxed)
}

/// Fit a geographical random forest.
pub fn fit_grf(data: &SpatialDataset, config: &GrfConfig) -> Result<TrainedGrf> {
    TrainedGrf::fit(data, config)
}

impl TrainedGrf {
    pub fn fit(data: &SpatialDataset, config: &GrfConfig) -> Result<Self> {
        FITS_STARTED.fetch_add(1, Ordering::Relaxed);
        let n = data.n_rows();
        config.validate(n, data.n_features())?;
        config.workers.install(|| Self::fit_inner(data, config))
    }

    fn fit_inner(data: &SpatialDataset, config: &GrfConfig) -> Result<Self> {
        let n = data.n_rows();
        let mut resolved = config.clone();
        let isa = if config.enable_i1 {
            let scan = isa_scan(data, IsaGrid::default_for(n), config.significance)?;
            resolved.bandwidth = scan.selected_lambda;
            resolved.local_weight = scan.selected_alpha;
            Some(scan)
        } else {
            None
        };

        let params = ForestParams::from_config(&resolved, data.n_features());
        let all_rows: Vec<usize> = (0..n).collect();
        let global_forest = RandomForest::fit(data, &all_rows, None, &params, resolved.base_seed)?;

        let anchors = NeighborIndex::new(data.coords().to_vec());
        let local_models = (0..n)
            .into_par_iter()
            .map(|i| fit_local(data, &anchors, i, &resolved, &params))
            .collect::<Result<Vec<_>>>()?;

        let training_stats = TrainingStats {
            expanded_count: local_models
                .iter()
                .filter(|m| m.training_size != m.neighborhood_size)
                .count(),
            sample_sizes: local_models.iter().map(|m| m.training_size).collect(),
        };

        Ok(Self {
            config: resolved,
            schema: ModelSchema {
                feature_names: data.feature_names().to_vec(),
                target_name: data.target_name().to_string(),
                coord_names: data.coord_names().clone(),
            },
            global_forest,
            local_models,
            anchors,
            anchor_ids: data.row_ids().to_vec(),
            training_stats,
            isa,
        })
    }

    pub fn config(&self) -> &GrfConfig {
        &self.config
    }

    /// Worker count for later predictions. Not stored in model files.
    pub fn set_workers(&mut self, workers: Workers) {
        self.config.workers = workers;
    }

    pub fn schema(&self) -> &ModelSchema {
        &self.schema
    }

    pub fn n_features(&self) -> usize {
        self.schema.feature_names.len()
    }

    pub fn global_forest(&self) -> &RandomForest {
        &self.global_forest
    }

    pub fn local_models(&self) -> &[LocalModel] {
        &self.local_models
    }

    pub fn anchors(&self) -> &[Point] {
        self.anchors.points()
    }

    pub fn training_stats(&self) -> &TrainingStats {
        &self.training_stats
    }

    /// The autocorrelation scan that set bandwidth and local weight, if any.
    pub fn isa(&self) -> Option<&IsaScanResult> {
        self.isa.as_ref()
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if self.local_models.is_empty() {
            return Err(GrfError::ModelNotFitted);
        }
        if row.len() != self.n_features() {
            return Err(GrfError::DimensionMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(())
    }

    /// Local prediction at `point`: the nearest local forest, or with
    /// `enable_i3` the kernel-weighted mean over the `bandwidth` nearest ones.
    pub fn local_prediction(&self, point: Point, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        if !self.config.enable_i3 {
            let nearest = self.anchors.query(point, 1, None)?[0].index;
            return Ok(self.local_models[nearest].forest.predict_unchecked(row));
        }
        let k = self.config.bandwidth.min(self.local_models.len());
        let near = self.anchors.query(point, k, None)?;
        let distances: Vec<f64> = near.iter().map(|nb| nb.distance).collect();
        let preds: Vec<f64> = near
            .iter()
            .map(|nb| self.local_models[nb.index].forest.predict_unchecked(row))
            .collect();
        Ok(weighted_blend(&neighborhood_weights(&distances), &preds))
    }

    pub fn predict(&self, point: Point, row: &[f64]) -> Result<GrfPrediction> {
        let local = self.local_prediction(point, row)?;
        let global = self.global_forest.predict_unchecked(row);
        let a = self.config.local_weight;
        Ok(GrfPrediction { combined: a * local + (1.0 - a) * global, local, global })
    }

    /// Predict every row of `data` (which must share the model's feature order).
    pub fn predict_dataset(&self, data: &SpatialDataset) -> Result<Vec<GrfPrediction>> {
        self.predict_points(data.coords(), data.features_flat())
    }

    /// Predict rows given as a row-major feature matrix with one point per row.
    pub fn predict_points(&self, points: &[Point], features: &[f64]) -> Result<Vec<GrfPrediction>> {
        let s = self.n_features();
        if features.len() != points.len() * s {
            return Err(GrfError::DimensionMismatch { expected: points.len() * s, got: features.len() });
        }
        self.config.workers.install(|| {
            points
                .par_iter()
                .enumerate()
                .map(|(i, p)| self.predict(*p, &features[i * s..(i + 1) * s]))
                .collect()
        })
    }

    pub fn importance_table(&self) -> Result<ImportanceTable> {
        if self.local_models.is_empty() {
            return Err(GrfError::ModelNotFitted);
        }
        Ok(ImportanceTable {
            feature_names: self.schema.feature_names.clone(),
            global: self.global_forest.importance().to_vec(),
            local: self
                .local_models
                .iter()
                .zip(self.anchors.points())
                .zip(&self.anchor_ids)
                .map(|((m, p), id)| LocalImportance {
                    row_id: id.clone(),
                    anchor: *p,
                    importance: m.forest.importance().to_vec(),
                })
                .collect(),
        })
    }

    /// Write the model: a one-line JSON header describing it, then a binary body.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            library_version: env!("CARGO_PKG_VERSION").into(),
            base_seed: self.config.base_seed,
            config: self.config.clone(),
            schema: self.schema.clone(),
            n_local_models: self.local_models.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        bincode::serialize_into(&mut w, self).map_err(|e| GrfError::ModelFormat(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let header = read_header(&mut r)?;
        let model: Self = bincode::deserialize_from(&mut r).map_err(|e| GrfError::ModelFormat(e.to_string()))?;
        if model.local_models.len() != header.n_local_models {
            return Err(GrfError::ModelFormat("header and body disagree".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => GrfError::FileNotFound(path.to_path_buf()),
            _ => GrfError::Io(e),
        })?;
        Self::read_from(f)
    }
}

/// Self-describing first line of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub format_version: u32,
    pub library_version: String,
    pub base_seed: u64,
    pub config: GrfConfig,
    pub schema: ModelSchema,
    pub n_local_models: usize,
}

pub fn read_header<R: BufRead>(r: &mut R) -> Result<ModelHeader> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: ModelHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| GrfError::ModelFormat(format!("bad header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(GrfError::ModelFormat(format!("not a model file ({})", header.format)));
    }
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(GrfError::ModelFormat(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    Ok(header)
}

fn fit_local(
    data: &SpatialDataset,
    anchors: &NeighborIndex,
    i: usize,
    config: &GrfConfig,
    params: &ForestParams,
) -> Result<LocalModel> {
    let lambda = config.bandwidth;
    let (rows, distances): (Vec<usize>, Vec<f64>) = if config.include_anchor {
        let near = anchors.neighbors_of(i, lambda - 1)?;
        std::iter::once((i, 0.0))
            .chain(near.iter().map(|nb| (nb.index, nb.distance)))
            .unzip()
    } else {
        anchors
            .neighbors_of(i, lambda)?
            .iter()
            .map(|nb| (nb.index, nb.distance))
            .unzip()
    };
    let weights = neighborhood_weights(&distances);

    let local_seed = seed::derive(config.base_seed, &[tag::LOCAL, i as u64]);
    let (train_rows, train_weights) = if config.enable_i2 {
        let positions: Vec<usize> = (0..rows.len()).collect();
        let picks = expand_local_samples(&positions, config.ntree, seed::derive(local_seed, &[tag::EXPAND]));
        (
            picks.iter().map(|&p| rows[p]).collect::<Vec<_>>(),
            picks.iter().map(|&p| weights[p]).collect::<Vec<_>>(),
        )
    } else {
        (rows.clone(), weights)
    };

    let forest = RandomForest::fit(data, &train_rows, Some(&train_weights), params, local_seed)?;
    Ok(LocalModel {
        forest,
        neighborhood_size: rows.len(),
        training_size: train_rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalImportance {
    pub row_id: String,
    pub anchor: Point,
    pub importance: Vec<f64>,
}

/// Global importance plus one importance vector per local model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub feature_names: Vec<String>,
    pub global: Vec<f64>,
    pub local: Vec<LocalImportance>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mtry;
    use crate::synth;

    #[test]
    fn expansion_arithmetic() {
        assert_eq!(expansion_size(10, 100), Some(20));
        assert_eq!(expansion_size(150, 100), Some(200));
        assert_eq!(expansion_size(300, 100), None);
        assert_eq!(expansion_size(200, 100), None);
        assert_eq!(expansion_size(40, 60), Some(80));
        let d: Vec<usize> = (100..110).collect();
        let e = expand_local_samples(&d, 100, 3);
        assert_eq!(e.len(), 20);
        assert!(e.iter().all(|r| d.contains(r)));
        let big: Vec<usize> = (0..300).collect();
        assert_eq!(expand_local_samples(&big, 100, 3), big);
    }

    #[test]
    fn blend_examples() {
        assert_eq!(weighted_blend(&[0.75, 0.25], &[8.0, 4.0]), 7.0);
        let w = neighborhood_weights(&[2.0, 2.0]);
        assert!((weighted_blend(&w, &[8.0, 4.0]) - 6.0).abs() < 1e-12);
        let w = neighborhood_weights(&[0.0]);
        assert_eq!(weighted_blend(&w, &[3.5]), 3.5);
        assert_eq!(neighborhood_weights(&[0.0, 1.0, 2.0]), vec![1.0, 0.5625, KERNEL_WEIGHT_FLOOR]);
    }

    fn small_config() -> GrfConfig {
        GrfConfig {
            ntree: 10,
            mtry: Mtry::All,
            bandwidth: 8,
            local_weight: 0.5,
            base_seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn one_local_model_per_row() {
        let d = synth::regional(60, 0.3, 1).unwrap();
        let m = fit_grf(&d, &small_config()).unwrap();
        assert_eq!(m.local_models().len(), 60);
        assert!(m.local_models().iter().all(|l| l.neighborhood_size == 8 && l.training_size == 8));
        assert_eq!(m.training_stats().expanded_count, 0);
    }

    #[test]
    fn prediction_blend_bounds() {
        let d = synth::regional(50, 0.3, 2).unwrap();
        for alpha in [0.0, 0.3, 1.0] {
            let m = fit_grf(&d, &GrfConfig { local_weight: alpha, enable_i3: true, ..small_config() }).unwrap();
            for i in 0..d.n_rows() {
                let p = m.predict(d.coords()[i], d.row(i)).unwrap();
                let lo = p.local.min(p.global);
                let hi = p.local.max(p.global);
                assert!(p.combined >= lo - 1e-12 && p.combined <= hi + 1e-12);
                if alpha == 0.0 {
                    assert_eq!(p.combined, p.global);
                }
                if alpha == 1.0 {
                    assert_eq!(p.combined, p.local);
                }
            }
        }
    }

    #[test]
    fn anchor_prediction_uses_own_model_without_i3() {
        let d = synth::regional(40, 0.3, 3).unwrap();
        let m = fit_grf(&d, &small_config()).unwrap();
        for i in [0, 7, 39] {
            let own = m.local_models()[i].forest.predict(d.row(i)).unwrap();
            assert_eq!(m.local_prediction(d.coords()[i], d.row(i)).unwrap(), own);
        }
    }

    #[test]
    fn errors_surface() {
        let d = synth::regional(30, 0.3, 3).unwrap();
        let m = fit_grf(&d, &small_config()).unwrap();
        assert!(matches!(
            m.predict(Point::new(0.0, 0.0), &[1.0]),
            Err(GrfError::DimensionMismatch { .. })
        ));
        let too_wide = GrfConfig { bandwidth: 30, ..small_config() };
        assert!(matches!(fit_grf(&d, &too_wide), Err(GrfError::BandwidthTooLarge { .. })));
    }

    #[test]
    fn exclude_anchor_switch() {
        let d = synth::regional(30, 0.3, 4).unwrap();
        let m = fit_grf(&d, &GrfConfig { include_anchor: false, ..small_config() }).unwrap();
        assert!(m.local_models().iter().all(|l| l.neighborhood_size == 8));
    }

    #[test]
    fn constant_neighbourhoods_give_zero_local_importance() {
        let d = synth::clustered(5, 4, 0.0, 10).unwrap();
        let cfg = GrfConfig { bandwidth: 4, ..small_config() };
        let table = fit_grf(&d, &cfg).unwrap().importance_table().unwrap();
        assert_eq!(table.local.len(), d.n_rows());
        for row in &table.local {
            assert!(row.importance.iter().all(|&v| v == 0.0), "{:?}", row.importance);
        }
    }

    #[test]
    fn model_file_roundtrip_is_bit_exact() {
        let d = synth::regional(40, 0.3, 5).unwrap();
        let m = fit_grf(&d, &GrfConfig { enable_i3: true, enable_i2: true, ..small_config() }).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = TrainedGrf::read_from(&buf[..]).unwrap();
        assert_eq!(back, m);
        let header = read_header(&mut &buf[..]).unwrap();
        assert_eq!(header.base_seed, 9);
        assert_eq!(header.library_version, env!("CARGO_PKG_VERSION"));
        for i in 0..d.n_rows() {
            let a = m.predict(d.coords()[i], d.row(i)).unwrap();
            let b = back.predict(d.coords()[i], d.row(i)).unwrap();
            assert_eq!(a.combined.to_bits(), b.combined.to_bits());
        }
        assert!(TrainedGrf::read_from(&b"{\"format\":\"x\"}\n"[..]).is_err());
    }
}
