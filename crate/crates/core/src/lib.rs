//! Geographically weighted random forest regression.
//!
//! A [`TrainedGrf`] pairs one global random forest with one local forest per
//! training location. A prediction blends the local estimate with the global
//! one: `alpha * local + (1 - alpha) * global`. Three optional refinements are
//! switched on through [`GrfConfig`]:
//!
//! * `enable_i1` picks the neighbourhood size and `alpha` from a Moran's I
//!   scan over k-nearest-neighbour weights.
//! * `enable_i2` bootstraps small neighbourhoods up to at least `ntree` rows.
//! * `enable_i3` blends every local model around the query point with
//!   bisquare kernel weights instead of using only the nearest one.
//!
//! ```
//! use georf::{synth, GrfConfig, TrainedGrf};
//!
//! let data = synth::regional(60, 1.0, 7).unwrap();
//! let config = GrfConfig { ntree: 10, bandwidth: 8, ..Default::default() };
//! let model = TrainedGrf::fit(&data, &config).unwrap();
//! let p = model.predict(data.coords()[0], data.row(0)).unwrap();
//! assert!(p.combined.is_finite());
//! ```

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod grf;
pub mod io;
pub mod seed;
pub mod spatial;
pub mod synth;
pub mod tree;

pub use config::{GrfConfig, Kernel, Mtry, Workers};
pub use data::{validate_dataset, ColumnSpec, Point, RawTable, SpatialDataset};
pub use error::{GrfError, Result};
pub use evaluation::{grid_search, isa_tune, kfold_cv, r_squared, rmse, CvReport, TuneReport};
pub use forest::RandomForest;
pub use grf::{fit_grf, GrfPrediction, ImportanceTable, TrainedGrf};
pub use spatial::{isa_scan, morans_i, IsaGrid, IsaScanResult, MoranResult, NeighborIndex};

/// Library version recorded in saved model headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
