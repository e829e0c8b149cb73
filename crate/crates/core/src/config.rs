//! Model hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};

/// Number of candidate features per split, possibly relative to the feature count `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mtry {
    /// All `S` features.
    All,
    /// `ceil(S / 3)`, at least 1.
    Third,
    /// `round(sqrt(S))`, at least 1.
    Sqrt,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            Mtry::All => n_features,
            Mtry::Third => n_features.div_ceil(3).max(1),
            Mtry::Sqrt => ((n_features as f64).sqrt().round() as usize).max(1),
            Mtry::Fixed(m) => m,
        }
    }
}

impl fmt::Display for Mtry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mtry::All => f.write_str("S"),
            Mtry::Third => f.write_str("S/3"),
            Mtry::Sqrt => f.write_str("sqrt"),
            Mtry::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for Mtry {
    type Err = GrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" | "s" | "all" => Ok(Mtry::All),
            "S/3" | "s/3" | "third" => Ok(Mtry::Third),
            "sqrt" | "sqrtS" | "sqrt(S)" => Ok(Mtry::Sqrt),
            other => other
                .parse::<usize>()
                .map(Mtry::Fixed)
                .map_err(|_| GrfError::InvalidConfig(format!("bad mtry {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    #[default]
    Bisquare,
}

/// Worker count for parallel sections. Never affects results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Workers {
    #[default]
    Auto,
    Fixed(usize),
}

impl Workers {
    /// Run `f` on a pool of the requested size. Reuses the current pool when it
    /// already has that many threads.
    pub fn install<R: Send>(self, f: impl FnOnce() -> R + Send) -> R {
        match self {
            Workers::Fixed(n) if n > 0 && rayon::current_num_threads() != n => {
                match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(f),
                    Err(_) => f(),
                }
            }
            _ => f(),
        }
    }
}

impl FromStr for Workers {
    type Err = GrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" | "0" => Ok(Workers::Auto),
            other => other
                .parse::<usize>()
                .map(Workers::Fixed)
                .map_err(|_| GrfError::InvalidConfig(format!("bad worker count {other:?}"))),
        }
    }
}

/// Hyperparameters of a geographical random forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfConfig {
    pub ntree: usize,
    pub mtry: Mtry,
    /// Neighbour count defining each local training set.
    pub bandwidth: usize,
    /// Blend coefficient in `[0, 1]` between local and global predictions.
    pub local_weight: f64,
    pub kernel: Kernel,
    /// Pick bandwidth and local weight from the incremental autocorrelation scan.
    pub enable_i1: bool,
    /// Bootstrap-expand small local training sets.
    pub enable_i2: bool,
    /// Spatially weighted blend of nearby local models at prediction time.
    pub enable_i3: bool,
    pub base_seed: u64,
    pub min_leaf_size: usize,
    /// Whether a local training set includes its own anchor instance.
    pub include_anchor: bool,
    /// Significance level of the autocorrelation test used by `enable_i1`.
    pub significance: f64,
    #[serde(skip)]
    pub workers: Workers,
}

impl Default for GrfConfig {
    fn default() -> Self {
        Self {
            ntree: 100,
            mtry: Mtry::Third,
            bandwidth: 20,
            local_weight: 0.5,
            kernel: Kernel::Bisquare,
            enable_i1: false,
            enable_i2: false,
            enable_i3: false,
            base_seed: 42,
            min_leaf_size: 1,
            include_anchor: true,
            significance: 0.05,
            workers: Workers::Auto,
        }
    }
}

impl GrfConfig {
    /// Check forest-level settings against a dataset with `n_features` columns.
    pub fn validate_forest(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(GrfError::InvalidConfig("ntree must be positive".into()));
        }
        let m = self.mtry.resolve(n_features);
        if m == 0 || m > n_features {
            return Err(GrfError::InvalidConfig(format!(
                "mtry {m} outside [1, {n_features}]"
            )));
        }
        if self.min_leaf_size == 0 {
            return Err(GrfError::InvalidConfig("min_leaf_size must be positive".into()));
        }
        Ok(())
    }

    /// Full check against a dataset with `n_rows` rows and `n_features` columns.
    pub fn validate(&self, n_rows: usize, n_features: usize) -> Result<()> {
        self.validate_forest(n_features)?;
        if !(0.0..=1.0).contains(&self.local_weight) {
            return Err(GrfError::InvalidConfig(format!(
                "local weight {} outside [0, 1]",
                self.local_weight
            )));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(GrfError::InvalidConfig("significance must be in (0, 1)".into()));
        }
        if !self.enable_i1 && (self.bandwidth < 2 || self.bandwidth > n_rows.saturating_sub(1)) {
            return Err(GrfError::BandwidthTooLarge {
                lambda: self.bandwidth,
                max: n_rows.saturating_sub(1),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbolic_mtry() {
        assert_eq!(Mtry::All.resolve(21), 21);
        assert_eq!(Mtry::Third.resolve(21), 7);
        assert_eq!(Mtry::Third.resolve(18), 6);
        assert_eq!(Mtry::Third.resolve(2), 1);
        assert_eq!(Mtry::Sqrt.resolve(18), 4);
        assert_eq!(Mtry::Sqrt.resolve(3), 2);
        assert_eq!(Mtry::Sqrt.resolve(1), 1);
        assert_eq!("S/3".parse::<Mtry>().unwrap(), Mtry::Third);
        assert_eq!("2".parse::<Mtry>().unwrap(), Mtry::Fixed(2));
        assert!("x".parse::<Mtry>().is_err());
    }

    #[test]
    fn config_bounds() {
        let c = GrfConfig { bandwidth: 10, ..Default::default() };
        assert!(c.validate(11, 3).is_ok());
        assert!(matches!(c.validate(10, 3), Err(GrfError::BandwidthTooLarge { .. })));
        let c = GrfConfig { local_weight: 1.5, ..c };
        assert!(c.validate(50, 3).is_err());
        let c = GrfConfig { mtry: Mtry::Fixed(4), local_weight: 0.5, ..Default::default() };
        assert!(c.validate(50, 3).is_err());
    }
}
