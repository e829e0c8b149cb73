//! Spatial point datasets and their validation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};

/// A location in a planar projected coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Column designations used to pull a [`SpatialDataset`] out of a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub features: Vec<String>,
    pub target: String,
    pub x: String,
    pub y: String,
    /// Optional row identifier column; row numbers are used when absent.
    pub id: Option<String>,
}

/// A header plus string cells, as read from a delimited file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DatasetWarning {
    /// Rows (0-based) that share the same coordinates.
    DuplicateCoordinates { rows: Vec<usize>, x: f64, y: f64 },
}

impl std::fmt::Display for DatasetWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetWarning::DuplicateCoordinates { rows, x, y } => {
                write!(f, "rows {rows:?} share coordinates ({x}, {y})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub dataset: SpatialDataset,
    pub warnings: Vec<DatasetWarning>,
}

/// Features, target and coordinates for `n` instances.
///
/// Features are stored row-major. All containers agree on `n >= 2`, every
/// value is finite and feature names are unique; the constructors enforce
/// this and the type is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDataset {
    features: Vec<f64>,
    n_features: usize,
    target: Vec<f64>,
    coords: Vec<Point>,
    feature_names: Vec<String>,
    target_name: String,
    coord_names: [String; 2],
    row_ids: Vec<String>,
}

impl SpatialDataset {
    /// Build a dataset from per-row feature vectors. Row ids default to the
    /// 0-based row number and the target/coordinate columns to `target`, `x`, `y`.
    pub fn new(
        rows: Vec<Vec<f64>>,
        target: Vec<f64>,
        coords: Vec<Point>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        let mut flat = Vec::with_capacity(rows.len() * n_features);
        for row in &rows {
            if row.len() != n_features {
                return Err(GrfError::DimensionMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_parts(
            flat,
            target,
            coords,
            feature_names,
            "target".into(),
            ["x".into(), "y".into()],
            ids,
        )
    }

    pub fn from_parts(
        features: Vec<f64>,
        target: Vec<f64>,
        coords: Vec<Point>,
        feature_names: Vec<String>,
        target_name: String,
        coord_names: [String; 2],
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let n = target.len();
        let n_features = feature_names.len();
        if n < 2 {
            return Err(GrfError::EmptyData(n));
        }
        if n_features == 0 {
            return Err(GrfError::InvalidConfig("at least one feature is required".into()));
        }
        for (len, _) in [(coords.len(), "coords"), (row_ids.len(), "row_ids")] {
            if len != n {
                return Err(GrfError::LengthMismatch { left: n, right: len });
            }
        }
        if features.len() != n * n_features {
            return Err(GrfError::DimensionMismatch {
                expected: n * n_features,
                got: features.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(GrfError::DuplicateFeature(name.clone()));
            }
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(GrfError::NonFinite { what: "features", row: i / n_features });
        }
        if let Some(row) = target.iter().position(|v| !v.is_finite()) {
            return Err(GrfError::NonFinite { what: "target", row });
        }
        if let Some(row) = coords.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GrfError::NonFinite { what: "coords", row });
        }
        Ok(Self {
            features,
            n_features,
            target,
            coords,
            feature_names,
            target_name,
            coord_names,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn feature(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_features + col]
    }

    pub fn features_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn coord_names(&self) -> &[String; 2] {
        &self.coord_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Column designations that reproduce this dataset from [`Self::to_raw_table`].
    pub fn column_spec(&self) -> ColumnSpec {
        ColumnSpec {
            features: self.feature_names.clone(),
            target: self.target_name.clone(),
            x: self.coord_names[0].clone(),
            y: self.coord_names[1].clone(),
            id: Some("id".into()),
        }
    }

    /// Rows `indices` (duplicates allowed) as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self::from_parts(
            features,
            indices.iter().map(|&i| self.target[i]).collect(),
            indices.iter().map(|&i| self.coords[i]).collect(),
            self.feature_names.clone(),
            self.target_name.clone(),
            self.coord_names.clone(),
            indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        )
    }

    /// Same rows with the target replaced.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.features.clone(),
            target,
            self.coords.clone(),
            self.feature_names.clone(),
            self.target_name.clone(),
            self.coord_names.clone(),
            self.row_ids.clone(),
        )
    }

    /// Serialize as a string table with columns `id, x, y, features.., target`.
    /// Values use shortest round-trip formatting.
    pub fn to_raw_table(&self) -> RawTable {
        let mut header = vec!["id".to_string(), self.coord_names[0].clone(), self.coord_names[1].clone()];
        header.extend(self.feature_names.iter().cloned());
        header.push(self.target_name.clone());
        let rows = (0..self.n_rows())
            .map(|i| {
                let mut r = vec![
                    self.row_ids[i].clone(),
                    self.coords[i].x.to_string(),
                    self.coords[i].y.to_string(),
                ];
                r.extend(self.row(i).iter().map(f64::to_string));
                r.push(self.target[i].to_string());
                r
            })
            .collect();
        RawTable { header, rows }
    }
}

/// Feature rows and locations without a target, e.g. the input of `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPoints {
    pub ids: Vec<String>,
    pub coords: Vec<Point>,
    /// Row-major, `coords.len() * feature_names.len()` values.
    pub features: Vec<f64>,
    pub feature_names: Vec<String>,
}

struct Extracted {
    features: Vec<f64>,
    target: Vec<f64>,
    coords: Vec<Point>,
    ids: Vec<String>,
}

fn extract(raw: &RawTable, spec: &ColumnSpec, with_target: bool, min_rows: usize) -> Result<Extracted> {
    let col = |name: &str| -> Result<usize> {
        raw.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GrfError::MissingColumn(name.to_string()))
    };
    let feature_cols = spec.features.iter().map(|f| col(f)).collect::<Result<Vec<_>>>()?;
    let target_col = if with_target { Some(col(&spec.target)?) } else { None };
    let x_col = col(&spec.x)?;
    let y_col = col(&spec.y)?;
    let id_col = spec.id.as_deref().map(col).transpose()?;

    let n = raw.rows.len();
    if n < min_rows {
        return Err(GrfError::EmptyData(n));
    }

    let cell = |row: usize, c: usize| -> Result<f64> {
        let text = raw.rows[row].get(c).map(String::as_str).unwrap_or("");
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(GrfError::NonNumericCell {
                row: row + 1,
                column: raw.header[c].clone(),
                value: text.to_string(),
            }),
        }
    };

    let mut out = Extracted {
        features: Vec::with_capacity(n * feature_cols.len()),
        target: Vec::with_capacity(n),
        coords: Vec::with_capacity(n),
        ids: Vec::with_capacity(n),
    };
    for r in 0..n {
        for &c in &feature_cols {
            out.features.push(cell(r, c)?);
        }
        if let Some(c) = target_col {
            out.target.push(cell(r, c)?);
        }
        out.coords.push(Point::new(cell(r, x_col)?, cell(r, y_col)?));
        out.ids.push(match id_col {
            Some(c) => raw.rows[r].get(c).cloned().unwrap_or_default(),
            None => r.to_string(),
        });
    }
    Ok(out)
}

/// Pull a validated dataset out of `raw` using the column designations in `spec`.
///
/// Column order in the table is irrelevant. Rows sharing identical coordinates
/// are accepted and reported in [`Validated::warnings`].
pub fn validate_dataset(raw: &RawTable, spec: &ColumnSpec) -> Result<Validated> {
    let e = extract(raw, spec, true, 2)?;
    let dataset = SpatialDataset::from_parts(
        e.features,
        e.target,
        e.coords,
        spec.features.clone(),
        spec.target.clone(),
        [spec.x.clone(), spec.y.clone()],
        e.ids,
    )?;
    let warnings = duplicate_coordinates(dataset.coords());
    Ok(Validated { dataset, warnings })
}

/// Like [`validate_dataset`] but ignores `spec.target`, which may be absent.
/// A single row is accepted.
pub fn validate_points(raw: &RawTable, spec: &ColumnSpec) -> Result<QueryPoints> {
    let e = extract(raw, spec, false, 1)?;
    Ok(QueryPoints {
        ids: e.ids,
        coords: e.coords,
        features: e.features,
        feature_names: spec.features.clone(),
    })
}

fn duplicate_coordinates(coords: &[Point]) -> Vec<DatasetWarning> {
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, p) in coords.iter().enumerate() {
        // +0.0 so that -0.0 and 0.0 land in the same group
        groups
            .entry(((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()))
            .or_default()
            .push(i);
    }
    let mut out: Vec<_> = groups
        .into_values()
        .filter(|rows| rows.len() > 1)
        .map(|rows| {
            let p = coords[rows[0]];
            DatasetWarning::DuplicateCoordinates { rows, x: p.x, y: p.y }
        })
        .collect();
    out.sort_by_key(|DatasetWarning::DuplicateCoordinates { rows, .. }| rows[0]);
    out
}
