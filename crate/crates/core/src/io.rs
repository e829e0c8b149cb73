//! CSV ingestion and report export.
//!
//! Floats are written in shortest round-trip form, so every number in an
//! output file parses back to the identical `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{validate_dataset, ColumnSpec, Point, RawTable, SpatialDataset, Validated};
use crate::error::{GrfError, Result};
use crate::evaluation::{CvReport, ExperimentRow, TuneReport};
use crate::grf::{GrfPrediction, ImportanceTable};
use crate::spatial::IsaScanResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Json,
}

pub fn read_raw_table<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok(RawTable { header, rows })
}

/// Read and validate a CSV file. Column order in the file does not matter.
pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<Validated> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GrfError::FileNotFound(path.to_path_buf()),
        _ => GrfError::Io(e),
    })?;
    validate_dataset(&read_raw_table(file)?, spec)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_table<W: Write>(w: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Write `data` as CSV with columns `id, x, y, features..., target`.
pub fn write_dataset_csv<W: Write>(data: &SpatialDataset, w: W) -> Result<()> {
    let t = data.to_raw_table();
    write_table(w, &t.header, &t.rows)
}

pub fn save_dataset_csv(data: &SpatialDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_csv(data, create(path.as_ref())?)
}

fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Shortest round-trip text, with an exponent for very large or small values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per query point: `id, x, y, combined, local, global`.
pub fn write_predictions<W: Write>(data: &SpatialDataset, preds: &[GrfPrediction], format: Format, w: W) -> Result<()> {
    write_prediction_rows(data.row_ids(), data.coords(), preds, format, w)
}

pub fn write_prediction_rows<W: Write>(
    ids: &[String],
    coords: &[Point],
    preds: &[GrfPrediction],
    format: Format,
    w: W,
) -> Result<()> {
    if preds.len() != ids.len() || coords.len() != ids.len() {
        return Err(GrfError::LengthMismatch { left: ids.len(), right: preds.len() });
    }
    match format {
        Format::Csv => {
            let header: Vec<String> = ["id", "x", "y", "combined", "local", "global"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = preds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let c = coords[i];
                    vec![ids[i].clone(), num(c.x), num(c.y), num(p.combined), num(p.local), num(p.global)]
                })
                .collect();
            write_table(w, &header, &rows)
        }
        Format::Json => {
            let rows: Vec<Value> = preds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let c = coords[i];
                    json!({
                        "id": ids[i], "x": c.x, "y": c.y,
                        "combined": p.combined, "local": p.local, "global": p.global,
                    })
                })
                .collect();
            write_json(w, &json!({ "predictions": rows }))
        }
    }
}

/// CSV: a leading `global` row (empty coordinates) then one row per anchor
/// with `x, y` and one column per feature. JSON: a GeoJSON feature collection
/// of anchor points plus a top-level `global` member.
pub fn export_importance<W: Write>(table: &ImportanceTable, format: Format, w: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut header = vec!["id".to_string(), "x".into(), "y".into()];
            header.extend(table.feature_names.iter().cloned());
            let mut rows = Vec::with_capacity(table.local.len() + 1);
            let mut global = vec!["global".to_string(), String::new(), String::new()];
            global.extend(table.global.iter().map(|&v| num(v)));
            rows.push(global);
            for l in &table.local {
                let mut r = vec![l.row_id.clone(), num(l.anchor.x), num(l.anchor.y)];
                r.extend(l.importance.iter().map(|&v| num(v)));
                rows.push(r);
            }
            write_table(w, &header, &rows)
        }
        Format::Json => {
            let features: Vec<Value> = table
                .local
                .iter()
                .map(|l| {
                    let props: serde_json::Map<String, Value> = std::iter::once(("id".to_string(), json!(l.row_id)))
                        .chain(table.feature_names.iter().zip(&l.importance).map(|(n, v)| (n.clone(), json!(v))))
                        .collect();
                    json!({
                        "type": "Feature",
                        "geometry": { "type": "Point", "coordinates": [l.anchor.x, l.anchor.y] },
                        "properties": props,
                    })
                })
                .collect();
            let global: serde_json::Map<String, Value> =
                table.feature_names.iter().zip(&table.global).map(|(n, v)| (n.clone(), json!(v))).collect();
            write_json(
                w,
                &json!({
                    "type": "FeatureCollection",
                    "feature_names": table.feature_names,
                    "global": global,
                    "features": features,
                }),
            )
        }
    }
}

/// The full scan table: one row per `k` with a `selected` flag.
pub fn write_isa<W: Write>(scan: &IsaScanResult, format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, scan),
        Format::Csv => {
            let header = ["k", "moran_i", "expected_i", "variance", "z_score", "p_value", "selected"]
                .map(String::from)
                .to_vec();
            let rows: Vec<Vec<String>> = scan
                .results
                .iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        num(r.moran_i),
                        num(r.expected_i),
                        num(r.variance),
                        num(r.z_score),
                        num(r.p_value),
                        (r.k == scan.selected_lambda).to_string(),
                    ]
                })
                .collect();
            write_table(w, &header, &rows)
        }
    }
}

/// JSON: the whole report. CSV: one row per fold plus a `pooled` row.
pub fn write_cv<W: Write>(report: &CvReport, format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, report),
        Format::Csv => {
            let header = ["fold", "n_test", "r2", "rmse"].map(String::from).to_vec();
            let mut rows: Vec<Vec<String>> = report
                .per_fold
                .iter()
                .map(|f| vec![f.fold.to_string(), f.n_test.to_string(), opt_num(f.r2), num(f.rmse)])
                .collect();
            rows.push(vec![
                "pooled".into(),
                report.predictions.len().to_string(),
                num(report.pooled_r2),
                num(report.pooled_rmse),
            ]);
            write_table(w, &header, &rows)
        }
    }
}

/// JSON: the whole report. CSV: the leaderboard with a `chosen` flag.
pub fn write_tune<W: Write>(report: &TuneReport, format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, report),
        Format::Csv => {
            let header = ["ntree", "mtry", "bandwidth", "local_weight", "pooled_rmse", "pooled_r2", "chosen"]
                .map(String::from)
                .to_vec();
            let c = &report.chosen;
            let rows: Vec<Vec<String>> = report
                .leaderboard
                .iter()
                .map(|e| {
                    let chosen = e.ntree == c.ntree
                        && e.mtry == c.mtry
                        && e.bandwidth == c.bandwidth
                        && e.local_weight == c.local_weight;
                    vec![
                        e.ntree.to_string(),
                        e.mtry.to_string(),
                        e.bandwidth.to_string(),
                        num(e.local_weight),
                        num(e.pooled_rmse),
                        num(e.pooled_r2),
                        chosen.to_string(),
                    ]
                })
                .collect();
            write_table(w, &header, &rows)
        }
    }
}

pub fn write_experiments<W: Write>(rows: &[ExperimentRow], format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, &json!({ "experiments": rows })),
        Format::Csv => {
            let header = ["model", "ntree", "mtry", "bandwidth", "local_weight", "r2", "rmse"]
                .map(String::from)
                .to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.model.clone(),
                        r.ntree.to_string(),
                        r.mtry.to_string(),
                        r.bandwidth.map(|b| b.to_string()).unwrap_or_default(),
                        opt_num(r.local_weight),
                        num(r.r2),
                        num(r.rmse),
                    ]
                })
                .collect();
            write_table(w, &header, &body)
        }
    }
}

/// Open `path` for writing, or stdout when `path` is `None` or `-`.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => Ok(Box::new(create(p)?)),
        _ => Ok(Box::new(BufWriter::new(std::io::stdout().lock()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GrfConfig;
    use crate::grf::TrainedGrf;
    use crate::synth;

    fn spec(s: usize) -> ColumnSpec {
        ColumnSpec {
            features: (1..=s).map(|j| format!("x{j}")).collect(),
            target: "target".into(),
            x: "x".into(),
            y: "y".into(),
            id: Some("id".into()),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = synth::regional(25, 1.3, 9).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let back = validate_dataset(&read_raw_table(&buf[..]).unwrap(), &spec(3)).unwrap();
        assert_eq!(back.dataset, d);
    }

    #[test]
    fn column_order_is_irrelevant() {
        let text = "target,y,x2,x,x1\n1,0,5,0,2\n2,1,6,1,3\n3,2,7,2,4\n4,3,8,3,5\n5,4,9,4,6\n";
        let s = ColumnSpec { id: None, ..spec(2) };
        let v = validate_dataset(&read_raw_table(text.as_bytes()).unwrap(), &s).unwrap();
        assert_eq!(v.dataset.n_rows(), 5);
        assert_eq!(v.dataset.row(1), &[3.0, 6.0]);
    }

    #[test]
    fn missing_file() {
        let r = load_csv("/definitely/not/here.csv", &spec(1));
        assert!(matches!(r, Err(GrfError::FileNotFound(_))));
    }

    #[test]
    fn importance_export_shapes() {
        let d = synth::regional(10, 1.0, 2).unwrap();
        let cfg = GrfConfig { ntree: 5, bandwidth: 4, ..Default::default() };
        let table = TrainedGrf::fit(&d, &cfg).unwrap().importance_table().unwrap();

        let mut csv_buf = Vec::new();
        export_importance(&table, Format::Csv, &mut csv_buf).unwrap();
        let raw = read_raw_table(&csv_buf[..]).unwrap();
        assert_eq!(raw.rows.len(), 11);
        assert_eq!(raw.header, ["id", "x", "y", "x1", "x2", "x3"]);
        assert_eq!(raw.rows[0][1], "");
        for r in &raw.rows[1..] {
            let s: f64 = r[3..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-9 || s == 0.0);
        }

        let mut json_buf = Vec::new();
        export_importance(&table, Format::Json, &mut json_buf).unwrap();
        let v: Value = serde_json::from_slice(&json_buf).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"].as_array().unwrap().len(), 10);
        assert_eq!(v["features"][0]["geometry"]["type"], "Point");
    }
}
