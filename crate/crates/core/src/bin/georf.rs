//! `georf` command-line tool.
//!
//! Exit codes: 0 on success, 1 for data or I/O errors, 2 for usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use georf::data::{validate_points, ColumnSpec, Validated};
use georf::evaluation::{self, ForestGrids, ModelKind, TuneGrids};
use georf::io::{self, Format};
use georf::spatial::{isa_scan_values, IsaGrid};
use georf::synth::{self, SynthKind};
use georf::{GrfConfig, GrfError, Mtry, Result, SpatialDataset, TrainedGrf, Workers};

#[derive(Parser)]
#[command(name = "georf", version, about = "Geographically weighted random forest regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it to a file
    Fit(FitArgs),
    /// Predict combined, local and global values for every row of a CSV
    Predict(PredictArgs),
    /// k-fold cross-validation of one configuration
    Cv(CvArgs),
    /// Search bandwidth, local weight and forest settings
    Tune(TuneArgs),
    /// Moran's I over a range of neighbour counts
    Isa(IsaArgs),
    /// Export global and per-location feature importance of a fitted model
    Importance(ImportanceArgs),
    /// Tune both ways, then cross-validate RF, GRF and every improvement variant
    Experiments(ExperimentArgs),
    /// Write a synthetic dataset as CSV
    #[command(hide = true)]
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Feature columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<String>,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "y")]
    y: String,
    /// Row identifier column; row numbers from 0 when absent
    #[arg(long)]
    id: Option<String>,
}

impl DataArgs {
    fn spec(&self) -> ColumnSpec {
        ColumnSpec {
            features: self.features.clone(),
            target: self.target.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            id: self.id.clone(),
        }
    }

    fn load(&self) -> Result<SpatialDataset> {
        let Validated { dataset, warnings } = io::load_csv(&self.data, &self.spec())?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(dataset)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Improvement {
    I1,
    I2,
    I3,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 100)]
    ntree: usize,
    /// S, S/3, sqrt or a number
    #[arg(long, default_value = "S/3", value_parser = parse_mtry)]
    mtry: Mtry,
    /// Neighbourhood size of each local model (ignored with i1)
    #[arg(long, default_value_t = 20)]
    bandwidth: usize,
    /// Weight of the local prediction (ignored with i1)
    #[arg(long, default_value_t = 0.5)]
    local_weight: f64,
    /// Improvements to switch on, comma separated
    #[arg(long, value_delimiter = ',')]
    enable: Vec<Improvement>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_leaf_size: usize,
    /// Significance level of the autocorrelation test
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    /// Leave each location out of its own local training set
    #[arg(long)]
    exclude_anchor: bool,
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads, or "auto" for all cores
    #[arg(long, global = true, env = "GEORF_WORKERS", default_value = "auto", value_parser = parse_workers)]
    workers: Workers,
}

impl ConfigArgs {
    fn config(&self, workers: Workers) -> GrfConfig {
        GrfConfig {
            ntree: self.ntree,
            mtry: self.mtry,
            bandwidth: self.bandwidth,
            local_weight: self.local_weight,
            enable_i1: self.enable.contains(&Improvement::I1),
            enable_i2: self.enable.contains(&Improvement::I2),
            enable_i3: self.enable.contains(&Improvement::I3),
            base_seed: self.seed,
            min_leaf_size: self.min_leaf_size,
            include_anchor: !self.exclude_anchor,
            significance: self.significance,
            workers,
            ..GrfConfig::default()
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when omitted or "-"
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Where to write the model
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV holding the model's feature and coordinate columns
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    id: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Cross-validate the plain global forest instead
    #[arg(long)]
    rf: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Grid,
    Isa,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',')]
    ntree_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_mtry)]
    mtry_grid: Vec<Mtry>,
    /// Only used by the grid method
    #[arg(long, value_delimiter = ',')]
    bandwidth_grid: Vec<usize>,
    /// Only used by the grid method
    #[arg(long, value_delimiter = ',')]
    local_weight_grid: Vec<f64>,
    /// Step of the default ntree grid
    #[arg(long, default_value_t = 20)]
    ntree_step: usize,
    /// Step of the default bandwidth grid
    #[arg(long, default_value_t = 5)]
    bandwidth_step: usize,
}

impl GridArgs {
    /// Defaults filled in wherever a grid was not given.
    fn grids(&self, data: &SpatialDataset, folds: usize) -> TuneGrids {
        let d = TuneGrids::default_for(data.n_rows(), data.n_features(), folds, self.ntree_step, self.bandwidth_step);
        TuneGrids {
            ntree: pick(&self.ntree_grid, d.ntree),
            mtry: pick(&self.mtry_grid, d.mtry),
            bandwidth: pick(&self.bandwidth_grid, d.bandwidth),
            local_weight: pick(&self.local_weight_grid, d.local_weight),
        }
    }
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    grids: GridArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct IsaArgs {
    #[arg(long)]
    data: PathBuf,
    /// Column whose autocorrelation is measured
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "y")]
    y: String,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 1)]
    k_step: usize,
    #[arg(long, default_value_t = 0.05)]
    significance: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    grids: GridArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pick<T: Clone>(given: &[T], default: Vec<T>) -> Vec<T> {
    if given.is_empty() {
        default
    } else {
        given.to_vec()
    }
}

fn parse_mtry(s: &str) -> std::result::Result<Mtry, String> {
    s.parse().map_err(|e: GrfError| e.to_string())
}

fn parse_workers(s: &str) -> std::result::Result<Workers, String> {
    s.parse().map_err(|e: GrfError| e.to_string())
}

fn elapsed(label: &str, start: Instant) {
    eprintln!("{label} took {:.3}s", start.elapsed().as_secs_f64());
}

fn fit(a: FitArgs, w: Workers) -> Result<()> {
    let data = a.data.load()?;
    let model = TrainedGrf::fit(&data, &a.config.config(w))?;
    if let Some(scan) = model.isa() {
        eprintln!("bandwidth {} and local weight {} from autocorrelation", scan.selected_lambda, scan.selected_alpha);
    }
    model.save(&a.model)
}

fn predict(a: PredictArgs, w: Workers) -> Result<()> {
    let mut model = TrainedGrf::load(&a.model)?;
    model.set_workers(w);
    let schema = model.schema();
    let spec = ColumnSpec {
        features: schema.feature_names.clone(),
        target: schema.target_name.clone(),
        x: schema.coord_names[0].clone(),
        y: schema.coord_names[1].clone(),
        id: a.id.clone(),
    };
    let raw = io::read_raw_table(open(&a.data)?)?;
    let points = validate_points(&raw, &spec)?;
    let preds = model.predict_points(&points.coords, &points.features)?;
    io::write_prediction_rows(&points.ids, &points.coords, &preds, a.output.format, io::output(a.output.out.as_deref())?)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GrfError::FileNotFound(path.to_path_buf()),
        _ => GrfError::Io(e),
    })
}

fn cv(a: CvArgs, w: Workers) -> Result<()> {
    let data = a.data.load()?;
    let kind = if a.rf { ModelKind::Rf } else { ModelKind::Grf };
    let report = evaluation::cross_validate(&data, &a.config.config(w), a.folds, a.config.seed, kind)?;
    eprintln!("{} folds in {:.3}s", report.folds, report.wall_time.as_secs_f64());
    io::write_cv(&report, a.output.format, io::output(a.output.out.as_deref())?)
}

fn tune(a: TuneArgs, w: Workers) -> Result<()> {
    let data = a.data.load()?;
    let base = a.config.config(w);
    let grids = a.grids.grids(&data, a.folds);
    let report = match a.method {
        Method::Grid => evaluation::grid_search(&data, &grids, a.folds, a.config.seed, &base)?,
        Method::Isa => {
            let forest = ForestGrids { ntree: grids.ntree, mtry: grids.mtry };
            evaluation::isa_tune(&data, &forest, a.folds, a.config.seed, &base)?
        }
    };
    eprintln!(
        "{} candidates, {} model fits, {:.3}s",
        report.candidates_evaluated,
        report.grf_fits_performed,
        report.wall_time.as_secs_f64()
    );
    io::write_tune(&report, a.output.format, io::output(a.output.out.as_deref())?)
}

fn isa(a: IsaArgs, w: Workers) -> Result<()> {
    let spec = ColumnSpec {
        features: vec![a.target.clone()],
        target: a.target.clone(),
        x: a.x.clone(),
        y: a.y.clone(),
        id: None,
    };
    let raw = io::read_raw_table(open(&a.data)?)?;
    let points = validate_points(&raw, &spec)?;
    let n = points.coords.len();
    let default = IsaGrid::default_for(n);
    let grid = IsaGrid {
        k_min: a.k_min.unwrap_or(default.k_min),
        k_max: a.k_max.unwrap_or(default.k_max),
        k_step: a.k_step,
    };
    let scan = w.install(|| isa_scan_values(&points.coords, &points.features, grid, a.significance))?;
    io::write_isa(&scan, a.output.format, io::output(a.output.out.as_deref())?)
}

fn importance(a: ImportanceArgs) -> Result<()> {
    let table = TrainedGrf::load(&a.model)?.importance_table()?;
    io::export_importance(&table, a.output.format, io::output(a.output.out.as_deref())?)
}

fn experiments(a: ExperimentArgs, w: Workers) -> Result<()> {
    let start = Instant::now();
    let data = a.data.load()?;
    let base = a.config.config(w);
    let seed = a.config.seed;
    let grids = a.grids.grids(&data, a.folds);
    let forest = ForestGrids { ntree: grids.ntree.clone(), mtry: grids.mtry.clone() };
    let by_grid = evaluation::grid_search(&data, &grids, a.folds, seed, &base)?;
    let by_isa = evaluation::isa_tune(&data, &forest, a.folds, seed, &base)?;
    eprintln!(
        "grid search: {} fits in {:.3}s; autocorrelation tuning: {} fits in {:.3}s",
        by_grid.grf_fits_performed,
        by_grid.wall_time.as_secs_f64(),
        by_isa.grf_fits_performed,
        by_isa.wall_time.as_secs_f64()
    );
    let rows = base
        .workers
        .install(|| evaluation::run_experiments(&data, &by_grid.chosen, &by_isa.chosen, a.folds, seed))?;
    elapsed("experiments", start);
    io::write_experiments(&rows, a.output.format, io::output(a.output.out.as_deref())?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let data = synth::generate(a.kind, a.n, a.seed)?;
    io::write_dataset_csv(&data, io::output(a.out.as_deref())?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let w = cli.workers.workers;
    let result = match cli.command {
        Command::Fit(a) => fit(a, w),
        Command::Predict(a) => predict(a, w),
        Command::Cv(a) => cv(a, w),
        Command::Tune(a) => tune(a, w),
        Command::Isa(a) => isa(a, w),
        Command::Importance(a) => importance(a),
        Command::Experiments(a) => experiments(a, w),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(GrfError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
