//! `bn3d` command line: `generate | train | estimate | baseline | evaluate`.
//!
//! Exit codes: 0 success, 1 pipeline or numeric failure, 2 usage or input
//! error. `BN3D_THREADS` caps the worker threads.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baseline2d::{self, BaselineError, BaselineReport, Combine, Method, ViewMode};
use crate::characteristics::{self, CharacteristicsError, CharacteristicsReport, GridSpec};
use crate::dataset::{self, DatasetError, FacadeViews, GenerateOptions};
use crate::fixtures;
use crate::neural::FieldNetwork;
use crate::scene::{build_scene, ground_truth, BuildingSpec, GroundTruth};
use crate::train::{Checkpoint, Profile, StepRecord, Trainer, TrainingData};

#[derive(Debug, Parser)]
#[command(name = "bn3d", version, about = "Semantic SDF reconstruction of buildings and envelope characteristics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

/// Options shared by every command.
#[derive(Debug, Args)]
pub struct Common {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Training profile: `desk`, `paper` or a JSON file.
    #[arg(long, global = true, default_value = "desk")]
    pub profile: String,
    /// Marching-cubes grid resolution per axis.
    #[arg(long, global = true, default_value_t = 128)]
    pub grid: usize,
    /// Number of training views (defaults to the profile's).
    #[arg(long, global = true)]
    pub views: Option<usize>,
    /// Output path (directory or file, depending on the command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset of a building.
    Generate(GenerateArgs),
    /// Fit a semantic SDF network to a dataset.
    Train(TrainArgs),
    /// Mesh a field and measure WWR and footprint.
    Estimate(EstimateArgs),
    /// Run an image-space WWR baseline on a dataset's facade views.
    Baseline(BaselineArgs),
    /// Tabulate estimate and baseline reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Building spec JSON file or fixture name (see `fixtures::NAMES`).
    #[arg(long)]
    pub spec: String,
    /// Image side length in pixels (defaults to the profile's).
    #[arg(long)]
    pub image_size: Option<u32>,
    /// Horizontal field of view in degrees (defaults to the profile's).
    #[arg(long)]
    pub fov: Option<f64>,
    /// Facade-tagged views for the baselines.
    #[arg(long, value_enum, default_value = "none")]
    pub facade_views: FacadeViews,
    /// Side length of facade views in pixels.
    #[arg(long, default_value_t = 512)]
    pub facade_size: u32,
    /// Orbit radius of training cameras in scene bounding radii.
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Override the profile's iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Override the profile's rays per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Metrics CSV (defaults to the checkpoint path with a `.csv` extension).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Trained checkpoint.
    #[arg(long, conflicts_with = "analytic", required_unless_present = "analytic")]
    pub checkpoint: Option<PathBuf>,
    /// Use the exact field of a building spec (JSON file or fixture name).
    #[arg(long)]
    pub analytic: Option<String>,
    /// Dataset whose ground truth the estimate is compared with.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Label-boundary refinement levels.
    #[arg(long, default_value_t = 3)]
    pub refine: usize,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long = "view-mode", value_enum, default_value = "ideal")]
    pub view_mode: ViewMode,
    /// How a facade's views are combined.
    #[arg(long, value_enum, default_value = "mean")]
    pub combine: Combine,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimate (`report.json`) and baseline (`*.json`) reports.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input or usage (exit code 2).
    Input(String),
    /// Failure inside the pipeline (exit code 1).
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Pipeline(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Pipeline(m) => f.write_str(m),
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn pipeline(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Camera(_) => pipeline(e),
            _ => input(e),
        }
    }
}

impl From<CharacteristicsError> for CliError {
    fn from(e: CharacteristicsError) -> Self {
        match e {
            CharacteristicsError::InvalidGrid(_) | CharacteristicsError::Io(_) => input(e),
            _ => pipeline(e),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::CurvedUnsupported { .. } => input(e),
            _ => pipeline(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Advisory lock next to an output path, removed on drop.
pub struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self, CliError> {
        let path = if out.is_dir() { out.join(".bn3d.lock") } else { lock_path_for_file(out) };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| input(format!("{}: {e}", parent.display())))?;
        }
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                input(format!("{} exists: another bn3d process is writing this output", path.display()))
            } else {
                input(format!("{}: {e}", path.display()))
            }
        })?;
        Ok(OutputLock { path, _file: file })
    }
}

fn lock_path_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".lock");
    out.with_file_name(name)
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn load_profile(name: &str) -> Result<Profile, CliError> {
    match name {
        "desk" => Ok(Profile::desk()),
        "paper" => Ok(Profile::paper()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("profile {path}: {e}")))?;
            Profile::from_json(&text).map_err(|e| input(format!("profile {path}: {e}")))
        }
    }
}

/// A spec from a fixture name or a JSON file.
pub fn load_spec(name: &str) -> Result<BuildingSpec, CliError> {
    if let Some(spec) = fixtures::by_name(name) {
        return Ok(spec);
    }
    let text = std::fs::read_to_string(name).map_err(|e| {
        input(format!("spec {name}: {e} (fixtures: {})", fixtures::NAMES.join(", ")))
    })?;
    let spec: BuildingSpec = serde_json::from_str(&text).map_err(|e| input(format!("spec {name}: {e}")))?;
    spec.validate().map_err(|e| input(format!("spec {name}: {e}")))?;
    Ok(spec)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn out_or(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_generate(common: &Common, args: &GenerateArgs) -> Result<dataset::DatasetManifest, CliError> {
    let profile = load_profile(&common.profile)?;
    let spec = load_spec(&args.spec)?;
    let out = out_or(common, "dataset");
    std::fs::create_dir_all(&out).map_err(|e| input(format!("{}: {e}", out.display())))?;
    let _lock = OutputLock::acquire(&out)?;
    let opts = GenerateOptions {
        views: common.views.unwrap_or(profile.views),
        image_size: args.image_size.unwrap_or(profile.image_size),
        fov_deg: args.fov.unwrap_or(profile.fov_deg),
        seed: common.seed,
        radius_factor: args.radius,
        facade_views: args.facade_views,
        facade_image_size: args.facade_size,
    };
    Ok(dataset::generate(&spec, &out, &opts)?)
}

/// Trains on a dataset; writes the checkpoint to `--out` and the metrics CSV.
pub fn cmd_train(common: &Common, args: &TrainArgs) -> Result<Checkpoint, CliError> {
    let mut profile = load_profile(&common.profile)?;
    let (_, data) = dataset::load(&args.manifest)?;
    if let Some(n) = args.iterations {
        profile.train.iterations = n;
        profile.train.warmup = profile.train.warmup.min(n.saturating_sub(1));
    }
    if let Some(b) = args.batch {
        profile.train.batch_rays = b;
    }
    profile.train.seed = common.seed;
    let out = out_or(common, "checkpoint.json");
    let metrics = args.metrics.clone().unwrap_or_else(|| out.with_extension("csv"));
    let _lock = OutputLock::acquire(&out)?;
    let scene = build_scene(&data.spec).map_err(input)?;
    let net = FieldNetwork::for_scene(profile.network.clone(), &scene, common.seed).map_err(pipeline)?;
    let views: Vec<_> = data.training_views().map(|v| (&v.image, &v.pose, &v.intrinsics)).collect();
    if views.is_empty() {
        return Err(input("dataset has no training views"));
    }
    let rays = TrainingData::from_views(&views, &net.frame).map_err(input)?;
    let mut trainer = Trainer::new(net, profile.train.clone()).map_err(input)?;
    let mut csv = format!("{}\n", StepRecord::CSV_HEADER);
    let mut io_error = None;
    trainer
        .run(
            &rays,
            |r| {
                let _ = writeln!(csv, "{}", r.csv_row());
            },
            |t| {
                if let Err(e) = std::fs::write(&out, t.checkpoint().to_json()) {
                    io_error.get_or_insert(input(format!("{}: {e}", out.display())));
                }
            },
        )
        .map_err(pipeline)?;
    if let Some(e) = io_error {
        return Err(e);
    }
    write(&metrics, csv)?;
    Ok(trainer.checkpoint())
}

/// Grid over the field's region of interest: the scene sphere for analytic
/// fields, the normalised unit sphere for networks.
pub fn estimate_grid(center: crate::Vec3, radius: f64, resolution: usize) -> Result<GridSpec, CharacteristicsError> {
    GridSpec::above_ground(center, radius, resolution)
}

pub fn cmd_estimate(common: &Common, args: &EstimateArgs) -> Result<CharacteristicsReport, CliError> {
    let out = out_or(common, "estimate");
    let truth: Option<GroundTruth> = match (&args.manifest, &args.analytic) {
        (Some(m), _) => Some(dataset::load(m)?.1.truth),
        (None, Some(name)) => Some(ground_truth(&load_spec(name)?).map_err(input)?),
        (None, None) => None,
    };
    std::fs::create_dir_all(&out).map_err(|e| input(format!("{}: {e}", out.display())))?;
    let _lock = OutputLock::acquire(&out)?;
    let result = if let Some(name) = &args.analytic {
        let spec = load_spec(name)?;
        let scene = build_scene(&spec).map_err(input)?;
        let grid = estimate_grid(scene.center, scene.radius, common.grid)?;
        let scene = scene.with_label_band(2.0 * grid.max_cell());
        characteristics::estimate(&scene, &grid, args.refine, &format!("analytic:{name}"), truth.as_ref())?
    } else {
        let path = args.checkpoint.as_ref().expect("clap requires a source");
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let net = Checkpoint::from_json(&text).and_then(|c| c.network()).map_err(input)?;
        let grid = estimate_grid(crate::Vec3::from(net.frame.center), net.frame.scale, common.grid)?;
        characteristics::estimate(&net, &grid, args.refine, &format!("checkpoint:{}", path.display()), truth.as_ref())?
    };
    characteristics::write_outputs(&result, &out)?;
    Ok(result.report)
}

pub fn cmd_baseline(common: &Common, args: &BaselineArgs) -> Result<BaselineReport, CliError> {
    let (_, data) = dataset::load(&args.manifest)?;
    let out = out_or(common, "baseline.csv");
    let _lock = OutputLock::acquire(&out)?;
    let report = baseline2d::run_baseline(&data, args.method, args.view_mode, args.combine)?;
    write(&out, report.to_csv())?;
    let json = serde_json::to_string_pretty(&report).map_err(pipeline)?;
    write(&out.with_extension("json"), json)?;
    Ok(report)
}

/// A report read back by `evaluate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyReport {
    Estimate(CharacteristicsReport),
    Baseline(BaselineReport),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Statistics of the finite values; undefined errors are skipped.
    pub fn of(values: &[f64]) -> Option<Self> {
        let values: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }

    fn cell(m: &Option<MeanStd>, digits: usize) -> String {
        m.as_ref().map_or("-".into(), |m| format!("{:.digits$} ± {:.digits$}", m.mean, m.std))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub method: String,
    pub buildings: usize,
    pub wwr_error_pct: Option<MeanStd>,
    pub window_area_error_pct: Option<MeanStd>,
    pub wall_area_error_pct: Option<MeanStd>,
    pub footprint_iou: Option<MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub units: String,
    pub rows: Vec<EvaluationRow>,
}

pub const METHODS: [&str; 5] = ["BuildNet3D", "2D-S ideal", "2D-S multi", "2D-SS ideal", "2D-SS multi"];

/// Aggregates reports into mean ± std per method.
pub fn evaluate(reports: &[AnyReport]) -> Result<EvaluationReport, CliError> {
    let mut units: Option<&str> = None;
    let mut rows = Vec::new();
    for method in METHODS {
        let (mut wwr, mut win, mut wall, mut iou) = (vec![], vec![], vec![], vec![]);
        for r in reports {
            match r {
                AnyReport::Estimate(e) if method == "BuildNet3D" => {
                    if *units.get_or_insert(&e.units) != e.units {
                        return Err(input(format!("unit mismatch: {} vs {}", units.unwrap(), e.units)));
                    }
                    let Some(gt) = &e.ground_truth else { continue };
                    wwr.push(gt.wwr_error_pct);
                    win.push(gt.window_area_error_pct);
                    wall.push(gt.wall_area_error_pct);
                    iou.push(gt.footprint_iou);
                }
                AnyReport::Baseline(b) if format!("{} {}", b.method.name(), b.mode.name()) == method => {
                    wwr.push(b.wwr_error_pct);
                }
                _ => {}
            }
        }
        if wwr.is_empty() {
            continue;
        }
        rows.push(EvaluationRow {
            method: method.into(),
            buildings: wwr.len(),
            wwr_error_pct: MeanStd::of(&wwr),
            window_area_error_pct: MeanStd::of(&win),
            wall_area_error_pct: MeanStd::of(&wall),
            footprint_iou: MeanStd::of(&iou),
        });
    }
    if rows.is_empty() {
        return Err(input("no report carries ground truth"));
    }
    Ok(EvaluationReport { units: units.unwrap_or("m").into(), rows })
}

impl EvaluationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,buildings,wwr_err_mean,wwr_err_std,window_err_mean,window_err_std,wall_err_mean,wall_err_std,iou_mean,iou_std\n",
        );
        let f = |m: &Option<MeanStd>| m.as_ref().map_or(",".into(), |m| format!("{},{}", m.mean, m.std));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                r.buildings,
                f(&r.wwr_error_pct),
                f(&r.window_area_error_pct),
                f(&r.wall_area_error_pct),
                f(&r.footprint_iou)
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let header = ["method", "n", "WWR err %", "window err %", "wall err %", "footprint IoU"];
        let mut cells: Vec<[String; 6]> = vec![header.map(String::from)];
        for r in &self.rows {
            cells.push([
                r.method.clone(),
                r.buildings.to_string(),
                MeanStd::cell(&r.wwr_error_pct, 1),
                MeanStd::cell(&r.window_area_error_pct, 1),
                MeanStd::cell(&r.wall_area_error_pct, 1),
                MeanStd::cell(&r.footprint_iou, 3),
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap()).collect();
        let mut s = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}

pub fn cmd_evaluate(common: &Common, args: &EvaluateArgs) -> Result<EvaluationReport, CliError> {
    let mut reports = Vec::new();
    for p in &args.reports {
        let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
        let r: AnyReport = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    let eval = evaluate(&reports)?;
    let out = out_or(common, "evaluation");
    std::fs::create_dir_all(&out).map_err(|e| input(format!("{}: {e}", out.display())))?;
    let _lock = OutputLock::acquire(&out)?;
    write(&out.join("evaluation.csv"), eval.to_csv())?;
    write(&out.join("evaluation.txt"), eval.to_table())?;
    Ok(eval)
}

/// Caps rayon's global pool at `BN3D_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("BN3D_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| input(format!("BN3D_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(pipeline)?;
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| run(&cli));
    match result {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let c = &cli.common;
    Ok(match &cli.command {
        Command::Generate(a) => {
            let m = cmd_generate(c, a)?;
            format!("wrote {} views, content hash {}", m.views.len(), m.content_hash)
        }
        Command::Train(a) => {
            let ck = cmd_train(c, a)?;
            format!("trained {} steps, inv_std {:.3}", ck.step, ck.params.last().map_or(0.0, |r| r.exp()))
        }
        Command::Estimate(a) => {
            let r = cmd_estimate(c, a)?;
            let mut s = format!("wwr {:.4} window {:.3} m² wall {:.3} m²", r.wwr, r.window_area, r.wall_area);
            if let Some(gt) = &r.ground_truth {
                let _ = write!(s, " | truth {:.4} error {:.2}% footprint IoU {:.4}", gt.wwr, gt.wwr_error_pct, gt.footprint_iou);
            }
            s
        }
        Command::Baseline(a) => {
            let r = cmd_baseline(c, a)?;
            format!("{} {}: wwr {:.4} truth {:.4} error {:.2}%", r.method.name(), r.mode.name(), r.wwr, r.truth_wwr, r.wwr_error_pct)
        }
        Command::Evaluate(a) => cmd_evaluate(c, a)?.to_table(),
    })
}
