//! The `radcam` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or shape errors.
//! Diagnostics go to standard error. Every input is read and validated
//! before any output file is written.
//!
//! Setting `RADCAM_THREADS` fixes the worker thread count; results do not
//! depend on it.

mod params;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::depth::gradcheck::{run_grad_check, GradCheckConfig};
use crate::depth::{
    build_depth_targets, one_to_many_loss, one_to_many_loss_from_logits, read_radar_csv_from,
    targets_from_tensor, targets_to_tensor, Aggregation, DepthBinSpec, LossConfig, RadiusConfig,
    Strategy,
};
use crate::error::{Error, Result};
use crate::fusion::{concat_fusion, csa_fusion};
use crate::geometry::{
    empirical_projection_error, lateral_error_projection, max_pixel_position_error, Calibration,
    SphericalPoint,
};
use crate::sim::{run_experiment, write_plot_csv, write_rows_csv, ExperimentConfig};
use crate::tensor::{write_lxlt_to, Tensor};
use crate::view_transform::{depth_distribution, occupancy_from_bev, sample_vt, VtCamera};

use params::{
    load_json, load_tensor, read_text, ConcatParamsFile, CsaParamsFile, Loader, VtManifest,
};

pub const THREADS_ENV: &str = "RADCAM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "radcam",
    version,
    about = "Radar/camera depth supervision and BEV fusion tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project radar points into sparse depth targets.
    DepthTargets(DepthTargetsArgs),
    /// Evaluate the depth loss of a depth map against targets.
    Loss(LossArgs),
    /// Compare the analytic loss gradient with finite differences.
    GradCheck(GradCheckArgs),
    /// Transform image features to BEV.
    Vt(VtArgs),
    /// Fuse radar and image BEV features.
    Fuse(FuseArgs),
    /// Run a supervision-quality simulation experiment.
    Simulate(SimulateArgs),
    /// Tabulate the radar projection error over a range/azimuth grid.
    ErrorModel(ErrorModelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregationArg {
    Min,
    Max,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Min => Aggregation::Min,
            AggregationArg::Max => Aggregation::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    OneToOne,
    OneToMany,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::OneToOne => Strategy::OneToOne,
            StrategyArg::OneToMany => Strategy::OneToMany,
        }
    }
}

/// Settings shared by `depth-targets` and `loss`. Values given as flags
/// override those from `--config`, which override the defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingsFile {
    stride: Option<usize>,
    k: Option<f64>,
    r_max: Option<f64>,
    fixed_r: Option<f64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    aggregation: Option<Aggregation>,
    strategy: Option<Strategy>,
    d_min: Option<f64>,
    d_max: Option<f64>,
}

fn load_settings(path: Option<&Path>) -> Result<SettingsFile> {
    match path {
        Some(p) => load_json(p),
        None => Ok(SettingsFile::default()),
    }
}

#[derive(Debug, Args)]
struct DepthTargetsArgs {
    /// Radar points CSV with columns x,y,z[,rcs_dbsm][,doppler].
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Output LXLT (N x 4 rows of u, v, d_gt, radius); a JSON sidecar is
    /// written next to it with `.json` appended.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    fixed_r: Option<f64>,
    /// Drop points without RCS instead of using a fixed radius.
    #[arg(long, conflicts_with = "fixed_r")]
    no_fixed_r: bool,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// D x H x W depth probabilities (or logits with `--logits`).
    #[arg(long)]
    depth: PathBuf,
    /// N x 4 targets from `depth-targets`.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    logits: bool,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Per-target CSV output.
    #[arg(long)]
    per_target: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 16)]
    max_bins: usize,
    #[arg(long, default_value_t = 12)]
    max_size: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VtArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// C x Y x X BEV output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    depth_out: Option<PathBuf>,
    #[arg(long)]
    occupancy_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FuseMode {
    Concat,
    Csa,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    radar: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Parameter manifest matching `--mode`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = FuseMode::Csa)]
    mode: FuseMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Per-seed CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON with bootstrap intervals.
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    seed_start: Option<u64>,
    /// Long-format CSV (seed, config, metric, value).
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ErrorModelArgs {
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0, 50.0, 100.0])]
    ranges: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = vec![-20.0, -10.0, 0.0, 10.0, 20.0])]
    azimuths_deg: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation_deg: f64,
    /// Table CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format CSV (range_m, azimuth_deg, quantity, value_px).
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let outcome = match cli.command {
        Command::DepthTargets(a) => depth_targets(a),
        Command::Loss(a) => loss(a),
        Command::GradCheck(a) => grad_check(a),
        Command::Vt(a) => vt(a),
        Command::Fuse(a) => fuse(a),
        Command::Simulate(a) => simulate(a),
        Command::ErrorModel(a) => error_model(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // A pool may already exist when called repeatedly in-process.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={value:?}"),
    }
}

/// Output files, collected in memory and written only after all work
/// succeeded.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.0.push((path.to_path_buf(), bytes));
    }

    fn add_tensor(&mut self, path: &Path, t: &Tensor) -> Result<()> {
        let mut buf = Vec::new();
        write_lxlt_to(&mut buf, t)?;
        self.add(path, buf);
        Ok(())
    }

    fn add_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(path, text.into_bytes());
        Ok(())
    }

    fn write(self) -> Result<()> {
        for (path, bytes) in self.0 {
            std::fs::write(&path, bytes).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
        }
        Ok(())
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct TargetsSidecar {
    columns: [&'static str; 4],
    count: usize,
    stride: usize,
    feature_width: usize,
    feature_height: usize,
    dropped: crate::depth::DropCounts,
    radius: RadiusConfig,
}

fn radius_config(
    s: &SettingsFile,
    k: Option<f64>,
    r_max: Option<f64>,
    fixed_r: Option<f64>,
    no_fixed_r: bool,
) -> RadiusConfig {
    let d = RadiusConfig::default();
    RadiusConfig {
        k: k.or(s.k).unwrap_or(d.k),
        r_max: r_max.or(s.r_max).unwrap_or(d.r_max),
        fixed_r: if no_fixed_r {
            None
        } else {
            fixed_r.or(s.fixed_r).or(d.fixed_r)
        },
    }
}

fn depth_targets(a: DepthTargetsArgs) -> CmdResult {
    let settings = load_settings(a.config.as_deref())?;
    let calib = Calibration::from_json_str(&read_text(&a.calib)?)?;
    let points = read_radar_csv_from(read_text(&a.points)?.as_bytes())?;
    let stride = a.stride.or(settings.stride).unwrap_or(1);
    let radius = radius_config(&settings, a.k, a.r_max, a.fixed_r, a.no_fixed_r);

    let set = build_depth_targets(&points, &calib, stride, &radius)?;
    let mut out = Outputs::default();
    out.add_tensor(&a.out, &targets_to_tensor(&set.targets))?;
    out.add_json(
        &sidecar_path(&a.out),
        &TargetsSidecar {
            columns: ["u", "v", "d_gt", "radius"],
            count: set.targets.len(),
            stride,
            feature_width: set.feature_width,
            feature_height: set.feature_height,
            dropped: set.dropped,
            radius,
        },
    )?;
    out.write()?;
    eprintln!(
        "{} targets on a {}x{} map, {} points dropped",
        set.targets.len(),
        set.feature_width,
        set.feature_height,
        set.dropped.total()
    );
    Ok(())
}

fn loss(a: LossArgs) -> CmdResult {
    let settings = load_settings(a.config.as_deref())?;
    let depth = load_tensor(&a.depth)?;
    let targets = targets_from_tensor(&load_tensor(&a.targets)?)?;
    let (bins, _, _) = depth.dims3()?;
    let (Some(d_min), Some(d_max)) = (a.d_min.or(settings.d_min), a.d_max.or(settings.d_max))
    else {
        return Err(Failure::Usage(
            "the depth range needs --d-min and --d-max (or d_min/d_max in --config)".into(),
        ));
    };
    let spec = DepthBinSpec::new(d_min, d_max, bins)?;
    let d = LossConfig::default();
    let cfg = LossConfig {
        lambda1: a.lambda1.or(settings.lambda1).unwrap_or(d.lambda1),
        lambda2: a.lambda2.or(settings.lambda2).unwrap_or(d.lambda2),
        aggregation: a
            .aggregation
            .map(Into::into)
            .or(settings.aggregation)
            .unwrap_or(d.aggregation),
        strategy: a
            .strategy
            .map(Into::into)
            .or(settings.strategy)
            .unwrap_or(d.strategy),
    };
    cfg.validate()?;

    let report = if a.logits {
        one_to_many_loss_from_logits(&depth, &targets, &spec, &cfg)?
    } else {
        one_to_many_loss(&depth, &targets, &spec, &cfg)?
    };
    let mut out = Outputs::default();
    if let Some(path) = &a.per_target {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "index",
            "u",
            "v",
            "d_gt",
            "radius",
            "loss",
            "selected_u",
            "selected_v",
        ])?;
        for (i, t) in targets.iter().enumerate() {
            let (su, sv) = report.selected[i];
            w.write_record([
                i.to_string(),
                t.u.to_string(),
                t.v.to_string(),
                t.d_gt.to_string(),
                t.radius.to_string(),
                report.per_target[i].to_string(),
                su.to_string(),
                sv.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.add(path, bytes);
    }
    out.write()?;
    println!("{}", report.total);
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> CmdResult {
    if a.instances == 0 || !(a.step > 0.0) || a.max_bins < 2 || a.max_size == 0 {
        return Err(Failure::Usage(
            "grad-check needs instances ≥ 1, step > 0, max-bins ≥ 2 and max-size ≥ 1".into(),
        ));
    }
    let report = run_grad_check(&GradCheckConfig {
        instances: a.instances,
        max_bins: a.max_bins,
        max_size: a.max_size,
        step: a.step,
        seed: a.seed,
    })?;
    let mut out = Outputs::default();
    if let Some(path) = &a.out {
        out.add_json(path, &report)?;
    }
    out.write()?;
    println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    Ok(())
}

fn vt(a: VtArgs) -> CmdResult {
    let manifest: VtManifest = load_json(&a.manifest)?;
    let loader = Loader::for_manifest(&a.manifest);
    let image = loader.tensor(&manifest.image_features)?;
    let radar_bev = loader.tensor(&manifest.radar_bev)?;
    let calib = Calibration::from_json_str(&read_text(&loader.resolve(&manifest.calibration))?)?;
    let params = loader.vt_params(&manifest.params)?;
    manifest.bins.validate()?;
    if manifest.stride == 0 {
        return Err(Error::invalid("stride must be positive").into());
    }
    let (c, h, w) = image.dims3()?;
    let (want_h, want_w) = (
        calib.image_height.div_ceil(manifest.stride),
        calib.image_width.div_ceil(manifest.stride),
    );
    if (h, w) != (want_h, want_w) {
        return Err(Error::shape(format!(
            "image features are {h}x{w}, stride {} of a {}x{} image gives {want_h}x{want_w}",
            manifest.stride, calib.image_height, calib.image_width
        ))
        .into());
    }
    let (_, ny, nx) = radar_bev.dims3()?;
    if (manifest.grid.y.count, manifest.grid.x.count) != (ny, nx) {
        return Err(Error::shape(format!(
            "radar BEV is {ny}x{nx} but the grid is {}x{}",
            manifest.grid.y.count, manifest.grid.x.count
        ))
        .into());
    }
    params.validate(c, manifest.grid.z.count, manifest.bins.num_bins)?;

    let camera = VtCamera::from_calibration(&calib, manifest.stride)?;
    let occupancy = occupancy_from_bev(&radar_bev, &params.occupancy_conv)?;
    let depth = depth_distribution(
        &image,
        &camera.intrinsics,
        Some(&camera.ego_to_camera),
        &params,
        &manifest.bins,
        manifest.stride,
    )?;
    let bev = sample_vt(&image, &depth, &occupancy, &manifest.grid, &camera, &params)?;

    let mut out = Outputs::default();
    out.add_tensor(&a.out, &bev)?;
    if let Some(p) = &a.depth_out {
        out.add_tensor(p, &depth.probs)?;
    }
    if let Some(p) = &a.occupancy_out {
        out.add_tensor(p, occupancy.tensor())?;
    }
    out.write()?;
    Ok(())
}

fn fuse(a: FuseArgs) -> CmdResult {
    let radar = load_tensor(&a.radar)?;
    let image = load_tensor(&a.image)?;
    let loader = Loader::for_manifest(&a.params);
    let fused = match a.mode {
        FuseMode::Concat => {
            let p = loader.concat_params(&load_json::<ConcatParamsFile>(&a.params)?)?;
            concat_fusion(&radar, &image, &p)?
        }
        FuseMode::Csa => {
            let p = loader.csa_params(&load_json::<CsaParamsFile>(&a.params)?)?;
            csa_fusion(&radar, &image, &p)?
        }
    };
    let mut out = Outputs::default();
    out.add_tensor(&a.out, &fused)?;
    out.write()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let mut cfg: ExperimentConfig = load_json(&a.config)?;
    if let Some(n) = a.seeds {
        cfg.seeds.count = n;
    }
    if let Some(s) = a.seed_start {
        cfg.seeds.start = s;
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;

    let mut out = Outputs::default();
    let mut rows = Vec::new();
    write_rows_csv(&result.rows, &mut rows)?;
    out.add(&a.out, rows);
    out.add_json(&a.summary, &result.summary)?;
    if let Some(p) = &a.emit_plot_data {
        let mut plot = Vec::new();
        write_plot_csv(&result.rows, &mut plot)?;
        out.add(p, plot);
    }
    out.write()?;
    for c in &result.summary.comparisons {
        eprintln!(
            "{} vs {}: mean diff {:+.4}, CI [{:+.4}, {:+.4}] -> {}",
            c.better,
            c.worse,
            c.mean_diff,
            c.ci_low,
            c.ci_high,
            if c.holds { "holds" } else { "does not hold" }
        );
    }
    Ok(())
}

fn error_model(a: ErrorModelArgs) -> CmdResult {
    let calib = Calibration::from_json_str(&read_text(&a.calib)?)?;
    if a.ranges.is_empty() || a.azimuths_deg.is_empty() {
        return Err(Failure::Usage(
            "ranges and azimuths must not be empty".into(),
        ));
    }
    let k = &calib.intrinsics;
    let res = &calib.resolution;
    let bound = max_pixel_position_error(k, res);
    let mut table =
        String::from("range_m,azimuth_deg,e_u_px,e_v_px,e_px,azimuth_step_du_px,lateral_du_px\n");
    let mut plot = String::from("range_m,azimuth_deg,quantity,value_px\n");
    for &rho in &a.ranges {
        for &az in &a.azimuths_deg {
            let p = SphericalPoint::from_degrees(rho, az, a.elevation_deg)?;
            let step = empirical_projection_error(&p, res, k)?;
            let lateral = lateral_error_projection(&p, res, k)?;
            writeln!(
                table,
                "{rho},{az},{},{},{},{step},{lateral}",
                bound.e_u, bound.e_v, bound.e
            )
            .expect("writing to a String");
            for (q, v) in [
                ("e_u", bound.e_u),
                ("azimuth_step_du", step),
                ("lateral_du", lateral),
            ] {
                writeln!(plot, "{rho},{az},{q},{v}").expect("writing to a String");
            }
        }
    }
    let mut out = Outputs::default();
    if let Some(p) = &a.out {
        out.add(p, table.clone().into_bytes());
    }
    if let Some(p) = &a.emit_plot_data {
        out.add(p, plot.into_bytes());
    }
    out.write()?;
    if a.out.is_none() {
        print!("{table}");
    }
    Ok(())
}
