//! Command-line front end for multimodal stixel estimation.
//!
//! Five subcommands cover the whole workflow:
//!
//! * `generate` — synthesize a scan (plus ground truth) from a scene file
//! * `solve`    — segment a scan into a stixel world
//! * `eval`     — score a world against per-point reference labels
//! * `sweep`    — re-solve over a parameter grid and tabulate the metrics
//! * `render`   — rasterize a world to a PPM image
//!
//! All documents are the versioned text formats of `stixel_core::formats`,
//! so every command's file output is byte-identical across reruns with the
//! same inputs. Exit codes distinguish failure families: 2 for command-line
//! usage errors, 3 for file I/O, 4 for document parse errors, 5 for
//! validation failures, 1 for internal errors.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use stixel_core::formats::{
    denominator_from_token, eval_to_string, read_params, read_scan, read_scene, read_world,
    sweep_to_string, write_labels, write_ppm, write_scan, write_scene, write_sweep, write_world,
    EvalDocument, FormatError, Palette, ScanDocument, SweepDocument, SweepRow,
};
use stixel_core::metrics::{evaluate, OutlierDenominator, PointLabels};
use stixel_core::model::{ClassMap, ModelParams, Scan, StixelWorld};
use stixel_core::solver::{solve_scan, SolveError, SolveOptions};
use stixel_core::synthetic::generate;

// ---------------------------------------------------------------------------
// Errors and exit codes.

const EXIT_INTERNAL: u8 = 1;
const EXIT_IO: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn io(m: impl Display) -> Self {
        CliError { code: EXIT_IO, message: m.to_string() }
    }
    fn parse(m: impl Display) -> Self {
        CliError { code: EXIT_PARSE, message: m.to_string() }
    }
    fn validation(m: impl Display) -> Self {
        CliError { code: EXIT_VALIDATION, message: m.to_string() }
    }
    fn internal(m: impl Display) -> Self {
        CliError { code: EXIT_INTERNAL, message: m.to_string() }
    }
    /// Prefixes the offending file so multi-file commands stay readable.
    fn in_file(self, path: &Path) -> Self {
        CliError { code: self.code, message: format!("{}: {}", path.display(), self.message) }
    }
}

fn from_format(e: FormatError) -> CliError {
    match e {
        FormatError::Io(io) => CliError::io(io),
        p @ FormatError::Parse { .. } => CliError::parse(p),
        r @ FormatError::Render(_) => CliError::validation(r),
    }
}

fn from_solve(e: SolveError) -> CliError {
    match e {
        SolveError::Params(m) => CliError::validation(m),
        other => CliError::internal(other),
    }
}

// ---------------------------------------------------------------------------
// Argument structure.

#[derive(Parser)]
#[command(
    name = "stixel",
    version,
    about = "Multimodal stixel estimation: generate, solve, eval, sweep, render."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scan (and its ground truth) from a scene file.
    Generate(GenerateArgs),
    /// Solve a scan into a stixel world.
    Solve(SolveArgs),
    /// Score a stixel world against per-point reference labels.
    Eval(EvalArgs),
    /// Solve repeatedly over a parameter grid and tabulate the metrics.
    Sweep(SweepArgs),
    /// Rasterize a stixel world to a binary PPM image.
    Render(RenderArgs),
}

/// Model parameters assembled from three layers: built-in defaults, then an
/// optional parameter file, then individual flags. Later layers win.
#[derive(Args)]
struct ParamArgs {
    /// Parameter file (stixel-params v1); individual flags override it.
    #[arg(long, value_name = "PATH")]
    params: Option<PathBuf>,
    /// Weight of the geometric modality (0 disables it).
    #[arg(long, value_name = "W", allow_negative_numbers = true)]
    w_geo: Option<f64>,
    /// Weight of the LiDAR-domain semantic modality.
    #[arg(long, value_name = "W", allow_negative_numbers = true)]
    w_sem_lidar: Option<f64>,
    /// Weight of the camera-domain semantic modality.
    #[arg(long, value_name = "W", allow_negative_numbers = true)]
    w_sem_cam: Option<f64>,
    /// Complexity cost per stixel beyond the first.
    #[arg(long, value_name = "COST", allow_negative_numbers = true)]
    mc_cost: Option<f64>,
    /// Range noise of object returns (std dev, meters).
    #[arg(long, value_name = "SIGMA", allow_negative_numbers = true)]
    sigma_range: Option<f64>,
    /// Height noise of ground returns (std dev, meters).
    #[arg(long, value_name = "SIGMA", allow_negative_numbers = true)]
    sigma_height: Option<f64>,
    /// Prior outlier probability of the range mixture, in [0, 1).
    #[arg(long, value_name = "P", allow_negative_numbers = true)]
    outlier_rate: Option<f64>,
    /// Range of the uniform outlier component (meters).
    #[arg(long, value_name = "R", allow_negative_numbers = true)]
    outlier_range_max: Option<f64>,
    /// Steepness of the gradient-to-object transition.
    #[arg(long, value_name = "K", allow_negative_numbers = true)]
    grad_steep: Option<f64>,
    /// Gradient angle (radians) where object and ground are equally likely.
    #[arg(long, value_name = "PHI", allow_negative_numbers = true)]
    grad_shift: Option<f64>,
    /// Steepness of the invalid-return elevation model.
    #[arg(long, value_name = "K", allow_negative_numbers = true)]
    sens_scale: Option<f64>,
    /// Elevation (radians) where sky explains half the invalid returns.
    #[arg(long, value_name = "EL", allow_negative_numbers = true)]
    sens_shift: Option<f64>,
    /// Sensor height above the ground plane (meters).
    #[arg(long, value_name = "H", allow_negative_numbers = true)]
    sensor_height: Option<f64>,
}

impl ParamArgs {
    fn build(&self) -> Result<ModelParams<f64>, CliError> {
        let mut p = match &self.params {
            Some(path) => read_params::<f64>(path).map_err(|e| from_format(e).in_file(path))?,
            None => ModelParams::default(),
        };
        let overrides = [
            (&mut p.w_geo, self.w_geo),
            (&mut p.w_sem_lidar, self.w_sem_lidar),
            (&mut p.w_sem_cam, self.w_sem_cam),
            (&mut p.mc_cost, self.mc_cost),
            (&mut p.sigma_range, self.sigma_range),
            (&mut p.sigma_height, self.sigma_height),
            (&mut p.outlier_rate, self.outlier_rate),
            (&mut p.outlier_range_max, self.outlier_range_max),
            (&mut p.grad_steep, self.grad_steep),
            (&mut p.grad_shift, self.grad_shift),
            (&mut p.sens_scale, self.sens_scale),
            (&mut p.sens_shift, self.sens_shift),
            (&mut p.sensor_height, self.sensor_height),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        Ok(p)
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Worker threads for solving; the result is identical for any count.
    #[arg(long, default_value_t = 1, value_name = "N")]
    threads: usize,
    /// Maximum distance candidates kept per segment (at least 2).
    #[arg(long, default_value_t = 32, value_name = "N")]
    candidate_cap: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions, CliError> {
        if self.candidate_cap < 2 {
            return Err(CliError::validation("--candidate-cap must be at least 2"));
        }
        Ok(SolveOptions { threads: self.threads, distance_candidate_cap: self.candidate_cap })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Scene description file; omitted, the built-in demo scene is used.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    /// Override the scene's random seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Where to write the scan document.
    #[arg(long, value_name = "PATH")]
    out_scan: PathBuf,
    /// Also write the ground-truth stixel world.
    #[arg(long, value_name = "PATH")]
    out_world: Option<PathBuf>,
    /// Also write the ground-truth per-point labels.
    #[arg(long, value_name = "PATH")]
    out_labels: Option<PathBuf>,
    /// Also write the effective scene description (seed override applied).
    #[arg(long, value_name = "PATH")]
    emit_spec: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Input scan document.
    scan: PathBuf,
    /// Where to write the stixel world.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Input scan document.
    scan: PathBuf,
    /// Stixel world to score.
    world: PathBuf,
    /// Per-point reference labels.
    labels: PathBuf,
    /// Relative range deviation above which a point is an outlier.
    #[arg(long, default_value_t = 0.05, value_name = "FRAC")]
    threshold: f64,
    /// Outlier-rate denominator: 'valid' returns only, or 'all' points.
    #[arg(long, default_value = "valid", value_name = "WHICH")]
    denominator: String,
    /// Where to write the report; omitted, it goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Input scan document.
    scan: PathBuf,
    /// Per-point reference labels.
    labels: PathBuf,
    /// Parameter to sweep (any stixel-params key, e.g. w_sem_lidar).
    #[arg(long, value_name = "NAME")]
    parameter: String,
    /// First grid value.
    #[arg(long, value_name = "V", allow_negative_numbers = true)]
    min: f64,
    /// Last grid value.
    #[arg(long, value_name = "V", allow_negative_numbers = true)]
    max: f64,
    /// Number of evenly spaced grid values, both ends inclusive.
    #[arg(long, value_name = "N")]
    steps: usize,
    /// Relative range deviation above which a point is an outlier.
    #[arg(long, default_value_t = 0.05, value_name = "FRAC")]
    threshold: f64,
    /// Outlier-rate denominator: 'valid' returns only, or 'all' points.
    #[arg(long, default_value = "valid", value_name = "WHICH")]
    denominator: String,
    /// Where to write the table; omitted, it goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct RenderArgs {
    /// Stixel world to rasterize.
    world: PathBuf,
    /// Where to write the PPM image.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Square pixels per scan cell.
    #[arg(long, default_value_t = 8, value_name = "N")]
    scale: usize,
}

// ---------------------------------------------------------------------------
// Shared plumbing.

/// Hex SHA-256 of the canonical parameter document, recorded in reports so
/// every experiment names the exact parameters that produced it.
fn params_hash(params: &ModelParams<f64>) -> String {
    let digest = Sha256::digest(stixel_core::formats::params_to_string(params).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_denominator(tok: &str) -> Result<OutlierDenominator, CliError> {
    denominator_from_token(tok).ok_or_else(|| {
        CliError::validation(format!("--denominator must be 'valid' or 'all', found '{tok}'"))
    })
}

fn load_scan(path: &Path) -> Result<ScanDocument<f64>, CliError> {
    read_scan::<f64>(path).map_err(|e| from_format(e).in_file(path))
}

/// Reads a world document and remaps its labels onto the scan's stixel set.
fn load_world_for(path: &Path, scan: &Scan<f64>) -> Result<StixelWorld<f64>, CliError> {
    let doc = read_world::<f64>(path).map_err(|e| from_format(e).in_file(path))?;
    doc.resolve(&scan.class_sets.stixel).map_err(|m| CliError::validation(m).in_file(path))
}

/// Reads a labels document and remaps it onto the scan's stixel set.
fn load_labels_for(path: &Path, scan: &Scan<f64>) -> Result<PointLabels, CliError> {
    let doc = stixel_core::formats::read_labels(path).map_err(|e| from_format(e).in_file(path))?;
    doc.resolve(&scan.class_sets.stixel).map_err(|m| CliError::validation(m).in_file(path))
}

/// Installs the scan's semantic projection maps and validates the result.
fn finish_params(
    mut params: ModelParams<f64>,
    doc: &ScanDocument<f64>,
) -> Result<ModelParams<f64>, CliError> {
    params.lidar_class_map = doc.map_lidar.clone();
    params.cam_class_map = doc.map_cam.clone();
    params.validate_for(&doc.scan.class_sets).map_err(CliError::validation)?;
    Ok(params)
}

fn write_or_print(text: String, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::io(e).in_file(path))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Points a parameter-file key at its field so sweeps can set it by name.
fn param_slot<'p>(params: &'p mut ModelParams<f64>, name: &str) -> Option<&'p mut f64> {
    Some(match name {
        "w_geo" => &mut params.w_geo,
        "w_sem_lidar" => &mut params.w_sem_lidar,
        "w_sem_cam" => &mut params.w_sem_cam,
        "mc_cost" => &mut params.mc_cost,
        "sigma_range" => &mut params.sigma_range,
        "sigma_height" => &mut params.sigma_height,
        "outlier_rate" => &mut params.outlier_rate,
        "outlier_range_max" => &mut params.outlier_range_max,
        "grad_steep" => &mut params.grad_steep,
        "grad_shift" => &mut params.grad_shift,
        "sens_scale" => &mut params.sens_scale,
        "sens_shift" => &mut params.sens_shift,
        "sensor_height" => &mut params.sensor_height,
        _ => return None,
    })
}

// ---------------------------------------------------------------------------
// Subcommands.

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => read_scene::<f64>(path).map_err(|e| from_format(e).in_file(path))?,
        None => stixel_core::synthetic::SceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scene = generate(&spec).map_err(CliError::validation)?;
    let names = scene.scan.class_sets.stixel.names().to_vec();
    write_scan(&args.out_scan, &scene.scan, &ClassMap::Identity, &ClassMap::Identity)
        .map_err(|e| from_format(e).in_file(&args.out_scan))?;
    if let Some(path) = &args.out_world {
        write_world(path, &scene.truth_world, &names)
            .map_err(|e| from_format(e).in_file(path))?;
    }
    if let Some(path) = &args.out_labels {
        write_labels(path, &scene.truth_labels, &names)
            .map_err(|e| from_format(e).in_file(path))?;
    }
    if let Some(path) = &args.emit_spec {
        write_scene(path, &spec).map_err(|e| from_format(e).in_file(path))?;
    }
    eprintln!(
        "generated {} columns x {} rows, {} obstacle boxes, seed {}",
        scene.scan.columns.len(),
        scene.scan.height(),
        spec.boxes.len(),
        spec.seed
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let doc = load_scan(&args.scan)?;
    let params = finish_params(args.params.build()?, &doc)?;
    let options = args.solver.options()?;
    let started = Instant::now();
    let solved = solve_scan(&doc.scan, &params, &options).map_err(from_solve)?;
    let elapsed = started.elapsed();
    let names = doc.scan.class_sets.stixel.names().to_vec();
    write_world(&args.out, &solved.world, &names)
        .map_err(|e| from_format(e).in_file(&args.out))?;
    let total: f64 = solved.energies.iter().sum();
    println!(
        "solved {} columns: energy {total:.6}, {} stixels, {:.3} ms",
        solved.world.columns.len(),
        solved.world.stixel_count(),
        1e3 * elapsed.as_secs_f64()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let denominator = parse_denominator(&args.denominator)?;
    let doc = load_scan(&args.scan)?;
    let params = finish_params(args.params.build()?, &doc)?;
    let world = load_world_for(&args.world, &doc.scan)?;
    let reference = load_labels_for(&args.labels, &doc.scan)?;
    if !(args.threshold.is_finite() && args.threshold >= 0.0) {
        return Err(CliError::validation("--threshold must be finite and non-negative"));
    }
    let report = evaluate(
        &doc.scan,
        &world,
        &reference,
        args.threshold,
        params.sensor_height,
        denominator,
    )
    .map_err(CliError::validation)?;
    let eval_doc = EvalDocument {
        params_hash: params_hash(&params),
        threshold: args.threshold,
        denominator,
        report,
    };
    write_or_print(eval_to_string(&eval_doc), args.out.as_ref())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let denominator = parse_denominator(&args.denominator)?;
    if args.steps == 0 {
        return Err(CliError::validation("--steps must be at least 1"));
    }
    if !(args.min.is_finite() && args.max.is_finite()) {
        return Err(CliError::validation("--min and --max must be finite"));
    }
    if !(args.threshold.is_finite() && args.threshold >= 0.0) {
        return Err(CliError::validation("--threshold must be finite and non-negative"));
    }
    let doc = load_scan(&args.scan)?;
    let base = finish_params(args.params.build()?, &doc)?;
    let reference = load_labels_for(&args.labels, &doc.scan)?;
    let options = args.solver.options()?;
    if param_slot(&mut base.clone(), &args.parameter).is_none() {
        return Err(CliError::validation(format!(
            "unknown parameter '{}' (use a stixel-params key such as w_sem_lidar)",
            args.parameter
        )));
    }
    let mut rows = Vec::with_capacity(args.steps);
    for i in 0..args.steps {
        let value = if args.steps == 1 {
            args.min
        } else {
            args.min + (args.max - args.min) * i as f64 / (args.steps - 1) as f64
        };
        let mut params = base.clone();
        *param_slot(&mut params, &args.parameter).expect("key checked above") = value;
        params.validate_for(&doc.scan.class_sets).map_err(|e| {
            CliError::validation(format!("{} = {value}: {e}", args.parameter))
        })?;
        let solved = solve_scan(&doc.scan, &params, &options).map_err(from_solve)?;
        let report = evaluate(
            &doc.scan,
            &solved.world,
            &reference,
            args.threshold,
            params.sensor_height,
            denominator,
        )
        .map_err(CliError::validation)?;
        rows.push(SweepRow {
            value,
            outlier_rate: report.outlier_rate,
            mean_iou: report.mean_iou,
            compression_rate: report.compression_rate,
        });
    }
    let sweep_doc = SweepDocument {
        parameter: args.parameter.clone(),
        params_hash: params_hash(&base),
        rows,
    };
    match args.out {
        Some(ref path) => {
            write_sweep(path, &sweep_doc).map_err(|e| from_format(e).in_file(path))
        }
        None => {
            print!("{}", sweep_to_string(&sweep_doc));
            Ok(())
        }
    }
}

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    let doc = read_world::<f64>(&args.world).map_err(|e| from_format(e).in_file(&args.world))?;
    let palette = Palette::for_labels(&doc.labels);
    write_ppm(&args.out, &doc.world, &palette, args.scale)
        .map_err(|e| from_format(e).in_file(&args.out))?;
    eprintln!(
        "rendered {} x {} cells at scale {} to {}",
        doc.world.columns.len(),
        doc.world.height,
        args.scale,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
