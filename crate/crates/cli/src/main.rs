use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ctsdr_core::forces::{analyze_forces, read_force_csv, write_force_csv, DEFAULT_SPAN};
use ctsdr_core::mask_io::read_mask;
use ctsdr_core::mesh::{export_cavity_mesh, MeshFormat};
use ctsdr_core::planning::{check_spiral_pitch, integrate_plan};
use ctsdr_core::scenario::{parse_scenario, run_scenario, PlanSpec, RunOptions, Scenario};
use ctsdr_core::{Config, Error, VoxelGrid};

const WORKERS_ENV: &str = "CTSDR_WORKERS";

#[derive(Parser)]
#[command(name = "ctsdr", version, about = "Concentric-tube steerable drill simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory, cavity mesh, mask, report and log.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's [output] dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a scenario without running it.
    Check { scenario: PathBuf },
    /// Smooth a load-cell CSV and summarise the resultant force.
    Forces {
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPAN)]
        span: usize,
        /// Directory for the smoothed CSV and summary; defaults to the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-export a cavity mesh from a stored removal mask.
    Mesh {
        mask: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "ply")]
        format: MeshFormat,
    },
}

/// Failure class, mapped onto the exit status.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => run(&scenario, out),
        Command::Check { scenario } => check(&scenario),
        Command::Forces { csv, span, out } => forces(&csv, span, out),
        Command::Mesh { mask, output, format } => mesh(&mask, output, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error[validation]: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error[runtime]: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Validation)?;
    parse_scenario(&text).map_err(|e| with_path(e, path))
}

fn workers_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Validation(anyhow!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        _ => Ok(None),
    }
}

fn run(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let sc = load_scenario(path)?;
    let opts = RunOptions { out_dir: out, workers: workers_from_env()? };
    let result = run_scenario(&sc, &opts)?;
    let r = &result.report;
    println!("scenario {} ({})", r.scenario, r.cavity.plan_label);
    println!("  removed volume      {:.1} mm^3 ({} voxels)", r.cavity.removed_volume_mm3, r.removed_count);
    println!("  entry diameter      {:.2} mm", r.cavity.entry_diameter_mm);
    println!("  max lateral reach   {:.2} mm", r.cavity.max_lateral_reach_mm);
    println!("  tip angle change    {:.2} deg", r.cavity.tip_angle_change_deg);
    println!("  fitted radius       {:.3} mm ({:.3}% off)", r.cavity.fitted_radius_mm, r.cavity.radius_deviation_pct);
    for s in &r.cavity.slice_diameters {
        println!("  slice at {:>6.2} mm  {:.2} mm", s.depth_mm, s.diameter_mm);
    }
    if let Some(p) = &r.spiral_pitch {
        println!("  spiral pitch        {:.2} mm (within cutter length: {})", p.pitch_mm, p.satisfied);
    }
    for note in &r.notes {
        println!("  note: {note}");
    }
    println!("wrote {}", result.out_dir.display());
    Ok(())
}

fn check(path: &Path) -> CmdResult {
    let sc = load_scenario(path)?;
    let plan = sc.build_plan()?;
    let timeline = integrate_plan(&plan, sc.sim.dt_s, Config::default())?;
    let dims = VoxelGrid::dims_for(&sc.block, sc.sim.voxel_mm)?;
    println!("scenario {} is valid", sc.name);
    println!("  plan {} with {} segments over {:.3} s", plan.label, plan.segments.len(), plan.duration_s());
    println!("  {} samples at dt {} s; final s = {:.3} mm, phi = {:.3} deg", timeline.len(), sc.sim.dt_s, timeline.last().s_mm, timeline.last().phi_deg);
    println!("  grid {} x {} x {} at {} mm", dims[0], dims[1], dims[2], sc.sim.voxel_mm);
    if timeline.clamped() {
        println!("  warning: insertion is clamped to the guide length");
    }
    if let PlanSpec::Spiral { insertion_speed_mm_per_s, rotation_speed_deg_per_s, .. } = sc.plan {
        let p = check_spiral_pitch(insertion_speed_mm_per_s, rotation_speed_deg_per_s, &sc.tool)?;
        println!("  spiral pitch {:.2} mm (within cutter length: {})", p.pitch_mm, p.satisfied);
    }
    Ok(())
}

fn forces(path: &Path, span: usize, out: Option<PathBuf>) -> CmdResult {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Validation)?;
    let series = read_force_csv(BufReader::new(file)).map_err(|e| with_path(e, path))?;
    let (smoothed, summary) = analyze_forces(&series, span)?;

    let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("forces");
    let runtime = |e: std::io::Error| Failure::Runtime(e.into());
    fs::create_dir_all(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir }).map_err(runtime)?;
    let csv_path = dir.join(format!("{stem}_smoothed.csv"));
    let json_path = dir.join(format!("{stem}_summary.json"));
    write_force_csv(&smoothed, BufWriter::new(File::create(&csv_path).map_err(runtime)?))?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(&json_path, json + "\n").map_err(runtime)?;
    println!("max force magnitude {:.4} N over {} samples", summary.max_magnitude_n, summary.samples);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn mesh(path: &Path, output: Option<PathBuf>, format: MeshFormat) -> CmdResult {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Validation)?;
    let grid = read_mask(BufReader::new(file)).map_err(|e| with_path(e, path))?;
    if grid.removed_count() == 0 {
        return Err(Error::EmptyCavity("mask has no removed voxels".into()).into());
    }
    let target = output.unwrap_or_else(|| path.with_extension(format.extension()));
    let file = File::create(&target).with_context(|| format!("creating {}", target.display())).map_err(Failure::Runtime)?;
    let mesh = export_cavity_mesh(&grid, format, BufWriter::new(file))?;
    println!("{} vertices, {} triangles -> {}", mesh.vertices.len(), mesh.triangles.len(), target.display());
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Failure {
    match Failure::from(e) {
        Failure::Validation(e) => Failure::Validation(e.context(path.display().to_string())),
        Failure::Runtime(e) => Failure::Runtime(e.context(path.display().to_string())),
    }
}
