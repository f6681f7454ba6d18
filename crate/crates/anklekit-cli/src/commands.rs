//! The five subcommands. Each resolves its configuration (JSON file plus
//! flag overrides), runs the corresponding library operations, and writes
//! its artifacts through a single [`Artifacts`] writer that seals the run
//! with a manifest.

use crate::artifacts::{config_err, config_hash, load_config, runtime_err, Artifacts, CliError};
use crate::svg::{line_plot, PlotSeries};
use anklekit_core::gait::{
    cylinder_load_from_ankle, gait_csv_string, load_gait_csv, net_work, resample,
    synthetic_profile, GaitProfile, SYNTHETIC_PROFILE_COMMENT,
};
use anklekit_core::hydraulics::{
    simulate_cycle, timeseries_csv_string, EnergyReport, FluidProps, HydraulicConfig,
    MIN_SIM_STEPS,
};
use anklekit_core::lattice::{
    demo_block, marching_cubes, sample_grid, solve_thickness_for_density, thicken_tpms,
    volume_fraction, MIN_WALL_M,
};
use anklekit_core::routing::{
    arc_fillet_route, bezier3_route, export_route, preset_parallel, preset_perpendicular,
    pressure_loss_estimate, route_channel, straight_route, Port, Route, DEFAULT_N_CTRL,
    DEFAULT_STIFFNESS_DIAMETERS,
};
use anklekit_core::topo::{
    export_density_png_csv, preset_bracket, preset_cantilever, run_topo, Axis, PointLoad,
    Restraint, TopoProblem,
};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file with the hydraulic configuration (defaults to the bundled
    /// component values).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the number of RK4 steps for the cycle.
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Gait profile CSV (t_frac,angle_rad,moment_Nm); defaults to the
    /// bundled synthetic walking profile.
    #[arg(long)]
    pub gait: Option<PathBuf>,
    /// Sample count of the synthetic profile when no CSV is given.
    #[arg(long, default_value_t = 200)]
    pub gait_samples: usize,
}

/// Energy report plus its derived closure figures, as written to JSON.
#[derive(Serialize)]
struct EnergySummary {
    energy_j: EnergyReport,
    closure_residual_j: f64,
    closure_residual_frac: f64,
    displacement_correlation: f64,
}

pub fn simulate(args: &SimulateArgs, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut config: HydraulicConfig = load_config(args.config.as_deref())?;
    if let Some(n) = args.n_steps {
        config.n_steps = n;
    }
    config.validate().map_err(config_err)?;
    if config.n_steps < MIN_SIM_STEPS {
        return Err(CliError::config(format!(
            "n_steps must be at least {MIN_SIM_STEPS} (got {})",
            config.n_steps
        )));
    }

    let profile = load_profile(args.gait.as_deref(), config.cadence_s, args.gait_samples)?;
    let load = cylinder_load_from_ankle(&profile, &config.linkage).map_err(config_err)?;
    let (series, report) =
        simulate_cycle(&config, &load, config.n_steps).map_err(runtime_err)?;

    let resolved = serde_json::json!({
        "hydraulics": config,
        "gait_csv": args.gait.as_ref().map(|p| p.display().to_string()),
        "gait_samples": args.gait_samples,
    });
    let hash = config_hash(&resolved)?;

    let mut artifacts = Artifacts::new(out_dir)?;
    artifacts.write("simulate_timeseries.csv", timeseries_csv_string(&series))?;

    let displacement = series.displacement();
    let commanded = series.commanded();
    let correlation = anklekit_core::hydraulics::pearson(&displacement, &commanded);
    artifacts.write_json(
        "energy_report.json",
        &EnergySummary {
            closure_residual_j: report.closure_residual_j(),
            closure_residual_frac: report.closure_residual_frac(),
            displacement_correlation: correlation,
            energy_j: report,
        },
    )?;

    // piston position against the commanded trajectory, millimetres
    let stride = (series.records.len() / 1600).max(1);
    let sampled = |values: &[f64]| -> Vec<(f64, f64)> {
        series
            .records
            .iter()
            .zip(values)
            .step_by(stride)
            .map(|(r, &y)| (r.t_s, y * 1e3))
            .collect()
    };
    let sim_points = sampled(&displacement);
    let cmd_points = sampled(&commanded);
    let svg = line_plot(
        "cylinder displacement over one gait cycle",
        "time [s]",
        "piston position [mm]",
        &[
            PlotSeries { label: "simulated", color: "#1a6fb4", points: &sim_points },
            PlotSeries { label: "commanded", color: "#c0392b", points: &cmd_points },
        ],
    );
    artifacts.write("displacement.svg", svg)?;
    artifacts.finish("simulate", &hash)
}

fn load_profile(
    path: Option<&Path>,
    cadence_s: f64,
    synthetic_samples: usize,
) -> Result<GaitProfile, CliError> {
    match path {
        Some(p) => load_gait_csv(p, cadence_s).map_err(|e| config_err(e).with_path(p)),
        None => synthetic_profile(cadence_s, synthetic_samples).map_err(config_err),
    }
}

// ---------------------------------------------------------------------------
// route

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PortPreset {
    /// Intersecting perpendicular port axes.
    Perpendicular,
    /// Offset parallel port axes.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Bspline,
    Straight,
    Fillet,
    Bezier3,
    All,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    /// JSON file with ports, flow and surrogate settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace the configured ports with a bundled layout.
    #[arg(long, value_enum)]
    pub preset: Option<PortPreset>,
    /// Which route construction(s) to emit.
    #[arg(long, value_enum, default_value_t = KindArg::All)]
    pub kind: KindArg,
    /// Override the design flow, in litres per minute (converted to SI at
    /// this boundary only).
    #[arg(long)]
    pub flow_lpm: Option<f64>,
    /// Override the fillet radius, millimetres.
    #[arg(long)]
    pub fillet_radius_mm: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteConfig {
    pub start: Port,
    pub end: Port,
    /// Design flow through the channel.
    pub flow_m3_s: f64,
    /// Corner fillet radius for the filleted construction.
    pub fillet_radius_m: f64,
    /// Control-point count of the B-spline construction.
    pub n_ctrl: usize,
    /// End-handle length in bore diameters (B-spline and Bezier).
    pub stiffness_diameters: f64,
    pub fluid: FluidProps,
}

impl Default for RouteConfig {
    fn default() -> Self {
        let (start, end) = preset_perpendicular();
        let d = start.diameter_m;
        Self {
            start,
            end,
            // 2.5 m/s mean velocity through the 3.2 mm bore
            flow_m3_s: 2.5 * std::f64::consts::FRAC_PI_4 * d * d,
            fillet_radius_m: 8.0e-3,
            n_ctrl: DEFAULT_N_CTRL,
            stiffness_diameters: DEFAULT_STIFFNESS_DIAMETERS,
            fluid: FluidProps::default(),
        }
    }
}

#[derive(Serialize)]
struct LossRow {
    kind: String,
    arc_length_m: f64,
    reynolds: f64,
    friction_loss_pa: f64,
    bend_loss_pa: f64,
    total_pa: f64,
    min_bend_radius_m: Option<f64>,
    corner_turns_deg: Vec<f64>,
}

pub fn route(args: &RouteArgs, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut config: RouteConfig = load_config(args.config.as_deref())?;
    if let Some(preset) = args.preset {
        let (start, end) = match preset {
            PortPreset::Perpendicular => preset_perpendicular(),
            PortPreset::Parallel => preset_parallel(),
        };
        config.start = start;
        config.end = end;
    }
    if let Some(lpm) = args.flow_lpm {
        config.flow_m3_s = lpm / 60_000.0;
    }
    if let Some(mm) = args.fillet_radius_mm {
        config.fillet_radius_m = mm * 1e-3;
    }
    config.start.validate().map_err(config_err)?;
    config.end.validate().map_err(config_err)?;
    if !(config.flow_m3_s > 0.0 && config.flow_m3_s.is_finite()) {
        return Err(CliError::config(format!(
            "flow must be positive (got {} m^3/s)",
            config.flow_m3_s
        )));
    }
    config.fluid.validate().map_err(config_err)?;

    let kinds: &[KindArg] = match args.kind {
        KindArg::All => &[KindArg::Bspline, KindArg::Straight, KindArg::Fillet, KindArg::Bezier3],
        ref single => std::slice::from_ref(single),
    };

    let hash = config_hash(&serde_json::json!({
        "route": config,
        "kinds": kinds.iter().map(|k| kind_tag(*k)).collect::<Vec<_>>(),
    }))?;
    let mut artifacts = Artifacts::new(out_dir)?;

    let stiffness = config.stiffness_diameters
        * config.start.diameter_m.min(config.end.diameter_m);
    let mut rows = Vec::new();
    for &kind in kinds {
        let route = build_route(&config, kind, stiffness).map_err(runtime_err)?;
        let losses =
            pressure_loss_estimate(&route, config.flow_m3_s, &config.fluid).map_err(runtime_err)?;
        rows.push(LossRow {
            kind: kind_tag(kind).to_string(),
            arc_length_m: losses.arc_length_m,
            reynolds: losses.reynolds,
            friction_loss_pa: losses.friction_loss_pa,
            bend_loss_pa: losses.bend_loss_pa,
            total_pa: losses.total_pa,
            min_bend_radius_m: losses.min_bend_radius_m,
            corner_turns_deg: route
                .corner_turns()
                .iter()
                .map(|t| t.to_degrees())
                .collect(),
        });
        let csv_name = format!("route_{}.csv", kind_tag(kind));
        let stl_name = format!("route_{}.stl", kind_tag(kind));
        export_route(
            &route,
            &artifacts.dir().join(&csv_name),
            &artifacts.dir().join(&stl_name),
        )
        .map_err(runtime_err)?;
        artifacts.register(&csv_name)?;
        artifacts.register(&stl_name)?;
    }
    artifacts.write_json("route_losses.json", &rows)?;
    artifacts.finish("route", &hash)
}

fn kind_tag(kind: KindArg) -> &'static str {
    match kind {
        KindArg::Bspline => "bspline",
        KindArg::Straight => "straight",
        KindArg::Fillet => "fillet",
        KindArg::Bezier3 => "bezier3",
        KindArg::All => "all",
    }
}

fn build_route(
    config: &RouteConfig,
    kind: KindArg,
    stiffness_m: f64,
) -> Result<Route, anklekit_core::routing::RoutingError> {
    match kind {
        KindArg::Bspline => {
            route_channel(&config.start, &config.end, config.n_ctrl, stiffness_m)
        }
        KindArg::Straight => straight_route(&config.start, &config.end),
        KindArg::Fillet => arc_fillet_route(&config.start, &config.end, config.fillet_radius_m),
        KindArg::Bezier3 => bezier3_route(&config.start, &config.end, stiffness_m),
        KindArg::All => unreachable!("expanded by the caller"),
    }
}

// ---------------------------------------------------------------------------
// lattice

#[derive(Debug, Args)]
pub struct LatticeArgs {
    /// JSON file with the lattice run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the target volume fraction for the thickness solve.
    #[arg(long)]
    pub target_density: Option<f64>,
    /// Override the sampling grid, comma-separated `nx,ny,nz`.
    #[arg(long)]
    pub dims: Option<String>,
    /// Skip the solve and evaluate this sheet thickness directly,
    /// millimetres.
    #[arg(long)]
    pub wall_mm: Option<f64>,
    /// Skip surface extraction and the STL output.
    #[arg(long)]
    pub no_mesh: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Target volume fraction of the lattice sheet.
    pub target_density: f64,
    /// Sampling grid for both the solve and the surface extraction.
    pub dims: [usize; 3],
    /// Evaluate a fixed wall thickness instead of solving, metres.
    pub wall_m: Option<f64>,
    /// Extract and export the block surface.
    pub mesh: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { target_density: 0.512, dims: [64, 52, 24], wall_m: None, mesh: true }
    }
}

#[derive(Serialize)]
struct MeshSummary {
    triangles: usize,
    vertices: usize,
    watertight: bool,
    oriented: bool,
}

#[derive(Serialize)]
struct LatticeReport {
    wall_m: f64,
    wall_floor_m: f64,
    sheet_fraction: f64,
    target_fraction: Option<f64>,
    dims: [usize; 3],
    solve_iterations: Option<usize>,
    mesh: Option<MeshSummary>,
}

pub fn lattice(args: &LatticeArgs, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut config: LatticeConfig = load_config(args.config.as_deref())?;
    if let Some(t) = args.target_density {
        config.target_density = t;
    }
    if let Some(dims) = &args.dims {
        config.dims = parse_dims(dims)?;
    }
    if let Some(mm) = args.wall_mm {
        config.wall_m = Some(mm * 1e-3);
    }
    if args.no_mesh {
        config.mesh = false;
    }

    let hash = config_hash(&config)?;
    let mut artifacts = Artifacts::new(out_dir)?;
    let demo = demo_block();
    let dims = (config.dims[0], config.dims[1], config.dims[2]);

    let (wall_m, sheet_fraction, target, iterations) = match config.wall_m {
        Some(wall) => {
            let sheet = thicken_tpms(&demo.field, wall).map_err(config_err)?;
            let grid = sample_grid(&sheet, &demo.bbox, dims).map_err(config_err)?;
            (wall, volume_fraction(&grid, 0.0), None, None)
        }
        None => {
            // solve failures are judgements about the requested target
            // (out of range, below the wall floor, not reachable by this
            // field), so they count as validation errors
            let solve =
                solve_thickness_for_density(&demo.field, config.target_density, &demo.bbox, dims)
                    .map_err(config_err)?;
            (
                solve.wall_m,
                solve.achieved_fraction,
                Some(solve.target_fraction),
                Some(solve.iterations),
            )
        }
    };

    let mesh = if config.mesh {
        let solid = demo.solid(wall_m).map_err(runtime_err)?;
        let grid = sample_grid(&solid, &demo.bbox, dims).map_err(runtime_err)?;
        let mesh = marching_cubes(&grid, 0.0);
        let census = mesh.edge_census();
        let summary = MeshSummary {
            triangles: mesh.triangles.len(),
            vertices: mesh.vertices.len(),
            watertight: census.watertight,
            oriented: census.oriented,
        };
        artifacts.write_via("lattice_block.stl", |path| {
            mesh.write_stl(path).map_err(runtime_err)
        })?;
        Some(summary)
    } else {
        None
    };

    artifacts.write_json(
        "lattice_report.json",
        &LatticeReport {
            wall_m,
            wall_floor_m: MIN_WALL_M,
            sheet_fraction,
            target_fraction: target,
            dims: config.dims,
            solve_iterations: iterations,
            mesh,
        },
    )?;
    artifacts.finish("lattice", &hash)
}

fn parse_dims(text: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<_> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::config(format!(
            "--dims expects three comma-separated counts (got {text:?})"
        )));
    }
    let mut dims = [0usize; 3];
    for (slot, part) in dims.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| {
            CliError::config(format!("--dims expects positive integers (got {text:?})"))
        })?;
    }
    Ok(dims)
}

// ---------------------------------------------------------------------------
// topo

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopoPreset {
    Cantilever,
    Bracket,
}

#[derive(Debug, Args)]
pub struct TopoArgs {
    /// JSON file with a full problem description and run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundled problem to start from.
    #[arg(long, value_enum)]
    pub preset: Option<TopoPreset>,
    /// Override the element count across (cantilever preset only).
    #[arg(long)]
    pub nelx: Option<usize>,
    /// Override the element count down (cantilever preset only).
    #[arg(long)]
    pub nely: Option<usize>,
    /// Override the volume fraction.
    #[arg(long)]
    pub volfrac: Option<f64>,
    /// Override the penalization exponent.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Override the filter radius, elements.
    #[arg(long)]
    pub rmin: Option<f64>,
    /// Override the iteration budget.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Override the convergence tolerance on the density change.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopoConfig {
    /// Explicit problem; takes precedence over `preset`.
    pub problem: Option<TopoProblem>,
    /// `"cantilever"` or `"bracket"`; ignored when `problem` is set.
    pub preset: Option<String>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

fn cantilever_sized(nelx: usize, nely: usize) -> TopoProblem {
    let mut problem = preset_cantilever();
    problem.nelx = nelx;
    problem.nely = nely;
    problem.fixed = (0..=nely)
        .flat_map(|iy| {
            [
                Restraint { node: (0, iy), axis: Axis::X },
                Restraint { node: (0, iy), axis: Axis::Y },
            ]
        })
        .collect();
    problem.loads = vec![PointLoad { node: (nelx, nely / 2), axis: Axis::Y, newtons: 1.0 }];
    problem
}

pub fn topo(args: &TopoArgs, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let config: TopoConfig = load_config(args.config.as_deref())?;

    // flags beat the file; an explicit problem beats the preset name
    let (mut problem, resizable) = if let Some(preset) = args.preset {
        match preset {
            TopoPreset::Cantilever => (preset_cantilever(), true),
            TopoPreset::Bracket => (preset_bracket(), false),
        }
    } else if let Some(problem) = config.problem {
        (problem, false)
    } else {
        match config.preset.as_deref() {
            None | Some("cantilever") => (preset_cantilever(), true),
            Some("bracket") => (preset_bracket(), false),
            Some(other) => {
                return Err(CliError::config(format!(
                    "unknown preset {other:?} (expected \"cantilever\" or \"bracket\")"
                )))
            }
        }
    };

    if args.nelx.is_some() || args.nely.is_some() {
        if !resizable {
            return Err(CliError::config(
                "--nelx/--nely only apply to the cantilever preset; bracket \
                 and file-defined problems have geometry tied to their grid",
            ));
        }
        problem = cantilever_sized(
            args.nelx.unwrap_or(problem.nelx),
            args.nely.unwrap_or(problem.nely),
        );
    }
    if let Some(v) = args.volfrac {
        problem.volfrac = v;
    }
    if let Some(p) = args.penalty {
        problem.penalty = p;
    }
    if let Some(r) = args.rmin {
        problem.rmin = r;
    }
    let max_iters = args.max_iters.or(config.max_iters).unwrap_or(200);
    let tol = args.tol.or(config.tol).unwrap_or(0.01);
    if max_iters == 0 {
        return Err(CliError::config("max_iters must be at least 1"));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::config(format!("tol must be positive (got {tol})")));
    }
    problem.validate().map_err(config_err)?;

    let hash = config_hash(&serde_json::json!({
        "problem": problem,
        "max_iters": max_iters,
        "tol": tol,
    }))?;
    let mut artifacts = Artifacts::new(out_dir)?;

    let field = run_topo(&problem, max_iters, tol).map_err(runtime_err)?;
    export_density_png_csv(&field, &artifacts.dir().join("topo_density"))
        .map_err(runtime_err)?;
    artifacts.register("topo_density.csv")?;
    artifacts.register("topo_density.png")?;
    artifacts.write("topo_history.csv", field.history_csv_string())?;
    artifacts.finish("topo", &hash)
}

// ---------------------------------------------------------------------------
// gait

#[derive(Debug, Args)]
pub struct GaitArgs {
    /// Write the bundled synthetic walking profile.
    #[arg(long)]
    pub emit_default: bool,
    /// Normalize and summarize this profile CSV instead.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Cycle duration, seconds.
    #[arg(long)]
    pub cadence_s: Option<f64>,
    /// Resample the profile to this many points.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Serialize)]
struct GaitSummary {
    samples: usize,
    cadence_s: f64,
    net_work_j: f64,
    peak_power_w: f64,
    angle_range_rad: [f64; 2],
    moment_range_nm: [f64; 2],
}

pub fn gait(args: &GaitArgs, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cadence = args.cadence_s.unwrap_or(1.1);
    let hash = config_hash(&serde_json::json!({
        "emit_default": args.emit_default,
        "from": args.from.as_ref().map(|p| p.display().to_string()),
        "cadence_s": cadence,
        "samples": args.samples,
    }))?;

    let (profile, comment) = if args.emit_default {
        let n = args.samples.unwrap_or(121);
        let profile = synthetic_profile(cadence, n).map_err(config_err)?;
        (profile, Some(SYNTHETIC_PROFILE_COMMENT))
    } else if let Some(path) = &args.from {
        let mut profile =
            load_gait_csv(path, cadence).map_err(|e| config_err(e).with_path(path))?;
        if let Some(n) = args.samples {
            profile = resample(&profile, n).map_err(config_err)?;
        }
        (profile, None)
    } else {
        return Err(CliError::config(
            "gait needs --emit-default or --from <profile.csv>",
        ));
    };

    let mut artifacts = Artifacts::new(out_dir)?;
    artifacts.write("gait_profile.csv", gait_csv_string(&profile, comment))?;

    let powers = anklekit_core::gait::ankle_power(&profile);
    let peak = powers.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let mut angle = [f64::INFINITY, f64::NEG_INFINITY];
    let mut moment = [f64::INFINITY, f64::NEG_INFINITY];
    for s in profile.samples() {
        angle[0] = angle[0].min(s.angle_rad);
        angle[1] = angle[1].max(s.angle_rad);
        moment[0] = moment[0].min(s.moment_nm);
        moment[1] = moment[1].max(s.moment_nm);
    }
    artifacts.write_json(
        "gait_summary.json",
        &GaitSummary {
            samples: profile.samples().len(),
            cadence_s: profile.cadence_s(),
            net_work_j: net_work(&profile),
            peak_power_w: peak,
            angle_range_rad: angle,
            moment_range_nm: moment,
        },
    )?;
    artifacts.finish("gait", &hash)
}
