//! Command line front end for the ankle actuator design toolkit.
//!
//! Every subcommand reads an optional JSON config, applies flag overrides,
//! runs the library, and writes its artifacts plus a `manifest.json` into
//! `--out-dir`. Outputs carry no timestamps, so a rerun with the same
//! config and tool version is byte-identical.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 runtime
//! failure (I/O, solver breakdown). Errors are reported as a single JSON
//! object on stdout.

mod artifacts;
mod commands;
mod svg;

use artifacts::CliError;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "anklekit",
    version,
    about = "Design calculations for a compact electro-hydraulic ankle actuator",
    propagate_version = true
)]
struct Cli {
    /// Directory that receives all output files.
    #[arg(long, global = true, default_value = "anklekit_out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one gait cycle through the hydraulic circuit model.
    Simulate(commands::SimulateArgs),
    /// Build internal channel routes and estimate their pressure losses.
    Route(commands::RouteArgs),
    /// Size a gyroid sheet for a target density and mesh the demo block.
    Lattice(commands::LatticeArgs),
    /// Distribute material in a 2D domain to minimize compliance.
    Topo(commands::TopoArgs),
    /// Emit or normalize ankle gait profiles.
    Gait(commands::GaitArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Simulate(args) => commands::simulate(args, &cli.out_dir),
        Cmd::Route(args) => commands::route(args, &cli.out_dir),
        Cmd::Lattice(args) => commands::lattice(args, &cli.out_dir),
        Cmd::Topo(args) => commands::topo(args, &cli.out_dir),
        Cmd::Gait(args) => commands::gait(args, &cli.out_dir),
    };
    match result {
        Ok(paths) => {
            for path in &paths {
                println!("wrote {}", path.display());
            }
        }
        Err(err) => fail(err),
    }
}

/// Print the machine-readable error object and exit with its code.
fn fail(err: CliError) -> ! {
    let body = serde_json::json!({
        "error": err.message,
        "exit_code": err.exit_code,
        "path": err.path,
    });
    println!("{body}");
    std::process::exit(err.exit_code)
}
