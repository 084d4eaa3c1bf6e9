use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use semrom::geometry::ParameterPoint;
use semrom::pipeline::{cmd_offline, cmd_online, cmd_report, OnlineTarget, RunConfig};
use semrom::sem::Forcing;
use semrom::steady::{ModelSetup, OseenConfig};
use semrom::store::Array;

#[derive(Parser)]
#[command(name = "semrom", version, about = "Spectral-element channel flow solver with a reduced-order model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline stages (snapshots, basis, interpolation, projection).
    Offline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the reduced model and write reports into <store>/reports.
    Online {
        #[arg(long)]
        store: PathBuf,
        /// Uniform grid over the parameter box, e.g. 24x27 (viscosity x curvature).
        #[arg(long, conflicts_with = "point")]
        grid: Option<String>,
        /// Single parameter point.
        #[arg(long, num_args = 2, value_names = ["NU", "C"])]
        point: Option<Vec<f64>>,
        /// Use only the leading N basis vectors.
        #[arg(long)]
        n_modes: Option<usize>,
        /// Refuse to run unless the store was built from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print error counts, speedup and model sizes of the last online run.
    Report {
        #[arg(long)]
        store: PathBuf,
    },
    /// Export the mesh at one curvature (SVG wireframe plus text listing).
    Mesh {
        #[arg(long)]
        curvature: f64,
        #[arg(long)]
        mesh_out: PathBuf,
        #[arg(long, default_value_t = 8)]
        order: usize,
    },
    /// Solve the full-order problem at one parameter point.
    FomSolve {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        curvature: f64,
        #[arg(long)]
        no_perturb: bool,
        #[arg(long, default_value_t = 8)]
        order: usize,
        /// Write the converged coefficients as a binary payload.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the converged Oseen operator in Matrix Market format.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(['x', 'X']).context("grid must look like RxC, e.g. 24x27")?;
    let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
    if a == 0 || b == 0 {
        bail!("grid dimensions must be positive");
    }
    Ok((a, b))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Offline { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let s = cmd_offline(&cfg)?;
            println!("store: {}", s.store.display());
            println!("snapshots: {} ({} converged)", s.snapshots, s.converged);
            println!("N = {}", s.n);
            for (role, q) in &s.q {
                println!("Q[{}] = {q}", role.name());
            }
            if s.computed.is_empty() {
                println!("all stages were already complete");
            } else {
                println!("computed stages: {}", s.computed.join(", "));
            }
        }
        Command::Online { store, grid, point, n_modes, config } => {
            let target = match (grid, point) {
                (Some(g), _) => {
                    let (a, b) = parse_grid(&g)?;
                    OnlineTarget::Grid(a, b)
                }
                (None, Some(p)) => OnlineTarget::Point(p[0], p[1]),
                (None, None) => OnlineTarget::Training,
            };
            let expected = config.as_deref().map(RunConfig::from_file).transpose()?;
            let s = cmd_online(&store, target, n_modes, expected.as_ref())?;
            if let OnlineTarget::Point(..) = target {
                let r = &s.rows[0];
                println!("v(2, 1.5) = {} (converged: {}, {} iterations)", r.v_obs, r.converged, r.iterations);
            }
            println!(
                "N = {}: {}/{} training points within 0.01, {} within 0.1",
                s.n,
                s.below_001,
                s.errors.len(),
                s.below_01
            );
            println!("median iteration: full {:.4e} s, reduced {:.4e} s ({:.1}x)", s.fom_median_iteration_s, s.rom_median_iteration_s, s.speedup());
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Report { store } => {
            println!("{}", cmd_report(&store)?);
        }
        Command::Mesh { curvature, mesh_out, order } => {
            let setup = ModelSetup { order, ..Default::default() };
            let mesh = setup.mesh(curvature)?;
            let (svg_path, txt_path) = if mesh_out.extension().is_some_and(|e| e == "svg") {
                (mesh_out.clone(), mesh_out.with_extension("txt"))
            } else {
                (mesh_out.with_extension("svg"), mesh_out.clone())
            };
            std::fs::write(&svg_path, mesh.to_svg())?;
            std::fs::write(&txt_path, mesh.to_text())?;
            let (e, det) = mesh.min_det_j(order + 2);
            println!("{} elements, min det J = {det:.4e} (element {e})", mesh.elements.len());
            println!("wrote {} and {}", svg_path.display(), txt_path.display());
        }
        Command::FomSolve { nu, curvature, no_perturb, order, out, dump_matrix } => {
            let setup = ModelSetup { order, ..Default::default() };
            let mut cfg = OseenConfig::default();
            if no_perturb {
                cfg = cfg.without_perturbation();
            }
            let (problem, result) = setup.solve_steady(ParameterPoint::new(nu, curvature)?, &cfg, None)?;
            let v = problem.observable(&result.state);
            println!(
                "nu = {nu}, c = {curvature}: v(2, 1.5) = {v:+.8} converged = {} iterations = {} (total {})",
                result.converged, result.iterations, result.total_iterations
            );
            if let Some(path) = out {
                std::fs::write(&path, Array::vector(&result.state.coefficients).to_bytes())?;
                println!("wrote {}", path.display());
            }
            if let Some(path) = dump_matrix {
                let disc = &problem.disc;
                let blocks = disc.assemble_blocks(nu, Some(&result.state.coefficients), &Forcing::default());
                let sys = disc.gather_globalize(&blocks);
                let mut w = BufWriter::new(File::create(&path)?);
                sys.write_matrix_market(&disc.structure, &mut w)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
