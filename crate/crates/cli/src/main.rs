use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polytube::geometry::classify_rationality;
use polytube::io::{self, IoError};
use polytube::scenario;
use polytube::tol::{Tolerance, TOL_ENV_VAR};

/// Billiard dynamics in convex polytopes.
#[derive(Debug, Parser)]
#[command(name = "polytube", version, about)]
struct Cli {
    /// Geometry tolerance; overrides the scenario value.
    #[arg(long, global = true, env = TOL_ENV_VAR)]
    tol: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for artifacts; overrides the scenario output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write its artifacts.
    Run { scenario: PathBuf },
    /// Parse a polytope file and print its derived data.
    Validate { polytope: PathBuf },
}

fn validate(path: &PathBuf, tol: Option<f64>) -> Result<String, (u8, String)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| (3, format!("{}: {e}", path.display())))?;
    let t = tol.map(Tolerance::with_geometry).unwrap_or_default();
    let p = io::parse_polytope(&text, &t).map_err(|e| match e {
        IoError::Parse(_) | IoError::Geometry(_) | IoError::Json(_) => (2, e.to_string()),
        IoError::Csv(_) => (1, e.to_string()),
    })?;
    let rationality = match classify_rationality(&p, 20_000).order() {
        Some(o) => format!("rational (group order {o})"),
        None => "irrational suspected".to_string(),
    };
    Ok(format!(
        "{}: dim {}, {} facets, {} vertices, {} skeleton faces, volume {}, inradius {}, {rationality}",
        if p.name.is_empty() { "polytope" } else { &p.name },
        p.dim,
        p.num_facets(),
        p.vertices.len(),
        p.skeleton.len(),
        p.volume(),
        p.inradius()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match &cli.command {
        Command::Run { scenario: path } => {
            match scenario::run_file(path, cli.out_dir.clone(), cli.tol) {
                Ok(r) => {
                    println!("ok: {}", r.summary);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Validate { polytope } => match validate(polytope, cli.tol) {
            Ok(s) => {
                println!("ok: {s}");
                ExitCode::SUCCESS
            }
            Err((code, msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(code)
            }
        },
    }
}
