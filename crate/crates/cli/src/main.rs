use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use abelian_mops::par;
use abelian_mops_cli::report::validate_tolerance;
use abelian_mops_cli::{run, Emit, RunConfig, Task, EXIT_CONFIG};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "abelian-mops",
    version,
    about = "Matrix biorthogonal polynomials from branched covers"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true)]
    emit: Option<Emit>,
    /// Loosen one check's tolerance, `name=value`; may be repeated.
    #[arg(long = "tol", value_parser = parse_tol, global = true)]
    tol: Vec<(String, f64)>,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Top,
}

#[derive(Subcommand)]
enum Top {
    #[command(flatten)]
    Task(Task),
    /// Run a task described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = value.parse().map_err(|_| format!("bad tolerance {value:?}"))?;
    validate_tolerance(name, v)?;
    Ok((name.to_string(), v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::init_threads_from_env();
    par::set_sequential(cli.sequential);
    let (task, mut emit, mut overrides) = match cli.cmd {
        Top::Task(t) => (t, Emit::Json, BTreeMap::new()),
        Top::Run { config } => match RunConfig::load(&config) {
            Ok(x) => x,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
    };
    if let Some(e) = cli.emit {
        emit = e;
    }
    overrides.extend(cli.tol);
    let (code, out, diagnostics) = run(&task, emit, &overrides);
    if let Some(out) = out {
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(out.as_bytes());
    }
    for d in diagnostics {
        eprintln!("{d}");
    }
    ExitCode::from(code)
}
