use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrflow::collar::Collar;
use hrflow::scenario::{build_initial, parse_config_with_overrides};
use hrflow::snapshot::{read_snapshot, write_snapshot};
use hrflow::{check_invariants, flow, monitor, FlowState};

/// Exit code for configuration, usage and I/O errors.
const EXIT_CONFIG: u8 = 2;
/// Exit code for a numerical abort.
const EXIT_ABORT: u8 = 3;
/// Exit code for a failed `check`.
const EXIT_CHECK: u8 = 1;

#[derive(Parser)]
#[command(name = "hrflow", version, about = "Harmonic Ricci Flow on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the CSV time series and snapshots.
    Run {
        config: PathBuf,
        /// Replace a config value, e.g. `--override phi.seed=3`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print collar half-widths and the |dz²| norm check.
    Collar {
        #[arg(long, value_delimiter = ',', required = true)]
        ell: Vec<f64>,
    },
    /// Run the invariant suite on a snapshot.
    Check { snapshot: PathBuf },
}

enum Failure {
    Config(String),
    Abort(String),
    Check,
}

impl From<hrflow::Error> for Failure {
    fn from(e: hrflow::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn snapshot_name(t: f64) -> String {
    format!("state_t{t:.6}.snap")
}

fn run(config_path: &Path, overrides: &[String]) -> Result<(), Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let config = parse_config_with_overrides(&text, overrides)?;
    let initial = build_initial(&config)?;
    let outcome = flow::run(initial, &config.run_config())?;

    {
        let stdout = io::stdout();
        let mut out: Box<dyn Write> = match &config.output.csv {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(stdout.lock()),
        };
        monitor::write_csv(&outcome.rows, &mut out)?;
        out.flush()?;
    }

    let dir = config.output.snapshot_dir.clone();
    if !outcome.snapshots.is_empty() || outcome.abort.is_some() {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
    }
    let dir = dir.unwrap_or_else(|| PathBuf::from("."));
    for s in &outcome.snapshots {
        write_snapshot(&dir.join(snapshot_name(s.t)), s)?;
    }
    if let Some(abort) = &outcome.abort {
        let path = dir.join("abort.snap");
        write_snapshot(&path, &outcome.final_state)?;
        return Err(Failure::Abort(format!(
            "aborted at t = {:e}: {}; last valid state (t = {:e}) written to {}",
            abort.t,
            abort.reason,
            outcome.final_state.t,
            path.display()
        )));
    }
    Ok(())
}

fn collar(ells: &[f64]) -> Result<(), Failure> {
    let collars = ells.iter().map(|&l| Collar::new(l)).collect::<Result<Vec<_>, _>>()?;
    println!("ell,Y,8piY,quadrature,rel_diff");
    for c in collars {
        let closed = c.dz2_l1_norm();
        let quad = c.dz2_l1_norm_quadrature(1e-12);
        println!(
            "{:e},{:e},{:e},{:e},{:e}",
            c.ell(),
            c.halfwidth(),
            closed,
            quad,
            (closed / quad - 1.0).abs()
        );
    }
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let state: FlowState = read_snapshot(path)?;
    let checks = check_invariants(&state);
    println!("t = {:e}", state.t);
    for c in &checks {
        println!(
            "{} {}: {:e} (tolerance {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if checks.iter().all(|c| c.pass) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Collar { ell } => collar(ell),
        Command::Check { snapshot } => check(snapshot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("numerical abort: {msg}");
            ExitCode::from(EXIT_ABORT)
        }
        Err(Failure::Check) => {
            eprintln!("invariant check failed");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
