use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pathctl_lab::plotdata::{emit_plotdata, PlotSpec};
use pathctl_lab::{run, LabError, LabResult, RunConfig, STUDIES};

#[derive(Parser)]
#[command(name = "pathctl", version, about = "Run numerical studies of controlled path-dependent evolution systems")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the configuration; 0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gelfand-triple identities on random vectors.
    VerifyGelfand,
    /// Picard contraction on short windows and a sample trajectory.
    Solve,
    /// Value bound, Lipschitz continuity and the supermartingale property.
    Value,
    /// Dynamic programming on scenario trees against strategy enumeration.
    Dpp,
    /// A priori estimates on random draws.
    Estimates,
    /// Itô-Kunita residuals and declared bounds of test functionals.
    Calculus,
    /// Approximation errors over partition, freezing level, modes and drift bound.
    ApproxStudy,
    /// Bounds of the value by the regularized value.
    Sandwich,
    /// Every study in turn.
    All,
    /// Print the effective configuration as TOML.
    ShowConfig,
    /// Reshape a study CSV into long (x, y, series) rows.
    EmitPlotdata {
        input: PathBuf,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Column used as x (first column by default).
        #[arg(long)]
        x: Option<String>,
        /// Comma-separated y columns (every numeric column by default).
        #[arg(long, value_delimiter = ',')]
        y: Vec<String>,
    },
}

fn load(cli: &Cli) -> LabResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(cli: Cli) -> LabResult<bool> {
    let names: Vec<&str> = match &cli.command {
        Command::VerifyGelfand => vec!["verify-gelfand"],
        Command::Solve => vec!["solve"],
        Command::Value => vec!["value"],
        Command::Dpp => vec!["dpp"],
        Command::Estimates => vec!["estimates"],
        Command::Calculus => vec!["calculus"],
        Command::ApproxStudy => vec!["approx-study"],
        Command::Sandwich => vec!["sandwich"],
        Command::All => STUDIES.to_vec(),
        Command::ShowConfig => {
            let cfg = load(&cli)?;
            print!("{}", toml::to_string(&cfg).map_err(|e| LabError::Usage(e.to_string()))?);
            return Ok(true);
        }
        Command::EmitPlotdata { input, output, x, y } => {
            let f = File::open(input).map_err(|e| LabError::Io(input.display().to_string(), e))?;
            let spec = PlotSpec { x: x.clone(), y: y.clone() };
            match output {
                Some(o) => {
                    let w = File::create(o).map_err(|e| LabError::Io(o.display().to_string(), e))?;
                    emit_plotdata(BufReader::new(f), w, &spec)?;
                }
                None => {
                    emit_plotdata(BufReader::new(f), io::stdout().lock(), &spec)?;
                }
            }
            return Ok(true);
        }
    };
    let cfg = load(&cli)?;
    let outcome = run(&names, &cfg, &cfg.out)?;
    let mut stdout = io::stdout().lock();
    for s in &outcome.studies {
        let status = if s.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(stdout, "{status} {} ({:.2} s)", s.study, s.seconds);
        for c in s.failures() {
            let _ = writeln!(stdout, "  failed {}: measured {:e}, bound {:e}", c.name, c.measured, c.bound);
        }
    }
    let _ = writeln!(stdout, "manifest: {}", outcome.manifest.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
