use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fevolve::cli::{run, Command, RunConfig};

/// Batch runner for the discretization and fixed-point solver studies.
#[derive(Parser, Debug)]
#[command(name = "fevolve", version, about)]
struct Cli {
    /// Command: solve-elliptic, solve-evolution, spectral-study,
    /// convergence-study, list-presets. May also come from the config file.
    command: Option<String>,

    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed for random-vector tests.
    #[arg(long)]
    seed: Option<u64>,

    /// Spacing list, comma separated (e.g. 0.125,0.0625).
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,

    /// Ball radius.
    #[arg(long)]
    r: Option<f64>,

    /// Picard depth / max iterations.
    #[arg(long)]
    k: Option<usize>,

    /// Time step.
    #[arg(long)]
    dt: Option<f64>,

    /// Stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Preset name.
    #[arg(long)]
    preset: Option<String>,
}

fn build_config(cli: Cli) -> Result<RunConfig, fevolve::Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            let cmd = cli.command.as_deref().ok_or_else(|| {
                fevolve::Error::ConfigParse(
                    "no command given (positional argument or --config file)".into(),
                )
            })?;
            RunConfig {
                command: Command::parse(cmd)?,
                preset: None,
                h: None,
                r: None,
                k: None,
                dt: None,
                tol: None,
                out_dir: None,
                seed: None,
            }
        }
    };
    // flags override file keys
    if let Some(cmd) = &cli.command {
        config.command = Command::parse(cmd)?;
    }
    if cli.preset.is_some() {
        config.preset = cli.preset;
    }
    if cli.h.is_some() {
        config.h = cli.h;
    }
    if cli.r.is_some() {
        config.r = cli.r;
    }
    if cli.k.is_some() {
        config.k = cli.k;
    }
    if cli.dt.is_some() {
        config.dt = cli.dt;
    }
    if cli.tol.is_some() {
        config.tol = cli.tol;
    }
    if cli.out.is_some() {
        config.out_dir = cli.out;
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("FEVOLVE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fevolve: config: {e}");
            return ExitCode::from(1);
        }
    };
    let command = config.command;
    match run(&config) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("serializable summary")
            );
            if outcome.certificates_ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("fevolve: certificate check failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("fevolve: {}: {e}", module_of(&e, command));
            ExitCode::from(1)
        }
    }
}

/// Qualify errors with the module most likely to have produced them.
fn module_of(e: &fevolve::Error, cmd: Command) -> &'static str {
    use fevolve::Error::*;
    match e {
        NonConformingSpacing { .. } | DimensionUnsupported(_) | DimensionMismatch { .. } => {
            "mesh_basis"
        }
        FactorizationFailed { .. } | NotSymmetric { .. } | EigensolveFailure(_) => "spectral",
        NonSpdTensor { .. } | ActionFailure { .. } => "operator",
        DivergenceDetected { .. } | InvalidRatio(_) => "contraction",
        SingularOperator(_) | ContractionConditionViolated { .. } | BallEscape { .. } => {
            "elliptic"
        }
        TrajectoryBallEscape { .. }
        | WindowExceedsDelta { .. }
        | IndexOutOfWindow { .. }
        | NotContractive(_)
        | SeriesOverflow { .. }
        | DegenerateProblem(_) => "evolution",
        UnknownPreset(_) => "problems",
        ConfigParse(_) | Io(_) => "cli",
        _ => match cmd {
            Command::SolveElliptic => "elliptic",
            Command::SolveEvolution => "evolution",
            Command::SpectralStudy | Command::ConvergenceStudy => "spectral",
            Command::ListPresets => "problems",
        },
    }
}
