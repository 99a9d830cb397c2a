use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dumbbell::experiments::{emit_plot_data, run_and_write, PlotKind, Report, ScenarioConfig};

#[derive(Parser)]
#[command(name = "dumbbell", version, about = "Conformal dumbbell eigenvalue experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file and write its report.
    Run {
        config: PathBuf,
        /// Worker threads; overrides DUMBBELL_WORKERS and the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot-ready data files from a saved report.
    Emit {
        report: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn env_workers() -> Result<Option<usize>, String> {
    match std::env::var("DUMBBELL_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("DUMBBELL_WORKERS=`{v}` is not a thread count")),
        Err(_) => Ok(None),
    }
}

fn run(config: PathBuf, workers: Option<usize>, out: Option<PathBuf>) -> Result<bool, String> {
    let mut cfg = ScenarioConfig::load(&config).map_err(|e| e.to_string())?;
    if let Some(w) = workers.or(env_workers()?) {
        cfg.workers = w;
    }
    let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let (report, path) = run_and_write(&cfg, &out).map_err(|e| e.to_string())?;
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    for f in &report.failures {
        eprintln!("stage `{}` failed: {}", f.stage, f.message);
    }
    println!("report: {}", path.display());
    Ok(report.passed())
}

fn emit(report_path: PathBuf, kind: PlotKind, out: Option<PathBuf>) -> Result<bool, String> {
    let report = Report::load(&report_path).map_err(|e| e.to_string())?;
    let dir = report_path.parent().map(PathBuf::from).unwrap_or_default();
    let out = out.unwrap_or_else(|| dir.clone());
    let path = emit_plot_data(&report, kind, &dir, &out).map_err(|e| e.to_string())?;
    println!("{}", path.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, workers, out } => run(config, workers, out),
        Command::Emit { report, kind, out } => emit(report, kind, out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
