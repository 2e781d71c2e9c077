//! Command-line front end: `cochlea <experiment> --config cfg.json --out dir`.
//!
//! Exit status: 0 on success, 2 when some sweep points were flagged, 1 on a
//! fatal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cochlea::config::{parse_config, ExperimentConfig};
use cochlea::run::{run_experiment, RunOptions};

#[derive(Parser)]
#[command(name = "cochlea", version, about = "Resonances, sweeps and phase data for graded resonator arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subwavelength resonances of the configured array.
    Resonances(RunArgs),
    /// Pure-tone frequency sweeps.
    Sweep(RunArgs),
    /// Phase and group delay at observation points.
    Phase(RunArgs),
    /// Two-tone interference sweep.
    Twotone(RunArgs),
    /// Single forced Hopf oscillator runs.
    Oracle(RunArgs),
    /// Parse and validate a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Always rebuild the modal system instead of reusing `<out>/cache`.
    #[arg(long)]
    no_cache: bool,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| e.to_string())
}

fn run(name: &str, args: &RunArgs) -> Result<i32, String> {
    let mut config = load(&args.config)?;
    if name == "resonances" {
        config.experiment = cochlea::config::Experiment::Resonances {};
    } else if config.experiment.name() != name {
        return Err(format!(
            "config experiment is `{}` but the subcommand is `{name}`",
            config.experiment.name()
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))?;
    let opts = RunOptions {
        out_dir: args.out.clone(),
        cache_dir: (!args.no_cache).then(|| args.out.join("cache")),
        threads: rayon::current_num_threads(),
    };
    let summary = run_experiment(&config, &opts).map_err(|e| e.to_string())?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    if summary.flagged_points > 0 {
        eprintln!("{} point(s) flagged; see run.json", summary.flagged_points);
    }
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Resonances(a) => run("resonances", a),
        Command::Sweep(a) => run("sweep", a),
        Command::Phase(a) => run("phase", a),
        Command::Twotone(a) => run("twotone", a),
        Command::Oracle(a) => run("oracle", a),
        Command::Validate { config } => load(config).map(|c| {
            println!("config ok: {} experiment, {} resonators", c.experiment.name(), c.geometry.n);
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
