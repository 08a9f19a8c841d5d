use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pmhd::config::{Experiment, ExperimentConfig};
use pmhd::error::{ConfigError, ExperimentError};
use pmhd::experiments::{preset, run, write_outcome};

#[derive(Parser)]
#[command(name = "pmhd", version, about = "Pseudo-spectral lab for stochastically forced 3-D MHD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo check of the driver covariance in both correlation modes.
    Covariance(Common),
    /// Wick expansion counts, pairing sums and Monte Carlo checks.
    Wick(Common),
    /// Level-1 constants over a list of cutoffs, with the log-log slope.
    RenormSweep(Common),
    /// Lattice sums of the constants that vanish, and the coupled level-2 check.
    Vanishing(Common),
    /// Block energies of a second-chaos product at the finest scales.
    ChaosScaling(Common),
    /// Corrected and raw driver-bundle norms over a list of cutoffs.
    TreeNorms(Common),
    /// Paracontrolled fixed point against the direct solver.
    Fixedpoint(Common),
    /// Energy identities and a forced trajectory with snapshots.
    Energy(Common),
    /// Power-counting verdicts.
    Subcrit(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; the built-in preset is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Prints the effective configuration and exits.
    #[arg(long)]
    emit_config: bool,
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Command::Covariance(c) => (Experiment::Covariance, c),
            Command::Wick(c) => (Experiment::Wick, c),
            Command::RenormSweep(c) => (Experiment::RenormSweep, c),
            Command::Vanishing(c) => (Experiment::Vanishing, c),
            Command::ChaosScaling(c) => (Experiment::ChaosScaling, c),
            Command::TreeNorms(c) => (Experiment::TreeNorms, c),
            Command::Fixedpoint(c) => (Experiment::FixedpointConsistency, c),
            Command::Energy(c) => (Experiment::Energy, c),
            Command::Subcrit(c) => (Experiment::Subcriticality, c),
        }
    }
}

fn load(experiment: Experiment, args: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)?
        }
        None => preset(experiment),
    };
    if cfg.experiment != experiment {
        return Err(ConfigError::Invalid(vec![format!(
            "experiment {} does not match the subcommand",
            serde_json::to_value(cfg.experiment).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        )]));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_config_error(e: &ConfigError) -> ExitCode {
    match e {
        ConfigError::Invalid(fields) => {
            eprintln!("invalid config:");
            for f in fields {
                eprintln!("  - {f}");
            }
        }
        other => eprintln!("{other}"),
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load(experiment, args) {
        Ok(c) => c,
        Err(e) => return report_config_error(&e),
    };
    if args.emit_config {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    let out = PathBuf::from(&cfg.output);
    match run(&cfg) {
        Ok(outcome) => match write_outcome(&outcome, &out) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
                println!("config_hash {}", outcome.config_hash);
                println!("check {}", if outcome.ok { "PASS" } else { "FAIL" });
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("writing {}: {e}", out.display());
                ExitCode::from(1)
            }
        },
        Err(ExperimentError::Config(e)) => report_config_error(&e),
        Err(ExperimentError::Numerical { message, report }) => {
            eprintln!("numerical failure: {message}");
            let text = serde_json::to_string_pretty(&report).unwrap_or_default();
            eprintln!("{text}");
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("solver_failure.json"), text + "\n");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
