use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use radint::config::{bundled, parse_str, Overrides, BUNDLED, EXPERIMENTS};
use radint::experiments::run_experiment;

/// Automotive radar interference experiments.
#[derive(Parser)]
#[command(name = "radint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file (or a bundled config name).
    Run {
        config: String,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the Monte-Carlo trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// List experiment kinds and bundled configs.
    ListExperiments,
    /// Parse and validate a config without running it.
    Validate {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

const VALIDATION: u8 = 2;
const RUNTIME: u8 = 3;

fn load(name: &str, ov: &Overrides) -> Result<radint::config::RunConfig, String> {
    let path = PathBuf::from(name);
    let text = if path.exists() {
        std::fs::read_to_string(&path).map_err(|e| format!("{name}: {e}"))?
    } else if let Some(text) = bundled(name) {
        text.to_owned()
    } else {
        return Err(format!("{name}: no such file or bundled config"));
    };
    parse_str(&text, ov).map_err(|e| format!("{name}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            println!("experiments:");
            for (k, d) in EXPERIMENTS {
                println!("  {k:<12} {d}");
            }
            println!("bundled configs:");
            for (name, text) in BUNDLED {
                let kind = parse_str(text, &Overrides::default())
                    .map(|c| c.experiment.kind())
                    .unwrap_or("?");
                println!("  {name:<12} {kind}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate {
            config,
            seed,
            out_dir,
            trials,
        } => match load(&config, &Overrides { seed, output_dir: out_dir, trials }) {
            Ok(c) => {
                println!("{config}: ok ({}, seed {}, hash {})", c.experiment.kind(), c.master_seed, c.hash);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(VALIDATION)
            }
        },
        Command::Run {
            config,
            seed,
            out_dir,
            trials,
        } => {
            let cfg = match load(&config, &Overrides { seed, output_dir: out_dir, trials }) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(VALIDATION);
                }
            };
            match run_experiment(&cfg) {
                Ok(s) => {
                    println!(
                        "{}: {} files in {} ({:.2} s)",
                        s.experiment,
                        s.files.len() + 1,
                        s.output_dir.display(),
                        s.wall_time_s
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", cfg.experiment.kind());
                    ExitCode::from(RUNTIME)
                }
            }
        }
    }
}
