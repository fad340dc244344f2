use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ckmpm::config::{KernelName, TransferName};
use ckmpm::run::{cmd_run, with_threads, Precision, RunManifest};
use ckmpm::scene::Overrides;
use ckmpm::validate::{cmd_validate, print_table, ValidateOptions};
use ckmpm::{bench, SceneConfig};

#[derive(Parser)]
#[command(name = "ckmpm", version, about = "Compact-kernel material point method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene, writing snapshots and diagnostics.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        kernel: Option<KernelName>,
        #[arg(long, value_enum)]
        transfer: Option<TransferName>,
        #[arg(long, value_enum, default_value_t = Precision::Double)]
        precision: Precision,
        /// Serial, bit-reproducible scatter.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        threads: Option<usize>,
        /// Continue from a checkpoint of the same scene.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the built-in property, conservation and reference suites.
    Validate {
        /// Ablation: approximate sine in the conservation scenes.
        #[arg(long, hide = true)]
        inject_fast_sine: bool,
        /// Ablation: reconstruct from a single grid.
        #[arg(long, hide = true)]
        single_grid: bool,
    },
    /// Time compact against quadratic transfers on one scene.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, value_enum)]
        transfer: Option<TransferName>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, kernel, transfer, precision, deterministic, threads, resume } => {
            let manifest = RunManifest {
                config,
                out,
                overrides: Overrides { kernel, transfer, deterministic: deterministic.then_some(true), trig: None },
                precision,
                threads,
                resume,
            };
            cmd_run(&manifest).map(|s| {
                println!(
                    "{} frames, {} steps, {} particles, {} snapshot files in {:.1}s",
                    s.frames, s.steps, s.particles, s.snapshots, s.seconds
                );
                true
            })
        }
        Command::Validate { inject_fast_sine, single_grid } => {
            let results = cmd_validate(&ValidateOptions { fast_sine: inject_fast_sine, single_grid });
            print!("{}", print_table(&results));
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Bench { config, steps, transfer, threads } => SceneConfig::load(&config).and_then(|cfg| {
            let overrides = Overrides { transfer, ..Default::default() };
            let report = with_threads(threads, || bench::cmd_bench(&cfg, &overrides, steps))??;
            print!("{}", report.render());
            Ok(true)
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

