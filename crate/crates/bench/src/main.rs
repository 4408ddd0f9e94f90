use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpcmix::envs::ENV_NAMES;
use mpcmix::mpc::Driver;
use mpcmix_bench::{emit_report, run_benchmark, BenchError, ReportFormat, RunOptions, TaskSpec};

#[derive(Parser)]
#[command(name = "bench", about = "Benchmark MPC drivers over many seeds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a task file and write `<task>.csv` and `<task>.json`.
    Run {
        task: PathBuf,
        /// Subset of drivers, comma separated.
        #[arg(long, value_delimiter = ',')]
        drivers: Option<Vec<String>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Report zero wall time so repeated runs are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Also write per-episode logs under `<out>/episodes/<task>`.
        #[arg(long)]
        episode_logs: bool,
        /// Worker threads (overrides BENCH_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List registered environments and drivers.
    List,
    /// Parse and check a task file without running it.
    Validate { task: PathBuf },
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.cmd {
        Cmd::List => {
            println!("environments: {}", ENV_NAMES.join(", "));
            let drivers: Vec<_> = Driver::ALL.iter().map(|d| d.name()).collect();
            println!("drivers: {}", drivers.join(", "));
        }
        Cmd::Validate { task } => {
            let spec = TaskSpec::from_path(&task)?;
            println!(
                "{}: ok ({} drivers, {} seeds, {} steps)",
                spec.name,
                spec.drivers.len(),
                spec.n_seeds,
                spec.max_steps
            );
        }
        Cmd::Run {
            task,
            drivers,
            seeds,
            out,
            no_timing,
            episode_logs,
            threads,
        } => {
            let mut spec = TaskSpec::from_path(&task)?;
            if let Some(names) = drivers {
                spec.drivers = names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?;
            }
            if let Some(n) = seeds {
                spec.n_seeds = n;
            }
            std::fs::create_dir_all(&out)?;
            let opts = RunOptions {
                threads,
                record_timing: !no_timing,
                episode_log_dir: episode_logs.then(|| out.join("episodes").join(&spec.name)),
            };
            let report = run_benchmark(&spec, &opts)?;
            emit_report(&report, ReportFormat::Csv, &out.join(format!("{}.csv", spec.name)))?;
            emit_report(&report, ReportFormat::Json, &out.join(format!("{}.json", spec.name)))?;
            print!("{}", report.render_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
