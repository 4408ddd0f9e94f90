use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use mpcmix::mpc::{run_episode, Driver, EpisodeLog, EpisodeResult};
use rayon::prelude::*;

use crate::report::{BenchReport, EpisodeRow};
use crate::task::TaskSpec;
use crate::BenchError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; `None` uses `BENCH_THREADS` or all cores.
    pub threads: Option<usize>,
    /// When false, wall times are reported as 0 so reports are byte-stable.
    pub record_timing: bool,
    /// Write a CSV log and JSON summary for every episode here.
    pub episode_log_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            record_timing: true,
            episode_log_dir: None,
        }
    }
}

/// Reads `BENCH_THREADS`, ignoring unparsable or zero values.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("BENCH_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn write_episode_files(dir: &Path, driver: Driver, seed: u64, res: &EpisodeResult, log: &EpisodeLog) -> Result<(), BenchError> {
    let stem = dir.join(format!("{driver}_seed{seed}"));
    log.write_csv(BufWriter::new(File::create(stem.with_extension("csv"))?))?;
    res.write_summary_json(BufWriter::new(File::create(stem.with_extension("json"))?))?;
    Ok(())
}

/// Runs a single `(driver, seed)` episode.
pub fn run_one(task: &TaskSpec, driver: Driver, seed: u64, opts: &RunOptions) -> Result<EpisodeRow, BenchError> {
    let env = task.build_env()?;
    let cost = task.build_cost(env.as_ref())?;
    let cfg = task.config_for(driver, seed)?;
    let (res, log) = run_episode(
        driver,
        env.as_ref(),
        &cost,
        &task.initial_state(),
        &cfg,
        task.max_steps,
        &task.success,
        None,
    )
    .map_err(|e| BenchError::Runtime(format!("{driver} seed {seed}: {e}")))?;
    if let Some(dir) = &opts.episode_log_dir {
        write_episode_files(dir, driver, seed, &res, &log)?;
    }
    Ok(EpisodeRow {
        task: task.name.clone(),
        driver,
        seed,
        cost: res.total_cost,
        success: res.success,
        steps: res.steps_used,
        wall_time_s: if opts.record_timing { res.wall_time_s } else { 0.0 },
    })
}

/// Runs every selected driver on seeds `0..n_seeds`.
///
/// Rows come back ordered by driver (task order) then seed, whatever the
/// number of workers.
pub fn run_benchmark(task: &TaskSpec, opts: &RunOptions) -> Result<BenchReport, BenchError> {
    task.validate()?;
    if let Some(dir) = &opts.episode_log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(Driver, u64)> = task
        .drivers
        .iter()
        .flat_map(|&d| (0..task.n_seeds as u64).map(move |s| (d, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.or_else(threads_from_env).unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Runtime(e.to_string()))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, s)| run_one(task, d, s, opts))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(BenchReport::from_rows(task.name.clone(), rows))
}
