//! Multi-seed benchmark harness for the MPC drivers.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod report;
pub mod runner;
pub mod task;

pub use report::{emit_report, BenchReport, DriverSummary, EpisodeRow, ReportFormat};
pub use runner::{run_benchmark, run_one, RunOptions};
pub use task::TaskSpec;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<mpcmix::Error> for BenchError {
    fn from(e: mpcmix::Error) -> Self {
        BenchError::Config(e.to_string())
    }
}

impl BenchError {
    /// Process exit code: 2 for bad configuration, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 3,
        }
    }
}
