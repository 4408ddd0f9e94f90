use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mpcmix::mpc::Driver;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// One episode of one driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task: String,
    pub driver: Driver,
    pub seed: u64,
    pub cost: f64,
    pub success: bool,
    pub steps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSummary {
    pub driver: Driver,
    pub episodes: usize,
    /// Percent of episodes that succeeded.
    pub success_rate: f64,
    /// Mean cost over successful episodes; `None` when none succeeded.
    pub mean_cost: Option<f64>,
    pub mean_wall_time_s: f64,
}

impl DriverSummary {
    pub fn from_rows<'a>(driver: Driver, rows: impl IntoIterator<Item = &'a EpisodeRow>) -> Self {
        let rows: Vec<_> = rows.into_iter().filter(|r| r.driver == driver).collect();
        let n = rows.len();
        let wins: Vec<_> = rows.iter().filter(|r| r.success).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, len: usize| xs.sum::<f64>() / len as f64;
        Self {
            driver,
            episodes: n,
            success_rate: if n == 0 { 0.0 } else { 100.0 * wins.len() as f64 / n as f64 },
            mean_cost: (!wins.is_empty()).then(|| mean(&mut wins.iter().map(|r| r.cost), wins.len())),
            mean_wall_time_s: if n == 0 { 0.0 } else { mean(&mut rows.iter().map(|r| r.wall_time_s), n) },
        }
    }
}

/// Raw per-seed rows plus per-driver aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub task: String,
    pub rows: Vec<EpisodeRow>,
    pub aggregate: Vec<DriverSummary>,
}

impl BenchReport {
    /// Aggregates in first-appearance order of drivers in `rows`.
    pub fn from_rows(task: impl Into<String>, rows: Vec<EpisodeRow>) -> Self {
        let mut drivers: Vec<Driver> = Vec::new();
        for r in &rows {
            if !drivers.contains(&r.driver) {
                drivers.push(r.driver);
            }
        }
        let aggregate = drivers.iter().map(|&d| DriverSummary::from_rows(d, &rows)).collect();
        Self {
            task: task.into(),
            rows,
            aggregate,
        }
    }

    pub fn summary(&self, driver: Driver) -> Option<&DriverSummary> {
        self.aggregate.iter().find(|s| s.driver == driver)
    }

    /// Plain-text table in the layout of a results table.
    pub fn render_table(&self) -> String {
        let mut out = format!("{}\n{:<8} {:>12} {:>10} {:>10}\n", self.task, "driver", "cost", "success%", "time_s");
        for s in &self.aggregate {
            let cost = s.mean_cost.map_or_else(|| "N/A".to_string(), |c| format!("{c:.4e}"));
            out.push_str(&format!(
                "{:<8} {:>12} {:>10.1} {:>10.3}\n",
                s.driver.name(),
                cost,
                s.success_rate,
                s.mean_wall_time_s
            ));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["task", "driver", "seed", "cost", "success", "steps", "wall_time_s"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), BenchError> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, path: &Path) -> Result<(), BenchError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => report.write_csv(&mut out)?,
        ReportFormat::Json => report.write_json(&mut out)?,
    }
    out.flush()?;
    Ok(())
}
