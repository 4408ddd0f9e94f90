use std::collections::BTreeMap;
use std::path::Path;

use mpcmix::costs::{CostSpec, DualCost};
use mpcmix::envs::{build_env, DynamicsModel};
use mpcmix::mpc::{Driver, SuccessPredicate};
use mpcmix::{SolverConfig, StateVec};
use nalgebra::DVector;
use serde::Deserialize;

use crate::BenchError;

pub const DEFAULT_SEEDS: usize = 20;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    name: String,
    #[serde(default)]
    n_seeds: Option<usize>,
    max_steps: usize,
    #[serde(default)]
    drivers: Option<Vec<String>>,
    env: EnvSection,
    cost: CostSpec,
    success: SuccessPredicate,
    #[serde(default)]
    solver: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    kind: String,
    x0: Vec<f64>,
    #[serde(default)]
    params: toml::Table,
}

/// One benchmark task: environment, cost, success test and solver settings.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub env_kind: String,
    pub env_params: toml::Table,
    pub x0: Vec<f64>,
    pub cost: CostSpec,
    pub success: SuccessPredicate,
    /// Settings shared by every driver.
    pub solver: SolverConfig,
    /// Per-driver changes on top of `solver`.
    pub overrides: BTreeMap<Driver, toml::Table>,
    pub drivers: Vec<Driver>,
    pub n_seeds: usize,
    pub max_steps: usize,
}

impl TaskSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let file: TaskFile = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;

        let mut base = file.solver;
        let mut overrides = BTreeMap::new();
        for driver in Driver::ALL {
            match base.remove(driver.name()) {
                Some(toml::Value::Table(t)) => {
                    overrides.insert(driver, t);
                }
                Some(_) => {
                    return Err(BenchError::Config(format!("[solver.{driver}] must be a table")));
                }
                None => {}
            }
        }
        let solver = SolverConfig::default().with_overrides(&base)?;

        let drivers = match file.drivers {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Driver>, _>>()?,
            None => Driver::ALL.to_vec(),
        };

        let spec = Self {
            name: file.name,
            env_kind: file.env.kind,
            env_params: file.env.params,
            x0: file.env.x0,
            cost: file.cost,
            success: file.success,
            solver,
            overrides,
            drivers,
            n_seeds: file.n_seeds.unwrap_or(DEFAULT_SEEDS),
            max_steps: file.max_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks names, dimensions and cross-driver fairness without running anything.
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_seeds == 0 || self.max_steps == 0 {
            return Err(BenchError::Config("n_seeds and max_steps must be positive".into()));
        }
        if self.drivers.is_empty() {
            return Err(BenchError::Config("no drivers selected".into()));
        }
        let env = self.build_env()?;
        if self.x0.len() != env.state_dim() {
            return Err(BenchError::Config(format!(
                "x0 has {} entries, {} expects {}",
                self.x0.len(),
                self.env_kind,
                env.state_dim()
            )));
        }
        self.build_cost(env.as_ref())?;
        self.success.validate(env.state_dim())?;
        if (env.dt() - self.solver.dt).abs() > 1e-12 {
            return Err(BenchError::Config(format!(
                "solver dt {} differs from environment dt {}",
                self.solver.dt,
                env.dt()
            )));
        }
        for driver in &self.drivers {
            let cfg = self.config_for(*driver, 0)?;
            cfg.validate()?;
            if cfg.sigma.nrows() != env.control_dim() {
                return Err(BenchError::Config(format!("sigma for {driver} must be {0}x{0}", env.control_dim())));
            }
        }
        self.check_fairness()
    }

    /// All drivers must plan over the same horizon and time step.
    pub fn check_fairness(&self) -> Result<(), BenchError> {
        for driver in &self.drivers {
            let cfg = self.config_for(*driver, 0)?;
            if cfg.horizon_steps != self.solver.horizon_steps || cfg.dt != self.solver.dt {
                return Err(BenchError::Config(format!(
                    "{driver} overrides horizon or dt; all drivers must share them"
                )));
            }
        }
        Ok(())
    }

    pub fn config_for(&self, driver: Driver, seed: u64) -> Result<SolverConfig, BenchError> {
        let mut cfg = match self.overrides.get(&driver) {
            Some(t) => self.solver.with_overrides(t)?,
            None => self.solver.clone(),
        };
        cfg.seed = seed;
        Ok(cfg)
    }

    pub fn build_env(&self) -> Result<Box<dyn DynamicsModel>, BenchError> {
        Ok(build_env(&self.env_kind, &self.env_params)?)
    }

    pub fn build_cost(&self, env: &dyn DynamicsModel) -> Result<DualCost, BenchError> {
        let cost = self.cost.build(env.control_dim())?;
        if cost.smooth.state_dim() != env.state_dim() {
            return Err(BenchError::Config(format!(
                "cost is {}-dimensional, {} has {} states",
                cost.smooth.state_dim(),
                self.env_kind,
                env.state_dim()
            )));
        }
        Ok(cost)
    }

    pub fn initial_state(&self) -> StateVec {
        DVector::from_vec(self.x0.clone())
    }
}
