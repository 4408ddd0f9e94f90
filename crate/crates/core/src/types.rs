//! Shared value types, solver configuration and control-sequence utilities.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment state `x`.
pub type StateVec = DVector<f64>;
/// Control input `u` (a mean) or `v` (a sampled input).
pub type ControlVec = DVector<f64>;

/// States `x_0..=x_T` and the controls `u_0..u_{T-1}` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVec>,
    pub controls: Vec<ControlVec>,
}

impl Trajectory {
    /// Number of control steps `T`.
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn initial_state(&self) -> &StateVec {
        &self.states[0]
    }

    pub fn final_state(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Per-dimension actuator limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: ControlVec,
    pub upper: ControlVec,
}

impl ControlBounds {
    pub fn new(lower: ControlVec, upper: ControlVec) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "control bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(upper.iter()).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("control bounds require lo <= hi".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n_u: usize) -> Self {
        Self {
            lower: DVector::from_element(n_u, f64::NEG_INFINITY),
            upper: DVector::from_element(n_u, f64::INFINITY),
        }
    }

    pub fn symmetric(limit: &[f64]) -> Self {
        Self {
            lower: DVector::from_iterator(limit.len(), limit.iter().map(|l| -l)),
            upper: DVector::from_column_slice(limit),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Projects each entry of `u` into its interval.
pub fn clamp_controls(u: &ControlVec, bounds: &ControlBounds) -> ControlVec {
    DVector::from_iterator(
        u.len(),
        u.iter()
            .zip(bounds.lower.iter().zip(bounds.upper.iter()))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
    )
}

/// Advances a control sequence by one step, repeating the final element.
pub fn shift_warm_start(controls: &[ControlVec]) -> Result<Vec<ControlVec>> {
    let last = controls.last().ok_or(Error::EmptySequence)?;
    Ok(controls[1..]
        .iter()
        .chain(std::iter::once(last))
        .cloned()
        .collect())
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(name));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * m.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite(name));
    }
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(name))
}

/// Gaussian distribution over a control sequence with per-step covariances.
#[derive(Debug, Clone)]
pub struct GaussianControlSequence {
    means: Vec<ControlVec>,
    covariances: Vec<DMatrix<f64>>,
}

impl GaussianControlSequence {
    pub fn new(means: Vec<ControlVec>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        if means.len() != covariances.len() {
            return Err(Error::Dimension {
                what: "covariance sequence",
                expected: means.len(),
                got: covariances.len(),
            });
        }
        for (m, c) in means.iter().zip(&covariances) {
            if c.nrows() != m.len() {
                return Err(Error::Dimension {
                    what: "covariance",
                    expected: m.len(),
                    got: c.nrows(),
                });
            }
            cholesky(c, "covariance")?;
        }
        Ok(Self { means, covariances })
    }

    /// Same covariance at every step.
    pub fn constant(means: Vec<ControlVec>, covariance: &DMatrix<f64>) -> Result<Self> {
        let covs = vec![covariance.clone(); means.len()];
        Self::new(means, covs)
    }

    pub fn means(&self) -> &[ControlVec] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn horizon(&self) -> usize {
        self.means.len()
    }
}

/// Hyperparameters shared by every MPC driver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Planning horizon `T` in steps.
    pub horizon_steps: usize,
    pub dt: f64,
    /// Number of sampled rollouts `K`.
    pub n_samples: usize,
    /// Temperature `λ`.
    pub lambda: f64,
    /// Mixing term `k` between the passive and the iLQG reference distribution.
    pub mixing_k: f64,
    /// Scale `β` applied to `Q_uu⁻¹`.
    pub beta: f64,
    /// Sampling covariance `Σ`.
    pub sigma: DMatrix<f64>,
    /// iLQG iterations per MPC step.
    pub ilqg_iters: usize,
    /// iLQG iteration cap for drivers that run iLQG to convergence.
    pub convergence_iters: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 75,
            dt: 0.01,
            n_samples: 10,
            lambda: 0.1,
            mixing_k: 1.0,
            beta: 1.0,
            sigma: DMatrix::identity(1, 1),
            ilqg_iters: 10,
            convergence_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverConfigFile {
    horizon_steps: Option<usize>,
    dt: Option<f64>,
    n_samples: Option<usize>,
    lambda: Option<f64>,
    mixing_k: Option<f64>,
    beta: Option<f64>,
    sigma: Option<Vec<Vec<f64>>>,
    ilqg_iters: Option<usize>,
    convergence_iters: Option<usize>,
    seed: Option<u64>,
}

/// Builds a dense matrix from a list of rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(
        n_rows,
        n_cols,
        rows.iter().flatten().copied(),
    ))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps < 1 {
            return Err(Error::Config("horizon_steps must be >= 1".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mixing_k) {
            return Err(Error::Config("mixing_k must lie in [0, 1]".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        cholesky(&self.sigma, "sigma")?;
        Ok(())
    }

    /// Applies the keys of a `key = value` table on top of `self`.
    ///
    /// Matrices are written as bracketed row lists, e.g. `sigma = [[4.0]]`.
    pub fn with_overrides(&self, table: &toml::Table) -> Result<Self> {
        let file: SolverConfigFile = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut cfg = self.clone();
        if let Some(v) = file.horizon_steps {
            cfg.horizon_steps = v;
        }
        if let Some(v) = file.dt {
            cfg.dt = v;
        }
        if let Some(v) = file.n_samples {
            cfg.n_samples = v;
        }
        if let Some(v) = file.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = file.mixing_k {
            cfg.mixing_k = v;
        }
        if let Some(v) = file.beta {
            cfg.beta = v;
        }
        if let Some(rows) = file.sigma {
            cfg.sigma = matrix_from_rows(&rows)?;
        }
        if let Some(v) = file.ilqg_iters {
            cfg.ilqg_iters = v;
        }
        if let Some(v) = file.convergence_iters {
            cfg.convergence_iters = v;
        }
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg = Self::default().with_overrides(&table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
