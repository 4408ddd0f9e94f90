//! Dual-channel costs.
//!
//! The smooth channel is a quadratic form in the state error and control and
//! is the only thing the iLQG solver differentiates. The full channel adds a
//! binary contact indicator on top and is what the sampler scores rollouts
//! with. Costs are written `eᵀQe` without a one-half, so first and second
//! derivatives carry a factor 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envs::DynamicsModel;
use crate::error::{Error, Result};
use crate::types::{matrix_from_rows, ControlVec, StateVec, Trajectory};

/// Default per-step penalty of a discouraged contact.
pub const DEFAULT_CONTACT_PENALTY: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub x_goal: StateVec,
    /// Diagonal of the running state weight.
    pub q_run: DVector<f64>,
    /// Diagonal of the terminal state weight.
    pub q_term: DVector<f64>,
    /// Control-effort weight, may be zero.
    pub r: DMatrix<f64>,
}

impl QuadraticCost {
    pub fn new(
        x_goal: StateVec,
        q_run: DVector<f64>,
        q_term: DVector<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n_x = x_goal.len();
        if q_run.len() != n_x || q_term.len() != n_x {
            return Err(Error::Dimension {
                what: "cost diagonal",
                expected: n_x,
                got: q_run.len().min(q_term.len()),
            });
        }
        if q_run.iter().chain(q_term.iter()).any(|&q| !(q >= 0.0)) {
            return Err(Error::Config("cost weights must be non-negative".into()));
        }
        if !r.is_square() {
            return Err(Error::Config("control weight must be square".into()));
        }
        Ok(Self {
            x_goal,
            q_run,
            q_term,
            r,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.x_goal.len()
    }

    pub fn control_dim(&self) -> usize {
        self.r.nrows()
    }

    fn weighted_error(&self, diag: &DVector<f64>, x: &StateVec) -> f64 {
        x.iter()
            .zip(self.x_goal.iter())
            .zip(diag.iter())
            .map(|((xi, gi), qi)| qi * (xi - gi) * (xi - gi))
            .sum()
    }

    /// `(x - x_goal)ᵀ Q_run (x - x_goal)`.
    pub fn state_running(&self, x: &StateVec) -> f64 {
        self.weighted_error(&self.q_run, x)
    }

    pub fn control_running(&self, u: &ControlVec) -> f64 {
        u.dot(&(&self.r * u))
    }

    pub fn terminal(&self, x: &StateVec) -> f64 {
        self.weighted_error(&self.q_term, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorMode {
    /// Adds the running state error whenever the system is *not* in contact.
    Encourage,
    /// Adds a fixed penalty whenever the system *is* in contact.
    Discourage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorCost {
    pub mode: IndicatorMode,
    /// Multiplier on the state error (encourage) or the per-step penalty
    /// (discourage).
    pub weight: f64,
}

impl IndicatorCost {
    pub fn encourage(weight: f64) -> Self {
        Self {
            mode: IndicatorMode::Encourage,
            weight,
        }
    }

    pub fn discourage(penalty: f64) -> Self {
        Self {
            mode: IndicatorMode::Discourage,
            weight: penalty,
        }
    }
}

/// Second-order expansion of a running or terminal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub l_x: DVector<f64>,
    pub l_xx: DMatrix<f64>,
    pub l_u: DVector<f64>,
    pub l_uu: DMatrix<f64>,
    pub l_ux: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCost {
    pub smooth: QuadraticCost,
    pub indicator: Option<IndicatorCost>,
    /// Multiplier on every running term (e.g. `dt` to integrate over time).
    /// Terminal costs are not scaled.
    pub running_scale: f64,
}

impl DualCost {
    pub fn new(smooth: QuadraticCost) -> Self {
        Self {
            smooth,
            indicator: None,
            running_scale: 1.0,
        }
    }

    pub fn with_indicator(mut self, indicator: IndicatorCost) -> Self {
        self.indicator = Some(indicator);
        self
    }

    pub fn with_running_scale(mut self, scale: f64) -> Self {
        self.running_scale = scale;
        self
    }

    /// Running cost seen by the derivative-based solver.
    pub fn running_cost_smooth(&self, x: &StateVec, u: &ControlVec) -> f64 {
        self.running_scale * (self.smooth.state_running(x) + self.smooth.control_running(u))
    }

    /// Indicator contribution alone (already scaled).
    pub fn indicator_cost(&self, env: &dyn DynamicsModel, x: &StateVec) -> f64 {
        let Some(ind) = self.indicator else {
            return 0.0;
        };
        let in_contact = env.contact_active(x);
        let raw = match ind.mode {
            IndicatorMode::Encourage if !in_contact => ind.weight * self.smooth.state_running(x),
            IndicatorMode::Discourage if in_contact => ind.weight,
            _ => 0.0,
        };
        self.running_scale * raw
    }

    /// Running cost seen by the sampler: smooth channel plus indicator.
    pub fn running_cost_full(&self, env: &dyn DynamicsModel, x: &StateVec, u: &ControlVec) -> f64 {
        self.running_cost_smooth(x, u) + self.indicator_cost(env, x)
    }

    pub fn terminal_cost(&self, x: &StateVec) -> f64 {
        self.smooth.terminal(x)
    }

    /// `S(V)`: full-channel running costs plus the terminal cost.
    pub fn trajectory_cost(&self, env: &dyn DynamicsModel, traj: &Trajectory) -> f64 {
        let running: f64 = traj
            .states
            .iter()
            .zip(&traj.controls)
            .map(|(x, u)| self.running_cost_full(env, x, u))
            .sum();
        running + self.terminal_cost(traj.final_state())
    }

    /// Objective minimised by iLQG: smooth running costs plus terminal cost.
    pub fn trajectory_cost_smooth(&self, traj: &Trajectory) -> f64 {
        let running: f64 = traj
            .states
            .iter()
            .zip(&traj.controls)
            .map(|(x, u)| self.running_cost_smooth(x, u))
            .sum();
        running + self.terminal_cost(traj.final_state())
    }

    /// Exact derivatives of the smooth running cost at `(x, u)`.
    pub fn quadratize(&self, x: &StateVec, u: &ControlVec) -> CostExpansion {
        let s = self.running_scale;
        let q = &self.smooth.q_run;
        let err = x - &self.smooth.x_goal;
        let r_sym = &self.smooth.r + self.smooth.r.transpose();
        CostExpansion {
            l_x: err.component_mul(q) * (2.0 * s),
            l_xx: DMatrix::from_diagonal(&(q * (2.0 * s))),
            l_u: &r_sym * u * s,
            l_uu: r_sym * s,
            l_ux: DMatrix::zeros(u.len(), x.len()),
        }
    }

    /// Derivatives of the terminal cost; control blocks are empty-sized zeros.
    pub fn quadratize_terminal(&self, x: &StateVec) -> CostExpansion {
        let q = &self.smooth.q_term;
        let err = x - &self.smooth.x_goal;
        let n_u = self.smooth.control_dim();
        CostExpansion {
            l_x: err.component_mul(q) * 2.0,
            l_xx: DMatrix::from_diagonal(&(q * 2.0)),
            l_u: DVector::zeros(n_u),
            l_uu: DMatrix::zeros(n_u, n_u),
            l_ux: DMatrix::zeros(n_u, x.len()),
        }
    }
}

/// Indicator selection in a cost table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    #[default]
    None,
    Encourage,
    Discourage,
}

/// Cost description as written in a task file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub x_goal: Vec<f64>,
    pub q_run: Vec<f64>,
    pub q_term: Vec<f64>,
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub running_scale: Option<f64>,
    #[serde(default)]
    pub indicator: IndicatorKind,
    #[serde(default)]
    pub indicator_weight: Option<f64>,
}

impl CostSpec {
    pub fn build(&self, n_u: usize) -> Result<DualCost> {
        let r = match &self.r {
            Some(rows) => matrix_from_rows(rows)?,
            None => DMatrix::zeros(n_u, n_u),
        };
        if r.nrows() != n_u {
            return Err(Error::Dimension {
                what: "control weight",
                expected: n_u,
                got: r.nrows(),
            });
        }
        let smooth = QuadraticCost::new(
            DVector::from_vec(self.x_goal.clone()),
            DVector::from_vec(self.q_run.clone()),
            DVector::from_vec(self.q_term.clone()),
            r,
        )?;
        let mut cost = DualCost::new(smooth).with_running_scale(self.running_scale.unwrap_or(1.0));
        cost.indicator = match self.indicator {
            IndicatorKind::None => None,
            IndicatorKind::Encourage => {
                Some(IndicatorCost::encourage(self.indicator_weight.unwrap_or(1.0)))
            }
            IndicatorKind::Discourage => Some(IndicatorCost::discourage(
                self.indicator_weight.unwrap_or(DEFAULT_CONTACT_PENALTY),
            )),
        };
        if cost.indicator.is_some_and(|i| !(i.weight >= 0.0)) {
            return Err(Error::Config("indicator weight must be non-negative".into()));
        }
        Ok(cost)
    }
}
