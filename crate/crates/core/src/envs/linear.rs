use nalgebra::DMatrix;

use super::DynamicsModel;
use crate::error::{Error, Result};
use crate::types::{ControlVec, StateVec};

/// Linear time-invariant system `x' = A x + B u`, used for LQR checks.
#[derive(Debug, Clone)]
pub struct LinearEnv {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
}

impl LinearEnv {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::Config("linear system needs square A and matching B".into()));
        }
        Ok(Self { a, b, dt })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl DynamicsModel for LinearEnv {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn integrate(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        &self.a * x + &self.b * u
    }
}
