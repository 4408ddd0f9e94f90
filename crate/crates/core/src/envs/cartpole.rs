use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::DynamicsModel;
use crate::error::{Error, Result};
use crate::types::{ControlBounds, ControlVec, StateVec};

/// Cart-pole parameters. The pole is a point mass at distance
/// `pole_length` from the pivot; there is no friction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleParams {
    /// kg
    pub cart_mass: f64,
    /// kg
    pub pole_mass: f64,
    /// m
    pub pole_length: f64,
    /// m/s²
    pub gravity: f64,
    /// s
    pub dt: f64,
    /// Symmetric force limit in N; `None` leaves the actuator unbounded.
    pub force_limit: Option<f64>,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.01,
            force_limit: None,
        }
    }
}

/// Cart-pole with state `(cart position, pole angle, cart velocity, angular
/// velocity)`. Angle 0 is upright, π hangs down.
#[derive(Debug, Clone, Default)]
pub struct CartpoleEnv {
    p: CartpoleParams,
}

impl CartpoleEnv {
    pub fn new(p: CartpoleParams) -> Result<Self> {
        if !(p.cart_mass > 0.0 && p.pole_mass > 0.0 && p.pole_length > 0.0 && p.dt > 0.0) {
            return Err(Error::Config("cartpole masses, length and dt must be positive".into()));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> &CartpoleParams {
        &self.p
    }

    /// Continuous-time accelerations `(ẍ, θ̈)`.
    pub fn accelerations(&self, x: &StateVec, force: f64) -> (f64, f64) {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
            ..
        } = self.p;
        let (s, c) = x[1].sin_cos();
        let thetadot = x[3];
        let xacc = (force + mp * s * (l * thetadot * thetadot - g * c)) / (mc + mp * s * s);
        let thacc = (g * s - c * xacc) / l;
        (xacc, thacc)
    }

    /// Total mechanical energy, potential measured from the pivot height.
    pub fn energy(&self, x: &StateVec) -> f64 {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
            ..
        } = self.p;
        let c = x[1].cos();
        let (v, w) = (x[2], x[3]);
        0.5 * (mc + mp) * v * v + mp * l * c * v * w + 0.5 * mp * l * l * w * w + mp * g * l * c
    }
}

impl DynamicsModel for CartpoleEnv {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn control_bounds(&self) -> ControlBounds {
        match self.p.force_limit {
            Some(f) => ControlBounds::symmetric(&[f]),
            None => ControlBounds::unbounded(1),
        }
    }

    fn integrate(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        let dt = self.p.dt;
        let (xacc, thacc) = self.accelerations(x, u[0]);
        let v = x[2] + dt * xacc;
        let w = x[3] + dt * thacc;
        DVector::from_column_slice(&[x[0] + dt * v, x[1] + dt * w, v, w])
    }
}
