use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::DynamicsModel;
use crate::error::{Error, Result};
use crate::types::{ControlBounds, ControlVec, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PusherParams {
    /// kg
    pub manipulator_mass: f64,
    /// m
    pub manipulator_radius: f64,
    /// Viscous drag on the manipulator, N·s/m.
    pub manipulator_damping: f64,
    /// kg
    pub object_mass: f64,
    /// m
    pub object_radius: f64,
    /// Normal contact stiffness, N/m.
    pub contact_stiffness: f64,
    /// Normal contact damping, N·s/m.
    pub contact_damping: f64,
    pub dt: f64,
    /// Symmetric per-axis force limit, N.
    pub force_limit: Option<f64>,
}

impl Default for PusherParams {
    fn default() -> Self {
        Self {
            manipulator_mass: 1.0,
            manipulator_radius: 0.05,
            manipulator_damping: 2.0,
            object_mass: 0.5,
            object_radius: 0.1,
            contact_stiffness: 1000.0,
            contact_damping: 10.0,
            dt: 0.01,
            force_limit: None,
        }
    }
}

/// Planar point manipulator pushing a free disc.
///
/// State: `(manipulator x, y, object x, y, manipulator vx, vy, object vx, vy)`.
/// Controls are the force on the manipulator. Contact is a frictionless
/// spring-damper along the line of centres; the object feels no other force.
#[derive(Debug, Clone, Default)]
pub struct PusherEnv {
    p: PusherParams,
}

impl PusherEnv {
    pub fn new(p: PusherParams) -> Result<Self> {
        if !(p.contact_stiffness > 0.0 && p.contact_damping > 0.0) {
            return Err(Error::Config("contact stiffness and damping must be positive".into()));
        }
        if !(p.manipulator_damping >= 0.0) {
            return Err(Error::Config("pusher damping must be non-negative".into()));
        }
        if !(p.manipulator_mass > 0.0 && p.object_mass > 0.0 && p.dt > 0.0) {
            return Err(Error::Config("pusher masses and dt must be positive".into()));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> &PusherParams {
        &self.p
    }

    /// Distance between centres minus the sum of radii (negative when
    /// penetrating).
    pub fn gap(&self, x: &StateVec) -> f64 {
        let d = Vector2::new(x[2] - x[0], x[3] - x[1]).norm();
        d - self.p.manipulator_radius - self.p.object_radius
    }

    /// Force exerted on the object; the manipulator receives the opposite.
    pub fn contact_force(&self, x: &StateVec) -> Vector2<f64> {
        let rel = Vector2::new(x[2] - x[0], x[3] - x[1]);
        let dist = rel.norm();
        let penetration = self.p.manipulator_radius + self.p.object_radius - dist;
        if penetration < 0.0 {
            return Vector2::zeros();
        }
        let normal = if dist > 0.0 {
            rel / dist
        } else {
            Vector2::new(1.0, 0.0)
        };
        let separating_speed = Vector2::new(x[6] - x[4], x[7] - x[5]).dot(&normal);
        let magnitude = self.p.contact_stiffness * penetration - self.p.contact_damping * separating_speed;
        normal * magnitude.max(0.0)
    }
}

impl DynamicsModel for PusherEnv {
    fn name(&self) -> &'static str {
        "pusher"
    }

    fn state_dim(&self) -> usize {
        8
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn control_bounds(&self) -> ControlBounds {
        match self.p.force_limit {
            Some(f) => ControlBounds::symmetric(&[f, f]),
            None => ControlBounds::unbounded(2),
        }
    }

    fn contact_active(&self, x: &StateVec) -> bool {
        self.gap(x) <= 0.0
    }

    fn integrate(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        let dt = self.p.dt;
        let f_obj = self.contact_force(x);
        let mut next = x.clone();
        for axis in 0..2 {
            let acc_m = (u[axis] - f_obj[axis] - self.p.manipulator_damping * x[4 + axis])
                / self.p.manipulator_mass;
            next[4 + axis] = x[4 + axis] + dt * acc_m;
            next[6 + axis] = x[6 + axis] + dt * f_obj[axis] / self.p.object_mass;
            next[axis] = x[axis] + dt * next[4 + axis];
            next[2 + axis] = x[2 + axis] + dt * next[6 + axis];
        }
        next
    }
}
