use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::DynamicsModel;
use crate::error::{Error, Result};
use crate::types::{ControlBounds, ControlVec, StateVec};

/// Circular obstacle in the arm's plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    /// m
    pub center: [f64; 2],
    /// m
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleArmParams {
    /// m, base to tip
    pub link_lengths: [f64; 3],
    /// Capsule radius of every link, m.
    pub link_radius: f64,
    /// Effective inertia per joint, kg·m².
    pub joint_inertia: [f64; 3],
    /// Viscous joint damping, N·m·s/rad.
    pub joint_damping: f64,
    pub dt: f64,
    pub torque_limit: Option<[f64; 3]>,
    pub obstacles: Vec<Obstacle>,
}

impl Default for ObstacleArmParams {
    fn default() -> Self {
        Self {
            link_lengths: [0.5, 0.4, 0.3],
            link_radius: 0.03,
            joint_inertia: [1.0, 0.5, 0.25],
            joint_damping: 0.5,
            dt: 0.01,
            torque_limit: None,
            obstacles: vec![Obstacle {
                center: [0.6, 0.6],
                radius: 0.12,
            }],
        }
    }
}

/// Planar 3-link arm with state `(q1, q2, q3, q̇1, q̇2, q̇3)` and joint
/// torques as controls.
///
/// Each joint is an independently actuated damped rotor. Obstacles do not
/// push back on the arm; they only register contact.
#[derive(Debug, Clone, Default)]
pub struct ObstacleArmEnv {
    p: ObstacleArmParams,
}

/// Squared distance from `p` to segment `ab`.
fn segment_distance_sq(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq > 0.0 {
        ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - p).norm_squared()
}

impl ObstacleArmEnv {
    pub fn new(p: ObstacleArmParams) -> Result<Self> {
        if p.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return Err(Error::Config("obstacle radii must be positive".into()));
        }
        if p.joint_inertia.iter().any(|&i| !(i > 0.0)) || !(p.dt > 0.0) || p.link_radius < 0.0 {
            return Err(Error::Config("arm inertia and dt must be positive".into()));
        }
        Ok(Self { p })
    }

    pub fn params(&self) -> &ObstacleArmParams {
        &self.p
    }

    /// Base, elbow, wrist and tip positions.
    pub fn joint_positions(&self, x: &StateVec) -> [Vector2<f64>; 4] {
        let mut pts = [Vector2::zeros(); 4];
        let mut phi = 0.0;
        for i in 0..3 {
            phi += x[i];
            pts[i + 1] = pts[i] + self.p.link_lengths[i] * Vector2::new(phi.cos(), phi.sin());
        }
        pts
    }

    pub fn end_effector(&self, x: &StateVec) -> Vector2<f64> {
        self.joint_positions(x)[3]
    }

    /// Smallest signed clearance between any link capsule and any obstacle.
    pub fn clearance(&self, x: &StateVec) -> f64 {
        let pts = self.joint_positions(x);
        let mut best = f64::INFINITY;
        for o in &self.p.obstacles {
            let c = Vector2::new(o.center[0], o.center[1]);
            for i in 0..3 {
                let d = segment_distance_sq(c, pts[i], pts[i + 1]).sqrt();
                best = best.min(d - o.radius - self.p.link_radius);
            }
        }
        best
    }
}

impl DynamicsModel for ObstacleArmEnv {
    fn name(&self) -> &'static str {
        "obstacle_arm"
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn control_dim(&self) -> usize {
        3
    }

    fn dt(&self) -> f64 {
        self.p.dt
    }

    fn control_bounds(&self) -> ControlBounds {
        match self.p.torque_limit {
            Some(lim) => ControlBounds::symmetric(&lim),
            None => ControlBounds::unbounded(3),
        }
    }

    fn contact_active(&self, x: &StateVec) -> bool {
        self.clearance(x) <= 0.0
    }

    fn integrate(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        let dt = self.p.dt;
        let mut next = DVector::zeros(6);
        for i in 0..3 {
            let acc = (u[i] - self.p.joint_damping * x[i + 3]) / self.p.joint_inertia[i];
            let w = x[i + 3] + dt * acc;
            next[i + 3] = w;
            next[i] = x[i] + dt * w;
        }
        next
    }
}
