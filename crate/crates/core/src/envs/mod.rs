//! Deterministic discrete-time dynamics and their linearization.

mod cartpole;
mod linear;
mod obstacle_arm;
mod pusher;

pub use cartpole::{CartpoleEnv, CartpoleParams};
pub use linear::LinearEnv;
pub use obstacle_arm::{Obstacle, ObstacleArmEnv, ObstacleArmParams};
pub use pusher::{PusherEnv, PusherParams};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{clamp_controls, ControlBounds, ControlVec, StateVec, Trajectory};

/// Default central-difference step.
pub const DEFAULT_FD_EPS: f64 = 1e-6;

/// A deterministic step function `x' = f(x, u)`.
///
/// Implementations must be pure: identical `(x, u)` yields a bit-identical
/// next state.
pub trait DynamicsModel: Send + Sync + std::fmt::Debug {
    /// Registered name used by configuration files and the CLI.
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> f64;

    /// Advances one step without validating the inputs.
    fn integrate(&self, x: &StateVec, u: &ControlVec) -> StateVec;

    /// Whether any declared collision pair touches or penetrates.
    fn contact_active(&self, _x: &StateVec) -> bool {
        false
    }

    fn control_bounds(&self) -> ControlBounds {
        ControlBounds::unbounded(self.control_dim())
    }

    /// Validated step: checks dimensions and finiteness of input and output.
    fn step(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("control", self.control_dim(), u.len())?;
        if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step input"));
        }
        let next = self.integrate(x, u);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step output"));
        }
        Ok(next)
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

/// Jacobians of one step: `A = ∂f/∂x`, `B = ∂f/∂u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Central finite-difference linearization of `env` at `(x, u)`.
///
/// When a state perturbation crosses a contact transition (one side in
/// contact, the other not) the one-sided difference on the nominal point's
/// side is used instead, so the derivative stays on the smooth branch.
pub fn linearize_fd(
    env: &dyn DynamicsModel,
    x: &StateVec,
    u: &ControlVec,
    eps: f64,
) -> Result<LinearizedDynamics> {
    if !(eps > 0.0) {
        return Err(Error::Config("finite-difference eps must be positive".into()));
    }
    let n_x = env.state_dim();
    let n_u = env.control_dim();
    let f0 = env.step(x, u)?;
    let contact0 = env.contact_active(x);

    let mut a = DMatrix::zeros(n_x, n_x);
    for i in 0..n_x {
        let mut xp = x.clone();
        xp[i] += eps;
        let mut xm = x.clone();
        xm[i] -= eps;
        let plus_ok = env.contact_active(&xp) == contact0;
        let minus_ok = env.contact_active(&xm) == contact0;
        let col = match (plus_ok, minus_ok) {
            (false, true) => (&f0 - env.step(&xm, u)?) / eps,
            (true, false) => (env.step(&xp, u)? - &f0) / eps,
            _ => (env.step(&xp, u)? - env.step(&xm, u)?) / (2.0 * eps),
        };
        a.set_column(i, &col);
    }

    let mut b = DMatrix::zeros(n_x, n_u);
    for j in 0..n_u {
        let mut up = u.clone();
        up[j] += eps;
        let mut um = u.clone();
        um[j] -= eps;
        let col = (env.step(x, &up)? - env.step(x, &um)?) / (2.0 * eps);
        b.set_column(j, &col);
    }

    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linearization"));
    }
    Ok(LinearizedDynamics { a, b })
}

/// Simulates `controls` from `x0`, clamping each control to `bounds`.
///
/// The returned trajectory stores the clamped controls, so
/// `states[t + 1] == f(states[t], controls[t])` holds exactly.
pub fn rollout(
    env: &dyn DynamicsModel,
    x0: &StateVec,
    controls: &[ControlVec],
    bounds: &ControlBounds,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut applied = Vec::with_capacity(controls.len());
    states.push(x0.clone());
    for u in controls {
        let u = clamp_controls(u, bounds);
        let next = env.step(states.last().unwrap(), &u)?;
        states.push(next);
        applied.push(u);
    }
    Ok(Trajectory {
        states,
        controls: applied,
    })
}

/// Builds a registered environment from its name and a parameter table.
pub fn build_env(name: &str, params: &toml::Table) -> Result<Box<dyn DynamicsModel>> {
    fn parse<T: serde::de::DeserializeOwned>(params: &toml::Table) -> Result<T> {
        params
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }
    Ok(match name {
        "cartpole" => Box::new(CartpoleEnv::new(parse(params)?)?),
        "obstacle_arm" => Box::new(ObstacleArmEnv::new(parse(params)?)?),
        "pusher" => Box::new(PusherEnv::new(parse(params)?)?),
        other => return Err(Error::UnknownEnv(other.to_string())),
    })
}

/// Names accepted by [`build_env`].
pub const ENV_NAMES: [&str; 3] = ["cartpole", "obstacle_arm", "pusher"];
