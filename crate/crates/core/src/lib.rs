//! Model predictive control with iLQG, MPPI and a combined
//! inference/second-order method for tasks with contact discontinuities.
//!
//! * [`envs`]: deterministic dynamics with finite-difference linearization.
//! * [`costs`]: quadratic cost plus binary contact indicator terms.
//! * [`ilqg`]: Gauss-Newton DDP with regularization and line search.
//! * [`sampler`]: importance-weighted KL-control updates.
//! * [`mpc`]: receding-horizon drivers and episode runner.

pub mod costs;
pub mod envs;
pub mod error;
pub mod ilqg;
pub mod mpc;
pub mod rng;
pub mod sampler;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    clamp_controls, shift_warm_start, ControlBounds, ControlVec, GaussianControlSequence, SolverConfig,
    StateVec, Trajectory,
};
