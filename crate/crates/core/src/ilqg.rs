//! Iterative LQG (Gauss-Newton DDP).
//!
//! The backward pass expands the Q-function around a nominal trajectory using
//! finite-difference dynamics Jacobians and exact quadratic cost derivatives;
//! second-order dynamics terms are dropped. Regularization adds `mu·I` to the
//! next-step value Hessian inside `Q_uu` and `Q_ux`. The forward pass applies
//! `u = ū + α k + K (x - x̄)` with a backtracking line search on `α`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::costs::DualCost;
use crate::envs::{linearize_fd, rollout, DynamicsModel, LinearizedDynamics, DEFAULT_FD_EPS};
use crate::error::{Error, Result};
use crate::types::{cholesky, clamp_controls, ControlBounds, ControlVec, StateVec, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct IlqgOptions {
    pub max_iters: usize,
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Factor applied to `mu` after a failed backward pass or line search.
    pub mu_increase: f64,
    /// Divisor applied to `mu` after an accepted step.
    pub mu_decrease: f64,
    /// Stop once the relative cost decrease of an accepted step falls below this.
    pub rel_tol: f64,
    /// Stop once `max_t ‖k_t‖` falls below this.
    pub grad_tol: f64,
    /// Line search tries `α = 1, 1/2, …, 2^-max_backtracks`.
    pub max_backtracks: u32,
    pub fd_eps: f64,
    pub bounds: Option<ControlBounds>,
}

impl Default for IlqgOptions {
    fn default() -> Self {
        Self {
            max_iters: 10,
            mu_init: 1e-6,
            mu_min: 1e-9,
            mu_max: 1e9,
            mu_increase: 10.0,
            mu_decrease: 5.0,
            rel_tol: 1e-7,
            grad_tol: 1e-6,
            max_backtracks: 10,
            fd_eps: DEFAULT_FD_EPS,
            bounds: None,
        }
    }
}

impl IlqgOptions {
    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    fn bounds_for(&self, env: &dyn DynamicsModel) -> ControlBounds {
        self.bounds.clone().unwrap_or_else(|| env.control_bounds())
    }
}

/// Blocks of the local quadratic model of the Q-function at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct QExpansion {
    pub q_x: DVector<f64>,
    pub q_u: DVector<f64>,
    pub q_xx: DMatrix<f64>,
    pub q_uu: DMatrix<f64>,
    pub q_ux: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    /// `k_t = -Q̃_uu⁻¹ Q_u`
    pub feedforward: Vec<DVector<f64>>,
    /// `K_t = -Q̃_uu⁻¹ Q̃_ux`
    pub feedback: Vec<DMatrix<f64>>,
}

impl Gains {
    /// `max_t ‖k_t‖`, the stopping proxy for the control gradient.
    pub fn max_feedforward_norm(&self) -> f64 {
        self.feedforward.iter().map(|k| k.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPass {
    pub gains: Gains,
    /// Unregularized expansions.
    pub expansions: Vec<QExpansion>,
    /// Regularized `Q̃_uu = l_uu + Bᵀ(V'_xx + mu I)B`, positive-definite.
    pub quu: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackwardOutcome {
    Solved(BackwardPass),
    /// `Q̃_uu` was not positive-definite at this step; raise `mu` and retry.
    Diverged { step: usize },
}

/// Linearizes the dynamics along every step of `nominal`.
pub fn linearize_trajectory(
    env: &dyn DynamicsModel,
    nominal: &Trajectory,
    eps: f64,
) -> Result<Vec<LinearizedDynamics>> {
    nominal
        .states
        .iter()
        .zip(&nominal.controls)
        .map(|(x, u)| linearize_fd(env, x, u, eps))
        .collect()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Backward recursion from the terminal cost using precomputed Jacobians.
pub fn backward_pass_linearized(
    cost: &DualCost,
    nominal: &Trajectory,
    lin: &[LinearizedDynamics],
    mu: f64,
) -> BackwardOutcome {
    let horizon = nominal.horizon();
    let term = cost.quadratize_terminal(nominal.final_state());
    let mut v_x = term.l_x;
    let mut v_xx = term.l_xx;

    let mut feedforward = vec![DVector::zeros(0); horizon];
    let mut feedback = vec![DMatrix::zeros(0, 0); horizon];
    let mut expansions = Vec::with_capacity(horizon);
    let mut quu_reg = vec![DMatrix::zeros(0, 0); horizon];

    for t in (0..horizon).rev() {
        let l = cost.quadratize(&nominal.states[t], &nominal.controls[t]);
        let LinearizedDynamics { a, b } = &lin[t];
        let at = a.transpose();
        let bt = b.transpose();
        let bt_vxx = &bt * &v_xx;

        let q_x = &l.l_x + &at * &v_x;
        let q_u = &l.l_u + &bt * &v_x;
        let q_xx = &l.l_xx + &at * &v_xx * a;
        let q_uu = &l.l_uu + &bt_vxx * b;
        let q_ux = &l.l_ux + &bt_vxx * a;

        let q_uu_reg = symmetrize(&(&q_uu + &bt * b * mu));
        let q_ux_reg = &q_ux + &bt * a * mu;
        let Ok(chol) = cholesky(&q_uu_reg, "Q_uu") else {
            return BackwardOutcome::Diverged { step: t };
        };
        let k = -chol.solve(&q_u);
        let big_k = -chol.solve(&q_ux_reg);

        let kt = big_k.transpose();
        v_x = &q_x + &kt * &q_uu * &k + &kt * &q_u + q_ux.transpose() * &k;
        v_xx = symmetrize(&(&q_xx + &kt * &q_uu * &big_k + &kt * &q_ux + q_ux.transpose() * &big_k));

        feedforward[t] = k;
        feedback[t] = big_k;
        quu_reg[t] = q_uu_reg;
        expansions.push(QExpansion {
            q_x,
            q_u,
            q_xx,
            q_uu,
            q_ux,
        });
    }
    expansions.reverse();
    BackwardOutcome::Solved(BackwardPass {
        gains: Gains {
            feedforward,
            feedback,
        },
        expansions,
        quu: quu_reg,
    })
}

/// Linearizes around `nominal` and runs the backward recursion.
pub fn backward_pass(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    nominal: &Trajectory,
    mu: f64,
) -> Result<BackwardOutcome> {
    let lin = linearize_trajectory(env, nominal, DEFAULT_FD_EPS)?;
    Ok(backward_pass_linearized(cost, nominal, &lin, mu))
}

/// Rolls out the updated policy and returns it with its smooth-channel cost.
pub fn forward_pass(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    nominal: &Trajectory,
    gains: &Gains,
    alpha: f64,
    bounds: &ControlBounds,
) -> Result<(Trajectory, f64)> {
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(nominal.initial_state().clone());
    for t in 0..horizon {
        let x = &states[t];
        let dx = x - &nominal.states[t];
        let u = &nominal.controls[t] + &gains.feedforward[t] * alpha + &gains.feedback[t] * dx;
        let u = clamp_controls(&u, bounds);
        let next = env.step(x, &u)?;
        controls.push(u);
        states.push(next);
    }
    let traj = Trajectory { states, controls };
    let total = cost.trajectory_cost_smooth(&traj);
    if !total.is_finite() {
        return Err(Error::NonFinite("forward pass cost"));
    }
    Ok((traj, total))
}

/// One row of the optional iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub mu: f64,
    /// Accepted step size, 0 when the iteration was rejected.
    pub alpha: f64,
}

pub fn write_trace_csv<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "cost", "mu", "alpha"])?;
    for r in records {
        w.write_record(&[
            r.iter.to_string(),
            r.cost.to_string(),
            r.mu.to_string(),
            r.alpha.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqgSolution {
    pub controls: Vec<ControlVec>,
    pub nominal_states: Vec<StateVec>,
    pub feedforward: Vec<DVector<f64>>,
    pub feedback: Vec<DMatrix<f64>>,
    /// Regularized `Q_uu` at the returned trajectory.
    pub quu: Vec<DMatrix<f64>>,
    /// Smooth-channel cost of the returned trajectory.
    pub total_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

impl IlqgSolution {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.nominal_states.clone(),
            controls: self.controls.clone(),
        }
    }
}

/// Backward pass at `nominal`, raising `mu` until `Q̃_uu` is positive-definite.
fn regularized_backward(
    cost: &DualCost,
    nominal: &Trajectory,
    lin: &[LinearizedDynamics],
    mu: &mut f64,
    opts: &IlqgOptions,
) -> Option<BackwardPass> {
    loop {
        match backward_pass_linearized(cost, nominal, lin, *mu) {
            BackwardOutcome::Solved(bp) => return Some(bp),
            BackwardOutcome::Diverged { .. } => {
                *mu = (*mu * opts.mu_increase).max(opts.mu_min);
                if *mu > opts.mu_max {
                    return None;
                }
            }
        }
    }
}

/// Optimizes `u_init` from `x0` on the smooth cost channel.
///
/// Accepted iterations never increase the cost. If no step size improves the
/// cost and `mu` exceeds its maximum, the best trajectory so far is returned
/// with `converged = false`.
pub fn solve(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    u_init: &[ControlVec],
    opts: &IlqgOptions,
) -> Result<IlqgSolution> {
    if u_init.is_empty() {
        return Err(Error::EmptySequence);
    }
    let bounds = opts.bounds_for(env);
    let mut nominal = rollout(env, x0, u_init, &bounds)?;
    let mut current = cost.trajectory_cost_smooth(&nominal);
    if !current.is_finite() {
        return Err(Error::NonFinite("initial cost"));
    }
    let mut mu = opts.mu_init;
    let mut converged = false;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut lin = linearize_trajectory(env, &nominal, opts.fd_eps)?;

    'outer: for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let Some(bp) = regularized_backward(cost, &nominal, &lin, &mut mu, opts) else {
            break;
        };
        if bp.gains.max_feedforward_norm() < opts.grad_tol {
            converged = true;
            trace.push(IterationRecord {
                iter,
                cost: current,
                mu,
                alpha: 0.0,
            });
            break;
        }

        let mut accepted = None;
        for i in 0..=opts.max_backtracks {
            let alpha = 0.5f64.powi(i as i32);
            if let Ok((traj, new_cost)) = forward_pass(env, cost, &nominal, &bp.gains, alpha, &bounds) {
                if new_cost < current {
                    accepted = Some((traj, new_cost, alpha));
                    break;
                }
            }
        }

        match accepted {
            Some((traj, new_cost, alpha)) => {
                let rel = (current - new_cost) / current.abs().max(f64::MIN_POSITIVE);
                nominal = traj;
                current = new_cost;
                mu = (mu / opts.mu_decrease).max(opts.mu_min);
                trace.push(IterationRecord {
                    iter,
                    cost: current,
                    mu,
                    alpha,
                });
                lin = linearize_trajectory(env, &nominal, opts.fd_eps)?;
                if rel < opts.rel_tol {
                    converged = true;
                    break 'outer;
                }
            }
            None => {
                mu *= opts.mu_increase;
                trace.push(IterationRecord {
                    iter,
                    cost: current,
                    mu,
                    alpha: 0.0,
                });
                if mu > opts.mu_max {
                    break;
                }
            }
        }
    }

    // Gains and Q_uu at the returned trajectory.
    let mut final_mu = mu.min(opts.mu_max);
    let bp = regularized_backward(cost, &nominal, &lin, &mut final_mu, opts)
        .ok_or(Error::NotPositiveDefinite("Q_uu"))?;
    Ok(IlqgSolution {
        controls: nominal.controls,
        nominal_states: nominal.states,
        feedforward: bp.gains.feedforward,
        feedback: bp.gains.feedback,
        quu: bp.quu,
        total_cost: current,
        converged,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::QuadraticCost;
    use crate::envs::LinearEnv;

    fn scalar_problem() -> (LinearEnv, DualCost) {
        let env = LinearEnv::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0), 1.0)
            .unwrap();
        let cost = DualCost::new(
            QuadraticCost::new(
                DVector::zeros(1),
                DVector::from_element(1, 1.0),
                DVector::from_element(1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            )
            .unwrap(),
        );
        (env, cost)
    }

    #[test]
    fn zero_cost_gains_come_from_regularization_only() {
        let env = LinearEnv::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 1.0).unwrap();
        let cost = DualCost::new(
            QuadraticCost::new(
                DVector::zeros(2),
                DVector::zeros(2),
                DVector::zeros(2),
                DMatrix::zeros(2, 2),
            )
            .unwrap(),
        );
        let nominal = rollout(
            &env,
            &DVector::from_element(2, 1.0),
            &vec![DVector::zeros(2); 3],
            &ControlBounds::unbounded(2),
        )
        .unwrap();
        let BackwardOutcome::Solved(bp) = backward_pass(&env, &cost, &nominal, 1e-6).unwrap() else {
            panic!("diverged");
        };
        // Q_uu = μI and Q_ux = μA, so K = -A exactly and k = 0.
        assert!(bp.gains.max_feedforward_norm() == 0.0);
        for k in &bp.gains.feedback {
            assert!((k + DMatrix::<f64>::identity(2, 2)).amax() < 1e-9);
        }
    }

    #[test]
    fn static_problem_collapses_to_newton_step() {
        // A = 0, B = I, only control cost: Q_uu = l_uu and k = -l_uu⁻¹ l_u.
        let env = LinearEnv::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 1.0).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cost = DualCost::new(
            QuadraticCost::new(DVector::zeros(2), DVector::zeros(2), DVector::zeros(2), r.clone()).unwrap(),
        );
        let u = DVector::from_column_slice(&[1.0, -2.0]);
        let nominal = rollout(&env, &DVector::zeros(2), &[u.clone()], &ControlBounds::unbounded(2)).unwrap();
        let BackwardOutcome::Solved(bp) = backward_pass(&env, &cost, &nominal, 0.0).unwrap() else {
            panic!("diverged");
        };
        let l = cost.quadratize(&nominal.states[0], &u);
        assert!((&bp.expansions[0].q_uu - &l.l_uu).amax() < 1e-12);
        let expected = -l.l_uu.clone().try_inverse().unwrap() * &l.l_u;
        assert!((&bp.gains.feedforward[0] - expected).amax() < 1e-12);
    }

    #[test]
    fn indefinite_quu_reports_divergence() {
        let (env, mut cost) = scalar_problem();
        cost.smooth.r = DMatrix::from_element(1, 1, -5.0);
        cost.smooth.q_term = DVector::zeros(1);
        let nominal = rollout(&env, &DVector::zeros(1), &[DVector::zeros(1)], &ControlBounds::unbounded(1)).unwrap();
        assert_eq!(
            backward_pass(&env, &cost, &nominal, 0.0).unwrap(),
            BackwardOutcome::Diverged { step: 0 }
        );
    }

    #[test]
    fn zero_step_reproduces_nominal() {
        let (env, cost) = scalar_problem();
        let nominal = rollout(
            &env,
            &DVector::from_element(1, 2.0),
            &vec![DVector::from_element(1, 0.3); 4],
            &ControlBounds::unbounded(1),
        )
        .unwrap();
        let BackwardOutcome::Solved(bp) = backward_pass(&env, &cost, &nominal, 1e-6).unwrap() else {
            panic!("diverged");
        };
        let (traj, c) = forward_pass(&env, &cost, &nominal, &bp.gains, 0.0, &ControlBounds::unbounded(1)).unwrap();
        assert_eq!(traj, nominal);
        assert_eq!(c, cost.trajectory_cost_smooth(&nominal));
    }

    #[test]
    fn feedforward_shrinks_with_regularization() {
        let (env, cost) = scalar_problem();
        let nominal = rollout(
            &env,
            &DVector::from_element(1, 3.0),
            &vec![DVector::zeros(1); 5],
            &ControlBounds::unbounded(1),
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for mu in [1e-6, 1e-3, 1.0, 1e2, 1e4, 1e6] {
            let BackwardOutcome::Solved(bp) = backward_pass(&env, &cost, &nominal, mu).unwrap() else {
                panic!("diverged");
            };
            let norm = bp.gains.max_feedforward_norm();
            assert!(norm < last, "mu={mu}: {norm} !< {last}");
            last = norm;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn empty_init_is_rejected() {
        let (env, cost) = scalar_problem();
        assert!(matches!(
            solve(&env, &cost, &DVector::zeros(1), &[], &IlqgOptions::default()),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn trace_csv_has_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &[IterationRecord {
                iter: 0,
                cost: 2.5,
                mu: 1e-6,
                alpha: 1.0,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("iter,cost,mu,alpha"));
        assert_eq!(text.lines().count(), 2);
    }
}
