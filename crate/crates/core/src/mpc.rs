//! Receding-horizon drivers.
//!
//! Four drivers share one loop: the combined iLQG + KL-control method, plain
//! MPPI, plain iLQG, and the naive combination that hands the converged iLQG
//! plan to MPPI as its mean.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::costs::DualCost;
use crate::envs::DynamicsModel;
use crate::error::{Error, Result};
use crate::ilqg::{self, IlqgOptions};
use crate::rng::StreamKey;
use crate::sampler::{kl_control_step, kl_control_step_proposal, KlStep, Proposal, ReferencePolicy};
use crate::types::{shift_warm_start, ControlBounds, ControlVec, SolverConfig, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    /// iLQG reference + importance-sampled KL control.
    Ours,
    Mppi,
    Naive,
    Ilqg,
}

impl Driver {
    pub const ALL: [Driver; 4] = [Driver::Ours, Driver::Mppi, Driver::Naive, Driver::Ilqg];

    pub fn name(self) -> &'static str {
        match self {
            Driver::Ours => "ours",
            Driver::Mppi => "mppi",
            Driver::Naive => "naive",
            Driver::Ilqg => "ilqg",
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Driver::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown driver `{s}`")))
    }
}

/// Warm starts carried between MPC steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcState {
    pub u_kl: Vec<ControlVec>,
    pub u_ilqg: Vec<ControlVec>,
    pub step_index: u64,
}

impl MpcState {
    pub fn new(initial: Vec<ControlVec>) -> Self {
        Self {
            u_kl: initial.clone(),
            u_ilqg: initial,
            step_index: 0,
        }
    }

    pub fn zeros(horizon: usize, n_u: usize) -> Self {
        Self::new(vec![ControlVec::zeros(n_u); horizon])
    }
}

/// Problem description shared by every step of an episode.
#[derive(Debug, Clone, Copy)]
pub struct MpcProblem<'a> {
    pub env: &'a dyn DynamicsModel,
    pub cost: &'a DualCost,
    pub cfg: &'a SolverConfig,
    pub bounds: &'a ControlBounds,
}

impl<'a> MpcProblem<'a> {
    pub fn new(env: &'a dyn DynamicsModel, cost: &'a DualCost, cfg: &'a SolverConfig, bounds: &'a ControlBounds) -> Self {
        Self { env, cost, cfg, bounds }
    }

    fn ilqg_options(&self, iters: usize) -> IlqgOptions {
        IlqgOptions {
            bounds: Some(self.bounds.clone()),
            ..IlqgOptions::default()
        }
        .with_iters(iters)
    }

    fn stream(&self, state: &MpcState) -> StreamKey {
        StreamKey::new(self.cfg.seed, state.step_index)
    }
}

/// What one MPC step applied and how it got there.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub applied: ControlVec,
    /// The solver failed and the shifted previous plan was applied instead.
    pub fallback: bool,
    pub kl: Option<KlStep>,
}

fn advance(state: &mut MpcState, plan: Vec<ControlVec>) -> Result<ControlVec> {
    let applied = plan[0].clone();
    state.u_kl = shift_warm_start(&plan)?;
    state.u_ilqg = state.u_kl.clone();
    state.step_index += 1;
    Ok(applied)
}

fn combined_plan(p: &MpcProblem<'_>, state: &MpcState, x0: &StateVec) -> Result<KlStep> {
    let sol = ilqg::solve(p.env, p.cost, x0, &state.u_ilqg, &p.ilqg_options(p.cfg.ilqg_iters))?;
    let reference = ReferencePolicy::from_quu(sol.controls, &sol.quu, p.cfg.beta)?;
    let proposal = Proposal::split(state.u_kl.clone(), reference.means.clone(), p.cfg.n_samples, p.cfg.mixing_k);
    kl_control_step_proposal(p.env, p.cost, x0, &proposal, Some(&reference), p.cfg, p.stream(state), p.bounds)
}

fn mppi_plan(p: &MpcProblem<'_>, state: &MpcState, x0: &StateVec, means: &[ControlVec]) -> Result<KlStep> {
    let cfg = SolverConfig {
        mixing_k: 0.0,
        ..p.cfg.clone()
    };
    kl_control_step(p.env, p.cost, x0, means, None, &cfg, p.stream(state), p.bounds)
}

/// Runs one step of `driver`, updating the warm starts in `state`.
///
/// Solver failures fall back to the current warm start (the shifted previous
/// plan) and are flagged in the outcome.
pub fn mpc_step(driver: Driver, p: &MpcProblem<'_>, state: &mut MpcState, x0: &StateVec) -> Result<StepOutcome> {
    let planned: Result<(Vec<ControlVec>, Option<KlStep>)> = match driver {
        Driver::Ours => combined_plan(p, state, x0).map(|kl| (kl.controls.clone(), Some(kl))),
        Driver::Mppi => mppi_plan(p, state, x0, &state.u_kl).map(|kl| (kl.controls.clone(), Some(kl))),
        Driver::Ilqg => ilqg::solve(p.env, p.cost, x0, &state.u_ilqg, &p.ilqg_options(p.cfg.ilqg_iters))
            .map(|sol| (sol.controls, None)),
        Driver::Naive => ilqg::solve(p.env, p.cost, x0, &state.u_ilqg, &p.ilqg_options(p.cfg.convergence_iters))
            .and_then(|sol| mppi_plan(p, state, x0, &sol.controls))
            .map(|kl| (kl.controls.clone(), Some(kl))),
    };
    match planned {
        Ok((plan, kl)) => Ok(StepOutcome {
            applied: advance(state, plan)?,
            fallback: false,
            kl,
        }),
        Err(_) => {
            let plan = match driver {
                Driver::Ilqg | Driver::Naive => state.u_ilqg.clone(),
                Driver::Ours | Driver::Mppi => state.u_kl.clone(),
            };
            Ok(StepOutcome {
                applied: advance(state, plan)?,
                fallback: true,
                kl: None,
            })
        }
    }
}

/// One step of the combined method, returning the applied control and the
/// successor state.
pub fn mpc_step_combined(
    state: &MpcState,
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    cfg: &SolverConfig,
) -> Result<(ControlVec, MpcState)> {
    let bounds = env.control_bounds();
    let mut next = state.clone();
    let out = mpc_step(Driver::Ours, &MpcProblem::new(env, cost, cfg, &bounds), &mut next, x0)?;
    Ok((out.applied, next))
}

/// When an episode counts as solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessPredicate {
    /// Reference state for all error terms.
    pub goal: Vec<f64>,
    /// `‖x[i] - goal[i]‖₂` over these indices must be below `norm_tol`.
    pub norm_indices: Vec<usize>,
    pub norm_tol: Option<f64>,
    /// Each `(index, tol)` requires `|x[index] - goal[index]| < tol`.
    pub bands: Vec<(usize, f64)>,
    /// Consecutive satisfying states required, counting the initial state.
    pub hold_steps: usize,
    /// Any recorded contact makes the episode a failure.
    pub forbid_contact: bool,
}

impl Default for SuccessPredicate {
    fn default() -> Self {
        Self {
            goal: Vec::new(),
            norm_indices: Vec::new(),
            norm_tol: None,
            bands: Vec::new(),
            hold_steps: 1,
            forbid_contact: false,
        }
    }
}

impl SuccessPredicate {
    pub fn validate(&self, n_x: usize) -> Result<()> {
        if self.goal.len() != n_x {
            return Err(Error::Dimension {
                what: "success goal",
                expected: n_x,
                got: self.goal.len(),
            });
        }
        let bad = self.norm_indices.iter().chain(self.bands.iter().map(|(i, _)| i)).any(|&i| i >= n_x);
        if bad {
            return Err(Error::Config("success predicate index out of range".into()));
        }
        if self.norm_tol.is_none() && self.bands.is_empty() {
            return Err(Error::Config("success predicate has no condition".into()));
        }
        Ok(())
    }

    /// Whether `x` alone satisfies the state conditions.
    pub fn holds_at(&self, x: &StateVec) -> bool {
        let bands_ok = self.bands.iter().all(|&(i, tol)| (x[i] - self.goal[i]).abs() < tol);
        let norm_ok = self.norm_tol.is_none_or(|tol| {
            let sq: f64 = self.norm_indices.iter().map(|&i| (x[i] - self.goal[i]).powi(2)).sum();
            sq.sqrt() < tol
        });
        bands_ok && norm_ok
    }
}

/// Everything applied during an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    /// `steps_used + 1` states.
    pub states: Vec<StateVec>,
    pub controls: Vec<ControlVec>,
    /// Full-channel running cost of each applied step.
    pub running_costs: Vec<f64>,
    /// Contact flag of each pre-step state.
    pub contact_flags: Vec<bool>,
    pub fallbacks: Vec<bool>,
    pub terminal_cost: f64,
}

impl EpisodeLog {
    /// Recomputes the episode cost from the logged states and controls.
    pub fn recompute_cost(&self, env: &dyn DynamicsModel, cost: &DualCost) -> f64 {
        let running: f64 = self
            .states
            .iter()
            .zip(&self.controls)
            .map(|(x, u)| cost.running_cost_full(env, x, u))
            .sum();
        running + cost.terminal_cost(self.states.last().expect("log has the initial state"))
    }

    /// CSV with columns `step, x0.., u0.., running_cost, contact_flag`.
    /// The final row carries the terminal state with empty controls.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n_x = self.states.first().map_or(0, |x| x.len());
        let n_u = self.controls.first().map_or(0, |u| u.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..n_x).map(|i| format!("x{i}")));
        header.extend((0..n_u).map(|i| format!("u{i}")));
        header.push("running_cost".into());
        header.push("contact_flag".into());
        w.write_record(&header)?;
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            match self.controls.get(t) {
                Some(u) => {
                    row.extend(u.iter().map(f64::to_string));
                    row.push(self.running_costs[t].to_string());
                    row.push(u8::from(self.contact_flags[t]).to_string());
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), n_u));
                    row.push(self.terminal_cost.to_string());
                    row.push(String::new());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Full-channel running costs of the applied steps plus the terminal cost.
    pub total_cost: f64,
    pub success: bool,
    pub steps_used: usize,
    pub wall_time_s: f64,
    /// Steps on which the solver failed and the previous plan was applied.
    pub fallback_steps: usize,
}

impl EpisodeResult {
    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Runs `driver` from `x0` until `predicate` holds or `max_steps` elapse.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    driver: Driver,
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    cfg: &SolverConfig,
    max_steps: usize,
    predicate: &SuccessPredicate,
    initial_controls: Option<Vec<ControlVec>>,
) -> Result<(EpisodeResult, EpisodeLog)> {
    if max_steps < 1 {
        return Err(Error::Config("max_steps must be >= 1".into()));
    }
    cfg.validate()?;
    predicate.validate(env.state_dim())?;
    let bounds = env.control_bounds();
    let problem = MpcProblem::new(env, cost, cfg, &bounds);
    let mut state = match initial_controls {
        Some(u) => MpcState::new(u),
        None => MpcState::zeros(cfg.horizon_steps, env.control_dim()),
    };

    let started = Instant::now();
    let mut log = EpisodeLog {
        states: vec![x0.clone()],
        ..Default::default()
    };
    let mut x = x0.clone();
    let mut contact_seen = predicate.forbid_contact && env.contact_active(&x);
    let mut streak = usize::from(predicate.holds_at(&x));
    let mut success = !contact_seen && streak >= predicate.hold_steps;

    while !success && !contact_seen && log.controls.len() < max_steps {
        let out = mpc_step(driver, &problem, &mut state, &x)?;
        let running = cost.running_cost_full(env, &x, &out.applied);
        let next = match env.step(&x, &out.applied) {
            Ok(n) => n,
            Err(_) => break,
        };
        log.contact_flags.push(env.contact_active(&x));
        log.running_costs.push(running);
        log.controls.push(out.applied);
        log.fallbacks.push(out.fallback);
        log.states.push(next.clone());
        x = next;

        if predicate.forbid_contact && env.contact_active(&x) {
            contact_seen = true;
        }
        streak = if predicate.holds_at(&x) { streak + 1 } else { 0 };
        success = !contact_seen && streak >= predicate.hold_steps;
    }

    log.terminal_cost = cost.terminal_cost(&x);
    let total_cost = log.running_costs.iter().sum::<f64>() + log.terminal_cost;
    let result = EpisodeResult {
        total_cost,
        success,
        steps_used: log.controls.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
        fallback_steps: log.fallbacks.iter().filter(|&&f| f).count(),
    };
    Ok((result, log))
}
