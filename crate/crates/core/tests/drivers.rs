mod common;

use std::f64::consts::PI;

use mpcmix::costs::{DualCost, IndicatorCost, QuadraticCost};
use mpcmix::envs::{CartpoleEnv, CartpoleParams, DynamicsModel, LinearEnv, ObstacleArmEnv, PusherEnv};
use mpcmix::ilqg::{solve, IlqgOptions};
use mpcmix::mpc::{mpc_step, run_episode, Driver, MpcProblem, MpcState, SuccessPredicate};
use mpcmix::{SolverConfig, StateVec};
use nalgebra::{DMatrix, DVector};

fn swing_cfg() -> SolverConfig {
    SolverConfig {
        horizon_steps: 30,
        n_samples: 8,
        lambda: 0.1,
        beta: 1e-3,
        ilqg_iters: 3,
        seed: 9,
        ..SolverConfig::default()
    }
}

fn hanging() -> StateVec {
    DVector::from_column_slice(&[0.0, PI, 0.0, 0.0])
}

/// Never satisfied, so episodes always run to `max_steps`.
fn unreachable(n_x: usize) -> SuccessPredicate {
    SuccessPredicate {
        goal: vec![0.0; n_x],
        bands: vec![(0, 0.0)],
        ..SuccessPredicate::default()
    }
}

#[test]
fn zero_mixing_reproduces_mppi_bit_for_bit() {
    let env = CartpoleEnv::default();
    let cost = common::cartpole_cost();
    let cfg = SolverConfig {
        mixing_k: 0.0,
        beta: 123.0,
        ..swing_cfg()
    };
    let (_, ours) = run_episode(Driver::Ours, &env, &cost, &hanging(), &cfg, 40, &unreachable(4), None).unwrap();
    let (_, mppi) = run_episode(Driver::Mppi, &env, &cost, &hanging(), &cfg, 40, &unreachable(4), None).unwrap();
    assert_eq!(ours.controls, mppi.controls);
    assert_eq!(ours.states, mppi.states);
}

#[test]
fn single_tight_sample_tracks_ilqg() {
    let env = CartpoleEnv::new(CartpoleParams {
        force_limit: Some(50.0),
        ..CartpoleParams::default()
    })
    .unwrap();
    let cost = common::cartpole_cost();
    let cfg = SolverConfig {
        n_samples: 1,
        mixing_k: 1.0,
        beta: 1e-6,
        sigma: DMatrix::from_element(1, 1, 1e-10),
        ..swing_cfg()
    };
    let bounds = env.control_bounds();
    let p = MpcProblem::new(&env, &cost, &cfg, &bounds);
    let mut state = MpcState::zeros(cfg.horizon_steps, 1);
    let mut x = hanging();
    for step in 0..100 {
        let opts = IlqgOptions {
            bounds: Some(bounds.clone()),
            ..IlqgOptions::default()
        }
        .with_iters(cfg.ilqg_iters);
        let reference = solve(&env, &cost, &x, &state.u_ilqg, &opts).unwrap().controls[0][0];
        let out = mpc_step(Driver::Ours, &p, &mut state, &x).unwrap();
        assert!((out.applied[0] - reference).abs() <= 1e-3, "step {step}");
        x = env.step(&x, &out.applied).unwrap();
    }
}

fn with_indicator(cost: &DualCost, indicator: Option<IndicatorCost>) -> DualCost {
    let mut c = cost.clone();
    c.indicator = indicator;
    c
}

#[test]
fn indicator_never_reaches_ilqg() {
    let smooth = |n_x: usize, n_u: usize| {
        DualCost::new(
            QuadraticCost::new(
                DVector::from_element(n_x, 0.3),
                DVector::from_element(n_x, 2.0),
                DVector::from_element(n_x, 5.0),
                DMatrix::identity(n_u, n_u) * 0.01,
            )
            .unwrap(),
        )
        .with_running_scale(0.01)
    };
    let envs: Vec<Box<dyn DynamicsModel>> = vec![
        Box::new(CartpoleEnv::default()),
        Box::new(ObstacleArmEnv::default()),
        Box::new(PusherEnv::default()),
    ];
    for env in envs {
        let base = smooth(env.state_dim(), env.control_dim());
        let x0 = DVector::from_element(env.state_dim(), 0.1);
        let u0 = vec![DVector::from_element(env.control_dim(), 0.2); 25];
        let opts = IlqgOptions::default().with_iters(5);
        let reference = solve(env.as_ref(), &base, &x0, &u0, &opts).unwrap();
        for ind in [
            Some(IndicatorCost::encourage(1.0)),
            Some(IndicatorCost::encourage(1e3)),
            Some(IndicatorCost::discourage(1e4)),
            Some(IndicatorCost::discourage(7.0)),
        ] {
            let other = solve(env.as_ref(), &with_indicator(&base, ind), &x0, &u0, &opts).unwrap();
            assert_eq!(other, reference, "{}", env.name());
        }
    }
}

#[test]
fn episode_cost_matches_log() {
    let env = CartpoleEnv::default();
    let cost = common::cartpole_cost();
    for driver in Driver::ALL {
        let cfg = SolverConfig {
            convergence_iters: 5,
            ..swing_cfg()
        };
        let (res, log) = run_episode(driver, &env, &cost, &hanging(), &cfg, 25, &unreachable(4), None).unwrap();
        let again = log.recompute_cost(&env, &cost);
        assert!((res.total_cost - again).abs() <= 1e-9 * again.abs().max(1.0), "{driver}");
        assert_eq!(res.steps_used, 25);
        assert_eq!(log.states.len(), 26);
        assert!(res.total_cost >= 0.0);
    }
}

#[test]
fn resting_at_goal_needs_no_effort() {
    let env = CartpoleEnv::default();
    let cost = common::cartpole_cost();
    let cfg = SolverConfig {
        sigma: DMatrix::from_element(1, 1, 1e-8),
        ..swing_cfg()
    };
    let goal = DVector::zeros(4);
    let (_, log) = run_episode(Driver::Ours, &env, &cost, &goal, &cfg, 20, &unreachable(4), None).unwrap();
    assert!(log.controls.iter().all(|u| u[0].abs() < 1e-3));
    assert!(log.states.last().unwrap().amax() < 1e-4);
}

fn damped_lq() -> (LinearEnv, DualCost, StateVec) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.95]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
    let cost = DualCost::new(
        QuadraticCost::new(
            DVector::zeros(2),
            DVector::from_column_slice(&[1.0, 0.1]),
            DVector::from_column_slice(&[10.0, 1.0]),
            DMatrix::from_element(1, 1, 0.1),
        )
        .unwrap(),
    );
    (LinearEnv::new(a, b, 0.1).unwrap(), cost, DVector::from_column_slice(&[1.0, 0.0]))
}

#[test]
fn naive_combination_is_no_better_than_ilqg_on_lqr() {
    let (env, cost, x0) = damped_lq();
    for seed in 0..5 {
        let cfg = SolverConfig {
            horizon_steps: 20,
            n_samples: 10,
            lambda: 1.0,
            ilqg_iters: 20,
            convergence_iters: 20,
            seed,
            ..SolverConfig::default()
        };
        let (naive, _) = run_episode(Driver::Naive, &env, &cost, &x0, &cfg, 30, &unreachable(2), None).unwrap();
        let (ilqg, _) = run_episode(Driver::Ilqg, &env, &cost, &x0, &cfg, 30, &unreachable(2), None).unwrap();
        assert!(naive.total_cost >= ilqg.total_cost, "seed {seed}");
    }
}

#[test]
fn naive_combination_collapses_to_ilqg_without_noise() {
    let (env, cost, x0) = damped_lq();
    let cfg = SolverConfig {
        horizon_steps: 20,
        n_samples: 5,
        ilqg_iters: 20,
        convergence_iters: 20,
        sigma: DMatrix::from_element(1, 1, 1e-14),
        ..SolverConfig::default()
    };
    let (_, naive) = run_episode(Driver::Naive, &env, &cost, &x0, &cfg, 30, &unreachable(2), None).unwrap();
    let (_, ilqg) = run_episode(Driver::Ilqg, &env, &cost, &x0, &cfg, 30, &unreachable(2), None).unwrap();
    for (a, b) in naive.controls.iter().zip(&ilqg.controls) {
        assert!((a - b).amax() < 1e-5);
    }
}
