mod common;

use std::f64::consts::PI;

use mpcmix::envs::{
    linearize_fd, rollout, CartpoleEnv, DynamicsModel, Obstacle, ObstacleArmEnv, ObstacleArmParams, PusherEnv,
};
use mpcmix::{ControlBounds, StateVec};
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn cartpole_energy_is_nearly_conserved() {
    let env = CartpoleEnv::default();
    let mut x = DVector::from_column_slice(&[0.0, PI - 0.5, 0.0, 0.0]);
    let e0 = env.energy(&x);
    let u = DVector::zeros(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        x = env.step(&x, &u).unwrap();
        worst = worst.max((env.energy(&x) - e0).abs());
    }
    assert!(worst <= 0.01 * e0.abs(), "drift {worst} of {e0}");
}

fn envs() -> Vec<Box<dyn DynamicsModel>> {
    vec![
        Box::new(CartpoleEnv::default()),
        Box::new(ObstacleArmEnv::default()),
        Box::new(PusherEnv::default()),
    ]
}

#[test]
fn rollouts_are_bit_identical() {
    let mut r = common::rng(8);
    for env in envs() {
        let x0 = common::randn_vec(&mut r, env.state_dim()) * 0.2;
        let controls: Vec<_> = (0..50).map(|_| common::randn_vec(&mut r, env.control_dim())).collect();
        let unb = ControlBounds::unbounded(env.control_dim());
        let a = rollout(env.as_ref(), &x0, &controls, &unb).unwrap();
        let b = rollout(env.as_ref(), &x0, &controls, &unb).unwrap();
        assert_eq!(a, b, "{}", env.name());
    }
}

#[test]
fn arm_contact_follows_geometry() {
    let env = ObstacleArmEnv::new(ObstacleArmParams {
        obstacles: vec![Obstacle {
            center: [0.0, 0.8],
            radius: 0.1,
        }],
        ..ObstacleArmParams::default()
    })
    .unwrap();
    let along_x = DVector::zeros(6);
    assert!(!env.contact_active(&along_x));
    let mut up = DVector::zeros(6);
    up[0] = PI / 2.0;
    assert!(env.contact_active(&up));
}

fn pusher_state() -> impl Strategy<Value = StateVec> {
    (
        prop::array::uniform2(-0.5f64..0.5),
        prop::array::uniform2(-0.5f64..0.5),
        prop::array::uniform4(-2.0f64..2.0),
    )
        .prop_map(|(m, o, v)| DVector::from_column_slice(&[m[0], m[1], o[0], o[1], v[0], v[1], v[2], v[3]]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn object_momentum_changes_only_in_contact(x in pusher_state(), u in prop::array::uniform2(-20.0f64..20.0)) {
        let env = PusherEnv::default();
        let next = env.step(&x, &DVector::from_column_slice(&u)).unwrap();
        let changed = next[6] != x[6] || next[7] != x[7];
        if changed {
            prop_assert!(env.contact_active(&x));
        }
        if !env.contact_active(&x) {
            prop_assert_eq!(next[2], x[2] + env.dt() * x[6]);
            prop_assert_eq!(next[3], x[3] + env.dt() * x[7]);
        }
    }

    #[test]
    fn linearizations_are_finite(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        for env in envs() {
            let x = common::randn_vec(&mut r, env.state_dim()) * 0.5;
            let u = common::randn_vec(&mut r, env.control_dim());
            let lin = linearize_fd(env.as_ref(), &x, &u, 1e-6).unwrap();
            prop_assert!(lin.a.iter().chain(lin.b.iter()).all(|v| v.is_finite()));
        }
    }
}
