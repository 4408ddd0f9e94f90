//! Problem generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use mpcmix::costs::{DualCost, QuadraticCost};
use mpcmix::envs::{CartpoleEnv, LinearEnv};
use mpcmix::sampler::ReferencePolicy;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random symmetric positive-definite matrix with eigenvalues bounded below by `floor`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let m = randn(rng, n, n);
    m.transpose() * m * 0.5 + DMatrix::identity(n, n) * floor
}

/// Linear dynamics with a quadratic cost and a zero goal.
pub struct LqProblem {
    pub env: LinearEnv,
    pub cost: DualCost,
    pub x0: DVector<f64>,
    pub horizon: usize,
    pub q_run: DVector<f64>,
    pub q_term: DVector<f64>,
    pub r: DMatrix<f64>,
    pub scale: f64,
}

pub fn random_lq(rng: &mut ChaCha8Rng) -> LqProblem {
    let n_x = rng.random_range(1..=4);
    let n_u = rng.random_range(1..=2);
    let horizon = rng.random_range(1..=10);
    let a = DMatrix::identity(n_x, n_x) + randn(rng, n_x, n_x) * 0.3;
    let b = randn(rng, n_x, n_u);
    let q_run = DVector::from_fn(n_x, |_, _| rng.random_range(0.0..2.0));
    let q_term = DVector::from_fn(n_x, |_, _| rng.random_range(0.0..5.0));
    let r = random_spd(rng, n_u, 0.1);
    let scale = if rng.random_bool(0.5) { 1.0 } else { 0.1 };
    let cost = DualCost::new(QuadraticCost::new(DVector::zeros(n_x), q_run.clone(), q_term.clone(), r.clone()).unwrap())
        .with_running_scale(scale);
    LqProblem {
        env: LinearEnv::new(a, b, 0.01).unwrap(),
        cost,
        x0: randn_vec(rng, n_x),
        horizon,
        q_run,
        q_term,
        r,
        scale,
    }
}

/// Optimal cost `x0ᵀ P_0 x0` from the finite-horizon discrete Riccati recursion.
pub fn riccati_cost(p: &LqProblem) -> f64 {
    let a = p.env.a();
    let b = p.env.b();
    let q = DMatrix::from_diagonal(&p.q_run) * p.scale;
    let r = &p.r * p.scale;
    let mut pm = DMatrix::from_diagonal(&p.q_term);
    for _ in 0..p.horizon {
        let btp = b.transpose() * &pm;
        let gain = (&r + &btp * b).try_inverse().unwrap() * &btp * a;
        pm = &q + a.transpose() * &pm * a - a.transpose() * &pm * b * gain;
        pm = (&pm + pm.transpose()) * 0.5;
    }
    p.x0.dot(&(pm * &p.x0))
}

/// Cartpole swing-up cost with the published weights, running terms scaled by dt.
pub fn cartpole_cost() -> DualCost {
    DualCost::new(
        QuadraticCost::new(
            DVector::zeros(4),
            DVector::from_column_slice(&[1e3, 5e2, 0.0, 0.0]),
            DVector::from_column_slice(&[1e5, 5e4, 5e2, 5e2]),
            DMatrix::zeros(1, 1),
        )
        .unwrap(),
    )
    .with_running_scale(0.01)
}

/// Textbook MPPI weights: `S̃_i = S_i + λ Σ_t u_tᵀ Σ⁻¹ ε_{i,t}`, softmin of
/// `S̃ / λ` with the minimum subtracted.
pub fn mppi_weights(
    noises: &[Vec<DVector<f64>>],
    means: &[DVector<f64>],
    sigma: &DMatrix<f64>,
    costs: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let sigma_inv = sigma.clone().try_inverse().unwrap();
    let shaped: Vec<f64> = noises
        .iter()
        .zip(costs)
        .map(|(eps, s)| {
            let control: f64 = means.iter().zip(eps).map(|(u, e)| (u.transpose() * &sigma_inv * e)[(0, 0)]).sum();
            s + lambda * control
        })
        .collect();
    let rho = shaped.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = shaped.iter().map(|s| (-(s - rho) / lambda).exp()).collect();
    let eta: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / eta).collect()
}

/// Multivariate normal density, written out with the normalizing constant.
pub fn gaussian_pdf(v: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = v.len() as f64;
    let d = v - mean;
    let quad = (d.transpose() * cov.clone().try_inverse().unwrap() * &d)[(0, 0)];
    (2.0 * std::f64::consts::PI).powf(-n / 2.0) * cov.determinant().powf(-0.5) * (-0.5 * quad).exp()
}

/// `Π_t N(v_t; m_t, C_t)`.
pub fn sequence_pdf(v: &[DVector<f64>], means: &[DVector<f64>], covs: &[DMatrix<f64>]) -> f64 {
    v.iter().zip(means).zip(covs).map(|((v, m), c)| gaussian_pdf(v, m, c)).product()
}

/// Normalized `p(V)^{1-k} c(V)^k exp(-S/λ) / q(V)` with every density evaluated directly.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_weights(
    samples: &[Vec<DVector<f64>>],
    costs: &[f64],
    q_means: &[DVector<f64>],
    sigma: &DMatrix<f64>,
    c_means: &[DVector<f64>],
    c_covs: &[DMatrix<f64>],
    lambda: f64,
    k: f64,
) -> Vec<f64> {
    let t = q_means.len();
    let zeros = vec![DVector::zeros(sigma.nrows()); t];
    let sigmas = vec![sigma.clone(); t];
    let raw: Vec<f64> = samples
        .iter()
        .zip(costs)
        .map(|(v, s)| {
            let p = sequence_pdf(v, &zeros, &sigmas);
            let c = sequence_pdf(v, c_means, c_covs);
            let q = sequence_pdf(v, q_means, &sigmas);
            p.powf(1.0 - k) * c.powf(k) * (-s / lambda).exp() / q
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Central differences of a scalar function.
pub fn central<F: Fn(&DVector<f64>) -> f64>(f: F, at: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(at.len(), |i, _| {
        let mut p = at.clone();
        p[i] += h;
        let mut m = at.clone();
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

/// Jacobians of one semi-implicit Euler step at the hanging equilibrium.
pub fn cartpole_equilibrium_jacobians(env: &CartpoleEnv) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = env.params();
    let (mc, mp, l, g, dt) = (p.cart_mass, p.pole_mass, p.pole_length, p.gravity, p.dt);
    // With s = 0, c = -1: ẍ = (F - m_p g θ̃)/m_c, θ̈ = -(g (m_c + m_p) θ̃)/(m_c l) + F/(m_c l).
    let a_v = -mp * g / mc;
    let a_w = -g * (mc + mp) / (mc * l);
    let (b_v, b_w) = (1.0 / mc, 1.0 / (mc * l));
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, dt * dt * a_v, dt, 0.0,
            0.0, 1.0 + dt * dt * a_w, 0.0, dt,
            0.0, dt * a_v, 1.0, 0.0,
            0.0, dt * a_w, 0.0, 1.0,
        ],
    );
    let b = DMatrix::from_column_slice(4, 1, &[dt * dt * b_v, dt * dt * b_w, dt * b_v, dt * b_w]);
    (a, b)
}

/// Random sampling batch around `means` with per-sample costs.
pub struct Instance {
    pub sigma: DMatrix<f64>,
    pub means: Vec<DVector<f64>>,
    pub noises: Vec<Vec<DVector<f64>>>,
    pub samples: Vec<Vec<DVector<f64>>>,
    pub costs: Vec<f64>,
    pub lambda: f64,
}

pub fn instance(r: &mut ChaCha8Rng, max_k: usize, max_t: usize) -> Instance {
    let n_u = r.random_range(1..=2);
    let k = r.random_range(1..=max_k);
    let t = r.random_range(1..=max_t);
    let sigma = random_spd(r, n_u, 0.2);
    let chol = sigma.clone().cholesky().unwrap().l();
    let means: Vec<_> = (0..t).map(|_| randn_vec(r, n_u)).collect();
    let noises: Vec<Vec<_>> = (0..k).map(|_| (0..t).map(|_| &chol * randn_vec(r, n_u)).collect()).collect();
    let samples = noises.iter().map(|eps| means.iter().zip(eps).map(|(u, e)| u + e).collect()).collect();
    Instance {
        sigma,
        means,
        noises,
        samples,
        costs: (0..k).map(|_| r.random_range(0.0..10.0)).collect(),
        lambda: r.random_range(0.5..5.0),
    }
}

pub fn random_reference(r: &mut ChaCha8Rng, t: usize, n_u: usize) -> ReferencePolicy {
    let means = (0..t).map(|_| randn_vec(r, n_u)).collect();
    let covs = (0..t).map(|_| random_spd(r, n_u, 0.3)).collect();
    ReferencePolicy::from_covariances(means, covs).unwrap()
}
