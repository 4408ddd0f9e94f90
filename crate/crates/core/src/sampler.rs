//! Importance sampler for the combined KL-control objective.
//!
//! Samples `v ~ N(u, Σ)` are rolled out and scored on the full cost channel.
//! Each sample's log-weight is the log density ratio
//!
//! ```text
//! log w = -S(V)/λ + (1-k)·log p(V) + k·log c(V) - log q(V)
//! ```
//!
//! where `p = N(0, Σ)` is the passive distribution, `c = N(u_iLQG, Σ_iLQG)`
//! the iLQG reference and `q = N(u, Σ)` the proposal. Normalizing constants
//! are shared by every sample and cancel. With `k = 0` this is standard MPPI.
//!
//! A [`Proposal`] may also split the batch between several means (the KL
//! warm start and the iLQG plan); samples are then weighted against the
//! mixture density.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::costs::DualCost;
use crate::envs::{rollout, DynamicsModel};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::types::{cholesky, clamp_controls, ControlBounds, ControlVec, SolverConfig, StateVec, Trajectory};

/// Batches at least this large are rolled out on the rayon pool.
const PARALLEL_MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// `ε_{i,t} = v_{i,t} - u_t`, before clamping.
    pub noises: Vec<Vec<ControlVec>>,
    /// Sampled inputs `v_{i,t} = u_t + ε_{i,t}`, before clamping.
    pub inputs: Vec<Vec<ControlVec>>,
    /// Rollouts of the clamped inputs; `None` if the rollout diverged.
    pub trajectories: Vec<Option<Trajectory>>,
    /// `S(V_i)` on the full cost channel, `+∞` for diverged rollouts.
    pub full_costs: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Draws `n_samples` perturbed control sequences and scores their rollouts.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    means: &[ControlVec],
    sigma: &DMatrix<f64>,
    n_samples: usize,
    stream: StreamKey,
    bounds: &ControlBounds,
) -> Result<SampleBatch> {
    let proposal = Proposal::single(means.to_vec(), n_samples);
    sample_proposal(env, cost, x0, &proposal, sigma, stream, bounds)
}

/// Like [`sample_batch`], drawing each block of samples around its own mean.
pub fn sample_proposal(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    proposal: &Proposal,
    sigma: &DMatrix<f64>,
    stream: StreamKey,
    bounds: &ControlBounds,
) -> Result<SampleBatch> {
    let chol_l = cholesky(sigma, "sigma")?.l();
    let n_u = sigma.nrows();
    for means in &proposal.means {
        if let Some(u) = means.iter().find(|u| u.len() != n_u) {
            return Err(Error::Dimension {
                what: "control mean",
                expected: n_u,
                got: u.len(),
            });
        }
    }
    let n_samples = proposal.len();

    let draw = |i: usize| {
        let means = &proposal.means[proposal.component_of(i)];
        let mut rng = stream.sample_rng(i);
        let noise: Vec<ControlVec> = means
            .iter()
            .map(|_| {
                let z = DVector::from_fn(n_u, |_, _| StandardNormal.sample(&mut rng));
                &chol_l * z
            })
            .collect();
        let inputs: Vec<ControlVec> = means.iter().zip(&noise).map(|(u, e)| u + e).collect();
        let traj = rollout(env, x0, &inputs, bounds).ok();
        let s = traj
            .as_ref()
            .map(|t| cost.trajectory_cost(env, t))
            .filter(|s| s.is_finite())
            .unwrap_or(f64::INFINITY);
        (noise, inputs, traj, s)
    };

    let samples: Vec<_> = if n_samples >= PARALLEL_MIN_SAMPLES {
        (0..n_samples).into_par_iter().map(draw).collect()
    } else {
        (0..n_samples).map(draw).collect()
    };

    let mut batch = SampleBatch {
        noises: Vec::with_capacity(n_samples),
        inputs: Vec::with_capacity(n_samples),
        trajectories: Vec::with_capacity(n_samples),
        full_costs: Vec::with_capacity(n_samples),
    };
    for (noise, inputs, traj, s) in samples {
        batch.noises.push(noise);
        batch.inputs.push(inputs);
        batch.trajectories.push(traj);
        batch.full_costs.push(s);
    }
    Ok(batch)
}

/// Proposal `q`: `counts[j]` consecutive samples are drawn around `means[j]`,
/// all with the same covariance. With several components the samples are
/// weighted against the mixture with fractions `counts[j] / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub means: Vec<Vec<ControlVec>>,
    pub counts: Vec<usize>,
}

impl Proposal {
    pub fn single(means: Vec<ControlVec>, n_samples: usize) -> Self {
        Self {
            means: vec![means],
            counts: vec![n_samples],
        }
    }

    /// `K` samples split between the KL warm start and the iLQG plan: none
    /// around the plan at `k = 0`, half (rounded up) at `k = 1`.
    pub fn split(u_kl: Vec<ControlVec>, u_ilqg: Vec<ControlVec>, n_samples: usize, mixing_k: f64) -> Self {
        let n_ilqg = ((mixing_k * n_samples as f64 / 2.0).ceil() as usize).min(n_samples);
        if n_ilqg == 0 {
            return Self::single(u_kl, n_samples);
        }
        if n_ilqg == n_samples {
            return Self::single(u_ilqg, n_samples);
        }
        Self {
            means: vec![u_ilqg, u_kl],
            counts: vec![n_ilqg, n_samples - n_ilqg],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the component that sample `i` is drawn from.
    pub fn component_of(&self, i: usize) -> usize {
        let mut end = 0;
        for (j, &c) in self.counts.iter().enumerate() {
            end += c;
            if i < end {
                return j;
            }
        }
        self.counts.len() - 1
    }
}

/// Distribution `C` centred on the iLQG controls with covariance `β Q_uu⁻¹`.
#[derive(Debug, Clone)]
pub struct ReferencePolicy {
    pub means: Vec<ControlVec>,
    /// `Σ_iLQG,t`
    pub covariances: Vec<DMatrix<f64>>,
    /// `Σ_iLQG,t⁻¹`
    pub precisions: Vec<DMatrix<f64>>,
}

impl ReferencePolicy {
    /// Builds `Σ_iLQG,t = β Q_uu,t⁻¹` from the solver's control Hessians.
    pub fn from_quu(means: Vec<ControlVec>, quu: &[DMatrix<f64>], beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        check_len(means.len(), quu.len())?;
        let mut covariances = Vec::with_capacity(quu.len());
        let mut precisions = Vec::with_capacity(quu.len());
        for h in quu {
            let chol = cholesky(h, "Q_uu")?;
            covariances.push(chol.inverse() * beta);
            precisions.push(h / beta);
        }
        Ok(Self {
            means,
            covariances,
            precisions,
        })
    }

    pub fn from_covariances(means: Vec<ControlVec>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        check_len(means.len(), covariances.len())?;
        let precisions = covariances
            .iter()
            .map(|c| cholesky(c, "Sigma_iLQG").map(|ch| ch.inverse()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            means,
            covariances,
            precisions,
        })
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: "sequence length",
            expected,
            got,
        })
    }
}

/// `xᵀ M x`
fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Precomputed pieces of the log-weight for one sampler invocation.
#[derive(Debug, Clone)]
pub struct LogWeightModel<'a> {
    sigma_inv: DMatrix<f64>,
    reference: Option<&'a ReferencePolicy>,
    lambda: f64,
    mixing_k: f64,
}

impl<'a> LogWeightModel<'a> {
    pub fn new(
        sigma: &DMatrix<f64>,
        reference: Option<&'a ReferencePolicy>,
        lambda: f64,
        mixing_k: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(0.0..=1.0).contains(&mixing_k) {
            return Err(Error::Config("mixing_k must lie in [0, 1]".into()));
        }
        if mixing_k > 0.0 && reference.is_none() {
            return Err(Error::Config("mixing_k > 0 needs a reference policy".into()));
        }
        let sigma_inv = cholesky(sigma, "sigma")?.inverse();
        Ok(Self {
            sigma_inv,
            reference,
            lambda,
            mixing_k,
        })
    }

    /// Unnormalized log-weight of one sampled input sequence.
    pub fn log_weight(&self, inputs: &[ControlVec], means: &[ControlVec], cost: f64) -> f64 {
        if !cost.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.log_target(inputs, cost) + 0.5 * self.sq_dist(inputs, means)
    }

    /// Log-weight against a multi-component proposal.
    pub fn log_weight_proposal(&self, inputs: &[ControlVec], proposal: &Proposal, cost: f64) -> f64 {
        if !cost.is_finite() {
            return f64::NEG_INFINITY;
        }
        if proposal.means.len() == 1 {
            return self.log_weight(inputs, &proposal.means[0], cost);
        }
        let total = proposal.len() as f64;
        let terms: Vec<f64> = proposal
            .means
            .iter()
            .zip(&proposal.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(m, &c)| (c as f64 / total).ln() - 0.5 * self.sq_dist(inputs, m))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_q = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
        self.log_target(inputs, cost) - log_q
    }

    /// `-S/λ + (1-k) log p + k log c`.
    fn log_target(&self, inputs: &[ControlVec], cost: f64) -> f64 {
        let k = self.mixing_k;
        let mut lw = -cost / self.lambda;
        for (t, v) in inputs.iter().enumerate() {
            if k < 1.0 {
                lw -= (1.0 - k) * 0.5 * quad_form(&self.sigma_inv, v);
            }
            if k > 0.0 {
                if let Some(r) = self.reference {
                    lw -= k * 0.5 * quad_form(&r.precisions[t], &(v - &r.means[t]));
                }
            }
        }
        lw
    }

    /// `Σ_t (v_t - u_t)ᵀ Σ⁻¹ (v_t - u_t)`.
    fn sq_dist(&self, inputs: &[ControlVec], means: &[ControlVec]) -> f64 {
        inputs.iter().zip(means).map(|(v, u)| quad_form(&self.sigma_inv, &(v - u))).sum()
    }
}

/// Log-weight of a single sample; see [`LogWeightModel`].
pub fn log_weight(
    inputs: &[ControlVec],
    means: &[ControlVec],
    sigma: &DMatrix<f64>,
    reference: Option<&ReferencePolicy>,
    cost: f64,
    lambda: f64,
    mixing_k: f64,
) -> Result<f64> {
    Ok(LogWeightModel::new(sigma, reference, lambda, mixing_k)?.log_weight(inputs, means, cost))
}

/// Normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// Effective sample size `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &w)| if w > best.1 { (i, w) } else { best })
            .0
    }
}

/// Softmax of the log-weights with a max shift.
pub fn normalize_weights(log_weights: &[f64]) -> Result<WeightVector> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllSamplesDiverged);
    }
    let unnorm: Vec<f64> = log_weights
        .iter()
        .map(|&lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .collect();
    let total: f64 = unnorm.iter().sum();
    Ok(WeightVector {
        weights: unnorm.into_iter().map(|w| w / total).collect(),
    })
}

/// `u*_t = Σ_i w_i v_{i,t}`, clamped to `bounds`.
pub fn update_controls(
    batch: &SampleBatch,
    weights: &WeightVector,
    bounds: &ControlBounds,
) -> Vec<ControlVec> {
    let horizon = batch.inputs.first().map_or(0, Vec::len);
    (0..horizon)
        .map(|t| {
            let n_u = batch.inputs[0][t].len();
            let avg = batch
                .inputs
                .iter()
                .zip(&weights.weights)
                .filter(|(_, &w)| w > 0.0)
                .fold(DVector::zeros(n_u), |acc, (v, &w)| acc + &v[t] * w);
            clamp_controls(&avg, bounds)
        })
        .collect()
}

/// Result of one sampling update.
#[derive(Debug, Clone)]
pub struct KlStep {
    pub controls: Vec<ControlVec>,
    pub weights: WeightVector,
    pub full_costs: Vec<f64>,
}

/// Sample, weight, normalize and average: one KL-control update of `means`.
///
/// `cfg.mixing_k` selects between the passive prior (`k = 0`, plain MPPI) and
/// the iLQG reference (`k = 1`).
pub fn kl_control_step(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    means: &[ControlVec],
    reference: Option<&ReferencePolicy>,
    cfg: &SolverConfig,
    stream: StreamKey,
    bounds: &ControlBounds,
) -> Result<KlStep> {
    let proposal = Proposal::single(means.to_vec(), cfg.n_samples);
    kl_control_step_proposal(env, cost, x0, &proposal, reference, cfg, stream, bounds)
}

/// [`kl_control_step`] with samples drawn from `proposal`.
#[allow(clippy::too_many_arguments)]
pub fn kl_control_step_proposal(
    env: &dyn DynamicsModel,
    cost: &DualCost,
    x0: &StateVec,
    proposal: &Proposal,
    reference: Option<&ReferencePolicy>,
    cfg: &SolverConfig,
    stream: StreamKey,
    bounds: &ControlBounds,
) -> Result<KlStep> {
    let model = LogWeightModel::new(&cfg.sigma, reference, cfg.lambda, cfg.mixing_k)?;
    let batch = sample_proposal(env, cost, x0, proposal, &cfg.sigma, stream, bounds)?;
    let log_weights: Vec<f64> = batch
        .inputs
        .iter()
        .zip(&batch.full_costs)
        .map(|(v, &s)| model.log_weight_proposal(v, proposal, s))
        .collect();
    let weights = normalize_weights(&log_weights)?;
    let controls = update_controls(&batch, &weights, bounds);
    Ok(KlStep {
        controls,
        weights,
        full_costs: batch.full_costs,
    })
}

/// Writes one diagnostics row per sample: step, sample, cost, weight, ess.
pub fn write_diagnostics_csv<W: Write>(rows: &[(usize, &KlStep)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "sample", "cost", "weight", "ess"])?;
    for (step, kl) in rows {
        let ess = kl.weights.effective_sample_size();
        for (i, (c, wt)) in kl.full_costs.iter().zip(&kl.weights.weights).enumerate() {
            w.write_record(&[
                step.to_string(),
                i.to_string(),
                c.to_string(),
                wt.to_string(),
                ess.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
