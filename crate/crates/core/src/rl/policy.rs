use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::control::ACTION_BOUND;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

pub const ACTION_DIM: usize = 2;
pub const POLICY_HIDDEN: [usize; 2] = [128, 128];
/// Squashed actions are clamped this far inside the bound before `atanh`.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_8;

/// Gaussian policy in pre-squash space with a fixed standard deviation; actions are
/// `scale * tanh(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    /// Observation → pre-squash mean.
    pub net: Mlp,
    pub std: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

/// A sampled action with the pre-squash value it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub action: [f64; ACTION_DIM],
    pub pre_squash: [f64; ACTION_DIM],
    pub log_prob: f64,
}

/// Log density of the pre-squash Gaussian plus the squash log-determinant.
fn squashed_log_prob(mean: &[f64], u: &[f64], std: f64, scale: f64) -> f64 {
    mean.iter()
        .zip(u)
        .map(|(m, u)| {
            let z = (u - m) / std;
            let t = u.tanh();
            -0.5 * z * z - std.ln() - HALF_LOG_TAU - (scale * (1.0 - t * t)).max(f64::MIN_POSITIVE).ln()
        })
        .sum()
}

impl PolicyNet {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, std: f64, rng: &mut R) -> Result<Self> {
        let net = Mlp::init(
            &[obs_dim, POLICY_HIDDEN[0], POLICY_HIDDEN[1], ACTION_DIM],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Self::new(net, std, ACTION_BOUND)
    }

    pub fn new(net: Mlp, std: f64, scale: f64) -> Result<Self> {
        if net.output_dim() != ACTION_DIM {
            return Err(Error::shape("policy output", ACTION_DIM, net.output_dim()));
        }
        if !(std > 0.0 && scale > 0.0) {
            return Err(Error::Argument("policy std and scale must be positive".into()));
        }
        Ok(Self { net, std, scale })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.predict_one(obs)
    }

    /// Zero-noise action `scale * tanh(mean)`.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM]> {
        let m = self.mean(obs)?;
        Ok([self.scale * m[0].tanh(), self.scale * m[1].tanh()])
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<SampledAction> {
        let m = self.mean(obs)?;
        let mut u = [0.0; ACTION_DIM];
        for (k, v) in u.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *v = m[k] + self.std * e;
        }
        Ok(SampledAction {
            action: [self.scale * u[0].tanh(), self.scale * u[1].tanh()],
            pre_squash: u,
            log_prob: squashed_log_prob(&m, &u, self.std, self.scale),
        })
    }

    /// Log density of a squashed action; actions at or beyond the bound are clamped
    /// `SQUASH_EPS` inside it first.
    pub fn evaluate_log_prob(&self, obs: &[f64], action: &[f64; ACTION_DIM]) -> Result<f64> {
        let m = self.mean(obs)?;
        let u: Vec<f64> = action
            .iter()
            .map(|a| (a / self.scale).clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS).atanh())
            .collect();
        Ok(squashed_log_prob(&m, &u, self.std, self.scale))
    }

    /// Per-row log densities of stored pre-squash values and their gradient with respect
    /// to the network output.
    pub(crate) fn batch_log_prob(
        &self,
        means: ArrayView2<'_, f64>,
        pre_squash: ArrayView2<'_, f64>,
    ) -> (Vec<f64>, Array2<f64>) {
        let var = self.std * self.std;
        let mut grad = Array2::zeros(means.raw_dim());
        let lp = means
            .rows()
            .into_iter()
            .zip(pre_squash.rows())
            .enumerate()
            .map(|(i, (m, u))| {
                for k in 0..ACTION_DIM {
                    grad[(i, k)] = (u[k] - m[k]) / var;
                }
                squashed_log_prob(&m.to_vec(), &u.to_vec(), self.std, self.scale)
            })
            .collect();
        (lp, grad)
    }
}

impl ValueNet {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, rng: &mut R) -> Self {
        Self {
            net: Mlp::init(
                &[obs_dim, POLICY_HIDDEN[0], POLICY_HIDDEN[1], 1],
                Activation::Relu,
                Activation::Identity,
                rng,
            ),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.predict_one(obs)?[0])
    }
}
