use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{gae_advantages, RolloutBuffer, Segment, Transition};
use super::env::Environment;
use super::obs::ObsNormalizer;
use super::policy::{PolicyNet, ValueNet, ACTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub workers: usize,
    pub steps_per_worker: usize,
    /// Environment-step budget; iterations = ceil(budget / (workers * steps_per_worker)).
    pub total_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub action_std: f64,
    pub grad_clip: f64,
    /// Iterations between intermediate checkpoints (0 disables them).
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            steps_per_worker: 512,
            total_steps: 2_000_000,
            epochs: 4,
            minibatch: 256,
            lr: 3e-4,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            action_std: 0.3,
            grad_clip: 5.0,
            checkpoint_every: 50,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.steps_per_worker == 0 || self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::Config("workers, steps_per_worker, epochs and minibatch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.clip > 0.0 && self.action_std > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::Config("lr, clip, action_std and grad_clip must be positive".into()));
        }
        if !((0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.lambda)) {
            return Err(Error::Config("gamma and lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.workers * self.steps_per_worker).max(1)
    }
}

/// Flattened training data for one update.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub obs: Array2<f64>,
    pub pre_squash: Array2<f64>,
    pub old_log_prob: Vec<f64>,
    /// Raw advantages; normalized inside [`ppo_update`].
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn from_buffer(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Result<Self> {
        if buffer.is_empty() {
            return Err(Error::Argument("empty rollout buffer".into()));
        }
        let mut advantages = Vec::with_capacity(buffer.len());
        let mut returns = Vec::with_capacity(buffer.len());
        for seg in &buffer.segments {
            if seg.steps.is_empty() {
                continue;
            }
            let (a, r) = gae_advantages(seg, gamma, lambda)?;
            advantages.extend(a);
            returns.extend(r);
        }
        let d = buffer.transitions().next().map_or(0, |t| t.obs.len());
        let obs: Vec<f64> = buffer.transitions().flat_map(|t| t.obs.iter().copied()).collect();
        let pre: Vec<f64> = buffer.transitions().flat_map(|t| t.pre_squash).collect();
        Ok(Self {
            obs: Array2::from_shape_vec((buffer.len(), d), obs).map_err(|e| Error::Data(e.to_string()))?,
            pre_squash: Array2::from_shape_vec((buffer.len(), ACTION_DIM), pre).expect("two per step"),
            old_log_prob: buffer.transitions().map(|t| t.log_prob).collect(),
            advantages,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest `|ratio − 1|` on the first minibatch, before any parameter change.
    pub initial_ratio_deviation: f64,
}

/// Optimizer state for both networks.
#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub policy: AdamState,
    pub value: AdamState,
}

impl PpoOptimizers {
    pub fn new(policy: &PolicyNet, value: &ValueNet, lr: f64) -> Self {
        Self {
            policy: AdamState::new(&policy.net, AdamConfig::with_lr(lr)),
            value: AdamState::new(&value.net, AdamConfig::with_lr(lr)),
        }
    }
}

/// Clipped-surrogate policy step and value regression over shuffled minibatches.
pub fn ppo_update(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    opt: &mut PpoOptimizers,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let sd = (batch.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let adv: Vec<f64> = if sd > 1e-12 {
        batch.advantages.iter().map(|a| (a - mean) / (sd + 1e-8)).collect()
    } else {
        vec![0.0; n]
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let mut batches = 0usize;
    let mut clipped = 0usize;
    let mut first = true;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let b = chunk.len() as f64;
            let obs = batch.obs.select(Axis(0), chunk);
            let pre = batch.pre_squash.select(Axis(0), chunk);

            let acts = policy.net.forward(obs.view())?;
            let (logp, dlogp_dmean) = policy.batch_log_prob(acts.output.view(), pre.view());
            let mut grad_out = Array2::zeros(acts.output.raw_dim());
            let mut p_loss = 0.0;
            let mut kl = 0.0;
            for (i, &k) in chunk.iter().enumerate() {
                let log_ratio = logp[i] - batch.old_log_prob[k];
                let ratio = log_ratio.exp();
                if first {
                    stats.initial_ratio_deviation = stats.initial_ratio_deviation.max((ratio - 1.0).abs());
                }
                let a = adv[k];
                let unclipped = ratio * a;
                let clipped_obj = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
                p_loss -= unclipped.min(clipped_obj) / b;
                kl += (ratio - 1.0) - log_ratio;
                if (ratio - 1.0).abs() > cfg.clip {
                    clipped += 1;
                }
                if unclipped <= clipped_obj {
                    let g = -a * ratio / b;
                    for j in 0..ACTION_DIM {
                        grad_out[(i, j)] = g * dlogp_dmean[(i, j)];
                    }
                }
            }
            first = false;
            if !p_loss.is_finite() {
                return Err(Error::Training(format!("policy loss is {p_loss} (kl {kl})")));
            }
            let (mut gp, _) = policy.net.backward(&acts, grad_out.view())?;
            clip_global_norm(&mut [&mut gp], cfg.grad_clip);
            opt.policy
                .step(&mut policy.net, &gp)
                .map_err(|e| Error::Training(format!("policy step: {e}")))?;

            let vacts = value.net.forward(obs.view())?;
            let mut vgrad = Array2::zeros(vacts.output.raw_dim());
            let mut v_loss = 0.0;
            for (i, &k) in chunk.iter().enumerate() {
                let d = vacts.output[(i, 0)] - batch.returns[k];
                v_loss += d * d / b;
                vgrad[(i, 0)] = 2.0 * d / b;
            }
            if !v_loss.is_finite() {
                return Err(Error::Training(format!("value loss is {v_loss}")));
            }
            let (mut gv, _) = value.net.backward(&vacts, vgrad.view())?;
            clip_global_norm(&mut [&mut gv], cfg.grad_clip);
            opt.value
                .step(&mut value.net, &gv)
                .map_err(|e| Error::Training(format!("value step: {e}")))?;

            stats.policy_loss += p_loss;
            stats.value_loss += v_loss;
            stats.approx_kl += kl / b;
            batches += 1;
        }
    }
    stats.policy_loss /= batches as f64;
    stats.value_loss /= batches as f64;
    stats.approx_kl /= batches as f64;
    stats.clip_fraction = clipped as f64 / (batches as f64 * cfg.minibatch.min(n) as f64).max(1.0);
    Ok(stats)
}

/// One row of the training curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    /// Cumulative environment steps.
    pub steps: usize,
    /// Over episodes finished during the iteration; NaN when none finished.
    pub mean_return: f64,
    pub mean_ep_len: f64,
    /// RMS average-velocity error over the iteration's steps.
    pub speed_rmse: f64,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("iteration,steps,mean_return,mean_ep_len,speed_rmse\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.iteration,
            r.steps,
            crate::io::csv_row([r.mean_return, r.mean_ep_len, r.speed_rmse])
        ));
    }
    out
}

struct Worker<E> {
    env: E,
    rng: ChaCha8Rng,
    index: u64,
    obs: Vec<f64>,
    episodes: u64,
    ep_return: f64,
    ep_len: usize,
}

#[derive(Default)]
struct WorkerReport {
    segment: Segment,
    finished: Vec<(f64, usize)>,
    speed_sq: f64,
    speed_n: usize,
}

fn episode_seed(seed: u64, worker: u64, episode: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (worker << 40) ^ episode
}

impl<E: Environment> Worker<E> {
    fn new(mut env: E, seed: u64, index: u64) -> Result<Self> {
        let obs = env.reset(episode_seed(seed, index, 0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + index);
        Ok(Self {
            env,
            rng,
            index,
            obs,
            episodes: 0,
            ep_return: 0.0,
            ep_len: 0,
        })
    }

    fn collect(
        &mut self,
        steps: usize,
        seed: u64,
        policy: &PolicyNet,
        value: &ValueNet,
        norm: &ObsNormalizer,
    ) -> Result<WorkerReport> {
        let mut rep = WorkerReport::default();
        for _ in 0..steps {
            let obs_n = norm.normalize(&self.obs)?;
            let s = policy.sample_action(&obs_n, &mut self.rng)?;
            let v = value.value(&obs_n)?;
            let r = self.env.step(s.action);
            self.ep_return += r.reward;
            self.ep_len += 1;
            if let Some(e) = r.speed_error {
                rep.speed_sq += e * e;
                rep.speed_n += 1;
            }
            let truncation_value = if r.truncated && !r.terminated {
                value.value(&norm.normalize(&r.obs)?)?
            } else {
                0.0
            };
            rep.segment.steps.push(Transition {
                obs: obs_n,
                raw_obs: std::mem::take(&mut self.obs),
                pre_squash: s.pre_squash,
                action: s.action,
                log_prob: s.log_prob,
                reward: r.reward,
                value: v,
                terminated: r.terminated,
                truncated: r.truncated && !r.terminated,
                truncation_value,
                episode: self.episodes,
            });
            if r.terminated || r.truncated {
                rep.finished.push((self.ep_return, self.ep_len));
                self.episodes += 1;
                self.ep_return = 0.0;
                self.ep_len = 0;
                self.obs = self.env.reset(episode_seed(seed, self.index, self.episodes))?;
            } else {
                self.obs = r.obs;
            }
        }
        rep.segment.bootstrap_value = value.value(&norm.normalize(&self.obs)?)?;
        Ok(rep)
    }
}

/// Stateful trainer; each [`PpoTrainer::iterate`] collects from every worker in parallel,
/// merges in worker order, updates both networks, then folds the collected raw
/// observations into the normalizer.
pub struct PpoTrainer<E: Environment> {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub normalizer: ObsNormalizer,
    pub config: PpoConfig,
    opt: PpoOptimizers,
    workers: Vec<Worker<E>>,
    rng: ChaCha8Rng,
    seed: u64,
    iteration: usize,
    steps: usize,
    pub last_stats: PpoStats,
}

impl<E: Environment> PpoTrainer<E> {
    pub fn new(envs: Vec<E>, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if envs.len() != config.workers {
            return Err(Error::shape("worker environments", config.workers, envs.len()));
        }
        let obs_dim = envs[0].obs_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicyNet::init(obs_dim, config.action_std, &mut rng)?;
        let value = ValueNet::init(obs_dim, &mut rng);
        let opt = PpoOptimizers::new(&policy, &value, config.lr);
        let workers = envs
            .into_iter()
            .enumerate()
            .map(|(i, e)| Worker::new(e, seed, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            policy,
            value,
            normalizer: ObsNormalizer::new(obs_dim),
            config,
            opt,
            workers,
            rng,
            seed,
            iteration: 0,
            steps: 0,
            last_stats: PpoStats::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn collect(&mut self) -> Result<(RolloutBuffer, Vec<(f64, usize)>, f64)> {
        let (policy, value, norm) = (&self.policy, &self.value, &self.normalizer);
        let steps = self.config.steps_per_worker;
        let seed = self.seed;
        let reports: Vec<Result<WorkerReport>> = self
            .workers
            .par_iter_mut()
            .map(|w| w.collect(steps, seed, policy, value, norm))
            .collect();
        let mut buffer = RolloutBuffer::default();
        let mut finished = Vec::new();
        let (mut sq, mut n) = (0.0, 0usize);
        for r in reports {
            let r = r?;
            finished.extend(r.finished);
            sq += r.speed_sq;
            n += r.speed_n;
            buffer.segments.push(r.segment);
        }
        let rmse = if n > 0 { (sq / n as f64).sqrt() } else { f64::NAN };
        Ok((buffer, finished, rmse))
    }

    pub fn iterate(&mut self) -> Result<CurveRow> {
        let (buffer, finished, rmse) = self.collect()?;
        let batch = PpoBatch::from_buffer(&buffer, self.config.gamma, self.config.lambda)?;
        self.last_stats = ppo_update(&mut self.policy, &mut self.value, &mut self.opt, &batch, &self.config, &mut self.rng)
            .map_err(|e| Error::Training(format!("iteration {}: {e}", self.iteration + 1)))?;
        let raw: Vec<Vec<f64>> = buffer.transitions().map(|t| t.raw_obs.clone()).collect();
        self.normalizer.update(&raw)?;
        self.iteration += 1;
        self.steps += buffer.len();
        let (mean_return, mean_len) = if finished.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let k = finished.len() as f64;
            (
                finished.iter().map(|f| f.0).sum::<f64>() / k,
                finished.iter().map(|f| f.1 as f64).sum::<f64>() / k,
            )
        };
        Ok(CurveRow {
            iteration: self.iteration,
            steps: self.steps,
            mean_return,
            mean_ep_len: mean_len,
            speed_rmse: rmse,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::StepResult;

    /// One-step episodes; reward peaks when the first action component is 0.3.
    struct Bandit;

    impl Environment for Bandit {
        fn obs_dim(&self) -> usize {
            1
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            Ok(vec![1.0])
        }
        fn step(&mut self, action: [f64; 2]) -> StepResult {
            StepResult {
                obs: vec![1.0],
                reward: -(action[0] - 0.3).powi(2),
                terminated: true,
                truncated: false,
                speed_error: None,
                failure: None,
            }
        }
    }

    fn bandit_config() -> PpoConfig {
        PpoConfig {
            workers: 2,
            steps_per_worker: 256,
            total_steps: 50 * 512,
            ..PpoConfig::default()
        }
    }

    fn mean_action(p: &PolicyNet, norm: &ObsNormalizer) -> f64 {
        let obs = norm.normalize(&[1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 20_000;
        (0..n).map(|_| p.sample_action(&obs, &mut rng).unwrap().action[0]).sum::<f64>() / n as f64
    }

    #[test]
    fn bandit_mean_action_converges() {
        let cfg = bandit_config();
        let mut t = PpoTrainer::new(vec![Bandit, Bandit], cfg.clone(), 5).unwrap();
        for _ in 0..cfg.iterations() {
            let row = t.iterate().unwrap();
            assert_eq!(row.mean_ep_len, 1.0);
        }
        let m = mean_action(&t.policy, &t.normalizer);
        assert!((m - 0.3).abs() < 0.05, "mean action {m}");
    }

    #[test]
    fn first_ratios_are_one_and_zero_advantage_keeps_policy() {
        let cfg = bandit_config();
        let mut t = PpoTrainer::new(vec![Bandit, Bandit], cfg.clone(), 1).unwrap();
        let (buffer, _, _) = t.collect().unwrap();
        let mut batch = PpoBatch::from_buffer(&buffer, cfg.gamma, cfg.lambda).unwrap();
        let mut p = t.policy.clone();
        let mut v = t.value.clone();
        let mut opt = PpoOptimizers::new(&p, &v, cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats = ppo_update(&mut p, &mut v, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert!(stats.initial_ratio_deviation < 1e-10);

        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let mut p = t.policy.clone();
        let mut v = t.value.clone();
        let mut opt = PpoOptimizers::new(&p, &v, cfg.lr);
        ppo_update(&mut p, &mut v, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(p, t.policy);
        assert_ne!(v, t.value);
    }

    #[test]
    fn fixed_seed_reproduces_curves() {
        let run = || {
            let cfg = PpoConfig {
                workers: 1,
                steps_per_worker: 64,
                total_steps: 192,
                ..PpoConfig::default()
            };
            let mut t = PpoTrainer::new(vec![Bandit], cfg.clone(), 3).unwrap();
            (0..cfg.iterations()).map(|_| t.iterate().unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a.len(), 3);
        assert_eq!(curves_csv(&a), curves_csv(&run()));
        assert_eq!(curves_csv(&a).lines().count(), 4);
    }
}
