use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::obs::Observation;
use super::reward::{compute_reward, REWARD_WEIGHTS};
use crate::ae::AutoencoderModel;
use crate::control::{stance_frame_transform, PolicyAction, Walker, WalkerConfig};
use crate::dataset::noisy_standing;
use crate::error::{Error, Result};
use crate::sim::{Leg, RobotModel};

/// Minimal interface the PPO trainer needs from an environment.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: [f64; 2]) -> StepResult;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Failure: the value of the next state is zero.
    pub terminated: bool,
    /// Time limit reached without failure.
    pub truncated: bool,
    /// Average-velocity tracking error, when meaningful.
    pub speed_error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub episode_steps: usize,
    /// rad
    pub joint_noise: f64,
    /// rad/s and m/s
    pub rate_noise: f64,
    pub v_des_min: f64,
    pub v_des_max: f64,
    pub reward_weights: [f64; 3],
    /// Angular-momentum scale in the reward; defaults to `1 / (total mass * nominal height)`.
    pub momentum_scale: Option<f64>,
    pub reset_attempts: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_steps: 600,
            joint_noise: 0.03,
            rate_noise: 0.05,
            v_des_min: -0.5,
            v_des_max: 1.0,
            reward_weights: REWARD_WEIGHTS,
            momentum_scale: None,
            reset_attempts: 10,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_steps == 0 || self.reset_attempts == 0 {
            return Err(Error::Config("episode_steps and reset_attempts must be positive".into()));
        }
        if !(self.joint_noise >= 0.0 && self.rate_noise >= 0.0) {
            return Err(Error::Config("reset noise must be >= 0".into()));
        }
        if !(self.v_des_min <= self.v_des_max) {
            return Err(Error::Config("v_des_min must not exceed v_des_max".into()));
        }
        Ok(())
    }

    pub fn momentum_scale_for(&self, model: &RobotModel) -> f64 {
        self.momentum_scale
            .unwrap_or(1.0 / (model.total_mass() * model.nominal_base_height))
    }
}

/// Encodes the walker's state and assembles the policy input.
pub fn observe(encoder: &AutoencoderModel, walker: &Walker, v_des: f64, prev_action: [f64; 2]) -> Result<Observation> {
    let features = stance_frame_transform(walker.model(), walker.state());
    Ok(Observation {
        latent: encoder.encode(&features)?,
        velocity_error: walker.average_velocity() - v_des,
        v_des,
        prev_action,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStepInfo {
    pub terminated: bool,
    pub truncated: bool,
    pub average_velocity: f64,
    pub failure: Option<String>,
}

/// Walking task: hold a commanded speed drawn per episode.
#[derive(Debug, Clone)]
pub struct GaitEnv {
    model: RobotModel,
    walker_config: WalkerConfig,
    config: EnvConfig,
    encoder: Arc<AutoencoderModel>,
    walker: Option<Walker>,
    v_des: f64,
    prev_action: [f64; 2],
    steps: usize,
    last_obs: Option<Observation>,
}

impl GaitEnv {
    pub fn new(
        model: RobotModel,
        walker_config: WalkerConfig,
        config: EnvConfig,
        encoder: Arc<AutoencoderModel>,
    ) -> Result<Self> {
        walker_config.validate()?;
        config.validate()?;
        Ok(Self {
            model,
            walker_config,
            config,
            encoder,
            walker: None,
            v_des: 0.0,
            prev_action: [0.0; 2],
            steps: 0,
            last_obs: None,
        })
    }

    pub fn walker(&self) -> Option<&Walker> {
        self.walker.as_ref()
    }

    pub fn v_des(&self) -> f64 {
        self.v_des
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn env_reset(&mut self, seed: u64) -> Result<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &self.config;
        let v_des = if c.v_des_max > c.v_des_min {
            rng.random_range(c.v_des_min..c.v_des_max)
        } else {
            c.v_des_min
        };
        let mut last_err = None;
        for _ in 0..c.reset_attempts {
            let start = noisy_standing(
                &self.model,
                self.model.nominal_base_height,
                Leg::Left,
                c.joint_noise,
                c.rate_noise,
                &mut rng,
            );
            let start = match start {
                Ok(s) => s,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let walker = Walker::new(self.model.clone(), self.walker_config.clone(), start)?;
            if walker.has_fallen() {
                last_err = Some(Error::State("initial state violates termination".into()));
                continue;
            }
            self.walker = Some(walker);
            self.v_des = v_des;
            self.prev_action = [0.0; 2];
            self.steps = 0;
            let obs = observe(&self.encoder, self.walker.as_ref().expect("set"), v_des, self.prev_action)?;
            self.last_obs = Some(obs.clone());
            return Ok(obs);
        }
        Err(Error::State(format!(
            "no valid initial state after {} attempts: {}",
            c.reset_attempts,
            last_err.map_or_else(String::new, |e| e.to_string())
        )))
    }

    /// One policy interval. Simulator or controller errors end the episode as failures.
    pub fn env_step(&mut self, action: &PolicyAction) -> Result<(Observation, f64, bool, EnvStepInfo)> {
        let walker = self
            .walker
            .as_mut()
            .ok_or_else(|| Error::State("step called before reset".into()))?;
        let a = action.to_array();
        self.steps += 1;
        let tick = walker.tick(action, self.v_des);
        let (reward, terminated, failure, v_bar) = match tick {
            Ok(info) => {
                let scale = self.config.momentum_scale_for(&self.model);
                let r = compute_reward(
                    info.average_velocity,
                    self.v_des,
                    info.angular_momentum,
                    &a,
                    &self.prev_action,
                    &self.config.reward_weights,
                    scale,
                );
                let failure = info.fell.then(|| "termination rule".to_string());
                (r, info.fell, failure, info.average_velocity)
            }
            Err(e) => (0.0, true, Some(e.to_string()), walker.average_velocity()),
        };
        self.prev_action = a;
        let truncated = !terminated && self.steps >= self.config.episode_steps;
        let obs = if terminated {
            match observe(&self.encoder, walker, self.v_des, a) {
                Ok(o) => o,
                Err(_) => self.last_obs.clone().expect("reset sets an observation"),
            }
        } else {
            observe(&self.encoder, walker, self.v_des, a)?
        };
        self.last_obs = Some(obs.clone());
        let done = terminated || truncated;
        Ok((
            obs,
            reward,
            done,
            EnvStepInfo {
                terminated,
                truncated,
                average_velocity: v_bar,
                failure,
            },
        ))
    }
}

impl Environment for GaitEnv {
    fn obs_dim(&self) -> usize {
        Observation::dim_for(self.encoder.latent_dim())
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.env_reset(seed)?.to_vec())
    }

    fn step(&mut self, action: [f64; 2]) -> StepResult {
        match self.env_step(&PolicyAction::clipped(action[0], action[1])) {
            Ok((obs, reward, _, info)) => StepResult {
                obs: obs.to_vec(),
                reward,
                terminated: info.terminated,
                truncated: info.truncated,
                speed_error: Some(info.average_velocity - self.v_des),
                failure: info.failure,
            },
            Err(e) => StepResult {
                obs: self.last_obs.as_ref().map(|o| o.to_vec()).unwrap_or_else(|| vec![0.0; self.obs_dim()]),
                reward: 0.0,
                terminated: true,
                truncated: false,
                speed_error: None,
                failure: Some(e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Standardizer;

    fn env(cfg: EnvConfig) -> GaitEnv {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ae = AutoencoderModel::init(Standardizer::identity(18), 2, &mut rng).unwrap();
        GaitEnv::new(RobotModel::default(), WalkerConfig::default(), cfg, Arc::new(ae)).unwrap()
    }

    #[test]
    fn reset_is_seeded_and_sized() {
        let mut e = env(EnvConfig::default());
        let a = e.env_reset(7).unwrap();
        let b = e.env_reset(7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 6);
        assert_eq!(a.prev_action, [0.0; 2]);
        let c = e.env_reset(8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_free_reset_is_the_nominal_stand() {
        let mut e = env(EnvConfig {
            joint_noise: 0.0,
            rate_noise: 0.0,
            ..EnvConfig::default()
        });
        e.env_reset(1).unwrap();
        let nominal = crate::sim::RobotState::standing(&RobotModel::default(), 1.0, Leg::Left).unwrap();
        assert_eq!(e.walker().unwrap().state(), &nominal);
    }

    #[test]
    fn time_limit_truncates_without_failure() {
        let mut e = env(EnvConfig {
            episode_steps: 30,
            v_des_min: 0.2,
            v_des_max: 0.2,
            ..EnvConfig::default()
        });
        e.env_reset(3).unwrap();
        let mut last = None;
        for k in 0..30 {
            let (_, r, done, info) = e.env_step(&PolicyAction::default()).unwrap();
            assert!(r > 0.0 && r <= 1.0);
            assert_eq!(done, k == 29);
            last = Some(info);
        }
        let info = last.unwrap();
        assert!(info.truncated && !info.terminated);
        assert!((e.walker().unwrap().state().time - 0.6).abs() < 1e-9);
    }

    #[test]
    fn low_base_height_terminates() {
        let mut e = env(EnvConfig::default());
        e.env_reset(4).unwrap();
        let state = e.walker().unwrap().state().clone();
        let mut w = Walker::new(RobotModel::default(), WalkerConfig::default(), state).unwrap();
        w.set_height_reference(Some(0.6));
        e.walker = Some(w);
        let mut terminated = false;
        for _ in 0..100 {
            let (_, _, done, info) = e.env_step(&PolicyAction::default()).unwrap();
            if done {
                terminated = info.terminated;
                break;
            }
        }
        assert!(terminated);
        assert!(e.walker().unwrap().state().q[1] < 0.8);
    }

    #[test]
    fn same_seed_and_actions_give_identical_trajectories() {
        let run = || {
            let mut e = env(EnvConfig::default());
            e.env_reset(11).unwrap();
            let mut out = Vec::new();
            for k in 0..40 {
                let a = PolicyAction::clipped(0.1 * ((k % 5) as f64 - 2.0), 0.05);
                let (o, r, _, _) = e.env_step(&a).unwrap();
                out.push((o.to_vec(), r));
            }
            (out, e.walker().unwrap().state().clone())
        };
        assert_eq!(run(), run());
    }
}
