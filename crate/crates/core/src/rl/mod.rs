mod buffer;
mod checkpoint;
mod env;
mod obs;
mod policy;
mod ppo;
mod reward;

pub use buffer::{gae_advantages, RolloutBuffer, Segment, Transition};
pub use checkpoint::{load_policy, save_policy, LearnedPolicy, POLICY_FILE, POLICY_SIDECAR, VALUE_FILE};
pub use env::{observe, EnvConfig, EnvStepInfo, Environment, GaitEnv, StepResult};
pub use obs::{ObsNormalizer, Observation, OBS_CLIP};
pub use policy::{PolicyNet, SampledAction, ValueNet, ACTION_DIM, POLICY_HIDDEN, SQUASH_EPS};
pub use ppo::{curves_csv, ppo_update, CurveRow, PpoBatch, PpoConfig, PpoOptimizers, PpoStats, PpoTrainer};
pub use reward::{compute_reward, REWARD_WEIGHTS};
