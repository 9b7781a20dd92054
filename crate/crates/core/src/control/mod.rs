//! Action-to-reference translation, the task-space controller, and the closed-loop
//! walker shared by data collection, the RL environment and evaluation.

mod frame;
mod trajectory;
mod tsc;
mod walker;

pub use frame::{stance_frame_transform, FEATURE_NAMES, NFEATURES};
pub use trajectory::{min_jerk, swing_trajectory, GaitSchedule, SwingReference};
pub use tsc::{
    assemble_task_refs, task_space_controller, PolicyAction, TaskReferences, TscGains, ACTION_BOUND,
    LATE_DESCENT_RATE,
};
pub use walker::{average_velocity, TickInfo, Walker, WalkerConfig, VELOCITY_WINDOW};
