use crate::sim::{forward_kinematics, RobotModel, RobotState, NQ};

pub const NFEATURES: usize = 2 * NQ;

/// Column order of the stance-frame feature vector.
pub const FEATURE_NAMES: [&str; NFEATURES] = [
    "base_x_rel", "base_z_rel", "torso_pitch", "hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r",
    "d_base_x", "d_base_z", "d_torso_pitch", "d_hip_l", "d_knee_l", "d_ankle_l", "d_hip_r", "d_knee_r",
    "d_ankle_r",
];

/// Base position relative to the stance ankle, then the remaining coordinates and all
/// rates in generalized-coordinate order. The offset is evaluated with the base at the
/// origin so the result does not depend on the world position at all.
pub fn stance_frame_transform(model: &RobotModel, state: &RobotState) -> [f64; NFEATURES] {
    let mut local = state.clone();
    local.q[0] = 0.0;
    local.q[1] = 0.0;
    let ankle = forward_kinematics(model, &local).foot(state.stance).pose;
    let mut out = [0.0; NFEATURES];
    out[0] = -ankle[0];
    out[1] = -ankle[1];
    out[2..NQ].copy_from_slice(&state.q[2..]);
    out[NQ..].copy_from_slice(&state.dq);
    out
}
