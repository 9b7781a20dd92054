use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::trajectory::{swing_trajectory, GaitSchedule};
use crate::error::{Error, Result};
use crate::sim::dynamics::dynamics_terms;
use crate::sim::kinematics::foot_kinematics;
use crate::sim::{RobotModel, RobotState, Vec9, NQ};

/// Bound on both action components (m and m/s).
pub const ACTION_BOUND: f64 = 0.5;

/// Vertical speed of the swing reference once the nominal step time has elapsed
/// without touchdown (m/s).
pub const LATE_DESCENT_RATE: f64 = 0.2;

/// Regularization on joint accelerations in the task solve.
const ACCEL_REGULARIZATION: f64 = 1e-9;

/// Landing target of the swing foot relative to the base, and an offset added to the
/// commanded base velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyAction {
    /// m
    pub landing_offset: f64,
    /// m/s
    pub velocity_offset: f64,
}

impl PolicyAction {
    pub fn new(landing_offset: f64, velocity_offset: f64) -> Result<Self> {
        let a = Self {
            landing_offset,
            velocity_offset,
        };
        if a.within_bounds() {
            Ok(a)
        } else {
            Err(Error::Range(format!(
                "action ({landing_offset}, {velocity_offset}) exceeds bound {ACTION_BOUND}"
            )))
        }
    }

    pub fn clipped(landing_offset: f64, velocity_offset: f64) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-ACTION_BOUND, ACTION_BOUND) };
        Self {
            landing_offset: c(landing_offset),
            velocity_offset: c(velocity_offset),
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.landing_offset.abs() <= ACTION_BOUND && self.velocity_offset.abs() <= ACTION_BOUND
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.landing_offset, self.velocity_offset]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskReferences {
    /// Swing ankle (x, z).
    pub swing_position: [f64; 2],
    pub swing_velocity: [f64; 2],
    pub swing_acceleration: [f64; 2],
    /// Swing sole pitch, flat by default.
    pub swing_pitch: f64,
    pub base_height: f64,
    pub base_height_rate: f64,
    pub base_velocity: f64,
    pub torso_pitch: f64,
}

/// Swing references continue past the nominal step: x holds the target and z keeps
/// descending until touchdown is detected.
pub fn assemble_task_refs(
    model: &RobotModel,
    action: &PolicyAction,
    v_cmd: f64,
    schedule: &GaitSchedule,
    state: &RobotState,
) -> Result<TaskReferences> {
    let target_x = state.q[0] + action.landing_offset;
    let fraction = state.phase / schedule.step_duration;
    let swing = if fraction <= 1.0 {
        swing_trajectory(schedule, fraction.max(0.0), target_x)?
    } else {
        let late = state.phase - schedule.step_duration;
        let end = swing_trajectory(schedule, 1.0, target_x)?;
        super::trajectory::SwingReference {
            position: [end.position[0], -LATE_DESCENT_RATE * late],
            velocity: [0.0, -LATE_DESCENT_RATE],
            acceleration: [0.0, 0.0],
        }
    };
    Ok(TaskReferences {
        swing_position: swing.position,
        swing_velocity: swing.velocity,
        swing_acceleration: swing.acceleration,
        swing_pitch: 0.0,
        base_height: model.nominal_base_height,
        base_height_rate: 0.0,
        base_velocity: v_cmd + action.velocity_offset,
        torso_pitch: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TscGains {
    pub kp: f64,
    pub kd: f64,
    pub swing_weight: f64,
    pub height_weight: f64,
    pub velocity_weight: f64,
    pub pitch_weight: f64,
    pub swing_pitch_weight: f64,
}

impl Default for TscGains {
    fn default() -> Self {
        Self {
            kp: 400.0,
            kd: 40.0,
            swing_weight: 10.0,
            height_weight: 5.0,
            velocity_weight: 5.0,
            pitch_weight: 2.0,
            swing_pitch_weight: 1.0,
        }
    }
}

impl TscGains {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kp,
            self.kd,
            self.swing_weight,
            self.height_weight,
            self.velocity_weight,
            self.pitch_weight,
            self.swing_pitch_weight,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("controller gains and weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub(crate) const NTASK: usize = 6;
type TaskJac = SMatrix<f64, NTASK, NQ>;
type TaskVec = SVector<f64, NTASK>;

/// Task rows: swing x, swing z, swing pitch, base z, base x (velocity), torso pitch.
pub(crate) struct TaskSet {
    pub jac: TaskJac,
    /// `J̇ q̇` per task.
    pub bias: TaskVec,
    /// Commanded task accelerations.
    pub commanded: TaskVec,
    pub weights: TaskVec,
}

pub(crate) fn task_set(model: &RobotModel, state: &RobotState, refs: &TaskReferences, gains: &TscGains) -> TaskSet {
    let k = crate::sim::forward_kinematics(model, state);
    let swing = k.foot(state.stance.other());
    let mut jac = TaskJac::zeros();
    jac.fixed_rows_mut::<3>(0).copy_from(&swing.jacobian);
    jac[(3, 1)] = 1.0;
    jac[(4, 0)] = 1.0;
    jac[(5, 2)] = 1.0;
    let mut bias = TaskVec::zeros();
    bias.fixed_rows_mut::<3>(0).copy_from(&swing.bias);
    let (q, dq) = (&state.q, &state.dq);
    let pd = |acc: f64, pos_ref: f64, pos: f64, vel_ref: f64, vel: f64| {
        acc + gains.kd * (vel_ref - vel) + gains.kp * (pos_ref - pos)
    };
    let commanded = TaskVec::from([
        pd(
            refs.swing_acceleration[0],
            refs.swing_position[0],
            swing.pose[0],
            refs.swing_velocity[0],
            swing.velocity[0],
        ),
        pd(
            refs.swing_acceleration[1],
            refs.swing_position[1],
            swing.pose[1],
            refs.swing_velocity[1],
            swing.velocity[1],
        ),
        pd(0.0, refs.swing_pitch, swing.pose[2], 0.0, swing.velocity[2]),
        pd(0.0, refs.base_height, q[1], refs.base_height_rate, dq[1]),
        gains.kd * (refs.base_velocity - dq[0]),
        pd(0.0, refs.torso_pitch, q[2], 0.0, dq[2]),
    ]);
    let weights = TaskVec::from([
        gains.swing_weight,
        gains.swing_weight,
        gains.swing_pitch_weight,
        gains.height_weight,
        gains.velocity_weight,
        gains.pitch_weight,
    ]);
    TaskSet {
        jac,
        bias,
        commanded,
        weights,
    }
}

/// Weighted least-squares inverse dynamics under the stance weld, followed by clipping
/// to the model torque limits.
pub fn task_space_controller(
    model: &RobotModel,
    state: &RobotState,
    refs: &TaskReferences,
    gains: &TscGains,
) -> Result<[f64; 6]> {
    let q = Vec9::from(state.q);
    let dq = Vec9::from(state.dq);
    let (m, h, set) = dynamics_terms(model, &q, &dq);
    let contact = foot_kinematics(&set.frames, &set.legs[state.stance.index()], state.stance);
    let tasks = task_set(model, state, refs, gains);

    // [H  Jcᵀ] [q̈]   [JᵀW(ÿ* − J̇q̇)]
    // [Jc  0 ] [μ ] = [−J̇c q̇       ]
    let w = SMatrix::<f64, NTASK, NTASK>::from_diagonal(&tasks.weights);
    let jtw = tasks.jac.transpose() * w;
    let hess = jtw * tasks.jac + SMatrix::<f64, NQ, NQ>::identity() * ACCEL_REGULARIZATION;
    let mut kkt = SMatrix::<f64, 12, 12>::zeros();
    kkt.fixed_view_mut::<NQ, NQ>(0, 0).copy_from(&hess);
    kkt.fixed_view_mut::<NQ, 3>(0, NQ).copy_from(&contact.jacobian.transpose());
    kkt.fixed_view_mut::<3, NQ>(NQ, 0).copy_from(&contact.jacobian);
    let mut rhs = SVector::<f64, 12>::zeros();
    rhs.fixed_rows_mut::<NQ>(0)
        .copy_from(&(jtw * (tasks.commanded - tasks.bias)));
    rhs.fixed_rows_mut::<3>(NQ).copy_from(&(-contact.bias));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Control(format!("singular task system at t = {}", state.time)))?;
    let ddq: Vec9 = sol.fixed_rows::<NQ>(0).into_owned();

    // Unactuated rows fix the contact force; the joint rows then give the torques.
    let f = m * ddq + h;
    let ju = contact.jacobian.fixed_columns::<3>(0).into_owned();
    let lambda = ju
        .transpose()
        .lu()
        .solve(&Vector3::new(f[0], f[1], f[2]))
        .ok_or_else(|| Error::Control(format!("contact force not resolvable at t = {}", state.time)))?;
    let tau_full = f - contact.jacobian.transpose() * lambda;
    let mut tau = [0.0; 6];
    for (i, t) in tau.iter_mut().enumerate() {
        let lim = model.torque_limits[i];
        *t = tau_full[3 + i].clamp(-lim, lim);
    }
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::Control(format!("non-finite torque at t = {}", state.time)));
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{continuous_dynamics, step_integrate, Leg};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standing_refs(model: &RobotModel, state: &RobotState) -> TaskReferences {
        let k = crate::sim::forward_kinematics(model, state);
        let sw = k.foot(state.stance.other()).pose;
        TaskReferences {
            swing_position: [sw[0], sw[1]],
            swing_velocity: [0.0; 2],
            swing_acceleration: [0.0; 2],
            swing_pitch: 0.0,
            base_height: model.nominal_base_height,
            base_height_rate: 0.0,
            base_velocity: 0.0,
            torso_pitch: 0.0,
        }
    }

    #[test]
    fn action_bounds() {
        assert!(PolicyAction::new(0.5, -0.5).is_ok());
        assert!(matches!(PolicyAction::new(0.51, 0.0), Err(Error::Range(_))));
        let a = PolicyAction::clipped(3.0, -7.0);
        assert_eq!(a.to_array(), [0.5, -0.5]);
    }

    #[test]
    fn assembled_refs_compose_command_and_offsets() {
        let model = RobotModel::default();
        let mut sched = GaitSchedule::default();
        let s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        sched.start = Some([0.0, 0.0]);
        let r = assemble_task_refs(&model, &PolicyAction::default(), 0.0, &sched, &s).unwrap();
        assert_eq!(r.base_velocity, 0.0);
        assert_eq!(r.base_height, model.nominal_base_height);
        assert_eq!(r.torso_pitch, 0.0);
        let r = assemble_task_refs(&model, &PolicyAction::new(0.0, 0.2).unwrap(), 0.5, &sched, &s).unwrap();
        assert!((r.base_velocity - 0.7).abs() < 1e-15);

        let mut s3 = s.shifted_x(3.0);
        s3.phase = sched.step_duration;
        let r = assemble_task_refs(&model, &PolicyAction::new(0.2, 0.0).unwrap(), 0.0, &sched, &s3).unwrap();
        assert!((r.swing_position[0] - 3.2).abs() < 1e-12);

        s3.phase = 1.1 * sched.step_duration;
        let r = assemble_task_refs(&model, &PolicyAction::new(0.2, 0.0).unwrap(), 0.0, &sched, &s3).unwrap();
        assert!(r.swing_position[1] < 0.0 && r.swing_velocity[1] < 0.0);
    }

    #[test]
    fn on_reference_gives_zero_commanded_acceleration() {
        let model = RobotModel::default();
        let s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        let refs = standing_refs(&model, &s);
        let t = task_set(&model, &s, &refs, &TscGains::default());
        assert!(t.commanded.amax() < 1e-12);
    }

    #[test]
    fn zero_limits_give_zero_torque() {
        let mut model = RobotModel::default();
        model.torque_limits = [0.0; 6];
        let s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        let tau = task_space_controller(&model, &s, &standing_refs(&model, &s), &TscGains::default()).unwrap();
        assert_eq!(tau, [0.0; 6]);
    }

    #[test]
    fn achieved_task_accelerations_match_commanded() {
        let mut model = RobotModel::default();
        model.torque_limits = [1e12; 6];
        let gains = TscGains::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let stance = if rng.random::<bool>() { Leg::Left } else { Leg::Right };
            let mut s = RobotState::standing(&model, 1.0, stance).unwrap();
            for i in 2..NQ {
                s.q[i] += rng.random_range(-0.15..0.15);
            }
            for v in s.dq.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
            let mut s = RobotState::new(&model, s.q, s.dq, stance);
            crate::sim::dynamics::project_to_contact(&model, &mut s).unwrap();
            let mut refs = standing_refs(&model, &s);
            refs.swing_position[0] += rng.random_range(-0.1..0.1);
            refs.swing_position[1] += rng.random_range(0.0..0.1);
            refs.swing_acceleration = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            refs.base_velocity = rng.random_range(-0.5..0.5);
            let tau = task_space_controller(&model, &s, &refs, &gains).unwrap();
            let d = continuous_dynamics(&model, &s, &tau, 0.0).unwrap();
            let t = task_set(&model, &s, &refs, &gains);
            let achieved = t.jac * Vec9::from(d.ddq) + t.bias;
            let err = (achieved - t.commanded).amax();
            assert!(err < 1e-6, "task acceleration error {err}");
        }
    }

    #[test]
    fn recovers_upright_torso_from_perturbed_stand() {
        use rand_distr::{Distribution, Normal};
        let model = RobotModel::default();
        let gains = TscGains::default();
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nominal = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        for _ in 0..5 {
            let mut q = nominal.q;
            for v in q.iter_mut().skip(2) {
                *v += noise.sample(&mut rng);
            }
            let mut s = RobotState::new(&model, q, [0.0; NQ], Leg::Left);
            let mut refs = standing_refs(&model, &nominal);
            refs.swing_position[1] = 0.05;
            let mut settled_at = None;
            for k in 0..2000 {
                let tau = task_space_controller(&model, &s, &refs, &gains).unwrap();
                s = step_integrate(&model, &s, &tau, 1e-3, None).unwrap();
                if s.q[2].abs() < 0.01 && settled_at.is_none() {
                    settled_at = Some(k);
                } else if s.q[2].abs() >= 0.01 {
                    settled_at = None;
                }
            }
            assert!(settled_at.is_some(), "torso pitch {}", s.q[2]);
        }
    }
}
