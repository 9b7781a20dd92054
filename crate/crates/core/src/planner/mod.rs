//! Linear-inverted-pendulum foot placement: the model-based baseline and the data
//! collection controller.

use serde::{Deserialize, Serialize};

use crate::control::PolicyAction;
use crate::error::{Error, Result};
use crate::sim::{com_state, forward_kinematics, RobotModel, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipParams {
    /// Pendulum height (m).
    pub height: f64,
    /// `sqrt(g / height)` (1/s).
    pub lambda: f64,
    /// s
    pub step_duration: f64,
}

impl LipParams {
    pub fn new(height: f64, step_duration: f64, gravity: f64) -> Result<Self> {
        if !(height > 0.0 && step_duration > 0.0 && gravity > 0.0) {
            return Err(Error::Argument(format!(
                "pendulum height {height}, step duration {step_duration} and gravity {gravity} must be positive"
            )));
        }
        Ok(Self {
            height,
            lambda: (gravity / height).sqrt(),
            step_duration,
        })
    }

    /// Pendulum at the model's nominal base height.
    pub fn for_model(model: &RobotModel, step_duration: f64) -> Result<Self> {
        Self::new(model.nominal_base_height, step_duration, model.gravity)
    }
}

/// Closed-form pendulum flow from `(x0, v0)` over `t` seconds.
pub fn lip_flow(x0: f64, v0: f64, t: f64, params: &LipParams) -> (f64, f64) {
    let l = params.lambda;
    let (s, c) = ((l * t).sinh(), (l * t).cosh());
    (x0 * c + v0 / l * s, x0 * l * s + v0 * c)
}

/// Next stance location relative to the CoM at the end of the current step, chosen so the
/// pendulum reaches `v_des` at the end of the following step. The current step is
/// predicted over `time_to_touchdown`.
pub fn foot_placement(com_x_rel_stance: f64, com_vx: f64, v_des: f64, time_to_touchdown: f64, params: &LipParams) -> f64 {
    let (_, v_end) = lip_flow(com_x_rel_stance, com_vx, time_to_touchdown.max(0.0), params);
    let lt = params.lambda * params.step_duration;
    (v_end * lt.cosh() - v_des) / (params.lambda * lt.sinh())
}

/// Placement expressed as a landing offset from the current base position; the base
/// velocity command is passed through unchanged.
pub fn baseline_action(model: &RobotModel, state: &RobotState, v_des: f64, params: &LipParams) -> PolicyAction {
    let com = com_state(model, state);
    let ankle = forward_kinematics(model, state).foot(state.stance).pose[0];
    let x_rel = com.position[0] - ankle;
    let remaining = (params.step_duration - state.phase).max(0.0);
    let (x_end, _) = lip_flow(x_rel, com.velocity[0], remaining, params);
    let p = foot_placement(x_rel, com.velocity[0], v_des, remaining, params);
    PolicyAction::clipped(ankle + x_end + p - state.q[0], 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Leg;

    fn params() -> LipParams {
        LipParams::new(1.0, 0.4, 9.81).unwrap()
    }

    // Independent RK4 integration of x'' = lambda^2 x.
    fn rk4_oracle(x0: f64, v0: f64, t: f64, l2: f64) -> (f64, f64) {
        let n = 20000;
        let h = t / n as f64;
        let (mut x, mut v) = (x0, v0);
        for _ in 0..n {
            let f = |x: f64, v: f64| (v, l2 * x);
            let k1 = f(x, v);
            let k2 = f(x + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(x + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (x, v)
    }

    #[test]
    fn flow_matches_oracles() {
        let p = params();
        assert_eq!(lip_flow(0.3, -0.2, 0.0, &p), (0.3, -0.2));
        assert_eq!(lip_flow(0.0, 0.0, 2.0, &p), (0.0, 0.0));
        let (x, _) = lip_flow(0.1, 0.0, 0.4, &p);
        assert!((x - 0.1 * (0.4 * 9.81f64.sqrt()).cosh()).abs() < 1e-15);
        assert!((x - 0.189298).abs() < 1e-6);
        let (xo, vo) = rk4_oracle(0.05, 0.4, 0.37, 9.81);
        let (xf, vf) = lip_flow(0.05, 0.4, 0.37, &p);
        assert!((xo - xf).abs() < 1e-10 && (vo - vf).abs() < 1e-10);
        assert!(LipParams::new(0.0, 0.4, 9.81).is_err());
    }

    #[test]
    fn flow_satisfies_pendulum_ode() {
        let p = params();
        let h = 1e-4;
        for k in 0..20 {
            let t = 0.05 * k as f64 + h;
            let x = |t| lip_flow(0.07, -0.3, t, &p).0;
            let acc = (x(t + h) - 2.0 * x(t) + x(t - h)) / (h * h);
            assert!((acc - p.lambda * p.lambda * x(t)).abs() < 1e-6 * (1.0 + x(t).abs()) * 1e1);
        }
    }

    /// Step-to-step rollout on the exact pendulum from rest: each step plans with a full
    /// step remaining, then the CoM restarts at minus the placement with the same speed.
    fn rollout(v_des: f64, steps: usize) -> Vec<f64> {
        let p = params();
        let (mut x, mut v) = (0.0, 0.0);
        let mut ends = Vec::new();
        for _ in 0..steps {
            let place = foot_placement(x, v, v_des, p.step_duration, &p);
            let (_, ve) = lip_flow(x, v, p.step_duration, &p);
            ends.push(ve);
            x = -place;
            v = ve;
        }
        ends
    }

    #[test]
    fn dead_beat_within_three_steps() {
        for v_des in [-0.5, 0.0, 0.5, 1.0] {
            let ends = rollout(v_des, 3);
            let err = (ends[2] - v_des).abs();
            assert!(err <= 0.02 * f64::max(1.0, v_des.abs()), "v_des {v_des}: {ends:?}");
        }
    }

    #[test]
    fn periodic_orbit_is_a_fixed_point() {
        let p = params();
        for v in [0.3, 0.8] {
            // Symmetric orbit: start at -d with end-of-step speed v, end at +d with v.
            let lt = p.lambda * p.step_duration;
            let d = v * (lt / 2.0).tanh() / p.lambda;
            let v_start = v;
            let (xe, ve) = lip_flow(-d, v_start, p.step_duration, &p);
            assert!((xe - d).abs() < 1e-12 && (ve - v).abs() < 1e-12);
            let place = foot_placement(-d, v_start, v, p.step_duration, &p);
            assert!((place - d).abs() < 1e-12, "placement {place} vs half step {d}");
        }
        let left = foot_placement(-0.1, 0.2, 0.0, 0.2, &p);
        let right = foot_placement(0.1, -0.2, 0.0, 0.2, &p);
        assert!((left + right).abs() < 1e-15);
    }

    #[test]
    fn baseline_action_is_pure_and_bounded() {
        let model = RobotModel::default();
        let p = LipParams::for_model(&model, 0.4).unwrap();
        let mut s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        s.dq[0] = 5.0;
        let a = baseline_action(&model, &s, 3.0, &p);
        assert!(a.within_bounds());
        assert_eq!(a, baseline_action(&model, &s, 3.0, &p));
        assert_eq!(a.velocity_offset, 0.0);
    }
}
