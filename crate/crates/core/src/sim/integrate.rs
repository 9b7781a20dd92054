use serde::{Deserialize, Serialize};

use super::dynamics::{constrained_accel, project_to_contact};
use super::kinematics::kinematics_qd;
use super::{RobotModel, RobotState, Vec9};
use crate::error::{Error, Result};

/// Largest accepted integration step (s).
pub const MAX_DT: f64 = 0.005;

/// Horizontal push on the base, active on `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// N
    pub force: f64,
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
}

impl Disturbance {
    pub fn new(force: f64, start: f64, duration: f64) -> Result<Self> {
        if !(duration >= 0.0) || !force.is_finite() || !start.is_finite() {
            return Err(Error::Argument("disturbance needs finite force/start and duration >= 0".into()));
        }
        Ok(Self {
            force,
            start,
            duration,
        })
    }

    pub fn force_at(&self, t: f64) -> f64 {
        if t >= self.start && t < self.start + self.duration {
            self.force
        } else {
            0.0
        }
    }
}

/// One classical RK4 step of the stance flow followed by projection back onto the weld.
pub fn step_integrate(
    model: &RobotModel,
    state: &RobotState,
    torques: &[f64; 6],
    dt: f64,
    disturbance: Option<&Disturbance>,
) -> Result<RobotState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Range(format!("dt = {dt} s must lie in (0, {MAX_DT}]")));
    }
    let force = |t: f64| disturbance.map_or(0.0, |d| d.force_at(t));
    let t0 = state.time;
    let q0 = Vec9::from(state.q);
    let v0 = Vec9::from(state.dq);
    let accel = |q: &Vec9, v: &Vec9, t: f64| constrained_accel(model, q, v, state.stance, torques, force(t));

    let a1 = accel(&q0, &v0, t0)?;
    let (q2, v2) = (q0 + v0 * (0.5 * dt), v0 + a1 * (0.5 * dt));
    let a2 = accel(&q2, &v2, t0 + 0.5 * dt)?;
    let (q3, v3) = (q0 + v2 * (0.5 * dt), v0 + a2 * (0.5 * dt));
    let a3 = accel(&q3, &v3, t0 + 0.5 * dt)?;
    let (q4, v4) = (q0 + v3 * dt, v0 + a3 * dt);
    let a4 = accel(&q4, &v4, t0 + dt)?;

    let q = q0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
    let v = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let mut next = RobotState {
        q: q.into(),
        dq: v.into(),
        stance: state.stance,
        time: t0 + dt,
        phase: state.phase + dt,
        anchor: state.anchor,
    };
    project_to_contact(model, &mut next)?;
    if !next.is_finite() {
        return Err(Error::Numeric(format!("state after step at t = {t0}")));
    }
    Ok(next)
}

fn lerp(a: &RobotState, b: &RobotState, alpha: f64) -> (Vec9, Vec9) {
    let q = Vec9::from_fn(|i, _| a.q[i] + alpha * (b.q[i] - a.q[i]));
    let dq = Vec9::from_fn(|i, _| a.dq[i] + alpha * (b.dq[i] - a.dq[i]));
    (q, dq)
}

/// Locates the first downward crossing of ground height by the swing foot's lowest
/// point within one integration step, as a fraction of that step. The returned
/// fraction always has interpolated height <= 0 (or within 1e-8 m of it).
pub fn detect_touchdown(before: &RobotState, after: &RobotState, model: &RobotModel) -> Option<f64> {
    const HEIGHT_TOL: f64 = 1e-8;
    let swing = before.stance.other();
    let height = |alpha: f64| {
        let (q, dq) = lerp(before, after, alpha);
        let f = kinematics_qd(model, &q, &dq);
        let foot = f.foot(swing);
        (foot.lowest_height, foot.lowest_velocity)
    };
    let (h0, _) = height(0.0);
    let (h1, v1) = height(1.0);
    if h0 <= 0.0 || h1 > HEIGHT_TOL || !(v1 < 0.0 || h1 < h0) {
        return None;
    }
    if h1 >= -HEIGHT_TOL {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (h, _) = height(mid);
        if h > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if h.abs() <= HEIGHT_TOL && h <= 0.0 {
            return Some(mid);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(hi)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{forward_kinematics, mechanical_energy, Leg, CONTACT_TOL};

    #[test]
    fn rejects_non_positive_or_large_dt() {
        let model = RobotModel::default();
        let s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        assert!(matches!(step_integrate(&model, &s, &[0.0; 6], 0.0, None), Err(Error::Range(_))));
        assert!(step_integrate(&model, &s, &[0.0; 6], 0.01, None).is_err());
    }

    /// Robot hanging head-down from its welded stance foot, swing leg dangling beside
    /// the torso: a bounded, unactuated multi-link swing.
    pub(crate) fn hanging_state(model: &RobotModel) -> RobotState {
        let mut q = [0.0; crate::sim::NQ];
        q[1] = 2.0;
        q[2] = std::f64::consts::PI + 0.3;
        q[4] = 0.2;
        q[5] = -std::f64::consts::PI;
        q[6] = std::f64::consts::PI - 0.4;
        q[7] = 0.3;
        let mut dq = [0.0; crate::sim::NQ];
        dq[6] = 0.5;
        let mut s = RobotState::new(model, q, dq, Leg::Left);
        crate::sim::dynamics::project_to_contact(model, &mut s).unwrap();
        s
    }

    fn energy_drift(model: &RobotModel, s: RobotState, seconds: f64) -> f64 {
        let e0 = mechanical_energy(model, &s);
        let mut cur = s;
        let mut worst = 0.0f64;
        for _ in 0..(seconds / 1e-3).round() as usize {
            cur = step_integrate(model, &cur, &[0.0; 6], 1e-3, None).unwrap();
            worst = worst.max((mechanical_energy(model, &cur) - e0).abs());
            let p = forward_kinematics(model, &cur).foot(cur.stance).pose;
            let r = (0..3).map(|i| (p[i] - cur.anchor[i]).abs()).fold(0.0, f64::max);
            assert!(r < CONTACT_TOL, "contact residual {r}");
        }
        worst
    }

    #[test]
    fn unactuated_swing_conserves_energy() {
        let model = RobotModel::default();
        let drift = energy_drift(&model, hanging_state(&model), 1.0);
        assert!(drift < 1e-3, "energy drift {drift}");
    }

    #[test]
    fn early_unactuated_collapse_conserves_energy() {
        let model = RobotModel::default();
        let mut s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        s.q[2] += 0.05;
        s.q[6] += 0.3;
        let s = RobotState::new(&model, s.q, s.dq, Leg::Left);
        let drift = energy_drift(&model, s, 0.5);
        assert!(drift < 1e-6, "energy drift {drift}");
    }

    #[test]
    fn identical_inputs_give_bitwise_identical_trajectories() {
        let model = RobotModel::default();
        let s = RobotState::standing(&model, 1.0, Leg::Right).unwrap();
        let d = Disturbance::new(20.0, 0.01, 0.02).unwrap();
        let run = || {
            let mut cur = s.clone();
            for i in 0..50 {
                let tau = [i as f64 * 0.1, -1.0, 2.0, 0.5, 0.0, -3.0];
                cur = step_integrate(&model, &cur, &tau, 1e-3, Some(&d)).unwrap();
            }
            cur
        };
        let (a, b) = (run(), run());
        assert!(a.q.iter().zip(b.q.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rk4_local_error_shrinks_at_fifth_order() {
        let model = RobotModel::default();
        let mut s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        s.q[2] += 0.1;
        let s = RobotState::new(&model, s.q, s.dq, Leg::Left);
        let tau = [5.0, -3.0, 1.0, 2.0, 4.0, -1.0];
        let reference = |h: f64| {
            let mut cur = s.clone();
            let n = (h / 1e-5).round() as usize;
            for _ in 0..n {
                cur = step_integrate(&model, &cur, &tau, 1e-5, None).unwrap();
            }
            cur
        };
        let err = |h: f64| {
            let one = step_integrate(&model, &s, &tau, h, None).unwrap();
            let r = reference(h);
            one.q.iter().zip(r.q.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let e1 = err(4e-3);
        let e2 = err(2e-3);
        let ratio = e1 / e2;
        // local error is O(h^5): ratio ~32; anything clearly above 16 confirms >= 4th order
        assert!(ratio > 12.0, "error ratio {ratio} ({e1} / {e2})");
    }

    fn with_swing_height(model: &RobotModel, knee_offset: f64) -> RobotState {
        let mut s = RobotState::standing(model, 1.0, Leg::Left).unwrap();
        s.q[7] += knee_offset;
        s.q[8] -= knee_offset;
        RobotState::new(model, s.q, s.dq, Leg::Left)
    }

    #[test]
    fn rising_foot_has_no_touchdown() {
        let model = RobotModel::default();
        let a = with_swing_height(&model, -0.01);
        let b = with_swing_height(&model, -0.02);
        assert!(detect_touchdown(&a, &b, &model).is_none());
    }

    #[test]
    fn touchdown_fraction_brackets_ground() {
        let model = RobotModel::default();
        let mut a = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        let mut b = a.clone();
        // move the base (and so the whole swing leg) vertically: foot height is linear in it
        a.q[1] += 1e-3;
        b.q[1] -= 1e-3;
        b.dq[1] = -0.1;
        let alpha = detect_touchdown(&a, &b, &model).unwrap();
        assert!((alpha - 0.5).abs() < 1e-3, "{alpha}");
        let mut c = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        c.dq[1] = -0.1;
        assert_eq!(detect_touchdown(&a, &c, &model), Some(1.0));
    }
}
