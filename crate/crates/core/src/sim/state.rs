use serde::{Deserialize, Serialize};

use super::kinematics::forward_kinematics;
use super::RobotModel;
use crate::error::{Error, Result};

pub const NQ: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    Left,
    Right,
}

impl Leg {
    pub fn other(self) -> Leg {
        match self {
            Leg::Left => Leg::Right,
            Leg::Right => Leg::Left,
        }
    }

    /// Index of the hip coordinate; knee and ankle follow it.
    pub fn hip_index(self) -> usize {
        match self {
            Leg::Left => 3,
            Leg::Right => 6,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Leg::Left => 0,
            Leg::Right => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }
}

/// Full-order planar state plus the contact bookkeeping of the hybrid system.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: [f64; NQ],
    pub dq: [f64; NQ],
    pub stance: Leg,
    /// s
    pub time: f64,
    /// s since the last support switch
    pub phase: f64,
    /// Welded stance-ankle pose (x, z, pitch) fixed at touchdown.
    pub anchor: [f64; 3],
}

impl RobotState {
    /// State whose weld anchor is the stance ankle's current pose.
    pub fn new(model: &RobotModel, q: [f64; NQ], dq: [f64; NQ], stance: Leg) -> Self {
        let mut s = Self {
            q,
            dq,
            stance,
            time: 0.0,
            phase: 0.0,
            anchor: [0.0; 3],
        };
        s.anchor = forward_kinematics(model, &s).foot(stance).pose;
        s
    }

    /// Upright torso, flat feet side by side under the hip, knees bent forward so the
    /// base sits at `base_height`.
    pub fn standing(model: &RobotModel, base_height: f64, stance: Leg) -> Result<Self> {
        let d = base_height - model.torso.com_offset;
        let (l1, l2) = (model.thigh.length, model.shank.length);
        if !(d > (l1 - l2).abs() && d < l1 + l2) {
            return Err(Error::Argument(format!(
                "base height {base_height} m is not reachable with the leg geometry"
            )));
        }
        let thigh = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).acos();
        let shank = -(l1 * thigh.sin() / l2).asin();
        let mut q = [0.0; NQ];
        q[1] = base_height;
        for leg in [Leg::Left, Leg::Right] {
            let h = leg.hip_index();
            q[h] = thigh;
            q[h + 1] = shank - thigh;
            q[h + 2] = -shank;
        }
        Ok(Self::new(model, q, [0.0; NQ], stance))
    }

    /// Sets the stance ankle so the stance sole is flat, lowers or raises the base so the
    /// sole rests at height 0, and removes rate components that violate the weld.
    pub fn grounded(model: &RobotModel, q: [f64; NQ], dq: [f64; NQ], stance: Leg) -> Result<Self> {
        let mut q = q;
        let h = stance.hip_index();
        q[h + 2] = -(q[2] + q[h] + q[h + 1]);
        let probe = Self::new(model, q, dq, stance);
        q[1] -= probe.anchor[1];
        let mut s = Self::new(model, q, dq, stance);
        super::dynamics::project_to_contact(model, &mut s)?;
        if !s.is_finite() {
            return Err(Error::Numeric("grounded state".into()));
        }
        Ok(s)
    }

    /// Left/right joint values exchanged (stance leg swapped accordingly).
    pub fn mirrored(&self, model: &RobotModel) -> Self {
        let mut q = self.q;
        let mut dq = self.dq;
        for k in 0..3 {
            q.swap(3 + k, 6 + k);
            dq.swap(3 + k, 6 + k);
        }
        let mut s = Self::new(model, q, dq, self.stance.other());
        s.time = self.time;
        s.phase = self.phase;
        s
    }

    /// Rigid horizontal translation of the whole robot, anchor included.
    pub fn shifted_x(&self, dx: f64) -> Self {
        let mut s = self.clone();
        s.q[0] += dx;
        s.anchor[0] += dx;
        s
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }

    pub fn joint_angles(&self) -> [f64; 6] {
        let mut j = [0.0; 6];
        j.copy_from_slice(&self.q[3..]);
        j
    }
}
