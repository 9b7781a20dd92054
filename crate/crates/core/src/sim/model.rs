use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// kg
    pub mass: f64,
    /// kg m^2 about the link centre of mass
    pub inertia: f64,
    /// m
    pub length: f64,
    /// Distance from the proximal joint to the centre of mass (m). For the torso this
    /// is measured up from the hip, for the foot forward from the ankle.
    pub com_offset: f64,
}

impl LinkParams {
    /// Uniform slender rod.
    pub fn rod(mass: f64, length: f64, com_offset: f64) -> Self {
        Self {
            mass,
            inertia: mass * length * length / 12.0,
            length,
            com_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub torso: LinkParams,
    pub thigh: LinkParams,
    pub shank: LinkParams,
    pub foot: LinkParams,
    /// Ankle position along the sole, measured forward from the heel (m).
    pub heel_offset: f64,
    pub gravity: f64,
    /// N m, ordered hip/knee/ankle left then right.
    pub torque_limits: [f64; 6],
    /// Standing height of the base (torso centre of mass) above the ground (m).
    pub nominal_base_height: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            torso: LinkParams::rod(10.0, 0.5, 0.3),
            thigh: LinkParams::rod(2.5, 0.4, 0.2),
            shank: LinkParams::rod(2.0, 0.4, 0.2),
            foot: LinkParams::rod(0.5, 0.16, 0.04),
            heel_offset: 0.04,
            gravity: 9.81,
            torque_limits: [150.0, 150.0, 60.0, 150.0, 150.0, 60.0],
            nominal_base_height: 1.0,
        }
    }
}

impl RobotModel {
    pub fn total_mass(&self) -> f64 {
        self.torso.mass + 2.0 * (self.thigh.mass + self.shank.mass + self.foot.mass)
    }

    pub fn leg_length(&self) -> f64 {
        self.thigh.length + self.shank.length
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in [
            ("torso", &self.torso),
            ("thigh", &self.thigh),
            ("shank", &self.shank),
            ("foot", &self.foot),
        ] {
            if !(l.mass > 0.0 && l.inertia > 0.0 && l.length > 0.0) {
                return Err(Error::Config(format!(
                    "{name}: mass, inertia and length must be positive"
                )));
            }
            if !l.com_offset.is_finite() {
                return Err(Error::Config(format!("{name}: com_offset must be finite")));
            }
        }
        if !(self.gravity > 0.0 && self.nominal_base_height > 0.0) {
            return Err(Error::Config("gravity and nominal base height must be positive".into()));
        }
        if !(0.0..=self.foot.length).contains(&self.heel_offset) {
            return Err(Error::Config("heel_offset must lie on the foot".into()));
        }
        if self.torque_limits.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("torque limits must be non-negative".into()));
        }
        Ok(())
    }
}
