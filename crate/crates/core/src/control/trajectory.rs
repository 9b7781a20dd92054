use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quintic blend `10s³ − 15s⁴ + 6s⁵` from `start` to `end`. Returns position and its
/// first two derivatives with respect to `s`.
pub fn min_jerk(s: f64, start: f64, end: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Range(format!("min-jerk phase {s} outside [0, 1]")));
    }
    let d = end - start;
    let s2 = s * s;
    let s3 = s2 * s;
    let blend = s3 * (10.0 + s * (-15.0 + 6.0 * s));
    let dblend = 30.0 * s2 * (1.0 - s) * (1.0 - s);
    let ddblend = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    Ok((start + d * blend, d * dblend, d * ddblend))
}

/// Per-step swing timing plus the swing-foot lift-off point latched at touchdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSchedule {
    /// s
    pub step_duration: f64,
    /// m
    pub apex_height: f64,
    /// Swing ankle (x, z) at the last support switch.
    pub start: Option<[f64; 2]>,
}

impl GaitSchedule {
    pub fn new(step_duration: f64, apex_height: f64) -> Result<Self> {
        if !(step_duration > 0.0) || !(apex_height >= 0.0) {
            return Err(Error::Argument(format!(
                "step duration {step_duration} must be > 0 and apex height {apex_height} >= 0"
            )));
        }
        Ok(Self {
            step_duration,
            apex_height,
            start: None,
        })
    }
}

impl Default for GaitSchedule {
    fn default() -> Self {
        Self {
            step_duration: 0.4,
            apex_height: 0.08,
            start: None,
        }
    }
}

/// Swing ankle reference in time units: position, velocity, acceleration, each (x, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingReference {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
}

/// x blends from the lift-off point to `target_x`; z rises to the apex over the first
/// half of the step and returns to the ground over the second.
pub fn swing_trajectory(schedule: &GaitSchedule, phase_fraction: f64, target_x: f64) -> Result<SwingReference> {
    let p0 = schedule
        .start
        .ok_or_else(|| Error::State("swing start point not set; no support switch recorded".into()))?;
    let t = schedule.step_duration;
    let (x, dx, ddx) = min_jerk(phase_fraction, p0[0], target_x)?;
    let half = 0.5 * t;
    let (z, dz, ddz) = if phase_fraction <= 0.5 {
        min_jerk(phase_fraction / 0.5, p0[1], schedule.apex_height)?
    } else {
        min_jerk((phase_fraction - 0.5) / 0.5, schedule.apex_height, 0.0)?
    };
    Ok(SwingReference {
        position: [x, z],
        velocity: [dx / t, dz / half],
        acceleration: [ddx / (t * t), ddz / (half * half)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundaries_and_midpoint() {
        assert_eq!(min_jerk(0.0, 2.0, 5.0).unwrap(), (2.0, 0.0, 0.0));
        assert_eq!(min_jerk(1.0, 2.0, 5.0).unwrap(), (5.0, 0.0, 0.0));
        assert!((min_jerk(0.5, 0.0, 1.0).unwrap().0 - 0.5).abs() < 1e-12);
        let s: f64 = 0.25;
        let oracle = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
        assert!((min_jerk(s, 0.0, 1.0).unwrap().0 - oracle).abs() < 1e-15);
        assert!((oracle - 0.103516).abs() < 1e-6);
        assert!(matches!(min_jerk(1.01, 0.0, 1.0), Err(Error::Range(_))));
        assert!(matches!(min_jerk(-0.01, 0.0, 1.0), Err(Error::Range(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for k in 1..20 {
            let s = k as f64 / 20.0;
            let (_, v, a) = min_jerk(s, -0.3, 0.7).unwrap();
            let p = |s: f64| min_jerk(s, -0.3, 0.7).unwrap();
            assert!(((p(s + h).0 - p(s - h).0) / (2.0 * h) - v).abs() < 1e-6);
            assert!(((p(s + h).1 - p(s - h).1) / (2.0 * h) - a).abs() < 1e-5);
        }
    }

    #[test]
    fn swing_needs_start_point() {
        let s = GaitSchedule::default();
        assert!(matches!(swing_trajectory(&s, 0.2, 0.1), Err(Error::State(_))));
    }

    #[test]
    fn swing_boundaries_and_apex() {
        let mut s = GaitSchedule::default();
        s.start = Some([0.1, 0.002]);
        let r = swing_trajectory(&s, 0.0, 0.5).unwrap();
        assert_eq!(r.position, [0.1, 0.002]);
        assert_eq!(r.velocity, [0.0, 0.0]);
        let r = swing_trajectory(&s, 0.5, 0.5).unwrap();
        assert!((r.position[1] - 0.08).abs() < 1e-15);
        let r = swing_trajectory(&s, 1.0, 0.5).unwrap();
        assert!((r.position[0] - 0.5).abs() < 1e-15 && r.position[1].abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn endpoint_derivatives_vanish(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            for s in [0.0, 1.0] {
                let (_, v, acc) = min_jerk(s, a, b).unwrap();
                prop_assert!(v.abs() < 1e-9 && acc.abs() < 1e-9);
            }
            let mid = min_jerk(0.5, a, b).unwrap().0;
            prop_assert!((mid - 0.5 * (a + b)).abs() < 1e-12);
        }

        // Switching the landing target changes the x reference by at most the blend
        // weight times the target jump, so the reference never jumps by more than that.
        #[test]
        fn target_switch_is_bounded_by_blend(
            s in 0.0f64..1.0, t1 in -0.5f64..0.5, t2 in -0.5f64..0.5, x0 in -0.3f64..0.3,
        ) {
            let mut g = GaitSchedule::default();
            g.start = Some([x0, 0.0]);
            let a = swing_trajectory(&g, s, t1).unwrap().position[0];
            let b = swing_trajectory(&g, s, t2).unwrap().position[0];
            let blend = min_jerk(s, 0.0, 1.0).unwrap().0;
            prop_assert!((a - b).abs() <= blend * (t1 - t2).abs() + 1e-12);
        }
    }
}
