use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSegment {
    pub value: f64,
    /// s
    pub duration: f64,
    /// Seconds over which the value ramps linearly from the previous segment's value.
    #[serde(default)]
    pub ramp: f64,
}

/// Piecewise-constant schedule with optional linear ramps at segment starts. Used for
/// commanded speeds and base-height references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile {
    pub segments: Vec<ProfileSegment>,
}

pub type VelocityProfile = Profile;

impl Profile {
    pub fn new(segments: Vec<ProfileSegment>) -> Result<Self> {
        let p = Self { segments };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(value: f64, duration: f64) -> Result<Self> {
        Self::new(vec![ProfileSegment {
            value,
            duration,
            ramp: 0.0,
        }])
    }

    /// Steps through `values`, each held for `duration`.
    pub fn steps(values: &[f64], duration: f64, ramp: f64) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&value| ProfileSegment { value, duration, ramp })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Argument("profile has no segments".into()));
        }
        for s in &self.segments {
            if !(s.duration >= 0.0 && s.value.is_finite() && s.ramp >= 0.0 && s.ramp <= s.duration) {
                return Err(Error::Argument(format!("invalid profile segment {s:?}")));
            }
        }
        if !(self.duration() > 0.0) {
            return Err(Error::Argument("profile duration must be positive".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `(start, end)` of every segment.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let b = (t, t + s.duration);
                t += s.duration;
                b
            })
            .collect()
    }

    /// Index of the segment containing `t`; times past the end map to the last one.
    pub fn segment_at(&self, t: f64) -> usize {
        self.bounds()
            .iter()
            .position(|&(_, end)| t < end)
            .unwrap_or(self.segments.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.segment_at(t);
        let s = &self.segments[k];
        let start = self.bounds()[k].0;
        let prev = if k == 0 { s.value } else { self.segments[k - 1].value };
        if s.ramp > 0.0 && t - start < s.ramp {
            prev + (s.value - prev) * ((t - start).max(0.0) / s.ramp)
        } else {
            s.value
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramps_and_lookup() {
        let p = Profile::steps(&[0.0, 1.0], 2.0, 1.0).unwrap();
        assert_eq!(p.duration(), 4.0);
        assert_eq!(p.value_at(0.5), 0.0);
        assert!((p.value_at(2.5) - 0.5).abs() < 1e-15);
        assert_eq!(p.value_at(3.5), 1.0);
        assert_eq!(p.segment_at(10.0), 1);
        assert!(Profile::new(vec![]).is_err());
        assert!(Profile::constant(0.0, 0.0).is_err());
    }
}
