use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Policy input: latent state, average-velocity error, commanded speed, previous action.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub latent: Vec<f64>,
    /// Average velocity minus commanded velocity (m/s).
    pub velocity_error: f64,
    /// m/s
    pub v_des: f64,
    pub prev_action: [f64; 2],
}

impl Observation {
    pub fn dim_for(latent_dim: usize) -> usize {
        latent_dim + 4
    }

    pub fn dim(&self) -> usize {
        Self::dim_for(self.latent.len())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.latent.clone();
        v.push(self.velocity_error);
        v.push(self.v_des);
        v.extend_from_slice(&self.prev_action);
        v
    }
}

/// Normalized values are clipped to this many standard deviations.
pub const OBS_CLIP: f64 = 10.0;
const VAR_EPS: f64 = 1e-8;

/// Running per-feature mean and population variance (Chan/Welford merging).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population variance; 1 before any data so normalization starts as the identity.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count as f64).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().iter().map(|v| v.sqrt()).collect()
    }

    /// Merges a batch of rows.
    pub fn update(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let d = self.dim();
        let n_b = rows.len() as f64;
        let mut mean_b = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::shape("normalizer input", d, r.len()));
            }
            for (m, v) in mean_b.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean_b.iter_mut().for_each(|m| *m /= n_b);
        let mut m2_b = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                let dv = r[j] - mean_b[j];
                m2_b[j] += dv * dv;
            }
        }
        let n_a = self.count as f64;
        let n = n_a + n_b;
        for j in 0..d {
            let delta = mean_b[j] - self.mean[j];
            self.mean[j] += delta * n_b / n;
            self.m2[j] += m2_b[j] + delta * delta * n_a * n_b / n;
        }
        self.count += rows.len() as u64;
        Ok(())
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("normalizer input", self.dim(), x.len()));
        }
        let var = self.variance();
        Ok(x
            .iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((v, m), s2)| ((v - m) / (s2 + VAR_EPS).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let o = Observation {
            latent: vec![1.0, 2.0],
            velocity_error: 3.0,
            v_des: 4.0,
            prev_action: [5.0, 6.0],
        };
        assert_eq!(o.to_vec(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(o.dim(), 6);
    }

    proptest! {
        #[test]
        fn streamed_statistics_match_batch(
            chunks in proptest::collection::vec(
                proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 1..20), 1..6)
        ) {
            let mut n = ObsNormalizer::new(3);
            for c in &chunks {
                n.update(c).unwrap();
            }
            let all: Vec<&Vec<f64>> = chunks.iter().flatten().collect();
            let m = all.len() as f64;
            for j in 0..3 {
                let mean = all.iter().map(|r| r[j]).sum::<f64>() / m;
                let var = all.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / m;
                prop_assert!((n.mean[j] - mean).abs() < 1e-8);
                prop_assert!((n.std()[j] - var.sqrt()).abs() < 1e-8);
            }
        }
    }
}
