use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features whose spread is below this are treated as constant.
pub const MIN_STD: f64 = 1e-8;

/// Per-feature z-score statistics. Constant features get std 1 and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl Standardizer {
    /// Population mean and standard deviation per column.
    pub fn fit(samples: ArrayView2<'_, f64>) -> Result<Self> {
        let m = samples.nrows();
        if m < 2 {
            return Err(Error::Data(format!("standardizer needs at least 2 samples, got {m}")));
        }
        let mean = samples.mean_axis(Axis(0)).expect("non-empty");
        let centered = &samples - &mean;
        let var = (&centered * &centered).sum_axis(Axis(0)) / m as f64;
        let mut std = Vec::with_capacity(var.len());
        let mut flagged = Vec::with_capacity(var.len());
        for v in var.iter() {
            let s = v.sqrt();
            if s < MIN_STD {
                std.push(1.0);
                flagged.push(true);
            } else {
                std.push(s);
                flagged.push(false);
            }
        }
        Ok(Self {
            mean: mean.to_vec(),
            std,
            flagged,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            flagged: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::shape("standardizer", self.dim(), cols));
        }
        Ok(())
    }

    pub fn apply(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(samples.ncols())?;
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok((&samples - &mean) / &std)
    }

    pub fn invert(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(samples.ncols())?;
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok(&samples * &std + &mean)
    }

    pub fn apply_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn invert_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect())
    }
}
