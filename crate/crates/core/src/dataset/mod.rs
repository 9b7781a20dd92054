//! Stance-frame gait samples: collection with the baseline planner, standardization,
//! stratified splitting and the `LGDS` file format.

mod collect;
mod format;
mod standardize;

pub use collect::{collect_gaits, default_speed_grid, noisy_standing, Collection, CollectionConfig};
pub use format::{dataset_bytes, dataset_csv, dataset_from_bytes, load_dataset, save_dataset, DATASET_VERSION};
pub use standardize::{Standardizer, MIN_STD};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaitDataset {
    /// Raw stance-frame states, one per row.
    pub samples: Array2<f64>,
    /// Commanded speed per sample (m/s).
    pub labels: Vec<f64>,
    /// Hz
    pub rate: f64,
    pub stats: Option<Standardizer>,
    pub provenance: String,
}

impl GaitDataset {
    pub fn new(
        samples: Array2<f64>,
        labels: Vec<f64>,
        rate: f64,
        stats: Option<Standardizer>,
        provenance: String,
    ) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if labels.len() != samples.nrows() {
            return Err(Error::shape("dataset labels", samples.nrows(), labels.len()));
        }
        if let Some(s) = &stats {
            if s.dim() != samples.ncols() || s.std.len() != s.dim() || s.flagged.len() != s.dim() {
                return Err(Error::shape("dataset statistics", samples.ncols(), s.dim()));
            }
        }
        if !samples.iter().chain(&labels).all(|v| v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            samples,
            labels,
            rate,
            stats,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Distinct labels in order of first appearance.
    pub fn distinct_labels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for l in &self.labels {
            if !out.iter().any(|o| o.to_bits() == l.to_bits()) {
                out.push(*l);
            }
        }
        out
    }

    /// Fits statistics on this dataset's samples and stores them.
    pub fn fit_standardizer(&mut self) -> Result<&Standardizer> {
        self.stats = Some(Standardizer::fit(self.samples.view())?);
        Ok(self.stats.as_ref().expect("just set"))
    }

    pub fn standardized(&self) -> Result<Array2<f64>> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no standardizer statistics".into()))?;
        stats.apply(self.samples.view())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.samples.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.rate,
            self.stats.clone(),
            self.provenance.clone(),
        )
    }
}

/// Per-label seeded shuffle; `round(n * fraction)` of each label (at least one, at most
/// `n - 1`) goes to validation. Both index lists are ascending.
pub fn split_indices(ds: &GaitDataset, holdout_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Argument(format!("holdout fraction {holdout_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in ds.distinct_labels() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i].to_bits() == label.to_bits()).collect();
        if idx.len() < 2 {
            return Err(Error::Argument(format!("label {label} has fewer than 2 samples; cannot stratify")));
        }
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * holdout_fraction).round() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split(ds: &GaitDataset, holdout_fraction: f64, seed: u64) -> Result<(GaitDataset, GaitDataset)> {
    let (train, val) = split_indices(ds, holdout_fraction, seed)?;
    Ok((ds.subset(&train)?, ds.subset(&val)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_dataset() -> GaitDataset {
        let m = 8000;
        let samples = Array2::from_shape_fn((m, 3), |(i, j)| ((i * 7 + j * 13) % 101) as f64);
        let labels = (0..m).map(|i| -0.5 + 0.1 * (i / 500) as f64).collect();
        GaitDataset::new(samples, labels, 50.0, None, String::new()).unwrap()
    }

    #[test]
    fn stratified_partition() {
        let ds = grid_dataset();
        let (tr, va) = split_indices(&ds, 0.1, 3).unwrap();
        assert_eq!(va.len(), 800);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..8000).collect::<Vec<_>>());
        let (a, b) = split(&ds, 0.1, 3).unwrap();
        assert_eq!(a.distinct_labels().len(), 16);
        assert_eq!(b.distinct_labels().len(), 16);
        assert_eq!(split_indices(&ds, 0.1, 3).unwrap(), (tr, va));
        assert!(matches!(split(&ds, 1.0, 3), Err(Error::Argument(_))));
        assert!(matches!(split(&ds, 0.0, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn rejects_mismatched_labels() {
        let x = Array2::zeros((3, 2));
        assert!(GaitDataset::new(x, vec![0.0; 2], 50.0, None, String::new()).is_err());
    }
}
