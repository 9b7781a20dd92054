use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AutoencoderModel;
use crate::control::FEATURE_NAMES;
use crate::dataset::GaitDataset;
use crate::error::{Error, Result};
use crate::io::csv_row;

/// Features exported in the overlay trace: base x rate and left knee angle.
pub const OVERLAY_FEATURES: [usize; 2] = [9, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub feature_names: Vec<String>,
    pub mse_standardized: Vec<f64>,
    pub mse_physical: Vec<f64>,
    pub aggregate_standardized: f64,
    pub aggregate_physical: f64,
    /// `t,label,` then original/reconstructed pairs for [`OVERLAY_FEATURES`].
    pub overlay_csv: String,
}

impl ReconstructionReport {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("feature,mse_standardized,mse_physical\n");
        for ((name, s), p) in self.feature_names.iter().zip(&self.mse_standardized).zip(&self.mse_physical) {
            out.push_str(&format!("{name},{}\n", csv_row([*s, *p])));
        }
        out.push_str(&format!(
            "aggregate,{}\n",
            csv_row([self.aggregate_standardized, self.aggregate_physical])
        ));
        out
    }
}

fn name(j: usize) -> String {
    FEATURE_NAMES.get(j).map_or_else(|| format!("f{j}"), |s| s.to_string())
}

pub fn reconstruction_report(model: &AutoencoderModel, ds: &GaitDataset) -> Result<ReconstructionReport> {
    if ds.dim() != model.input_dim() {
        return Err(Error::shape("report features", model.input_dim(), ds.dim()));
    }
    let x = model.stats.apply(ds.samples.view())?;
    let xr = model.reconstruct_standardized(x.view())?;
    let raw_r = model.stats.invert(xr.view())?;
    let m = ds.len() as f64;
    let per = |a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>| -> Vec<f64> {
        (a - b).mapv(|v| v * v).sum_axis(Axis(0)).iter().map(|s| s / m).collect()
    };
    let mse_standardized = per(&xr, &x);
    let mse_physical = per(&raw_r, &ds.samples);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut overlay = String::from("t,label");
    for &j in &OVERLAY_FEATURES {
        overlay.push_str(&format!(",{0},{0}_reconstructed", name(j)));
    }
    overlay.push('\n');
    for i in 0..ds.len() {
        let mut row = vec![i as f64 / ds.rate, ds.labels[i]];
        for &j in &OVERLAY_FEATURES {
            row.push(ds.samples[(i, j)]);
            row.push(raw_r[(i, j)]);
        }
        overlay.push_str(&csv_row(row));
        overlay.push('\n');
    }
    Ok(ReconstructionReport {
        feature_names: (0..ds.dim()).map(name).collect(),
        aggregate_standardized: mean(&mse_standardized),
        aggregate_physical: mean(&mse_physical),
        mse_standardized,
        mse_physical,
        overlay_csv: overlay,
    })
}

/// Largest observed `|z(a) − z(b)| / |a − b|` over random pairs drawn uniformly from the
/// dataset's raw bounding box.
pub fn lipschitz_estimate(model: &AutoencoderModel, ds: &GaitDataset, pairs: usize, seed: u64) -> Result<f64> {
    let lo: Vec<f64> = ds.samples.columns().into_iter().map(|c| c.fold(f64::INFINITY, |a, b| a.min(*b))).collect();
    let hi: Vec<f64> = ds.samples.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |a, b| a.max(*b))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter().zip(&hi).map(|(l, h)| if h > l { rng.random_range(*l..*h) } else { *l }).collect()
    };
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let dx = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        if dx == 0.0 {
            continue;
        }
        let (za, zb) = (model.encode(&a)?, model.encode(&b)?);
        let dz = za.iter().zip(&zb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        best = best.max(dz / dx);
    }
    Ok(best)
}
