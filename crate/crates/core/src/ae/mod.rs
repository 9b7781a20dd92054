//! Autoencoder over standardized stance-frame states.

mod report;

pub use report::{lipschitz_estimate, reconstruction_report, ReconstructionReport, OVERLAY_FEATURES};

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GaitDataset, Standardizer};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};
use crate::nn::{clip_global_norm, mse_loss, read_mlp_bytes, write_mlp_bytes, Activation, AdamConfig, AdamState, Mlp};

pub const ENCODER_HIDDEN: [usize; 3] = [128, 64, 32];
pub const ENCODER_FILE: &str = "encoder.lgnn";
pub const DECODER_FILE: &str = "decoder.lgnn";
pub const SIDECAR_FILE: &str = "autoencoder.json";

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub stats: Standardizer,
}

impl AutoencoderModel {
    pub fn new(encoder: Mlp, decoder: Mlp, stats: Standardizer) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::shape("decoder input", encoder.output_dim(), decoder.input_dim()));
        }
        if encoder.input_dim() != stats.dim() || decoder.output_dim() != stats.dim() {
            return Err(Error::shape("autoencoder features", stats.dim(), encoder.input_dim()));
        }
        Ok(Self {
            encoder,
            decoder,
            stats,
        })
    }

    /// Encoder `d → 128 → 64 → 32 → N` and its mirror, ReLU hidden, identity outputs.
    pub fn init<R: rand::Rng + ?Sized>(stats: Standardizer, latent_dim: usize, rng: &mut R) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Argument("latent dimension must be positive".into()));
        }
        let d = stats.dim();
        let mut sizes = vec![d];
        sizes.extend(ENCODER_HIDDEN);
        sizes.push(latent_dim);
        let encoder = Mlp::init(&sizes, Activation::Relu, Activation::Identity, rng);
        sizes.reverse();
        let decoder = Mlp::init(&sizes, Activation::Relu, Activation::Identity, rng);
        Self::new(encoder, decoder, stats)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Latent state of one raw stance-frame state.
    pub fn encode(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.input_dim() {
            return Err(Error::shape("encoder input", self.input_dim(), raw.len()));
        }
        self.encoder.predict_one(&self.stats.apply_one(raw)?)
    }

    /// Raw (de-standardized) state reconstructed from `z`.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape("decoder input", self.latent_dim(), z.len()));
        }
        self.stats.invert_one(&self.decoder.predict_one(z)?)
    }

    pub fn encode_batch(&self, raw: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.encoder.predict(self.stats.apply(raw)?.view())
    }

    /// Standardized reconstruction of standardized inputs.
    pub fn reconstruct_standardized(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.decoder.predict(self.encoder.predict(x)?.view())
    }

    /// Mean squared reconstruction error in standardized units.
    pub fn standardized_mse(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(mse_loss(self.reconstruct_standardized(x)?.view(), x)?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeTrainConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    pub grad_clip: f64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            epochs: 400,
            lr: 1e-3,
            batch_size: 128,
            holdout_fraction: 0.1,
            grad_clip: 5.0,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("latent_dim, epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::Config("lr and grad_clip must be positive".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    /// Mean minibatch loss over each epoch (standardized units).
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Seconds since training started, at the end of each epoch.
    pub wall_time: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss.get(self.best_epoch).copied().unwrap_or(f64::NAN)
    }

    /// `epoch,train_loss,val_loss`; wall time is kept out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (k, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, crate::io::csv_row([*t, *v])));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,wall_time_s\n");
        for (k, t) in self.wall_time.iter().enumerate() {
            out.push_str(&format!("{},{t}\n", k + 1));
        }
        out
    }
}

fn standardized(ds: &GaitDataset, stats: &Standardizer) -> Result<Array2<f64>> {
    stats.apply(ds.samples.view())
}

/// Minibatch Adam on the reconstruction MSE. Statistics come from `train` (fitted on it
/// when absent); the parameters with the lowest validation loss are returned.
pub fn train_autoencoder(
    train: &GaitDataset,
    val: &GaitDataset,
    cfg: &AeTrainConfig,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingHistory)> {
    cfg.validate()?;
    if train.dim() != val.dim() {
        return Err(Error::shape("validation features", train.dim(), val.dim()));
    }
    let stats = match &train.stats {
        Some(s) => s.clone(),
        None => Standardizer::fit(train.samples.view())?,
    };
    let x_train = standardized(train, &stats)?;
    let x_val = standardized(val, &stats)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = AutoencoderModel::init(stats, cfg.latent_dim, &mut rng)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut opt_enc = AdamState::new(&model.encoder, adam);
    let mut opt_dec = AdamState::new(&model.decoder, adam);
    let mut history = TrainingHistory::default();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    let started = Instant::now();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = x_train.select(Axis(0), chunk);
            let enc = model.encoder.forward(batch.view())?;
            let dec = model.decoder.forward(enc.output.view())?;
            let (loss, grad) = mse_loss(dec.output.view(), batch.view())?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("autoencoder loss diverged at epoch {}", epoch + 1)));
            }
            total += loss * chunk.len() as f64;
            let (mut g_dec, g_z) = model.decoder.backward(&dec, grad.view())?;
            let (mut g_enc, _) = model.encoder.backward(&enc, g_z.view())?;
            clip_global_norm(&mut [&mut g_enc, &mut g_dec], cfg.grad_clip);
            opt_enc
                .step(&mut model.encoder, &g_enc)
                .map_err(|e| Error::Training(format!("epoch {}: {e}", epoch + 1)))?;
            opt_dec
                .step(&mut model.decoder, &g_dec)
                .map_err(|e| Error::Training(format!("epoch {}: {e}", epoch + 1)))?;
        }
        let train_loss = total / x_train.nrows() as f64;
        let val_loss = model.standardized_mse(x_val.view())?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss diverged at epoch {}", epoch + 1)));
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            history.best_epoch = epoch;
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.wall_time.push(started.elapsed().as_secs_f64());
    }
    Ok((best, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    latent_dim: usize,
    features: Vec<String>,
    stats: Standardizer,
    encoder_sha256: String,
    decoder_sha256: String,
}

/// Writes `encoder.lgnn`, `decoder.lgnn` and the JSON sidecar into `dir`. Returns the
/// encoder file hash, which downstream artifacts record.
pub fn save_autoencoder(model: &AutoencoderModel, dir: &Path) -> Result<String> {
    let enc = write_mlp_bytes(&model.encoder);
    let dec = write_mlp_bytes(&model.decoder);
    let sidecar = Sidecar {
        latent_dim: model.latent_dim(),
        features: crate::control::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        stats: model.stats.clone(),
        encoder_sha256: sha256_hex(&enc),
        decoder_sha256: sha256_hex(&dec),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&dir.join(ENCODER_FILE), &enc)?;
    write_atomic(&dir.join(DECODER_FILE), &dec)?;
    write_atomic(&dir.join(SIDECAR_FILE), json.as_bytes())?;
    Ok(sidecar.encoder_sha256)
}

/// Loads a model saved by [`save_autoencoder`], checking both network hashes.
pub fn load_autoencoder(dir: &Path) -> Result<(AutoencoderModel, String)> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let enc = read(ENCODER_FILE)?;
    let dec = read(DECODER_FILE)?;
    let sidecar: Sidecar =
        serde_json::from_slice(&read(SIDECAR_FILE)?).map_err(|e| Error::Format(format!("{SIDECAR_FILE}: {e}")))?;
    let enc_hash = sha256_hex(&enc);
    if enc_hash != sidecar.encoder_sha256 || sha256_hex(&dec) != sidecar.decoder_sha256 {
        return Err(Error::Compatibility("autoencoder network files do not match their sidecar hashes".into()));
    }
    let model = AutoencoderModel::new(read_mlp_bytes(&enc)?, read_mlp_bytes(&dec)?, sidecar.stats)?;
    if model.latent_dim() != sidecar.latent_dim {
        return Err(Error::Compatibility("sidecar latent dimension disagrees with encoder".into()));
    }
    Ok((model, enc_hash))
}
