//! Pipeline stages with hashed, atomically written artifacts. Each stage directory gets
//! the resolved `config.toml` and a `manifest.json` of input and output hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ae::{load_autoencoder, reconstruction_report, save_autoencoder, train_autoencoder, ENCODER_FILE};
use crate::config::{ExperimentConfig, TOOL_VERSION};
use crate::dataset::{collect_gaits, dataset_bytes, load_dataset, split};
use crate::error::{Error, Result};
use crate::eval::{run_eval, Controller, EvalContext, EvalOutput, Scenario};
use crate::io::{sha256_file, sha256_hex, write_atomic};
use crate::rl::{curves_csv, load_policy, save_policy, CurveRow, GaitEnv, LearnedPolicy, PpoTrainer};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.lgds";
pub const HISTORY_FILE: &str = "history.csv";
/// Wall-clock timings; excluded from the manifest because they vary run to run.
pub const TIMING_FILE: &str = "timing.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub stage: String,
    pub seed: u64,
    /// Input name → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the stage directory → sha256.
    pub outputs: BTreeMap<String, String>,
}

/// Collects written files so the manifest can list them.
struct StageWriter {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl StageWriter {
    fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = Self {
            dir: dir.to_path_buf(),
            outputs: BTreeMap::new(),
        };
        w.write(CONFIG_FILE, cfg.to_toml()?.as_bytes())?;
        Ok(w)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(rel), bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records files another writer already placed in the directory.
    fn record(&mut self, rel: &str) -> Result<()> {
        self.outputs.insert(rel.to_string(), sha256_file(&self.dir.join(rel))?);
        Ok(())
    }

    fn finish(self, stage: &str, seed: u64, inputs: BTreeMap<String, String>) -> Result<Manifest> {
        let m = Manifest {
            tool: TOOL_VERSION.to_string(),
            stage: stage.to_string(),
            seed,
            inputs,
            outputs: self.outputs,
        };
        let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(&self.dir.join(MANIFEST_FILE), json.as_bytes())?;
        Ok(m)
    }
}

/// Checks a file against the manifest of the directory it lives in, when one exists.
pub fn verify_artifact(path: &Path) -> Result<String> {
    let hash = sha256_file(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mpath = dir.join(MANIFEST_FILE);
    if mpath.exists() {
        let m: Manifest = serde_json::from_slice(&std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)
            .map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match m.outputs.get(name) {
            Some(h) if *h == hash => {}
            Some(_) => {
                return Err(Error::Compatibility(format!(
                    "{} does not match the hash recorded in {}",
                    path.display(),
                    mpath.display()
                )))
            }
            None => {}
        }
    }
    Ok(hash)
}

pub fn cmd_collect(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let mut w = StageWriter::new(out, cfg)?;
    let c = collect_gaits(&cfg.model, &cfg.walker, &cfg.dataset, cfg.seed)?;
    w.write(DATASET_FILE, &dataset_bytes(&c.dataset))?;
    w.finish("collect", cfg.seed, BTreeMap::new())
}

pub fn cmd_train_ae(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<Manifest> {
    let ds_hash = verify_artifact(dataset)?;
    let ds = load_dataset(dataset)?;
    let mut w = StageWriter::new(out, cfg)?;
    let (train, val) = split(&ds, cfg.autoencoder.holdout_fraction, cfg.seed)?;
    let (model, history) = train_autoencoder(&train, &val, &cfg.autoencoder, cfg.seed)?;
    save_autoencoder(&model, out)?;
    for f in [ENCODER_FILE, crate::ae::DECODER_FILE, crate::ae::SIDECAR_FILE] {
        w.record(f)?;
    }
    w.write(HISTORY_FILE, history.to_csv().as_bytes())?;
    write_atomic(&out.join(TIMING_FILE), history.timing_csv().as_bytes())?;
    w.finish("train-ae", cfg.seed, BTreeMap::from([("dataset".to_string(), ds_hash)]))
}

/// Loads the autoencoder in `dir`, returning it with its encoder hash.
pub fn load_encoder(dir: &Path) -> Result<(Arc<crate::ae::AutoencoderModel>, String)> {
    verify_artifact(&dir.join(ENCODER_FILE))?;
    let (m, h) = load_autoencoder(dir)?;
    Ok((Arc::new(m), h))
}

/// Trains a policy against the encoder in `ae_dir`. `on_iteration` sees every curve row.
pub fn cmd_train_policy(
    cfg: &ExperimentConfig,
    ae_dir: &Path,
    out: &Path,
    mut on_iteration: impl FnMut(&CurveRow),
) -> Result<Manifest> {
    let (encoder, enc_hash) = load_encoder(ae_dir)?;
    let mut w = StageWriter::new(out, cfg)?;
    let envs = (0..cfg.ppo.workers)
        .map(|_| GaitEnv::new(cfg.model.clone(), cfg.walker.clone(), cfg.env.clone(), encoder.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut trainer = PpoTrainer::new(envs, cfg.ppo.clone(), cfg.seed)?;
    let mut rows = Vec::new();
    let total = cfg.ppo.iterations();
    for it in 1..=total {
        let row = trainer.iterate()?;
        on_iteration(&row);
        rows.push(row);
        if cfg.ppo.checkpoint_every > 0 && it % cfg.ppo.checkpoint_every == 0 && it < total {
            let rel = format!("checkpoints/iter_{it:05}");
            save_policy(&trainer.policy, &trainer.value, &trainer.normalizer, &enc_hash, &out.join(&rel))?;
            for f in [crate::rl::POLICY_FILE, crate::rl::VALUE_FILE, crate::rl::POLICY_SIDECAR] {
                w.record(&format!("{rel}/{f}"))?;
            }
            w.write(CURVES_FILE, curves_csv(&rows).as_bytes())?;
        }
    }
    save_policy(&trainer.policy, &trainer.value, &trainer.normalizer, &enc_hash, out)?;
    for f in [crate::rl::POLICY_FILE, crate::rl::VALUE_FILE, crate::rl::POLICY_SIDECAR] {
        w.record(f)?;
    }
    w.write(CURVES_FILE, curves_csv(&rows).as_bytes())?;
    w.finish("train-policy", cfg.seed, BTreeMap::from([("encoder".to_string(), enc_hash)]))
}

/// Learned controller from an autoencoder directory and a policy directory.
pub fn load_learned(ae_dir: &Path, policy_dir: &Path) -> Result<(LearnedPolicy, String)> {
    let (encoder, enc_hash) = load_encoder(ae_dir)?;
    verify_artifact(&policy_dir.join(crate::rl::POLICY_FILE))?;
    let (policy, _, norm) = load_policy(policy_dir, Some(&enc_hash))?;
    Ok((LearnedPolicy::new(policy, norm, encoder)?, enc_hash))
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    ae_dir: &Path,
    policy_dir: &Path,
    scenarios: &[Scenario],
    out: &Path,
) -> Result<(Manifest, EvalOutput)> {
    let (learned, enc_hash) = load_learned(ae_dir, policy_dir)?;
    let policy_hash = sha256_file(&policy_dir.join(crate::rl::POLICY_FILE))?;
    let encoder = learned.encoder.clone();
    let mut w = StageWriter::new(out, cfg)?;
    let ctx = EvalContext {
        model: cfg.model.clone(),
        walker: cfg.walker.clone(),
        config: cfg.eval.clone(),
        seed: cfg.seed,
    };
    let baseline = Controller::baseline(&cfg.model, &cfg.walker, Some(encoder.clone()))?;
    let output = run_eval(&ctx, &Controller::Learned(learned), &baseline, Some(encoder), scenarios)?;
    for (rel, text) in &output.files {
        w.write(rel, text.as_bytes())?;
    }
    w.write(REPORT_FILE, output.report_json()?.as_bytes())?;
    let m = w.finish(
        "eval",
        cfg.seed,
        BTreeMap::from([("encoder".to_string(), enc_hash), ("policy".to_string(), policy_hash)]),
    )?;
    Ok((m, output))
}

pub fn cmd_reconstruct(cfg: &ExperimentConfig, ae_dir: &Path, dataset: &Path, out: &Path) -> Result<Manifest> {
    let ds_hash = verify_artifact(dataset)?;
    let ds = load_dataset(dataset)?;
    let (model, enc_hash) = load_encoder(ae_dir)?;
    let mut w = StageWriter::new(out, cfg)?;
    let r = reconstruction_report(&model, &ds)?;
    w.write("reconstruction.csv", r.table_csv().as_bytes())?;
    w.write("overlay.csv", r.overlay_csv.as_bytes())?;
    w.finish(
        "reconstruct",
        cfg.seed,
        BTreeMap::from([("dataset".to_string(), ds_hash), ("encoder".to_string(), enc_hash)]),
    )
}
