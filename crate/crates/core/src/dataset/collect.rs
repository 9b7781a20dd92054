use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GaitDataset;
use crate::control::{stance_frame_transform, Walker, WalkerConfig, NFEATURES};
use crate::error::{Error, Result};
use crate::planner::{baseline_action, LipParams};
use crate::sim::{Leg, RobotModel, RobotState, NQ};

/// -0.5 to 1.0 m/s in 0.1 m/s steps.
pub fn default_speed_grid() -> Vec<f64> {
    (0..16).map(|k| (k as f64 - 5.0) / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionConfig {
    /// m/s
    pub speeds: Vec<f64>,
    /// Kept seconds per speed, after the warm-up.
    pub duration: f64,
    /// s
    pub warmup: f64,
    /// Hz
    pub rate: f64,
    /// Joint-angle noise of the initial stand (rad).
    pub initial_noise: f64,
    /// Smallest fraction of speeds that must survive.
    pub min_success: f64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        Self {
            speeds: default_speed_grid(),
            duration: 10.0,
            warmup: 2.0,
            rate: 50.0,
            initial_noise: 0.01,
            min_success: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Collection {
    pub dataset: GaitDataset,
    /// Speeds that fell or errored, with the reason.
    pub failed: Vec<(f64, String)>,
}

/// Standing pose with Gaussian joint noise (`sigma_q`, rad) and rate noise (`sigma_dq`),
/// re-grounded so the stance sole is flat at height 0 and consistent with the weld.
pub fn noisy_standing<R: rand::Rng + ?Sized>(
    model: &RobotModel,
    base_height: f64,
    stance: Leg,
    sigma_q: f64,
    sigma_dq: f64,
    rng: &mut R,
) -> Result<RobotState> {
    let s = RobotState::standing(model, base_height, stance)?;
    if sigma_q == 0.0 && sigma_dq == 0.0 {
        return Ok(s);
    }
    let mut q = s.q;
    let mut dq = [0.0; NQ];
    if sigma_q > 0.0 {
        let n = Normal::new(0.0, sigma_q).map_err(|e| Error::Argument(e.to_string()))?;
        for v in q.iter_mut().skip(2) {
            *v += n.sample(rng);
        }
    }
    if sigma_dq > 0.0 {
        let n = Normal::new(0.0, sigma_dq).map_err(|e| Error::Argument(e.to_string()))?;
        for v in dq.iter_mut() {
            *v = n.sample(rng);
        }
    }
    RobotState::grounded(model, q, dq, stance)
}

fn walk_one(
    model: &RobotModel,
    walker: &WalkerConfig,
    cfg: &CollectionConfig,
    speed: f64,
    seed: u64,
    stream: u64,
) -> Result<Vec<[f64; NFEATURES]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let lip = LipParams::for_model(model, walker.step_duration)?;
    let start = noisy_standing(model, model.nominal_base_height, Leg::Left, cfg.initial_noise, 0.0, &mut rng)?;
    let mut w = Walker::new(model.clone(), walker.clone(), start)?;
    let every = (walker.policy_rate as f64 / cfg.rate).round() as usize;
    let warm = (cfg.warmup * walker.policy_rate as f64).round() as usize;
    let total = warm + (cfg.duration * walker.policy_rate as f64).round() as usize;
    let mut out = Vec::with_capacity((cfg.duration * cfg.rate).round() as usize);
    for k in 1..=total {
        let action = baseline_action(model, w.state(), w.command_velocity(), &lip);
        let info = w.tick(&action, speed)?;
        if info.fell {
            return Err(Error::Collection(format!("fell at t = {:.2} s", w.state().time)));
        }
        if k > warm && (k - warm) % every == 0 {
            out.push(stance_frame_transform(model, w.state()));
        }
    }
    Ok(out)
}

/// Walks the baseline at each speed in parallel and concatenates kept samples in grid
/// order. Speeds that fail are dropped and reported.
pub fn collect_gaits(
    model: &RobotModel,
    walker: &WalkerConfig,
    cfg: &CollectionConfig,
    seed: u64,
) -> Result<Collection> {
    walker.validate()?;
    if cfg.speeds.is_empty() {
        return Err(Error::Argument("empty speed grid".into()));
    }
    let ratio = walker.policy_rate as f64 / cfg.rate;
    if !(cfg.rate > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::Argument(format!(
            "sampling rate {} Hz must divide the policy rate {} Hz",
            cfg.rate, walker.policy_rate
        )));
    }
    if !(cfg.duration > 0.0 && cfg.warmup >= 0.0) {
        return Err(Error::Argument("duration must be > 0 and warm-up >= 0".into()));
    }
    let runs: Vec<_> = cfg
        .speeds
        .par_iter()
        .enumerate()
        .map(|(k, &v)| walk_one(model, walker, cfg, v, seed, k as u64))
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut failed = Vec::new();
    for (run, &v) in runs.into_iter().zip(&cfg.speeds) {
        match run {
            Ok(samples) => {
                labels.extend(std::iter::repeat_n(v, samples.len()));
                rows.extend(samples);
            }
            Err(e) => failed.push((v, e.to_string())),
        }
    }
    let ok = cfg.speeds.len() - failed.len();
    if (ok as f64) < cfg.min_success * cfg.speeds.len() as f64 || rows.is_empty() {
        return Err(Error::Collection(format!(
            "only {ok} of {} speeds survived; failed: {:?}",
            cfg.speeds.len(),
            failed.iter().map(|f| f.0).collect::<Vec<_>>()
        )));
    }
    let provenance = serde_json::json!({
        "controller": "lip-baseline",
        "seed": seed,
        "speeds": cfg.speeds,
        "failed": failed.iter().map(|f| f.0).collect::<Vec<_>>(),
        "duration": cfg.duration,
        "warmup": cfg.warmup,
        "initial_noise": cfg.initial_noise,
    })
    .to_string();
    let samples = Array2::from_shape_vec((rows.len(), NFEATURES), rows.concat()).expect("rows are NFEATURES wide");
    let mut dataset = GaitDataset::new(samples, labels, cfg.rate, None, provenance)?;
    if dataset.len() >= 2 {
        dataset.fit_standardizer()?;
    }
    Ok(Collection { dataset, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_speed_counts() {
        let model = RobotModel::default();
        let cfg = CollectionConfig {
            speeds: vec![0.0],
            duration: 10.0,
            ..CollectionConfig::default()
        };
        let c = collect_gaits(&model, &WalkerConfig::default(), &cfg, 1).unwrap();
        assert_eq!(c.dataset.len(), 500);
        assert!(c.dataset.labels.iter().all(|l| *l == 0.0));
        assert!(c.failed.is_empty());
        assert!(c.dataset.samples.column(0).iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn noise_free_stand_is_exact() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = noisy_standing(&model, 1.0, Leg::Left, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(s, RobotState::standing(&model, 1.0, Leg::Left).unwrap());
    }

    #[test]
    fn rejects_bad_rate() {
        let cfg = CollectionConfig {
            rate: 30.0,
            ..CollectionConfig::default()
        };
        assert!(collect_gaits(&RobotModel::default(), &WalkerConfig::default(), &cfg, 0).is_err());
    }
}
