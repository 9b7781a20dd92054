use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::env::observe;
use super::obs::{ObsNormalizer, Observation};
use super::policy::{PolicyNet, ValueNet};
use crate::ae::AutoencoderModel;
use crate::control::{PolicyAction, Walker};
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};
use crate::nn::{read_mlp_bytes, write_mlp_bytes};

pub const POLICY_FILE: &str = "policy.lgnn";
pub const VALUE_FILE: &str = "value.lgnn";
pub const POLICY_SIDECAR: &str = "policy.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySidecar {
    action_scale: f64,
    action_std: f64,
    obs_dim: usize,
    latent_dim: usize,
    normalizer: ObsNormalizer,
    /// Hash of the encoder file the policy was trained against.
    encoder_sha256: String,
    policy_sha256: String,
    value_sha256: String,
}

pub fn save_policy(
    policy: &PolicyNet,
    value: &ValueNet,
    normalizer: &ObsNormalizer,
    encoder_sha256: &str,
    dir: &Path,
) -> Result<()> {
    let p = write_mlp_bytes(&policy.net);
    let v = write_mlp_bytes(&value.net);
    let sidecar = PolicySidecar {
        action_scale: policy.scale,
        action_std: policy.std,
        obs_dim: policy.obs_dim(),
        latent_dim: policy.obs_dim().saturating_sub(4),
        normalizer: normalizer.clone(),
        encoder_sha256: encoder_sha256.to_string(),
        policy_sha256: sha256_hex(&p),
        value_sha256: sha256_hex(&v),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&dir.join(POLICY_FILE), &p)?;
    write_atomic(&dir.join(VALUE_FILE), &v)?;
    write_atomic(&dir.join(POLICY_SIDECAR), json.as_bytes())
}

/// Loads a policy checkpoint. When `encoder_sha256` is given it must match the hash
/// recorded at training time.
pub fn load_policy(dir: &Path, encoder_sha256: Option<&str>) -> Result<(PolicyNet, ValueNet, ObsNormalizer)> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let p = read(POLICY_FILE)?;
    let v = read(VALUE_FILE)?;
    let sidecar: PolicySidecar =
        serde_json::from_slice(&read(POLICY_SIDECAR)?).map_err(|e| Error::Format(format!("{POLICY_SIDECAR}: {e}")))?;
    if sha256_hex(&p) != sidecar.policy_sha256 || sha256_hex(&v) != sidecar.value_sha256 {
        return Err(Error::Compatibility("policy network files do not match their sidecar hashes".into()));
    }
    if let Some(h) = encoder_sha256 {
        if h != sidecar.encoder_sha256 {
            return Err(Error::Compatibility(format!(
                "policy was trained against encoder {} but {} was supplied",
                sidecar.encoder_sha256, h
            )));
        }
    }
    let policy = PolicyNet::new(read_mlp_bytes(&p)?, sidecar.action_std, sidecar.action_scale)?;
    let value = ValueNet { net: read_mlp_bytes(&v)? };
    if policy.obs_dim() != sidecar.obs_dim || sidecar.normalizer.dim() != sidecar.obs_dim {
        return Err(Error::Compatibility("sidecar observation dimension disagrees with networks".into()));
    }
    Ok((policy, value, sidecar.normalizer))
}

/// Deterministic policy for evaluation: encoder, frozen normalizer, squashed mean.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub policy: PolicyNet,
    pub normalizer: ObsNormalizer,
    pub encoder: Arc<AutoencoderModel>,
}

impl LearnedPolicy {
    pub fn new(policy: PolicyNet, normalizer: ObsNormalizer, encoder: Arc<AutoencoderModel>) -> Result<Self> {
        let want = Observation::dim_for(encoder.latent_dim());
        if policy.obs_dim() != want || normalizer.dim() != want {
            return Err(Error::Compatibility(format!(
                "policy expects {} inputs, encoder implies {want}",
                policy.obs_dim()
            )));
        }
        Ok(Self {
            policy,
            normalizer,
            encoder,
        })
    }

    pub fn act(&self, walker: &Walker, v_des: f64, prev_action: [f64; 2]) -> Result<(PolicyAction, Observation)> {
        let obs = observe(&self.encoder, walker, v_des, prev_action)?;
        let a = self
            .policy
            .deterministic_action(&self.normalizer.normalize(&obs.to_vec())?)?;
        Ok((PolicyAction::clipped(a[0], a[1]), obs))
    }
}
