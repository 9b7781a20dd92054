use std::path::Path;

use latent_gait::config::ExperimentConfig;
use latent_gait::eval::{Scenario, Trace};
use latent_gait::pipeline::{self, Manifest};
use latent_gait::Error;

const TINY: &str = r#"
seed = 9
[dataset]
speeds = [0.0, 0.3]
duration = 1.0
warmup = 0.5
[autoencoder]
epochs = 2
[ppo]
workers = 1
steps_per_worker = 64
total_steps = 64
minibatch = 32
[eval]
seeds = 1
survival_speeds = [0.2]
survival_steps = 40
velocity_profile = [{ value = 0.0, duration = 0.6 }, { value = 0.2, duration = 0.6 }]
"#;

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join(pipeline::MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn stages_chain_through_hashes() {
    let root = tempfile::tempdir().unwrap();
    let p = |s: &str| root.path().join(s);
    let cfg = ExperimentConfig::from_toml(TINY).unwrap();

    let collect = pipeline::cmd_collect(&cfg, &p("data")).unwrap();
    let ds = p("data").join(pipeline::DATASET_FILE);
    let ae = pipeline::cmd_train_ae(&cfg, &ds, &p("ae")).unwrap();
    assert_eq!(ae.inputs["dataset"], collect.outputs[pipeline::DATASET_FILE]);
    assert!(!ae.outputs.contains_key(pipeline::TIMING_FILE));
    assert!(p("ae").join(pipeline::TIMING_FILE).exists());

    let pol = pipeline::cmd_train_policy(&cfg, &p("ae"), &p("policy"), |_| {}).unwrap();
    let (enc_name, enc_hash) = ae.outputs.iter().find(|(k, _)| k.starts_with("encoder")).unwrap();
    assert_eq!(&pol.inputs["encoder"], enc_hash, "{enc_name}");
    assert_eq!(manifest(&p("policy")), pol);

    let (m, out) = pipeline::cmd_eval(&cfg, &p("ae"), &p("policy"), &[Scenario::Velocity, Scenario::Survival], &p("eval")).unwrap();
    assert_eq!(out.report.entries.len(), out.files.len());
    for (rel, csv) in &out.files {
        assert!(m.outputs.contains_key(rel));
        let trace = Trace::from_csv(csv).unwrap();
        assert_eq!(&trace.to_csv(), csv);
        assert_eq!(std::fs::read_to_string(p("eval").join(rel)).unwrap(), *csv);
    }
}

#[test]
fn tampered_or_mismatched_inputs_are_refused() {
    let root = tempfile::tempdir().unwrap();
    let p = |s: &str| root.path().join(s);
    let cfg = ExperimentConfig::from_toml(TINY).unwrap();
    pipeline::cmd_collect(&cfg, &p("data")).unwrap();
    let ds = p("data").join(pipeline::DATASET_FILE);
    pipeline::cmd_train_ae(&cfg, &ds, &p("ae")).unwrap();
    pipeline::cmd_train_policy(&cfg, &p("ae"), &p("policy"), |_| {}).unwrap();

    let mut other = cfg.clone();
    other.seed = 10;
    pipeline::cmd_train_ae(&other, &ds, &p("ae2")).unwrap();
    assert!(matches!(pipeline::load_learned(&p("ae2"), &p("policy")), Err(Error::Compatibility(_))));

    let mut bytes = std::fs::read(&ds).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&ds, bytes).unwrap();
    assert!(matches!(pipeline::cmd_train_ae(&cfg, &ds, &p("ae3")), Err(Error::Compatibility(_))));
}
