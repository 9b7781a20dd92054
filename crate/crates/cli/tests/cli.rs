use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[dataset]
speeds = [0.0, 0.3]
duration = 1.0
warmup = 0.5

[autoencoder]
epochs = 2

[ppo]
workers = 1
steps_per_worker = 64
total_steps = 128
minibatch = 32
checkpoint_every = 1

[eval]
seeds = 1
velocity_profile = [{ value = 0.0, duration = 1.0 }, { value = 0.2, duration = 1.0 }]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-gait"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[ppo]\nworkerz = 2\n").unwrap();
    let o = run(&["collect", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("workerz"));
    let o = run(&["train-ae", "--dataset", "/nonexistent/d.lgds", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn small_pipeline_is_reproducible_and_checks_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("exp.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let p = |name: &str| root.join(name);

    for out in ["data_a", "data_b"] {
        assert_ok(&run(&["collect", "--config", c, "--out", s(&p(out)), "--workers", "1"]));
    }
    let a = std::fs::read(p("data_a/dataset.lgds")).unwrap();
    assert_eq!(a, std::fs::read(p("data_b/dataset.lgds")).unwrap());
    assert!(std::fs::read_to_string(p("data_a/manifest.json")).unwrap().contains("latent-gait "));
    assert!(p("data_a/config.toml").exists());

    let ds = p("data_a/dataset.lgds");
    assert_ok(&run(&["train-ae", "--config", c, "--dataset", s(&ds), "--out", s(&p("ae"))]));
    assert_ok(&run(&["train-ae", "--config", c, "--seed", "4", "--dataset", s(&ds), "--out", s(&p("ae_other"))]));
    assert_ok(&run(&["reconstruct", "--config", c, "--ae", s(&p("ae")), "--dataset", s(&ds), "--out", s(&p("rec"))]));
    assert!(p("rec/reconstruction.csv").exists());

    assert_ok(&run(&["train-policy", "--config", c, "--ae", s(&p("ae")), "--out", s(&p("pol"))]));
    let curves = std::fs::read_to_string(p("pol/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 3);
    assert!(p("pol/checkpoints/iter_00001/policy.lgnn").exists());

    let o = run(&[
        "eval", "--config", c, "--ae", s(&p("ae")), "--policy", s(&p("pol")), "--scenario", "velocity", "--out",
        s(&p("ev")),
    ]);
    assert_ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("velocity"));
    let dirs: Vec<_> = std::fs::read_dir(p("ev")).unwrap().filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
    assert_eq!(dirs.len(), 1);
    assert_eq!(dirs[0].file_name(), "velocity");

    let o = run(&["eval", "--config", c, "--ae", s(&p("ae_other")), "--policy", s(&p("pol")), "--out", s(&p("ev2"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("encoder"));

    // A dataset edited after collection no longer matches its manifest.
    let mut bytes = a.clone();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(p("data_b/dataset.lgds"), bytes).unwrap();
    let o = run(&["train-ae", "--config", c, "--dataset", s(&p("data_b/dataset.lgds")), "--out", s(&p("ae3"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn default_collect_has_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&["collect", "--out", s(dir.path())]));
    let ds = latent_gait::dataset::load_dataset(&dir.path().join("dataset.lgds")).unwrap();
    assert_eq!(ds.len(), 8000);
}
