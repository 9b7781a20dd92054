//! Python bindings: a stepping simulator with the baseline planner, autoencoder access,
//! the reward and planner math, and the pipeline stages.

use std::path::PathBuf;

use latent_gait::ae::{load_autoencoder, AutoencoderModel};
use latent_gait::config::ExperimentConfig;
use latent_gait::control::{self, stance_frame_transform, PolicyAction, Walker, WalkerConfig};
use latent_gait::dataset::noisy_standing;
use latent_gait::eval::{pca_project, Scenario};
use latent_gait::pipeline;
use latent_gait::planner::{self, baseline_action, LipParams};
use latent_gait::rl::{compute_reward as reward, REWARD_WEIGHTS};
use latent_gait::sim::{com_state, Leg, RobotModel};
use latent_gait::Error;
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Argument(_) | Error::Shape { .. } | Error::Range(_) | Error::Config(_) | Error::Degenerate(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn load_config(config: Option<PathBuf>, seed: Option<u64>) -> PyResult<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(&p).map_err(py_err)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Closed-loop biped walking at the policy rate.
#[pyclass(module = "latent_gait_py")]
struct Simulator {
    walker: Walker,
    lip: LipParams,
    v_des: f64,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (v_des=0.0, seed=0, joint_noise=0.0))]
    fn new(v_des: f64, seed: u64, joint_noise: f64) -> PyResult<Self> {
        let model = RobotModel::default();
        let cfg = WalkerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = noisy_standing(&model, model.nominal_base_height, Leg::Left, joint_noise, 0.0, &mut rng).map_err(py_err)?;
        let lip = LipParams::for_model(&model, cfg.step_duration).map_err(py_err)?;
        let walker = Walker::new(model, cfg, start).map_err(py_err)?;
        Ok(Self { walker, lip, v_des })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.walker.state().time
    }

    #[getter]
    fn v_des(&self) -> f64 {
        self.v_des
    }

    #[setter]
    fn set_v_des(&mut self, v: f64) {
        self.v_des = v;
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.walker.state().q.to_vec()
    }

    #[getter]
    fn dq(&self) -> Vec<f64> {
        self.walker.state().dq.to_vec()
    }

    #[getter]
    fn average_velocity(&self) -> f64 {
        self.walker.average_velocity()
    }

    #[getter]
    fn fallen(&self) -> bool {
        self.walker.has_fallen()
    }

    /// Centre-of-mass horizontal velocity.
    #[getter]
    fn com_velocity(&self) -> f64 {
        com_state(self.walker.model(), self.walker.state()).velocity[0]
    }

    /// Stance-frame state fed to the encoder.
    fn features(&self) -> Vec<f64> {
        stance_frame_transform(self.walker.model(), self.walker.state()).to_vec()
    }

    /// Action the foot-placement planner would take now.
    fn baseline_action(&self) -> (f64, f64) {
        let a = baseline_action(self.walker.model(), self.walker.state(), self.walker.command_velocity(), &self.lip);
        (a.landing_offset, a.velocity_offset)
    }

    /// Advances one policy interval; actions outside the bound are rejected. Returns
    /// whether the robot fell.
    #[pyo3(signature = (landing_offset=None, velocity_offset=0.0))]
    fn step(&mut self, landing_offset: Option<f64>, velocity_offset: f64) -> PyResult<bool> {
        let action = match landing_offset {
            Some(l) => PolicyAction::new(l, velocity_offset).map_err(py_err)?,
            None => {
                let (l, _) = self.baseline_action();
                PolicyAction::new(l, velocity_offset).map_err(py_err)?
            }
        };
        let info = self.walker.tick(&action, self.v_des).map_err(py_err)?;
        Ok(info.fell)
    }
}

/// Trained autoencoder loaded from a checkpoint directory.
#[pyclass(module = "latent_gait_py")]
struct Autoencoder {
    model: AutoencoderModel,
    #[pyo3(get)]
    encoder_sha256: String,
}

#[pymethods]
impl Autoencoder {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (model, h) = load_autoencoder(&dir).map_err(py_err)?;
        Ok(Self {
            model,
            encoder_sha256: h,
        })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn encode(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.encode(&features).map_err(py_err)
    }

    fn decode(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.model.decode(&z).map_err(py_err)
    }
}

/// Quintic blend: `(position, velocity, acceleration)` at normalized time `s`.
#[pyfunction]
fn min_jerk(s: f64, start: f64, end: f64) -> PyResult<(f64, f64, f64)> {
    control::min_jerk(s, start, end).map_err(py_err)
}

/// Dead-beat landing offset from the linear pendulum.
#[pyfunction]
#[pyo3(signature = (com_x, com_v, v_des, time_to_touchdown, height=1.0, step_duration=0.4, gravity=9.81))]
fn foot_placement(
    com_x: f64,
    com_v: f64,
    v_des: f64,
    time_to_touchdown: f64,
    height: f64,
    step_duration: f64,
    gravity: f64,
) -> PyResult<f64> {
    let p = LipParams::new(height, step_duration, gravity).map_err(py_err)?;
    Ok(planner::foot_placement(com_x, com_v, v_des, time_to_touchdown, &p))
}

#[pyfunction]
#[pyo3(signature = (v_bar, v_des, angular_momentum, action, prev_action, momentum_scale=0.05))]
fn compute_reward(
    v_bar: f64,
    v_des: f64,
    angular_momentum: f64,
    action: (f64, f64),
    prev_action: (f64, f64),
    momentum_scale: f64,
) -> f64 {
    reward(
        v_bar,
        v_des,
        angular_momentum,
        &[action.0, action.1],
        &[prev_action.0, prev_action.1],
        &REWARD_WEIGHTS,
        momentum_scale,
    )
}

/// Returns `(projection rows, components, explained variance)`.
#[pyfunction]
#[pyo3(signature = (rows, out_dims=2))]
fn pca(rows: Vec<Vec<f64>>, out_dims: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let cols = rows.first().map_or(0, Vec::len);
    let a = Array2::from_shape_vec((rows.len(), cols), rows.concat())
        .map_err(|_| PyValueError::new_err("rows have different lengths"))?;
    let (proj, p) = pca_project(&a, out_dims).map_err(py_err)?;
    let to_rows = |x: &Array2<f64>| x.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok((to_rows(&proj), to_rows(&p.components), p.explained_variance))
}

/// Writes the gait dataset to `out`.
#[pyfunction]
#[pyo3(signature = (out, config=None, seed=None))]
fn collect(py: Python<'_>, out: PathBuf, config: Option<PathBuf>, seed: Option<u64>) -> PyResult<()> {
    let cfg = load_config(config, seed)?;
    py.detach(|| pipeline::cmd_collect(&cfg, &out)).map_err(py_err)?;
    Ok(())
}

#[pyfunction]
#[pyo3(signature = (dataset, out, config=None, seed=None))]
fn train_ae(py: Python<'_>, dataset: PathBuf, out: PathBuf, config: Option<PathBuf>, seed: Option<u64>) -> PyResult<()> {
    let cfg = load_config(config, seed)?;
    py.detach(|| pipeline::cmd_train_ae(&cfg, &dataset, &out)).map_err(py_err)?;
    Ok(())
}

#[pyfunction]
#[pyo3(signature = (ae, out, config=None, seed=None))]
fn train_policy(py: Python<'_>, ae: PathBuf, out: PathBuf, config: Option<PathBuf>, seed: Option<u64>) -> PyResult<()> {
    let cfg = load_config(config, seed)?;
    py.detach(|| pipeline::cmd_train_policy(&cfg, &ae, &out, |_| {})).map_err(py_err)?;
    Ok(())
}

/// Runs the named scenarios (all when empty) and returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (ae, policy, out, scenarios=Vec::new(), config=None, seed=None))]
fn evaluate(
    py: Python<'_>,
    ae: PathBuf,
    policy: PathBuf,
    out: PathBuf,
    scenarios: Vec<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<String> {
    let cfg = load_config(config, seed)?;
    let mut selected = scenarios.iter().map(|s| Scenario::parse(s)).collect::<Result<Vec<_>, _>>().map_err(py_err)?;
    if selected.is_empty() {
        selected = Scenario::ALL.to_vec();
    }
    let (_, output) = py
        .detach(|| pipeline::cmd_eval(&cfg, &ae, &policy, &selected, &out))
        .map_err(py_err)?;
    output.report_json().map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (ae, dataset, out, config=None))]
fn reconstruct(py: Python<'_>, ae: PathBuf, dataset: PathBuf, out: PathBuf, config: Option<PathBuf>) -> PyResult<()> {
    let cfg = load_config(config, None)?;
    py.detach(|| pipeline::cmd_reconstruct(&cfg, &ae, &dataset, &out)).map_err(py_err)?;
    Ok(())
}

/// Resolved default configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    ExperimentConfig::default().to_toml().map_err(py_err)
}

#[pymodule]
fn latent_gait_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", latent_gait::config::TOOL_VERSION)?;
    m.add_class::<Simulator>()?;
    m.add_class::<Autoencoder>()?;
    m.add_function(wrap_pyfunction!(min_jerk, m)?)?;
    m.add_function(wrap_pyfunction!(foot_placement, m)?)?;
    m.add_function(wrap_pyfunction!(compute_reward, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(train_ae, m)?)?;
    m.add_function(wrap_pyfunction!(train_policy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
