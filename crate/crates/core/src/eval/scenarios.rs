use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::pca::{pca_fit, r_squared, LinearFit, Pca};
use super::profile::{Profile, ProfileSegment};
use super::rollout::{run_closed_loop, tracking_metrics, Controller, PushSpec, RolloutSetup, Trace, TrackingMetrics};
use crate::ae::AutoencoderModel;
use crate::control::{WalkerConfig, NFEATURES};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::sim::RobotModel;

/// Mass of the full-size robot whose push magnitudes the disturbance grid is quoted for.
pub const REFERENCE_PUSH_MASS: f64 = 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Velocity,
    Survival,
    Latent,
    Disturbance,
    Height,
    Comparison,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Velocity,
        Scenario::Survival,
        Scenario::Latent,
        Scenario::Disturbance,
        Scenario::Height,
        Scenario::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Velocity => "velocity",
            Scenario::Survival => "survival",
            Scenario::Latent => "latent",
            Scenario::Disturbance => "disturbance",
            Scenario::Height => "height",
            Scenario::Comparison => "comparison",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seeded trials per scenario grid point.
    pub seeds: usize,
    pub joint_noise: f64,
    pub rate_noise: f64,
    pub velocity_profile: Profile,
    pub survival_speeds: Vec<f64>,
    pub survival_steps: usize,
    /// Fit and held-out speeds alternate through this list.
    pub latent_speeds: Vec<f64>,
    pub latent_warmup: f64,
    pub latent_duration: f64,
    /// Include squared and cross terms of the 2-D projection in the speed regression.
    pub latent_quadratic: bool,
    pub push_speed: f64,
    /// Forces quoted for the reference mass; scaled by model mass when `push_mass_scaled`.
    pub push_forces: Vec<f64>,
    pub push_durations: Vec<f64>,
    pub push_mass_scaled: bool,
    /// Earliest push time; the push starts at the next mid-stance.
    pub push_after: f64,
    /// Time simulated after the push starts.
    pub push_observe: f64,
    pub height_speed: f64,
    pub height_profile: Profile,
    pub comparison_speeds: Vec<f64>,
    pub comparison_warmup: f64,
    pub comparison_duration: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            joint_noise: 0.03,
            rate_noise: 0.05,
            velocity_profile: Profile::steps(&[0.0, 0.25, 0.5, -0.25], 6.0, 0.0).expect("valid"),
            survival_speeds: vec![-0.25, 0.0, 0.25, 0.5],
            survival_steps: 600,
            latent_speeds: (0..15).map(|k| -0.45 + 0.1 * k as f64).collect(),
            latent_warmup: 2.0,
            latent_duration: 10.0,
            latent_quadratic: false,
            push_speed: 0.5,
            push_forces: vec![-100.0, -60.0, -30.0, 30.0, 60.0],
            push_durations: vec![0.1, 0.5, 1.0, 1.5],
            push_mass_scaled: true,
            push_after: 4.0,
            push_observe: 5.0,
            height_speed: 0.5,
            height_profile: Profile::new(
                [1.0, 0.95, 0.9, 1.0]
                    .iter()
                    .map(|&value| ProfileSegment {
                        value,
                        duration: 5.0,
                        ramp: 1.0,
                    })
                    .collect(),
            )
            .expect("valid"),
            comparison_speeds: vec![0.7, 1.0],
            comparison_warmup: 2.0,
            comparison_duration: 10.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.velocity_profile.validate()?;
        self.height_profile.validate()?;
        if self.seeds == 0 || self.survival_steps == 0 {
            return Err(Error::Config("eval seeds and survival_steps must be positive".into()));
        }
        if !(self.joint_noise >= 0.0 && self.rate_noise >= 0.0) {
            return Err(Error::Config("eval noise must be non-negative".into()));
        }
        if !(self.latent_duration > 0.0 && self.latent_warmup >= 0.0 && self.comparison_duration > 0.0) {
            return Err(Error::Config("eval durations must be positive".into()));
        }
        if !(self.push_observe > 0.0 && self.push_after >= 0.0) || self.push_durations.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("push timing must be non-negative".into()));
        }
        Ok(())
    }

    pub fn push_scale(&self, model: &RobotModel) -> f64 {
        if self.push_mass_scaled {
            model.total_mass() / REFERENCE_PUSH_MASS
        } else {
            1.0
        }
    }

    fn setup(&self, velocity: Profile, seed: u64) -> RolloutSetup {
        RolloutSetup {
            velocity,
            height: None,
            push: None,
            seed,
            joint_noise: self.joint_noise,
            rate_noise: self.rate_noise,
            record_features: false,
        }
    }
}

/// Shared inputs of every scenario.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub model: RobotModel,
    pub walker: WalkerConfig,
    pub config: EvalConfig,
    pub seed: u64,
}

impl EvalContext {
    fn trial_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_add(k as u64)
    }

    fn run(&self, controller: &Controller, setup: &RolloutSetup) -> Result<Trace> {
        run_closed_loop(&self.model, &self.walker, controller, setup)
    }
}

pub fn velocity_tracking_eval(
    ctx: &EvalContext,
    controller: &Controller,
    profile: &Profile,
    seed: u64,
) -> Result<(Trace, TrackingMetrics)> {
    let trace = ctx.run(controller, &ctx.config.setup(profile.clone(), seed))?;
    let m = tracking_metrics(&trace, profile);
    Ok((trace, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub v_des: f64,
    pub seed: u64,
    pub fell: bool,
    pub survival_time: f64,
    pub steady_state_error: f64,
}

/// Fixed-speed episodes of `survival_steps` policy ticks for every speed and seed.
pub fn survival_eval(ctx: &EvalContext, controller: &Controller) -> Result<Vec<(SurvivalRow, Trace)>> {
    let c = &ctx.config;
    let duration = c.survival_steps as f64 * ctx.walker.policy_dt();
    let jobs: Vec<(f64, u64)> = c
        .survival_speeds
        .iter()
        .flat_map(|&v| (0..c.seeds).map(move |k| (v, k)))
        .map(|(v, k)| (v, ctx.trial_seed(k)))
        .collect();
    jobs.par_iter()
        .map(|&(v, seed)| {
            let profile = Profile::constant(v, duration)?;
            let (trace, m) = velocity_tracking_eval(ctx, controller, &profile, seed)?;
            Ok((
                SurvivalRow {
                    v_des: v,
                    seed,
                    fell: trace.fell,
                    survival_time: m.survival_time,
                    steady_state_error: m.segments[0].steady_state_error,
                },
                trace,
            ))
        })
        .collect()
}

/// Speed decodability from 2-D projections, fitted on alternate speeds and scored on
/// the rest.
#[derive(Debug, Clone)]
pub struct LatentStructure {
    /// Per surviving speed: latent states and raw stance-frame states, one row per sample.
    pub clouds: Vec<(f64, Array2<f64>, Array2<f64>)>,
    pub flagged: Vec<f64>,
    pub latent_r2: Option<f64>,
    pub raw_r2: Option<f64>,
    pub latent_pca: Option<Pca>,
    pub raw_pca: Option<Pca>,
}

fn regression_features(x: &Array2<f64>, quadratic: bool) -> Array2<f64> {
    if !quadratic {
        return x.clone();
    }
    let d = x.ncols();
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j).to_vec()).collect();
    for a in 0..d {
        for b in a..d {
            cols.push(x.column(a).iter().zip(x.column(b)).map(|(p, q)| p * q).collect());
        }
    }
    Array2::from_shape_fn((x.nrows(), cols.len()), |(i, j)| cols[j][i])
}

/// R² of speed regressed on the 2-D PCA of `clouds`, fitted on even-indexed speeds and
/// scored on odd-indexed ones. `None` when fewer than two speeds land on either side.
pub fn decodability_r2(clouds: &[(f64, Array2<f64>)], quadratic: bool) -> Result<(Option<f64>, Option<Pca>)> {
    let stack = |pick: usize| -> Option<(Array2<f64>, Vec<f64>)> {
        let parts: Vec<&(f64, Array2<f64>)> = clouds.iter().enumerate().filter(|(i, _)| i % 2 == pick).map(|(_, c)| c).collect();
        if parts.len() < 2 {
            return None;
        }
        let views: Vec<_> = parts.iter().map(|(_, a)| a.view()).collect();
        let x = ndarray::concatenate(ndarray::Axis(0), &views).ok()?;
        let y = parts.iter().flat_map(|(v, a)| std::iter::repeat_n(*v, a.nrows())).collect();
        Some((x, y))
    };
    let (Some((xtr, ytr)), Some((xte, yte))) = (stack(0), stack(1)) else {
        return Ok((None, None));
    };
    let pca = pca_fit(&xtr, 2.min(xtr.ncols()))?;
    let ftr = regression_features(&pca.transform(&xtr), quadratic);
    let fte = regression_features(&pca.transform(&xte), quadratic);
    let fit = LinearFit::fit(&ftr, &ytr)?;
    Ok((r_squared(&yte, &fit.predict(&fte)), Some(pca)))
}

pub fn latent_structure_report(
    ctx: &EvalContext,
    controller: &Controller,
    encoder: &AutoencoderModel,
) -> Result<LatentStructure> {
    let c = &ctx.config;
    let dt = ctx.walker.policy_dt();
    let warm = (c.latent_warmup / dt).round() as usize;
    let runs: Vec<Result<(f64, Option<(Array2<f64>, Array2<f64>)>)>> = c
        .latent_speeds
        .par_iter()
        .map(|&v| {
            let profile = Profile::constant(v, c.latent_warmup + c.latent_duration)?;
            let mut setup = c.setup(profile, ctx.seed);
            setup.joint_noise = 0.0;
            setup.rate_noise = 0.0;
            setup.record_features = true;
            let trace = ctx.run(controller, &setup)?;
            if trace.fell {
                return Ok((v, None));
            }
            let rows = &trace.rows[warm..];
            let z = Array2::from_shape_fn((rows.len(), trace.latent_dim), |(i, j)| rows[i].z[j]);
            let raw = Array2::from_shape_fn((rows.len(), NFEATURES), |(i, j)| rows[i].features[j]);
            Ok((v, Some((z, raw))))
        })
        .collect();
    let mut clouds = Vec::new();
    let mut flagged = Vec::new();
    for r in runs {
        match r? {
            (v, Some((z, raw))) => clouds.push((v, z, raw)),
            (v, None) => flagged.push(v),
        }
    }
    let lat: Vec<(f64, Array2<f64>)> = clouds.iter().map(|(v, z, _)| (*v, z.clone())).collect();
    let (latent_r2, latent_pca) = decodability_r2(&lat, c.latent_quadratic)?;
    // Raw states are standardized with the encoder's statistics so no feature dominates by units.
    let raw: Vec<(f64, Array2<f64>)> = clouds
        .iter()
        .map(|(v, _, r)| Ok((*v, encoder.stats.apply(r.view())?)))
        .collect::<Result<_>>()?;
    let (raw_r2, raw_pca) = decodability_r2(&raw, c.latent_quadratic)?;
    Ok(LatentStructure {
        clouds,
        flagged,
        latent_r2,
        raw_r2,
        latent_pca,
        raw_pca,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushRow {
    /// As quoted for the reference mass.
    pub nominal_force: f64,
    /// Applied to the model.
    pub force: f64,
    pub duration: f64,
    pub seed: u64,
    pub survived: bool,
    pub push_start: Option<f64>,
    pub max_speed_deviation: f64,
}

/// Largest `|v̄ − v_des|` from the first pushed row on; 0 when no push was applied.
pub fn max_speed_deviation(trace: &Trace) -> f64 {
    let Some(first) = trace.rows.iter().position(|r| r.push != 0.0) else {
        return 0.0;
    };
    trace.rows[first..].iter().map(|r| (r.v_bar - r.v_des).abs()).fold(0.0, f64::max)
}

/// One push trial: walk at `v_des`, push at the first mid-stance after `push_after`.
pub fn push_trial(ctx: &EvalContext, controller: &Controller, v_des: f64, force: f64, duration: f64, seed: u64) -> Result<Trace> {
    let c = &ctx.config;
    let mut setup = c.setup(Profile::constant(v_des, c.push_after + c.push_observe)?, seed);
    setup.push = Some(PushSpec {
        force,
        duration,
        after: c.push_after,
    });
    ctx.run(controller, &setup)
}

pub fn disturbance_eval(ctx: &EvalContext, controller: &Controller) -> Result<Vec<(PushRow, Trace)>> {
    let c = &ctx.config;
    let scale = c.push_scale(&ctx.model);
    let mut jobs = Vec::new();
    for &f in &c.push_forces {
        for &d in &c.push_durations {
            for k in 0..c.seeds {
                jobs.push((f, d, ctx.trial_seed(k)));
            }
        }
    }
    jobs.par_iter()
        .map(|&(f, d, seed)| {
            let trace = push_trial(ctx, controller, c.push_speed, f * scale, d, seed)?;
            Ok((
                PushRow {
                    nominal_force: f,
                    force: f * scale,
                    duration: d,
                    seed,
                    survived: !trace.fell,
                    push_start: trace.push_start,
                    max_speed_deviation: max_speed_deviation(&trace),
                },
                trace,
            ))
        })
        .collect()
}

/// Fixed-speed walk under the configured base-height reference profile.
pub fn ood_height_eval(ctx: &EvalContext, controller: &Controller, seed: u64) -> Result<(Trace, TrackingMetrics)> {
    let c = &ctx.config;
    let profile = height_velocity_profile(c)?;
    let mut setup = c.setup(profile.clone(), seed);
    setup.height = Some(c.height_profile.clone());
    let trace = ctx.run(controller, &setup)?;
    let m = tracking_metrics(&trace, &profile);
    Ok((trace, m))
}

/// Constant speed with the height profile's segmentation, so metrics split per height.
pub fn height_velocity_profile(c: &EvalConfig) -> Result<Profile> {
    Profile::new(
        c.height_profile
            .segments
            .iter()
            .map(|s| ProfileSegment {
                value: c.height_speed,
                duration: s.duration,
                ramp: 0.0,
            })
            .collect(),
    )
}

/// Landing-target statistics of one controller at one speed, indexed by steps after warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSteps {
    pub controller: String,
    pub v_des: f64,
    pub fell: bool,
    /// Mean commanded landing offset over each step (m).
    pub step_means: Vec<f64>,
}

/// Rows after warm-up with `(step index, phase fraction, landing offset)`; phase 0 is the
/// support switch that starts each step.
pub fn aligned_actions(trace: &Trace, warmup: f64, step_duration: f64) -> Vec<(usize, f64, f64)> {
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.t > warmup + 1e-9).collect();
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let base = first.touchdowns;
    rows.iter()
        .filter(|r| r.touchdowns > base)
        .map(|r| (r.touchdowns - base - 1, r.phase / step_duration, r.action[0]))
        .collect()
}

fn step_means(aligned: &[(usize, f64, f64)]) -> Vec<f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &(k, _, a) in aligned {
        let e = acc.entry(k).or_default();
        e.0 += a;
        e.1 += 1;
    }
    // The last step is usually cut off by the end of the run.
    let n = acc.len().saturating_sub(1);
    acc.into_values().take(n).map(|(s, c)| s / c as f64).collect()
}

/// Mean per-step difference of landing offsets (first minus second), over common steps.
pub fn landing_difference(a: &ActionSteps, b: &ActionSteps) -> f64 {
    let n = a.step_means.len().min(b.step_means.len());
    if n == 0 {
        return f64::NAN;
    }
    a.step_means[..n].iter().zip(&b.step_means[..n]).map(|(x, y)| x - y).sum::<f64>() / n as f64
}

pub fn action_comparison(
    ctx: &EvalContext,
    controllers: &[(&str, &Controller)],
) -> Result<Vec<(ActionSteps, Trace)>> {
    let c = &ctx.config;
    let jobs: Vec<(usize, f64)> = (0..controllers.len())
        .flat_map(|i| c.comparison_speeds.iter().map(move |&v| (i, v)))
        .collect();
    jobs.par_iter()
        .map(|&(i, v)| {
            let (name, ctrl) = controllers[i];
            let profile = Profile::constant(v, c.comparison_warmup + c.comparison_duration)?;
            let mut setup = c.setup(profile, ctx.seed);
            setup.joint_noise = 0.0;
            setup.rate_noise = 0.0;
            let trace = ctx.run(ctrl, &setup)?;
            let aligned = aligned_actions(&trace, c.comparison_warmup, ctx.walker.step_duration);
            Ok((
                ActionSteps {
                    controller: name.to_string(),
                    v_des: v,
                    fell: trace.fell,
                    step_means: step_means(&aligned),
                },
                trace,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub scenario: String,
    pub controller: String,
    pub params: Value,
    /// Relative to the report directory.
    pub trace: String,
    pub metrics: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ScenarioEntry>,
    /// Scenario-level summaries (pass rates, R², differences).
    pub summary: BTreeMap<String, Value>,
}

/// Report plus the files it references, keyed by relative path.
#[derive(Debug, Clone, Default)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub files: BTreeMap<String, String>,
}

impl EvalOutput {
    fn add(&mut self, scenario: Scenario, controller: &str, params: Value, csv: String, metrics: Value) {
        let hash = &sha256_hex(params.to_string().as_bytes())[..16];
        let path = format!("{}/{hash}.csv", scenario.name());
        self.files.insert(path.clone(), csv);
        self.report.entries.push(ScenarioEntry {
            scenario: scenario.name().into(),
            controller: controller.into(),
            params,
            trace: path,
            metrics,
        });
    }

    pub fn report_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.report).map_err(|e| Error::Format(e.to_string()))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn clouds_csv(z: &Array2<f64>, raw: &Array2<f64>) -> String {
    let mut out: Vec<String> = (0..z.ncols()).map(|i| format!("z_{i}")).collect();
    out.extend(crate::control::FEATURE_NAMES.iter().map(|s| s.to_string()));
    let mut s = out.join(",");
    s.push('\n');
    for (a, b) in z.rows().into_iter().zip(raw.rows()) {
        s.push_str(&crate::io::csv_row(a.iter().chain(b.iter()).copied()));
        s.push('\n');
    }
    s
}

/// Runs the selected scenarios for `policy` (and the baseline where a scenario compares).
pub fn run_eval(
    ctx: &EvalContext,
    policy: &Controller,
    baseline: &Controller,
    encoder: Option<Arc<AutoencoderModel>>,
    scenarios: &[Scenario],
) -> Result<EvalOutput> {
    ctx.config.validate()?;
    let c = &ctx.config;
    let mut out = EvalOutput::default();
    let who = policy.name();
    for &s in scenarios {
        match s {
            Scenario::Velocity => {
                let (trace, m) = velocity_tracking_eval(ctx, policy, &c.velocity_profile, ctx.seed)?;
                out.report.summary.insert(
                    "velocity".into(),
                    json!({"max_steady_state_error": m.max_steady_state_error(), "rmse": m.rmse, "fell": m.fell}),
                );
                let params = json!({"profile": c.velocity_profile, "seed": ctx.seed, "controller": who});
                out.add(s, who, params, trace.to_csv(), to_value(&m));
            }
            Scenario::Survival => {
                let rows = survival_eval(ctx, policy)?;
                let mut per_speed: BTreeMap<String, (usize, usize)> = BTreeMap::new();
                for (row, trace) in rows {
                    let e = per_speed.entry(format!("{}", row.v_des)).or_default();
                    e.0 += usize::from(!row.fell);
                    e.1 += 1;
                    let params = json!({"v_des": row.v_des, "seed": row.seed, "steps": c.survival_steps, "controller": who});
                    out.add(s, who, params, trace.to_csv(), to_value(&row));
                }
                out.report.summary.insert("survival".into(), to_value(&per_speed));
            }
            Scenario::Latent => {
                let enc = encoder
                    .as_ref()
                    .ok_or_else(|| Error::Argument("latent scenario needs an encoder".into()))?;
                let ls = latent_structure_report(ctx, policy, enc)?;
                for (v, z, raw) in &ls.clouds {
                    let params = json!({"v_des": v, "seed": ctx.seed, "controller": who});
                    out.add(s, who, params, clouds_csv(z, raw), json!({"rows": z.nrows()}));
                }
                out.report.summary.insert(
                    "latent".into(),
                    json!({"latent_r2": ls.latent_r2, "raw_r2": ls.raw_r2, "flagged": ls.flagged,
                           "explained_variance": ls.latent_pca.map(|p| p.explained_variance)}),
                );
            }
            Scenario::Disturbance => {
                let rows = disturbance_eval(ctx, policy)?;
                let mut table: BTreeMap<String, (usize, usize)> = BTreeMap::new();
                for (row, trace) in rows {
                    let e = table.entry(format!("{}N/{}s", row.nominal_force, row.duration)).or_default();
                    e.0 += usize::from(row.survived);
                    e.1 += 1;
                    let params = json!({"force": row.force, "duration": row.duration, "seed": row.seed,
                                        "v_des": c.push_speed, "controller": who});
                    out.add(s, who, params, trace.to_csv(), to_value(&row));
                }
                out.report.summary.insert("disturbance".into(), to_value(&table));
            }
            Scenario::Height => {
                let (trace, m) = ood_height_eval(ctx, policy, ctx.seed)?;
                out.report.summary.insert(
                    "height".into(),
                    json!({"max_steady_state_error": m.max_steady_state_error(), "fell": m.fell}),
                );
                let params = json!({"heights": c.height_profile, "v_des": c.height_speed, "seed": ctx.seed, "controller": who});
                out.add(s, who, params, trace.to_csv(), to_value(&m));
            }
            Scenario::Comparison => {
                let runs = action_comparison(ctx, &[(who, policy), ("baseline", baseline)])?;
                let mut diffs = BTreeMap::new();
                for &v in &c.comparison_speeds {
                    let find = |n: &str| runs.iter().find(|(a, _)| a.controller == n && a.v_des == v).map(|r| &r.0);
                    if let (Some(a), Some(b)) = (find(who), find("baseline")) {
                        diffs.insert(format!("{v}"), landing_difference(a, b));
                    }
                }
                for (steps, trace) in runs {
                    let params = json!({"v_des": steps.v_des, "seed": ctx.seed, "controller": steps.controller});
                    let name = steps.controller.clone();
                    out.add(s, &name, params, trace.to_csv(), to_value(&steps));
                }
                out.report.summary.insert("comparison".into(), to_value(&diffs));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Standardizer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> EvalContext {
        EvalContext {
            model: RobotModel::default(),
            walker: WalkerConfig::default(),
            config: EvalConfig {
                seeds: 2,
                ..EvalConfig::default()
            },
            seed: 7,
        }
    }

    fn baseline(c: &EvalContext) -> Controller {
        Controller::baseline(&c.model, &c.walker, None).unwrap()
    }

    #[test]
    fn standing_profile_and_trace_plumbing() {
        let c = ctx();
        let b = baseline(&c);
        let profile = Profile::steps(&[0.0, 0.0], 3.0, 0.0).unwrap();
        let (t1, m) = velocity_tracking_eval(&c, &b, &profile, 1).unwrap();
        assert_eq!(t1.rows.len(), 300);
        assert!(!m.fell && m.max_steady_state_error() < 0.05, "{m:?}");
        let (t2, _) = velocity_tracking_eval(&c, &b, &profile, 1).unwrap();
        assert_eq!(t1.to_csv(), t2.to_csv());
        let back = Trace::from_csv(&t1.to_csv()).unwrap();
        assert_eq!(tracking_metrics(&back, &profile), m);
    }

    #[test]
    fn null_push_matches_nominal_and_grid_size() {
        let c = ctx();
        let b = baseline(&c);
        let pushed = push_trial(&c, &b, 0.5, 0.0, 0.5, 3).unwrap();
        let profile = Profile::constant(0.5, c.config.push_after + c.config.push_observe).unwrap();
        let (nominal, _) = velocity_tracking_eval(&c, &b, &profile, 3).unwrap();
        assert!(pushed.push_start.is_some());
        assert_eq!(pushed.to_csv(), nominal.to_csv());

        let mut small = c.clone();
        small.config.seeds = 1;
        small.config.push_forces = vec![-30.0, 30.0];
        small.config.push_durations = vec![0.1];
        small.config.push_after = 1.0;
        small.config.push_observe = 1.0;
        let rows = disturbance_eval(&small, &b).unwrap();
        assert_eq!(rows.len(), 2);
        for (r, t) in &rows {
            assert_eq!(r.max_speed_deviation, max_speed_deviation(&Trace::from_csv(&t.to_csv()).unwrap()));
            let s = r.push_start.unwrap();
            let phase = t.rows.iter().find(|row| row.t > s - 1e-9).map(|row| row.phase).unwrap();
            assert!(phase >= 0.2 - 1e-9);
        }
    }

    #[test]
    fn nominal_height_profile_is_identity() {
        let mut c = ctx();
        c.config.height_profile = Profile::constant(1.0, 3.0).unwrap();
        let b = baseline(&c);
        let (t, _) = ood_height_eval(&c, &b, 2).unwrap();
        let (n, _) = velocity_tracking_eval(&c, &b, &Profile::constant(c.config.height_speed, 3.0).unwrap(), 2).unwrap();
        for (a, b) in t.rows.iter().zip(&n.rows) {
            assert!((a.v_bar - b.v_bar).abs() < 1e-12 && (a.base_height - b.base_height).abs() < 1e-12);
        }

        c.config.height_profile = Profile::steps(&[1.0, 0.95], 3.0, 0.5).unwrap();
        let (t, m) = ood_height_eval(&c, &b, 2).unwrap();
        assert_eq!(m.segments.len(), 2);
        assert!((m.segments[0].mean_base_height - 1.0).abs() < 0.01);
        assert!((m.segments[1].mean_base_height - 0.95).abs() < 0.01);
        assert!(t.rows.iter().any(|r| r.height_ref == 0.95));
    }

    #[test]
    fn baseline_against_itself() {
        let mut c = ctx();
        c.config.comparison_duration = 3.0;
        let b = baseline(&c);
        let runs = action_comparison(&c, &[("a", &b), ("b", &b)]).unwrap();
        assert_eq!(runs.len(), 4);
        for v in &c.config.comparison_speeds {
            let a = runs.iter().find(|r| r.0.controller == "a" && r.0.v_des == *v).unwrap();
            let bb = runs.iter().find(|r| r.0.controller == "b" && r.0.v_des == *v).unwrap();
            assert!(!a.0.step_means.is_empty());
            assert_eq!(landing_difference(&a.0, &bb.0), 0.0);
            let aligned = aligned_actions(&a.1, c.config.comparison_warmup, c.walker.step_duration);
            assert!(aligned.windows(2).all(|w| w[1].0 > w[0].0 || w[1].1 > w[0].1));
        }
    }

    #[test]
    fn latent_clouds_and_degenerate_regression() {
        let mut c = ctx();
        c.config.latent_speeds = vec![0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Arc::new(AutoencoderModel::init(Standardizer::identity(NFEATURES), 2, &mut rng).unwrap());
        let b = Controller::baseline(&c.model, &c.walker, Some(enc.clone())).unwrap();
        let ls = latent_structure_report(&c, &b, &enc).unwrap();
        assert_eq!(ls.clouds.len(), 1);
        assert_eq!(ls.clouds[0].1.nrows(), 500);
        assert_eq!(ls.clouds[0].2.ncols(), NFEATURES);
        assert_eq!(ls.latent_r2, None);
    }

    #[test]
    fn synthetic_linear_latent_is_decodable() {
        let clouds: Vec<(f64, Array2<f64>)> = (0..6)
            .map(|k| {
                let v = 0.1 * k as f64;
                (v, Array2::from_shape_fn((20, 2), |(i, j)| if j == 0 { v } else { 0.0 } + 1e-6 * ((i * 7 + j * 3) % 5) as f64))
            })
            .collect();
        let (r2, _) = decodability_r2(&clouds, false).unwrap();
        assert!(r2.unwrap() > 0.999);
    }

    #[test]
    fn report_files_are_referenced() {
        let mut c = ctx();
        c.config.velocity_profile = Profile::steps(&[0.0, 0.3], 2.0, 0.0).unwrap();
        let b = baseline(&c);
        let out = run_eval(&c, &b, &b, None, &[Scenario::Velocity]).unwrap();
        assert_eq!(out.report.entries.len(), 1);
        for e in &out.report.entries {
            assert!(e.trace.starts_with("velocity/") && out.files.contains_key(&e.trace));
            let t = Trace::from_csv(&out.files[&e.trace]).unwrap();
            assert_eq!(to_value(&tracking_metrics(&t, &c.config.velocity_profile)), e.metrics);
        }
        assert!(Scenario::parse("nope").is_err());
    }
}
