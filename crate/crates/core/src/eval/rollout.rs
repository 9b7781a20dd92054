use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::Profile;
use crate::ae::AutoencoderModel;
use crate::control::{stance_frame_transform, PolicyAction, Walker, WalkerConfig};
use crate::dataset::noisy_standing;
use crate::error::{Error, Result};
use crate::planner::{baseline_action, LipParams};
use crate::rl::LearnedPolicy;
use crate::sim::{com_state, Disturbance, Leg, RobotModel};

/// Either the analytic planner or a trained policy.
#[derive(Debug, Clone)]
pub enum Controller {
    Baseline {
        lip: LipParams,
        /// Only used to log latent states alongside the baseline.
        encoder: Option<Arc<AutoencoderModel>>,
    },
    Learned(LearnedPolicy),
}

impl Controller {
    pub fn baseline(model: &RobotModel, walker: &WalkerConfig, encoder: Option<Arc<AutoencoderModel>>) -> Result<Self> {
        Ok(Self::Baseline {
            lip: LipParams::for_model(model, walker.step_duration)?,
            encoder,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline { .. } => "baseline",
            Self::Learned(_) => "policy",
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Baseline { encoder, .. } => encoder.as_ref().map_or(0, |e| e.latent_dim()),
            Self::Learned(p) => p.encoder.latent_dim(),
        }
    }

    /// Action for the current walker state and the latent state it was computed from.
    pub fn act(&self, walker: &Walker, v_des: f64, prev_action: [f64; 2]) -> Result<(PolicyAction, Vec<f64>)> {
        match self {
            Self::Baseline { lip, encoder } => {
                let a = baseline_action(walker.model(), walker.state(), walker.command_velocity(), lip);
                let z = match encoder {
                    Some(e) => e.encode(&stance_frame_transform(walker.model(), walker.state()))?,
                    None => Vec::new(),
                };
                Ok((a, z))
            }
            Self::Learned(p) => {
                let (a, obs) = p.act(walker, v_des, prev_action)?;
                Ok((a, obs.latent))
            }
        }
    }
}

/// Horizontal base push applied at the first mid-stance instant after `after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushSpec {
    /// N
    pub force: f64,
    /// s
    pub duration: f64,
    /// s
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSetup {
    pub velocity: Profile,
    /// Base-height reference; `None` keeps the nominal height.
    pub height: Option<Profile>,
    pub push: Option<PushSpec>,
    pub seed: u64,
    /// rad, added to every joint and the torso pitch of the initial stand
    pub joint_noise: f64,
    /// rad/s
    pub rate_noise: f64,
    /// Keep the stance-frame state of every row (not written to CSV).
    pub record_features: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub segment: usize,
    pub v_des: f64,
    pub v_bar: f64,
    pub v_inst: f64,
    pub base_height: f64,
    pub height_ref: f64,
    /// 0 left, 1 right
    pub stance: f64,
    /// Time since the last support switch (s).
    pub phase: f64,
    pub touchdowns: usize,
    pub action: [f64; 2],
    /// Push force acting at the end of the tick (N).
    pub push: f64,
    pub z: Vec<f64>,
    /// Stance-frame state; empty unless requested.
    pub features: Vec<f64>,
}

/// Closed-loop record at the policy rate. Stops at the first fall.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub latent_dim: usize,
    pub rows: Vec<TraceRow>,
    pub fell: bool,
    pub survival_time: f64,
    /// Absolute start time of the applied push, if any.
    pub push_start: Option<f64>,
}

const FIXED_COLUMNS: [&str; 14] = [
    "t",
    "segment",
    "v_des",
    "v_bar",
    "v_inst",
    "base_height",
    "height_ref",
    "stance",
    "phase",
    "touchdowns",
    "action_0",
    "action_1",
    "push",
    "fell",
];

impl Trace {
    pub fn header(latent_dim: usize) -> String {
        let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend((0..latent_dim).map(|i| format!("z_{i}")));
        cols.join(",")
    }

    /// The last row carries `fell = 1` when the run ended in a fall.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.latent_dim);
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let fell = self.fell && i + 1 == self.rows.len();
            let mut v = vec![
                r.t,
                r.segment as f64,
                r.v_des,
                r.v_bar,
                r.v_inst,
                r.base_height,
                r.height_ref,
                r.stance,
                r.phase,
                r.touchdowns as f64,
                r.action[0],
                r.action[1],
                r.push,
                f64::from(u8::from(fell)),
            ];
            v.extend(&r.z);
            out.push_str(&crate::io::csv_row(v));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty trace".into()))?;
        let ncols = header.split(',').count();
        if ncols < FIXED_COLUMNS.len() {
            return Err(Error::Format("trace header too short".into()));
        }
        let latent_dim = ncols - FIXED_COLUMNS.len();
        if header != Self::header(latent_dim) {
            return Err(Error::Format(format!("unexpected trace header {header}")));
        }
        let mut rows = Vec::new();
        let mut fell = false;
        for (i, line) in lines.enumerate() {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("trace line {}: {e}", i + 2)))?;
            if v.len() != ncols {
                return Err(Error::shape(format!("trace line {}", i + 2), ncols, v.len()));
            }
            fell |= v[13] != 0.0;
            rows.push(TraceRow {
                t: v[0],
                segment: v[1] as usize,
                v_des: v[2],
                v_bar: v[3],
                v_inst: v[4],
                base_height: v[5],
                height_ref: v[6],
                stance: v[7],
                phase: v[8],
                touchdowns: v[9] as usize,
                action: [v[10], v[11]],
                push: v[12],
                z: v[14..].to_vec(),
                features: Vec::new(),
            });
        }
        let survival_time = rows.last().map_or(0.0, |r| r.t);
        Ok(Self {
            latent_dim,
            rows,
            fell,
            survival_time,
            push_start: None,
        })
    }
}

/// Runs `controller` through the setup's profiles at the policy rate, one row per tick.
pub fn run_closed_loop(
    model: &RobotModel,
    walker_cfg: &WalkerConfig,
    controller: &Controller,
    setup: &RolloutSetup,
) -> Result<Trace> {
    setup.velocity.validate()?;
    if let Some(h) = &setup.height {
        h.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let start = noisy_standing(
        model,
        model.nominal_base_height,
        Leg::Left,
        setup.joint_noise,
        setup.rate_noise,
        &mut rng,
    )?;
    let mut walker = Walker::new(model.clone(), walker_cfg.clone(), start)?;
    let dt = walker_cfg.policy_dt();
    let ticks = (setup.velocity.duration() / dt).round() as usize;
    let mut trace = Trace {
        latent_dim: controller.latent_dim(),
        rows: Vec::with_capacity(ticks),
        fell: false,
        survival_time: 0.0,
        push_start: None,
    };
    let mut prev = [0.0; 2];
    for k in 0..ticks {
        let t = k as f64 * dt;
        let v_des = setup.velocity.value_at(t);
        let height_ref = setup.height.as_ref().map(|h| h.value_at(t));
        walker.set_height_reference(height_ref);
        if let (Some(p), None) = (&setup.push, trace.push_start) {
            let (time, phase) = (walker.state().time, walker.state().phase);
            if time >= p.after - 1e-9 && (0.0..dt).contains(&(phase - 0.5 * walker_cfg.step_duration)) {
                walker.set_disturbance(Some(Disturbance::new(p.force, time, p.duration)?));
                trace.push_start = Some(time);
            }
        }
        let (action, z) = match controller.act(&walker, v_des, prev) {
            Ok(x) => x,
            Err(_) => {
                trace.fell = true;
                break;
            }
        };
        let fell = match walker.tick(&action, v_des) {
            Ok(info) => info.fell,
            Err(_) => true,
        };
        prev = action.to_array();
        let st = walker.state();
        trace.rows.push(TraceRow {
            t: st.time,
            segment: setup.velocity.segment_at(t),
            v_des,
            v_bar: walker.average_velocity(),
            v_inst: com_state(model, st).velocity[0],
            base_height: st.q[1],
            height_ref: height_ref.unwrap_or(model.nominal_base_height),
            stance: st.stance.as_f64(),
            phase: st.phase,
            touchdowns: walker.touchdowns() + walker.timeouts(),
            action: prev,
            push: match (&setup.push, trace.push_start) {
                (Some(p), Some(s)) if st.time >= s && st.time < s + p.duration => p.force,
                _ => 0.0,
            },
            z,
            features: if setup.record_features {
                stance_frame_transform(model, st).to_vec()
            } else {
                Vec::new()
            },
        });
        if fell {
            trace.fell = true;
            break;
        }
    }
    trace.survival_time = walker.state().time;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub segment: usize,
    pub v_des: f64,
    /// Mean `|v̄ − v_des|` over the last half of the segment; NaN if not reached.
    pub steady_state_error: f64,
    pub rmse: f64,
    pub mean_base_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub segments: Vec<SegmentMetrics>,
    pub rmse: f64,
    pub fell: bool,
    pub survival_time: f64,
}

impl TrackingMetrics {
    pub fn max_steady_state_error(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| if s.steady_state_error.is_nan() { f64::INFINITY } else { s.steady_state_error })
            .fold(0.0, f64::max)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Metrics derived only from the trace and the profile that produced it.
pub fn tracking_metrics(trace: &Trace, profile: &Profile) -> TrackingMetrics {
    let bounds = profile.bounds();
    let segments = bounds
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let rows: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.segment == k).collect();
            let mid = start + 0.5 * (end - start);
            let complete = rows.last().is_some_and(|r| r.t >= end - 1e-6);
            let steady = if complete {
                mean(rows.iter().filter(|r| r.t > mid + 1e-9).map(|r| (r.v_bar - r.v_des).abs()))
            } else {
                f64::NAN
            };
            SegmentMetrics {
                segment: k,
                v_des: profile.segments[k].value,
                steady_state_error: steady,
                rmse: mean(rows.iter().map(|r| (r.v_bar - r.v_des).powi(2))).sqrt(),
                mean_base_height: mean(rows.iter().filter(|r| r.t > mid + 1e-9).map(|r| r.base_height)),
            }
        })
        .collect();
    TrackingMetrics {
        segments,
        rmse: mean(trace.rows.iter().map(|r| (r.v_bar - r.v_des).powi(2))).sqrt(),
        fell: trace.fell,
        survival_time: trace.rows.last().map_or(0.0, |r| r.t),
    }
}
