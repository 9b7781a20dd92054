use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::trajectory::GaitSchedule;
use super::tsc::{assemble_task_refs, task_space_controller, PolicyAction, TscGains};
use crate::error::{Error, Result};
use crate::sim::{
    com_state, detect_touchdown, forward_kinematics, impact_map, step_integrate, switch_support, Disturbance,
    RobotModel, RobotState,
};

/// Trailing window for the average velocity before two support switches exist (s).
pub const VELOCITY_WINDOW: f64 = 0.4;

/// Largest swing-foot height accepted as contact when locating a touchdown (m).
const CONTACT_HEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    /// s
    pub step_duration: f64,
    /// m
    pub apex_height: f64,
    /// Forced support switch after this multiple of the step duration.
    pub timeout_factor: f64,
    /// Touchdowns are ignored before this fraction of the step duration.
    pub min_swing_fraction: f64,
    /// Rate limit on the commanded base velocity (m/s^2).
    pub command_slew: f64,
    /// Hz
    pub control_rate: u32,
    /// Hz
    pub policy_rate: u32,
    /// rad
    pub pitch_limit: f64,
    /// m
    pub min_base_height: f64,
    pub gains: TscGains,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            step_duration: 0.4,
            apex_height: 0.08,
            timeout_factor: 1.25,
            min_swing_fraction: 0.5,
            command_slew: 1.0,
            control_rate: 1000,
            policy_rate: 50,
            pitch_limit: 1.0,
            min_base_height: 0.8,
            gains: TscGains::default(),
        }
    }
}

impl WalkerConfig {
    pub fn validate(&self) -> Result<()> {
        GaitSchedule::new(self.step_duration, self.apex_height).map_err(|e| Error::Config(e.to_string()))?;
        self.gains.validate()?;
        if self.policy_rate == 0 || self.control_rate == 0 || self.control_rate % self.policy_rate != 0 {
            return Err(Error::Config(format!(
                "control rate {} must be a positive multiple of policy rate {}",
                self.control_rate, self.policy_rate
            )));
        }
        if 1.0 / self.control_rate as f64 > crate::sim::MAX_DT {
            return Err(Error::Config("control rate too low for the integrator".into()));
        }
        if !(self.timeout_factor >= 1.0) || !(0.0..=1.0).contains(&self.min_swing_fraction) {
            return Err(Error::Config("timeout factor must be >= 1 and min swing fraction in [0, 1]".into()));
        }
        if !(self.command_slew > 0.0) || !(self.pitch_limit > 0.0) || !self.min_base_height.is_finite() {
            return Err(Error::Config("command slew and pitch limit must be positive".into()));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.control_rate / self.policy_rate) as usize
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate as f64
    }

    pub fn policy_dt(&self) -> f64 {
        1.0 / self.policy_rate as f64
    }
}

/// CoM x displacement over the last completed switch-to-switch interval divided by its
/// duration; with fewer than two switches, the same over the trailing samples.
/// Both slices hold `(time, com_x)` in time order.
pub fn average_velocity(switches: &[(f64, f64)], trailing: &[(f64, f64)]) -> f64 {
    let span = |a: &(f64, f64), b: &(f64, f64)| {
        let dt = b.0 - a.0;
        if dt > 0.0 {
            (b.1 - a.1) / dt
        } else {
            0.0
        }
    };
    if switches.len() >= 2 {
        span(&switches[switches.len() - 2], &switches[switches.len() - 1])
    } else if trailing.len() >= 2 {
        span(&trailing[0], &trailing[trailing.len() - 1])
    } else {
        0.0
    }
}

/// Summary of one policy interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TickInfo {
    pub touchdowns: usize,
    pub timeouts: usize,
    pub fell: bool,
    pub average_velocity: f64,
    pub angular_momentum: f64,
    pub torques: [f64; 6],
}

/// Closed loop of controller and simulator advanced one policy interval at a time.
#[derive(Debug, Clone)]
pub struct Walker {
    model: RobotModel,
    config: WalkerConfig,
    state: RobotState,
    schedule: GaitSchedule,
    v_cmd: f64,
    height_ref: Option<f64>,
    disturbance: Option<Disturbance>,
    switches: VecDeque<(f64, f64)>,
    trailing: VecDeque<(f64, f64)>,
    torques: [f64; 6],
    touchdowns: usize,
    timeouts: usize,
}

impl Walker {
    pub fn new(model: RobotModel, config: WalkerConfig, state: RobotState) -> Result<Self> {
        config.validate()?;
        let mut schedule = GaitSchedule::new(config.step_duration, config.apex_height)?;
        let swing = forward_kinematics(&model, &state).foot(state.stance.other()).pose;
        schedule.start = Some([swing[0], swing[1]]);
        let mut w = Self {
            model,
            config,
            state,
            schedule,
            v_cmd: 0.0,
            height_ref: None,
            disturbance: None,
            switches: VecDeque::new(),
            trailing: VecDeque::new(),
            torques: [0.0; 6],
            touchdowns: 0,
            timeouts: 0,
        };
        w.push_sample();
        Ok(w)
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &WalkerConfig {
        &self.config
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn schedule(&self) -> &GaitSchedule {
        &self.schedule
    }

    /// Rate-limited base velocity command currently applied.
    pub fn command_velocity(&self) -> f64 {
        self.v_cmd
    }

    pub fn set_command_velocity(&mut self, v: f64) {
        self.v_cmd = v;
    }

    /// Overrides the base-height reference; `None` restores the model's nominal height.
    pub fn set_height_reference(&mut self, height: Option<f64>) {
        self.height_ref = height;
    }

    pub fn set_disturbance(&mut self, disturbance: Option<Disturbance>) {
        self.disturbance = disturbance;
    }

    pub fn touchdowns(&self) -> usize {
        self.touchdowns
    }

    pub fn timeouts(&self) -> usize {
        self.timeouts
    }

    pub fn average_velocity(&self) -> f64 {
        let s: Vec<_> = self.switches.iter().copied().collect();
        let t: Vec<_> = self.trailing.iter().copied().collect();
        average_velocity(&s, &t)
    }

    pub fn has_fallen(&self) -> bool {
        self.state.q[2].abs() > self.config.pitch_limit || self.state.q[1] < self.config.min_base_height
    }

    fn push_sample(&mut self) {
        let t = self.state.time;
        let x = com_state(&self.model, &self.state).position[0];
        self.trailing.push_back((t, x));
        while let Some(&(t0, _)) = self.trailing.front() {
            if t0 < t - VELOCITY_WINDOW - 1e-9 {
                self.trailing.pop_front();
            } else {
                break;
            }
        }
    }

    fn record_switch(&mut self) {
        let x = com_state(&self.model, &self.state).position[0];
        self.switches.push_back((self.state.time, x));
        if self.switches.len() > 2 {
            self.switches.pop_front();
        }
        let swing = forward_kinematics(&self.model, &self.state).foot(self.state.stance.other()).pose;
        self.schedule.start = Some([swing[0], swing[1]]);
    }

    fn torques_for(&self, state: &RobotState, action: &PolicyAction) -> Result<[f64; 6]> {
        let mut refs = assemble_task_refs(&self.model, action, self.v_cmd, &self.schedule, state)?;
        if let Some(h) = self.height_ref {
            refs.base_height = h;
        }
        task_space_controller(&self.model, state, &refs, &self.config.gains)
    }

    /// Integrates from `state` to the first instant the swing foot is within contact
    /// height, starting from the interpolated estimate `alpha` of the step `dt`.
    fn integrate_to_contact(&self, state: &RobotState, tau: &[f64; 6], dt: f64, alpha: f64) -> Result<RobotState> {
        let swing = state.stance.other();
        let dist = self.disturbance.as_ref();
        let height = |s: &RobotState| forward_kinematics(&self.model, s).foot(swing).lowest_height;
        let mut lo = 0.0;
        let mut hi = dt;
        let mut guess = (alpha * dt).max(1e-9);
        for _ in 0..60 {
            let s = step_integrate(&self.model, state, tau, guess, dist)?;
            if height(&s) <= CONTACT_HEIGHT {
                if guess - lo < 1e-12 || height(&s) > -CONTACT_HEIGHT {
                    return Ok(s);
                }
                hi = guess;
            } else {
                lo = guess;
            }
            guess = 0.5 * (lo + hi);
        }
        let s = step_integrate(&self.model, state, tau, hi, dist)?;
        Ok(s)
    }

    fn substep(&mut self, action: &PolicyAction) -> Result<()> {
        let dt = self.config.control_dt();
        let tau = self.torques_for(&self.state, action)?;
        self.torques = tau;
        let dist = self.disturbance;
        let next = step_integrate(&self.model, &self.state, &tau, dt, dist.as_ref())?;
        let armed = self.state.phase >= self.config.min_swing_fraction * self.schedule.step_duration;
        let touchdown = if armed {
            detect_touchdown(&self.state, &next, &self.model)
        } else {
            None
        };
        if let Some(alpha) = touchdown {
            let pre = self.integrate_to_contact(&self.state, &tau, dt, alpha)?;
            let elapsed = pre.time - self.state.time;
            self.state = impact_map(&self.model, &pre)?;
            self.touchdowns += 1;
            self.record_switch();
            let rest = dt - elapsed;
            if rest > 1e-9 {
                let tau = self.torques_for(&self.state, action)?;
                self.state = step_integrate(&self.model, &self.state, &tau, rest, dist.as_ref())?;
            }
        } else if next.phase >= self.config.timeout_factor * self.schedule.step_duration {
            self.state = switch_support(&self.model, &next)?;
            self.timeouts += 1;
            self.record_switch();
        } else {
            self.state = next;
        }
        Ok(())
    }

    /// Advances one policy interval under `action`, slewing the base-velocity command
    /// toward `v_target`. Stops early once the termination rule fires.
    pub fn tick(&mut self, action: &PolicyAction, v_target: f64) -> Result<TickInfo> {
        let dt = self.config.control_dt();
        let before = (self.touchdowns, self.timeouts);
        let max_dv = self.config.command_slew * dt;
        let mut fell = false;
        for _ in 0..self.config.substeps() {
            self.v_cmd += (v_target - self.v_cmd).clamp(-max_dv, max_dv);
            self.substep(action)?;
            if self.has_fallen() {
                fell = true;
                break;
            }
        }
        self.push_sample();
        Ok(TickInfo {
            touchdowns: self.touchdowns - before.0,
            timeouts: self.timeouts - before.1,
            fell,
            average_velocity: self.average_velocity(),
            angular_momentum: com_state(&self.model, &self.state).angular_momentum,
            torques: self.torques,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_velocity_cases() {
        let trail: Vec<_> = (0..=20).map(|k| (k as f64 * 0.02, 0.7 * k as f64 * 0.02)).collect();
        assert!((average_velocity(&[], &trail) - 0.7).abs() < 1e-12);
        assert!((average_velocity(&[(1.0, 2.0), (1.4, 2.5)], &trail) - 1.25).abs() < 1e-12);
        let osc: Vec<_> = (0..=20)
            .map(|k| {
                let t = k as f64 * 0.02;
                (t, 0.05 * (std::f64::consts::TAU * t / 0.4).sin())
            })
            .collect();
        assert!(average_velocity(&[], &osc).abs() < 1e-12);
        assert_eq!(average_velocity(&[], &[(0.0, 1.0)]), 0.0);
    }

    #[test]
    fn rejects_incompatible_rates() {
        let cfg = WalkerConfig {
            policy_rate: 30,
            ..WalkerConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
