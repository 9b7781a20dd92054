use crate::error::{Error, Result};

/// One environment step as seen by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Normalized observation the policy acted on.
    pub obs: Vec<f64>,
    /// Observation before normalization.
    pub raw_obs: Vec<f64>,
    pub pre_squash: [f64; 2],
    pub action: [f64; 2],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Value of the final observation of a truncated episode; 0 otherwise.
    pub truncation_value: f64,
    pub episode: u64,
}

/// Consecutive steps of one worker, plus the value of the state after the last step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    pub steps: Vec<Transition>,
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    /// Per-worker segments in worker order.
    pub segments: Vec<Segment>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.segments.iter().flat_map(|s| s.steps.iter())
    }
}

/// Generalized advantage estimation over one segment. Terminal steps bootstrap from
/// zero, truncated steps from their stored final value, and the last step from the
/// segment's bootstrap value. Advantages are returned unnormalized.
pub fn gae_advantages(segment: &Segment, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = segment.steps.len();
    if n == 0 {
        return Err(Error::Argument("advantage estimation on an empty segment".into()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let s = &segment.steps[t];
        let (next_value, carry) = if s.terminated {
            (0.0, 0.0)
        } else if s.truncated {
            (s.truncation_value, 0.0)
        } else if t + 1 == n {
            (segment.bootstrap_value, 0.0)
        } else {
            (segment.steps[t + 1].value, running)
        };
        let delta = s.reward + gamma * next_value - s.value;
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(&segment.steps).map(|(a, s)| a + s.value).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(reward: f64, value: f64, terminated: bool) -> Transition {
        Transition {
            obs: vec![],
            raw_obs: vec![],
            pre_squash: [0.0; 2],
            action: [0.0; 2],
            log_prob: 0.0,
            reward,
            value,
            terminated,
            truncated: false,
            truncation_value: 0.0,
            episode: 0,
        }
    }

    #[test]
    fn zero_and_single_step_cases() {
        let seg = Segment {
            steps: (0..5).map(|_| step(0.0, 0.0, false)).collect(),
            bootstrap_value: 0.0,
        };
        let (a, _) = gae_advantages(&seg, 0.99, 0.95).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
        let seg = Segment {
            steps: vec![step(0.7, 0.2, true)],
            bootstrap_value: 5.0,
        };
        let (a, r) = gae_advantages(&seg, 0.99, 0.95).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15 && (r[0] - 0.7).abs() < 1e-15);
        assert!(gae_advantages(&Segment::default(), 0.99, 0.95).is_err());
    }

    #[test]
    fn truncation_bootstraps_from_final_value() {
        let mut s = step(1.0, 0.5, false);
        s.truncated = true;
        s.truncation_value = 2.0;
        let seg = Segment {
            steps: vec![step(1.0, 0.0, false), s],
            bootstrap_value: 100.0,
        };
        let (a, _) = gae_advantages(&seg, 0.5, 1.0).unwrap();
        assert!((a[1] - (1.0 + 0.5 * 2.0 - 0.5)).abs() < 1e-15);
    }

    proptest! {
        // With gamma = lambda = 1 and zero values the advantage is the reward-to-go.
        #[test]
        fn undiscounted_reward_to_go(rewards in proptest::collection::vec(-1.0f64..1.0, 1..30)) {
            let n = rewards.len();
            let seg = Segment {
                steps: rewards.iter().enumerate().map(|(i, r)| step(*r, 0.0, i + 1 == n)).collect(),
                bootstrap_value: 0.0,
            };
            let (a, _) = gae_advantages(&seg, 1.0, 1.0).unwrap();
            for t in 0..n {
                let oracle: f64 = rewards[t..].iter().sum();
                prop_assert!((a[t] - oracle).abs() < 1e-12);
            }
        }
    }
}
