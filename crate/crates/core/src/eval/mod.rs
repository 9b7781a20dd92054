//! Closed-loop evaluation scenarios. Every metric is computed from the emitted traces.

mod pca;
mod profile;
mod rollout;
mod scenarios;

pub use pca::{pca_fit, pca_project, r_squared, LinearFit, Pca};
pub use profile::{Profile, ProfileSegment, VelocityProfile};
pub use rollout::{
    run_closed_loop, tracking_metrics, Controller, PushSpec, RolloutSetup, SegmentMetrics, Trace, TraceRow,
    TrackingMetrics,
};
pub use scenarios::{
    action_comparison, aligned_actions, decodability_r2, disturbance_eval, height_velocity_profile, landing_difference,
    latent_structure_report, max_speed_deviation, ood_height_eval, push_trial, run_eval, survival_eval,
    velocity_tracking_eval, ActionSteps, EvalConfig, EvalContext, EvalOutput, EvalReport, LatentStructure, PushRow,
    Scenario, ScenarioEntry, SurvivalRow, REFERENCE_PUSH_MASS,
};
