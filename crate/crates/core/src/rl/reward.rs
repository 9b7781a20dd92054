pub const REWARD_WEIGHTS: [f64; 3] = [0.6, 0.3, 0.1];

/// `w·[exp(−(v̄ − v_des)²), exp(−(c_L L)²), exp(−|a − a_prev|²)]`; `momentum_scale` is `c_L`.
pub fn compute_reward(
    v_bar: f64,
    v_des: f64,
    angular_momentum: f64,
    action: &[f64; 2],
    prev_action: &[f64; 2],
    weights: &[f64; 3],
    momentum_scale: f64,
) -> f64 {
    let r_v = (-(v_bar - v_des).powi(2)).exp();
    let r_l = (-(momentum_scale * angular_momentum).powi(2)).exp();
    let da = (action[0] - prev_action[0]).powi(2) + (action[1] - prev_action[1]).powi(2);
    let r_a = (-da).exp();
    weights[0] * r_v + weights[1] * r_l + weights[2] * r_a
}
