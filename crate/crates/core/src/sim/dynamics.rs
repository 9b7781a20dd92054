use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3, U9};

use super::kinematics::{body_set, kinematics_qd, BodySet};
use super::{Jac3, Leg, Mat9, RobotModel, RobotState, Vec9, CONTACT_TOL, NQ};
use crate::error::{Error, Result};

/// Largest tolerated condition-number estimate for the contact solves.
const MAX_CONDITION: f64 = 1e12;

/// Mass matrix, velocity-product plus gravity terms, and the body kinematics used to build them.
pub(crate) fn dynamics_terms(model: &RobotModel, q: &Vec9, dq: &Vec9) -> (Mat9, Vec9, BodySet) {
    let set = body_set(model, q, dq);
    let mut m = Mat9::zeros();
    let mut h = Vec9::zeros();
    let g = Vector2::new(0.0, model.gravity);
    for b in &set.bodies {
        let jt = b.com.jac.transpose();
        m += (jt * b.com.jac) * b.mass;
        let row = b.seg.angle_row();
        m += (row.transpose() * row) * b.inertia;
        h += jt * ((b.com.bias + g) * b.mass);
    }
    (m, h, set)
}

pub fn mass_matrix(model: &RobotModel, state: &RobotState) -> Mat9 {
    dynamics_terms(model, &Vec9::from(state.q), &Vec9::from(state.dq)).0
}

fn generalized_force(torques: &[f64; 6], disturbance_force: f64) -> Vec9 {
    let mut f = Vec9::zeros();
    f[0] = disturbance_force;
    for (i, t) in torques.iter().enumerate() {
        f[3 + i] = *t;
    }
    f
}

fn describe(q: &Vec9) -> String {
    format!(
        "q = [{}]",
        q.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
    )
}

fn factor_mass(m: &Mat9, q: &Vec9) -> Result<Cholesky<f64, U9>> {
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Dynamics(format!("mass matrix not positive definite at {}", describe(q))))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let cond = (hi / lo).powi(2);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Dynamics(format!(
            "ill-conditioned mass matrix ({cond:.3e}) at {}",
            describe(q)
        )));
    }
    Ok(chol)
}

/// Operational-space inverse inertia `J M⁻¹ Jᵀ` of a 3-row contact plus `M⁻¹ Jᵀ`.
struct ContactInertia {
    minv_jt: SMatrix<f64, 9, 3>,
    chol: Cholesky<f64, nalgebra::U3>,
}

impl ContactInertia {
    fn new(mchol: &Cholesky<f64, U9>, jac: &Jac3, q: &Vec9) -> Result<Self> {
        let minv_jt = mchol.solve(&jac.transpose());
        let a: Matrix3<f64> = jac * minv_jt;
        let eig = a.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        if !(lo > 0.0 && hi / lo < MAX_CONDITION) {
            return Err(Error::Dynamics(format!(
                "singular contact system (eigenvalues {:.3e}..{:.3e}) at {}",
                lo,
                hi,
                describe(q)
            )));
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Dynamics(format!("singular contact system at {}", describe(q))))?;
        Ok(Self { minv_jt, chol })
    }

    /// Generalized-coordinate correction `-M⁻¹Jᵀ (J M⁻¹ Jᵀ)⁻¹ r` that cancels the row residual `r`.
    fn correction(&self, residual: &Vector3<f64>) -> Vec9 {
        -(self.minv_jt * self.chol.solve(residual))
    }
}

/// Constrained joint-space acceleration with the stance foot welded.
pub(crate) fn constrained_accel(
    model: &RobotModel,
    q: &Vec9,
    dq: &Vec9,
    stance: Leg,
    torques: &[f64; 6],
    disturbance_force: f64,
) -> Result<Vec9> {
    let (m, h, set) = dynamics_terms(model, q, dq);
    let foot = super::kinematics::foot_kinematics(&set.frames, &set.legs[stance.index()], stance);
    let mchol = factor_mass(&m, q)?;
    let contact = ContactInertia::new(&mchol, &foot.jacobian, q)?;
    let f = generalized_force(torques, disturbance_force) - h;
    let free = mchol.solve(&f);
    // J (free + M⁻¹Jᵀλ) + J̇q̇ = 0
    let residual = foot.jacobian * free + foot.bias;
    let ddq = free + contact.correction(&residual);
    if ddq.iter().all(|v| v.is_finite()) {
        Ok(ddq)
    } else {
        Err(Error::Dynamics(format!("non-finite acceleration at {}", describe(q))))
    }
}

/// `(q̇, q̈)` for the single-support flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dq: [f64; NQ],
    pub ddq: [f64; NQ],
}

fn contact_residual(model: &RobotModel, state: &RobotState) -> f64 {
    let k = kinematics_qd(model, &Vec9::from(state.q), &Vec9::from(state.dq));
    let p = k.foot(state.stance).pose;
    (0..3).map(|i| (p[i] - state.anchor[i]).abs()).fold(0.0, f64::max)
}

/// Solves `M q̈ + h = Bτ + Jᵀλ + f_ext` with `J q̈ + J̇ q̇ = 0` for the welded stance foot.
pub fn continuous_dynamics(
    model: &RobotModel,
    state: &RobotState,
    torques: &[f64; 6],
    disturbance_force: f64,
) -> Result<StateDerivative> {
    let r = contact_residual(model, state);
    if r > CONTACT_TOL {
        return Err(Error::Dynamics(format!(
            "stance foot is {r:.3e} off its weld at t = {}",
            state.time
        )));
    }
    let ddq = constrained_accel(
        model,
        &Vec9::from(state.q),
        &Vec9::from(state.dq),
        state.stance,
        torques,
        disturbance_force,
    )?;
    Ok(StateDerivative {
        dq: state.dq,
        ddq: ddq.into(),
    })
}

/// Same flow with additional joints held rigid by acceleration constraints. Dense KKT
/// solve; meant for reductions such as the compound pendulum, not for the hot loop.
pub fn continuous_dynamics_with_locks(
    model: &RobotModel,
    state: &RobotState,
    torques: &[f64; 6],
    disturbance_force: f64,
    locked: &[usize],
) -> Result<[f64; NQ]> {
    let q = Vec9::from(state.q);
    let dq = Vec9::from(state.dq);
    let (m, h, set) = dynamics_terms(model, &q, &dq);
    let foot = super::kinematics::foot_kinematics(&set.frames, &set.legs[state.stance.index()], state.stance);
    let nc = 3 + locked.len();
    let n = NQ + nc;
    let mut kkt = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    kkt.view_mut((0, 0), (NQ, NQ)).copy_from(&m);
    let f = generalized_force(torques, disturbance_force) - h;
    rhs.rows_mut(0, NQ).copy_from(&f);
    for r in 0..3 {
        for c in 0..NQ {
            kkt[(NQ + r, c)] = foot.jacobian[(r, c)];
            kkt[(c, NQ + r)] = -foot.jacobian[(r, c)];
        }
        rhs[NQ + r] = -foot.bias[r];
    }
    for (i, &j) in locked.iter().enumerate() {
        if !(3..NQ).contains(&j) {
            return Err(Error::Argument(format!("coordinate {j} is not a joint")));
        }
        kkt[(NQ + 3 + i, j)] = 1.0;
        kkt[(j, NQ + 3 + i)] = -1.0;
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Dynamics(format!("singular locked KKT at {}", describe(&q))))?;
    let mut ddq = [0.0; NQ];
    ddq.copy_from_slice(&sol.as_slice()[..NQ]);
    Ok(ddq)
}

pub fn kinetic_energy(model: &RobotModel, state: &RobotState) -> f64 {
    let dq = Vec9::from(state.dq);
    0.5 * dq.dot(&(mass_matrix(model, state) * dq))
}

pub fn potential_energy(model: &RobotModel, state: &RobotState) -> f64 {
    let set = body_set(model, &Vec9::from(state.q), &Vec9::from(state.dq));
    set.bodies.iter().map(|b| b.mass * model.gravity * b.com.pos.y).sum()
}

pub fn mechanical_energy(model: &RobotModel, state: &RobotState) -> f64 {
    kinetic_energy(model, state) + potential_energy(model, state)
}

/// Plastic impact of the swing foot: it becomes the new welded stance foot.
pub fn impact_map(model: &RobotModel, pre: &RobotState) -> Result<RobotState> {
    let k = kinematics_qd(model, &Vec9::from(pre.q), &Vec9::from(pre.dq));
    let h = k.foot(pre.stance.other()).lowest_height;
    if h > CONTACT_TOL {
        return Err(Error::State(format!("swing foot is {h:.3e} m above ground at impact")));
    }
    switch_support(model, pre)
}

/// Velocity reset `M(q̇⁺ − q̇⁻) = Jᵀ Λ`, `J q̇⁺ = 0` for the swing foot, then swaps
/// support. Does not check ground contact; used directly for forced (timeout) switches.
pub fn switch_support(model: &RobotModel, pre: &RobotState) -> Result<RobotState> {
    let q = Vec9::from(pre.q);
    let dq = Vec9::from(pre.dq);
    let (m, _, set) = dynamics_terms(model, &q, &dq);
    let new_stance = pre.stance.other();
    let foot = super::kinematics::foot_kinematics(&set.frames, &set.legs[new_stance.index()], new_stance);
    let mchol = factor_mass(&m, &q)?;
    let contact = ContactInertia::new(&mchol, &foot.jacobian, &q)
        .map_err(|e| Error::Dynamics(format!("impact: {e}")))?;
    let dq_post = dq + contact.correction(&(foot.jacobian * dq));
    Ok(RobotState {
        q: pre.q,
        dq: dq_post.into(),
        stance: new_stance,
        time: pre.time,
        phase: 0.0,
        anchor: foot.pose,
    })
}

/// Pulls the stance foot back onto its weld in position (a few Newton steps) and velocity,
/// each as the minimum kinetic-metric correction.
pub(crate) fn project_to_contact(model: &RobotModel, state: &mut RobotState) -> Result<()> {
    let anchor = Vector3::from(state.anchor);
    for _ in 0..3 {
        let q = Vec9::from(state.q);
        let dq = Vec9::from(state.dq);
        let (m, _, set) = dynamics_terms(model, &q, &dq);
        let foot = super::kinematics::foot_kinematics(&set.frames, &set.legs[state.stance.index()], state.stance);
        let residual = Vector3::from(foot.pose) - anchor;
        let mchol = factor_mass(&m, &q)?;
        let contact = ContactInertia::new(&mchol, &foot.jacobian, &q)?;
        let vel_residual = foot.jacobian * dq;
        let dq_new = dq + contact.correction(&vel_residual);
        state.dq = dq_new.into();
        if residual.amax() < 1e-13 {
            break;
        }
        let q_new = q + contact.correction(&residual);
        state.q = q_new.into();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// Out-of-plane angular momentum about the centre of mass (kg m^2/s).
    pub angular_momentum: f64,
}

pub fn com_state(model: &RobotModel, state: &RobotState) -> ComState {
    let set = body_set(model, &Vec9::from(state.q), &Vec9::from(state.dq));
    let total: f64 = set.bodies.iter().map(|b| b.mass).sum();
    let mut p = Vector2::zeros();
    let mut v = Vector2::zeros();
    for b in &set.bodies {
        p += b.com.pos * b.mass;
        v += b.com.vel * b.mass;
    }
    p /= total;
    v /= total;
    let mut l = 0.0;
    for b in &set.bodies {
        let r = b.com.pos - p;
        let u = b.com.vel - v;
        l += b.inertia * set.frames.omega(b.seg) + b.mass * (r.x * u.y - r.y * u.x);
    }
    ComState {
        position: [p.x, p.y],
        velocity: [v.x, v.y],
        angular_momentum: l,
    }
}
