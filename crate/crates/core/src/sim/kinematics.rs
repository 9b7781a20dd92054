use nalgebra::{SMatrix, Vector2, Vector3};

use super::{Jac3, Leg, RobotModel, RobotState, Vec9};

pub(crate) type Jac2 = SMatrix<f64, 2, 9>;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Segment {
    Torso,
    Thigh(Leg),
    Shank(Leg),
    Foot(Leg),
}

impl Segment {
    fn slot(self) -> usize {
        match self {
            Segment::Torso => 0,
            Segment::Thigh(l) => 1 + 3 * l.index(),
            Segment::Shank(l) => 2 + 3 * l.index(),
            Segment::Foot(l) => 3 + 3 * l.index(),
        }
    }

    /// Generalized coordinates whose sum is this segment's absolute angle.
    fn angle_indices(self) -> impl Iterator<Item = usize> {
        let (hip, depth) = match self {
            Segment::Torso => (3, 0),
            Segment::Thigh(l) => (l.hip_index(), 1),
            Segment::Shank(l) => (l.hip_index(), 2),
            Segment::Foot(l) => (l.hip_index(), 3),
        };
        std::iter::once(2).chain(hip..hip + depth)
    }

    pub(crate) fn angle_row(self) -> nalgebra::SMatrix<f64, 1, 9> {
        let mut row = nalgebra::SMatrix::<f64, 1, 9>::zeros();
        for j in self.angle_indices() {
            row[j] = 1.0;
        }
        row
    }
}

/// Absolute angle, rate and rotation of every segment.
pub(crate) struct Frames {
    angle: [f64; 7],
    omega: [f64; 7],
    cos: [f64; 7],
    sin: [f64; 7],
}

impl Frames {
    pub(crate) fn new(q: &Vec9, dq: &Vec9) -> Self {
        let mut f = Frames {
            angle: [0.0; 7],
            omega: [0.0; 7],
            cos: [0.0; 7],
            sin: [0.0; 7],
        };
        f.angle[0] = q[2];
        f.omega[0] = dq[2];
        for leg in [Leg::Left, Leg::Right] {
            let h = leg.hip_index();
            let base = 1 + 3 * leg.index();
            let (mut a, mut w) = (q[2], dq[2]);
            for k in 0..3 {
                a += q[h + k];
                w += dq[h + k];
                f.angle[base + k] = a;
                f.omega[base + k] = w;
            }
        }
        for i in 0..7 {
            let (s, c) = f.angle[i].sin_cos();
            f.sin[i] = s;
            f.cos[i] = c;
        }
        f
    }

    pub(crate) fn angle(&self, seg: Segment) -> f64 {
        self.angle[seg.slot()]
    }

    pub(crate) fn omega(&self, seg: Segment) -> f64 {
        self.omega[seg.slot()]
    }

    fn rotate(&self, seg: Segment, v: Vector2<f64>) -> Vector2<f64> {
        let i = seg.slot();
        Vector2::new(
            self.cos[i] * v.x - self.sin[i] * v.y,
            self.sin[i] * v.x + self.cos[i] * v.y,
        )
    }
}

/// Position, velocity, Jacobian and velocity-product acceleration (`J̇ q̇`) of a point.
#[derive(Debug, Clone)]
pub(crate) struct PointKin {
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
    pub jac: Jac2,
    pub bias: Vector2<f64>,
}

impl PointKin {
    pub(crate) fn base(q: &Vec9, dq: &Vec9) -> Self {
        let mut jac = Jac2::zeros();
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        Self {
            pos: Vector2::new(q[0], q[1]),
            vel: Vector2::new(dq[0], dq[1]),
            jac,
            bias: Vector2::zeros(),
        }
    }

    /// Moves the point by `local` expressed in the frame of `seg`.
    pub(crate) fn then(&self, frames: &Frames, seg: Segment, local: Vector2<f64>) -> Self {
        let w = frames.rotate(seg, local);
        let perp = Vector2::new(-w.y, w.x);
        let omega = frames.omega(seg);
        let mut out = self.clone();
        out.pos += w;
        out.vel += perp * omega;
        out.bias -= w * (omega * omega);
        for j in seg.angle_indices() {
            out.jac[(0, j)] += perp.x;
            out.jac[(1, j)] += perp.y;
        }
        out
    }
}

pub(crate) struct LegPoints {
    pub thigh_com: PointKin,
    pub shank_com: PointKin,
    pub ankle: PointKin,
    pub foot_com: PointKin,
    pub heel: PointKin,
    pub toe: PointKin,
}

pub(crate) fn leg_points(model: &RobotModel, frames: &Frames, base: &PointKin, leg: Leg) -> LegPoints {
    let hip = base.then(frames, Segment::Torso, Vector2::new(0.0, -model.torso.com_offset));
    let thigh = Segment::Thigh(leg);
    let shank = Segment::Shank(leg);
    let foot = Segment::Foot(leg);
    let thigh_com = hip.then(frames, thigh, Vector2::new(0.0, -model.thigh.com_offset));
    let knee = hip.then(frames, thigh, Vector2::new(0.0, -model.thigh.length));
    let shank_com = knee.then(frames, shank, Vector2::new(0.0, -model.shank.com_offset));
    let ankle = knee.then(frames, shank, Vector2::new(0.0, -model.shank.length));
    let foot_com = ankle.then(frames, foot, Vector2::new(model.foot.com_offset, 0.0));
    let heel = ankle.then(frames, foot, Vector2::new(-model.heel_offset, 0.0));
    let toe = ankle.then(frames, foot, Vector2::new(model.foot.length - model.heel_offset, 0.0));
    LegPoints {
        thigh_com,
        shank_com,
        ankle,
        foot_com,
        heel,
        toe,
    }
}

/// One rigid body's centre-of-mass kinematics.
pub(crate) struct Body {
    pub seg: Segment,
    pub mass: f64,
    pub inertia: f64,
    pub com: PointKin,
}

pub(crate) struct BodySet {
    pub frames: Frames,
    pub bodies: Vec<Body>,
    pub legs: [LegPoints; 2],
}

pub(crate) fn body_set(model: &RobotModel, q: &Vec9, dq: &Vec9) -> BodySet {
    let frames = Frames::new(q, dq);
    let base = PointKin::base(q, dq);
    let left = leg_points(model, &frames, &base, Leg::Left);
    let right = leg_points(model, &frames, &base, Leg::Right);
    let mut bodies = Vec::with_capacity(7);
    bodies.push(Body {
        seg: Segment::Torso,
        mass: model.torso.mass,
        inertia: model.torso.inertia,
        com: base,
    });
    for (leg, pts) in [(Leg::Left, &left), (Leg::Right, &right)] {
        bodies.push(Body {
            seg: Segment::Thigh(leg),
            mass: model.thigh.mass,
            inertia: model.thigh.inertia,
            com: pts.thigh_com.clone(),
        });
        bodies.push(Body {
            seg: Segment::Shank(leg),
            mass: model.shank.mass,
            inertia: model.shank.inertia,
            com: pts.shank_com.clone(),
        });
        bodies.push(Body {
            seg: Segment::Foot(leg),
            mass: model.foot.mass,
            inertia: model.foot.inertia,
            com: pts.foot_com.clone(),
        });
    }
    BodySet {
        frames,
        bodies,
        legs: [left, right],
    }
}

/// Ankle pose of one foot with its 3x9 Jacobian (x, z, pitch rows).
#[derive(Debug, Clone)]
pub struct FootKinematics {
    /// Ankle x, ankle z, foot pitch.
    pub pose: [f64; 3],
    pub velocity: [f64; 3],
    pub jacobian: Jac3,
    /// `J̇ q̇` for the three rows.
    pub bias: Vector3<f64>,
    /// Height of the lower of heel and toe.
    pub lowest_height: f64,
    /// Vertical velocity of that lowest point.
    pub lowest_velocity: f64,
}

#[derive(Debug, Clone)]
pub struct Kinematics {
    pub feet: [FootKinematics; 2],
    /// Base x, base z, torso pitch.
    pub base_pose: [f64; 3],
    pub base_velocity: [f64; 3],
}

impl Kinematics {
    pub fn foot(&self, leg: Leg) -> &FootKinematics {
        &self.feet[leg.index()]
    }

    pub fn torso_pitch(&self) -> f64 {
        self.base_pose[2]
    }
}

pub(crate) fn foot_kinematics(frames: &Frames, pts: &LegPoints, leg: Leg) -> FootKinematics {
    let seg = Segment::Foot(leg);
    let mut jacobian = Jac3::zeros();
    jacobian.fixed_rows_mut::<2>(0).copy_from(&pts.ankle.jac);
    jacobian.fixed_rows_mut::<1>(2).copy_from(&seg.angle_row());
    let lowest = if pts.heel.pos.y <= pts.toe.pos.y {
        &pts.heel
    } else {
        &pts.toe
    };
    FootKinematics {
        pose: [pts.ankle.pos.x, pts.ankle.pos.y, frames.angle(seg)],
        velocity: [pts.ankle.vel.x, pts.ankle.vel.y, frames.omega(seg)],
        jacobian,
        bias: Vector3::new(pts.ankle.bias.x, pts.ankle.bias.y, 0.0),
        lowest_height: lowest.pos.y,
        lowest_velocity: lowest.vel.y,
    }
}

pub(crate) fn kinematics_qd(model: &RobotModel, q: &Vec9, dq: &Vec9) -> Kinematics {
    let frames = Frames::new(q, dq);
    let base = PointKin::base(q, dq);
    let left = leg_points(model, &frames, &base, Leg::Left);
    let right = leg_points(model, &frames, &base, Leg::Right);
    Kinematics {
        feet: [
            foot_kinematics(&frames, &left, Leg::Left),
            foot_kinematics(&frames, &right, Leg::Right),
        ],
        base_pose: [q[0], q[1], q[2]],
        base_velocity: [dq[0], dq[1], dq[2]],
    }
}

/// Foot and base poses, velocities and Jacobians for the current configuration.
pub fn forward_kinematics(model: &RobotModel, state: &RobotState) -> Kinematics {
    kinematics_qd(model, &Vec9::from(state.q), &Vec9::from(state.dq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NQ;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, model: &RobotModel) -> RobotState {
        let mut q = [0.0; NQ];
        let mut dq = [0.0; NQ];
        for i in 0..NQ {
            q[i] = rng.random_range(-0.8..0.8);
            dq[i] = rng.random_range(-2.0..2.0);
        }
        q[1] += 1.0;
        RobotState::new(model, q, dq, Leg::Left)
    }

    #[test]
    fn zero_pose_feet_are_symmetric_about_base() {
        let model = RobotModel::default();
        let mut q = [0.0; NQ];
        q[0] = 0.37;
        q[1] = 1.1;
        let s = RobotState::new(&model, q, [0.0; NQ], Leg::Left);
        let k = forward_kinematics(&model, &s);
        let l = k.foot(Leg::Left).pose;
        let r = k.foot(Leg::Right).pose;
        assert!((l[0] - 0.37).abs() < 1e-15 && (r[0] - 0.37).abs() < 1e-15);
        assert!((l[1] - r[1]).abs() < 1e-15);
        let expected_z = 1.1 - model.torso.com_offset - model.leg_length();
        assert!((l[1] - expected_z).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_state(&mut rng, &model);
            let k = forward_kinematics(&model, &s);
            let h = 1e-6;
            for j in 0..NQ {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp.q[j] += h;
                sm.q[j] -= h;
                let kp = forward_kinematics(&model, &sp);
                let km = forward_kinematics(&model, &sm);
                for leg in [Leg::Left, Leg::Right] {
                    for r in 0..3 {
                        let fd = (kp.foot(leg).pose[r] - km.foot(leg).pose[r]) / (2.0 * h);
                        let an = k.foot(leg).jacobian[(r, j)];
                        assert!((fd - an).abs() < 1e-6, "leg {leg:?} row {r} col {j}: {fd} vs {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn bias_term_matches_finite_difference_of_jacobian() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_state(&mut rng, &model);
        let k = forward_kinematics(&model, &s);
        // d/dt (J) q̇ via a small step along q̇
        let h = 1e-6;
        let mut sp = s.clone();
        let mut sm = s.clone();
        for j in 0..NQ {
            sp.q[j] += h * s.dq[j];
            sm.q[j] -= h * s.dq[j];
        }
        let dq = Vec9::from(s.dq);
        let jp = forward_kinematics(&model, &sp).foot(Leg::Right).jacobian * dq;
        let jm = forward_kinematics(&model, &sm).foot(Leg::Right).jacobian * dq;
        let fd = (jp - jm) / (2.0 * h);
        let an = k.foot(Leg::Right).bias;
        assert!((fd - an).norm() < 1e-5, "{fd} vs {an}");
    }

    #[test]
    fn mirroring_swaps_foot_poses() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = random_state(&mut rng, &model);
        let m = s.mirrored(&model);
        let k = forward_kinematics(&model, &s);
        let km = forward_kinematics(&model, &m);
        for r in 0..3 {
            assert!((k.foot(Leg::Left).pose[r] - km.foot(Leg::Right).pose[r]).abs() < 1e-14);
            assert!((k.foot(Leg::Right).pose[r] - km.foot(Leg::Left).pose[r]).abs() < 1e-14);
        }
    }

    #[test]
    fn standing_pose_has_flat_feet_on_ground_under_hip() {
        let model = RobotModel::default();
        let s = RobotState::standing(&model, 1.0, Leg::Left).unwrap();
        let k = forward_kinematics(&model, &s);
        for leg in [Leg::Left, Leg::Right] {
            let p = k.foot(leg).pose;
            assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12 && p[2].abs() < 1e-12, "{p:?}");
            assert!(k.foot(leg).lowest_height.abs() < 1e-12);
        }
        // knees bend forward
        assert!(s.q[4] < 0.0);
    }
}
