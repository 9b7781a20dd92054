//! Planar seven-link biped: torso, two thighs, two shanks, two flat feet.
//!
//! Generalized coordinates (9): base x/z (the torso centre of mass), torso pitch,
//! then hip/knee/ankle for the left and right leg. Link angles are relative to the
//! parent link; every absolute angle is counter-clockwise positive in the x-z plane.
//! The stance foot is welded to the ground (x, z and pitch) while the other foot
//! swings; touchdown switches support through a plastic impact.

pub(crate) mod dynamics;
mod integrate;
pub(crate) mod kinematics;
mod model;
mod state;

pub use dynamics::{StateDerivative, 
    com_state, continuous_dynamics, continuous_dynamics_with_locks, impact_map, kinetic_energy,
    mass_matrix, mechanical_energy, potential_energy, switch_support, ComState,
};
pub use integrate::{detect_touchdown, step_integrate, Disturbance, MAX_DT};
pub use kinematics::{forward_kinematics, FootKinematics, Kinematics};
pub use model::{LinkParams, RobotModel};
pub use state::{Leg, RobotState, NQ};

pub type Vec9 = nalgebra::SVector<f64, 9>;
pub type Mat9 = nalgebra::SMatrix<f64, 9, 9>;
pub type Jac3 = nalgebra::SMatrix<f64, 3, 9>;

pub const BASE_X: usize = 0;
pub const BASE_Z: usize = 1;
pub const PITCH: usize = 2;

/// Stance-foot weld tolerance (position and pitch).
pub const CONTACT_TOL: f64 = 1e-6;
