pub mod config_lab;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kernels;
pub mod patch;
pub mod point_vortex;
pub mod sim;
pub mod tree;

pub use error::{Result, VortexError};
pub use geometry::{kernel, perp, ParticleCloud, PointVortexSystem, Sign, SimulationState, Vec2};
pub use kernels::{induced_velocity, induced_velocity_tree, particle_velocities, VelocityBackend};
pub use patch::{discretize_patch, PatchSpec, Profile};
pub use tree::TreeParams;
pub use sim::{run, DtPolicy, RunConfig, Simulation};
