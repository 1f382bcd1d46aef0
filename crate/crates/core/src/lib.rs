//! Dynamic state-feedback control for polytopic LPV systems.
//!
//! The controller runs a projected LQR policy-gradient flow on its gain
//! `K(t)`, confined to a box `𝒞` of gains that stabilize every frozen
//! plant. The crate provides the pieces needed to build and check such a
//! controller:
//!
//! - [`linalg`]: small dense kernels (LU, Jacobi eigenvalues, Kronecker).
//! - [`lpv`]: plant data, parameter trajectories, closed-loop vertices.
//! - [`lqr`]: Lyapunov/CARE solves, policy cost and gradient.
//! - [`projection`]: the gain box and the projected vector field.
//! - [`cert`]: Routh tests, stability-region polynomials, common Lyapunov matrices.
//! - [`bounds`]: gain-box construction and containment checks.
//! - [`sim`]: closed-loop simulation and cost accounting.
//! - [`cli`]: the `lpvflow` command-line pipeline.

pub mod bounds;
pub mod cert;
pub mod cli;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod lpv;
pub mod lqr;
pub mod projection;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::Mat;
pub use lpv::{ParamTrajectory, PolytopicLpvSystem};
pub use projection::HyperRectangle;
