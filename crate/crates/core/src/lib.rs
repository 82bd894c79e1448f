//! Numerical laboratory for planar vortex-sheet dynamics.
//!
//! The sheet is a curve in the plane carrying a vorticity density; its
//! self-induced motion is the principal-value Biot-Savart integral. This
//! crate evolves sheets in several parametrizations, evaluates the weak
//! Birkhoff-Rott and weak Euler identities as residual functionals on
//! trajectories, and estimates curve-regularity and integrability
//! diagnostics that govern when the two descriptions agree.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod oracles;
pub mod state;
pub mod test_function;
pub mod vec2;
pub mod weak_forms;

pub use error::{Error, Result};
pub use state::{ParamKind, SheetState, SheetTrajectory, Topology};
pub use vec2::Vec2;
