//! Dynamics, geometric adaptive control and simulation of a rigid payload
//! carried by several quadrotors on rigid links.

pub mod adaptive;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod geom;
pub mod integrator;
pub mod model;
pub mod presets;
pub mod sim;
pub mod suites;
pub mod trajectory;
pub mod verification;

pub use error::{Error, Result};
