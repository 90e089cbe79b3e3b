//! Simulation and analysis engine for cavity–magnon systems coupled at long
//! range through heavily damped transmission-line (bus) modes.
//!
//! Internal units are rad/ns and ns throughout; see [`units`].

pub mod beat;
pub mod dynamics;
pub mod fit;
pub mod model;
pub mod phase;
pub mod spectral;
pub mod sweep;
pub mod units;

pub use model::{BusParams, ModeParams, PortModel, SystemConfig, SystemConfigFile};
pub use num_complex::Complex64;
