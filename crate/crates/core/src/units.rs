//! Unit conventions.
//!
//! Everything inside the engines runs in angular frequency (rad/ns) and time
//! (ns). Config files and reports carry linear frequencies f = ω/2π in MHz,
//! lengths in mm and phases in degrees.
//!
//! Damping rates follow the energy convention: a mode with rate γ has an
//! amplitude that decays as exp(−γt/2). A rate quoted as "γ/2π = 50.8 MHz"
//! therefore converts with [`mhz_to_rad_ns`] like any other frequency.

use std::f64::consts::PI;

const RAD_NS_PER_MHZ: f64 = 2.0 * PI * 1e-3;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, mm/ns.
pub const SPEED_OF_LIGHT_MM_PER_NS: f64 = 299.792_458;

/// Linear frequency in MHz to angular frequency in rad/ns.
#[inline]
pub fn mhz_to_rad_ns(f_mhz: f64) -> f64 {
    f_mhz * RAD_NS_PER_MHZ
}

/// Angular frequency in rad/ns to linear frequency in MHz.
#[inline]
pub fn rad_ns_to_mhz(omega: f64) -> f64 {
    omega / RAD_NS_PER_MHZ
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// Power in dBm to watts. `-inf` maps to zero.
#[inline]
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}
