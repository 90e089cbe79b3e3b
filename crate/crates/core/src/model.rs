//! Parameter types for the cavity–magnon–bus model and the physical
//! conversions shared by every engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{self, mhz_to_rad_ns, rad_ns_to_mhz};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A field violates its invariant. `field` is a path such as
    /// `buses[1].gamma_ext`.
    #[error("{field} {reason}")]
    Invalid { field: String, reason: &'static str },
    #[error("at least 1 bus mode is required")]
    NoBus,
    #[error("at most 2 bus modes are supported, got {0}")]
    TooManyBuses(usize),
    #[error("{0} must be > 0")]
    NonPositive(&'static str),
    #[error("magnetic field must be ≥ 0, got {0} T")]
    NegativeField(f64),
}

/// A damped harmonic mode: cavity photon or magnon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Angular frequency, rad/ns.
    pub omega: f64,
    /// Energy decay rate, rad/ns. The amplitude decays at `gamma / 2`.
    pub gamma: f64,
}

impl ModeParams {
    pub fn from_mhz(f_mhz: f64, gamma_mhz: f64) -> Self {
        Self {
            omega: mhz_to_rad_ns(f_mhz),
            gamma: mhz_to_rad_ns(gamma_mhz),
        }
    }
}

/// A heavily damped transmission-line (bus) mode that carries the port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusParams {
    pub omega: f64,
    /// Intrinsic loss rate, rad/ns.
    pub gamma_int: f64,
    /// Coupling rate to the measurement port, rad/ns.
    pub gamma_ext: f64,
}

impl BusParams {
    pub fn from_mhz(f_mhz: f64, gamma_int_mhz: f64, gamma_ext_mhz: f64) -> Self {
        Self {
            omega: mhz_to_rad_ns(f_mhz),
            gamma_int: mhz_to_rad_ns(gamma_int_mhz),
            gamma_ext: mhz_to_rad_ns(gamma_ext_mhz),
        }
    }

    /// Total linewidth γ_t = γ_int + γ_ext.
    #[inline]
    pub fn gamma_total(&self) -> f64 {
        self.gamma_int + self.gamma_ext
    }
}

/// How two bus modes that share one port decay into it.
///
/// With a single bus both variants are the same model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortModel {
    /// Both buses radiate into the same port field, which adds the
    /// cross-damping term −½√(γe₁γe₂)·t_k to each bus equation. Passive and
    /// energy-consistent.
    #[default]
    Shared,
    /// Each bus decays into the port independently, with no cross term.
    /// Matches the four-mode equations as usually written; it is not passive
    /// when the two buses overlap spectrally.
    Independent,
}

/// Full parameter set of the three-mode (one bus) or four-mode (two buses)
/// model. All rates and frequencies in rad/ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub cavity: ModeParams,
    pub magnon: ModeParams,
    pub buses: Vec<BusParams>,
    /// Cavity–bus coupling, rad/ns. Shared by every bus.
    pub g_ct: f64,
    /// Magnon–bus coupling, rad/ns. Shared by every bus.
    pub g_mt: f64,
    #[serde(default)]
    pub port_model: PortModel,
}

fn check_finite(field: String, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Invalid {
            field,
            reason: "must be finite",
        })
    }
}

fn check_positive(field: String, v: f64) -> Result<(), ModelError> {
    check_finite(field.clone(), v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Invalid {
            field,
            reason: "must be > 0",
        })
    }
}

fn check_non_negative(field: String, v: f64) -> Result<(), ModelError> {
    check_finite(field.clone(), v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Invalid {
            field,
            reason: "must be ≥ 0",
        })
    }
}

impl SystemConfig {
    /// Single-bus (three-mode) configuration.
    pub fn three_mode(cavity: ModeParams, magnon: ModeParams, bus: BusParams, g_ct: f64, g_mt: f64) -> Self {
        Self {
            cavity,
            magnon,
            buses: vec![bus],
            g_ct,
            g_mt,
            port_model: PortModel::Shared,
        }
    }

    /// Checks every invariant and returns the config unchanged, or the first
    /// violation with its field path.
    pub fn validate(self) -> Result<Self, ModelError> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        for (name, mode) in [("cavity", &self.cavity), ("magnon", &self.magnon)] {
            check_positive(format!("{name}.omega"), mode.omega)?;
            check_non_negative(format!("{name}.gamma"), mode.gamma)?;
        }
        match self.buses.len() {
            0 => return Err(ModelError::NoBus),
            1 | 2 => {}
            n => return Err(ModelError::TooManyBuses(n)),
        }
        for (i, bus) in self.buses.iter().enumerate() {
            check_positive(format!("buses[{i}].omega"), bus.omega)?;
            check_non_negative(format!("buses[{i}].gamma_int"), bus.gamma_int)?;
            check_non_negative(format!("buses[{i}].gamma_ext"), bus.gamma_ext)?;
        }
        check_non_negative("g_ct".into(), self.g_ct)?;
        check_non_negative("g_mt".into(), self.g_mt)?;
        Ok(())
    }

    pub fn is_single_bus(&self) -> bool {
        self.buses.len() == 1
    }

    /// Number of dynamical modes: cavity, magnon and the buses.
    pub fn dim(&self) -> usize {
        2 + self.buses.len()
    }

    /// Largest angular frequency among all modes.
    pub fn max_omega(&self) -> f64 {
        self.buses
            .iter()
            .map(|b| b.omega)
            .fold(self.cavity.omega.max(self.magnon.omega), f64::max)
    }

    pub fn to_file(&self) -> SystemConfigFile {
        SystemConfigFile::from(self)
    }
}

/// A mode block as written in config files (linear MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub f_mhz: f64,
    pub gamma_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub f_mhz: f64,
    pub gamma_int_mhz: f64,
    pub gamma_ext_mhz: f64,
}

/// On-disk JSON form of [`SystemConfig`]; all frequencies are f = ω/2π in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfigFile {
    pub cavity: ModeSpec,
    pub magnon: ModeSpec,
    pub buses: Vec<BusSpec>,
    pub g_ct_mhz: f64,
    pub g_mt_mhz: f64,
    #[serde(default)]
    pub port_model: PortModel,
}

impl From<&SystemConfigFile> for SystemConfig {
    fn from(f: &SystemConfigFile) -> Self {
        Self {
            cavity: ModeParams::from_mhz(f.cavity.f_mhz, f.cavity.gamma_mhz),
            magnon: ModeParams::from_mhz(f.magnon.f_mhz, f.magnon.gamma_mhz),
            buses: f
                .buses
                .iter()
                .map(|b| BusParams::from_mhz(b.f_mhz, b.gamma_int_mhz, b.gamma_ext_mhz))
                .collect(),
            g_ct: mhz_to_rad_ns(f.g_ct_mhz),
            g_mt: mhz_to_rad_ns(f.g_mt_mhz),
            port_model: f.port_model,
        }
    }
}

impl From<&SystemConfig> for SystemConfigFile {
    fn from(c: &SystemConfig) -> Self {
        let mode = |m: &ModeParams| ModeSpec {
            f_mhz: rad_ns_to_mhz(m.omega),
            gamma_mhz: rad_ns_to_mhz(m.gamma),
        };
        Self {
            cavity: mode(&c.cavity),
            magnon: mode(&c.magnon),
            buses: c
                .buses
                .iter()
                .map(|b| BusSpec {
                    f_mhz: rad_ns_to_mhz(b.omega),
                    gamma_int_mhz: rad_ns_to_mhz(b.gamma_int),
                    gamma_ext_mhz: rad_ns_to_mhz(b.gamma_ext),
                })
                .collect(),
            g_ct_mhz: rad_ns_to_mhz(c.g_ct),
            g_mt_mhz: rad_ns_to_mhz(c.g_mt),
            port_model: c.port_model,
        }
    }
}

impl SystemConfigFile {
    /// Converts to canonical units and validates.
    pub fn resolve(&self) -> Result<SystemConfig, ModelError> {
        SystemConfig::from(self).validate()
    }
}

/// Loss rates of a resonator derived from its quality factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonatorRates {
    /// Total (loaded) rate γ_t, rad/ns.
    pub gamma_t: f64,
    pub gamma_int: f64,
    pub gamma_ext: f64,
    /// |1/Q_L − 1/Q_i − 1/Q_c|·Q_L: how far the three Qs are from
    /// satisfying the reciprocal sum rule.
    pub reciprocal_residual: f64,
}

/// Quality factors → rates via γ_x/2π = f0/Q_x.
pub fn q_to_gamma(f0_mhz: f64, q_loaded: f64, q_internal: f64, q_coupling: f64) -> Result<ResonatorRates, ModelError> {
    for (name, v) in [
        ("f0", f0_mhz),
        ("q_loaded", q_loaded),
        ("q_internal", q_internal),
        ("q_coupling", q_coupling),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::NonPositive(name));
        }
    }
    let residual = (1.0 / q_loaded - 1.0 / q_internal - 1.0 / q_coupling).abs() * q_loaded;
    Ok(ResonatorRates {
        gamma_t: mhz_to_rad_ns(f0_mhz / q_loaded),
        gamma_int: mhz_to_rad_ns(f0_mhz / q_internal),
        gamma_ext: mhz_to_rad_ns(f0_mhz / q_coupling),
        reciprocal_residual: residual,
    })
}

/// Inverse of [`q_to_gamma`]: returns (Q_L, Q_i, Q_c).
pub fn gamma_to_q(f0_mhz: f64, rates: &ResonatorRates) -> (f64, f64, f64) {
    let q = |g: f64| f0_mhz / rad_ns_to_mhz(g);
    (q(rates.gamma_t), q(rates.gamma_int), q(rates.gamma_ext))
}

/// Magnon frequency from the bias field, ω_m = 2π·gyro·B0.
///
/// `gyro_mhz_per_t` is the reduced gyromagnetic ratio γ/2π in MHz/T
/// (≈ 28 000 for YIG).
pub fn field_to_magnon_freq(b0_tesla: f64, gyro_mhz_per_t: f64) -> Result<f64, ModelError> {
    if !(b0_tesla >= 0.0) {
        return Err(ModelError::NegativeField(b0_tesla));
    }
    if !(gyro_mhz_per_t > 0.0) {
        return Err(ModelError::NonPositive("gyro"));
    }
    Ok(mhz_to_rad_ns(gyro_mhz_per_t * b0_tesla))
}

/// Bias field (T) that puts the magnon at `omega_m` (rad/ns).
pub fn magnon_freq_to_field(omega_m: f64, gyro_mhz_per_t: f64) -> Result<f64, ModelError> {
    if !(gyro_mhz_per_t > 0.0) {
        return Err(ModelError::NonPositive("gyro"));
    }
    Ok(rad_ns_to_mhz(omega_m) / gyro_mhz_per_t)
}

/// Drive amplitude |a_in| in √(photons/ns) for an input power, using
/// |a_in|² = P/(h·f).
pub fn amplitude_from_power(power_dbm: f64, f_mhz: f64) -> Result<f64, ModelError> {
    if !(f_mhz > 0.0) {
        return Err(ModelError::NonPositive("f"));
    }
    let photons_per_s = units::dbm_to_watts(power_dbm) / (units::PLANCK * f_mhz * 1e6);
    Ok((photons_per_s * 1e-9).sqrt())
}
