//! Phase-shifter control of the bus modes and the microstrip geometry that
//! sets the standing-wave pattern.
//!
//! The phase laws are empirical and expressed in control-setting degrees;
//! the doubling from the reflection geometry is already folded into them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BusParams, ModeParams, PortModel, SystemConfig};
use crate::units::{mhz_to_rad_ns, rad_ns_to_mhz, SPEED_OF_LIGHT_MM_PER_NS};

/// Bus-2 is dropped from a phase-built config when it sits further than this
/// many of its own linewidths from the cavity.
pub const DEFAULT_BUS_DROP_THRESHOLD: f64 = 100.0;

/// Smallest conductor thickness used in the effective-width correction, mm.
/// The logarithmic term diverges at t = 0.
pub const MIN_CONDUCTOR_THICKNESS_MM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseError {
    #[error("guided wavelength must be > 0, got {0} mm")]
    NonPositiveWavelength(f64),
    #[error("microstrip {0} must be positive")]
    InvalidGeometry(&'static str),
    #[error("frequency must be > 0, got {0} MHz")]
    NonPositiveFrequency(f64),
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// f(φ) = slope·φ + intercept, in MHz with φ in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLaw {
    pub slope_mhz_per_deg: f64,
    pub intercept_mhz: f64,
}

impl LinearLaw {
    pub fn eval_mhz(&self, phi_deg: f64) -> f64 {
        self.slope_mhz_per_deg * phi_deg + self.intercept_mhz
    }

    /// Setting at which the law reaches `f_mhz`.
    pub fn invert(&self, f_mhz: f64) -> f64 {
        (f_mhz - self.intercept_mhz) / self.slope_mhz_per_deg
    }
}

/// Map from phase-shifter setting to bus frequencies and magnon coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseModel {
    pub bus1: LinearLaw,
    pub bus2: LinearLaw,
    /// Peak magnon–bus coupling, rad/ns.
    pub g_mt_max: f64,
    /// Spatial offset of the YIG sphere from an antinode, degrees.
    pub phi0_deg: f64,
}

/// JSON form: `{bus1:{slope_mhz_per_deg,intercept_mhz}, bus2:{...},
/// g_mt_max_mhz, phi0_deg}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModelSpec {
    pub bus1: LinearLaw,
    pub bus2: LinearLaw,
    pub g_mt_max_mhz: f64,
    #[serde(default)]
    pub phi0_deg: f64,
}

impl From<&PhaseModelSpec> for PhaseModel {
    fn from(s: &PhaseModelSpec) -> Self {
        Self {
            bus1: s.bus1,
            bus2: s.bus2,
            g_mt_max: mhz_to_rad_ns(s.g_mt_max_mhz),
            phi0_deg: s.phi0_deg,
        }
    }
}

impl From<&PhaseModel> for PhaseModelSpec {
    fn from(m: &PhaseModel) -> Self {
        Self {
            bus1: m.bus1,
            bus2: m.bus2,
            g_mt_max_mhz: rad_ns_to_mhz(m.g_mt_max),
            phi0_deg: m.phi0_deg,
        }
    }
}

impl PhaseModel {
    /// Measured laws: f_t1 = 0.319φ + 4981.6 MHz, f_t2 = 0.308φ + 4928.9 MHz,
    /// g_mt^max/2π = 10 MHz; φ0 = 0 since the sphere position is not known.
    pub fn measured() -> Self {
        Self {
            bus1: LinearLaw {
                slope_mhz_per_deg: 0.319,
                intercept_mhz: 4981.6,
            },
            bus2: LinearLaw {
                slope_mhz_per_deg: 0.308,
                intercept_mhz: 4928.9,
            },
            g_mt_max: mhz_to_rad_ns(10.0),
            phi0_deg: 0.0,
        }
    }
}

/// Bus angular frequencies (rad/ns) at setting `phi_deg`.
pub fn omega_t_of_phase(model: &PhaseModel, phi_deg: f64) -> (f64, f64) {
    (
        mhz_to_rad_ns(model.bus1.eval_mhz(phi_deg)),
        mhz_to_rad_ns(model.bus2.eval_mhz(phi_deg)),
    )
}

/// g_mt(φ) = g_mt^max·|sin(φ + φ0)|, angles in degrees.
pub fn g_mt_of_phase(model: &PhaseModel, phi_deg: f64) -> f64 {
    model.g_mt_max * (phi_deg + model.phi0_deg).to_radians().sin().abs()
}

/// Phase offset (degrees) of a sphere `x_mm` away from an antinode:
/// 360°·x/λ_g.
pub fn spatial_phase_offset(x_mm: f64, lambda_g_mm: f64) -> Result<f64, PhaseError> {
    if !(lambda_g_mm > 0.0) {
        return Err(PhaseError::NonPositiveWavelength(lambda_g_mm));
    }
    Ok(360.0 * x_mm / lambda_g_mm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrostripGeometry {
    /// Relative permittivity of the substrate.
    pub eps_r: f64,
    /// Substrate height, mm.
    pub h_mm: f64,
    /// Trace width, mm.
    pub w_mm: f64,
    /// Conductor thickness, mm.
    pub t_mm: f64,
}

impl MicrostripGeometry {
    /// FR4 board used for the remote-coupling line (ε_r = 4.1 estimate).
    pub fn fr4_board() -> Self {
        Self {
            eps_r: 4.1,
            h_mm: 0.874,
            w_mm: 1.943,
            t_mm: 0.036,
        }
    }

    fn check(&self) -> Result<(), PhaseError> {
        for (name, v) in [("eps_r", self.eps_r), ("h", self.h_mm), ("w", self.w_mm)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhaseError::InvalidGeometry(name));
            }
        }
        // t = 0 is accepted and clamped
        if !(self.t_mm >= 0.0 && self.t_mm.is_finite()) {
            return Err(PhaseError::InvalidGeometry("t"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicrostripResult {
    pub eps_eff: f64,
    pub w_eff_mm: f64,
    pub lambda_g_mm: f64,
    /// Node to next node, λ_g/2.
    pub node_spacing_mm: f64,
    /// Node to adjacent antinode, λ_g/4.
    pub node_antinode_spacing_mm: f64,
}

/// Quasi-static microstrip analysis (Hammerstad–Jensen effective width).
///
/// w_eff = w + t/π·(1 + ln(4πw/t)) for w/h ≤ 1, w + t/π·(1 + ln(2h/t))
/// otherwise; ε_eff = (ε_r+1)/2 + (ε_r−1)/2·(1 + 12h/w_eff)^(−1/2);
/// λ_g = c/(f·√ε_eff). The thickness is clamped to
/// [`MIN_CONDUCTOR_THICKNESS_MM`].
pub fn microstrip(geometry: &MicrostripGeometry, f_mhz: f64) -> Result<MicrostripResult, PhaseError> {
    if !(f_mhz > 0.0) {
        return Err(PhaseError::NonPositiveFrequency(f_mhz));
    }
    geometry.check()?;
    let MicrostripGeometry {
        eps_r,
        h_mm: h,
        w_mm: w,
        ..
    } = *geometry;
    let t = geometry.t_mm.max(MIN_CONDUCTOR_THICKNESS_MM);

    let log_arg = if w / h <= 1.0 {
        4.0 * std::f64::consts::PI * w / t
    } else {
        2.0 * h / t
    };
    let w_eff = w + t / std::f64::consts::PI * (1.0 + log_arg.ln());
    let eps_eff = (eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 * (1.0 + 12.0 * h / w_eff).powf(-0.5);
    // c in mm/ns over f in GHz gives mm
    let lambda_g = SPEED_OF_LIGHT_MM_PER_NS / (f_mhz * 1e-3) / eps_eff.sqrt();
    Ok(MicrostripResult {
        eps_eff,
        w_eff_mm: w_eff,
        lambda_g_mm: lambda_g,
        node_spacing_mm: lambda_g / 2.0,
        node_antinode_spacing_mm: lambda_g / 4.0,
    })
}

/// Loss rates of a bus whose frequency is supplied by the phase model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusLoss {
    pub gamma_int: f64,
    pub gamma_ext: f64,
}

/// A system config with the phase-controlled quantities (bus frequencies and
/// g_mt) left open.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTemplate {
    pub cavity: ModeParams,
    pub magnon: ModeParams,
    /// Losses for bus 1 and bus 2. With one entry both buses share it.
    pub bus_losses: Vec<BusLoss>,
    pub g_ct: f64,
    pub port_model: PortModel,
}

impl SystemTemplate {
    /// Uses the bus losses of `config`; its bus frequencies and g_mt are
    /// ignored.
    pub fn from_config(config: &SystemConfig) -> Result<Self, PhaseError> {
        if config.buses.is_empty() {
            return Err(PhaseError::MissingPlaceholder("buses"));
        }
        Ok(Self {
            cavity: config.cavity,
            magnon: config.magnon,
            bus_losses: config
                .buses
                .iter()
                .map(|b| BusLoss {
                    gamma_int: b.gamma_int,
                    gamma_ext: b.gamma_ext,
                })
                .collect(),
            g_ct: config.g_ct,
            port_model: config.port_model,
        })
    }
}

/// Config at setting `phi_deg`: bus frequencies from the linear laws, g_mt
/// from the |sin| law. Bus 2 is kept only while
/// |ω_t2 − ω_c| ≤ `drop_threshold`·γ_t2.
pub fn build_config_at_phase(
    template: &SystemTemplate,
    model: &PhaseModel,
    phi_deg: f64,
    drop_threshold: f64,
) -> Result<SystemConfig, PhaseError> {
    let loss1 = *template
        .bus_losses
        .first()
        .ok_or(PhaseError::MissingPlaceholder("buses"))?;
    let loss2 = *template.bus_losses.get(1).unwrap_or(&loss1);
    let (w1, w2) = omega_t_of_phase(model, phi_deg);
    let bus = |omega: f64, l: BusLoss| BusParams {
        omega,
        gamma_int: l.gamma_int,
        gamma_ext: l.gamma_ext,
    };
    let mut buses = vec![bus(w1, loss1)];
    let b2 = bus(w2, loss2);
    if (b2.omega - template.cavity.omega).abs() <= drop_threshold * b2.gamma_total() {
        buses.push(b2);
    }
    let config = SystemConfig {
        cavity: template.cavity,
        magnon: template.magnon,
        buses,
        g_ct: template.g_ct,
        g_mt: g_mt_of_phase(model, phi_deg),
        port_model: template.port_model,
    };
    Ok(config.validate()?)
}
