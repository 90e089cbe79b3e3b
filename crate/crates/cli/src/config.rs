//! Run configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use remag_core::dynamics::{PulseSpec, DEFAULT_OUTPUT_INTERVAL_NS};
use remag_core::model::{amplitude_from_power, BusSpec, ModeSpec, PortModel, SystemConfig, SystemConfigFile};
use remag_core::phase::{MicrostripGeometry, PhaseModel, PhaseModelSpec, DEFAULT_BUS_DROP_THRESHOLD};
use remag_core::units::mhz_to_rad_ns;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const DEFAULT_GYRO_MHZ_PER_T: f64 = 28_000.0;
pub const DEFAULT_PULSE_NS: f64 = 16.0;
pub const DEFAULT_T_END_NS: f64 = 500.0;

/// Contents of a `--config` file. System fields use the same names and units
/// as [`SystemConfigFile`]; everything else is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cavity: ModeSpec,
    pub magnon: ModeSpec,
    pub buses: Vec<BusSpec>,
    pub g_ct_mhz: f64,
    pub g_mt_mhz: f64,
    #[serde(default)]
    pub port_model: PortModel,
    #[serde(default = "default_gyro")]
    pub gyro_mhz_per_t: f64,
    /// Phase laws for `phasemap`. Defaults to the measured laws.
    #[serde(default)]
    pub phase_model: Option<PhaseModelSpec>,
    /// Phase-shifter setting the explicit bus frequencies correspond to.
    #[serde(default)]
    pub phi_deg: Option<f64>,
    #[serde(default = "default_drop")]
    pub bus_drop_threshold: f64,
    #[serde(default)]
    pub microstrip: Option<MicrostripGeometry>,
    #[serde(default)]
    pub pulse: Option<PulseConfig>,
    #[serde(default)]
    pub ringdown: Option<RingdownConfig>,
    /// Sweep axes used when none are given on the command line, in the
    /// `axis=start:stop:count` form.
    #[serde(default)]
    pub sweeps: Vec<String>,
    /// Free-form annotations. Copied to the manifest, never interpreted.
    #[serde(default, rename = "_provenance", skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    #[serde(default = "default_pulse")]
    pub duration_ns: f64,
    #[serde(default)]
    pub start_ns: f64,
    /// Defaults to the cavity frequency.
    #[serde(default)]
    pub carrier_mhz: Option<f64>,
    /// Complex amplitude [re, im] in √(photons/ns).
    #[serde(default)]
    pub amplitude: Option<[f64; 2]>,
    /// Sets |a_in| from the input power; overrides `amplitude`.
    #[serde(default)]
    pub power_dbm: Option<f64>,
    #[serde(default)]
    pub ramp_ns: f64,
    #[serde(default, rename = "_provenance", skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingdownConfig {
    #[serde(default = "default_t_end")]
    pub t_end_ns: f64,
    #[serde(default = "default_interval")]
    pub output_interval_ns: f64,
    /// Replaces `g_mt_mhz` for time-domain jobs.
    #[serde(default)]
    pub g_mt_mhz: Option<f64>,
    /// Beat analysis window after the pulse. Defaults to the rest of the
    /// trace.
    #[serde(default)]
    pub beat_window_ns: Option<f64>,
    #[serde(default, rename = "_provenance", skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, Value>,
}

impl Default for RingdownConfig {
    fn default() -> Self {
        Self {
            t_end_ns: DEFAULT_T_END_NS,
            output_interval_ns: DEFAULT_OUTPUT_INTERVAL_NS,
            g_mt_mhz: None,
            beat_window_ns: None,
            provenance: BTreeMap::new(),
        }
    }
}

fn default_gyro() -> f64 {
    DEFAULT_GYRO_MHZ_PER_T
}
fn default_drop() -> f64 {
    DEFAULT_BUS_DROP_THRESHOLD
}
fn default_pulse() -> f64 {
    DEFAULT_PULSE_NS
}
fn default_t_end() -> f64 {
    DEFAULT_T_END_NS
}
fn default_interval() -> f64 {
    DEFAULT_OUTPUT_INTERVAL_NS
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn system_file(&self) -> SystemConfigFile {
        SystemConfigFile {
            cavity: self.cavity,
            magnon: self.magnon,
            buses: self.buses.clone(),
            g_ct_mhz: self.g_ct_mhz,
            g_mt_mhz: self.g_mt_mhz,
            port_model: self.port_model,
        }
    }

    pub fn system(&self) -> Result<SystemConfig, CliError> {
        self.system_file()
            .resolve()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// System used by time-domain jobs: the ringdown g_mt override applied.
    pub fn ringdown_system(&self) -> Result<SystemConfig, CliError> {
        let mut cfg = self.system()?;
        if let Some(g) = self.ringdown.as_ref().and_then(|r| r.g_mt_mhz) {
            cfg.g_mt = mhz_to_rad_ns(g);
            cfg = cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn phase_model(&self) -> PhaseModel {
        self.phase_model
            .as_ref()
            .map(PhaseModel::from)
            .unwrap_or_else(PhaseModel::measured)
    }

    pub fn microstrip_geometry(&self) -> MicrostripGeometry {
        self.microstrip.unwrap_or_else(MicrostripGeometry::fr4_board)
    }

    pub fn ringdown_settings(&self) -> RingdownConfig {
        self.ringdown.clone().unwrap_or_default()
    }

    /// Resolved drive pulse.
    pub fn pulse_spec(&self) -> Result<PulseSpec, CliError> {
        let p = self.pulse.clone().unwrap_or(PulseConfig {
            duration_ns: DEFAULT_PULSE_NS,
            start_ns: 0.0,
            carrier_mhz: None,
            amplitude: None,
            power_dbm: None,
            ramp_ns: 0.0,
            provenance: BTreeMap::new(),
        });
        let carrier = p.carrier_mhz.unwrap_or(self.cavity.f_mhz);
        let amplitude = match (p.power_dbm, p.amplitude) {
            (Some(dbm), _) => Complex64::new(
                amplitude_from_power(dbm, carrier).map_err(|e| CliError::Config(e.to_string()))?,
                0.0,
            ),
            (None, Some([re, im])) => Complex64::new(re, im),
            (None, None) => Complex64::new(1.0, 0.0),
        };
        let spec = PulseSpec {
            duration_ns: p.duration_ns,
            carrier_mhz: carrier,
            amplitude,
            start_ns: p.start_ns,
            ramp_ns: p.ramp_ns,
        };
        spec.check().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}
