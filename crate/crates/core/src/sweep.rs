//! Two-dimensional S11 maps over a swept parameter and the probe frequency.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{field_to_magnon_freq, SystemConfig};
use crate::phase::{build_config_at_phase, PhaseError, PhaseModel, SystemTemplate};
use crate::spectral::{s11, SpectralError};
use crate::units::mhz_to_rad_ns;

/// dB value written for |S11| = 0.
pub const DB_FLOOR: f64 = -160.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{axis} axis must be strictly increasing")]
    NotMonotone { axis: &'static str },
    #[error("{axis} axis is empty")]
    Empty { axis: &'static str },
    #[error("at sweep value {sweep_value}, probe {probe_f_mhz} MHz: {source}")]
    Point {
        sweep_value: f64,
        probe_f_mhz: f64,
        source: SpectralError,
    },
    #[error("at sweep value {sweep_value}: {source}")]
    Config { sweep_value: f64, source: PhaseError },
}

/// Parameter varied along the sweep axis.
#[derive(Debug, Clone)]
pub enum SweepKind {
    /// Magnon frequency in MHz.
    MagnonFreq,
    /// Bias field in tesla, mapped through ω_m = 2π·gyro·B.
    Field { gyro_mhz_per_t: f64 },
    /// Phase-shifter setting in degrees.
    Phase {
        template: SystemTemplate,
        model: PhaseModel,
        drop_threshold: f64,
    },
}

impl SweepKind {
    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepKind::MagnonFreq => "fm_mhz",
            SweepKind::Field { .. } => "b_t",
            SweepKind::Phase { .. } => "phi_deg",
        }
    }

    /// System config at one sweep coordinate.
    pub fn config_at(&self, base: &SystemConfig, value: f64) -> Result<SystemConfig, PhaseError> {
        match self {
            SweepKind::MagnonFreq => {
                let mut c = base.clone();
                c.magnon.omega = mhz_to_rad_ns(value);
                Ok(c.validate()?)
            }
            SweepKind::Field { gyro_mhz_per_t } => {
                let mut c = base.clone();
                c.magnon.omega = field_to_magnon_freq(value, *gyro_mhz_per_t)?;
                Ok(c.validate()?)
            }
            SweepKind::Phase {
                template,
                model,
                drop_threshold,
            } => build_config_at_phase(template, model, value, *drop_threshold),
        }
    }
}

/// S11 over (sweep value × probe frequency).
///
/// `s11` is row-major with one row per sweep value: entry `[i * n_probe + j]`
/// belongs to `sweep_values[i]` and `probe_f_mhz[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub axis: &'static str,
    pub sweep_values: Vec<f64>,
    pub probe_f_mhz: Vec<f64>,
    pub s11: Vec<Complex64>,
}

impl SpectrumGrid {
    pub fn n_sweep(&self) -> usize {
        self.sweep_values.len()
    }

    pub fn n_probe(&self) -> usize {
        self.probe_f_mhz.len()
    }

    pub fn at(&self, sweep: usize, probe: usize) -> Complex64 {
        self.s11[sweep * self.n_probe() + probe]
    }

    /// S11 along the probe axis at one sweep value.
    pub fn row(&self, sweep: usize) -> &[Complex64] {
        let n = self.n_probe();
        &self.s11[sweep * n..(sweep + 1) * n]
    }

    /// |S11| in dB, same layout as `s11`.
    pub fn db(&self) -> Vec<f64> {
        self.s11.iter().map(|z| amplitude_db(z.norm())).collect()
    }

    /// CSV with a `# axis=<name>` line, a column header, then one line per
    /// grid point (sweep outer, probe inner).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# axis={}", self.axis)?;
        writeln!(w, "sweep_value,probe_f_mhz,s11_re,s11_im,s11_abs_db")?;
        for (i, &sv) in self.sweep_values.iter().enumerate() {
            for (j, &f) in self.probe_f_mhz.iter().enumerate() {
                let z = self.at(i, j);
                writeln!(w, "{},{},{},{},{}", sv, f, z.re, z.im, amplitude_db(z.norm()))?;
            }
        }
        Ok(())
    }
}

/// 20·log10(x) with zero mapped to [`DB_FLOOR`].
pub fn amplitude_db(x: f64) -> f64 {
    if x > 0.0 {
        (20.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

fn check_axis(axis: &'static str, v: &[f64]) -> Result<(), SweepError> {
    if v.is_empty() {
        return Err(SweepError::Empty { axis });
    }
    if v.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(SweepError::NotMonotone { axis });
    }
    Ok(())
}

/// Evaluates S11 at every grid point. Rows are computed in parallel on the
/// current rayon pool; the result does not depend on scheduling.
pub fn sweep_spectrum(
    base: &SystemConfig,
    kind: &SweepKind,
    sweep_values: &[f64],
    probe_f_mhz: &[f64],
) -> Result<SpectrumGrid, SweepError> {
    check_axis("sweep", sweep_values)?;
    check_axis("probe", probe_f_mhz)?;
    let rows: Vec<Vec<Complex64>> = sweep_values
        .par_iter()
        .map(|&sv| {
            let cfg = kind.config_at(base, sv).map_err(|source| SweepError::Config {
                sweep_value: sv,
                source,
            })?;
            probe_f_mhz
                .iter()
                .map(|&f| {
                    s11(&cfg, mhz_to_rad_ns(f)).map_err(|source| SweepError::Point {
                        sweep_value: sv,
                        probe_f_mhz: f,
                        source,
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(SpectrumGrid {
        axis: kind.axis_name(),
        sweep_values: sweep_values.to_vec(),
        probe_f_mhz: probe_f_mhz.to_vec(),
        s11: rows.into_iter().flatten().collect(),
    })
}

/// `count` evenly spaced points from `start` to `stop` inclusive. A single
/// point sits at `start`.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        n => (0..n)
            .map(|k| {
                if k == n - 1 {
                    stop
                } else {
                    start + (stop - start) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Probe frequency (MHz) of the deepest |S11| along one row.
pub fn row_minimum(grid: &SpectrumGrid, sweep: usize) -> f64 {
    let row = grid.row(sweep);
    let (j, _) = row
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .expect("grid rows are non-empty");
    grid.probe_f_mhz[j]
}

/// Sweep value converted to an angular magnon frequency, when the axis is a
/// magnon axis.
pub fn magnon_omega(kind: &SweepKind, value: f64) -> Option<f64> {
    match kind {
        SweepKind::MagnonFreq => Some(mhz_to_rad_ns(value)),
        SweepKind::Field { gyro_mhz_per_t } => field_to_magnon_freq(value, *gyro_mhz_per_t).ok(),
        SweepKind::Phase { .. } => None,
    }
}
