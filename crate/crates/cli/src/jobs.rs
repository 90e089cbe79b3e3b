//! Per-command job execution.

use std::fmt::Write as _;
use std::io::Write as _;

use rayon::prelude::*;
use remag_core::beat::{beat_frequency, BeatError, BeatEstimate, DEFAULT_CONFIDENCE_THRESHOLD};
use remag_core::dynamics::{
    integrate, ComplexAmplitudeTrace, Frame, PulseSpec, DEFAULT_DT_LAB_NS, DEFAULT_DT_ROTATING_NS,
};
use remag_core::fit::{extract_q, load_trace};
use remag_core::model::{SystemConfig, SystemConfigFile};
use remag_core::phase::{microstrip, PhaseModelSpec, SystemTemplate};
use remag_core::spectral::{full_numeric_eigenvalues, hybrid_eigenfrequencies, HybridRegime};
use remag_core::sweep::{sweep_spectrum, SpectrumGrid, SweepKind};
use remag_core::units::rad_ns_to_mhz;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::heatmap::{render_heatmap, Axis, DbMatrix, HeatmapMeta};
use crate::{AxisKind, CliError, Command, JobSpec, SweepAxis};

pub const SPECTRUM_DB_WINDOW: (f64, f64) = (-30.0, 0.0);
pub const RINGDOWN_DB_WINDOW: (f64, f64) = (-80.0, 0.0);
pub const DEFAULT_MICROSTRIP_MHZ: f64 = 5000.0;

pub(crate) struct JobOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
}

struct Axes {
    magnon: Option<SweepAxis>,
    phi: Option<SweepAxis>,
    probe: Option<SweepAxis>,
}

fn accepted_axes(command: Command) -> &'static [AxisKind] {
    match command {
        Command::Spectrum => &[AxisKind::Fm, AxisKind::B, AxisKind::F],
        Command::Phasemap => &[AxisKind::Phi, AxisKind::F],
        Command::Ringdown | Command::Eigen => &[AxisKind::Fm, AxisKind::B],
        Command::Microstrip => &[AxisKind::F],
        Command::Fit => &[],
    }
}

impl Axes {
    /// Command-line sweeps must all apply to the command. Config defaults
    /// that do not apply are skipped.
    fn resolve(job: &JobSpec, cfg: Option<&RunConfig>) -> Result<Self, CliError> {
        let accepted = accepted_axes(job.command);
        let sweeps = if job.sweeps.is_empty() {
            cfg.map(|c| c.sweeps.as_slice())
                .unwrap_or_default()
                .iter()
                .map(|s| s.parse().map_err(CliError::Config))
                .collect::<Result<Vec<SweepAxis>, _>>()?
                .into_iter()
                .filter(|s| accepted.contains(&s.axis))
                .collect()
        } else {
            if let Some(s) = job.sweeps.iter().find(|s| !accepted.contains(&s.axis)) {
                return Err(CliError::Config(format!(
                    "{} does not take a {} axis",
                    job.command,
                    s.axis.column_name()
                )));
            }
            job.sweeps.clone()
        };
        let mut axes = Axes {
            magnon: None,
            phi: None,
            probe: None,
        };
        for s in sweeps {
            let slot = match s.axis {
                AxisKind::Fm | AxisKind::B => &mut axes.magnon,
                AxisKind::Phi => &mut axes.phi,
                AxisKind::F => &mut axes.probe,
            };
            if slot.is_some() {
                return Err(CliError::Config(format!(
                    "sweep axis {} given twice (fm and b share one slot)",
                    s.axis.column_name()
                )));
            }
            *slot = Some(s);
        }
        Ok(axes)
    }

    fn all(&self) -> Vec<SweepAxis> {
        [self.magnon, self.phi, self.probe].into_iter().flatten().collect()
    }

    fn require_probe(&self, command: Command) -> Result<SweepAxis, CliError> {
        self.probe
            .ok_or_else(|| CliError::Config(format!("{command} needs a probe sweep f=start:stop:count")))
    }
}

/// Magnon sweep as (kind, values). Without an axis the config's magnon
/// frequency is the single sweep value.
fn magnon_sweep(axis: Option<SweepAxis>, cfg: &RunConfig) -> (SweepKind, Vec<f64>) {
    match axis {
        Some(a) if a.axis == AxisKind::B => (
            SweepKind::Field {
                gyro_mhz_per_t: cfg.gyro_mhz_per_t,
            },
            a.values(),
        ),
        Some(a) => (SweepKind::MagnonFreq, a.values()),
        None => (SweepKind::MagnonFreq, vec![cfg.magnon.f_mhz]),
    }
}

fn db_window(job: &JobSpec, default: (f64, f64)) -> Result<(f64, f64), CliError> {
    let lo = job.db_min.unwrap_or(default.0);
    let hi = job.db_max.unwrap_or(default.1);
    if !(lo < hi) {
        return Err(CliError::Config(format!("--db-min {lo} must be below --db-max {hi}")));
    }
    Ok((lo, hi))
}

fn load_config(job: &JobSpec) -> Result<Option<RunConfig>, CliError> {
    job.config.as_deref().map(RunConfig::load).transpose()
}

fn require_config(job: &JobSpec, cfg: Option<RunConfig>) -> Result<RunConfig, CliError> {
    cfg.ok_or_else(|| CliError::Config(format!("{} needs --config", job.command)))
}

pub(crate) fn execute(job: &JobSpec) -> Result<JobOutput, CliError> {
    let cfg = load_config(job)?;
    let axes = Axes::resolve(job, cfg.as_ref())?;
    let mut manifest = json!({
        "command": job.command,
        "version": env!("CARGO_PKG_VERSION"),
        "sweeps": axes.all(),
    });
    if let Some(c) = &cfg {
        if !c.provenance.is_empty() {
            manifest["provenance"] = json!(c.provenance);
        }
    }
    let mut out = match job.command {
        Command::Spectrum => spectrum(job, &require_config(job, cfg)?, &axes, &mut manifest)?,
        Command::Phasemap => phasemap(job, &require_config(job, cfg)?, &axes, &mut manifest)?,
        Command::Ringdown => ringdown(job, &require_config(job, cfg)?, &axes, &mut manifest)?,
        Command::Eigen => eigen(&require_config(job, cfg)?, &axes, &mut manifest)?,
        Command::Microstrip => microstrip_job(cfg.as_ref(), &axes, &mut manifest)?,
        Command::Fit => fit(job, &mut manifest)?,
    };
    let names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
    manifest["outputs"] = json!(names);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    out.files.push(("manifest.json".into(), text.into_bytes()));
    Ok(out)
}

fn system_json(cfg: &SystemConfig) -> Value {
    json!(SystemConfigFile::from(cfg))
}

fn json_bytes(v: &impl serde::Serialize) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn grid_outputs(stem: &str, grid: &SpectrumGrid, window: (f64, f64)) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).map_err(|e| CliError::Io(e.to_string()))?;
    // columns are sweep values, top row is the highest probe frequency
    let (w, h) = (grid.n_sweep(), grid.n_probe());
    let db = grid.db();
    let values = (0..h)
        .flat_map(|r| {
            let j = h - 1 - r;
            (0..w).map(move |i| (i, j))
        })
        .map(|(i, j)| db[i * h + j])
        .collect();
    let pgm = render_heatmap(
        &DbMatrix {
            width: w,
            height: h,
            values,
        },
        window.0,
        window.1,
    )?;
    let mut probe_desc = grid.probe_f_mhz.clone();
    probe_desc.reverse();
    let meta = HeatmapMeta {
        width: w,
        height: h,
        db_min: window.0,
        db_max: window.1,
        x_axis: Axis::new(grid.axis, &grid.sweep_values),
        y_axis: Axis::new("probe_f_mhz", &probe_desc),
        value: "s11_abs_db",
    };
    Ok(vec![
        (format!("{stem}.csv"), csv),
        (format!("{stem}.pgm"), pgm),
        (format!("{stem}.pgm.json"), json_bytes(&meta)?),
    ])
}

fn spectrum(job: &JobSpec, cfg: &RunConfig, axes: &Axes, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let probe = axes.require_probe(job.command)?;
    let base = cfg.system()?;
    let (kind, values) = magnon_sweep(axes.magnon, cfg);
    let grid = sweep_spectrum(&base, &kind, &values, &probe.values())?;
    let window = db_window(job, SPECTRUM_DB_WINDOW)?;
    manifest["system"] = system_json(&base);
    manifest["gyro_mhz_per_t"] = json!(cfg.gyro_mhz_per_t);
    manifest["sweep_axis"] = json!(grid.axis);
    manifest["db_window"] = json!([window.0, window.1]);
    let rows = grid.n_sweep();
    Ok(JobOutput {
        files: grid_outputs("spectrum", &grid, window)?,
        summary: vec![format!("spectrum: {rows} x {} points", grid.n_probe())],
    })
}

fn phasemap(job: &JobSpec, cfg: &RunConfig, axes: &Axes, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let probe = axes.require_probe(job.command)?;
    let phi = axes
        .phi
        .ok_or_else(|| CliError::Config("phasemap needs a phi sweep phi=start:stop:count".into()))?;
    let base = cfg.system()?;
    let model = cfg.phase_model();
    let kind = SweepKind::Phase {
        template: SystemTemplate::from_config(&base)?,
        model,
        drop_threshold: cfg.bus_drop_threshold,
    };
    let grid = sweep_spectrum(&base, &kind, &phi.values(), &probe.values())?;
    let window = db_window(job, SPECTRUM_DB_WINDOW)?;
    let mut template = system_json(&base);
    template["buses"] = json!(base
        .buses
        .iter()
        .map(|b| json!({
            "gamma_int_mhz": rad_ns_to_mhz(b.gamma_int),
            "gamma_ext_mhz": rad_ns_to_mhz(b.gamma_ext),
        }))
        .collect::<Vec<_>>());
    if let Some(obj) = template.as_object_mut() {
        obj.remove("g_mt_mhz");
    }
    manifest["template"] = template;
    manifest["phase_model"] = json!(PhaseModelSpec::from(&model));
    manifest["bus_drop_threshold"] = json!(cfg.bus_drop_threshold);
    manifest["db_window"] = json!([window.0, window.1]);
    Ok(JobOutput {
        files: grid_outputs("phasemap", &grid, window)?,
        summary: vec![format!("phasemap: {} x {} points", grid.n_sweep(), grid.n_probe())],
    })
}

/// Time-domain settings shared by every point of a ringdown sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RingdownSettings {
    pub t_end_ns: f64,
    pub output_interval_ns: f64,
    pub dt_ns: f64,
    pub frame: Frame,
    pub beat_window_ns: f64,
}

#[derive(Debug, Clone)]
pub struct RingdownPoint {
    pub sweep_value: f64,
    pub trace: ComplexAmplitudeTrace,
    pub beat: Result<BeatEstimate, BeatError>,
    /// |Re(ω₊ − ω₋)|/2π of the effective two-mode model, MHz. NaN with two
    /// buses.
    pub hybrid_split_mhz: f64,
}

/// Integrates one pulsed ringdown per sweep value, in parallel on the current
/// rayon pool. Results are in sweep order.
pub fn ringdown_sweep(
    base: &SystemConfig,
    kind: &SweepKind,
    values: &[f64],
    pulse: &PulseSpec,
    settings: &RingdownSettings,
) -> Result<Vec<RingdownPoint>, CliError> {
    values
        .par_iter()
        .map(|&v| {
            let cfg = kind.config_at(base, v)?;
            let trace = integrate(
                &cfg,
                pulse,
                settings.t_end_ns,
                settings.dt_ns,
                settings.frame,
                settings.output_interval_ns,
            )?;
            let beat = beat_frequency(&trace, pulse.end_ns(), settings.beat_window_ns);
            let hybrid_split_mhz = if cfg.is_single_bus() {
                let h = hybrid_eigenfrequencies(&cfg)?;
                rad_ns_to_mhz((h.omega_plus - h.omega_minus).re.abs())
            } else {
                f64::NAN
            };
            Ok(RingdownPoint {
                sweep_value: v,
                trace,
                beat,
                hybrid_split_mhz,
            })
        })
        .collect()
}

fn default_dt(frame: Frame) -> f64 {
    match frame {
        Frame::Lab => DEFAULT_DT_LAB_NS,
        Frame::Rotating => DEFAULT_DT_ROTATING_NS,
    }
}

fn ringdown(job: &JobSpec, cfg: &RunConfig, axes: &Axes, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let base = cfg.ringdown_system()?;
    let pulse = cfg.pulse_spec()?;
    let rd = cfg.ringdown_settings();
    let settings = RingdownSettings {
        t_end_ns: rd.t_end_ns,
        output_interval_ns: rd.output_interval_ns,
        dt_ns: job.dt_ps.map_or(default_dt(job.frame), |ps| ps * 1e-3),
        frame: job.frame,
        beat_window_ns: rd.beat_window_ns.unwrap_or(rd.t_end_ns - pulse.end_ns()),
    };
    let (kind, values) = magnon_sweep(axes.magnon, cfg);
    let points = ringdown_sweep(&base, &kind, &values, &pulse, &settings)?;
    let window = db_window(job, RINGDOWN_DB_WINDOW)?;
    let axis = kind.axis_name();

    let mut traces = Vec::new();
    writeln!(traces, "# axis={axis}").map_err(io_err)?;
    for (k, p) in points.iter().enumerate() {
        let mut buf = Vec::new();
        p.trace.write_csv(&mut buf, pulse.amplitude).map_err(io_err)?;
        let text = String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            writeln!(traces, "sweep_value,{header}").map_err(io_err)?;
        }
        for line in lines {
            writeln!(traces, "{},{line}", p.sweep_value).map_err(io_err)?;
        }
    }

    let mut beats = String::new();
    let _ = writeln!(beats, "# axis={axis}");
    let _ = writeln!(
        beats,
        "sweep_value,beat_mhz,confidence,modulation_db,significant,resolution_mhz,hybrid_split_mhz"
    );
    let mut significant = 0;
    for p in &points {
        match &p.beat {
            Ok(b) => {
                let sig = b.is_significant(DEFAULT_CONFIDENCE_THRESHOLD);
                significant += sig as usize;
                let _ = writeln!(
                    beats,
                    "{},{},{},{},{},{},{}",
                    p.sweep_value,
                    b.frequency_mhz,
                    b.confidence,
                    b.modulation_db,
                    sig,
                    b.resolution_mhz,
                    p.hybrid_split_mhz
                );
            }
            Err(_) => {
                let _ = writeln!(beats, "{},NaN,0,NaN,false,NaN,{}", p.sweep_value, p.hybrid_split_mhz);
            }
        }
    }

    let times = points[0].trace.times.clone();
    let (w, h) = (points.len(), times.len());
    let db: Vec<Vec<f64>> = points
        .iter()
        .map(|p| remag_core::dynamics::to_db(&p.trace, pulse.amplitude, remag_core::sweep::DB_FLOOR))
        .collect::<Result<_, _>>()?;
    let values_db = (0..h).flat_map(|r| db.iter().map(move |col| col[r])).collect();
    let pgm = render_heatmap(
        &DbMatrix {
            width: w,
            height: h,
            values: values_db,
        },
        window.0,
        window.1,
    )?;
    let meta = HeatmapMeta {
        width: w,
        height: h,
        db_min: window.0,
        db_max: window.1,
        x_axis: Axis::new(axis, &values),
        y_axis: Axis::new("t_ns", &times),
        value: "aout_db",
    };

    manifest["system"] = system_json(&base);
    manifest["gyro_mhz_per_t"] = json!(cfg.gyro_mhz_per_t);
    manifest["pulse"] = json!(pulse);
    manifest["ringdown"] = json!(settings);
    manifest["beat_confidence_threshold"] = json!(DEFAULT_CONFIDENCE_THRESHOLD);
    manifest["sweep_axis"] = json!(axis);
    manifest["db_window"] = json!([window.0, window.1]);

    Ok(JobOutput {
        files: vec![
            ("ringdown.csv".into(), traces),
            ("beats.csv".into(), beats.into_bytes()),
            ("ringdown.pgm".into(), pgm),
            ("ringdown.pgm.json".into(), json_bytes(&meta)?),
        ],
        summary: vec![format!(
            "ringdown: {w} traces of {h} samples, {significant} with a significant beat"
        )],
    })
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn eigen(cfg: &RunConfig, axes: &Axes, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let base = cfg.system()?;
    let (kind, values) = magnon_sweep(axes.magnon, cfg);
    let rows: Vec<String> = values
        .par_iter()
        .map(|&v| -> Result<String, CliError> {
            let c = kind.config_at(&base, v)?;
            let mut line = format!("{v}");
            if c.is_single_bus() {
                let h = hybrid_eigenfrequencies(&c)?;
                let regime = match h.regime {
                    HybridRegime::Repulsion => "repulsion",
                    HybridRegime::ExceptionalPoint => "exceptional_point",
                    HybridRegime::Attraction => "attraction",
                };
                let _ = write!(
                    line,
                    ",{},{},{},{},{},{},{},{},{}",
                    rad_ns_to_mhz(h.omega_plus.re),
                    rad_ns_to_mhz(h.omega_plus.im),
                    rad_ns_to_mhz(h.omega_minus.re),
                    rad_ns_to_mhz(h.omega_minus.im),
                    rad_ns_to_mhz((h.omega_plus - h.omega_minus).re.abs()),
                    regime,
                    rad_ns_to_mhz(h.gamma_c_prime),
                    rad_ns_to_mhz(h.gamma_m_prime),
                    rad_ns_to_mhz(h.gamma),
                );
            } else {
                line.push_str(",NaN,NaN,NaN,NaN,NaN,,NaN,NaN,NaN");
            }
            for z in full_numeric_eigenvalues(&c) {
                let _ = write!(line, ",{},{}", rad_ns_to_mhz(z.re), rad_ns_to_mhz(z.im));
            }
            Ok(line)
        })
        .collect::<Result<_, _>>()?;
    let mut csv = format!("# axis={}\n", kind.axis_name());
    csv.push_str(
        "sweep_value,plus_re_mhz,plus_im_mhz,minus_re_mhz,minus_im_mhz,split_mhz,regime,\
         gamma_c_prime_mhz,gamma_m_prime_mhz,gamma_coupling_mhz",
    );
    for k in 1..=base.dim() {
        let _ = write!(csv, ",eig{k}_re_mhz,eig{k}_im_mhz");
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    manifest["system"] = system_json(&base);
    manifest["gyro_mhz_per_t"] = json!(cfg.gyro_mhz_per_t);
    manifest["sweep_axis"] = json!(kind.axis_name());
    Ok(JobOutput {
        files: vec![("eigen.csv".into(), csv.into_bytes())],
        summary: vec![format!("eigen: {} points", rows.len())],
    })
}

fn microstrip_job(cfg: Option<&RunConfig>, axes: &Axes, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let geometry = cfg.map_or_else(remag_core::phase::MicrostripGeometry::fr4_board, |c| {
        c.microstrip_geometry()
    });
    let freqs = axes.probe.map_or(vec![DEFAULT_MICROSTRIP_MHZ], |a| a.values());
    let mut csv = String::from("f_mhz,eps_eff,w_eff_mm,lambda_g_mm,node_spacing_mm,node_antinode_spacing_mm\n");
    let mut summary = Vec::new();
    for &f in &freqs {
        let r = microstrip(&geometry, f)?;
        let _ = writeln!(
            csv,
            "{f},{},{},{},{},{}",
            r.eps_eff, r.w_eff_mm, r.lambda_g_mm, r.node_spacing_mm, r.node_antinode_spacing_mm
        );
        summary.push(format!(
            "f = {f} MHz: eps_eff = {:.4}, lambda_g = {:.3} mm",
            r.eps_eff, r.lambda_g_mm
        ));
    }
    manifest["microstrip"] = json!(geometry);
    Ok(JobOutput {
        files: vec![("microstrip.csv".into(), csv.into_bytes())],
        summary,
    })
}

fn fit(job: &JobSpec, manifest: &mut Value) -> Result<JobOutput, CliError> {
    let input = job
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("fit needs --input".into()))?;
    let trace = load_trace(input)?;
    let result = extract_q(&trace)?;
    manifest["input"] = json!(input.display().to_string());
    manifest["points"] = json!(trace.len());
    Ok(JobOutput {
        files: vec![("fit.json".into(), json_bytes(&result)?)],
        summary: vec![format!(
            "f0 = {:.4} MHz, Q_L = {:.2}, Q_i = {:.2}, Q_c = {:.2}, gamma_ext/gamma_t = {:.3}",
            result.f0_mhz, result.q_loaded, result.q_internal, result.q_coupling, result.external_fraction
        )],
    })
}
