//! Time-domain response to a pulsed drive.
//!
//! The state x = [a, m, t1, (t2)] obeys ẋ = −iHx + κ·a_in(t) with H from
//! [`dynamics_matrix`]. In the rotating frame at the carrier ω_L every
//! amplitude is written as X(t)·e^{−iω_L t}, so X obeys
//! Ẋ = −i(H − ω_L)X + κ·A·e(t) with the slow pulse envelope e(t). Traces
//! produced in that frame hold the slow envelopes X; lab-frame traces hold the
//! full oscillating amplitudes. Moduli agree between the two.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SystemConfig;
use crate::spectral::{dynamics_matrix, port_vector};
use crate::sweep::DB_FLOOR;
use crate::units::mhz_to_rad_ns;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Default RK4 step in the rotating frame, ns.
pub const DEFAULT_DT_ROTATING_NS: f64 = 0.01;
/// Default RK4 step in the lab frame, ns.
pub const DEFAULT_DT_LAB_NS: f64 = 0.001;
/// Default spacing of output samples, ns.
pub const DEFAULT_OUTPUT_INTERVAL_NS: f64 = 1.63;

/// Condition number of the eigenvector matrix above which the exact
/// propagator switches to a scaling-and-squaring matrix exponential.
const EIGENVECTOR_COND_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("pulse duration must be > 0, got {0} ns")]
    NonPositiveDuration(f64),
    #[error("pulse amplitude must be finite")]
    NonFiniteAmplitude,
    #[error("pulse start must be ≥ 0, got {0} ns")]
    NegativeStart(f64),
    #[error("ramp of {ramp} ns does not fit twice into a {duration} ns pulse")]
    RampTooLong { ramp: f64, duration: f64 },
    #[error("time step must be > 0, got {0} ns")]
    NonPositiveStep(f64),
    #[error("time step {dt} ns exceeds the stability limit {limit} ns for this frame")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("end time {t_end} ns must lie after the pulse end at {pulse_end} ns")]
    EndBeforePulseEnd { t_end: f64, pulse_end: f64 },
    #[error("output interval must be > 0, got {0} ns")]
    NonPositiveInterval(f64),
    #[error("state became non-finite at t = {0} ns")]
    NonFinite(f64),
    #[error("sample times must be non-negative and strictly increasing")]
    BadSampleTimes,
    #[error("exact propagation needs a piecewise-constant pulse (ramp = 0)")]
    RampedPulse,
    #[error("dynamics matrix is singular; no particular solution for a constant drive")]
    SingularMatrix,
    #[error("reference amplitude must be non-zero")]
    ZeroReference,
}

/// Square drive pulse a_in(t) = A·e(t)·e^{−iω_L t}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub duration_ns: f64,
    pub carrier_mhz: f64,
    /// Complex amplitude A in √(photons/ns).
    pub amplitude: Complex64,
    #[serde(default)]
    pub start_ns: f64,
    /// Cosine edge length. Zero gives instantaneous edges.
    #[serde(default)]
    pub ramp_ns: f64,
}

impl PulseSpec {
    pub fn square(duration_ns: f64, carrier_mhz: f64, amplitude: Complex64) -> Self {
        Self {
            duration_ns,
            carrier_mhz,
            amplitude,
            start_ns: 0.0,
            ramp_ns: 0.0,
        }
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }

    pub fn carrier(&self) -> f64 {
        mhz_to_rad_ns(self.carrier_mhz)
    }

    pub fn check(&self) -> Result<(), DynamicsError> {
        if !(self.duration_ns > 0.0) {
            return Err(DynamicsError::NonPositiveDuration(self.duration_ns));
        }
        if !(self.amplitude.re.is_finite() && self.amplitude.im.is_finite()) {
            return Err(DynamicsError::NonFiniteAmplitude);
        }
        if !(self.start_ns >= 0.0) {
            return Err(DynamicsError::NegativeStart(self.start_ns));
        }
        if !(self.ramp_ns >= 0.0) || 2.0 * self.ramp_ns > self.duration_ns {
            return Err(DynamicsError::RampTooLong {
                ramp: self.ramp_ns,
                duration: self.duration_ns,
            });
        }
        Ok(())
    }

    /// Envelope e(t) in [0, 1].
    pub fn envelope(&self, t: f64) -> f64 {
        self.piece_at(t).eval(self, t)
    }

    /// Slow drive A·e(t) as seen in the rotating frame.
    pub fn envelope_amplitude(&self, t: f64) -> Complex64 {
        self.amplitude * self.envelope(t)
    }

    /// Lab-frame drive a_in(t).
    pub fn lab_amplitude(&self, t: f64) -> Complex64 {
        self.envelope_amplitude(t) * Complex64::from_polar(1.0, -self.carrier() * t)
    }

    fn piece_at(&self, t: f64) -> Piece {
        let s = self.start_ns;
        let e = self.end_ns();
        let r = self.ramp_ns;
        if t < s || t >= e {
            Piece::Off
        } else if t < s + r {
            Piece::RampUp
        } else if t < e - r {
            Piece::On
        } else {
            Piece::RampDown
        }
    }

    /// Times at which the envelope or its derivative jumps.
    fn edges(&self) -> Vec<f64> {
        let mut v = vec![
            self.start_ns,
            self.start_ns + self.ramp_ns,
            self.end_ns() - self.ramp_ns,
            self.end_ns(),
        ];
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Off,
    RampUp,
    On,
    RampDown,
}

impl Piece {
    fn eval(self, p: &PulseSpec, t: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Piece::Off => 0.0,
            Piece::On => 1.0,
            Piece::RampUp => 0.5 * (1.0 - (PI * (t - p.start_ns) / p.ramp_ns).cos()),
            Piece::RampDown => 0.5 * (1.0 - (PI * (p.end_ns() - t) / p.ramp_ns).cos()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    #[default]
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    /// Eigendecomposition of the dynamics matrix.
    ExactEigen,
    /// Scaling-and-squaring exponential, used when the eigenvectors are
    /// ill-conditioned.
    ExactExpm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub method: Method,
    pub frame: Frame,
    pub carrier_mhz: f64,
    /// Requested step; `None` for exact propagation.
    pub dt_ns: Option<f64>,
    /// Largest step actually taken after aligning the grid to pulse edges.
    pub max_step_ns: Option<f64>,
    pub steps: usize,
    /// Condition number of the eigenvector matrix (exact propagation only).
    pub eigenvector_cond: Option<f64>,
}

/// Sampled complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAmplitudeTrace {
    pub times: Vec<f64>,
    /// State vector [a, m, t1, (t2)] at each sample.
    pub states: Vec<Vec<Complex64>>,
    pub a_in: Vec<Complex64>,
    pub a_out: Vec<Complex64>,
    pub meta: TraceMeta,
}

impl ComplexAmplitudeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Amplitude series of one mode (0 = a, 1 = m, 2 = t1, 3 = t2).
    pub fn mode(&self, k: usize) -> Vec<Complex64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    /// Re-expresses a trace in another frame. Only moduli are unaffected.
    pub fn into_frame(mut self, frame: Frame) -> Self {
        if frame == self.meta.frame {
            return self;
        }
        let wl = mhz_to_rad_ns(self.meta.carrier_mhz);
        let sign = if frame == Frame::Lab { -1.0 } else { 1.0 };
        for (k, &t) in self.times.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, sign * wl * t);
            self.states[k].iter_mut().for_each(|x| *x *= rot);
            self.a_in[k] *= rot;
            self.a_out[k] *= rot;
        }
        self.meta.frame = frame;
        self
    }

    /// Writes `t_ns, a_re, a_im, m_re, m_im, t1_re, t1_im [, t2_re, t2_im],
    /// aout_re, aout_im, aout_db`, dB relative to `a_in_ref`.
    pub fn write_csv<W: Write>(&self, mut w: W, a_in_ref: Complex64) -> io::Result<()> {
        let db = to_db(self, a_in_ref, DB_FLOOR).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        let names = ["a", "m", "t1", "t2"];
        write!(w, "t_ns")?;
        for name in &names[..self.dim()] {
            write!(w, ",{name}_re,{name}_im")?;
        }
        writeln!(w, ",aout_re,aout_im,aout_db")?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for x in &self.states[k] {
                write!(w, ",{},{}", x.re, x.im)?;
            }
            writeln!(w, ",{},{},{}", self.a_out[k].re, self.a_out[k].im, db[k])?;
        }
        Ok(())
    }
}

/// 20·log10(|a_out|/|a_in_ref|) with zeros mapped to `floor_db`.
pub fn to_db(trace: &ComplexAmplitudeTrace, a_in_ref: Complex64, floor_db: f64) -> Result<Vec<f64>, DynamicsError> {
    let r = a_in_ref.norm();
    if !(r > 0.0) {
        return Err(DynamicsError::ZeroReference);
    }
    Ok(trace
        .a_out
        .iter()
        .map(|z| {
            let x = z.norm() / r;
            if x > 0.0 {
                (20.0 * x.log10()).max(floor_db)
            } else {
                floor_db
            }
        })
        .collect())
}

/// Evenly spaced sample times 0, Δ, 2Δ, … up to and including `t_end`
/// (within a relative 1e-9).
pub fn output_times(t_end: f64, interval: f64) -> Result<Vec<f64>, DynamicsError> {
    if !(interval > 0.0) {
        return Err(DynamicsError::NonPositiveInterval(interval));
    }
    let n = (t_end / interval * (1.0 + 1e-9)).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * interval).collect())
}

/// Upper bound on the RK4 step for the given frame.
///
/// The lab frame uses dt ≤ 1/(20·f_max) with f_max the highest mode frequency.
/// The rotating frame applies the same rule to the Gershgorin bound on the
/// spectrum of H − ω_L.
pub fn max_stable_step(config: &SystemConfig, carrier: f64, frame: Frame) -> f64 {
    use std::f64::consts::TAU;
    let rate = match frame {
        Frame::Lab => config.max_omega(),
        Frame::Rotating => {
            let h = shifted_matrix(config, carrier);
            (0..h.nrows())
                .map(|i| h.row(i).iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        }
    };
    if rate > 0.0 {
        TAU / (20.0 * rate)
    } else {
        f64::INFINITY
    }
}

fn shifted_matrix(config: &SystemConfig, carrier: f64) -> DMatrix<Complex64> {
    let mut h = dynamics_matrix(config);
    for i in 0..h.nrows() {
        h[(i, i)] -= carrier;
    }
    h
}

/// Dense RHS f(t, x) = M·x + κ·drive(t) on stack arrays.
struct Rhs {
    n: usize,
    m: [[Complex64; 4]; 4],
    kappa: [Complex64; 4],
}

type State = [Complex64; 4];

impl Rhs {
    fn new(config: &SystemConfig, shift: f64) -> Self {
        let h = shifted_matrix(config, shift);
        let k = port_vector(config);
        let n = h.nrows();
        let mut m = [[Complex64::default(); 4]; 4];
        let mut kappa = [Complex64::default(); 4];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = -I * h[(i, j)];
            }
            kappa[i] = k[i];
        }
        Self { n, m, kappa }
    }

    #[inline]
    fn eval(&self, x: &State, drive: Complex64) -> State {
        let mut out = [Complex64::default(); 4];
        for i in 0..self.n {
            let mut acc = self.kappa[i] * drive;
            for j in 0..self.n {
                acc += self.m[i][j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    fn a_out(&self, x: &State, a_in: Complex64) -> Complex64 {
        a_in - (0..self.n).map(|i| self.kappa[i] * x[i]).sum::<Complex64>()
    }
}

fn axpy(x: &State, h: f64, k: &State, n: usize) -> State {
    let mut out = *x;
    for i in 0..n {
        out[i] += k[i] * h;
    }
    out
}

/// Drive as a function of time within one grid segment, so that stage
/// evaluations at a segment's closing edge stay on the correct side of a jump.
struct Drive<'a> {
    pulse: &'a PulseSpec,
    frame: Frame,
    carrier: f64,
}

impl Drive<'_> {
    fn at(&self, piece: Piece, t: f64) -> Complex64 {
        let env = self.pulse.amplitude * piece.eval(self.pulse, t);
        match self.frame {
            Frame::Rotating => env,
            Frame::Lab => env * Complex64::from_polar(1.0, -self.carrier * t),
        }
    }
}

fn rk4_step(rhs: &Rhs, drive: &Drive, piece: Piece, t: f64, x: &State, h: f64) -> State {
    let n = rhs.n;
    let d0 = drive.at(piece, t);
    let dm = drive.at(piece, t + 0.5 * h);
    let d1 = drive.at(piece, t + h);
    let k1 = rhs.eval(x, d0);
    let k2 = rhs.eval(&axpy(x, 0.5 * h, &k1, n), dm);
    let k3 = rhs.eval(&axpy(x, 0.5 * h, &k2, n), dm);
    let k4 = rhs.eval(&axpy(x, h, &k3, n), d1);
    let mut out = *x;
    for i in 0..n {
        out[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
    }
    out
}

/// Classical RK4 integration from rest at t = 0 to `t_end`, sampled every
/// `output_interval` ns.
///
/// The step grid is uniform between pulse edges, with each segment split into
/// the fewest equal steps not exceeding `dt`. Output samples between grid
/// points come from a partial RK4 step off the preceding grid point, so they
/// carry the same order of accuracy and do not perturb the trajectory.
pub fn integrate(
    config: &SystemConfig,
    pulse: &PulseSpec,
    t_end: f64,
    dt: f64,
    frame: Frame,
    output_interval: f64,
) -> Result<ComplexAmplitudeTrace, DynamicsError> {
    pulse.check()?;
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    if !(t_end > pulse.end_ns()) {
        return Err(DynamicsError::EndBeforePulseEnd {
            t_end,
            pulse_end: pulse.end_ns(),
        });
    }
    let carrier = pulse.carrier();
    let limit = max_stable_step(config, carrier, frame);
    if dt > limit {
        return Err(DynamicsError::StepTooLarge { dt, limit });
    }
    let samples = output_times(t_end, output_interval)?;

    let shift = if frame == Frame::Rotating { carrier } else { 0.0 };
    let rhs = Rhs::new(config, shift);
    let drive = Drive { pulse, frame, carrier };
    let n = rhs.n;

    let mut bounds = vec![0.0];
    bounds.extend(pulse.edges().into_iter().filter(|&e| e > 0.0 && e < t_end));
    bounds.push(t_end);
    bounds.dedup();

    let mut x: State = [Complex64::default(); 4];
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let mut a_in = Vec::with_capacity(samples.len());
    let mut a_out = Vec::with_capacity(samples.len());
    let mut next = 0;
    let mut steps = 0;
    let mut max_step: f64 = 0.0;

    let mut record = |ts: f64, xs: &State, piece: Piece| {
        let din = drive.at(piece, ts);
        times.push(ts);
        states.push(xs[..n].to_vec());
        a_in.push(din);
        a_out.push(rhs.a_out(xs, din));
    };

    for seg in bounds.windows(2) {
        let (t0, t1) = (seg[0], seg[1]);
        let piece = pulse.piece_at(0.5 * (t0 + t1));
        let len = t1 - t0;
        let ratio = len / dt;
        let count = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round().max(1.0) as usize
        } else {
            ratio.ceil() as usize
        };
        let h = len / count as f64;
        max_step = max_step.max(h);
        for k in 0..count {
            let t = t0 + k as f64 * h;
            let t_next = if k + 1 == count { t1 } else { t0 + (k + 1) as f64 * h };
            while next < samples.len() && samples[next] < t_next {
                let ts = samples[next];
                let xs = if ts == t {
                    x
                } else {
                    rk4_step(&rhs, &drive, piece, t, &x, ts - t)
                };
                record(ts, &xs, if ts == t { pulse.piece_at(ts) } else { piece });
                next += 1;
            }
            x = rk4_step(&rhs, &drive, piece, t, &x, t_next - t);
            steps += 1;
            if x[..n].iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(DynamicsError::NonFinite(t_next));
            }
        }
    }
    while next < samples.len() {
        record(samples[next], &x, pulse.piece_at(samples[next]));
        next += 1;
    }

    Ok(ComplexAmplitudeTrace {
        times,
        states,
        a_in,
        a_out,
        meta: TraceMeta {
            method: Method::Rk4,
            frame,
            carrier_mhz: pulse.carrier_mhz,
            dt_ns: Some(dt),
            max_step_ns: Some(max_step),
            steps,
            eigenvector_cond: None,
        },
    })
}

/// Propagator e^{Mτ} for a fixed matrix M.
enum Propagator {
    Eigen {
        v: DMatrix<Complex64>,
        v_inv: DMatrix<Complex64>,
        lambda: Vec<Complex64>,
    },
    Expm(DMatrix<Complex64>),
}

impl Propagator {
    fn new(m: DMatrix<Complex64>) -> (Self, Option<f64>) {
        match eigen_decompose(&m) {
            Some((v, lambda)) => {
                let sv = v.singular_values();
                let cond = sv.max() / sv.min();
                if cond.is_finite() && cond < EIGENVECTOR_COND_LIMIT {
                    if let Some(v_inv) = v.clone().try_inverse() {
                        return (Propagator::Eigen { v, v_inv, lambda }, Some(cond));
                    }
                }
                (Propagator::Expm(m), Some(cond))
            }
            None => (Propagator::Expm(m), None),
        }
    }

    fn apply(&self, tau: f64, x: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            Propagator::Eigen { v, v_inv, lambda } => {
                let mut y = v_inv * x;
                for (yi, l) in y.iter_mut().zip(lambda) {
                    *yi *= (l * tau).exp();
                }
                v * y
            }
            Propagator::Expm(m) => (m * Complex64::from(tau)).exp() * x,
        }
    }
}

/// Eigenvalues and right eigenvectors from the complex Schur form M = QTQ*.
/// Returns `None` when two diagonal entries of T coincide to roundoff, where
/// back substitution breaks down.
fn eigen_decompose(m: &DMatrix<Complex64>) -> Option<(DMatrix<Complex64>, Vec<Complex64>)> {
    let n = m.nrows();
    let (q, t) = nalgebra::linalg::Schur::new(m.clone()).unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lk = t[(k, k)];
        y[(k, k)] = Complex64::from(1.0);
        for j in (0..k).rev() {
            let d = t[(j, j)] - lk;
            if d.norm() <= 1e-14 * scale {
                return None;
            }
            let s: Complex64 = (j + 1..=k).map(|l| t[(j, l)] * y[(l, k)]).sum();
            y[(j, k)] = -s / d;
        }
        let norm = y.column(k).norm();
        y.column_mut(k).unscale_mut(norm);
    }
    let lambda = (0..n).map(|i| t[(i, i)]).collect();
    Some((q * y, lambda))
}

/// Exact response at the given sample times, for a pulse with instantaneous
/// edges.
///
/// In the rotating frame the drive is piecewise constant, so on each segment
/// X(t) = X_p + e^{M(t−t₀)}(X(t₀) − X_p) with M = −i(H − ω_L) and
/// X_p = −M⁻¹κA. Each sample is propagated from its segment's start, so
/// roundoff does not accumulate across samples. The trace is returned in
/// `frame`.
pub fn exact_oracle(
    config: &SystemConfig,
    pulse: &PulseSpec,
    sample_times: &[f64],
    frame: Frame,
) -> Result<ComplexAmplitudeTrace, DynamicsError> {
    pulse.check()?;
    if pulse.ramp_ns != 0.0 {
        return Err(DynamicsError::RampedPulse);
    }
    if sample_times.first().is_some_and(|&t| t < 0.0) || sample_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::BadSampleTimes);
    }
    let carrier = pulse.carrier();
    let h = shifted_matrix(config, carrier);
    let m = h.map(|z| -I * z);
    let kappa = port_vector(config);
    let n = m.nrows();

    let lu = m.clone().lu();
    let xp_on = lu
        .solve(&(-(&kappa * pulse.amplitude)))
        .ok_or(DynamicsError::SingularMatrix)?;
    let (prop, cond) = Propagator::new(m);
    let method = match prop {
        Propagator::Eigen { .. } => Method::ExactEigen,
        Propagator::Expm(_) => Method::ExactExpm,
    };

    let zero = DVector::<Complex64>::zeros(n);
    // Segment starts with the state there and the particular solution valid after.
    let (s, e) = (pulse.start_ns, pulse.end_ns());
    let x_at_end = prop.apply(pulse.duration_ns, &(&zero - &xp_on)) + &xp_on;
    let segment = |t: f64| -> (f64, DVector<Complex64>, DVector<Complex64>, Complex64) {
        if t < s {
            (0.0, zero.clone(), zero.clone(), Complex64::default())
        } else if t < e {
            (s, zero.clone(), xp_on.clone(), pulse.amplitude)
        } else {
            (e, x_at_end.clone(), zero.clone(), Complex64::default())
        }
    };

    let mut states = Vec::with_capacity(sample_times.len());
    let mut a_in = Vec::with_capacity(sample_times.len());
    let mut a_out = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let (t0, x0, xp, din) = segment(t);
        let x = prop.apply(t - t0, &(x0 - &xp)) + xp;
        let out = din - kappa.dot(&x);
        let rot = match frame {
            Frame::Rotating => Complex64::from(1.0),
            Frame::Lab => Complex64::from_polar(1.0, -carrier * t),
        };
        states.push(x.iter().map(|z| z * rot).collect());
        a_in.push(din * rot);
        a_out.push(out * rot);
    }

    Ok(ComplexAmplitudeTrace {
        times: sample_times.to_vec(),
        states,
        a_in,
        a_out,
        meta: TraceMeta {
            method,
            frame,
            carrier_mhz: pulse.carrier_mhz,
            dt_ns: None,
            max_step_ns: None,
            steps: 0,
            eigenvector_cond: cond,
        },
    })
}

/// Largest deviation between two traces over all states and a_out, divided by
/// the largest modulus found in `reference`.
pub fn max_relative_deviation(trace: &ComplexAmplitudeTrace, reference: &ComplexAmplitudeTrace) -> f64 {
    let mut peak: f64 = 0.0;
    let mut dev: f64 = 0.0;
    for k in 0..reference.len() {
        for (x, r) in trace.states[k].iter().zip(&reference.states[k]) {
            peak = peak.max(r.norm());
            dev = dev.max((x - r).norm());
        }
        peak = peak.max(reference.a_out[k].norm());
        dev = dev.max((trace.a_out[k] - reference.a_out[k]).norm());
    }
    if peak > 0.0 {
        dev / peak
    } else {
        dev
    }
}
