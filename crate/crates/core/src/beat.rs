//! Beat (envelope modulation) frequency of a ringdown.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::ComplexAmplitudeTrace;

/// Confidence below which a beat peak is not considered significant.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

/// Fewest post-pulse samples accepted for analysis.
const MIN_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeatError {
    #[error("no samples after the pulse end at {0} ns")]
    NoPostPulseSamples(f64),
    #[error("only {0} post-pulse samples in the window, need {MIN_SAMPLES}")]
    TooFewSamples(usize),
    #[error("analysis window must be > 0, got {0} ns")]
    NonPositiveWindow(f64),
    #[error("sample spacing must be uniform")]
    NonUniform,
    #[error("reflected amplitude vanishes at t = {0} ns")]
    ZeroAmplitude(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeatEstimate {
    /// Dominant modulation frequency of |a_out|, MHz.
    pub frequency_mhz: f64,
    /// Fraction of the detrended log-envelope variance explained by a single
    /// sinusoid at `frequency_mhz`, in [0, 1].
    pub confidence: f64,
    /// Peak-to-peak modulation of |a_out| at that frequency, dB.
    pub modulation_db: f64,
    /// Bin spacing 1/T of the analysis window, MHz.
    pub resolution_mhz: f64,
    /// Lowest frequency searched (two cycles per window), MHz.
    pub f_min_mhz: f64,
    pub window_start_ns: f64,
    pub window_end_ns: f64,
    pub samples: usize,
}

impl BeatEstimate {
    pub fn is_significant(&self, threshold: f64) -> bool {
        self.confidence >= threshold
    }
}

/// Estimates the dominant modulation frequency of |a_out| after the pulse.
///
/// The window starts at the first sample strictly after `pulse_end_ns` and
/// spans at most `window_ns`. The log envelope ln|a_out| is stripped of a
/// quadratic trend, Hann-weighted, zero padded and transformed; the strongest
/// bin above two cycles per window is refined by parabolic interpolation on
/// the log magnitude.
pub fn beat_frequency(
    trace: &ComplexAmplitudeTrace,
    pulse_end_ns: f64,
    window_ns: f64,
) -> Result<BeatEstimate, BeatError> {
    if !(window_ns > 0.0) {
        return Err(BeatError::NonPositiveWindow(window_ns));
    }
    let first = trace
        .times
        .iter()
        .position(|&t| t > pulse_end_ns)
        .ok_or(BeatError::NoPostPulseSamples(pulse_end_ns))?;
    let t0 = trace.times[first];
    let idx: Vec<usize> = (first..trace.len())
        .take_while(|&k| trace.times[k] - t0 <= window_ns * (1.0 + 1e-12))
        .collect();
    let n = idx.len();
    if n < MIN_SAMPLES {
        return Err(BeatError::TooFewSamples(n));
    }
    let times: Vec<f64> = idx.iter().map(|&k| trace.times[k] - t0).collect();
    let dt = times[1];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(BeatError::NonUniform);
    }
    let mut y = Vec::with_capacity(n);
    for &k in &idx {
        let a = trace.a_out[k].norm();
        if !(a > 0.0) {
            return Err(BeatError::ZeroAmplitude(trace.times[k]));
        }
        y.push(a.ln());
    }

    let trend = least_squares(&times, &y, |t| vec![1.0, t, t * t]);
    let r: Vec<f64> = y.iter().zip(&times).map(|(v, &t)| v - poly(&trend, t)).collect();

    let span = dt * n as f64;
    let f_min = 2.0 / span;
    let f_nyq = 0.5 / dt;
    let nfft = (8 * n).next_power_of_two().max(4096);
    let mut buf: Vec<Complex64> = r
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos();
            Complex64::new(v * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex64::default());
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let df = 1.0 / (dt * nfft as f64);
    let lo = (f_min / df).ceil() as usize;
    let hi = ((f_nyq / df).floor() as usize).min(nfft / 2);
    let mag = |k: usize| buf[k].norm().max(f64::MIN_POSITIVE).ln();
    let peak = (lo.max(1)..=hi.saturating_sub(1))
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .unwrap_or(lo);
    let shift = if peak > 0 && peak < hi {
        let (l, c, u) = (mag(peak - 1), mag(peak), mag(peak + 1));
        let denom = l - 2.0 * c + u;
        if denom < 0.0 {
            (0.5 * (l - u) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let f = (peak as f64 + shift) * df;

    let omega = std::f64::consts::TAU * f;
    let coef = least_squares(&times, &r, |t| vec![1.0, (omega * t).cos(), (omega * t).sin()]);
    let mean = r.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = r.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = r
        .iter()
        .zip(&times)
        .map(|(v, &t)| v - coef[0] - coef[1] * (omega * t).cos() - coef[2] * (omega * t).sin())
        .map(|e| e * e)
        .sum();
    let confidence = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let amp = coef[1].hypot(coef[2]);
    let modulation_db = 2.0 * amp * 20.0 / std::f64::consts::LN_10;

    Ok(BeatEstimate {
        frequency_mhz: f * 1e3,
        confidence,
        modulation_db,
        resolution_mhz: 1e3 / span,
        f_min_mhz: f_min * 1e3,
        window_start_ns: t0,
        window_end_ns: t0 + times[n - 1],
        samples: n,
    })
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
}

fn least_squares(x: &[f64], y: &[f64], basis: impl Fn(f64) -> Vec<f64>) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&t| basis(t)).collect();
    let p = rows[0].len();
    let a = DMatrix::from_fn(x.len(), p, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    a.svd(true, true)
        .solve(&b, 1e-12)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; p])
}
