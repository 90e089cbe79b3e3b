//! Resonance and quality-factor extraction from a reflection trace.
//!
//! The model is S(f) = A·e^{−i2π(f−f_ref)τ}·(1 − κ_e/(i(f0−f) + κ_t/2)) with
//! linear rates κ = γ/2π in MHz, a complex prefactor A and an electrical delay
//! τ. A is eliminated by linear least squares at every evaluation, so the
//! simplex search only sees (f0, κ_t, κ_e/κ_t, τ).

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub const MIN_TRACE_POINTS: usize = 16;
pub const MAX_ITERATIONS: u64 = 500;
pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("trace needs at least {MIN_TRACE_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("frequency and S11 arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("frequencies must be strictly increasing (violated at point {0})")]
    NotIncreasing(usize),
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
    #[error("points are degenerate (coincident or collinear); no circle through them")]
    Degenerate,
    #[error("trace shows no resonance dip")]
    NoResonance,
    #[error("span {span_mhz} MHz covers fewer than 3 linewidths of {linewidth_mhz} MHz")]
    SpanTooNarrow { span_mhz: f64, linewidth_mhz: f64 },
    #[error("refinement did not converge within {0} iterations")]
    NonConvergence(u64),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Complex S11 sampled on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct S11Trace {
    pub f_mhz: Vec<f64>,
    pub s11: Vec<Complex64>,
}

impl S11Trace {
    pub fn new(f_mhz: Vec<f64>, s11: Vec<Complex64>) -> Result<Self, FitError> {
        if f_mhz.len() != s11.len() {
            return Err(FitError::LengthMismatch(f_mhz.len(), s11.len()));
        }
        if f_mhz.len() < MIN_TRACE_POINTS {
            return Err(FitError::TooFewPoints(f_mhz.len()));
        }
        for (k, (f, s)) in f_mhz.iter().zip(&s11).enumerate() {
            if !(f.is_finite() && s.re.is_finite() && s.im.is_finite()) {
                return Err(FitError::NonFinite(k));
            }
        }
        if let Some(k) = f_mhz.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FitError::NotIncreasing(k + 1));
        }
        Ok(Self { f_mhz, s11 })
    }

    pub fn len(&self) -> usize {
        self.f_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_mhz.is_empty()
    }

    /// Multiplies every sample by a fixed complex factor.
    pub fn rotated(&self, factor: Complex64) -> Self {
        Self {
            f_mhz: self.f_mhz.clone(),
            s11: self.s11.iter().map(|s| s * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
    /// RMS of |p − center| − radius.
    pub rms: f64,
}

impl Circle {
    pub fn encloses_origin(&self) -> bool {
        self.center.norm() < self.radius
    }
}

/// Algebraic (Kåsa) least-squares circle through the points.
pub fn fit_circle(points: &[Complex64]) -> Result<Circle, FitError> {
    if points.len() < 3 {
        return Err(FitError::Degenerate);
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let scale = points.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(FitError::Degenerate);
    }
    let q: Vec<Complex64> = points.iter().map(|p| (p - mean) / scale).collect();
    let a = DMatrix::from_fn(q.len(), 3, |i, j| match j {
        0 => q[i].re,
        1 => q[i].im,
        _ => 1.0,
    });
    let b = DVector::from_iterator(q.len(), q.iter().map(|p| -p.norm_sqr()));
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-10 * sv.max() {
        return Err(FitError::Degenerate);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| FitError::Degenerate)?;
    let c = Complex64::new(-x[0] / 2.0, -x[1] / 2.0);
    let r2 = c.norm_sqr() - x[2];
    if !(r2 > 0.0) {
        return Err(FitError::Degenerate);
    }
    let center = mean + c * scale;
    let radius = r2.sqrt() * scale;
    let rms = (points
        .iter()
        .map(|p| ((p - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(Circle { center, radius, rms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub f0_mhz: f64,
    pub q_loaded: f64,
    pub q_internal: f64,
    pub q_coupling: f64,
    /// Linear rates γ/2π, MHz.
    pub gamma_t_mhz: f64,
    pub gamma_int_mhz: f64,
    pub gamma_ext_mhz: f64,
    /// γ_ext/γ_t.
    pub external_fraction: f64,
    pub circle_center: Complex64,
    pub circle_radius: f64,
    pub circle_rms: f64,
    /// RMS of the complex model residual, S11 units.
    pub residual_rms: f64,
    /// 1/Q_L − 1/Q_i − 1/Q_c.
    pub reciprocal_residual: f64,
    pub prefactor: Complex64,
    pub delay_ns: f64,
    /// γ_ext > γ_int, judged by whether the circle encloses the origin.
    pub overcoupled: bool,
    pub iterations: u64,
}

#[derive(Clone)]
struct Problem<'a> {
    trace: &'a S11Trace,
    f_ref: f64,
    f0: f64,
    width: f64,
    norm: f64,
}

struct Params {
    f0: f64,
    kappa_t: f64,
    kappa_e: f64,
    tau: f64,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Problem<'_> {
    fn params(&self, u: &[f64]) -> Params {
        let kappa_t = self.width * u[1].exp();
        Params {
            f0: self.f0 + u[0] * self.width,
            kappa_t,
            kappa_e: kappa_t * logistic(u[2]),
            tau: u[3] / (std::f64::consts::TAU * 1e-3 * self.width),
        }
    }

    fn shape(&self, p: &Params, f: f64) -> Complex64 {
        let delay = Complex64::from_polar(1.0, -std::f64::consts::TAU * 1e-3 * (f - self.f_ref) * p.tau);
        delay * (1.0 - p.kappa_e / (I * (p.f0 - f) + p.kappa_t / 2.0))
    }

    /// Optimal prefactor and the residual sum of squares.
    fn solve(&self, p: &Params) -> (Complex64, f64) {
        let g: Vec<Complex64> = self.trace.f_mhz.iter().map(|&f| self.shape(p, f)).collect();
        let num: Complex64 = g.iter().zip(&self.trace.s11).map(|(g, s)| g.conj() * s).sum();
        let den: f64 = g.iter().map(|g| g.norm_sqr()).sum();
        let a = num / den;
        let rss = g.iter().zip(&self.trace.s11).map(|(g, s)| (s - a * g).norm_sqr()).sum();
        (a, rss)
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> Result<f64, argmin::core::Error> {
        let (_, rss) = self.solve(&self.params(u));
        Ok(if rss.is_finite() { rss / self.norm } else { f64::MAX })
    }
}

/// Fits the single-resonance reflection model and converts the rates to
/// quality factors Q_x = f0/γ_x.
///
/// Seeds come from the data: the delay from the phase slope of the two wings,
/// then an algebraic circle fit of the delay-corrected trace. The resonance is
/// the sample farthest from the off-resonant point, and the linewidth spans
/// the two points a quarter turn either side of it on the circle.
pub fn extract_q(trace: &S11Trace) -> Result<FitResult, FitError> {
    let n = trace.len();
    let f_ref = 0.5 * (trace.f_mhz[0] + trace.f_mhz[n - 1]);
    let span = trace.f_mhz[n - 1] - trace.f_mhz[0];
    let tau0 = wing_delay(trace, f_ref);
    let undelayed: Vec<Complex64> = trace
        .f_mhz
        .iter()
        .zip(&trace.s11)
        .map(|(&f, &s)| s * Complex64::from_polar(1.0, std::f64::consts::TAU * 1e-3 * (f - f_ref) * tau0))
        .collect();
    let circle = fit_circle(&undelayed)?;

    let far = (undelayed[0] + undelayed[n - 1]) / 2.0;
    let scale = undelayed.iter().map(|s| s.norm()).fold(0.0, f64::max);
    if !(circle.radius > 1e-6 * scale) || circle.radius > 1e3 * scale {
        return Err(FitError::NoResonance);
    }
    let k0 = (0..n)
        .max_by(|&a, &b| (undelayed[a] - far).norm().total_cmp(&(undelayed[b] - far).norm()))
        .expect("trace is non-empty");

    let angle = unwrapped_angles(&undelayed, circle.center);
    let quarter = std::f64::consts::FRAC_PI_2;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = k0;
        for k in range {
            let d = (angle[k] - angle[k0]).abs();
            if d >= quarter {
                let d0 = (angle[prev] - angle[k0]).abs();
                let w = (quarter - d0) / (d - d0);
                return Some(trace.f_mhz[prev] + w * (trace.f_mhz[k] - trace.f_mhz[prev]));
            }
            prev = k;
        }
        None
    };
    let lo = crossing(&mut (0..k0).rev());
    let hi = crossing(&mut (k0 + 1..n));
    let (lo, hi) = match (lo, hi) {
        (Some(l), Some(h)) => (l, h),
        _ => {
            return Err(FitError::SpanTooNarrow {
                span_mhz: span,
                linewidth_mhz: f64::NAN,
            })
        }
    };
    let kappa_t = hi - lo;
    if span < 3.0 * kappa_t {
        return Err(FitError::SpanTooNarrow {
            span_mhz: span,
            linewidth_mhz: kappa_t,
        });
    }

    let overcoupled = circle.encloses_origin();
    let p_inf = 2.0 * circle.center - undelayed[k0];
    let ratio = (circle.radius / p_inf.norm().max(f64::MIN_POSITIVE)).clamp(0.02, 0.98);
    let ratio = if overcoupled { ratio.max(0.55) } else { ratio.min(0.45) };

    let problem = Problem {
        trace,
        f_ref,
        f0: trace.f_mhz[k0],
        width: kappa_t,
        norm: trace
            .s11
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE),
    };
    let tau_scale = std::f64::consts::TAU * 1e-3 * kappa_t;
    let start = vec![0.0, 0.0, logit(ratio), tau0 * tau_scale];
    let (best, iterations, converged) = nelder_mead(&problem, start, 0.1, MAX_ITERATIONS, TOLERANCE);
    if !converged {
        return Err(FitError::NonConvergence(iterations));
    }
    // Polish from the converged point with a small simplex on the remaining
    // iteration budget.
    let (best, more, _) = nelder_mead(&problem, best, 1e-3, MAX_ITERATIONS - iterations, TOLERANCE * TOLERANCE);

    let p = problem.params(&best);
    let (a, rss) = problem.solve(&p);
    let f0 = p.f0;
    let kappa_i = p.kappa_t - p.kappa_e;
    let q_loaded = f0 / p.kappa_t;
    let q_internal = f0 / kappa_i;
    let q_coupling = f0 / p.kappa_e;
    Ok(FitResult {
        f0_mhz: f0,
        q_loaded,
        q_internal,
        q_coupling,
        gamma_t_mhz: p.kappa_t,
        gamma_int_mhz: kappa_i,
        gamma_ext_mhz: p.kappa_e,
        external_fraction: p.kappa_e / p.kappa_t,
        circle_center: circle.center,
        circle_radius: circle.radius,
        circle_rms: circle.rms,
        residual_rms: (rss / n as f64).sqrt(),
        reciprocal_residual: 1.0 / q_loaded - 1.0 / q_internal - 1.0 / q_coupling,
        prefactor: a,
        delay_ns: p.tau,
        overcoupled,
        iterations: iterations + more,
    })
}

/// Runs the simplex search; returns the best point, iterations used and
/// whether the cost spread fell below `tol` before the cap.
fn nelder_mead(problem: &Problem, start: Vec<f64>, step: f64, cap: u64, tol: f64) -> (Vec<f64>, u64, bool) {
    if cap == 0 {
        return (start, 0, false);
    }
    let simplex: Vec<Vec<f64>> = std::iter::once(start.clone())
        .chain((0..start.len()).map(|j| {
            let mut v = start.clone();
            v[j] += step;
            v
        }))
        .collect();
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(tol)
        .expect("tolerance is positive");
    let Ok(res) = Executor::new(problem.clone(), solver)
        .configure(|s| s.max_iters(cap))
        .run()
    else {
        return (start, cap, false);
    };
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let best = state.get_best_param().cloned().unwrap_or(start);
    (best, state.get_iter(), converged)
}

/// Delay from the common phase slope of the outer fifths of the trace. A
/// 1/(f − f_res) column absorbs the leading phase tail of the resonance.
fn wing_delay(trace: &S11Trace, f_ref: f64) -> f64 {
    let n = trace.len();
    let w = (n / 5).max(3);
    let far = (trace.s11[0] + trace.s11[n - 1]) / 2.0;
    let k_res = (0..n)
        .max_by(|&a, &b| (trace.s11[a] - far).norm().total_cmp(&(trace.s11[b] - far).norm()))
        .expect("trace is non-empty");
    let f_res = trace.f_mhz[k_res];
    let phase: Vec<f64> = unwrap(&trace.s11.iter().map(|s| s.arg()).collect::<Vec<_>>());
    let idx: Vec<usize> = (0..w).chain(n - w..n).filter(|&k| trace.f_mhz[k] != f_res).collect();
    let a = DMatrix::from_fn(idx.len(), 4, |i, j| {
        let f = trace.f_mhz[idx[i]];
        match j {
            0 => f - f_ref,
            1 => f64::from(u8::from(idx[i] < w)),
            2 => f64::from(u8::from(idx[i] >= w)),
            _ => 1.0 / (f - f_res),
        }
    });
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&k| phase[k]));
    match a.svd(true, true).solve(&b, 1e-12) {
        Ok(x) if x[0].is_finite() => -x[0] / (std::f64::consts::TAU * 1e-3),
        _ => 0.0,
    }
}

fn unwrap(phase: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (k, &p) in phase.iter().enumerate() {
        if k > 0 {
            let d = p - phase[k - 1];
            if d > PI {
                offset -= TAU;
            } else if d < -PI {
                offset += TAU;
            }
        }
        out.push(p + offset);
    }
    out
}

fn unwrapped_angles(points: &[Complex64], center: Complex64) -> Vec<f64> {
    unwrap(&points.iter().map(|p| (p - center).arg()).collect::<Vec<_>>())
}

/// Reads a trace from CSV.
///
/// Lines starting with `#` are skipped. An optional header row may name the
/// columns `f_mhz` (or `probe_f_mhz`), `s11_re` and `s11_im`; without a
/// header the first three columns are used in that order.
pub fn load_trace(path: impl AsRef<Path>) -> Result<S11Trace, FitError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_trace(&text)
}

pub fn parse_trace(text: &str) -> Result<S11Trace, FitError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut cols = [0usize, 1, 2];
    let mut f = Vec::new();
    let mut s = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| FitError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if first {
            first = false;
            if rec.get(0).is_some_and(|v| v.parse::<f64>().is_err()) {
                let find = |names: &[&str]| rec.iter().position(|h| names.contains(&h));
                cols = [
                    find(&["f_mhz", "probe_f_mhz"]).ok_or_else(|| missing(line, "f_mhz"))?,
                    find(&["s11_re"]).ok_or_else(|| missing(line, "s11_re"))?,
                    find(&["s11_im"]).ok_or_else(|| missing(line, "s11_im"))?,
                ];
                continue;
            }
        }
        let field = |c: usize| -> Result<f64, FitError> {
            let v = rec.get(c).ok_or_else(|| FitError::Parse {
                line,
                message: format!("missing column {}", c + 1),
            })?;
            v.parse().map_err(|_| FitError::Parse {
                line,
                message: format!("cannot parse {v:?} as a number"),
            })
        };
        f.push(field(cols[0])?);
        s.push(Complex64::new(field(cols[1])?, field(cols[2])?));
    }
    S11Trace::new(f, s)
}

fn missing(line: u64, name: &str) -> FitError {
    FitError::Parse {
        line,
        message: format!("header lacks a {name} column"),
    }
}
