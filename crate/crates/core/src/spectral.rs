//! Frequency-domain solver.
//!
//! Mode ordering everywhere is `[a, m, t1, (t2)]`. The dynamics are written
//! as ẋ = −i·H·x + κ·a_in, where H is the non-Hermitian frequency matrix
//! returned by [`dynamics_matrix`] and κ holds √γ_ext on the bus rows. A
//! steady state at probe ω solves (H − ω)·x = −i·κ·a_in and the port field is
//! a_out = a_in − Σ_j √γ_ext,j·t_j.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::model::{PortModel, SystemConfig};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("linear system is singular at ω = {omega} rad/ns")]
    Singular { omega: f64 },
    #[error("operation requires a single-bus configuration, got {0} buses")]
    RequiresSingleBus(usize),
}

/// Steady-state complex amplitudes at one probe frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    /// Probe angular frequency, rad/ns.
    pub omega: f64,
    pub a_in: Complex64,
    pub a: Complex64,
    pub m: Complex64,
    pub t1: Complex64,
    pub t2: Option<Complex64>,
}

impl SteadyState {
    fn from_vector(omega: f64, a_in: Complex64, x: &DVector<Complex64>) -> Self {
        Self {
            omega,
            a_in,
            a: x[0],
            m: x[1],
            t1: x[2],
            t2: (x.len() > 3).then(|| x[3]),
        }
    }

    pub fn as_vector(&self) -> DVector<Complex64> {
        let mut v = vec![self.a, self.m, self.t1];
        v.extend(self.t2);
        DVector::from_vec(v)
    }

    pub fn buses(&self) -> impl Iterator<Item = Complex64> + '_ {
        std::iter::once(self.t1).chain(self.t2)
    }

    /// Reflected field a_in − Σ √γ_ext,j·t_j.
    pub fn a_out(&self, config: &SystemConfig) -> Complex64 {
        self.a_in
            - config
                .buses
                .iter()
                .zip(self.buses())
                .map(|(b, t)| b.gamma_ext.sqrt() * t)
                .sum::<Complex64>()
    }

    /// Largest absolute residual over the steady-state equations.
    pub fn residual(&self, config: &SystemConfig) -> f64 {
        let h = dynamics_matrix(config);
        let k = port_vector(config);
        let x = self.as_vector();
        let n = h.nrows();
        let lhs = (h - DMatrix::<Complex64>::identity(n, n) * Complex64::from(self.omega)) * x;
        let rhs = k * (-I * self.a_in);
        (lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// The frequency matrix H with ẋ = −iHx + κ·a_in.
///
/// Diagonal entries are ω_n − iγ_n/2. Off-diagonals couple each bus to the
/// cavity (g_ct) and magnon (g_mt). With [`PortModel::Shared`] and two buses,
/// the bus–bus entries carry the shared-port cross damping −i√(γe₁γe₂)/2.
pub fn dynamics_matrix(config: &SystemConfig) -> DMatrix<Complex64> {
    let n = config.dim();
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    h[(0, 0)] = Complex64::new(config.cavity.omega, -config.cavity.gamma / 2.0);
    h[(1, 1)] = Complex64::new(config.magnon.omega, -config.magnon.gamma / 2.0);
    for (j, bus) in config.buses.iter().enumerate() {
        let k = 2 + j;
        h[(k, k)] = Complex64::new(bus.omega, -bus.gamma_total() / 2.0);
        h[(0, k)] = config.g_ct.into();
        h[(k, 0)] = config.g_ct.into();
        h[(1, k)] = config.g_mt.into();
        h[(k, 1)] = config.g_mt.into();
    }
    if n == 4 && config.port_model == PortModel::Shared {
        let cross = Complex64::new(
            0.0,
            -0.5 * (config.buses[0].gamma_ext * config.buses[1].gamma_ext).sqrt(),
        );
        h[(2, 3)] = cross;
        h[(3, 2)] = cross;
    }
    h
}

/// Port coupling vector κ: √γ_ext on each bus row, zero elsewhere.
pub fn port_vector(config: &SystemConfig) -> DVector<Complex64> {
    let mut k = DVector::<Complex64>::zeros(config.dim());
    for (j, bus) in config.buses.iter().enumerate() {
        k[2 + j] = bus.gamma_ext.sqrt().into();
    }
    k
}

/// Solves the steady state by dense LU with partial pivoting.
pub fn steady_state(config: &SystemConfig, omega: f64, a_in: Complex64) -> Result<SteadyState, SpectralError> {
    let n = config.dim();
    let m = dynamics_matrix(config) - DMatrix::<Complex64>::identity(n, n) * Complex64::from(omega);
    let rhs = port_vector(config) * (-I * a_in);
    let x = m.lu().solve(&rhs).ok_or(SpectralError::Singular { omega })?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectralError::Singular { omega });
    }
    Ok(SteadyState::from_vector(omega, a_in, &x))
}

/// Response of the cavity and magnon, as seen by a bus:
/// Σ(ω) = g_ct²/(iΔ_c + γ_c/2) + g_mt²/(iΔ_m + γ_m/2).
fn bus_self_energy(config: &SystemConfig, omega: f64) -> Complex64 {
    let lorentz = |w: f64, g: f64| Complex64::new(g / 2.0, w - omega);
    config.g_ct * config.g_ct / lorentz(config.cavity.omega, config.cavity.gamma)
        + config.g_mt * config.g_mt / lorentz(config.magnon.omega, config.magnon.gamma)
}

/// Closed-form reflection coefficient.
///
/// One bus: S11 = 1 − γ_ext / (iΔ_t + γ_t/2 + Σ).
///
/// Two buses, independent decay: S11 = 1 − R(D) with D_j = iΔ_tj + γ_tj/2.
/// For equal bus rates this is the usual four-mode expression
/// 1 − γ_ext·(D₁ + D₂)/(D₁D₂ + (D₁ + D₂)Σ).
///
/// Two buses, shared port: S11 = (1 − R(E)/2)/(1 + R(E)/2) with
/// E_j = iΔ_tj + γ_int,j/2.
///
/// Here R(X) = C − Σ·A²/(1 + Σ·B) with A = Σ√γe_j/X_j, B = Σ1/X_j,
/// C = Σγe_j/X_j.
pub fn s11_closed_form(config: &SystemConfig, omega: f64) -> Complex64 {
    let sigma = bus_self_energy(config, omega);
    if let [bus] = config.buses.as_slice() {
        let denom = Complex64::new(bus.gamma_total() / 2.0, bus.omega - omega) + sigma;
        return Complex64::from(1.0) - bus.gamma_ext / denom;
    }
    let r = |loss: &dyn Fn(&crate::model::BusParams) -> f64| {
        let (mut a, mut b, mut c) = (Complex64::from(0.0), Complex64::from(0.0), Complex64::from(0.0));
        for bus in &config.buses {
            let x = Complex64::new(loss(bus) / 2.0, bus.omega - omega);
            a += bus.gamma_ext.sqrt() / x;
            b += 1.0 / x;
            c += bus.gamma_ext / x;
        }
        c - sigma * a * a / (1.0 + sigma * b)
    };
    match config.port_model {
        PortModel::Independent => Complex64::from(1.0) - r(&|b| b.gamma_total()),
        PortModel::Shared => {
            let r = r(&|b| b.gamma_int);
            (1.0 - r / 2.0) / (1.0 + r / 2.0)
        }
    }
}

/// S11 from the linear solve and the input–output relation.
pub fn s11_from_solve(config: &SystemConfig, omega: f64) -> Result<Complex64, SpectralError> {
    let one = Complex64::from(1.0);
    Ok(steady_state(config, omega, one)?.a_out(config))
}

/// Reflection coefficient at probe `omega` (rad/ns).
///
/// Uses the closed form; in debug builds every call is cross-checked against
/// the linear solve.
pub fn s11(config: &SystemConfig, omega: f64) -> Result<Complex64, SpectralError> {
    let closed = s11_closed_form(config, omega);
    if !(closed.re.is_finite() && closed.im.is_finite()) {
        return s11_from_solve(config, omega);
    }
    #[cfg(debug_assertions)]
    if let Ok(solved) = s11_from_solve(config, omega) {
        let scale = closed.norm().max(1.0);
        debug_assert!(
            (solved - closed).norm() <= 1e-8 * scale,
            "S11 closed form {closed} disagrees with linear solve {solved} at ω = {omega}"
        );
    }
    Ok(closed)
}

/// Cavity and magnon amplitudes from the bus-eliminated 2×2 system
///
/// ```text
/// [ z_c    g_eff ] [a]   √γ_ext        [g_ct]
/// [ g_eff  z_m   ] [m] = ----------- · [g_mt] · a_in
///                        iΔ_t + γ_t/2
/// ```
///
/// with z_n = −Δ_n + iγ_n/2 + g_nt²/(Δ_t − iγ_t/2). Exact, not an
/// approximation: it must agree with [`steady_state`].
pub fn reduced_two_mode(
    config: &SystemConfig,
    omega: f64,
    a_in: Complex64,
) -> Result<(Complex64, Complex64), SpectralError> {
    let bus = single_bus(config)?;
    let bus_denom = Complex64::new(bus.omega - omega, -bus.gamma_total() / 2.0);
    let z = |w: f64, g: f64, gn: f64| Complex64::new(omega - w, g / 2.0) + gn * gn / bus_denom;
    let zc = z(config.cavity.omega, config.cavity.gamma, config.g_ct);
    let zm = z(config.magnon.omega, config.magnon.gamma, config.g_mt);
    let g_eff = config.g_ct * config.g_mt / bus_denom;
    let drive = bus.gamma_ext.sqrt() * a_in / Complex64::new(bus.gamma_total() / 2.0, bus.omega - omega);
    let (ra, rm) = (drive * config.g_ct, drive * config.g_mt);

    let det = zc * zm - g_eff * g_eff;
    if det.norm() == 0.0 || !det.re.is_finite() || !det.im.is_finite() {
        return Err(SpectralError::Singular { omega });
    }
    Ok(((zm * ra - g_eff * rm) / det, (zc * rm - g_eff * ra) / det))
}

/// Bus-mediated cavity–magnon coupling at one probe frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCoupling {
    /// g_ct·g_mt/(Δ_t − iγ_t/2), rad/ns.
    pub g_eff: Complex64,
    /// Coherent (real) part, rad/ns.
    pub g_coh: f64,
    /// Dissipative part, rad/ns.
    pub gamma_diss: f64,
}

pub fn effective_coupling(config: &SystemConfig, omega: f64) -> Result<EffectiveCoupling, SpectralError> {
    let bus = single_bus(config)?;
    let dt = bus.omega - omega;
    let half = bus.gamma_total() / 2.0;
    let gg = config.g_ct * config.g_mt;
    let norm = dt * dt + half * half;
    let g_coh = gg * dt / norm;
    let gamma_diss = gg * half / norm;
    Ok(EffectiveCoupling {
        g_eff: Complex64::new(g_coh, gamma_diss),
        g_coh,
        gamma_diss,
    })
}

/// Classification of the hybrid pair by the square-root argument
/// (Δ/2 − iδγ/4)² − Γ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridRegime {
    /// Re(arg) > 0: two distinct resonance frequencies.
    Repulsion,
    /// Re(arg) ≈ 0 within 1e-9·Γ².
    ExceptionalPoint,
    /// Re(arg) < 0: real parts attract.
    Attraction,
}

/// Eigenfrequencies of the constant-coefficient effective Hamiltonian
/// obtained after eliminating a strongly damped bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridEigenpair {
    pub omega_plus: Complex64,
    pub omega_minus: Complex64,
    /// γ_c + 2g_ct²/γ_t.
    pub gamma_c_prime: f64,
    /// γ_m + 2g_mt²/γ_t.
    pub gamma_m_prime: f64,
    /// Dissipative coupling 2g_ct·g_mt/γ_t.
    #[serde(rename = "gamma_coupling")]
    pub gamma: f64,
    /// (Δ/2 − iδγ/4)² − Γ². Both eigenvalues coalesce only when this is 0,
    /// which for real Γ requires Δ·δγ = 0.
    pub sqrt_arg: Complex64,
    pub regime: HybridRegime,
    /// False when γ_t < 10·max(γ_c, γ_m, g_ct, g_mt), i.e. outside the
    /// strongly damped limit the effective Hamiltonian relies on.
    pub strongly_damped: bool,
}

impl HybridEigenpair {
    /// True when both the real and imaginary parts of the square-root
    /// argument vanish within `tol`.
    pub fn is_exceptional_point(&self, tol: f64) -> bool {
        self.sqrt_arg.norm() <= tol
    }
}

/// H_eff = [[ω_c − iγ_c′/2, iΓ], [iΓ, ω_m − iγ_m′/2]].
pub fn effective_hamiltonian(config: &SystemConfig) -> Result<[[Complex64; 2]; 2], SpectralError> {
    let (gc, gm, gamma) = renormalized_rates(config)?;
    Ok([
        [
            Complex64::new(config.cavity.omega, -gc / 2.0),
            Complex64::new(0.0, gamma),
        ],
        [
            Complex64::new(0.0, gamma),
            Complex64::new(config.magnon.omega, -gm / 2.0),
        ],
    ])
}

fn renormalized_rates(config: &SystemConfig) -> Result<(f64, f64, f64), SpectralError> {
    let gt = single_bus(config)?.gamma_total();
    Ok((
        config.cavity.gamma + 2.0 * config.g_ct * config.g_ct / gt,
        config.magnon.gamma + 2.0 * config.g_mt * config.g_mt / gt,
        2.0 * config.g_ct * config.g_mt / gt,
    ))
}

/// Analytic hybrid eigenfrequencies
/// ω± = ω̄ − iγ̄ ± √((Δ/2 − iδγ/4)² − Γ²),
/// with ω̄ = (ω_c + ω_m)/2, γ̄ = (γ_c′ + γ_m′)/4, Δ = ω_c − ω_m and
/// δγ = γ_c′ − γ_m′.
pub fn hybrid_eigenfrequencies(config: &SystemConfig) -> Result<HybridEigenpair, SpectralError> {
    let bus = single_bus(config)?;
    let (gc, gm, gamma) = renormalized_rates(config)?;
    let mean = Complex64::new((config.cavity.omega + config.magnon.omega) / 2.0, -(gc + gm) / 4.0);
    let detuning = config.cavity.omega - config.magnon.omega;
    let dgamma = gc - gm;
    let half = Complex64::new(detuning / 2.0, -dgamma / 4.0);
    // + 0.0 turns a −0.0 imaginary part into +0.0 so the principal root
    // does not flip sign across the branch cut.
    let arg = half * half - gamma * gamma;
    let arg = Complex64::new(arg.re, arg.im + 0.0);
    let root = arg.sqrt();

    let tie = 1e-9 * gamma * gamma;
    let regime = if arg.re > tie {
        HybridRegime::Repulsion
    } else if arg.re < -tie {
        HybridRegime::Attraction
    } else {
        HybridRegime::ExceptionalPoint
    };
    let largest = [config.cavity.gamma, config.magnon.gamma, config.g_ct, config.g_mt]
        .into_iter()
        .fold(0.0, f64::max);

    Ok(HybridEigenpair {
        omega_plus: mean + root,
        omega_minus: mean - root,
        gamma_c_prime: gc,
        gamma_m_prime: gm,
        gamma,
        sqrt_arg: arg,
        regime,
        strongly_damped: bus.gamma_total() >= 10.0 * largest,
    })
}

/// All eigenvalues of the full frequency matrix H, sorted by real part then
/// imaginary part. Each is a complex angular frequency ω − iγ/2.
pub fn full_numeric_eigenvalues(config: &SystemConfig) -> Vec<Complex64> {
    let h = dynamics_matrix(config);
    let schur = nalgebra::linalg::Schur::new(h);
    let (_, t) = schur.unpack();
    let mut eig: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    eig
}

/// |γ_c′ − γ_m′|/(γ_c′ + γ_m′); zero when the rotating-frame effective
/// Hamiltonian is anti-PT symmetric.
pub fn anti_pt_residual(config: &SystemConfig) -> Result<f64, SpectralError> {
    let (gc, gm, _) = renormalized_rates(config)?;
    let sum = gc + gm;
    Ok(if sum == 0.0 { 0.0 } else { (gc - gm).abs() / sum })
}

/// Magnon–bus coupling that balances the renormalised dampings
/// (γ_m + 2g_mt²/γ_t = γ_c + 2g_ct²/γ_t), if one exists.
pub fn anti_pt_coupling(config: &SystemConfig) -> Result<Option<f64>, SpectralError> {
    let gt = single_bus(config)?.gamma_total();
    let sq = (config.cavity.gamma - config.magnon.gamma) * gt / 2.0 + config.g_ct * config.g_ct;
    Ok((sq >= 0.0).then(|| sq.sqrt()))
}

fn single_bus(config: &SystemConfig) -> Result<&crate::model::BusParams, SpectralError> {
    match config.buses.as_slice() {
        [bus] => Ok(bus),
        other => Err(SpectralError::RequiresSingleBus(other.len())),
    }
}
