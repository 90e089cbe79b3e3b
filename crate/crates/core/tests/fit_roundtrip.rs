use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use remag_core::fit::{extract_q, load_trace, S11Trace};
use remag_core::model::{q_to_gamma, BusParams, ModeParams, SystemConfig};
use remag_core::spectral::s11;
use remag_core::sweep::{linspace, sweep_spectrum, SweepKind};
use remag_core::units::{mhz_to_rad_ns, rad_ns_to_mhz};

const QL: f64 = 98.6;
const QI: f64 = 547.4;
const QC: f64 = 120.3;

fn bare_bus() -> (SystemConfig, f64) {
    let f0 = QL * 50.8;
    let r = q_to_gamma(f0, QL, QI, QC).unwrap();
    let bus = BusParams::from_mhz(f0, rad_ns_to_mhz(r.gamma_int), rad_ns_to_mhz(r.gamma_ext));
    let cfg = SystemConfig::three_mode(
        ModeParams::from_mhz(4800.0, 1.68),
        ModeParams::from_mhz(4700.0, 2.0),
        bus,
        0.0,
        0.0,
    );
    (cfg, f0)
}

fn synthesize(noise: f64, seed: u64) -> (S11Trace, f64) {
    let (cfg, f0) = bare_bus();
    let f = linspace(f0 - 200.0, f0 + 200.0, 801);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = f
        .iter()
        .map(|&x| {
            let clean = s11(&cfg, mhz_to_rad_ns(x)).unwrap();
            if noise > 0.0 {
                clean + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                clean
            }
        })
        .collect();
    (S11Trace::new(f, s).unwrap(), f0)
}

#[test]
fn noiseless_round_trip() {
    let (trace, f0) = synthesize(0.0, 0);
    let r = extract_q(&trace).unwrap();
    assert!((r.f0_mhz / f0 - 1.0).abs() < 1e-6);
    assert!((r.q_loaded / QL - 1.0).abs() < 0.01, "{r:?}");
    assert!((r.q_coupling / QC - 1.0).abs() < 0.01, "{r:?}");
    assert!((r.external_fraction - 0.82).abs() < 0.02);
    assert!(r.overcoupled);
    assert!(r.reciprocal_residual.abs() < 1e-3 / r.q_loaded);
}

#[test]
fn noisy_round_trip() {
    for seed in 0..5 {
        let (trace, _) = synthesize(0.01, seed);
        let r = extract_q(&trace).unwrap();
        assert!((r.q_loaded / QL - 1.0).abs() < 0.05, "seed {seed}: {r:?}");
        assert!((r.q_coupling / QC - 1.0).abs() < 0.05, "seed {seed}: {r:?}");
        assert!((r.external_fraction - 0.82).abs() < 0.02, "seed {seed}: {r:?}");
    }
}

#[test]
fn spectrum_csv_loads_losslessly() {
    let (cfg, f0) = bare_bus();
    let probe = linspace(f0 - 150.0, f0 + 150.0, 64);
    let grid = sweep_spectrum(&cfg, &SweepKind::MagnonFreq, &[4700.0], &probe).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.csv");
    grid.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let trace = load_trace(&path).unwrap();
    assert_eq!(trace.f_mhz, probe);
    for (a, b) in trace.s11.iter().zip(&grid.s11) {
        assert!((a - b).norm() <= 1e-9);
    }
    let r = extract_q(&trace).unwrap();
    assert!((r.q_loaded / QL - 1.0).abs() < 0.01);
}

#[test]
fn multi_row_grid_is_not_a_trace() {
    let (cfg, f0) = bare_bus();
    let probe = linspace(f0 - 150.0, f0 + 150.0, 20);
    let grid = sweep_spectrum(&cfg, &SweepKind::MagnonFreq, &[4700.0, 4710.0], &probe).unwrap();
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(remag_core::fit::parse_trace(&text).is_err());
}
