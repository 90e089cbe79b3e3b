//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use remag_cli::{ringdown_sweep, run, AxisKind, Command, JobSpec, RingdownSettings, RunConfig, SweepAxis};
use remag_core::beat::DEFAULT_CONFIDENCE_THRESHOLD;
use remag_core::dynamics::{exact_oracle, integrate, max_relative_deviation, Frame, DEFAULT_DT_ROTATING_NS};
use remag_core::fit::{extract_q, S11Trace};
use remag_core::model::{q_to_gamma, BusParams, ModeParams, PortModel, SystemConfig};
use remag_core::phase::{microstrip, MicrostripGeometry};
use remag_core::spectral::{
    effective_coupling, effective_hamiltonian, hybrid_eigenfrequencies, reduced_two_mode, s11, steady_state,
};
use remag_core::sweep::{linspace, sweep_spectrum, SweepKind};
use remag_core::units::{mhz_to_rad_ns, rad_ns_to_mhz};

const QL: f64 = 98.6;
const QI: f64 = 547.4;
const QC: f64 = 120.3;
const KAPPA_T_MHZ: f64 = 50.8;

type Check = Result<String, String>;

fn preset(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn reference_system() -> SystemConfig {
    SystemConfig::three_mode(
        ModeParams::from_mhz(5012.0, 1.68),
        ModeParams::from_mhz(5012.0, 2.0),
        BusParams::from_mhz(5012.0, 9.16, 41.7),
        mhz_to_rad_ns(4.9),
        mhz_to_rad_ns(10.0),
    )
}

fn random_system(rng: &mut ChaCha8Rng, buses: usize) -> SystemConfig {
    let mut mode = || ModeParams::from_mhz(rng.gen_range(4900.0..5100.0), rng.gen_range(0.05..10.0));
    let (c, m) = (mode(), mode());
    let bus_list: Vec<BusParams> = (0..buses)
        .map(|_| {
            BusParams::from_mhz(
                rng.gen_range(4900.0..5100.0),
                rng.gen_range(0.1..20.0),
                rng.gen_range(0.5..60.0),
            )
        })
        .collect();
    let mut cfg = SystemConfig::three_mode(
        c,
        m,
        bus_list[0],
        mhz_to_rad_ns(rng.gen_range(0.0..20.0)),
        mhz_to_rad_ns(rng.gen_range(0.0..20.0)),
    );
    cfg.buses = bus_list;
    cfg
}

fn within_rel(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    let rel = (got / want - 1.0).abs();
    if rel < tol {
        Ok(())
    } else {
        Err(format!("{name} = {got}, expected {want} within {tol} (rel {rel:.2e})"))
    }
}

fn q_to_gamma_reproduction() -> (Check, Duration) {
    let t = Instant::now();
    let r = q_to_gamma(QL * KAPPA_T_MHZ, QL, QI, QC);
    let elapsed = t.elapsed();
    let check = r.map_err(|e| e.to_string()).and_then(|r| {
        let (gt, gi, ge) = (
            rad_ns_to_mhz(r.gamma_t),
            rad_ns_to_mhz(r.gamma_int),
            rad_ns_to_mhz(r.gamma_ext),
        );
        within_rel("gamma_t", gt, 50.8, 0.005)?;
        within_rel("gamma_int", gi, 9.16, 0.005)?;
        within_rel("gamma_ext", ge, 41.7, 0.005)?;
        Ok(format!("gamma_t {gt:.3}, gamma_int {gi:.3}, gamma_ext {ge:.3} MHz"))
    });
    (check, elapsed)
}

fn microstrip_line() -> (Check, Duration) {
    let t = Instant::now();
    let r = microstrip(&MicrostripGeometry::fr4_board(), 5000.0);
    let elapsed = t.elapsed();
    let check = r.map_err(|e| e.to_string()).and_then(|r| {
        if (r.eps_eff - 3.17).abs() > 0.01 {
            return Err(format!("eps_eff = {}", r.eps_eff));
        }
        if (r.lambda_g_mm - 33.69).abs() > 0.05 {
            return Err(format!("lambda_g = {} mm", r.lambda_g_mm));
        }
        Ok(format!("eps_eff {:.4}, lambda_g {:.3} mm", r.eps_eff, r.lambda_g_mm))
    });
    (check, elapsed)
}

fn elimination_exactness() -> (Check, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cfg = random_system(&mut rng, 1);
        let w = mhz_to_rad_ns(rng.gen_range(4850.0..5150.0));
        let a_in = Complex64::new(1.0, 0.0);
        let (Ok(full), Ok((a, m))) = (steady_state(&cfg, w, a_in), reduced_two_mode(&cfg, w, a_in)) else {
            return (Err("solve failed".into()), t.elapsed());
        };
        let scale = full.a.norm().max(full.m.norm());
        worst = worst.max((a - full.a).norm() / scale).max((m - full.m).norm() / scale);
    }
    let elapsed = t.elapsed();
    let check = if worst < 1e-10 {
        Ok(format!("max rel error {worst:.1e} over 1000 configs"))
    } else {
        Err(format!("max rel error {worst:.1e}"))
    };
    (check, elapsed)
}

fn power_balance() -> (Check, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let cfg = random_system(&mut rng, 1 + k % 2);
        let w = mhz_to_rad_ns(rng.gen_range(4850.0..5150.0));
        let a_in = Complex64::from_polar(rng.gen_range(0.1..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let Ok(ss) = steady_state(&cfg, w, a_in) else {
            return (Err("solve failed".into()), t.elapsed());
        };
        let lhs = a_in.norm_sqr() - ss.a_out(&cfg).norm_sqr();
        let bus_loss: f64 = ss
            .buses()
            .zip(&cfg.buses)
            .map(|(x, b)| b.gamma_int * x.norm_sqr())
            .sum();
        let rhs = cfg.cavity.gamma * ss.a.norm_sqr() + cfg.magnon.gamma * ss.m.norm_sqr() + bus_loss;
        worst = worst.max((lhs - rhs).abs() / a_in.norm_sqr());
    }
    let elapsed = t.elapsed();
    let check = if worst < 1e-8 {
        Ok(format!(
            "max rel imbalance {worst:.1e} over 500 three-mode + 500 four-mode"
        ))
    } else {
        Err(format!("max rel imbalance {worst:.1e}"))
    };
    (check, elapsed)
}

fn markovian_limit() -> (Check, Duration) {
    let cfg = reference_system();
    let t = Instant::now();
    let r = effective_coupling(&cfg, cfg.buses[0].omega);
    let elapsed = t.elapsed();
    let check = r.map_err(|e| e.to_string()).and_then(|r| {
        let gt = cfg.buses[0].gamma_total();
        let want = Complex64::new(0.0, 2.0 * cfg.g_ct * cfg.g_mt / gt);
        let dev = (r.g_eff - want).norm();
        if dev > 4.0 * f64::EPSILON * want.norm() {
            return Err(format!("|g_eff - i 2 g_ct g_mt / gamma_t| = {dev:.1e}"));
        }
        // dissipative part g_ct g_mt (gamma_t/2) / (delta_t^2 + gamma_t^2/4) at delta_t = 0, in MHz
        let gt_mhz = 9.16 + 41.7;
        let oracle = 4.9 * 10.0 * (gt_mhz / 2.0) / (gt_mhz * gt_mhz / 4.0);
        let got = rad_ns_to_mhz(r.gamma_diss);
        if (got - 1.93).abs() > 0.01 || (got - oracle).abs() > 1e-12 {
            return Err(format!("Gamma_diss = {got} MHz, oracle {oracle}"));
        }
        Ok(format!("deviation {dev:.1e}, Gamma_diss {got:.4} MHz"))
    });
    (check, elapsed)
}

fn eigenstructure() -> (Check, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let cfg = random_system(&mut rng, 1);
        let (Ok(h), Ok(m)) = (hybrid_eigenfrequencies(&cfg), effective_hamiltonian(&cfg)) else {
            return (Err("eigen failed".into()), t.elapsed());
        };
        let mat = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
        let Some(ev) = mat.eigenvalues() else {
            return (Err("numeric eigensolve failed".into()), t.elapsed());
        };
        let (e0, e1) = (ev[0], ev[1]);
        let d = ((h.omega_plus - e0).norm() + (h.omega_minus - e1).norm())
            .min((h.omega_plus - e1).norm() + (h.omega_minus - e0).norm());
        worst = worst.max(d / h.omega_plus.norm());
    }
    if worst > 1e-12 {
        return (Err(format!("analytic vs numeric rel {worst:.1e}")), t.elapsed());
    }

    // equal renormalized dampings: g_mt = g_ct and gamma_m = gamma_c
    let mut base = reference_system();
    base.g_mt = base.g_ct;
    base.magnon.gamma = base.cavity.gamma;
    let Ok(h0) = hybrid_eigenfrequencies(&base) else {
        return (Err("eigen failed".into()), t.elapsed());
    };
    let big_gamma = h0.gamma;
    for k in -40..=40 {
        let delta = big_gamma * k as f64 / 10.0;
        if (delta.abs() - 2.0 * big_gamma).abs() < 1e-9 * big_gamma {
            continue;
        }
        let mut cfg = base.clone();
        cfg.magnon.omega = cfg.cavity.omega - delta;
        let Ok(h) = hybrid_eigenfrequencies(&cfg) else {
            return (Err("eigen failed".into()), t.elapsed());
        };
        let split = (h.omega_plus - h.omega_minus).re.abs();
        if delta.abs() < 2.0 * big_gamma {
            if split > 1e-12 * cfg.cavity.omega {
                return (
                    Err(format!("Re split {split:.2e} at delta = {k}/10 Gamma")),
                    t.elapsed(),
                );
            }
        } else {
            let want = (delta * delta - 4.0 * big_gamma * big_gamma).sqrt();
            if !(split > 0.0) || (split / want - 1.0).abs() > 1e-9 {
                return (
                    Err(format!("Re split {split} vs {want} at delta = {k}/10 Gamma")),
                    t.elapsed(),
                );
            }
        }
    }
    let elapsed = t.elapsed();
    (
        Ok(format!(
            "analytic vs numeric rel {worst:.1e}; attraction for |delta| < 2 Gamma = {:.3} MHz",
            2.0 * rad_ns_to_mhz(big_gamma)
        )),
        elapsed,
    )
}

fn decoupling_regime() -> (Check, Duration) {
    let cfg = preset("regime2.json").system().expect("regime2 system");
    let t = Instant::now();
    let fm = linspace(4962.0, 5062.0, 200);
    let probe = linspace(4987.0, 5037.0, 200);
    let grid = match sweep_spectrum(&cfg, &SweepKind::MagnonFreq, &fm, &probe) {
        Ok(g) => g,
        Err(e) => return (Err(e.to_string()), t.elapsed()),
    };
    let mut worst: f64 = 0.0;
    for i in 1..grid.n_sweep() {
        for (a, b) in grid.row(0).iter().zip(grid.row(i)) {
            worst = worst.max((a - b).norm());
        }
    }
    let elapsed = t.elapsed();
    let check = if cfg.g_mt == 0.0 && worst < 1e-12 {
        Ok(format!("max column deviation {worst:.1e} over 200x200"))
    } else {
        Err(format!("g_mt = {}, max column deviation {worst:.1e}", cfg.g_mt))
    };
    (check, elapsed)
}

fn oracle_equivalence() -> (Check, Duration) {
    let run_cfg = preset("regime1.json");
    let cfg = run_cfg.ringdown_system().expect("regime1 system");
    let pulse = run_cfg.pulse_spec().expect("regime1 pulse");
    let rd = run_cfg.ringdown_settings();
    let t = Instant::now();
    let result = (|| -> Check {
        let err = |e: remag_core::dynamics::DynamicsError| e.to_string();
        let rk4 = integrate(&cfg, &pulse, rd.t_end_ns, 1e-3, Frame::Rotating, rd.output_interval_ns).map_err(err)?;
        let exact = exact_oracle(&cfg, &pulse, &rk4.times, Frame::Rotating).map_err(err)?;
        let dev = max_relative_deviation(&rk4, &exact);
        if !(dev < 1e-6) {
            return Err(format!("dt = 1 ps: deviation {dev:.2e}"));
        }
        let coarse = integrate(&cfg, &pulse, rd.t_end_ns, 0.2, Frame::Rotating, rd.output_interval_ns).map_err(err)?;
        let fine = integrate(&cfg, &pulse, rd.t_end_ns, 0.1, Frame::Rotating, rd.output_interval_ns).map_err(err)?;
        let (e1, e2) = (
            max_relative_deviation(&coarse, &exact),
            max_relative_deviation(&fine, &exact),
        );
        let ratio = e1 / e2;
        if !(14.4..=17.6).contains(&ratio) {
            return Err(format!("halving dt 0.2 -> 0.1 ns improved error {ratio:.2}x"));
        }
        Ok(format!(
            "dt = 1 ps deviation {dev:.1e} over {} ns; halving dt gives {ratio:.2}x",
            rd.t_end_ns
        ))
    })();
    (result, t.elapsed())
}

fn spectro_temporal() -> (Check, Duration) {
    let run_cfg = preset("regime1.json");
    let base = run_cfg.ringdown_system().expect("regime1 system");
    let pulse = run_cfg.pulse_spec().expect("regime1 pulse");
    let rd = run_cfg.ringdown_settings();
    let settings = RingdownSettings {
        t_end_ns: rd.t_end_ns,
        output_interval_ns: rd.output_interval_ns,
        dt_ns: DEFAULT_DT_ROTATING_NS,
        frame: Frame::Rotating,
        beat_window_ns: rd.t_end_ns - pulse.end_ns(),
    };
    let fc = run_cfg.cavity.f_mhz;
    let points = match ringdown_sweep(&base, &SweepKind::MagnonFreq, &[fc, fc + 10.0], &pulse, &settings) {
        Ok(p) => p,
        Err(e) => return (Err(e.to_string()), Duration::ZERO),
    };
    let (on, off) = (&points[0], &points[1]);
    let beat = match &off.beat {
        Ok(b) => b,
        Err(e) => return (Err(format!("detuned beat: {e}")), Duration::ZERO),
    };
    if !beat.is_significant(DEFAULT_CONFIDENCE_THRESHOLD) {
        return (Err(format!("detuned beat not significant: {beat:?}")), Duration::ZERO);
    }
    if (beat.frequency_mhz / off.hybrid_split_mhz - 1.0).abs() > 0.05 {
        return (
            Err(format!(
                "beat {} MHz vs hybrid split {} MHz",
                beat.frequency_mhz, off.hybrid_split_mhz
            )),
            Duration::ZERO,
        );
    }
    let on_conf = match &on.beat {
        Ok(b) if b.is_significant(DEFAULT_CONFIDENCE_THRESHOLD) => {
            return (Err(format!("resonant trace shows a beat: {b:?}")), Duration::ZERO)
        }
        Ok(b) => b.confidence,
        Err(_) => 0.0,
    };

    let gyro = run_cfg.gyro_mhz_per_t;
    let fields = linspace(4987.0 / gyro, 5036.0 / gyro, 50);
    let t = Instant::now();
    let sweep = ringdown_sweep(
        &base,
        &SweepKind::Field { gyro_mhz_per_t: gyro },
        &fields,
        &pulse,
        &settings,
    );
    let elapsed = t.elapsed();
    let check = match sweep {
        Ok(p) if p.len() == 50 => Ok(format!(
            "beat {:.3} MHz vs split {:.3} MHz ({:+.1}%), resonant confidence {on_conf:.3}; 50-point field sweep",
            beat.frequency_mhz,
            off.hybrid_split_mhz,
            100.0 * (beat.frequency_mhz / off.hybrid_split_mhz - 1.0)
        )),
        Ok(p) => Err(format!("field sweep returned {} points", p.len())),
        Err(e) => Err(e.to_string()),
    };
    (check, elapsed)
}

fn four_mode_reduction() -> (Check, Duration) {
    let three = preset("regime1.json").system().expect("regime1 system");
    let t = Instant::now();
    let mut four = three.clone();
    let mut bus2 = three.buses[0];
    bus2.omega = three.cavity.omega + 1e4 * bus2.gamma_total();
    four.buses.push(bus2);
    let mut worst: f64 = 0.0;
    for f in linspace(4987.0, 5037.0, 401) {
        let w = mhz_to_rad_ns(f);
        match (s11(&three, w), s11(&four, w)) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).norm()),
            _ => return (Err(format!("S11 failed at {f} MHz")), t.elapsed()),
        }
    }
    let elapsed = t.elapsed();
    let check = if four.port_model == PortModel::Shared && worst < 1e-3 {
        Ok(format!("max |S11_4 - S11_3| = {worst:.1e}"))
    } else {
        Err(format!("max |S11_4 - S11_3| = {worst:.1e}"))
    };
    (check, elapsed)
}

fn synthesize_bus(noise: f64, seed: u64) -> S11Trace {
    // bare bus in its own oracle form, Delta = f0 - f
    let f0 = QL * KAPPA_T_MHZ;
    let (ke, kt) = (f0 / QC, f0 / QL);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = linspace(f0 - 200.0, f0 + 200.0, 801);
    let s = f
        .iter()
        .map(|&x| {
            let clean = 1.0 - ke / (Complex64::new(0.0, f0 - x) + kt / 2.0);
            if noise > 0.0 {
                clean + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                clean
            }
        })
        .collect();
    S11Trace::new(f, s).unwrap()
}

fn fit_round_trip() -> (Check, Duration) {
    let mut traces = vec![(0.01, synthesize_bus(0.0, 0))];
    traces.extend((0..5).map(|s| (0.05, synthesize_bus(0.01, s))));
    let t = Instant::now();
    let mut worst_ql: f64 = 0.0;
    let mut worst_qc: f64 = 0.0;
    for (k, (tol, trace)) in traces.iter().enumerate() {
        let r = match extract_q(trace) {
            Ok(r) => r,
            Err(e) => return (Err(format!("trace {k}: {e}")), t.elapsed()),
        };
        let (eql, eqc) = ((r.q_loaded / QL - 1.0).abs(), (r.q_coupling / QC - 1.0).abs());
        if eql >= *tol || eqc >= *tol || (r.external_fraction - 0.82).abs() > 0.02 {
            return (
                Err(format!(
                    "trace {k}: Q_L {} Q_c {} fraction {}",
                    r.q_loaded, r.q_coupling, r.external_fraction
                )),
                t.elapsed(),
            );
        }
        if k == 0 {
            worst_ql = eql;
            worst_qc = eqc;
        }
    }
    let elapsed = t.elapsed();
    (
        Ok(format!(
            "noiseless Q_L err {worst_ql:.1e}, Q_c err {worst_qc:.1e}; 5 noisy traces within 5%"
        )),
        elapsed,
    )
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p: PathBuf| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> (Check, Duration) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/regime1.json");
    let t = Instant::now();
    let jobs = [
        (Command::Spectrum, vec![]),
        (
            Command::Ringdown,
            vec![SweepAxis {
                axis: AxisKind::Fm,
                start: 4992.0,
                stop: 5032.0,
                count: 9,
            }],
        ),
    ];
    let mut compared = 0;
    for (command, sweeps) in jobs {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for (k, threads) in [1, 2, 8, 1, 3].into_iter().enumerate() {
            let out = tmp.path().join(format!("{command}-{k}"));
            let mut job = JobSpec::new(command, &out);
            job.config = Some(config.clone());
            job.sweeps = sweeps.clone();
            job.jobs = Some(threads);
            if let Err(e) = run(&job) {
                return (Err(format!("{command}: {e}")), t.elapsed());
            }
            let files = read_outputs(&out);
            match &reference {
                None => reference = Some(files),
                Some(r) => {
                    if *r != files {
                        return (
                            Err(format!("{command}: outputs differ at {threads} threads")),
                            t.elapsed(),
                        );
                    }
                    compared += files.len();
                }
            }
        }
    }
    (
        Ok(format!("{compared} files byte-identical across 1/2/3/8 threads")),
        t.elapsed(),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> (Check, Duration)); 12] = [
        (
            "Q to gamma reproduction",
            Duration::from_millis(1),
            q_to_gamma_reproduction,
        ),
        ("microstrip", Duration::from_millis(1), microstrip_line),
        ("elimination exactness", Duration::from_secs(1), elimination_exactness),
        ("power balance", Duration::from_secs(1), power_balance),
        ("Markovian limit", Duration::MAX, markovian_limit),
        ("eigenstructure", Duration::from_millis(10), eigenstructure),
        ("decoupling regime", Duration::from_secs(1), decoupling_regime),
        (
            "time-domain oracle equivalence",
            Duration::from_secs(30),
            oracle_equivalence,
        ),
        (
            "spectro-temporal consistency",
            Duration::from_secs(60),
            spectro_temporal,
        ),
        ("four-mode reduction", Duration::from_secs(1), four_mode_reduction),
        ("fit round trip", Duration::from_secs(5), fit_round_trip),
        ("determinism", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (k, (name, limit, f)) in criteria.iter().enumerate() {
        let (check, elapsed) = f();
        let check = check.and_then(|d| {
            if elapsed <= *limit {
                Ok(d)
            } else {
                Err(format!("{d}; took {elapsed:?}, limit {limit:?}"))
            }
        });
        let (tag, detail) = match &check {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name:<32} {:>10.3?}  {detail}", k + 1, elapsed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
