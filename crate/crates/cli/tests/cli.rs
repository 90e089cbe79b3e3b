use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

fn remag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remag")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pgm_pixels(bytes: &[u8]) -> (usize, usize, Vec<u16>) {
    let text = String::from_utf8_lossy(&bytes[..32]).into_owned();
    let mut it = text.split_ascii_whitespace();
    assert_eq!(it.next(), Some("P5"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    assert_eq!(it.next(), Some("65535"));
    let body = &bytes[bytes.len() - 2 * w * h..];
    (w, h, body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
}

#[test]
fn microstrip_prints_line_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = remag(&["microstrip", "--out", s(dir.path())]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("eps_eff = 3.170"), "{stdout}");
    assert!(stdout.contains("lambda_g = 33.6"), "{stdout}");
    assert!(dir.path().join("microstrip.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn regime2_columns_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = remag(&[
        "spectrum",
        "--config",
        s(&preset("regime2.json")),
        "--sweep",
        "fm=4990:5030:9",
        "--sweep",
        "f=5000:5025:26",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (w, h, px) = pgm_pixels(&std::fs::read(dir.path().join("spectrum.pgm")).unwrap());
    assert_eq!((w, h), (9, 26));
    for row in px.chunks(w) {
        assert!(row.iter().all(|&p| p == row[0]));
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("spectrum.pgm.json")).unwrap()).unwrap();
    assert_eq!(meta["y_axis"]["first"], 5025.0);
    assert_eq!(meta["x_axis"]["name"], "fm_mhz");
}

#[test]
fn regime1_attraction_near_cavity() {
    let dir = tempfile::tempdir().unwrap();
    let out = remag(&[
        "eigen",
        "--config",
        s(&preset("regime1.json")),
        "--sweep",
        "fm=5011.5:5012.5:3",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("eigen.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[6], "attraction");
        let detuning = (r[0].parse::<f64>().unwrap() - 5012.0).abs();
        let split: f64 = r[5].parse().unwrap();
        assert!(split <= 0.5 * detuning, "{r:?}");
    }
}

#[test]
fn manifest_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = remag(&[
        "ringdown",
        "--config",
        s(&preset("regime1.json")),
        "--sweep",
        "b=0.179:0.1795:2",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["system"]["g_mt_mhz"], 3.888);
    assert_eq!(m["system"]["buses"][0]["gamma_ext_mhz"], 41.7);
    assert_eq!(m["pulse"]["duration_ns"], 16.0);
    assert_eq!(m["ringdown"]["output_interval_ns"], 1.63);
    assert_eq!(m["ringdown"]["frame"], "rotating");
    assert_eq!(m["gyro_mhz_per_t"], 28000.0);
    assert_eq!(m["sweep_axis"], "b_t");
    assert!(m.get("jobs").is_none());

    let beats = std::fs::read_to_string(dir.path().join("beats.csv")).unwrap();
    assert_eq!(beats.lines().count(), 4);
    let (w, h, _) = pgm_pixels(&std::fs::read(dir.path().join("ringdown.pgm")).unwrap());
    assert_eq!((w, h), (2, 307));
}

#[test]
fn lab_frame_ringdown_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(preset("regime1.json"))
        .unwrap()
        .replace("\"t_end_ns\": 500.0", "\"t_end_ns\": 40.0");
    let path = dir.path().join("short.json");
    std::fs::write(&path, cfg).unwrap();
    let out = remag(&[
        "ringdown",
        "--config",
        s(&path),
        "--frame",
        "lab",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["ringdown"]["frame"], "lab");
    assert_eq!(m["ringdown"]["dt_ns"], 0.001);
}

#[test]
fn exit_codes_and_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("never");
    let cfg = preset("regime1.json");

    let bad_sweep = remag(&[
        "spectrum",
        "--config",
        s(&cfg),
        "--sweep",
        "fm=5:1:3",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(bad_sweep.status.code(), Some(2));

    let wrong_axis = remag(&[
        "phasemap",
        "--config",
        s(&cfg),
        "--sweep",
        "fm=1:2:3",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(wrong_axis.status.code(), Some(2));

    let step = remag(&["ringdown", "--config", s(&cfg), "--dt-ps", "5000", "--out", s(&out_dir)]);
    assert_eq!(step.status.code(), Some(2));

    let window = remag(&[
        "spectrum",
        "--config",
        s(&cfg),
        "--db-min",
        "0",
        "--db-max",
        "-10",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(window.status.code(), Some(2));

    let missing = remag(&[
        "spectrum",
        "--config",
        s(&dir.path().join("nope.json")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(missing.status.code(), Some(4));

    assert!(!out_dir.exists());

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let unwritable = remag(&["microstrip", "--out", s(&blocker.join("sub"))]);
    assert_eq!(unwritable.status.code(), Some(4));
}

#[test]
fn fit_reads_spectrum_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = std::fs::read_to_string(preset("regime2.json"))
        .unwrap()
        .replace("\"g_ct_mhz\": 4.9", "\"g_ct_mhz\": 0.0");
    let cfg = dir.path().join("bare.json");
    std::fs::write(&cfg, cfg_text).unwrap();
    let spec = dir.path().join("spec");
    let out = remag(&[
        "spectrum",
        "--config",
        s(&cfg),
        "--sweep",
        "fm=4000:4000:1",
        "--sweep",
        "f=4839:5239:801",
        "--out",
        s(&spec),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit_dir = dir.path().join("fit");
    let out = remag(&["fit", "--input", s(&spec.join("spectrum.csv")), "--out", s(&fit_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(fit_dir.join("fit.json")).unwrap()).unwrap();
    let f0 = r["f0_mhz"].as_f64().unwrap();
    let ext = r["external_fraction"].as_f64().unwrap();
    assert!((f0 - 5039.02).abs() < 1e-3, "{r}");
    assert!((ext - 41.7 / 50.86).abs() < 1e-4, "{r}");

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "f_mhz,s11_re,s11_im\n1,2\n").unwrap();
    let out = remag(&["fit", "--input", s(&junk), "--out", s(&fit_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn phasemap_matches_phase_built_config() {
    use remag_core::phase::{build_config_at_phase, PhaseModel, SystemTemplate, DEFAULT_BUS_DROP_THRESHOLD};
    use remag_core::spectral::s11;
    use remag_core::units::mhz_to_rad_ns;

    let dir = tempfile::tempdir().unwrap();
    let out = remag(&[
        "phasemap",
        "--config",
        s(&preset("regime1.json")),
        "--sweep",
        "phi=0:180:7",
        "--sweep",
        "f=4900:5100:41",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let base = remag_cli::RunConfig::load(&preset("regime1.json"))
        .unwrap()
        .system()
        .unwrap();
    let template = SystemTemplate::from_config(&base).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("phasemap.csv")).unwrap();
    let mut n = 0;
    for line in csv.lines().skip(2) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let cfg = build_config_at_phase(&template, &PhaseModel::measured(), v[0], DEFAULT_BUS_DROP_THRESHOLD).unwrap();
        let z = s11(&cfg, mhz_to_rad_ns(v[1])).unwrap();
        assert_eq!((v[2], v[3]), (z.re, z.im), "{line}");
        n += 1;
    }
    assert_eq!(n, 7 * 41);
}
