use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.ini");
    fs::write(&path, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quasi2d"));
    cmd.args(&args[..1]).arg("--config").arg(&path).arg("--out").arg(dir.join("out")).args(&args[1..]);
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = table(path);
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

const TEN_IONS: &str = "[box]\nlx = 100\nly = 100\nlz = 100\n[particles]\ncations = 5\nanions = 5\nseed = 3\n[ewald]\nalpha = 0.12\ns = 6\n";

#[test]
fn validate_reports_ok() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), TEN_IONS, &["validate"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("predicted truncation error") && stdout.trim_end().ends_with("ok"), "{stdout}");
}

#[test]
fn validate_rejects_net_charge() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &TEN_IONS.replace("anions = 5", "anions = 4"), &["validate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual"));
}

#[test]
fn validate_rejects_long_cutoff() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &TEN_IONS.replace("alpha = 0.12", "alpha = 0.1"), &["validate"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_typos_are_errors() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &format!("{TEN_IONS}[rb]\nbatchsize = 4\n"), &["validate"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));
    let out = run(dir.path(), TEN_IONS, &["validate", "--method", "p3m"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn energy_matches_image_sum() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &format!("{TEN_IONS}[soe]\nm = 16\n"), &["energy", "--oracle"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let totals = column(&dir.path().join("out/energy.csv"), "total");
    assert_eq!(totals.len(), 2);
    assert!((totals[0] - totals[1]).abs() <= 1e-6 * totals[0].abs(), "{totals:?}");
    let (header, rows) = table(&dir.path().join("out/forces.csv"));
    assert_eq!(header, ["id", "fx", "fy", "fz"]);
    assert_eq!(rows.len(), 10);
    assert!(dir.path().join("out/manifest.ini").exists());
}

#[test]
fn empty_system_has_zero_energy() {
    let dir = TempDir::new().unwrap();
    let cfg = TEN_IONS.replace("cations = 5", "cations = 0").replace("anions = 5", "anions = 0");
    for method in ["ewald2d", "soewald2d", "rbse2d"] {
        let out = run(dir.path(), &cfg, &["energy", "--method", method]);
        assert_eq!(code(&out), 0, "{method}: {}", String::from_utf8_lossy(&out.stderr));
        for name in ["u_s", "u_l_k", "u_l_0", "u_self", "u_ps", "total"] {
            assert_eq!(column(&dir.path().join("out/energy.csv"), name), [0.0], "{method} {name}");
        }
    }
}

#[test]
fn random_batch_repeats_average_to_full_sum() {
    let dir = TempDir::new().unwrap();
    let cfg = "[box]\nlx = 20\nly = 20\nlz = 10\n[particles]\ncations = 10\nanions = 10\nmargin = 0.5\nmin_dist = 1\nseed = 4\n[ewald]\nalpha = 0.5\ns = 4\n[rb]\nbatch_size = 8\n";
    let out = run(dir.path(), cfg, &["energy", "--method", "soewald2d"]);
    assert_eq!(code(&out), 0);
    let full = column(&dir.path().join("out/energy.csv"), "total")[0];
    let out = run(dir.path(), cfg, &["energy", "--method", "rbse2d", "--repeats", "1000"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/energy.csv");
    let (mean, se) = (column(&path, "total")[0], column(&path, "total_stderr")[0]);
    assert_eq!(column(&path, "repeats"), [1000.0]);
    assert!(se > 0.0);
    assert!((mean - full).abs() <= 4.0 * se, "mean {mean}, full {full}, stderr {se}");
}

const SLIT: &str = "[box]\nlx = 16\nly = 16\nlz = 10\n[particles]\ncations = 10\nanions = 10\nmargin = 1\nmin_dist = 1.2\nseed = 5\n[ewald]\nalpha = 0.5\ns = 3.5\n[soe]\neps = 1e-4\n[md]\ndt = 0.002\nsteps = 1000\nrecord_every = 10\ntrajectory_stride = 10\nz_bins = 5\nseed = 6\n[lj]\n[wall]\n";

#[test]
fn simulate_writes_parseable_reproducible_output() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), SLIT, &["simulate", "--method", "rbse2d"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    let (header, rows) = table(&o.join("msd.csv"));
    assert_eq!(header, ["t", "msd_xy", "msd_z"]);
    assert!(!rows.is_empty());
    let (header, rows) = table(&o.join("concentration.csv"));
    assert_eq!(header, ["z_bin_center", "concentration_cation", "concentration_anion"]);
    assert_eq!(rows.len(), 5);
    let (header, rows) = table(&o.join("trajectory.csv"));
    assert_eq!(header, ["step", "id", "x", "y", "z", "vx", "vy", "vz"]);
    assert_eq!(rows.len(), 10 * 20);
    let first: Vec<Vec<u8>> = ["msd.csv", "concentration.csv", "energy.csv", "trajectory.csv"].iter().map(|f| fs::read(o.join(f)).unwrap()).collect();

    let again = TempDir::new().unwrap();
    let out = run(again.path(), SLIT, &["simulate", "--method", "rbse2d"]);
    assert_eq!(code(&out), 0);
    for (k, f) in ["msd.csv", "concentration.csv", "energy.csv", "trajectory.csv"].iter().enumerate() {
        assert_eq!(fs::read(again.path().join("out").join(f)).unwrap(), first[k], "{f}");
    }

    // the manifest is a config that reproduces the run
    let manifest = fs::read_to_string(o.join("manifest.ini")).unwrap();
    assert!(manifest.contains("config_hash = ") && manifest.contains("md_seed = 6") && manifest.contains("rb_seed = 1"));
    let replay = TempDir::new().unwrap();
    let out = run(replay.path(), &manifest, &["simulate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(replay.path().join("out/msd.csv")).unwrap(), first[0]);
    let replayed = fs::read_to_string(replay.path().join("out/manifest.ini")).unwrap();
    let hash = |m: &str| m.lines().find(|l| l.starts_with("config_hash")).unwrap().to_string();
    assert_eq!(hash(&manifest), hash(&replayed));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = TempDir::new().unwrap();
    run(dir.path(), SLIT, &["simulate"]);
    let a = fs::read(dir.path().join("out/energy.csv")).unwrap();
    let out = run(dir.path(), SLIT, &["simulate", "--seed", "99"]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(dir.path().join("out/energy.csv")).unwrap(), a);
}

#[test]
fn s_scan_plateaus_at_soe_accuracy() {
    let dir = TempDir::new().unwrap();
    let cfg = "[box]\nlx = 100\nly = 100\nlz = 100\n[particles]\ncations = 20\nanions = 20\nseed = 7\n[ewald]\nalpha = 0.12\n[soe]\neps = 1e-8\n[scan]\nkind = s\nvalues = 2, 3, 4, 5, 6\n";
    let out = run(dir.path(), cfg, &["scan-error"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/scan.csv");
    assert_eq!(table(&path).0, ["s", "error_ewald2d", "error_soewald2d"]);
    let soe = column(&path, "error_soewald2d");
    assert!(soe[0] > 1e3 * soe[4], "{soe:?}");
    // last two points sit on the SOE floor, not the truncation curve
    assert!(soe[4] < 1e-7 && (soe[3] - soe[4]).abs() < 0.5 * soe[4], "{soe:?}");
}

#[test]
fn lz_scan_naive_column_never_improves() {
    let dir = TempDir::new().unwrap();
    let cfg = "[box]\nlx = 100\nly = 100\nlz = 10\n[particles]\ncations = 50\nanions = 50\nseed = 8\n[ewald]\nalpha = 0.1\ns = 4\n[soe]\neps = 1e-8\n[scan]\nkind = lz\nvalues = 10, 100, 1000\n";
    let out = run(dir.path(), cfg, &["scan-error"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/scan.csv");
    let naive = column(&path, "error_ewald2d_naive");
    assert!(naive.windows(2).all(|w| w[1] >= w[0]), "{naive:?}");
    assert!(naive[2].is_infinite());
    let soe = column(&path, "error_soewald2d");
    assert!(soe.iter().all(|e| e.is_finite() && *e < 1e-6), "{soe:?}");
}

#[test]
fn force_scan_error_uncorrelated_with_height() {
    let dir = TempDir::new().unwrap();
    let cfg = "[box]\nlx = 100\nly = 100\nlz = 100\n[particles]\ncations = 50\nanions = 50\nseed = 9\n[ewald]\nalpha = 0.1\ns = 4\n[soe]\neps = 1e-8\n[scan]\nkind = force\n";
    let out = run(dir.path(), cfg, &["scan-error"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("out/scan.csv");
    let (z, e) = (column(&path, "z"), column(&path, "error"));
    let n = z.len() as f64;
    let (mz, me) = (z.iter().sum::<f64>() / n, e.iter().sum::<f64>() / n);
    let cov: f64 = z.iter().zip(&e).map(|(a, b)| (a - mz) * (b - me)).sum();
    let r = cov / (z.iter().map(|a| (a - mz).powi(2)).sum::<f64>() * e.iter().map(|b| (b - me).powi(2)).sum::<f64>()).sqrt();
    assert!(r.abs() <= 0.2, "r = {r}");
}

#[test]
fn bench_writes_timings() {
    let dir = TempDir::new().unwrap();
    let cfg = "[box]\nlx = 1\nly = 1\nlz = 1\n[ewald]\ns = 3\n[soe]\neps = 1e-4\n[bench]\nsizes = 200, 400\nrepeats = 1\newald_max_n = 200\n";
    let out = run(dir.path(), cfg, &["bench"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&dir.path().join("out/bench.csv"));
    assert_eq!(header, ["N", "method", "seconds"]);
    let methods: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(methods, [("200", "soewald2d"), ("200", "rbse2d"), ("200", "ewald2d"), ("400", "soewald2d"), ("400", "rbse2d")]);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_quasi2d")).args(["validate", "--config", "/nonexistent.ini"]).output().unwrap();
    assert_eq!(code(&out), 3);
    let out = Command::new(env!("CARGO_BIN_EXE_quasi2d")).arg("frobnicate").output().unwrap();
    assert_eq!(code(&out), 3);
}
