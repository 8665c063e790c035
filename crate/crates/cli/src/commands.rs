//! Subcommand implementations. Each returns a short human-readable summary;
//! numeric results go to CSV files in the output directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use quasi2d::bench::{cubic_electrolyte, median_seconds};
use quasi2d::md::{run_simulation, write_energy_csv, write_trajectory_csv};
use quasi2d::rbse::RbSolver;
use quasi2d::reference::{direct_lattice_sum, evaluate_ref, ReferenceSolver, XiVariant};
use quasi2d::soewald::{evaluate_soe, SoeSolver};
use quasi2d::{choose_alpha, predict_errors, validate_neutrality, AlphaMode, BoxGeometry, EwaldParams, ParticleSystem, SoeApprox, Solver, Vec3};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{AlphaChoice, Method, ParticleSource, RunConfig, ScanKind, SoeSource};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn particles(cfg: &RunConfig, geom: &BoxGeometry) -> Result<ParticleSystem> {
    match &cfg.particles {
        ParticleSource::File(path) => {
            let file = File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
            Ok(ParticleSystem::read_csv(file, geom)?)
        }
        &ParticleSource::Generated { cations, anions, valence, margin, min_dist, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if min_dist > 0.0 {
                Ok(ParticleSystem::random_ions_spaced(cations, anions, valence, geom, margin, min_dist, &mut rng)?)
            } else {
                Ok(ParticleSystem::random_ions(cations, anions, valence, geom, margin, &mut rng))
            }
        }
    }
}

pub fn soe(cfg: &RunConfig) -> Result<SoeApprox> {
    Ok(match &cfg.soe {
        SoeSource::Terms(m) => SoeApprox::build_contour(*m)?,
        SoeSource::Tolerance(eps) => SoeApprox::build_for_tolerance(*eps)?,
        SoeSource::Table(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            SoeApprox::load_table(&text)?
        }
    })
}

pub fn alpha(cfg: &RunConfig, n: usize, geom: &BoxGeometry) -> f64 {
    match cfg.alpha {
        AlphaChoice::Fixed(a) => a,
        AlphaChoice::Auto { mode, prefactor } => choose_alpha(n, geom, mode, prefactor, cfg.s),
    }
}

fn params(cfg: &RunConfig, n: usize, geom: &BoxGeometry) -> Result<EwaldParams> {
    let p = EwaldParams::new(alpha(cfg, n, geom), cfg.s, geom)?;
    p.check_min_image(geom)?;
    Ok(p)
}

pub fn solver(cfg: &RunConfig, method: Method, geom: &BoxGeometry, n: usize) -> Result<Box<dyn Solver>> {
    let params = params(cfg, n, geom)?;
    Ok(match method {
        Method::Ewald2d => Box::new(ReferenceSolver { params, variant: XiVariant::Stable }),
        Method::Soewald2d => Box::new(SoeSolver { params, soe: soe(cfg)? }),
        Method::Rbse2d => Box::new(RbSolver::new(params, soe(cfg)?, geom, cfg.rb.batch_size, cfg.rb.seed, cfg.rb.downsample)?),
    })
}

fn output_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `manifest.ini`: the resolved config plus its hash and seeds. The
/// file is itself a valid config. The hash leaves out the output directory.
pub fn write_manifest(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let resolved = cfg.to_ini();
    let located_nowhere = RunConfig { output_dir: PathBuf::new(), ..cfg.clone() };
    let hash = Sha256::digest(located_nowhere.to_ini().as_bytes());
    let rb_seed = cfg.rb.seed;
    let md_seed = cfg.md_seed();
    let text = format!(
        "[manifest]\ncommand = {command}\nconfig_hash = {hash:x}\nmd_seed = {md_seed}\nrb_seed = {rb_seed}\nversion = {}\n\n{resolved}",
        env!("CARGO_PKG_VERSION")
    );
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("manifest.ini");
    fs::write(&path, text)?;
    Ok(path)
}

pub fn validate(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry.geometry()?;
    let sys = particles(cfg, &geom)?;
    let residual = validate_neutrality(&sys, &geom)?;
    let params = params(cfg, sys.len(), &geom)?;
    let mut report = String::new();
    let _ = writeln!(report, "particles: {} (net charge residual {residual:e})", sys.len());
    let _ = writeln!(report, "alpha = {}, s = {}, r_c = {}, k_c = {}, Fourier modes = {}", params.alpha, params.s, params.r_c, params.k_c, params.kmodes.len());
    if cfg.method != Method::Ewald2d {
        let soe = soe(cfg)?;
        if !soe.eps_certified.is_finite() {
            return Err(CliError::Validation("sum-of-exponentials table failed certification".into()));
        }
        if let SoeSource::Tolerance(target) = cfg.soe {
            if soe.eps_certified > target {
                return Err(CliError::Validation(format!("SOE certified error {:e} exceeds target {target:e}", soe.eps_certified)));
            }
        }
        let _ = writeln!(report, "SOE terms = {}, certified error {:e}", soe.m(), soe.eps_certified);
    }
    let pred = predict_errors(&params, sys.sum_q2(), geom.volume());
    let _ = writeln!(report, "predicted truncation error: energy {:e}, force {:e}, potential {:e}", pred.energy(), pred.force(), pred.potential());
    let _ = write!(report, "ok");
    Ok(report)
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn energy(cfg: &RunConfig, oracle: bool, repeats: usize) -> Result<String> {
    if repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let geom = cfg.geometry.geometry()?;
    let sys = particles(cfg, &geom)?;
    validate_neutrality(&sys, &geom)?;
    let mut solver = solver(cfg, cfg.method, &geom, sys.len())?;
    let n = sys.len();
    let mut parts = vec![Vec::with_capacity(repeats); 6];
    let mut forces = vec![[0.0; 3]; n];
    for _ in 0..repeats {
        let ev = solver.evaluate(&sys, &geom, true)?;
        let e = ev.energy;
        for (k, v) in [e.u_s, e.u_l_k, e.u_l_0, e.u_self, e.u_ps, e.total].into_iter().enumerate() {
            parts[k].push(v);
        }
        for (acc, f) in forces.iter_mut().zip(ev.forces()) {
            for c in 0..3 {
                acc[c] += f[c] / repeats as f64;
            }
        }
    }
    let stats: Vec<(f64, f64)> = parts.iter().map(|p| mean_and_stderr(p)).collect();
    let mut w = csv::Writer::from_writer(output_file(&cfg.output_dir, "energy.csv")?);
    w.write_record(["method", "n", "u_s", "u_l_k", "u_l_0", "u_self", "u_ps", "total", "total_stderr", "repeats"])?;
    let mut row = vec![solver.name().to_string(), n.to_string()];
    row.extend(stats.iter().map(|s| format!("{:?}", s.0)));
    row.push(format!("{:?}", stats[5].1));
    row.push(repeats.to_string());
    w.write_record(&row)?;
    let mut summary = format!("{}: total energy {:.12e} (stderr {:.3e}, {repeats} evaluation(s))", solver.name(), stats[5].0, stats[5].1);
    if oracle {
        let lattice = direct_lattice_sum(&sys, &geom, cfg.lattice_radius)?;
        let blank = String::new();
        w.write_record(["lattice_sum".to_string(), n.to_string(), blank.clone(), blank.clone(), blank.clone(), blank.clone(), blank, format!("{:?}", lattice.corrected), "0.0".into(), "1".into()])?;
        let pred = predict_errors(&params(cfg, n, &geom)?, sys.sum_q2(), geom.volume()).energy();
        let _ = write!(summary, "\nlattice sum: {:.12e} ({} images), difference {:.3e}, predicted truncation error {pred:.3e}", lattice.corrected, lattice.images, (lattice.corrected - stats[5].0).abs());
    }
    w.flush()?;
    let mut fw = csv::Writer::from_writer(output_file(&cfg.output_dir, "forces.csv")?);
    fw.write_record(["id", "fx", "fy", "fz"])?;
    for (i, f) in forces.iter().enumerate() {
        fw.write_record([i.to_string(), format!("{:?}", f[0]), format!("{:?}", f[1]), format!("{:?}", f[2])])?;
    }
    fw.flush()?;
    write_manifest(cfg, "energy")?;
    Ok(summary)
}

fn stable_total(sys: &ParticleSystem, geom: &BoxGeometry, params: &EwaldParams) -> Result<f64> {
    Ok(evaluate_ref(sys, geom, params, XiVariant::Stable, false)?.energy.total)
}

fn force_error(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (0..3).map(|c| (x[c] - y[c]).powi(2)).sum::<f64>().sqrt()).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn scan_error(cfg: &RunConfig) -> Result<String> {
    let scan = cfg.scan.as_ref().ok_or_else(|| CliError::Config("scan-error needs a [scan] section".into()))?;
    let soe = soe(cfg)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let header: Vec<&str>;
    match scan.kind {
        ScanKind::S => {
            header = vec!["s", "error_ewald2d", "error_soewald2d"];
            let geom = cfg.geometry.geometry()?;
            let sys = particles(cfg, &geom)?;
            let a = alpha(cfg, sys.len(), &geom);
            let reference = EwaldParams::new(a, scan.reference_s, &geom)?;
            let u_ref = stable_total(&sys, &geom, &reference)?;
            for &s in &scan.values {
                let p = EwaldParams::new(a, s, &geom)?;
                let e_ewald = (stable_total(&sys, &geom, &p)? - u_ref).abs();
                let e_soe = (evaluate_soe(&sys, &geom, &p, &soe, false)?.energy.total - u_ref).abs();
                rows.push(vec![fmt(s), fmt(e_ewald), fmt(e_soe)]);
            }
        }
        ScanKind::N => {
            header = vec!["n", "error_soewald2d"];
            let seed = match cfg.particles {
                ParticleSource::Generated { seed, .. } => seed,
                ParticleSource::File(_) => return Err(CliError::Config("the N scan generates its own particles".into())),
            };
            for &n in &scan.values {
                let n = n as usize;
                let (geom, sys) = cubic_electrolyte(n, scan.density, seed)?;
                let p = params(cfg, n, &geom)?;
                let u_ref = stable_total(&sys, &geom, &p)?;
                let u = evaluate_soe(&sys, &geom, &p, &soe, false)?.energy.total;
                rows.push(vec![n.to_string(), fmt((u - u_ref).abs() / u_ref.abs())]);
            }
        }
        ScanKind::Lz => {
            header = vec!["lz", "error_ewald2d_naive", "error_soewald2d"];
            for &lz in &scan.values {
                let b = &cfg.geometry;
                let geom = BoxGeometry::with_slabs(b.lx, b.ly, lz, b.sigma_top, b.sigma_bot)?;
                let sys = particles(cfg, &geom)?;
                let p = params(cfg, sys.len(), &geom)?;
                let u_ref = stable_total(&sys, &geom, &p)?;
                let naive = match evaluate_ref(&sys, &geom, &p, XiVariant::Naive, false) {
                    Ok(ev) if ev.energy.total.is_finite() => (ev.energy.total - u_ref).abs(),
                    Ok(_) | Err(quasi2d::Error::Numeric(_)) => f64::INFINITY,
                    Err(e) => return Err(e.into()),
                };
                let u = evaluate_soe(&sys, &geom, &p, &soe, false)?.energy.total;
                rows.push(vec![fmt(lz), fmt(naive), fmt((u - u_ref).abs())]);
            }
        }
        ScanKind::Force => {
            header = vec!["z", "error"];
            let geom = cfg.geometry.geometry()?;
            let sys = particles(cfg, &geom)?;
            let p = params(cfg, sys.len(), &geom)?;
            let f_ref = evaluate_ref(&sys, &geom, &p, XiVariant::Stable, true)?.forces();
            let f_soe = evaluate_soe(&sys, &geom, &p, &soe, true)?.forces();
            for (pos, err) in sys.pos.iter().zip(force_error(&f_soe, &f_ref)) {
                rows.push(vec![fmt(pos[2]), fmt(err)]);
            }
        }
    }
    let mut w = csv::Writer::from_writer(output_file(&cfg.output_dir, "scan.csv")?);
    w.write_record(&header)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    write_manifest(cfg, "scan-error")?;
    Ok(format!("{} scan points written to {}", rows.len(), cfg.output_dir.join("scan.csv").display()))
}

pub fn simulate(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry.geometry()?;
    let sys = particles(cfg, &geom)?;
    let md = cfg.md_config()?;
    let mut solver = solver(cfg, cfg.method, &geom, sys.len())?;
    let out = run_simulation(sys, &geom, solver.as_mut(), &md)?;
    let dir = &cfg.output_dir;
    write_energy_csv(&out.energies, output_file(dir, "energy.csv")?)?;
    let max_lag = cfg.md.as_ref().map_or(1, |m| m.msd_max_lag);
    out.observables.write_msd_csv(max_lag, output_file(dir, "msd.csv")?)?;
    out.observables.write_concentration_csv(output_file(dir, "concentration.csv")?)?;
    if !out.trajectory.is_empty() {
        write_trajectory_csv(&out.trajectory, output_file(dir, "trajectory.csv")?)?;
    }
    out.final_state.write_csv(output_file(dir, "final_state.csv")?)?;
    write_manifest(cfg, "simulate")?;
    Ok(format!(
        "{}: {} production steps, {} frames recorded, mean temperature {:.4}",
        solver.name(),
        md.steps,
        out.observables.frames,
        out.mean_temperature()
    ))
}

pub fn bench(cfg: &RunConfig, repeats: Option<usize>) -> Result<String> {
    let b = cfg.bench.as_ref().ok_or_else(|| CliError::Config("bench needs a [bench] section".into()))?;
    let repeats = repeats.unwrap_or(b.repeats);
    let seed = match cfg.particles {
        ParticleSource::Generated { seed, .. } => seed,
        ParticleSource::File(_) => 1,
    };
    // built once, outside the timed region
    let soe = soe(cfg)?;
    let mut w = csv::Writer::from_writer(output_file(&cfg.output_dir, "bench.csv")?);
    w.write_record(["N", "method", "seconds"])?;
    let mut rows = 0;
    for &n in &b.sizes {
        let (geom, sys) = cubic_electrolyte(n, b.density, seed)?;
        let balanced = choose_alpha(n, &geom, AlphaMode::Balanced, b.balanced_prefactor, cfg.s);
        let linear = choose_alpha(n, &geom, AlphaMode::Linear, b.linear_prefactor, cfg.s);
        let mut solvers: Vec<Box<dyn Solver>> = vec![
            Box::new(SoeSolver { params: EwaldParams::new(balanced, cfg.s, &geom)?, soe: soe.clone() }),
            Box::new(RbSolver::new(EwaldParams::new(linear, cfg.s, &geom)?, soe.clone(), &geom, cfg.rb.batch_size, cfg.rb.seed, cfg.rb.downsample)?),
        ];
        if n <= b.ewald_max_n {
            solvers.push(Box::new(ReferenceSolver { params: EwaldParams::new(balanced, cfg.s, &geom)?, variant: XiVariant::Stable }));
        }
        for s in solvers.iter_mut() {
            let t = median_seconds(s.as_mut(), &sys, &geom, repeats)?;
            w.write_record([n.to_string(), s.name().to_string(), fmt(t)])?;
            rows += 1;
        }
    }
    w.flush()?;
    write_manifest(cfg, "bench")?;
    Ok(format!("{rows} timings written to {}", cfg.output_dir.join("bench.csv").display()))
}
