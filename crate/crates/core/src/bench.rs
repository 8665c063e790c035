//! Wall-time measurements of one energy+force evaluation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::solver::Solver;
use crate::system::{BoxGeometry, ParticleSystem};

/// Cubic box holding `n` unit ions (half of each sign) at number density `density`.
pub fn cubic_electrolyte(n: usize, density: f64, seed: u64) -> Result<(BoxGeometry, ParticleSystem)> {
    if n % 2 != 0 || !(density > 0.0) {
        return Err(Error::Parameter(format!("need an even particle count and positive density, got {n} and {density}")));
    }
    let l = (n.max(1) as f64 / density).cbrt();
    let geom = BoxGeometry::new(l, l, l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = ParticleSystem::random_ions(n / 2, n / 2, 1.0, &geom, 0.0, &mut rng);
    Ok((geom, sys))
}

/// Median over `repeats` timed evaluations with forces, in seconds.
pub fn median_seconds(solver: &mut dyn Solver, sys: &ParticleSystem, geom: &BoxGeometry, repeats: usize) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::Parameter("need at least one repeat".into()));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let ev = solver.evaluate(sys, geom, true)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(ev);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
