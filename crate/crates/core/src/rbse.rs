//! Random-batch estimate of the nonzero Fourier modes. Modes are drawn from
//! `h(k) ~ exp(-k^2 / 4 alpha^2)` by an independence Metropolis chain on the
//! integer lattice, and the Gaussian factor cancels against the kernel.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::accum::Compensated;
use crate::error::{Error, Result};
use crate::params::{enumerate_modes, EwaldParams, KMode};
use crate::reference::{self_energy, short_range, slab_energy_forces, EnergyBreakdown};
use crate::soe::SoeApprox;
use crate::soewald::{fourier_kernel, zero_mode_soe, SortedSystem};
use crate::solver::{add_into, Evaluation, Solver};
use crate::special::erfc;
use crate::system::{validate_neutrality, BoxGeometry, ParticleSystem, Vec3};

/// `alpha * min(lx, ly)` below which the truncated Poisson form is not trusted.
pub const SMALL_BOX_THRESHOLD: f64 = 5.0;
/// Accepted moves discarded before the first sample.
pub const BURN_IN: usize = 100;
pub const DEFAULT_DOWNSAMPLE: usize = 10;
/// Fourier cutoff of the Q-constant in units of `2 alpha` (`erfc(6.5) ~ 4e-20`).
const Q_CAP: f64 = 6.5;

/// Normalisation `H = sum_{k != 0} exp(-k^2 / 4 alpha^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub value: f64,
    /// Set when `alpha * min(lx, ly) < 5`.
    pub small_box: bool,
}

/// `H` by Poisson summation, images `|n| <= 2` per axis:
/// `(alpha^2 lx ly / pi) sum exp(-alpha^2 (nx^2 lx^2 + ny^2 ly^2)) - 1`.
pub fn normalization_h(alpha: f64, geom: &BoxGeometry) -> Normalization {
    let a2 = alpha * alpha;
    let mut sum = 0.0;
    for nx in -2i32..=2 {
        for ny in -2i32..=2 {
            let (x, y) = (nx as f64 * geom.lx, ny as f64 * geom.ly);
            sum += (-a2 * (x * x + y * y)).exp();
        }
    }
    Normalization {
        value: a2 * geom.area() / PI * sum - 1.0,
        small_box: alpha * geom.lx.min(geom.ly) < SMALL_BOX_THRESHOLD,
    }
}

/// One axis of the rounded-Gaussian proposal: probability of integer `m`
/// when the continuous draw has variance `(alpha L)^2 / 2 pi^2`.
pub fn proposal_prob_1d(m: i64, alpha_l: f64) -> f64 {
    let c = PI / (2.0 * alpha_l);
    if m == 0 {
        1.0 - erfc(c)
    } else {
        let a = m.unsigned_abs() as f64;
        0.5 * (erfc(c * (2.0 * a - 1.0)) - erfc(c * (2.0 * a + 1.0)))
    }
}

/// Modes drawn for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSample {
    pub modes: Vec<KMode>,
}

/// Metropolis chain over integer modes `(mx, my) != (0, 0)` targeting
/// `exp(-pi^2 (mx^2 / (alpha lx)^2 + my^2 / (alpha ly)^2))`.
#[derive(Debug, Clone)]
pub struct ImportanceSampler {
    geom: BoxGeometry,
    alpha: f64,
    pub h_norm: Normalization,
    state: (i64, i64),
    rng: ChaCha8Rng,
    proposal: [Normal<f64>; 2],
    pub downsample: usize,
    pub accepted: u64,
    pub proposed: u64,
}

impl ImportanceSampler {
    pub fn new(alpha: f64, geom: &BoxGeometry, seed: u64, downsample: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if downsample == 0 {
            return Err(Error::Parameter("downsample rate must be at least 1".into()));
        }
        let std = |l: f64| Normal::new(0.0, alpha * l / (PI * 2f64.sqrt())).expect("positive std");
        let mut s = Self {
            geom: *geom,
            alpha,
            h_norm: normalization_h(alpha, geom),
            state: (1, 0),
            rng: ChaCha8Rng::seed_from_u64(seed),
            proposal: [std(geom.lx), std(geom.ly)],
            downsample,
            accepted: 0,
            proposed: 0,
        };
        loop {
            let m = s.propose();
            if m != (0, 0) {
                s.state = m;
                break;
            }
        }
        while s.accepted < BURN_IN as u64 {
            s.step();
        }
        s.accepted = 0;
        s.proposed = 0;
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn state(&self) -> (i64, i64) {
        self.state
    }

    /// Per-axis standard deviation of the continuous proposal.
    pub fn proposal_std(&self) -> [f64; 2] {
        [self.proposal[0].std_dev(), self.proposal[1].std_dev()]
    }

    /// Log of the unnormalised target.
    pub fn log_target(&self, m: (i64, i64)) -> f64 {
        let ax = self.alpha * self.geom.lx;
        let ay = self.alpha * self.geom.ly;
        -PI * PI * ((m.0 as f64 / ax).powi(2) + (m.1 as f64 / ay).powi(2))
    }

    pub fn proposal_prob(&self, m: (i64, i64)) -> f64 {
        proposal_prob_1d(m.0, self.alpha * self.geom.lx) * proposal_prob_1d(m.1, self.alpha * self.geom.ly)
    }

    fn propose(&mut self) -> (i64, i64) {
        let x = self.proposal[0].sample(&mut self.rng).round() as i64;
        let y = self.proposal[1].sample(&mut self.rng).round() as i64;
        (x, y)
    }

    /// One Metropolis step; returns whether the move was accepted.
    pub fn step(&mut self) -> bool {
        let new = self.propose();
        self.proposed += 1;
        let u: f64 = self.rng.random();
        if new == (0, 0) {
            return false;
        }
        let old = self.state;
        let log_ratio = self.log_target(new) - self.log_target(old) + self.proposal_prob(old).ln()
            - self.proposal_prob(new).ln();
        if log_ratio >= 0.0 || u < log_ratio.exp() {
            self.state = new;
            self.accepted += 1;
            true
        } else {
            false
        }
    }

    /// Advances `downsample` steps and returns the current mode.
    pub fn next_mode(&mut self) -> (i64, i64) {
        for _ in 0..self.downsample {
            self.step();
        }
        self.state
    }

    pub fn batch(&mut self, p: usize) -> BatchSample {
        let modes = (0..p)
            .map(|_| {
                let (mx, my) = self.next_mode();
                KMode::new(mx as i32, my as i32, &self.geom)
            })
            .collect();
        BatchSample { modes }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// `sum_{0 < |k| <= 13 alpha} erfc(k / 2 alpha) / k`; times `pi Q / A` it is
/// the position-independent part of the Fourier energy.
pub fn q_constant_sum(alpha: f64, geom: &BoxGeometry) -> f64 {
    let modes = enumerate_modes(geom, 2.0 * alpha * Q_CAP);
    let s: Compensated = modes.iter().map(|m| erfc(m.k / (2.0 * alpha)) / m.k).sum();
    s.value()
}

/// Frozen-batch estimate `(H / P) sum_eta phi_RB(k_eta)` of the pairwise part
/// of the nonzero modes, with forces (sorted order) when asked.
pub fn rb_pair_estimate(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    soe: &SoeApprox,
    h_norm: f64,
    batch: &BatchSample,
    with_forces: bool,
) -> (f64, Vec<Vec3>) {
    let n = sorted.len();
    let p = batch.modes.len();
    if p == 0 {
        return (0.0, vec![[0.0; 3]; n]);
    }
    let area = geom.area();
    let alpha = sorted.alpha();
    let parts: Vec<(f64, Vec<Vec3>)> = batch
        .modes
        .par_iter()
        .map(|m| {
            let terms = fourier_kernel(soe, alpha, m.k, false);
            let qp: Vec<C64> = sorted.weighted_phases(m.kx, m.ky);
            let pref = h_norm / p as f64 * PI / (area * m.k);
            let mut f = if with_forces { vec![[0.0; 3]; n] } else { Vec::new() };
            let e = sorted.pair_pass(&qp, [m.kx, m.ky], &terms, pref, with_forces.then_some(&mut f[..]));
            (e, f)
        })
        .collect();
    let mut energy = Compensated::default();
    let mut forces = vec![[0.0; 3]; n];
    for (e, f) in &parts {
        energy += *e;
        if with_forces {
            add_into(&mut forces, f);
        }
    }
    (energy.value(), forces)
}

/// Draws a batch and returns the Fourier energy estimate including the
/// Q-constant.
pub fn rb_energy_estimate(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    soe: &SoeApprox,
    sampler: &mut ImportanceSampler,
    p: usize,
) -> f64 {
    let batch = sampler.batch(p);
    let q2: f64 = sorted.charge.iter().map(|q| q * q).sum();
    let cq = PI * q2 / geom.area() * q_constant_sum(sorted.alpha(), geom);
    rb_pair_estimate(sorted, geom, soe, sampler.h_norm.value, &batch, false).0 + cq
}

/// Draws a batch and returns the estimated nonzero-mode forces in original
/// order. Zero mode, short range and slabs are not included.
pub fn rb_force_estimate(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    soe: &SoeApprox,
    sampler: &mut ImportanceSampler,
    p: usize,
) -> Vec<Vec3> {
    let batch = sampler.batch(p);
    let (_, f) = rb_pair_estimate(sorted, geom, soe, sampler.h_norm.value, &batch, true);
    sorted.unsort(&f)
}

/// Sample mean, standard error of the mean and unbiased variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
}

pub fn variance_diagnostics(samples: &[f64]) -> Result<SampleStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least two samples, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let variance = ss / (n - 1) as f64;
    Ok(SampleStats { mean, stderr: (variance / n as f64).sqrt(), variance })
}

/// `batch_index,estimate,running_mean,running_stderr` rows.
pub fn write_diagnostics_csv<W: Write>(samples: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["batch_index", "estimate", "running_mean", "running_stderr"])?;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for (i, &x) in samples.iter().enumerate() {
        sum += x;
        sum2 += x * x;
        let n = (i + 1) as f64;
        let mean = sum / n;
        let se = if i == 0 { f64::NAN } else { ((sum2 - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt() };
        w.write_record([i.to_string(), format!("{x:?}"), format!("{mean:?}"), format!("{se:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Random-batch solver. The zero mode, short range, self and slab parts are
/// computed exactly, as in the SOE solver.
#[derive(Debug, Clone)]
pub struct RbSolver {
    pub params: EwaldParams,
    pub soe: SoeApprox,
    pub sampler: ImportanceSampler,
    pub batch_size: usize,
    q_sum: f64,
    geom: BoxGeometry,
}

impl RbSolver {
    pub fn new(params: EwaldParams, soe: SoeApprox, geom: &BoxGeometry, batch_size: usize, seed: u64, downsample: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        let sampler = ImportanceSampler::new(params.alpha, geom, seed, downsample)?;
        let q_sum = q_constant_sum(params.alpha, geom);
        Ok(Self { params, soe, sampler, batch_size, q_sum, geom: *geom })
    }

    /// Evaluation with a given batch instead of a fresh draw.
    pub fn evaluate_batch(
        &self,
        sys: &ParticleSystem,
        geom: &BoxGeometry,
        batch: &BatchSample,
        with_forces: bool,
    ) -> Result<Evaluation> {
        validate_neutrality(sys, geom)?;
        sys.check_in_slab(geom)?;
        self.params.check_min_image(geom)?;
        if *geom != self.geom {
            return Err(Error::Geometry("box differs from the one the sampler was built for".into()));
        }
        let alpha = self.params.alpha;
        let sorted = SortedSystem::new(sys, &self.soe, alpha);
        let (u_s, short) = short_range(sys, geom, alpha, self.params.r_c, with_forces)?;
        let (pairs, fsorted) = rb_pair_estimate(&sorted, geom, &self.soe, self.sampler.h_norm.value, batch, with_forces);
        let u_l_k = pairs + PI * sys.sum_q2() / geom.area() * self.q_sum;
        let (u_l_0, zero) = zero_mode_soe(&sorted, geom, &self.soe, with_forces)?;
        let (u_ps, slab) = slab_energy_forces(sys, geom);
        let energy = EnergyBreakdown::assemble(u_s, u_l_k, u_l_0, self_energy(sys, alpha), u_ps);
        if !energy.total.is_finite() {
            return Err(Error::Numeric("random-batch energy is not finite".into()));
        }
        let mut eval = Evaluation::zeros(sys.len());
        eval.energy = energy;
        if with_forces {
            eval.short = short;
            eval.fourier = sorted.unsort(&fsorted);
            eval.zero = zero;
            eval.slab = slab;
        }
        Ok(eval)
    }
}

impl Solver for RbSolver {
    fn name(&self) -> &'static str {
        "rbse2d"
    }

    fn evaluate(&mut self, sys: &ParticleSystem, geom: &BoxGeometry, with_forces: bool) -> Result<Evaluation> {
        let batch = self.sampler.batch(self.batch_size);
        self.evaluate_batch(sys, geom, &batch, with_forces)
    }
}
