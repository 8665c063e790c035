//! Slab Ewald sums with sum-of-exponentials kernels. Particles are sorted by
//! height once per evaluation; after that every Fourier mode costs O(N M)
//! through one-dimensional recursions in which all exponents are
//! nonpositive.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::accum::Compensated;
use crate::error::{Error, Result};
use crate::params::{EwaldParams, KMode};
use crate::reference::{self_energy, short_range, slab_energy_forces, EnergyBreakdown};
use crate::soe::{SoeApprox, SINGULAR_TOL};
use crate::solver::{Evaluation, Solver};
use crate::sort::sort_by_z;
use crate::special::{erfc, FRAC_1_SQRT_PI, SQRT_PI};
use crate::system::{validate_neutrality, BoxGeometry, ParticleSystem, Vec3};

const ZERO: C64 = C64::new(0.0, 0.0);

/// `S = sum_{j<i} q_i q_j e^{i k.(rho_i - rho_j)} e^{-beta (z_i - z_j)}` for
/// particles already sorted by height, via the running sums
/// `A_i = A_{i-1} e^{-beta (z_{i-1} - z_{i-2})} + q_{i-1} e^{-i k.rho_{i-1}}`.
pub fn recursive_pair_sum(charge: &[f64], pos: &[Vec3], kx: f64, ky: f64, beta: C64) -> C64 {
    debug_assert!(beta.re >= 0.0, "growing exponential in recursion");
    debug_assert!(pos.windows(2).all(|w| w[0][2] <= w[1][2]), "particles not sorted by z");
    let n = charge.len();
    if n < 2 {
        return ZERO;
    }
    let phase = |p: &Vec3| C64::from_polar(1.0, kx * p[0] + ky * p[1]);
    let mut a = ZERO;
    let mut s = ZERO;
    for i in 1..n {
        let prev_gap = if i >= 2 { pos[i - 1][2] - pos[i - 2][2] } else { 0.0 };
        a = a * (-beta * prev_gap).exp() + charge[i - 1] * phase(&pos[i - 1]).conj();
        s += charge[i] * phase(&pos[i]) * (-beta * (pos[i][2] - pos[i - 1][2])).exp() * a;
    }
    s
}

/// Where the per-gap decay factors `e^{-beta (z_i - z_{i-1})}` of a term come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `beta = 0`.
    None,
    /// Row of the per-evaluation table for SOE exponent `l`.
    Soe(usize),
    /// Real exponent, evaluated per mode.
    Real(f64),
}

/// One kernel term `(c0 + c1 z) e^{-beta z}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTerm {
    pub decay: Decay,
    pub beta: C64,
    pub c0: C64,
    pub c1: C64,
}

/// Terms of the SOE form of `e^{kz} erfc(k/2a + az) + e^{-kz} erfc(k/2a - az)`.
/// The factor `e^{-k^2/4a^2}` is left out when `with_gaussian` is false.
pub fn fourier_kernel(soe: &SoeApprox, alpha: f64, k: f64, with_gaussian: bool) -> Vec<KernelTerm> {
    let mut pre = 2.0 * alpha * FRAC_1_SQRT_PI;
    if with_gaussian {
        pre *= (-k * k / (4.0 * alpha * alpha)).exp();
    }
    let mut shared = KernelTerm { decay: Decay::Real(k), beta: C64::new(k, 0.0), c0: ZERO, c1: ZERO };
    let mut out = Vec::with_capacity(soe.m() + 1);
    for (l, t) in soe.terms.iter().enumerate() {
        let a = alpha * t.s;
        if (a - k).norm() < SINGULAR_TOL * k {
            // limit of w (2a e^{-kz} - 2k e^{-az}) / (a^2 - k^2)
            shared.c0 += pre * t.w / k;
            shared.c1 += pre * t.w;
        } else {
            let c = pre * t.w / ((a - k) * (a + k));
            shared.c0 += 2.0 * a * c;
            out.push(KernelTerm { decay: Decay::Soe(l), beta: a, c0: -2.0 * k * c, c1: ZERO });
        }
    }
    out.push(shared);
    out
}

/// Terms of the SOE form of `z erf(az) + e^{-a^2 z^2} / (a sqrt(pi))`.
pub fn zero_mode_kernel(soe: &SoeApprox, alpha: f64) -> Vec<KernelTerm> {
    let mut linear = ZERO;
    let mut out = Vec::with_capacity(soe.m() + 1);
    for (l, t) in soe.terms.iter().enumerate() {
        let slope = 2.0 * t.w / (t.s * SQRT_PI);
        linear += slope;
        out.push(KernelTerm {
            decay: Decay::Soe(l),
            beta: alpha * t.s,
            c0: t.w / (alpha * SQRT_PI),
            c1: -slope,
        });
    }
    out.push(KernelTerm { decay: Decay::None, beta: ZERO, c0: ZERO, c1: linear });
    out
}

/// Value of a kernel at `z >= 0`.
pub fn kernel_value(terms: &[KernelTerm], z: f64) -> f64 {
    terms.iter().fold(ZERO, |acc, t| acc + (t.c0 + t.c1 * z) * (-t.beta * z).exp()).re
}

/// A height-sorted copy of the particle data with the per-gap decay table
/// of every SOE exponent.
#[derive(Debug, Clone)]
pub struct SortedSystem {
    pub order: Vec<usize>,
    pub charge: Vec<f64>,
    pub pos: Vec<Vec3>,
    /// `gaps[i] = z_i - z_{i-1}`, `gaps[0] = 0`.
    pub gaps: Vec<f64>,
    decay: Vec<Vec<C64>>,
    alpha: f64,
}

impl SortedSystem {
    pub fn new(sys: &ParticleSystem, soe: &SoeApprox, alpha: f64) -> Self {
        let z: Vec<f64> = sys.pos.iter().map(|p| p[2]).collect();
        let order = sort_by_z(&z);
        let charge: Vec<f64> = order.iter().map(|&i| sys.charge[i]).collect();
        let pos: Vec<Vec3> = order.iter().map(|&i| sys.pos[i]).collect();
        let gaps: Vec<f64> =
            (0..pos.len()).map(|i| if i == 0 { 0.0 } else { pos[i][2] - pos[i - 1][2] }).collect();
        let decay = soe
            .terms
            .iter()
            .map(|t| {
                let b = alpha * t.s;
                debug_assert!(b.re >= 0.0, "SOE exponent with negative real part");
                gaps.iter().map(|&d| (-b * d).exp()).collect()
            })
            .collect();
        Self { order, charge, pos, gaps, decay, alpha }
    }

    pub fn len(&self) -> usize {
        self.charge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charge.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `q_j e^{-i k.rho_j}` in sorted order.
    pub fn weighted_phases(&self, kx: f64, ky: f64) -> Vec<C64> {
        self.charge.iter().zip(&self.pos).map(|(q, p)| q * C64::from_polar(1.0, -(kx * p[0] + ky * p[1]))).collect()
    }

    /// Scatters sorted-order forces back to the original particle order.
    pub fn unsort(&self, sorted: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![[0.0; 3]; sorted.len()];
        for (s, &i) in self.order.iter().enumerate() {
            out[i] = sorted[s];
        }
        out
    }

    /// `pref * sum_{j<i} q_i q_j Re[e^{i k.rho_ij} K(z_i - z_j)]` and, when
    /// `forces` is given, adds minus its gradient (sorted order) into it.
    /// `qp` holds `q_j e^{-i k.rho_j}`.
    pub fn pair_pass(
        &self,
        qp: &[C64],
        kvec: [f64; 2],
        terms: &[KernelTerm],
        pref: f64,
        forces: Option<&mut [Vec3]>,
    ) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mut energy = ZERO;
        let want_forces = forces.is_some();
        let (mut wsum, mut gdiff) = if want_forces { (vec![ZERO; n], vec![ZERO; n]) } else { (Vec::new(), Vec::new()) };
        for t in terms {
            debug_assert!(t.beta.re >= 0.0, "growing exponential in recursion");
            let real_decay: Vec<C64>;
            let factors: Option<&[C64]> = match t.decay {
                Decay::None => None,
                Decay::Soe(l) => Some(&self.decay[l]),
                Decay::Real(b) => {
                    debug_assert!(b >= 0.0);
                    real_decay = self.gaps.iter().map(|&d| C64::new((-b * d).exp(), 0.0)).collect();
                    Some(&real_decay)
                }
            };
            let e_at = |i: usize| factors.map_or(C64::new(1.0, 0.0), |f| f[i]);
            let has_z = t.c1 != ZERO;
            let g0 = t.c1 - t.beta * t.c0;
            let g1 = -t.beta * t.c1;
            let (mut l, mut lz) = (ZERO, ZERO);
            let mut acc = ZERO;
            for i in 1..n {
                let e = e_at(i);
                let tt = l + qp[i - 1];
                if has_z {
                    lz = e * (lz + self.gaps[i] * tt);
                }
                l = e * tt;
                let w = t.c0 * l + t.c1 * lz;
                acc += qp[i].conj() * w;
                if want_forces {
                    wsum[i] += w;
                    gdiff[i] += g0 * l + g1 * lz;
                }
            }
            energy += acc;
            if want_forces {
                let (mut r, mut rz) = (ZERO, ZERO);
                for i in (0..n - 1).rev() {
                    let e = e_at(i + 1);
                    let tt = r + qp[i + 1];
                    if has_z {
                        rz = e * (rz + self.gaps[i + 1] * tt);
                    }
                    r = e * tt;
                    wsum[i] += t.c0 * r + t.c1 * rz;
                    gdiff[i] -= g0 * r + g1 * rz;
                }
            }
        }
        if let Some(f) = forces {
            for i in 0..n {
                let qpi = qp[i].conj();
                let fxy = pref * (qpi * wsum[i]).im;
                f[i][0] += fxy * kvec[0];
                f[i][1] += fxy * kvec[1];
                f[i][2] -= pref * (qpi * gdiff[i]).re;
            }
        }
        pref * energy.re
    }
}

/// Pairwise and constant parts of the energy of one canonical mode together
/// with its mirror `-k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEnergy {
    pub pairs: f64,
    pub constant: f64,
}

/// Energy of the mode pair `{k, -k}` (both members), pairwise part by the
/// recursion and the position-independent `pi Q erfc(k/2a) / (k A)` part.
pub fn fourier_mode_energy_soe(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    mode: &KMode,
    soe: &SoeApprox,
) -> ModeEnergy {
    let alpha = sorted.alpha;
    let area = geom.area();
    let terms = fourier_kernel(soe, alpha, mode.k, true);
    let qp = sorted.weighted_phases(mode.kx, mode.ky);
    let pairs = sorted.pair_pass(&qp, [mode.kx, mode.ky], &terms, 2.0 * PI / (area * mode.k), None);
    let q2: f64 = sorted.charge.iter().map(|q| q * q).sum();
    ModeEnergy { pairs, constant: 2.0 * PI * q2 / (mode.k * area) * erfc(mode.k / (2.0 * alpha)) }
}

/// Zero-mode energy `-(2 pi / A) [sum_{j<i} q_i q_j phi(z_ij) + Q / (2 a sqrt(pi))]`
/// and its z-forces in original order.
pub fn zero_mode_soe(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    soe: &SoeApprox,
    with_forces: bool,
) -> Result<(f64, Vec<Vec3>)> {
    let n = sorted.len();
    let alpha = sorted.alpha;
    let pre = -2.0 * PI / geom.area();
    let terms = zero_mode_kernel(soe, alpha);
    let qp: Vec<C64> = sorted.charge.iter().map(|&q| C64::new(q, 0.0)).collect();
    let mut f = vec![[0.0; 3]; n];
    let pairs = sorted.pair_pass(&qp, [0.0, 0.0], &terms, pre, with_forces.then_some(&mut f[..]));
    let q2: f64 = sorted.charge.iter().map(|q| q * q).sum();
    let energy = pairs + pre * 0.5 * q2 / (alpha * SQRT_PI);
    if !energy.is_finite() {
        return Err(Error::Numeric("zero-mode energy is not finite".into()));
    }
    Ok((energy, sorted.unsort(&f)))
}

/// Groups canonical modes by `mx` with `my` ascending, so that phases can
/// be advanced by one multiplication per step in `my`.
fn mode_groups(params: &EwaldParams) -> Vec<Vec<KMode>> {
    let mut modes: Vec<KMode> = params.half_modes().copied().collect();
    modes.sort_by_key(|m| (m.mx, m.my));
    let mut groups: Vec<Vec<KMode>> = Vec::new();
    for m in modes {
        match groups.last_mut() {
            Some(g) if g[0].mx == m.mx => g.push(m),
            _ => groups.push(vec![m]),
        }
    }
    groups
}

/// All nonzero Fourier modes: energy (pairwise plus constant) and forces in
/// original order.
pub fn fourier_soe(
    sorted: &SortedSystem,
    geom: &BoxGeometry,
    params: &EwaldParams,
    soe: &SoeApprox,
    with_forces: bool,
) -> Result<(f64, Vec<Vec3>)> {
    let n = sorted.len();
    let alpha = sorted.alpha;
    let area = geom.area();
    let q2: f64 = sorted.charge.iter().map(|q| q * q).sum();
    let ty = 2.0 * PI / geom.ly;
    let step_y: Vec<C64> = sorted.pos.iter().map(|p| C64::from_polar(1.0, -ty * p[1])).collect();
    let per_group: Vec<(Compensated, Vec<Vec3>)> = mode_groups(params)
        .par_iter()
        .map(|group| {
            let mut energy = Compensated::default();
            let mut forces = if with_forces { vec![[0.0; 3]; n] } else { Vec::new() };
            let mut qp: Vec<C64> = Vec::new();
            let mut last_my = None;
            for m in group {
                if last_my == Some(m.my - 1) {
                    for (v, s) in qp.iter_mut().zip(&step_y) {
                        *v *= s;
                    }
                } else {
                    qp = sorted.weighted_phases(m.kx, m.ky);
                }
                last_my = Some(m.my);
                let terms = fourier_kernel(soe, alpha, m.k, true);
                let pref = 2.0 * PI / (area * m.k);
                let f = with_forces.then_some(&mut forces[..]);
                energy += sorted.pair_pass(&qp, [m.kx, m.ky], &terms, pref, f);
                energy += 2.0 * PI * q2 / (m.k * area) * erfc(m.k / (2.0 * alpha));
            }
            (energy, forces)
        })
        .collect();
    let mut energy = Compensated::default();
    let mut forces = vec![[0.0; 3]; n];
    for (e, f) in &per_group {
        energy += e.value();
        if with_forces {
            crate::solver::add_into(&mut forces, f);
        }
    }
    let energy = energy.value();
    if !energy.is_finite() {
        return Err(Error::Numeric("Fourier energy is not finite".into()));
    }
    Ok((energy, sorted.unsort(&forces)))
}

/// Full evaluation with SOE kernels. Short-range, self and slab parts are
/// shared with the reference solver.
pub fn evaluate_soe(
    sys: &ParticleSystem,
    geom: &BoxGeometry,
    params: &EwaldParams,
    soe: &SoeApprox,
    with_forces: bool,
) -> Result<Evaluation> {
    validate_neutrality(sys, geom)?;
    sys.check_in_slab(geom)?;
    params.check_min_image(geom)?;
    let sorted = SortedSystem::new(sys, soe, params.alpha);
    let (u_s, short) = short_range(sys, geom, params.alpha, params.r_c, with_forces)?;
    let (u_l_k, fourier) = fourier_soe(&sorted, geom, params, soe, with_forces)?;
    let (u_l_0, zero) = zero_mode_soe(&sorted, geom, soe, with_forces)?;
    let (u_ps, slab) = slab_energy_forces(sys, geom);
    let energy = EnergyBreakdown::assemble(u_s, u_l_k, u_l_0, self_energy(sys, params.alpha), u_ps);
    let mut eval = Evaluation::zeros(sys.len());
    eval.energy = energy;
    if with_forces {
        eval.short = short;
        eval.fourier = fourier;
        eval.zero = zero;
        eval.slab = slab;
    }
    Ok(eval)
}

pub fn total_energy_soe(
    sys: &ParticleSystem,
    geom: &BoxGeometry,
    params: &EwaldParams,
    soe: &SoeApprox,
) -> Result<EnergyBreakdown> {
    Ok(evaluate_soe(sys, geom, params, soe, false)?.energy)
}

/// Total forces (all parts including the slab field).
pub fn forces_soe(sys: &ParticleSystem, geom: &BoxGeometry, params: &EwaldParams, soe: &SoeApprox) -> Result<Vec<Vec3>> {
    Ok(evaluate_soe(sys, geom, params, soe, true)?.forces())
}

#[derive(Debug, Clone)]
pub struct SoeSolver {
    pub params: EwaldParams,
    pub soe: SoeApprox,
}

impl Solver for SoeSolver {
    fn name(&self) -> &'static str {
        "soewald2d"
    }

    fn evaluate(&mut self, sys: &ParticleSystem, geom: &BoxGeometry, with_forces: bool) -> Result<Evaluation> {
        evaluate_soe(sys, geom, &self.params, &self.soe, with_forces)
    }
}
