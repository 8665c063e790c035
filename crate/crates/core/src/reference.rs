//! Reference solver: closed-form slab Ewald sums with an O(N^2) Fourier part.
//!
//! The Fourier kernels `e^{kz} erfc(k/2a + a z)` and `e^{-kz} erfc(k/2a - a z)`
//! are evaluated through `erfcx`, which keeps every intermediate finite; the
//! literal products are kept as [`XiVariant::Naive`] to show how they fail.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::accum::Compensated;
use crate::cells::CellList;
use crate::error::{Error, Result};
use crate::params::EwaldParams;
use crate::solver::{Evaluation, Solver};
use crate::special::{erf, erfc, erfcx, FRAC_1_SQRT_PI};
use crate::system::{validate_neutrality, BoxGeometry, ParticleSystem, Vec3};

/// Energy split: short-range, nonzero Fourier modes, zero mode, Gaussian
/// self-interaction (subtracted) and particle-slab interaction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub u_s: f64,
    pub u_l_k: f64,
    pub u_l_0: f64,
    pub u_self: f64,
    pub u_ps: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn assemble(u_s: f64, u_l_k: f64, u_l_0: f64, u_self: f64, u_ps: f64) -> Self {
        Self { u_s, u_l_k, u_l_0, u_self, u_ps, total: u_s + u_l_k + u_l_0 - u_self + u_ps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiVariant {
    Stable,
    Naive,
}

/// The pair `(e^{kz} erfc(k/2a + a z), e^{-kz} erfc(k/2a - a z))`.
pub fn xi_closed(k: f64, z: f64, alpha: f64, variant: XiVariant) -> Result<(f64, f64)> {
    if !(k > 0.0) {
        return Err(Error::Parameter(format!("wavenumber must be positive, got {k}")));
    }
    Ok(match variant {
        XiVariant::Naive => (
            (k * z).exp() * erfc(k / (2.0 * alpha) + alpha * z),
            (-k * z).exp() * erfc(k / (2.0 * alpha) - alpha * z),
        ),
        XiVariant::Stable => {
            let z = z.abs();
            let (p, m, _) = xi_stable(k, z, alpha);
            (p, m)
        }
    })
}

/// Stable kernels for `z >= 0` plus the shared Gaussian factor
/// `exp(-k^2/4a^2 - a^2 z^2)`.
#[inline]
fn xi_stable(k: f64, z: f64, alpha: f64) -> (f64, f64, f64) {
    let u = k / (2.0 * alpha);
    let az = alpha * z;
    let g = (-u * u - az * az).exp();
    let plus = erfcx(u + az) * g;
    let minus = if az > u { 2.0 * (-k * z).exp() - erfcx(az - u) * g } else { erfcx(u - az) * g };
    (plus, minus, g)
}

/// z-derivatives of the stable kernels at `z >= 0`.
pub fn dxi_closed(k: f64, z: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(k > 0.0) {
        return Err(Error::Parameter(format!("wavenumber must be positive, got {k}")));
    }
    let (p, m, g) = xi_stable(k, z, alpha);
    let e = 2.0 * alpha * FRAC_1_SQRT_PI * g;
    Ok((k * p - e, -k * m + e))
}

fn zeros(n: usize) -> Vec<Vec3> {
    vec![[0.0; 3]; n]
}

/// Real-space `erfc` part over minimum-image pairs within `r_c`.
pub fn short_range(
    sys: &ParticleSystem,
    geom: &BoxGeometry,
    alpha: f64,
    r_c: f64,
    with_forces: bool,
) -> Result<(f64, Vec<Vec3>)> {
    let n = sys.len();
    let mut forces = zeros(n);
    if n < 2 {
        return Ok((0.0, forces));
    }
    let cells = CellList::build(&sys.pos, geom, r_c);
    let mut energy = Compensated::default();
    let mut clash = None;
    let two_a_sqrtpi = 2.0 * alpha * FRAC_1_SQRT_PI;
    cells.for_each_pair(&sys.pos, geom, |i, j, d, r2| {
        let qq = sys.charge[i] * sys.charge[j];
        if r2 == 0.0 {
            if qq != 0.0 && clash.is_none() {
                clash = Some((i, j));
            }
            return;
        }
        let r = r2.sqrt();
        let c = erfc(alpha * r);
        energy += qq * c / r;
        if with_forces {
            let mag = qq * (c / r + two_a_sqrtpi * (-alpha * alpha * r2).exp()) / r2;
            for a in 0..3 {
                forces[i][a] += mag * d[a];
                forces[j][a] -= mag * d[a];
            }
        }
    });
    if let Some((i, j)) = clash {
        return Err(Error::Coincident(i, j));
    }
    Ok((energy.value(), forces))
}

/// Gaussian self-interaction `(a/sqrt(pi)) sum q^2`.
pub fn self_energy(sys: &ParticleSystem, alpha: f64) -> f64 {
    alpha * FRAC_1_SQRT_PI * sys.sum_q2()
}

/// Potential of the two uniformly charged planes at height `z`.
pub fn slab_potential(geom: &BoxGeometry, z: f64) -> f64 {
    -2.0 * PI * (geom.sigma_top * (geom.lz - z) + geom.sigma_bot * z)
}

/// Interaction of the particles with the charged planes and the resulting
/// uniform z-field.
pub fn slab_energy_forces(sys: &ParticleSystem, geom: &BoxGeometry) -> (f64, Vec<Vec3>) {
    let field = 2.0 * PI * (geom.sigma_bot - geom.sigma_top);
    let energy: Compensated = sys.charge.iter().zip(&sys.pos).map(|(q, p)| q * slab_potential(geom, p[2])).sum();
    let forces = sys.charge.iter().map(|q| [0.0, 0.0, q * field]).collect();
    (energy.value(), forces)
}

/// Zero-mode energy over all ordered pairs including `i = j`.
pub fn zero_mode_ref(sys: &ParticleSystem, geom: &BoxGeometry, alpha: f64, with_forces: bool) -> (f64, Vec<Vec3>) {
    let n = sys.len();
    let pre = -2.0 * PI / geom.area();
    let diag = 1.0 / (alpha * crate::special::SQRT_PI);
    let mut pairs = Compensated::default();
    let mut forces = zeros(n);
    for i in 0..n {
        for j in 0..i {
            let dz = sys.pos[i][2] - sys.pos[j][2];
            let z = dz.abs();
            let qq = sys.charge[i] * sys.charge[j];
            pairs += qq * (z * erf(alpha * z) + (-alpha * alpha * z * z).exp() * diag);
            if with_forces {
                let f = -pre * qq * erf(alpha * dz);
                forces[i][2] += f;
                forces[j][2] -= f;
            }
        }
    }
    (pre * (pairs.value() + 0.5 * diag * sys.sum_q2()), forces)
}

/// Nonzero Fourier modes with the O(N^2) pair sum per mode. Both members of
/// every `{k, -k}` pair are summed and the imaginary residue is checked.
pub fn fourier_ref(
    sys: &ParticleSystem,
    geom: &BoxGeometry,
    params: &EwaldParams,
    variant: XiVariant,
    with_forces: bool,
) -> Result<(f64, Vec<Vec3>)> {
    let n = sys.len();
    let alpha = params.alpha;
    let area = geom.area();
    let q2 = sys.sum_q2();
    let per_mode: Vec<(C64, f64, Vec<Vec3>)> = params
        .kmodes
        .par_iter()
        .map(|m| {
            let k = m.k;
            let phase: Vec<C64> = sys.pos.iter().map(|p| C64::from_polar(1.0, m.kx * p[0] + m.ky * p[1])).collect();
            let mut re = Compensated::default();
            let mut im = Compensated::default();
            let mut forces = if with_forces { zeros(n) } else { Vec::new() };
            let pre = PI / (area * k);
            for i in 0..n {
                for j in 0..i {
                    let qq = sys.charge[i] * sys.charge[j];
                    let dz = sys.pos[i][2] - sys.pos[j][2];
                    let (p, mi) = match variant {
                        XiVariant::Stable => {
                            let (p, mi, _) = xi_stable(k, dz.abs(), alpha);
                            (p, mi)
                        }
                        XiVariant::Naive => xi_closed(k, dz.abs(), alpha, variant).expect("k > 0"),
                    };
                    let e = phase[i] * phase[j].conj();
                    let t = qq * (p + mi);
                    re += t * e.re;
                    im += t * e.im;
                    if with_forces {
                        let fxy = pre * t * e.im;
                        let fz = -pre * qq * e.re * (p - mi) * k * dz.signum();
                        let f = [fxy * m.kx, fxy * m.ky, fz];
                        for a in 0..3 {
                            forces[i][a] += f[a];
                            forces[j][a] -= f[a];
                        }
                    }
                }
            }
            let self_part = PI * q2 / (k * area) * erfc(k / (2.0 * alpha));
            (C64::new(pre * re.value(), pre * im.value()), self_part, forces)
        })
        .collect();
    let mut total = Compensated::default();
    let mut imag = Compensated::default();
    let mut scale = 0.0f64;
    let mut forces = zeros(n);
    for (v, self_part, f) in &per_mode {
        total += v.re;
        total += *self_part;
        imag += v.im;
        scale += v.re.abs() + self_part;
        if with_forces {
            crate::solver::add_into(&mut forces, f);
        }
    }
    let residue = imag.value().abs();
    if variant == XiVariant::Stable && residue > 1e-12 * scale.max(1e-300) && residue > 1e-14 {
        return Err(Error::Numeric(format!("Fourier energy has imaginary residue {residue:e}")));
    }
    Ok((total.value(), forces))
}

/// Full reference evaluation.
pub fn evaluate_ref(
    sys: &ParticleSystem,
    geom: &BoxGeometry,
    params: &EwaldParams,
    variant: XiVariant,
    with_forces: bool,
) -> Result<Evaluation> {
    validate_neutrality(sys, geom)?;
    sys.check_in_slab(geom)?;
    params.check_min_image(geom)?;
    let (u_s, short) = short_range(sys, geom, params.alpha, params.r_c, with_forces)?;
    let (u_l_k, fourier) = fourier_ref(sys, geom, params, variant, with_forces)?;
    let (u_l_0, zero) = zero_mode_ref(sys, geom, params.alpha, with_forces);
    let (u_ps, slab) = slab_energy_forces(sys, geom);
    let energy = EnergyBreakdown::assemble(u_s, u_l_k, u_l_0, self_energy(sys, params.alpha), u_ps);
    let n = sys.len();
    let keep = |f: Vec<Vec3>| if with_forces && f.len() == n { f } else { zeros(n) };
    Ok(Evaluation { energy, short: keep(short), fourier: keep(fourier), zero: keep(zero), slab: keep(slab) })
}

pub fn total_energy_ref(sys: &ParticleSystem, geom: &BoxGeometry, params: &EwaldParams) -> Result<EnergyBreakdown> {
    Ok(evaluate_ref(sys, geom, params, XiVariant::Stable, false)?.energy)
}

/// The reference solver behind the [`Solver`] interface.
#[derive(Debug, Clone)]
pub struct ReferenceSolver {
    pub params: EwaldParams,
    pub variant: XiVariant,
}

impl Solver for ReferenceSolver {
    fn name(&self) -> &'static str {
        match self.variant {
            XiVariant::Stable => "ewald2d",
            XiVariant::Naive => "ewald2d-naive",
        }
    }

    fn evaluate(&mut self, sys: &ParticleSystem, geom: &BoxGeometry, with_forces: bool) -> Result<Evaluation> {
        evaluate_ref(sys, geom, &self.params, self.variant, with_forces)
    }
}

/// Plain image sum of `1/r` over images `|M| <= R sqrt(lx ly)` and the same
/// sum with the continuum estimate of the neglected images added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSum {
    pub truncated: f64,
    pub corrected: f64,
    pub images: usize,
}

/// Brute-force image sum for a neutral particle system without slabs.
///
/// Images are kept inside a disc; the far field of the discarded images of a
/// neutral system starts at quadrupole order and is replaced by its continuum
/// integral `(2 pi / A) (rho^2/4 - z^2/2) / R_eff` per pair, where
/// `pi R_eff^2 = A * images`. This takes the residual from O(1/R) to about
/// O(1/R^3).
pub fn direct_lattice_sum(sys: &ParticleSystem, geom: &BoxGeometry, radius: usize) -> Result<LatticeSum> {
    if geom.has_slabs() {
        return Err(Error::Parameter("the image sum does not cover charged slabs".into()));
    }
    validate_neutrality(sys, geom)?;
    if radius < 1 {
        return Err(Error::Parameter("image radius must be at least 1".into()));
    }
    let scale = (geom.lx * geom.ly).sqrt();
    let rmax = radius as f64 * scale;
    let mxmax = (rmax / geom.lx).ceil() as i64;
    let mymax = (rmax / geom.ly).ceil() as i64;
    let mut images: Vec<(f64, f64)> = Vec::new();
    for mx in -mxmax..=mxmax {
        for my in -mymax..=mymax {
            let (x, y) = (mx as f64 * geom.lx, my as f64 * geom.ly);
            if x * x + y * y <= rmax * rmax {
                images.push((x, y));
            }
        }
    }
    images.sort_by(|a, b| (a.0 * a.0 + a.1 * a.1).total_cmp(&(b.0 * b.0 + b.1 * b.1)));
    let area = geom.area();
    let r_eff = (images.len() as f64 * area / PI).sqrt();
    let n = sys.len();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sum = Compensated::default();
            let mut tail = Compensated::default();
            for j in 0..=i {
                let d = geom.min_image([
                    sys.pos[i][0] - sys.pos[j][0],
                    sys.pos[i][1] - sys.pos[j][1],
                    sys.pos[i][2] - sys.pos[j][2],
                ]);
                let w = if i == j { 0.5 } else { 1.0 };
                let qq = w * sys.charge[i] * sys.charge[j];
                let mut s = Compensated::default();
                for &(x, y) in &images {
                    let r2 = (d[0] + x).powi(2) + (d[1] + y).powi(2) + d[2] * d[2];
                    if r2 > 0.0 {
                        s += 1.0 / r2.sqrt();
                    }
                }
                sum += qq * s.value();
                let rho2 = d[0] * d[0] + d[1] * d[1];
                tail += qq * 2.0 * PI / area * (0.25 * rho2 - 0.5 * d[2] * d[2]) / r_eff;
            }
            (sum.value(), tail.value())
        })
        .collect();
    let truncated: Compensated = rows.iter().map(|r| r.0).sum();
    let tail: Compensated = rows.iter().map(|r| r.1).sum();
    Ok(LatticeSum {
        truncated: truncated.value(),
        corrected: truncated.value() + tail.value(),
        images: images.len(),
    })
}
