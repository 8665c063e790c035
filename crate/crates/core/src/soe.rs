//! Sum-of-exponentials approximation of the unit Gaussian,
//! `exp(-x^2) ~ sum_l w_l exp(-s_l |x|)`, and the closed forms it induces for
//! the slab Ewald kernels.
//!
//! Coefficients come from trapezoidal quadrature of the inverse Laplace
//! representation `exp(-x^2) = (2 pi i)^{-1} \int e^z sqrt(pi/z) e^{-2 sqrt(z) x} dz`
//! on a hyperbolic contour `z(u) = mu (1 + sin(i u - a))`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::special::{FRAC_1_SQRT_PI, SQRT_PI};

/// One exponential `w exp(-s x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoeTerm {
    pub w: C64,
    pub s: C64,
}

/// Certified sum-of-exponentials approximation of `exp(-x^2)` on
/// `[0, domain_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoeApprox {
    pub terms: Vec<SoeTerm>,
    pub eps_certified: f64,
    pub domain_max: f64,
}

/// Hyperbolic contour parameters: scale `mu`, opening angle `angle` and step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub mu: f64,
    pub angle: f64,
    pub h: f64,
}

pub const DEFAULT_DOMAIN: f64 = 20.0;
const DEFAULT_GRID: usize = 20_001;
const TUNE_GRID: usize = 2_001;
/// Relative distance below which `alpha s_l` and `k` are treated as equal.
pub const SINGULAR_TOL: f64 = 1e-8;

/// Quadrature nodes on the contour. Node `j` and node `m-1-j` are complex
/// conjugates, so they are emitted next to each other.
pub fn contour_terms(m: usize, c: Contour) -> Vec<SoeTerm> {
    let node = |u: f64| {
        let arg = C64::new(-c.angle, u);
        let z = c.mu * (C64::new(1.0, 0.0) + arg.sin());
        let dz = C64::i() * c.mu * arg.cos();
        let sq = z.sqrt();
        let w = c.h / (2.0 * PI * C64::i()) * z.exp() * SQRT_PI / sq * dz;
        SoeTerm { w, s: 2.0 * sq }
    };
    let mut out = Vec::with_capacity(m);
    let center = (m as f64 - 1.0) / 2.0;
    for j in 0..m / 2 {
        let t = node((j as f64 - center) * c.h);
        out.push(t);
        out.push(SoeTerm { w: t.w.conj(), s: t.s.conj() });
    }
    if m % 2 == 1 {
        let t = node(0.0);
        out.push(SoeTerm { w: C64::new(t.w.re, 0.0), s: C64::new(t.s.re, 0.0) });
    }
    out
}

/// Sum of the exponentials at `x >= 0`.
pub fn soe_sum(terms: &[SoeTerm], x: f64) -> C64 {
    terms.iter().fold(C64::new(0.0, 0.0), |acc, t| acc + t.w * (-t.s * x).exp())
}

fn sup_error_on_grid(terms: &[SoeTerm], x_max: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let x = x_max * i as f64 / (n - 1) as f64;
            (soe_sum(terms, x).re - (-x * x).exp()).abs()
        })
        .fold(0.0, f64::max)
}

/// Sup-norm of `target(x) - sum_l w_l exp(-s_l x)` on `[0, x_max]`: a uniform
/// grid of `grid_n` points followed by golden-section refinement of every
/// local maximum of the grid error.
pub fn certify_against(terms: &[SoeTerm], target: impl Fn(f64) -> f64, x_max: f64, grid_n: usize) -> f64 {
    let n = grid_n.max(2);
    let h = x_max / (n - 1) as f64;
    let err = |x: f64| (target(x) - soe_sum(terms, x).re).abs();
    let vals: Vec<f64> = (0..n).map(|i| err(i as f64 * h)).collect();
    let mut best = vals.iter().copied().fold(0.0, f64::max);
    for i in 1..n - 1 {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] && vals[i] > 0.0 {
            best = best.max(golden_max(&err, (i - 1) as f64 * h, (i + 1) as f64 * h));
        }
    }
    if best.is_nan() {
        f64::INFINITY
    } else {
        best
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Certified sup error of `soe` against `exp(-x^2)` on `[0, x_max]`.
pub fn certify_soe(soe: &SoeApprox, x_max: f64, grid_n: usize) -> f64 {
    certify_against(&soe.terms, |x| (-x * x).exp(), x_max, grid_n)
}

fn check_terms(terms: &[SoeTerm]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::Soe("no terms".into()));
    }
    for (l, t) in terms.iter().enumerate() {
        if !(t.s.re > 0.0) || !t.w.re.is_finite() || !t.w.im.is_finite() || !t.s.im.is_finite() {
            return Err(Error::Soe(format!("term {l} has exponent {} with non-positive real part", t.s)));
        }
    }
    Ok(())
}

/// Minimal Nelder-Mead simplex search in three dimensions.
fn nelder_mead(f: &impl Fn([f64; 3]) -> f64, start: [f64; 3], step: [f64; 3], iters: usize) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += step[i - 1];
            }
            (p, f(p))
        })
        .collect();
    let comb = |a: [f64; 3], b: [f64; 3], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        let width = (0..3)
            .map(|d| simplex.iter().map(|p| (p.0[d] - simplex[0].0[d]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < 1e-5 && width < 1e-7 {
            break;
        }
        let mut centroid = [0.0; 3];
        for p in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += p.0[d] / 3.0;
            }
        }
        let worst = simplex[3];
        let refl = comb(centroid, worst.0, -1.0);
        let fr = f(refl);
        if fr < simplex[0].1 {
            let exp = comb(centroid, worst.0, -2.0);
            let fe = f(exp);
            simplex[3] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (refl, fr);
        } else {
            let con = if fr < worst.1 { comb(centroid, refl, 0.5) } else { comb(centroid, worst.0, 0.5) };
            let fc = f(con);
            if fc < fr.min(worst.1) {
                simplex[3] = (con, fc);
            } else {
                let best = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    p.0 = comb(best, p.0, 0.5);
                    p.1 = f(p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Known good starting points for common term counts, (log mu, angle, log h).
const PRESETS: &[(usize, f64, f64, f64)] = &[
    (8, 3.419_867_763_494_307, 1.237_533_143_574_442_3, -1.657_754_785_466_477_4),
    (16, 3.814_834_603_233_905, 1.193_778_622_520_366_8, -2.158_823_868_436_366_3),
    (24, 4.187_975_154_836_071, 1.202_920_298_880_404_6, -2.539_279_426_830_139_7),
];

/// Searches contour parameters minimising the sup error for `m` terms.
pub fn tune_contour(m: usize) -> Contour {
    let objective = |p: [f64; 3]| {
        if !(0.0..1.55).contains(&p[1]) || p[0].abs() > 12.0 || p[2].abs() > 12.0 {
            return 1.0;
        }
        let c = Contour { mu: p[0].exp(), angle: p[1], h: p[2].exp() };
        let terms = contour_terms(m, c);
        if terms.iter().any(|t| !(t.s.re > 0.0) || !t.w.re.is_finite()) {
            return 1.0;
        }
        let e = sup_error_on_grid(&terms, DEFAULT_DOMAIN, TUNE_GRID);
        if e.is_finite() {
            (e + 1e-300).log10()
        } else {
            1.0
        }
    };
    let mut starts: Vec<([f64; 3], f64)> = Vec::new();
    let mut best_grid = ([0.0; 3], f64::INFINITY);
    for i in 0..11 {
        for j in 0..7 {
            for l in 0..8 {
                let p = [-1.0 + 0.5 * i as f64, 0.1 + 1.3 * j as f64 / 6.0, -3.0 + 0.5 * l as f64];
                let v = objective(p);
                if v < best_grid.1 {
                    best_grid = (p, v);
                }
            }
        }
    }
    starts.push(best_grid);
    if let Some(&(_, a, b, c)) = PRESETS.iter().find(|p| p.0 == m) {
        let p = [a, b, c];
        starts.push((p, objective(p)));
    }
    let best = starts
        .into_iter()
        .map(|(p, _)| nelder_mead(&objective, p, [0.1, 0.05, 0.1], 3000))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    Contour { mu: best.0[0].exp(), angle: best.0[1], h: best.0[2].exp() }
}

fn contour_cache() -> &'static Mutex<HashMap<usize, Contour>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Contour>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl SoeApprox {
    /// Builds an `m`-term approximation by contour quadrature and certifies
    /// it on `[0, 20]`. Tuned contours are memoised per `m`.
    pub fn build_contour(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Soe(format!("need at least 2 terms, got {m}")));
        }
        let cached = contour_cache().lock().expect("cache poisoned").get(&m).copied();
        let contour = match cached {
            Some(c) => c,
            None => {
                let c = tune_contour(m);
                contour_cache().lock().expect("cache poisoned").insert(m, c);
                c
            }
        };
        Self::from_contour(m, contour)
    }

    pub fn from_contour(m: usize, contour: Contour) -> Result<Self> {
        Self::from_terms(contour_terms(m, contour))
    }

    /// Wraps raw terms, recomputing the certified error locally.
    pub fn from_terms(terms: Vec<SoeTerm>) -> Result<Self> {
        check_terms(&terms)?;
        let mut soe = Self { terms, eps_certified: f64::INFINITY, domain_max: DEFAULT_DOMAIN };
        soe.eps_certified = certify_soe(&soe, DEFAULT_DOMAIN, DEFAULT_GRID);
        Ok(soe)
    }

    /// Smallest even term count up to 40 whose certified error is at most `eps`.
    pub fn build_for_tolerance(eps: f64) -> Result<Self> {
        let mut best: Option<SoeApprox> = None;
        for m in (4..=40).step_by(2) {
            let soe = Self::build_contour(m)?;
            if soe.eps_certified <= eps {
                return Ok(soe);
            }
            if best.as_ref().is_none_or(|b| soe.eps_certified < b.eps_certified) {
                best = Some(soe);
            }
        }
        Err(Error::Soe(format!(
            "no contour approximation with up to 40 terms reaches {eps:e} (best {:e})",
            best.map(|b| b.eps_certified).unwrap_or(f64::INFINITY)
        )))
    }

    /// Parses `re_w,im_w,re_s,im_s` rows. The stored error is never trusted.
    pub fn load_table(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["re_w", "im_w", "re_s", "im_s"] {
            return Err(Error::Parse { line: 1, msg: "expected header re_w,im_w,re_s,im_s".into() });
        }
        let mut terms = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            if rec.len() != 4 {
                return Err(Error::Parse { line, msg: format!("expected 4 fields, found {}", rec.len()) });
            }
            let mut v = [0.0; 4];
            for (k, f) in rec.iter().enumerate() {
                v[k] = f.parse().map_err(|e| Error::Parse { line, msg: format!("{e}") })?;
            }
            terms.push(SoeTerm { w: C64::new(v[0], v[1]), s: C64::new(v[2], v[3]) });
        }
        Self::from_terms(terms)
    }

    /// Writes the coefficient table; values round-trip exactly.
    pub fn write_table<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["re_w", "im_w", "re_s", "im_s"])?;
        for t in &self.terms {
            w.write_record([t.w.re, t.w.im, t.s.re, t.s.im].iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.terms.len()
    }

    /// Value of the sum at `|x|`.
    pub fn eval(&self, x: f64) -> C64 {
        soe_sum(&self.terms, x.abs())
    }

    /// Error bound for each of the two Fourier kernels at wavenumber `k`.
    pub fn xi_bound(&self, alpha: f64, k: f64) -> f64 {
        2.0 * alpha * (-k * k / (4.0 * alpha * alpha)).exp() * FRAC_1_SQRT_PI / k * self.eps_certified
    }

    /// Error bound for the z-derivatives of the two Fourier kernels.
    pub fn dxi_bound(&self, alpha: f64, k: f64) -> f64 {
        4.0 * alpha * (-k * k / (4.0 * alpha * alpha)).exp() * FRAC_1_SQRT_PI * self.eps_certified
    }

    /// Approximations of `e^{kz} erfc(k/2a + a z)` and `e^{-kz} erfc(k/2a - a z)`.
    pub fn xi(&self, alpha: f64, k: f64, z: f64) -> Result<(f64, f64)> {
        check_kz(k, z)?;
        let pre = 2.0 * alpha * FRAC_1_SQRT_PI * (-k * k / (4.0 * alpha * alpha)).exp();
        let ekz = (-k * z).exp();
        let (mut plus, mut minus) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for t in &self.terms {
            let a = alpha * t.s;
            let eaz = (-a * z).exp();
            plus += t.w * eaz / (a + k);
            minus += t.w * minus_bracket(a, k, z, ekz, eaz);
        }
        Ok((pre * plus.re, pre * minus.re))
    }

    /// z-derivatives of [`xi`](Self::xi).
    pub fn dxi(&self, alpha: f64, k: f64, z: f64) -> Result<(f64, f64)> {
        check_kz(k, z)?;
        let pre = 2.0 * alpha * FRAC_1_SQRT_PI * (-k * k / (4.0 * alpha * alpha)).exp();
        let ekz = (-k * z).exp();
        let (mut plus, mut minus) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for t in &self.terms {
            let a = alpha * t.s;
            let eaz = (-a * z).exp();
            plus += t.w * a * eaz / (a + k);
            minus += t.w * a * dminus_bracket(a, k, z, ekz, eaz);
        }
        Ok((-pre * plus.re, -pre * minus.re))
    }

    /// Approximation of `erf(alpha z)` for `z >= 0`.
    pub fn erf(&self, alpha: f64, z: f64) -> f64 {
        let sum = self
            .terms
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, t| acc + t.w / t.s * (1.0 - (-alpha * t.s * z).exp()));
        2.0 * FRAC_1_SQRT_PI * sum.re
    }
}

fn check_kz(k: f64, z: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::Parameter(format!("wavenumber must be positive, got {k}")));
    }
    if !(z >= 0.0) {
        return Err(Error::Parameter(format!("height difference must be nonnegative, got {z}")));
    }
    Ok(())
}

/// `(e^w - 1) / w`, accurate for small `|w|`.
pub fn exprel(w: C64) -> C64 {
    if w.norm() < 0.5 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for n in 2..40 {
            term *= w / n as f64;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (w.exp() - 1.0) / w
    }
}

/// `-e^{-az}/(a-k) + 2a e^{-kz}/(a^2-k^2)`, with `ekz = e^{-kz}` and `eaz = e^{-az}`.
/// Near `a = k` the two terms cancel; there it is rewritten as
/// `e^{-kz} (1/(a+k) + z exprel(-(a-k) z))`, whose value at `a = k` is
/// `e^{-kz} (2kz+1)/(2k)`.
#[inline]
pub(crate) fn minus_bracket(a: C64, k: f64, z: f64, ekz: f64, eaz: C64) -> C64 {
    let d = a - k;
    if d.norm() < SINGULAR_TOL * k {
        C64::new(ekz * (2.0 * k * z + 1.0) / (2.0 * k), 0.0)
    } else if (d * z).norm() < 0.5 {
        ekz * (1.0 / (a + k) + z * exprel(-d * z))
    } else {
        -eaz / d + 2.0 * a * ekz / (d * (a + k))
    }
}

/// `-e^{-az}/(a-k) + 2k e^{-kz}/(a^2-k^2)`; limit `e^{-kz} (2kz-1)/(2k)` at `a = k`.
#[inline]
pub(crate) fn dminus_bracket(a: C64, k: f64, z: f64, ekz: f64, eaz: C64) -> C64 {
    let d = a - k;
    if d.norm() < SINGULAR_TOL * k {
        C64::new(ekz * (2.0 * k * z - 1.0) / (2.0 * k), 0.0)
    } else if (d * z).norm() < 0.5 {
        ekz * (-1.0 / (a + k) + z * exprel(-d * z))
    } else {
        -eaz / d + 2.0 * k * ekz / (d * (a + k))
    }
}
