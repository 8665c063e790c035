//! Splitting parameter, cutoffs, Fourier mode sets and truncation-error
//! predictors.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{erfc, FRAC_1_SQRT_PI};
use crate::system::BoxGeometry;

/// One in-plane reciprocal vector `2 pi (mx/lx, my/ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMode {
    pub mx: i32,
    pub my: i32,
    pub kx: f64,
    pub ky: f64,
    pub k: f64,
}

impl KMode {
    pub fn new(mx: i32, my: i32, geom: &BoxGeometry) -> Self {
        let kx = 2.0 * PI * mx as f64 / geom.lx;
        let ky = 2.0 * PI * my as f64 / geom.ly;
        Self { mx, my, kx, ky, k: kx.hypot(ky) }
    }

    /// True for exactly one member of each `{k, -k}` pair.
    pub fn is_canonical(&self) -> bool {
        self.my > 0 || (self.my == 0 && self.mx > 0)
    }
}

/// Nonzero modes with `|k| <= k_max` in a fixed lexicographic order; the set
/// is closed under negation and modes on the boundary circle are kept.
pub fn enumerate_modes(geom: &BoxGeometry, k_max: f64) -> Vec<KMode> {
    let mxmax = (k_max * geom.lx / (2.0 * PI)).floor() as i32 + 1;
    let mymax = (k_max * geom.ly / (2.0 * PI)).floor() as i32 + 1;
    let limit = k_max * k_max * (1.0 + 1e-12);
    let mut out = Vec::new();
    for mx in -mxmax..=mxmax {
        for my in -mymax..=mymax {
            if mx == 0 && my == 0 {
                continue;
            }
            let m = KMode::new(mx, my, geom);
            if m.kx * m.kx + m.ky * m.ky <= limit {
                out.push(m);
            }
        }
    }
    out
}

/// Splitting parameter and the cutoffs derived from the accuracy parameter
/// `s`: real-space cutoff `s / alpha` and Fourier cutoff `2 s alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct EwaldParams {
    pub alpha: f64,
    pub s: f64,
    pub r_c: f64,
    pub k_c: f64,
    pub kmodes: Vec<KMode>,
}

impl EwaldParams {
    pub fn new(alpha: f64, s: f64, geom: &BoxGeometry) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("s must be positive, got {s}")));
        }
        let r_c = s / alpha;
        let k_c = 2.0 * s * alpha;
        Ok(Self { alpha, s, r_c, k_c, kmodes: enumerate_modes(geom, k_c) })
    }

    /// Rejects cutoffs larger than half the shorter periodic side.
    pub fn check_min_image(&self, geom: &BoxGeometry) -> Result<()> {
        let half = 0.5 * geom.lx.min(geom.ly);
        if self.r_c > half * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "real-space cutoff {} exceeds half the cell side {}",
                self.r_c, half
            )));
        }
        Ok(())
    }

    /// One representative per `{k, -k}` pair.
    pub fn half_modes(&self) -> impl Iterator<Item = &KMode> {
        self.kmodes.iter().filter(|m| m.is_canonical())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Balances real-space and Fourier work of the deterministic solver.
    Balanced,
    /// Keeps the real-space neighbour count fixed, for the random-batch solver.
    Linear,
}

/// Scaling-law choice of `alpha` times `prefactor`.
///
/// In balanced mode, when the resulting cutoff `s / alpha` exceeds `lz` the
/// real-space neighbourhood is a disc rather than a ball and the balance is
/// redone for that shape.
pub fn choose_alpha(n: usize, geom: &BoxGeometry, mode: AlphaMode, prefactor: f64, s: f64) -> f64 {
    let n = n.max(1) as f64;
    match mode {
        AlphaMode::Linear => prefactor * (n / geom.volume()).cbrt(),
        AlphaMode::Balanced => {
            let a = prefactor * n.powf(0.2) / (geom.lx.powf(0.4) * geom.ly.powf(0.4) * geom.lz.powf(0.2));
            if s / a > geom.lz {
                prefactor * n.powf(0.25) / geom.area().sqrt()
            } else {
                a
            }
        }
    }
}

/// Predicted RMS truncation errors. Force entries are per unit charge of the
/// target particle; multiply by `|q_i|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPrediction {
    pub e_phi_s: f64,
    pub e_phi_l: f64,
    pub e_u_s: f64,
    pub e_u_l: f64,
    pub e_f_s: f64,
    pub e_f_l: f64,
}

impl ErrorPrediction {
    pub fn energy(&self) -> f64 {
        self.e_u_s.hypot(self.e_u_l)
    }

    pub fn force(&self) -> f64 {
        self.e_f_s.hypot(self.e_f_l)
    }

    pub fn potential(&self) -> f64 {
        self.e_phi_s.hypot(self.e_phi_l)
    }
}

/// Integral of `erfc(alpha r)^2` from `r_c` to infinity.
fn real_space_tail(alpha: f64, r_c: f64) -> f64 {
    let x = alpha * r_c;
    if x > 2.0 {
        (-2.0 * x * x).exp() / (4.0 * PI * alpha.powi(4) * r_c.powi(3))
    } else {
        let c = erfc(x);
        2.0 * (-x * x).exp() * c * FRAC_1_SQRT_PI / alpha - r_c * c * c
            - (2.0 / PI).sqrt() / alpha * erfc(2f64.sqrt() * x)
    }
}

/// Closed-form truncation-error estimates for random, uncorrelated charges.
/// `q2` is the sum of squared charges and `volume` is `lx ly lz`.
pub fn predict_errors(params: &EwaldParams, q2: f64, volume: f64) -> ErrorPrediction {
    let a = params.alpha;
    let rc = params.r_c;
    let kc = params.k_c;
    let gauss_k = (-kc * kc / (4.0 * a * a)).exp();
    let gauss_r = (-a * a * rc * rc).exp();
    ErrorPrediction {
        e_phi_s: (4.0 * PI * q2 / volume * real_space_tail(a, rc)).sqrt(),
        e_phi_l: (8.0 * a * a * q2 / (PI * volume)).sqrt() * kc.powf(-1.5) * gauss_k,
        e_u_s: q2 * (0.5 / volume).sqrt() / (a * a) * rc.powf(-1.5) * gauss_r,
        e_u_l: q2 * (8.0 * a * a / (PI * volume)).sqrt() * kc.powf(-1.5) * gauss_k,
        e_f_s: 2.0 * (q2 / volume).sqrt() * rc.powf(-0.5) * gauss_r,
        e_f_l: 4.0 * (q2 / (PI * volume)).sqrt() * a * kc.powf(-0.5) * gauss_k,
    }
}

/// Root-mean-square difference of two equally long sequences.
pub fn rms_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Parameter("rms of an empty sequence".into()));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Debye length `sqrt(V / (4 pi Q))` at unit temperature, used to scale the
/// sum-of-exponentials error bounds.
pub fn debye_length(q2: f64, volume: f64) -> f64 {
    (volume / (4.0 * PI * q2)).sqrt()
}
