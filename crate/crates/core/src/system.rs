use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Periodic cell in x and y, confined to `[0, lz]` in z, with uniformly
/// charged planes at `z = lz` (top) and `z = 0` (bottom).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGeometry {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub sigma_top: f64,
    pub sigma_bot: f64,
}

impl BoxGeometry {
    pub fn new(lx: f64, ly: f64, lz: f64) -> Result<Self> {
        Self::with_slabs(lx, ly, lz, 0.0, 0.0)
    }

    pub fn with_slabs(lx: f64, ly: f64, lz: f64, sigma_top: f64, sigma_bot: f64) -> Result<Self> {
        for (name, v) in [("lx", lx), ("ly", ly), ("lz", lz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Geometry(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(sigma_top.is_finite() && sigma_bot.is_finite()) {
            return Err(Error::Geometry("slab charge densities must be finite".into()));
        }
        Ok(Self { lx, ly, lz, sigma_top, sigma_bot })
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    pub fn slab_charge(&self) -> f64 {
        (self.sigma_top + self.sigma_bot) * self.area()
    }

    pub fn has_slabs(&self) -> bool {
        self.sigma_top != 0.0 || self.sigma_bot != 0.0
    }

    /// Minimum-image displacement in x and y; z is returned unchanged.
    #[inline]
    pub fn min_image(&self, mut d: Vec3) -> Vec3 {
        d[0] -= self.lx * (d[0] / self.lx).round();
        d[1] -= self.ly * (d[1] / self.ly).round();
        d
    }
}

/// Charges, masses, positions and velocities of the simulated particles.
///
/// x and y are kept in `[0, lx)` and `[0, ly)`; z is never wrapped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleSystem {
    pub charge: Vec<f64>,
    pub mass: Vec<f64>,
    pub pos: Vec<Vec3>,
    pub vel: Vec<Vec3>,
}

fn wrap(v: f64, l: f64) -> f64 {
    let w = v - l * (v / l).floor();
    if w >= l {
        0.0
    } else {
        w
    }
}

impl ParticleSystem {
    pub fn new(charge: Vec<f64>, mass: Vec<f64>, pos: Vec<Vec3>, vel: Vec<Vec3>) -> Result<Self> {
        let n = charge.len();
        for len in [mass.len(), pos.len(), vel.len()] {
            if len != n {
                return Err(Error::LengthMismatch(n, len));
            }
        }
        if let Some(i) = mass.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Parameter(format!("mass of particle {i} must be positive")));
        }
        Ok(Self { charge, mass, pos, vel })
    }

    /// Unit masses and zero velocities.
    pub fn from_charges(charge: Vec<f64>, pos: Vec<Vec3>) -> Result<Self> {
        let n = charge.len();
        Self::new(charge, vec![1.0; n], pos, vec![[0.0; 3]; n])
    }

    pub fn len(&self) -> usize {
        self.charge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charge.is_empty()
    }

    pub fn total_charge(&self) -> f64 {
        self.charge.iter().sum()
    }

    /// Sum of squared charges.
    pub fn sum_q2(&self) -> f64 {
        self.charge.iter().map(|q| q * q).sum()
    }

    pub fn wrap_xy(&mut self, geom: &BoxGeometry) {
        for p in &mut self.pos {
            p[0] = wrap(p[0], geom.lx);
            p[1] = wrap(p[1], geom.ly);
        }
    }

    /// Checks finiteness and that every z lies in the slab.
    pub fn check_in_slab(&self, geom: &BoxGeometry) -> Result<()> {
        for (i, p) in self.pos.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("particle {i} has a non-finite position")));
            }
            if p[2] < 0.0 || p[2] > geom.lz {
                return Err(Error::OutOfSlab { index: i, z: p[2], lz: geom.lz });
            }
        }
        Ok(())
    }

    /// Copy with particles reordered so that entry `i` is old entry `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            charge: perm.iter().map(|&i| self.charge[i]).collect(),
            mass: perm.iter().map(|&i| self.mass[i]).collect(),
            pos: perm.iter().map(|&i| self.pos[i]).collect(),
            vel: perm.iter().map(|&i| self.vel[i]).collect(),
        }
    }

    /// `n_pos` charges `+valence` and `n_neg` charges `-valence`, uniform in
    /// the cell with z restricted to `[margin, lz - margin]`.
    pub fn random_ions<R: Rng>(
        n_pos: usize,
        n_neg: usize,
        valence: f64,
        geom: &BoxGeometry,
        margin: f64,
        rng: &mut R,
    ) -> Self {
        let n = n_pos + n_neg;
        let charge = (0..n).map(|i| if i < n_pos { valence } else { -valence }).collect();
        let pos = (0..n)
            .map(|_| {
                [
                    rng.random::<f64>() * geom.lx,
                    rng.random::<f64>() * geom.ly,
                    margin + rng.random::<f64>() * (geom.lz - 2.0 * margin),
                ]
            })
            .collect();
        Self { charge, mass: vec![1.0; n], pos, vel: vec![[0.0; 3]; n] }
    }

    /// Like [`random_ions`](Self::random_ions) but rejects insertions closer
    /// than `min_dist` (minimum image in x, y) to a previous particle.
    pub fn random_ions_spaced<R: Rng>(
        n_pos: usize,
        n_neg: usize,
        valence: f64,
        geom: &BoxGeometry,
        margin: f64,
        min_dist: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = n_pos + n_neg;
        let mut pos: Vec<Vec3> = Vec::with_capacity(n);
        let d2 = min_dist * min_dist;
        let mut attempts = 0usize;
        while pos.len() < n {
            attempts += 1;
            if attempts > 1000 * n + 10_000 {
                return Err(Error::Parameter("could not place particles at the requested spacing".into()));
            }
            let p = [
                rng.random::<f64>() * geom.lx,
                rng.random::<f64>() * geom.ly,
                margin + rng.random::<f64>() * (geom.lz - 2.0 * margin),
            ];
            let clear = pos.iter().all(|o| {
                let d = geom.min_image([p[0] - o[0], p[1] - o[1], p[2] - o[2]]);
                d[0] * d[0] + d[1] * d[1] + d[2] * d[2] >= d2
            });
            if clear {
                pos.push(p);
            }
        }
        let charge = (0..n).map(|i| if i < n_pos { valence } else { -valence }).collect();
        Ok(Self { charge, mass: vec![1.0; n], pos, vel: vec![[0.0; 3]; n] })
    }

    /// Reads `id,q,m,x,y,z,vx,vy,vz` rows. Positions are wrapped in x, y.
    pub fn read_csv<R: Read>(reader: R, geom: &BoxGeometry) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let expected = ["id", "q", "m", "x", "y", "z", "vx", "vy", "vz"];
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse { line: 1, msg: format!("expected header {}", expected.join(",")) });
        }
        let (mut charge, mut mass, mut pos, mut vel) = (vec![], vec![], vec![], vec![]);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let mut v = [0.0f64; 9];
            if rec.len() != 9 {
                return Err(Error::Parse { line, msg: format!("expected 9 fields, found {}", rec.len()) });
            }
            for (k, field) in rec.iter().enumerate() {
                v[k] = field
                    .parse()
                    .map_err(|e| Error::Parse { line, msg: format!("field {}: {e}", expected[k]) })?;
            }
            charge.push(v[1]);
            mass.push(v[2]);
            pos.push([v[3], v[4], v[5]]);
            vel.push([v[6], v[7], v[8]]);
        }
        let mut sys = Self::new(charge, mass, pos, vel)?;
        sys.wrap_xy(geom);
        sys.check_in_slab(geom)?;
        Ok(sys)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "q", "m", "x", "y", "z", "vx", "vy", "vz"])?;
        for i in 0..self.len() {
            let p = self.pos[i];
            let v = self.vel[i];
            w.write_record(
                [i as f64, self.charge[i], self.mass[i], p[0], p[1], p[2], v[0], v[1], v[2]]
                    .iter()
                    .enumerate()
                    .map(|(k, x)| if k == 0 { format!("{}", i) } else { format!("{x}") }),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Absolute net charge of particles plus slabs.
pub fn neutrality_residual(sys: &ParticleSystem, geom: &BoxGeometry) -> f64 {
    (sys.total_charge() + geom.slab_charge()).abs()
}

/// Returns the residual when the system is neutral to `1e-12 * max(1, sum|q|)`.
pub fn validate_neutrality(sys: &ParticleSystem, geom: &BoxGeometry) -> Result<f64> {
    let residual = neutrality_residual(sys, geom);
    let scale = sys.charge.iter().map(|q| q.abs()).sum::<f64>().max(1.0);
    if residual <= 1e-12 * scale {
        Ok(residual)
    } else {
        Err(Error::NotNeutral { residual })
    }
}
