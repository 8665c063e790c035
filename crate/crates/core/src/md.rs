//! Molecular dynamics of charged soft spheres in a slit: repulsive LJ between
//! particles and against the two walls, electrostatics from any [`Solver`],
//! Langevin or Nose-Hoover temperature control.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cells::VerletList;
use crate::error::{Error, Result};
use crate::solver::Solver;
use crate::system::{validate_neutrality, BoxGeometry, ParticleSystem, Vec3};

/// Shifted-truncated repulsive Lennard-Jones, cut at the minimum `2^{1/6} sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
}

impl LjParams {
    pub fn new(epsilon: f64, sigma: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && sigma > 0.0 && epsilon.is_finite() && sigma.is_finite()) {
            return Err(Error::Parameter(format!("bad LJ parameters epsilon={epsilon} sigma={sigma}")));
        }
        Ok(Self { epsilon, sigma })
    }

    pub fn cutoff(&self) -> f64 {
        2f64.powf(1.0 / 6.0) * self.sigma
    }

    /// Energy and `-(dU/dr)/r` at squared distance `r2`; zero beyond the cutoff.
    #[inline]
    pub fn pair(&self, r2: f64) -> (f64, f64) {
        let rc = self.cutoff();
        if r2 >= rc * rc {
            return (0.0, 0.0);
        }
        let s2 = self.sigma * self.sigma / r2;
        let s6 = s2 * s2 * s2;
        let s12 = s6 * s6;
        let u = 4.0 * self.epsilon * (s12 - s6 + 0.25);
        let f_over_r = 24.0 * self.epsilon * (2.0 * s12 - s6) / r2;
        (u, f_over_r)
    }
}

/// LJ energy and forces over the pairs of a Verlet list.
pub fn lj_forces(sys: &ParticleSystem, geom: &BoxGeometry, lj: &LjParams, list: &mut VerletList) -> Result<(f64, Vec<Vec3>)> {
    let mut forces = vec![[0.0; 3]; sys.len()];
    let mut energy = 0.0;
    let rc2 = lj.cutoff() * lj.cutoff();
    for &(i, j) in list.update(&sys.pos, geom) {
        let (i, j) = (i as usize, j as usize);
        let d = geom.min_image([
            sys.pos[i][0] - sys.pos[j][0],
            sys.pos[i][1] - sys.pos[j][1],
            sys.pos[i][2] - sys.pos[j][2],
        ]);
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if r2 >= rc2 {
            continue;
        }
        if r2 == 0.0 {
            return Err(Error::Coincident(i, j));
        }
        let (u, f) = lj.pair(r2);
        energy += u;
        for c in 0..3 {
            forces[i][c] += f * d[c];
            forces[j][c] -= f * d[c];
        }
    }
    Ok((energy, forces))
}

/// Two planar walls acting on particle centres through the same
/// shifted-truncated LJ form in the distance to each plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallParams {
    pub z_lo: f64,
    pub z_hi: f64,
    pub lj: LjParams,
}

pub fn wall_forces(sys: &ParticleSystem, walls: &WallParams) -> Result<(f64, Vec<Vec3>)> {
    let mut energy = 0.0;
    let mut forces = vec![[0.0; 3]; sys.len()];
    for (i, p) in sys.pos.iter().enumerate() {
        let lo = p[2] - walls.z_lo;
        let hi = walls.z_hi - p[2];
        if !(lo > 0.0 && hi > 0.0) {
            return Err(Error::OutOfSlab { index: i, z: p[2], lz: walls.z_hi });
        }
        let (u1, f1) = walls.lj.pair(lo * lo);
        let (u2, f2) = walls.lj.pair(hi * hi);
        energy += u1 + u2;
        forces[i][2] += f1 * lo - f2 * hi;
    }
    Ok((energy, forces))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thermostat {
    /// Friction `gamma` in `dp = (F - gamma p / m) dt + sqrt(2 gamma T) dW`.
    Langevin { gamma: f64 },
    /// Single Nose-Hoover variable with relaxation time `tau`.
    NoseHoover { tau: f64 },
    /// Plain velocity Verlet.
    None,
}

/// Thermostat variables carried between steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThermostatState {
    /// Nose-Hoover friction.
    pub xi: f64,
    /// Time integral of `xi`, for the conserved quantity.
    pub eta: f64,
}

pub fn kinetic_energy(sys: &ParticleSystem) -> f64 {
    sys.mass.iter().zip(&sys.vel).map(|(m, v)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).sum()
}

/// Instantaneous temperature with `3N` degrees of freedom.
pub fn temperature(sys: &ParticleSystem) -> f64 {
    if sys.is_empty() {
        return 0.0;
    }
    2.0 * kinetic_energy(sys) / (3.0 * sys.len() as f64)
}

/// Maxwell-Boltzmann velocities with the centre-of-mass velocity removed.
pub fn maxwell_boltzmann(sys: &mut ParticleSystem, t: f64, rng: &mut ChaCha8Rng) {
    for (m, v) in sys.mass.iter().zip(sys.vel.iter_mut()) {
        let s = (t / m).sqrt();
        for c in v.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *c = s * g;
        }
    }
    let mtot: f64 = sys.mass.iter().sum();
    if mtot > 0.0 && sys.len() > 1 {
        for c in 0..3 {
            let p: f64 = sys.mass.iter().zip(&sys.vel).map(|(m, v)| m * v[c]).sum();
            for v in &mut sys.vel {
                v[c] -= p / mtot;
            }
        }
    }
}

fn kick(sys: &mut ParticleSystem, forces: &[Vec3], h: f64) {
    for ((v, f), m) in sys.vel.iter_mut().zip(forces).zip(&sys.mass) {
        for c in 0..3 {
            v[c] += h * f[c] / m;
        }
    }
}

fn drift(sys: &mut ParticleSystem, h: f64) {
    for (p, v) in sys.pos.iter_mut().zip(&sys.vel) {
        for c in 0..3 {
            p[c] += h * v[c];
        }
    }
}

/// Exact Ornstein-Uhlenbeck update of the velocities over `h`.
fn ou(sys: &mut ParticleSystem, gamma: f64, t: f64, h: f64, rng: &mut ChaCha8Rng) {
    for (v, m) in sys.vel.iter_mut().zip(&sys.mass) {
        let c = (-gamma * h / m).exp();
        let s = ((1.0 - c * c) * t / m).sqrt();
        for x in v.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *x = c * *x + s * g;
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Kick, drift, exact OU, drift. The closing kick needs the new forces and
/// is done by [`finish_step`].
pub fn langevin_step(sys: &mut ParticleSystem, forces: &[Vec3], gamma: f64, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    check_dt(dt)?;
    kick(sys, forces, 0.5 * dt);
    drift(sys, 0.5 * dt);
    if gamma > 0.0 {
        ou(sys, gamma, t, dt, rng);
    }
    drift(sys, 0.5 * dt);
    Ok(())
}

/// Half of the Nose-Hoover thermostat flow: friction update, velocity
/// scaling, friction update.
fn nh_half(sys: &mut ParticleSystem, st: &mut ThermostatState, q_mass: f64, t: f64, h: f64) {
    let g = 3.0 * sys.len() as f64;
    st.xi += 0.5 * h * (2.0 * kinetic_energy(sys) - g * t) / q_mass;
    let s = (-st.xi * h).exp();
    for v in &mut sys.vel {
        for c in v.iter_mut() {
            *c *= s;
        }
    }
    st.eta += st.xi * h;
    st.xi += 0.5 * h * (2.0 * kinetic_energy(sys) - g * t) / q_mass;
}

/// Nose-Hoover mass `3 N T tau^2`.
pub fn nh_mass(n: usize, t: f64, tau: f64) -> f64 {
    3.0 * n as f64 * t * tau * tau
}

/// Thermostat half step, kick, drift. The closing kick and thermostat half
/// step are done by [`finish_step`].
pub fn nose_hoover_step(
    sys: &mut ParticleSystem,
    forces: &[Vec3],
    st: &mut ThermostatState,
    tau: f64,
    t: f64,
    dt: f64,
) -> Result<()> {
    check_dt(dt)?;
    nh_half(sys, st, nh_mass(sys.len(), t, tau), t, 0.5 * dt);
    kick(sys, forces, 0.5 * dt);
    drift(sys, dt);
    Ok(())
}

/// Closing kick with the forces at the new positions, plus the second
/// thermostat half step for Nose-Hoover.
pub fn finish_step(sys: &mut ParticleSystem, forces: &[Vec3], thermostat: Thermostat, st: &mut ThermostatState, t: f64, dt: f64) {
    kick(sys, forces, 0.5 * dt);
    if let Thermostat::NoseHoover { tau } = thermostat {
        nh_half(sys, st, nh_mass(sys.len(), t, tau), t, 0.5 * dt);
    }
}

/// Nose-Hoover extended energy `K + U + Q xi^2 / 2 + 3 N T eta`.
pub fn nh_conserved(kinetic: f64, potential: f64, st: &ThermostatState, n: usize, t: f64, tau: f64) -> f64 {
    kinetic + potential + 0.5 * nh_mass(n, t, tau) * st.xi * st.xi + 3.0 * n as f64 * t * st.eta
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdConfig {
    pub dt: f64,
    /// Production steps.
    pub steps: usize,
    /// Steps run before recording starts.
    pub equilibration: usize,
    pub record_every: usize,
    pub temperature: f64,
    pub thermostat: Thermostat,
    pub lj: Option<LjParams>,
    pub walls: Option<WallParams>,
    pub skin: f64,
    pub seed: u64,
    pub z_bins: usize,
    /// Draw Maxwell-Boltzmann velocities before the run.
    pub init_velocities: bool,
    /// Keep a trajectory frame every this many recordings (0: none).
    pub trajectory_stride: usize,
}

impl MdConfig {
    pub fn validate(&self) -> Result<()> {
        check_dt(self.dt)?;
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter("temperature must be nonnegative".into()));
        }
        match self.thermostat {
            Thermostat::Langevin { gamma } if !(gamma >= 0.0) => {
                return Err(Error::Parameter("Langevin friction must be nonnegative".into()));
            }
            Thermostat::NoseHoover { tau } if !(tau > 0.0) || !(self.temperature > 0.0) => {
                return Err(Error::Parameter("Nose-Hoover needs positive tau and temperature".into()));
            }
            _ => {}
        }
        if self.z_bins == 0 {
            return Err(Error::Parameter("need at least one z bin".into()));
        }
        Ok(())
    }
}

/// One recorded point of the energy series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub kinetic: f64,
    pub electrostatic: f64,
    pub lj: f64,
    pub wall: f64,
    pub temperature: f64,
    /// Nose-Hoover extended energy, or `K + U` otherwise.
    pub conserved: f64,
}

/// Recorded data: z histograms per charge sign and unwrapped positions at
/// every recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub z_lo: f64,
    pub z_hi: f64,
    pub cation_counts: Vec<u64>,
    pub anion_counts: Vec<u64>,
    pub all_counts: Vec<u64>,
    /// Per-recording cation histograms, kept for block error estimates.
    pub cation_frames: Vec<Vec<u32>>,
    pub frames: usize,
    pub area: f64,
    pub interval: f64,
    pub unwrapped: Vec<Vec<Vec3>>,
}

impl Observables {
    pub fn new(geom: &BoxGeometry, bins: usize, interval: f64) -> Self {
        Self {
            z_lo: 0.0,
            z_hi: geom.lz,
            cation_counts: vec![0; bins],
            anion_counts: vec![0; bins],
            all_counts: vec![0; bins],
            cation_frames: Vec::new(),
            frames: 0,
            area: geom.area(),
            interval,
            unwrapped: Vec::new(),
        }
    }

    fn bin(&self, z: f64) -> usize {
        let n = self.cation_counts.len();
        (((z - self.z_lo) / (self.z_hi - self.z_lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    pub fn record(&mut self, sys: &ParticleSystem, unwrapped: Vec<Vec3>) {
        let mut frame = vec![0u32; self.cation_counts.len()];
        for (q, p) in sys.charge.iter().zip(&sys.pos) {
            let b = self.bin(p[2]);
            self.all_counts[b] += 1;
            if *q > 0.0 {
                self.cation_counts[b] += 1;
                frame[b] += 1;
            } else if *q < 0.0 {
                self.anion_counts[b] += 1;
            }
        }
        self.cation_frames.push(frame);
        self.unwrapped.push(unwrapped);
        self.frames += 1;
    }

    pub fn bin_width(&self) -> f64 {
        (self.z_hi - self.z_lo) / self.cation_counts.len() as f64
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.cation_counts.len()).map(|i| self.z_lo + (i as f64 + 0.5) * w).collect()
    }

    fn to_concentration(&self, counts: &[u64], frames: usize) -> Vec<f64> {
        let vol = self.area * self.bin_width();
        counts.iter().map(|&c| if frames == 0 { 0.0 } else { c as f64 / (frames as f64 * vol) }).collect()
    }

    /// Number densities `(cations, anions)` per bin.
    pub fn concentration(&self) -> (Vec<f64>, Vec<f64>) {
        (self.to_concentration(&self.cation_counts, self.frames), self.to_concentration(&self.anion_counts, self.frames))
    }

    /// Number density of all particles per bin.
    pub fn total_concentration(&self) -> Vec<f64> {
        self.to_concentration(&self.all_counts, self.frames)
    }

    /// Cation density per bin with the standard error from `blocks`
    /// contiguous blocks of recordings.
    pub fn cation_profile_blocked(&self, blocks: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let nb = self.cation_counts.len();
        let len = self.cation_frames.len() / blocks.max(1);
        if blocks < 2 || len == 0 {
            return Err(Error::Parameter(format!("cannot split {} recordings into {blocks} blocks", self.cation_frames.len())));
        }
        let means: Vec<Vec<f64>> = (0..blocks)
            .map(|b| {
                let mut c = vec![0u64; nb];
                for f in &self.cation_frames[b * len..(b + 1) * len] {
                    for (a, &x) in c.iter_mut().zip(f) {
                        *a += x as u64;
                    }
                }
                self.to_concentration(&c, len)
            })
            .collect();
        let mut mean = vec![0.0; nb];
        let mut se = vec![0.0; nb];
        for i in 0..nb {
            let xs: Vec<f64> = means.iter().map(|m| m[i]).collect();
            let m = xs.iter().sum::<f64>() / blocks as f64;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (blocks - 1) as f64;
            mean[i] = m;
            se[i] = (var / blocks as f64).sqrt();
        }
        Ok((mean, se))
    }

    /// `(t, msd_xy, msd_z)` for lags up to `max_lag` recordings, averaged over
    /// every time origin and particle.
    pub fn msd(&self, max_lag: usize) -> Vec<(f64, f64, f64)> {
        let f = self.unwrapped.len();
        let lags = max_lag.min(f.saturating_sub(1));
        (0..=lags)
            .filter(|_| f > 0)
            .map(|lag| {
                let (mut xy, mut z, mut count) = (0.0, 0.0, 0usize);
                for o in 0..f - lag {
                    for (a, b) in self.unwrapped[o].iter().zip(&self.unwrapped[o + lag]) {
                        let dx = b[0] - a[0];
                        let dy = b[1] - a[1];
                        let dz = b[2] - a[2];
                        xy += dx * dx + dy * dy;
                        z += dz * dz;
                        count += 1;
                    }
                }
                let c = count.max(1) as f64;
                (lag as f64 * self.interval, xy / c, z / c)
            })
            .collect()
    }

    pub fn write_msd_csv<W: Write>(&self, max_lag: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "msd_xy", "msd_z"])?;
        for (t, xy, z) in self.msd(max_lag) {
            w.write_record([format!("{t:?}"), format!("{xy:?}"), format!("{z:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_concentration_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (cat, an) = self.concentration();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["z_bin_center", "concentration_cation", "concentration_anion"])?;
        for ((z, c), a) in self.bin_centers().iter().zip(&cat).zip(&an) {
            w.write_record([format!("{z:?}"), format!("{c:?}"), format!("{a:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Positions and velocities at one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: usize,
    pub pos: Vec<Vec3>,
    pub vel: Vec<Vec3>,
}

pub fn write_trajectory_csv<W: Write>(frames: &[Frame], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "id", "x", "y", "z", "vx", "vy", "vz"])?;
    for f in frames {
        for (i, (p, v)) in f.pos.iter().zip(&f.vel).enumerate() {
            let mut row = vec![f.step.to_string(), i.to_string()];
            row.extend(p.iter().chain(v).map(|x| format!("{x:?}")));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MdOutput {
    pub observables: Observables,
    pub energies: Vec<EnergyRecord>,
    pub trajectory: Vec<Frame>,
    pub final_state: ParticleSystem,
    pub thermostat_state: ThermostatState,
}

impl MdOutput {
    pub fn mean_temperature(&self) -> f64 {
        if self.energies.is_empty() {
            return 0.0;
        }
        self.energies.iter().map(|e| e.temperature).sum::<f64>() / self.energies.len() as f64
    }
}

struct Engine<'a> {
    geom: BoxGeometry,
    cfg: &'a MdConfig,
    list: Option<VerletList>,
    images: Vec<[i64; 2]>,
}

struct ForceResult {
    forces: Vec<Vec3>,
    electrostatic: f64,
    lj: f64,
    wall: f64,
}

impl Engine<'_> {
    fn forces(&mut self, sys: &ParticleSystem, solver: &mut dyn Solver) -> Result<ForceResult> {
        if let Some(w) = &self.cfg.walls {
            if let Some(i) = sys.pos.iter().position(|p| !(p[2] > w.z_lo && p[2] < w.z_hi)) {
                return Err(Error::Numeric(format!(
                    "particle {i} left the channel (z = {}); integration is unstable",
                    sys.pos[i][2]
                )));
            }
        }
        let ev = solver.evaluate(sys, &self.geom, true)?;
        let mut forces = ev.forces();
        let mut lj_energy = 0.0;
        if let (Some(lj), Some(list)) = (&self.cfg.lj, self.list.as_mut()) {
            let (e, f) = lj_forces(sys, &self.geom, lj, list)?;
            lj_energy = e;
            crate::solver::add_into(&mut forces, &f);
        }
        let mut wall_energy = 0.0;
        if let Some(w) = &self.cfg.walls {
            let (e, f) = wall_forces(sys, w)?;
            wall_energy = e;
            crate::solver::add_into(&mut forces, &f);
        }
        Ok(ForceResult { forces, electrostatic: ev.energy.total, lj: lj_energy, wall: wall_energy })
    }

    fn wrap(&mut self, sys: &mut ParticleSystem) {
        let l = [self.geom.lx, self.geom.ly];
        for (p, img) in sys.pos.iter_mut().zip(self.images.iter_mut()) {
            for c in 0..2 {
                let shift = (p[c] / l[c]).floor();
                if shift != 0.0 {
                    p[c] -= shift * l[c];
                    img[c] += shift as i64;
                }
                if p[c] >= l[c] {
                    p[c] -= l[c];
                    img[c] += 1;
                }
            }
        }
    }

    fn unwrapped(&self, sys: &ParticleSystem) -> Vec<Vec3> {
        sys.pos
            .iter()
            .zip(&self.images)
            .map(|(p, img)| [p[0] + img[0] as f64 * self.geom.lx, p[1] + img[1] as f64 * self.geom.ly, p[2]])
            .collect()
    }
}

/// Runs equilibration plus production, recording every `record_every`
/// production steps. The electrostatic solver owns its own random stream;
/// thermostat noise and initial velocities come from `cfg.seed`.
pub fn run_simulation(
    mut sys: ParticleSystem,
    geom: &BoxGeometry,
    solver: &mut dyn Solver,
    cfg: &MdConfig,
) -> Result<MdOutput> {
    cfg.validate()?;
    validate_neutrality(&sys, geom)?;
    sys.wrap_xy(geom);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if cfg.init_velocities {
        maxwell_boltzmann(&mut sys, cfg.temperature, &mut rng);
    }
    let mut eng = Engine {
        geom: *geom,
        cfg,
        list: cfg.lj.map(|lj| VerletList::new(lj.cutoff(), cfg.skin)),
        images: vec![[0, 0]; sys.len()],
    };
    let interval = cfg.dt * cfg.record_every as f64;
    let mut obs = Observables::new(geom, cfg.z_bins, interval);
    let mut energies = Vec::new();
    let mut trajectory = Vec::new();
    let mut st = ThermostatState::default();
    let mut fr = eng.forces(&sys, solver)?;
    let total = cfg.equilibration + cfg.steps;
    for step in 1..=total {
        match cfg.thermostat {
            Thermostat::Langevin { gamma } => langevin_step(&mut sys, &fr.forces, gamma, cfg.temperature, cfg.dt, &mut rng)?,
            Thermostat::NoseHoover { tau } => nose_hoover_step(&mut sys, &fr.forces, &mut st, tau, cfg.temperature, cfg.dt)?,
            Thermostat::None => {
                kick(&mut sys, &fr.forces, 0.5 * cfg.dt);
                drift(&mut sys, cfg.dt);
            }
        }
        eng.wrap(&mut sys);
        fr = eng.forces(&sys, solver)?;
        finish_step(&mut sys, &fr.forces, cfg.thermostat, &mut st, cfg.temperature, cfg.dt);
        if step == cfg.equilibration {
            // MSDs are measured from the start of production
            eng.images.iter_mut().for_each(|i| *i = [0, 0]);
        }
        if step > cfg.equilibration && (step - cfg.equilibration) % cfg.record_every == 0 {
            let k = kinetic_energy(&sys);
            let u = fr.electrostatic + fr.lj + fr.wall;
            let conserved = match cfg.thermostat {
                Thermostat::NoseHoover { tau } => nh_conserved(k, u, &st, sys.len(), cfg.temperature, tau),
                _ => k + u,
            };
            energies.push(EnergyRecord {
                step,
                kinetic: k,
                electrostatic: fr.electrostatic,
                lj: fr.lj,
                wall: fr.wall,
                temperature: temperature(&sys),
                conserved,
            });
            if cfg.trajectory_stride > 0 && obs.frames % cfg.trajectory_stride == 0 {
                trajectory.push(Frame { step, pos: sys.pos.clone(), vel: sys.vel.clone() });
            }
            let unwrapped = eng.unwrapped(&sys);
            obs.record(&sys, unwrapped);
        }
    }
    Ok(MdOutput { observables: obs, energies, trajectory, final_state: sys, thermostat_state: st })
}

pub fn write_energy_csv<W: Write>(records: &[EnergyRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "kinetic", "electrostatic", "lj", "wall", "temperature", "conserved"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            format!("{:?}", r.kinetic),
            format!("{:?}", r.electrostatic),
            format!("{:?}", r.lj),
            format!("{:?}", r.wall),
            format!("{:?}", r.temperature),
            format!("{:?}", r.conserved),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Electrostatics switched off.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoElectrostatics;

impl Solver for NoElectrostatics {
    fn name(&self) -> &'static str {
        "none"
    }

    fn evaluate(&mut self, sys: &ParticleSystem, _geom: &BoxGeometry, _with_forces: bool) -> Result<crate::solver::Evaluation> {
        Ok(crate::solver::Evaluation::zeros(sys.len()))
    }
}
