//! Common interface of the three electrostatic solvers.

use crate::error::Result;
use crate::reference::EnergyBreakdown;
use crate::system::{BoxGeometry, ParticleSystem, Vec3};

/// Energies and per-particle forces split by contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: EnergyBreakdown,
    pub short: Vec<Vec3>,
    pub fourier: Vec<Vec3>,
    pub zero: Vec<Vec3>,
    pub slab: Vec<Vec3>,
}

pub(crate) fn add_into(acc: &mut [Vec3], other: &[Vec3]) {
    for (a, b) in acc.iter_mut().zip(other) {
        a[0] += b[0];
        a[1] += b[1];
        a[2] += b[2];
    }
}

impl Evaluation {
    pub fn zeros(n: usize) -> Self {
        Self {
            energy: EnergyBreakdown::default(),
            short: vec![[0.0; 3]; n],
            fourier: vec![[0.0; 3]; n],
            zero: vec![[0.0; 3]; n],
            slab: vec![[0.0; 3]; n],
        }
    }

    /// Particle-particle forces (everything except the slab field).
    pub fn pair_forces(&self) -> Vec<Vec3> {
        let mut f = self.short.clone();
        add_into(&mut f, &self.fourier);
        add_into(&mut f, &self.zero);
        f
    }

    pub fn forces(&self) -> Vec<Vec3> {
        let mut f = self.pair_forces();
        add_into(&mut f, &self.slab);
        f
    }
}

/// An electrostatic solver. Stochastic solvers advance their internal
/// random state on every call, hence `&mut self`.
pub trait Solver {
    fn name(&self) -> &'static str;

    /// Energies, plus forces when `with_forces` is set (otherwise the force
    /// buffers are zero).
    fn evaluate(&mut self, sys: &ParticleSystem, geom: &BoxGeometry, with_forces: bool) -> Result<Evaluation>;
}
