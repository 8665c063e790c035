//! Electrostatics for charges in a slab that is periodic in x and y and
//! bounded in z.
//!
//! Three interchangeable solvers share the same inputs and outputs:
//!
//! * [`reference`]: closed-form Ewald sums with an O(N^2) Fourier part,
//!   evaluated through scaled error functions so that it stays finite for
//!   arbitrarily thick slabs.
//! * [`soewald`]: the Fourier part rewritten with a sum-of-exponentials
//!   Gaussian so that every mode is an O(N) recursion over z-sorted charges.
//! * [`rbse`]: an unbiased random-batch estimate of the Fourier part using
//!   modes drawn by a Metropolis chain.
//!
//! The kernel is the bare 1/r (Gaussian units, no 4 pi eps0).

pub mod accum;
pub mod bench;
pub mod cells;
pub mod error;
pub mod md;
pub mod params;
pub mod rbse;
pub mod reference;
pub mod soe;
pub mod soewald;
pub mod solver;
pub mod sort;
pub mod special;
pub mod system;

pub use error::{Error, Result};
pub use params::{choose_alpha, predict_errors, rms_error, AlphaMode, ErrorPrediction, EwaldParams, KMode};
pub use reference::EnergyBreakdown;
pub use soe::SoeApprox;
pub use solver::{Evaluation, Solver};
pub use system::{validate_neutrality, BoxGeometry, ParticleSystem, Vec3};
