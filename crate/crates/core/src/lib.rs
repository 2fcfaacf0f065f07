//! Periodic Coulomb potentials, forces and energies for charge-neutral
//! particle systems in a cubic box.
//!
//! Three evaluators are provided:
//!
//! * [`oracle`]: the direct Ewald sum, used as the reference,
//! * [`se`]: the Spectral Ewald method with a Gaussian window,
//! * [`spme`]: smooth particle-mesh Ewald with B-spline interpolation.
//!
//! The fast methods compute only the k-space part; the real-space part comes
//! from [`realspace`] and the self term from [`oracle::self_term`].
//! [`estimates`] holds the truncation error estimates, the runtime model and
//! the parameter tuner.
//!
//! Everything runs in Gaussian units (`phi = q / r`). Multiply by
//! [`oracle::COULOMB_KJ_MOL_NM`] for kJ/mol with lengths in nm.

pub mod error;
pub mod estimates;
pub mod field;
pub mod kspace;
mod mesh;
pub mod oracle;
pub mod realspace;
pub mod scalar;
pub mod se;
pub mod spme;
pub mod system;

pub use error::{Error, Result};
pub use field::{rms_error, ErrorReport, FieldResult};
pub use oracle::EwaldSplit;
pub use scalar::{Real, Vec3};
pub use system::{
    generate_system, read_system_file, write_system_file, ParticleSystem, SystemKind,
};

pub type ParticleSystem64 = ParticleSystem<f64>;
pub type ParticleSystem32 = ParticleSystem<f32>;
pub type FieldResult64 = FieldResult<f64>;
pub type FieldResult32 = FieldResult<f32>;
