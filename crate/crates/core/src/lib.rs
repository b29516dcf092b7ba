//! Spectral analysis of boundary-weighted Laplacians on Koch snowflake
//! pre-fractal meshes.
//!
//! The pipeline runs [`build_mesh`] → [`assemble`] → [`eig_full`] /
//! [`eig_partial`] → the analyses in [`analysis`], with harmonic extension of
//! boundary data in [`extension`] and the file formats in [`io`].

pub mod analysis;
pub mod config;
pub mod error;
pub mod extension;
pub mod io;
pub mod lattice;
pub mod operator;
pub mod solver;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use lattice::{build_mesh, build_mesh_with_guard, validate, EdgeKind, LatticePoint, Mesh, ValidationReport};
pub use operator::{apply, assemble, conductance, energy, energy_sequence, measure, CsrMatrix, OperatorBundle, OperatorKind};
pub use solver::{eig_full, eig_full_with, eig_partial, eig_partial_with, symmetrize, SolveMethod, SolverOptions, Spectrum, Which};
pub use extension::{decay_profile, energy_split, harmonic_extend, BoundaryData, EnergySplit, HarmonicExtender};
