//! Periodic-lattice laboratory for the Anderson Hamiltonian `H = -Δ + ξ`
//! with mollified, renormalized white noise in two and three dimensions.
//!
//! Modules build on each other bottom-up: [`lattice`] provides grids, FFT
//! convolution and spectral derivatives; [`noise`] samples white noise and
//! mollifies it; [`enhanced2d`] and [`renorm3d`] compute the renormalized
//! objects; [`pam`] integrates the parabolic Anderson model; [`spectral`]
//! assembles and diagonalizes the discrete Hamiltonian; [`norms`] estimates
//! the negative-regularity norms used to compare enhanced noises.

pub mod enhanced2d;
pub mod error;
pub mod lattice;
pub mod noise;
pub mod norms;
pub mod pam;
pub mod radial;
pub mod renorm3d;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
