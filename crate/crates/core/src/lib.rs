//! Numerical laboratory for the spectra of sums of i.i.d. uniform random
//! permutation matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`permmat`]: permutations, the implicit sparse sum `S = P_1 + ... + P_d`,
//!   Hamming distance, trace statistics and the seeded RNG streams.
//! - [`spectral`]: dense computations on `A(z) = zI - S/sqrt(d)`: singular
//!   values, eigenvalues, Hermitization, Stieltjes transforms, log potential,
//!   smallest singular value and block resolvent traces.
//! - [`limitlaw`]: the cubic fixed-point equation and its positive root, the
//!   limiting Stieltjes transform, the circular and fixed-`d` densities and the
//!   local-law envelope.
//! - [`girko`]: log-potential fields on complex grids, discrete Laplacian
//!   density recovery, circular-law metrics and the Ginibre baseline.
//! - [`experiments`]: seeded Monte Carlo drivers producing deterministic
//!   reports with explicit pass criteria.

#![forbid(unsafe_code)]

pub mod error;
pub mod experiments;
pub mod girko;
pub mod limitlaw;
pub mod permmat;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
