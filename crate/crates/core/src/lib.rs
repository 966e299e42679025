//! Numerical control toolkit for quasi-linear Schrödinger equations on flat tori.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`field`] and [`fft`]: uniform grids on `(R/2πZ)^d`, spectral fields, norms.
//! * [`cutoff`], [`symbol`], [`quantize`], [`calculus`], [`probe`]: Weyl and Bony-Weyl
//!   quantization with a banded frequency-domain kernel.
//! * [`model`]: the nonlinearity, its coefficient symbols, the paralinearized operator
//!   and the frozen linearization.
//! * [`diagonalize`]: the conjugation map and modified energy norms.
//! * [`krylov`], [`evolve`]: implicit midpoint time stepping with real-linear GMRES.
//! * [`hum`]: Gramian, conjugate gradient inversion and control operators.
//! * [`nonlinear`]: Picard null control and exact control by gluing.
//! * [`geometry`]: control regions, cutoffs and the geometric control condition.
//! * [`io`]: field dumps and manifests.
//!
//! Spatial integrals use the normalized measure `dx/(2π)^d`, so the L² norm of a field
//! equals the ℓ² norm of its Fourier coefficients.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod cutoff;
pub mod diagonalize;
pub mod error;
pub mod evolve;
pub mod exec;
pub mod fft;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod hum;
pub mod io;
pub mod krylov;
pub mod model;
pub mod nonlinear;
pub mod probe;
pub mod quantize;
pub mod symbol;

pub use error::{Error, Result};
pub use field::{Field, PairState};
pub use grid::TorusGrid;
pub use num_complex::Complex64 as C64;
