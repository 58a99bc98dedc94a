//! Gabor-frame discretization of Fourier integral operators on a periodic grid.
//!
//! The crate samples functions on the torus [0, L)^d, builds Gabor frames on
//! separable lattices, applies Fourier integral operators
//! Tf(x) = ∫ e^{2πiΦ(x,η)} σ(x,η) f̂(η) dη by quadrature, and measures how
//! their Gabor matrices concentrate along the graph of the canonical map.

pub mod acceptance;
pub mod analysis;
pub mod error;
mod fft;
pub mod gabor;
pub mod fio;
pub mod grid;
pub mod io;
pub mod metaplectic;
pub mod phase;

pub use error::{FioError, Result};
pub use num_complex::Complex64 as C64;
