//! Fractional Brownian motion numerics without the standard library.
//!
//! The crate covers scalar fBm (covariance, Volterra kernel, samplers,
//! Wiener integrals), trace-class fBm in a truncated Hilbert space, a
//! constructive fixed-point solver for `dx = f(t, x) dt + g(t) dB^H` that
//! rescales the driving noise by self-similarity, and a spectral Galerkin
//! quasi-linear heat equation built on top of it.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fft;
pub mod grid;
pub mod heat;
pub mod hilbert;
pub mod hurst;
pub mod kernel;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod scalar_fn;
pub mod solver;
pub mod stats;
pub mod wiener;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use hurst::{HurstParam, Regime};
pub use kernel::{BetaConvention, KernelConstants, VolterraKernel};
pub use rng::RngStream;
pub use sampler::{FbmPath, FbmSampler, Provenance, SamplerKind};
pub use scalar_fn::{ScalarFn, Smoothness};
