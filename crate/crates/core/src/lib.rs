//! Numerical solver for the forced scalar field equation
//! `−Δu + u = u^p + κμ` on `R^N` with radial, compactly supported sources.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); sign
//! decisions about exponents use exact rationals. The aliases at the bottom
//! fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical;
pub mod error;
pub mod exponents;
pub mod field;
pub mod grid;
pub mod iterate;
pub mod kernel;
pub mod measure;
pub mod real;
pub mod special;
pub mod spectrum;

pub use error::{Error, Result};
pub use exponents::{Extended, NuWindow, QRange};
pub use field::{convolve, RadialField, SplitField, TailMode};
pub use grid::{GridSpec, RadialGrid};
pub use kernel::{BesselKernel, KernelMatrix, KernelSettings};
pub use measure::{compute_mu0, Mu0, SourceMeasure};
pub use real::Real;

pub type Grid = RadialGrid<f64>;
pub type Field = RadialField<f64>;
pub type Kernel = KernelMatrix<f64>;
pub type Measure = SourceMeasure<f64>;
