//! Multi-echo MRI reconstruction from undersampled K-space with structured
//! deep dictionary learning.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below name the common instantiations.

// `!(a > b)` is used on purpose so NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictlearn;
pub mod error;
pub mod eval;
pub mod io;
pub mod kspace;
pub mod patches;
pub mod phantom;
pub mod prox;
pub mod scalar;

pub use dictlearn::{solve, solve_shallow, DeepDictionary, ReconReport, Solver, SolverConfig};
pub use error::{Error, Result};
pub use eval::{difference_image, lcurve_tune, snr_db, TuneGrid};
pub use kspace::{adjoint, fft2c, forward, ifft2c, make_mask, AcquiredData, EchoStack, RealImage, SamplingMask};
pub use num_complex::Complex;
pub use patches::{aggregate, coverage, extract, extract_all, Boundary, PatchConfig, PatchMatrix};
pub use phantom::{make_phantom, PhantomSpec};
pub use prox::Regularizer;
pub use scalar::Scalar;

pub type EchoStack64 = EchoStack<f64>;
pub type EchoStack32 = EchoStack<f32>;
pub type AcquiredData64 = AcquiredData<f64>;
pub type AcquiredData32 = AcquiredData<f32>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type Solver64 = Solver<f64>;
pub type Solver32 = Solver<f32>;
pub type ReconReport64 = ReconReport<f64>;
