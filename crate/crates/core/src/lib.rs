//! Simulation of boson-sampling devices and certification of device
//! equivalence from coarse-grained measurement samples.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`fock`]: occupation-number states, colex ranking, L1 distance
//! - [`permanent`]: Ryser and naive permanents
//! - [`interferometer`]: Haar unitaries, trapped-ion phonon evolution, noise models
//! - [`distributions`]: exact bosonic, distinguishable and uniform output tables
//! - [`sampling`]: finite measurement samples with reproducible RNG streams
//! - [`coarsegrain`]: the L1 bubble partition built from one sample
//! - [`stats`]: two-sample chi-squared testing and p-values
//! - [`harness`]: multi-run certification campaigns and plot-ready output

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coarsegrain;
pub mod distributions;
mod error;
pub mod fock;
pub mod harness;
pub mod interferometer;
pub(crate) mod linalg;
pub mod permanent;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use nalgebra::DMatrix;
pub use num_complex::Complex64;

/// Dense complex matrix used for unitaries and Hamiltonians.
pub type CMatrix = DMatrix<Complex64>;
