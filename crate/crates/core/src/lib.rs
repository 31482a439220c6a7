//! Stochastic-field simulation of type-II parametric down conversion in the
//! Wigner representation.
//!
//! The vacuum is realized as independent complex-Gaussian mode amplitudes,
//! pushed through the second-order crystal input-output map, and then read
//! out through slowly varying fields, polarizers and photodetectors. Every
//! Monte Carlo observable has an analytic mode-sum counterpart so the two can
//! be checked against each other.
//!
//! Module map:
//!
//! * [`lattice`]: mode grid, phase-matching kernel, `u(x)` envelope
//! * [`zeropoint`]: seeded vacuum ensembles
//! * [`crystal`]: order-g² crystal transform and its `G`/`J` operators
//! * [`field`]: slowly varying fields, propagation, polarizers
//! * [`correlation`]: analytic and Monte Carlo correlation functions
//! * [`detection`]: standard and clipped photodetection rates
//! * [`bell`]: angle scans, CHSH and Clauser-Horne bookkeeping

pub mod bell;
pub mod correlation;
pub mod crystal;
pub mod detection;
mod error;
pub mod field;
pub mod lattice;
pub mod stats;
pub mod zeropoint;

pub use error::{Error, Result};

pub use num_complex::Complex64;
