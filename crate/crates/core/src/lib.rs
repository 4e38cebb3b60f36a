//! Coherent light scattering from a resonantly driven two-level emitter.
//!
//! The crate is split along the measurement chain:
//!
//! - [`model`]: closed-form correlation, interference, visibility and
//!   power-law models, plus a brute-force quadrature oracle for the
//!   two-photon interference probability.
//! - [`simulate`]: seeded Monte Carlo generation of time-tag streams
//!   (quantum-jump trajectories, HOM pair sampling, detector and fibre
//!   degradation) and the tag file formats.
//! - [`correlator`]: sliding-window coincidence histogramming, Poisson and
//!   co-polarised renormalisation, dip-depth extraction.
//! - [`fitting`]: a damped least-squares engine and the per-experiment
//!   fitters built on it.
//!
//! With the default `parallel` feature the data-parallel inner loops
//! (correlation, oracle sweeps, pair sampling, bootstrap refits) run on
//! rayon; without it everything runs on the calling thread and produces
//! identical results.

pub mod correlator;
pub mod error;
pub mod fitting;
pub mod model;
mod par;
pub mod simulate;
pub mod units;

pub use error::{Error, Result};
