//! Coincidence histogramming of time-tag streams and the normalisations
//! applied to the resulting correlation functions.

mod dip;
mod engine;
mod histogram;
mod normalize;

pub use dip::{extract_dip_depth, DipDepth, MAX_RELATIVE_MINIMUM_ERROR};
pub use engine::{correlate, correlate_sequential, correlate_tags, Window};
pub use histogram::{CorrelationHistogram, Normalization, NormalizationKind};
pub use normalize::{poisson_normalize, renormalize_copolarized, DISPERSION_P_VALUE};
