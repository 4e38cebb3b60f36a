use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A measured combination that no physical parameter set can produce.
    #[error("inconsistent measurement: radicand deficit {deficit}")]
    InconsistentMeasurement { deficit: f64 },

    #[error("`{name}` = {value} outside [{lo}, {hi}] (nearest valid value {nearest})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
        nearest: f64,
    },

    #[error("quadrature truncation leaves tail mass {tail_mass:e} above tolerance {tolerance:e}")]
    Accuracy { tail_mass: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at index {index}: {message}")]
    Data { index: usize, message: String },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error(
        "insufficient statistics: relative error {relative_error:.3} at the dip minimum; \
         about {extra_duration_factor:.1}x the acquisition time is needed"
    )]
    Precision {
        relative_error: f64,
        extra_duration_factor: f64,
    },

    /// Co-polarised data with no inelastic component cannot be renormalised.
    #[error("co-polarised data is fully elastic; the normalization factor is undefined")]
    FullyElastic,

    #[error("fit `{model}` failed after {iterations} iterations: {message}")]
    Fit {
        model: String,
        message: String,
        iterations: usize,
        best: Vec<f64>,
    },

    #[error("tag file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
            nearest: value.clamp(0.0, 1.0),
        })
    }
}
