//! Side-dip algebra of co-polarised HOM data.
//!
//! The dip depth D is measured relative to the local maximum next to the
//! side dip, D = 1 − min/localmax, so an ideal balanced cross-polarised dip
//! from 1 to 0.75 has D = 0.25.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side-dip depth of fully inelastic light in a balanced interferometer.
pub const IDEAL_DIP_DEPTH: f64 = 0.25;

/// D = ½ (2|α|² − |α|⁴) / (2|α|² − |α|⁴ + 1)
pub fn dip_depth_from_inelastic(inelastic_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&inelastic_fraction) {
        return Err(Error::OutOfRange {
            name: "inelastic_fraction",
            value: inelastic_fraction,
            lo: 0.0,
            hi: 1.0,
            nearest: inelastic_fraction.clamp(0.0, 1.0),
        });
    }
    let x = inelastic_fraction;
    let c = 2.0 * x - x * x;
    Ok(0.5 * c / (c + 1.0))
}

/// Inverse of [`dip_depth_from_inelastic`]:
/// |α|² = 1 − √(8D² − 6D + 1)/(1 − 2D).
///
/// The radicand is evaluated as (1 − 4D)(1 − 2D). Near D = ¼ the inverse is
/// ill-conditioned: an error ε in D moves |α|² by about √(8ε).
pub fn inelastic_from_dip_depth(dip_depth: f64) -> Result<f64> {
    if !(0.0..=IDEAL_DIP_DEPTH).contains(&dip_depth) {
        return Err(Error::OutOfRange {
            name: "dip_depth",
            value: dip_depth,
            lo: 0.0,
            hi: IDEAL_DIP_DEPTH,
            nearest: dip_depth.clamp(0.0, IDEAL_DIP_DEPTH),
        });
    }
    let d = dip_depth;
    let radicand = ((1.0 - 4.0 * d) * (1.0 - 2.0 * d)).max(0.0);
    Ok(1.0 - radicand.sqrt() / (1.0 - 2.0 * d))
}

/// Everything needed to renormalise co-polarised data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomNormalization {
    /// Measured co-polarised side-dip depth D.
    pub dip_depth: f64,
    /// Measured cross-polarised side-dip depth.
    pub dip_depth_cross: f64,
    /// D rescaled by 0.25/D_cross before inversion.
    pub rescaled_dip_depth: f64,
    /// |α|² recovered from the rescaled depth.
    pub inelastic_fraction: f64,
    /// C = |α|⁴ + 2|α|²|β|²
    pub contributing: f64,
    /// NC = |β|⁴
    pub noncontributing: f64,
    /// N = (1 − |β|²)·D_cross/D
    pub factor: f64,
}

impl HomNormalization {
    pub fn elastic_fraction(&self) -> f64 {
        1.0 - self.inelastic_fraction
    }

    /// The identity normalization (no elastic light).
    pub fn identity() -> Self {
        Self {
            dip_depth: IDEAL_DIP_DEPTH,
            dip_depth_cross: IDEAL_DIP_DEPTH,
            rescaled_dip_depth: IDEAL_DIP_DEPTH,
            inelastic_fraction: 1.0,
            contributing: 1.0,
            noncontributing: 0.0,
            factor: 1.0,
        }
    }
}

/// Elastic fraction and co-polarised normalization factor from the measured
/// co- and cross-polarised side-dip depths.
///
/// The co depth is first rescaled by 0.25/D_cross, which removes the common
/// effect of background light and arm imbalance.
pub fn copol_normalization(dip_depth: f64, dip_depth_cross: f64) -> Result<HomNormalization> {
    if !(dip_depth_cross > 0.0 && dip_depth_cross <= IDEAL_DIP_DEPTH) {
        return Err(Error::OutOfRange {
            name: "dip_depth_cross",
            value: dip_depth_cross,
            lo: 0.0,
            hi: IDEAL_DIP_DEPTH,
            nearest: dip_depth_cross.clamp(f64::MIN_POSITIVE, IDEAL_DIP_DEPTH),
        });
    }
    if dip_depth == 0.0 {
        return Err(Error::FullyElastic);
    }
    if !(dip_depth > 0.0 && dip_depth <= dip_depth_cross) {
        // D > D_cross means a negative elastic fraction.
        return Err(Error::OutOfRange {
            name: "dip_depth",
            value: dip_depth,
            lo: 0.0,
            hi: dip_depth_cross,
            nearest: dip_depth.clamp(f64::MIN_POSITIVE, dip_depth_cross),
        });
    }
    let rescaled = (dip_depth * IDEAL_DIP_DEPTH / dip_depth_cross).min(IDEAL_DIP_DEPTH);
    let x = inelastic_from_dip_depth(rescaled)?;
    let beta2 = 1.0 - x;
    Ok(HomNormalization {
        dip_depth,
        dip_depth_cross,
        rescaled_dip_depth: rescaled,
        inelastic_fraction: x,
        contributing: x * x + 2.0 * x * beta2,
        noncontributing: beta2 * beta2,
        factor: (1.0 - beta2) * dip_depth_cross / dip_depth,
    })
}
