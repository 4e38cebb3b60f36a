use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};

/// Power dependence of linewidth, count rate and background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurveParams {
    /// Natural linewidth Γ₀, µeV.
    pub gamma0: f64,
    /// Saturation power, in the same linear unit as the power axis.
    pub p_sat: f64,
    /// Saturation count rate, kcts/s.
    pub i_sat: f64,
    /// Background polynomial coefficients in ascending order, kcts/s.
    pub background_coeffs: Vec<f64>,
}

impl Default for PowerCurveParams {
    fn default() -> Self {
        Self {
            gamma0: 2.7,
            p_sat: 1.0,
            i_sat: 491.0,
            background_coeffs: vec![0.0, 1.0],
        }
    }
}

impl PowerCurveParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("gamma0", self.gamma0)?;
        check_positive("p_sat", self.p_sat)?;
        check_positive("i_sat", self.i_sat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    /// µeV
    pub linewidth: f64,
    /// kcts/s
    pub counts: f64,
    /// kcts/s
    pub background: f64,
}

/// Evaluates a polynomial with coefficients in ascending order.
pub fn polynomial_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Power-broadened linewidth Γ₀√(1 + P/P_sat), saturating count rate
/// I_sat·s/(1 + s) with s = P/P_sat, and the background polynomial.
pub fn power_curves(power: f64, params: &PowerCurveParams) -> Result<PowerCurvePoint> {
    params.validate()?;
    check_non_negative("power", power)?;
    let s = power / params.p_sat;
    Ok(PowerCurvePoint {
        linewidth: params.gamma0 * (1.0 + s).sqrt(),
        counts: params.i_sat * s / (1.0 + s),
        background: polynomial_eval(&params.background_coeffs, power),
    })
}

/// Coherently scattered fraction 1/(1 + Ω²/γ).
///
/// Implemented exactly in this form, so Ω² and γ must be supplied in one
/// consistent unit system (for instance both in rate units via
/// [`crate::units::energy_to_angular_rate`]). When Ω² is only known as k·P,
/// the fitters work with γ/k and the unit question drops out.
pub fn coherent_fraction(rabi: f64, gamma: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    Ok(1.0 / (1.0 + rabi * rabi / gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBackground {
    pub signal_fraction: f64,
    pub background_fraction: f64,
}

/// Uncorrelated background fraction behind a measured g²(0), assuming
/// g²(0) = 1 − s² for a signal fraction s.
pub fn signal_fraction_from_g2zero(g2_zero: f64) -> Result<SignalBackground> {
    if g2_zero > 1.0 {
        return Err(Error::ParameterDomain {
            name: "g2_zero",
            value: g2_zero,
            reason: "bunched (> 1): not a background estimate",
        });
    }
    if !(g2_zero >= 0.0) {
        return Err(Error::ParameterDomain {
            name: "g2_zero",
            value: g2_zero,
            reason: "must be >= 0",
        });
    }
    let s = (1.0 - g2_zero).sqrt();
    Ok(SignalBackground {
        signal_fraction: s,
        background_fraction: 1.0 - s,
    })
}
