use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit_interval, Result};
use crate::units::PLANCK_UEV_NS;

/// First-order visibility model of a Michelson interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MichelsonModel {
    /// Sum of an elastic and an inelastic exponential decay.
    Resonant {
        /// Coherently scattered fraction A.
        coherent_amplitude: f64,
        /// Elastic coherence time τ₁, ns (infinite by default).
        tau1: f64,
        /// Inelastic coherence time τ₂, ns.
        tau2: f64,
    },
    /// Exponential envelope times the beat between two fine-structure lines.
    NonResonant {
        /// Coherence time T_c, ns.
        coherence_time: f64,
        /// Fine structure splitting, µeV.
        fss: f64,
        /// Relative intensity r of the first line; the second carries 1 − r.
        line_ratio: f64,
    },
}

impl MichelsonModel {
    pub fn resonant(coherent_amplitude: f64, tau2: f64) -> Self {
        MichelsonModel::Resonant {
            coherent_amplitude,
            tau1: f64::INFINITY,
            tau2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MichelsonModel::Resonant {
                coherent_amplitude,
                tau1,
                tau2,
            } => {
                check_unit_interval("coherent_amplitude", coherent_amplitude)?;
                if !(tau1 > 0.0) {
                    check_positive("tau1", tau1)?;
                }
                check_positive("tau2", tau2)
            }
            MichelsonModel::NonResonant {
                coherence_time,
                fss,
                line_ratio,
            } => {
                check_positive("coherence_time", coherence_time)?;
                crate::error::check_non_negative("fss", fss)?;
                check_unit_interval("line_ratio", line_ratio)
            }
        }
    }
}

/// Visibility at path-length delay `tau` (ns).
pub fn michelson_visibility(tau: f64, model: &MichelsonModel) -> Result<f64> {
    model.validate()?;
    let t = tau.abs();
    Ok(match *model {
        MichelsonModel::Resonant {
            coherent_amplitude: a,
            tau1,
            tau2,
        } => {
            let elastic = if tau1.is_infinite() { 1.0 } else { (-t / tau1).exp() };
            a * elastic + (1.0 - a) * (-t / tau2).exp()
        }
        MichelsonModel::NonResonant {
            coherence_time,
            fss,
            line_ratio: r,
        } => {
            let phase = std::f64::consts::TAU * fss * t / PLANCK_UEV_NS;
            let beat = (r * r + (1.0 - r) * (1.0 - r) + 2.0 * r * (1.0 - r) * phase.cos()).max(0.0);
            (-t / coherence_time).exp() * beat.sqrt() / (r + (1.0 - r))
        }
    })
}
