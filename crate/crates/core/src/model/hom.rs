use serde::{Deserialize, Serialize};

use super::emitter::{g2_from_shape, rabi_shape, EmitterParams, RabiShape};
use crate::error::{check_non_negative, check_positive, check_unit_interval, Error, Result};
use crate::units::db_to_transmission;

/// Relative polarisation of the two interfering arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Co,
    Cross,
}

/// Statistics of the phases Φ₁, Φ₂ attached to the elastic component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Independent, uniformly distributed: an incoherent mixture of the two
    /// components.
    #[default]
    IndependentUniform,
}

/// Inelastic/elastic decomposition of the scattered field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMix {
    inelastic_fraction: f64,
    elastic_fraction: f64,
    /// Coherence time of the elastic component (the laser), ns. May be
    /// `f64::INFINITY`.
    pub laser_coherence_time: f64,
    #[serde(default)]
    pub phase_model: PhaseModel,
}

impl ScatteringMix {
    pub fn new(inelastic_fraction: f64, laser_coherence_time: f64) -> Result<Self> {
        check_unit_interval("inelastic_fraction", inelastic_fraction)?;
        if laser_coherence_time.is_nan() || laser_coherence_time <= 0.0 {
            return Err(Error::ParameterDomain {
                name: "laser_coherence_time",
                value: laser_coherence_time,
                reason: "must be > 0 (infinity allowed)",
            });
        }
        Ok(Self {
            inelastic_fraction,
            elastic_fraction: 1.0 - inelastic_fraction,
            laser_coherence_time,
            phase_model: PhaseModel::IndependentUniform,
        })
    }

    /// Purely inelastic light.
    pub fn inelastic_only() -> Self {
        Self::new(1.0, f64::INFINITY).expect("valid")
    }

    /// |α|²
    pub fn inelastic_fraction(&self) -> f64 {
        self.inelastic_fraction
    }

    /// |β|²
    pub fn elastic_fraction(&self) -> f64 {
        self.elastic_fraction
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("inelastic_fraction", self.inelastic_fraction)?;
        check_unit_interval("elastic_fraction", self.elastic_fraction)?;
        if self.inelastic_fraction + self.elastic_fraction != 1.0 {
            return Err(Error::ParameterDomain {
                name: "elastic_fraction",
                value: self.elastic_fraction,
                reason: "fractions must sum to 1",
            });
        }
        if self.laser_coherence_time.is_nan() || self.laser_coherence_time <= 0.0 {
            return Err(Error::ParameterDomain {
                name: "laser_coherence_time",
                value: self.laser_coherence_time,
                reason: "must be > 0 (infinity allowed)",
            });
        }
        Ok(())
    }
}

/// Geometry of the two-path (HOM) interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    /// Arm delay Δτ, ns.
    pub delta_tau: f64,
    /// Linear intensity transmission of the short arm.
    pub transmission_short: f64,
    /// Linear intensity transmission of the long arm, before any fibre loss.
    pub transmission_long: f64,
    pub polarization: Polarization,
    /// Residual wavepacket overlap at the second beamsplitter.
    pub mode_overlap: f64,
    /// Extra delay of a fibre spool in the long arm, ns.
    #[serde(default)]
    pub fibre_delay: Option<f64>,
    /// Extra loss of the fibre spool in the long arm, dB.
    #[serde(default)]
    pub fibre_attenuation_db: Option<f64>,
    /// Multiplies `mode_overlap` whenever a fibre delay is present. Models
    /// slow dephasing between photons emitted a fibre delay apart.
    #[serde(default = "one")]
    pub fibre_overlap_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl InterferometerConfig {
    pub fn balanced(delta_tau: f64, polarization: Polarization) -> Self {
        Self {
            delta_tau,
            transmission_short: 1.0,
            transmission_long: 1.0,
            polarization,
            mode_overlap: 1.0,
            fibre_delay: None,
            fibre_attenuation_db: None,
            fibre_overlap_factor: 1.0,
        }
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("delta_tau", self.delta_tau)?;
        if self.transmission_short <= 0.0 && self.transmission_long <= 0.0 {
            return Err(Error::Config("both interferometer arms are opaque".into()));
        }
        for (name, t) in [
            ("transmission_short", self.transmission_short),
            ("transmission_long", self.transmission_long),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::OutOfRange {
                    name,
                    value: t,
                    lo: 0.0,
                    hi: 1.0,
                    nearest: t.clamp(f64::MIN_POSITIVE, 1.0),
                });
            }
        }
        check_unit_interval("mode_overlap", self.mode_overlap)?;
        check_unit_interval("fibre_overlap_factor", self.fibre_overlap_factor)?;
        if let Some(d) = self.fibre_delay {
            check_non_negative("fibre_delay", d)?;
        }
        if let Some(a) = self.fibre_attenuation_db {
            check_non_negative("fibre_attenuation_db", a)?;
        }
        Ok(())
    }

    /// Total arm delay including the fibre, ns.
    pub fn effective_delay(&self) -> f64 {
        self.delta_tau + self.fibre_delay.unwrap_or(0.0)
    }

    /// Long-arm transmission including the fibre loss.
    pub fn effective_transmission_long(&self) -> f64 {
        self.transmission_long * db_to_transmission(self.fibre_attenuation_db.unwrap_or(0.0))
    }

    pub fn effective_overlap(&self) -> f64 {
        match self.fibre_delay {
            Some(_) => self.mode_overlap * self.fibre_overlap_factor,
            None => self.mode_overlap,
        }
    }
}

/// Two-photon interference probability of co-polarised photons with the
/// two-component mode functions, at detection delay `tau`.
///
/// `inelastic_time` is the amplitude decay time of the inelastic component
/// (T₁); the elastic component decays with the laser coherence time.
pub fn p_hom_copolarized(tau: f64, mix: &ScatteringMix, inelastic_time: f64, overlap: f64) -> f64 {
    let t = tau.abs();
    let a2 = mix.inelastic_fraction();
    let b2 = mix.elastic_fraction();
    let r1 = 1.0 / inelastic_time;
    let r2 = 1.0 / mix.laser_coherence_time;
    let bracket = a2 * a2 * (-2.0 * r1 * t).exp()
        + 2.0 * a2 * b2 * (-(r1 + r2) * t).exp()
        + b2 * b2 * (-2.0 * r2 * t).exp();
    0.5 * (1.0 - bracket * overlap)
}

/// Integrated joint-click probability at the second beamsplitter.
pub fn hom_interference_prob(
    tau: f64,
    mix: &ScatteringMix,
    params: &EmitterParams,
    polarization: Polarization,
    overlap: f64,
) -> Result<f64> {
    mix.validate()?;
    params.validate()?;
    check_unit_interval("overlap", overlap)?;
    Ok(match polarization {
        Polarization::Cross => 0.5,
        Polarization::Co => p_hom_copolarized(tau, mix, params.t1, overlap),
    })
}

/// Coincidence pattern behind a two-path interferometer, evaluated from an
/// oscillation shape rather than raw emitter parameters so that fitters can
/// vary (η, μ) directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomCorrelationModel {
    pub shape: RabiShape,
    /// Amplitude decay time of the inelastic mode function, ns.
    pub inelastic_time: f64,
    pub mix: ScatteringMix,
    /// Arm delay including any fibre, ns.
    pub delay: f64,
    pub transmission_short: f64,
    pub transmission_long: f64,
    pub overlap: f64,
}

impl HomCorrelationModel {
    pub fn new(
        params: &EmitterParams,
        mix: &ScatteringMix,
        config: &InterferometerConfig,
    ) -> Result<Self> {
        config.validate()?;
        mix.validate()?;
        Ok(Self {
            shape: rabi_shape(params)?,
            inelastic_time: params.t1,
            mix: *mix,
            delay: config.effective_delay(),
            transmission_short: config.transmission_short,
            transmission_long: config.effective_transmission_long(),
            overlap: config.effective_overlap(),
        })
    }

    pub fn p_hom(&self, tau: f64, polarization: Polarization) -> f64 {
        match polarization {
            Polarization::Cross => 0.5,
            Polarization::Co => p_hom_copolarized(tau, &self.mix, self.inelastic_time, self.overlap),
        }
    }

    /// Normalised coincidences. Same-arm paths carry weight t_s² + t_l², the
    /// two cross-arm paths t_s·t_l each; the sum is scaled so that
    /// distinguishable photons approach 1 at large delay.
    pub fn g2(&self, tau: f64, polarization: Polarization) -> f64 {
        let ts = self.transmission_short;
        let tl = self.transmission_long;
        let same = 0.5 * (ts * ts + tl * tl) * g2_from_shape(tau, &self.shape);
        let cross = ts
            * tl
            * (g2_from_shape(tau + self.delay, &self.shape)
                + g2_from_shape(tau - self.delay, &self.shape))
            * self.p_hom(tau, polarization);
        let norm = 0.5 * (ts + tl) * (ts + tl);
        (same + cross) / norm
    }
}

/// Co- or cross-polarised HOM correlation for the configured interferometer.
pub fn hom_g2(
    tau: f64,
    params: &EmitterParams,
    mix: &ScatteringMix,
    config: &InterferometerConfig,
) -> Result<f64> {
    let model = HomCorrelationModel::new(params, mix, config)?;
    Ok(model.g2(tau, config.polarization))
}

/// Two-photon interference visibility from co- and cross-polarised values.
pub fn hom_visibility(g2_co: f64, g2_cross: f64) -> Result<f64> {
    if !(g2_cross > 0.0) {
        return Err(Error::ParameterDomain {
            name: "g2_cross",
            value: g2_cross,
            reason: "visibility needs a positive cross-polarised reference",
        });
    }
    Ok(1.0 - g2_co / g2_cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mollow_g2;
    use approx::assert_abs_diff_eq;

    fn emitter() -> EmitterParams {
        EmitterParams::new(1.0, 2.0, 0.5)
    }

    #[test]
    fn p_hom_examples() {
        let p = emitter();
        let mix = ScatteringMix::new(0.6, 50.0).unwrap();
        assert_eq!(
            hom_interference_prob(0.0, &mix, &p, Polarization::Co, 1.0).unwrap(),
            0.0
        );
        for tau in [-3.0, 0.0, 0.4, 17.0] {
            assert_eq!(
                hom_interference_prob(tau, &mix, &p, Polarization::Cross, 1.0).unwrap(),
                0.5
            );
        }
        let pure = ScatteringMix::inelastic_only();
        let v = hom_interference_prob(0.5, &pure, &p, Polarization::Co, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (1.0 - (-1.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.3161, epsilon = 1e-4);
    }

    #[test]
    fn cross_side_dips_at_three_quarters() {
        // g²(0) = 0 and g²(2Δτ) = 1 to machine precision for Δτ ≫ T₁.
        let p = emitter();
        let cfg = InterferometerConfig::balanced(40.0, Polarization::Cross);
        let mix = ScatteringMix::inelastic_only();
        for tau in [40.0, -40.0] {
            assert_abs_diff_eq!(hom_g2(tau, &p, &mix, &cfg).unwrap(), 0.75, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(hom_g2(500.0, &p, &mix, &cfg).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hom_g2(0.0, &p, &mix, &cfg).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn balanced_matches_two_path_formula() {
        let p = emitter();
        let mix = ScatteringMix::new(0.4, 1e4).unwrap();
        let mut cfg = InterferometerConfig::balanced(20.0, Polarization::Co);
        cfg.mode_overlap = 0.8;
        for tau in [-21.0, -3.0, 0.0, 0.7, 19.5, 33.0] {
            let g = |t| mollow_g2(t, &p).unwrap();
            let phom = hom_interference_prob(tau, &mix, &p, Polarization::Co, 0.8).unwrap();
            let expected = 0.5 * g(tau) + 0.5 * (g(tau + 20.0) + g(tau - 20.0)) * phom;
            assert_abs_diff_eq!(hom_g2(tau, &p, &mix, &cfg).unwrap(), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn unbalanced_zero_delay_cross() {
        let p = emitter();
        let mix = ScatteringMix::inelastic_only();
        let mut cfg = InterferometerConfig::balanced(20.0, Polarization::Cross);
        cfg.transmission_long = 10f64.powf(-0.58);
        let v = hom_g2(0.0, &p, &mix, &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.33, epsilon = 0.005);
        // same result when the loss sits in the fibre
        let mut f = InterferometerConfig::balanced(20.0, Polarization::Cross);
        f.fibre_attenuation_db = Some(5.8);
        f.fibre_delay = Some(95_000.0);
        assert_abs_diff_eq!(hom_g2(0.0, &p, &mix, &f).unwrap(), v, epsilon = 1e-6);
    }

    #[test]
    fn visibility_limits() {
        assert_eq!(hom_visibility(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(hom_visibility(0.0, 0.5).unwrap(), 1.0);
        assert!(hom_visibility(0.1, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = InterferometerConfig::balanced(20.0, Polarization::Co);
        cfg.transmission_long = 0.0;
        cfg.transmission_short = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = InterferometerConfig::balanced(20.0, Polarization::Co);
        cfg.mode_overlap = 1.2;
        assert!(cfg.validate().is_err());
        assert!(InterferometerConfig::balanced(0.0, Polarization::Co)
            .validate()
            .is_err());
    }
}
