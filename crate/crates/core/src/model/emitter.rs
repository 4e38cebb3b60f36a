use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};

/// Relative slack allowed above the Fourier limit `t2 <= 2 t1` when
/// validating parameters; fitted coherence times may exceed it within their
/// error bars.
pub const DEFAULT_FOURIER_SLACK: f64 = 0.1;

/// Physical state of the resonantly driven two-level transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Excited-state lifetime T₁, ns.
    pub t1: f64,
    /// Coherence time T₂ of inelastically scattered photons, ns.
    pub t2: f64,
    /// Rabi frequency Ω, rad/ns.
    pub rabi: f64,
    /// Natural linewidth γ, µeV.
    pub gamma: f64,
    /// Fine structure splitting, µeV.
    pub fss: f64,
    /// Carrier energy, µeV. Only a phase reference; no magnitude depends on it.
    #[serde(default)]
    pub transition_energy: Option<f64>,
}

impl EmitterParams {
    /// Parameters with the linewidth and splitting of the characterised dot.
    pub fn new(t1: f64, t2: f64, rabi: f64) -> Self {
        Self {
            t1,
            t2,
            rabi,
            gamma: 2.7,
            fss: 22.77,
            transition_energy: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_slack(DEFAULT_FOURIER_SLACK)
    }

    pub fn validate_with_slack(&self, slack: f64) -> Result<()> {
        check_positive("t1", self.t1)?;
        check_positive("t2", self.t2)?;
        check_non_negative("rabi", self.rabi)?;
        check_positive("gamma", self.gamma)?;
        check_non_negative("fss", self.fss)?;
        if self.t2 > 2.0 * self.t1 * (1.0 + slack) {
            return Err(Error::ParameterDomain {
                name: "t2",
                value: self.t2,
                reason: "exceeds the Fourier limit 2*t1 beyond the allowed slack",
            });
        }
        Ok(())
    }

    /// Pure dephasing rate 1/T₂ − 1/(2T₁) in 1/ns; negative above the
    /// Fourier limit.
    pub fn pure_dephasing_rate(&self) -> f64 {
        1.0 / self.t2 - 0.5 / self.t1
    }
}

/// Damped-oscillation parameters of the intensity correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiShape {
    /// Decay rate η of the oscillations, 1/ns.
    pub eta: f64,
    /// Effective oscillation frequency μ, rad/ns.
    pub mu: f64,
}

impl RabiShape {
    pub fn new(eta: f64, mu: f64) -> Result<Self> {
        let s = Self { eta, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("eta", self.eta)?;
        check_non_negative("mu", self.mu)
    }
}

/// How μ is built from (T₁, T₂, Ω).
///
/// `AsPrinted` uses μ² = Ω² + (1/T₁ − 1/T₂)². `Bloch` uses the eigenvalues
/// of the optical Bloch equations, μ² = Ω² − (1/T₁ − 1/T₂)²/4, which is
/// what the trajectory simulator produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuConvention {
    #[default]
    AsPrinted,
    Bloch,
}

impl MuConvention {
    /// Signed μ²; negative values mean an overdamped correlation.
    fn mu_squared(self, t1: f64, t2: f64, rabi: f64) -> f64 {
        let d = 1.0 / t1 - 1.0 / t2;
        match self {
            MuConvention::AsPrinted => rabi * rabi + d * d,
            MuConvention::Bloch => rabi * rabi - 0.25 * d * d,
        }
    }

    fn rabi_squared(self, t1: f64, t2: f64, mu: f64) -> f64 {
        let d = 1.0 / t1 - 1.0 / t2;
        match self {
            MuConvention::AsPrinted => mu * mu - d * d,
            MuConvention::Bloch => mu * mu + 0.25 * d * d,
        }
    }
}

pub fn rabi_shape(params: &EmitterParams) -> Result<RabiShape> {
    rabi_shape_with(params, MuConvention::AsPrinted)
}

pub fn rabi_shape_with(params: &EmitterParams, convention: MuConvention) -> Result<RabiShape> {
    params.validate()?;
    let eta = 0.5 * (1.0 / params.t1 + 1.0 / params.t2);
    let mu_sq = convention.mu_squared(params.t1, params.t2, params.rabi);
    if mu_sq < 0.0 {
        return Err(Error::ParameterDomain {
            name: "rabi",
            value: params.rabi,
            reason: "overdamped: no real oscillation frequency",
        });
    }
    Ok(RabiShape {
        eta,
        mu: mu_sq.sqrt(),
    })
}

/// Inverts [`rabi_shape`] given an independently measured T₂. Returns
/// `(t1, rabi)`.
pub fn solve_t1_rabi(shape: &RabiShape, t2: f64) -> Result<(f64, f64)> {
    solve_t1_rabi_with(shape, t2, MuConvention::AsPrinted)
}

pub fn solve_t1_rabi_with(
    shape: &RabiShape,
    t2: f64,
    convention: MuConvention,
) -> Result<(f64, f64)> {
    shape.validate()?;
    check_positive("t2", t2)?;
    let inv_t1 = 2.0 * shape.eta - 1.0 / t2;
    if inv_t1 <= 0.0 {
        return Err(Error::InconsistentMeasurement { deficit: inv_t1 });
    }
    let t1 = 1.0 / inv_t1;
    let rabi_sq = convention.rabi_squared(t1, t2, shape.mu);
    if rabi_sq < 0.0 {
        return Err(Error::InconsistentMeasurement { deficit: rabi_sq });
    }
    Ok((t1, rabi_sq.sqrt()))
}

/// sin(x)/x with the removable singularity filled in.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// 1 − e^{−η|τ|}[cos μ|τ| + (η/μ) sin μ|τ|] for a signed μ².
pub(crate) fn g2_signed(tau: f64, eta: f64, mu_sq: f64) -> f64 {
    let t = tau.abs();
    let env = (-eta * t).exp();
    let bracket = if mu_sq >= 0.0 {
        let mu = mu_sq.sqrt();
        (mu * t).cos() + eta * t * sinc(mu * t)
    } else {
        let kappa = (-mu_sq).sqrt();
        (kappa * t).cosh() + eta * t * sinhc(kappa * t)
    };
    1.0 - env * bracket
}

/// Second-order correlation for a given oscillation shape.
pub fn g2_from_shape(tau: f64, shape: &RabiShape) -> f64 {
    g2_signed(tau, shape.eta, shape.mu * shape.mu)
}

/// Intensity autocorrelation of resonance fluorescence, with μ as printed.
pub fn mollow_g2(tau: f64, params: &EmitterParams) -> Result<f64> {
    mollow_g2_with(tau, params, MuConvention::AsPrinted)
}

/// As [`mollow_g2`] with an explicit μ convention. The Bloch convention also
/// covers the overdamped regime.
pub fn mollow_g2_with(tau: f64, params: &EmitterParams, convention: MuConvention) -> Result<f64> {
    params.validate()?;
    let eta = 0.5 * (1.0 / params.t1 + 1.0 / params.t2);
    let mu_sq = convention.mu_squared(params.t1, params.t2, params.rabi);
    Ok(g2_signed(tau, eta, mu_sq))
}
