use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Fitted (or held fixed) model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// One standard deviation from the local curvature; zero when fixed.
    pub uncertainty: f64,
    pub fixed: bool,
}

/// A quantity computed from the fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValue {
    pub value: f64,
    pub uncertainty: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub evaluations: usize,
    pub final_damping: f64,
    pub converged: bool,
}

/// Conditions a caller should know about before trusting a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The curvature matrix is singular; some directions are unconstrained.
    SingularCovariance,
    /// Line amplitude is compatible with zero.
    AmplitudeZero,
    /// No oscillation resolved; μ is reported as an upper bound.
    MuUpperBound,
    /// Co-polarised dip deeper than the cross-polarised one beyond errors.
    InconsistentDipDepths,
    /// Coherent fraction A not pinned by long-delay points.
    CoherentAmplitudeUnidentifiable,
    /// Flat visibility curve: τ₂ not determined.
    Tau2Unidentifiable,
    /// All powers far below saturation; P_sat is only bounded from below.
    SaturationUnidentifiable,
    /// Residuals exceed noise (small lack-of-fit p-value).
    LackOfFit,
    /// The IRF grid is coarser than σ/2.
    CoarseIrfGrid,
    /// Poisson baseline overlapped a feature.
    BaselineFlagged,
    /// The laser-breakthrough floor was subtracted before fitting.
    BreakthroughCorrected,
}

/// Where the fitted data came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Input file name → SHA-256 of its bytes.
    pub input_hashes: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
}

/// A sampled curve, for instance V(τ).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    /// Row-major over all parameters; rows of fixed parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    /// χ² at the optimum.
    pub residual_sum: f64,
    pub reduced_chi_square: f64,
    pub points: usize,
    pub degrees_of_freedom: usize,
    pub convergence: Convergence,
    #[serde(default)]
    pub derived: BTreeMap<String, DerivedValue>,
    #[serde(default)]
    pub curves: BTreeMap<String, Curve>,
    #[serde(default)]
    pub flags: Vec<FitFlag>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a parameter or derived quantity.
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name)
            .map(|p| p.value)
            .or_else(|| self.derived.get(name).map(|d| d.value))
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.parameter(name)
            .map(|p| p.uncertainty)
            .or_else(|| self.derived.get(name).map(|d| d.uncertainty))
    }

    pub fn values(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub(crate) fn flag(&mut self, flag: FitFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }

    pub(crate) fn derive(&mut self, name: &str, value: f64, uncertainty: f64, unit: &str) {
        self.derived.insert(
            name.to_string(),
            DerivedValue {
                value,
                uncertainty,
                unit: unit.to_string(),
            },
        );
    }

    /// Probability of a χ² at least this large if the model is correct.
    pub fn lack_of_fit_p_value(&self) -> f64 {
        if self.degrees_of_freedom == 0 {
            return 1.0;
        }
        ChiSquared::new(self.degrees_of_freedom as f64)
            .map(|d| d.sf(self.residual_sum))
            .unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
