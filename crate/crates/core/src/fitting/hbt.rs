use serde::{Deserialize, Serialize};

use super::binned::{binned_convolved, histogram_data};
use super::lm::{least_squares, propagate, Data, LmOptions, ParamSpec};
use super::result::{Curve, FitFlag, FitResult};
use crate::correlator::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::model::{g2_from_shape, solve_t1_rabi_with, MuConvention, RabiShape};

/// Treatment of uncorrelated background in a g² fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum BackgroundMode {
    Free,
    /// Background fraction 1 − s held at the given value.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbtFitOptions {
    /// Gaussian IRF σ, ns.
    pub irf_sigma: f64,
    /// Fit σ as well (sensitivity studies).
    pub free_irf: bool,
    /// Known coherence time T₂, ns; enables the derived T₁ and Ω.
    pub t2: Option<f64>,
    pub background: BackgroundMode,
    /// Only bins with |τ| ≤ this many ns enter the fit.
    pub fit_window: Option<f64>,
    pub convention: MuConvention,
}

impl Default for HbtFitOptions {
    fn default() -> Self {
        Self {
            irf_sigma: 0.0,
            free_irf: false,
            t2: None,
            background: BackgroundMode::Free,
            fit_window: None,
            convention: MuConvention::AsPrinted,
        }
    }
}

const ETA: usize = 0;
const MU: usize = 1;
const AMPLITUDE: usize = 2;
const BACKGROUND: usize = 3;
const SIGMA: usize = 4;

/// Upper bound of a fitted IRF width, ns.
const MAX_FREE_IRF_SIGMA: f64 = 0.5;

/// Fits A·[s²·(g² ⊗ IRF)(τ) + 1 − s²] to a normalised autocorrelation
/// histogram, with g² the damped Rabi oscillation of shape (η, μ) and
/// background fraction b = 1 − s.
pub fn fit_g2_hbt(hist: &CorrelationHistogram, options: &HbtFitOptions) -> Result<FitResult> {
    if options.irf_sigma < 0.0 {
        return Err(Error::Config("IRF sigma must be non-negative".into()));
    }
    let (grid, y, sigma) = histogram_data(hist, options.fit_window)?;
    let data = Data::new(grid.centers(), y, sigma)?;
    let model = |p: &[f64], _: &[f64]| {
        let shape = RabiShape {
            eta: p[ETA],
            mu: p[MU],
        };
        let s2 = (1.0 - p[BACKGROUND]).powi(2);
        let (g, _) = binned_convolved(&grid, p[SIGMA].max(0.0), |t| g2_from_shape(t, &shape));
        g.into_iter()
            .map(|g| p[AMPLITUDE] * (s2 * g + 1.0 - s2))
            .collect::<Vec<f64>>()
    };

    // Level far from τ = 0 starts the amplitude.
    let tail: Vec<f64> = {
        let n = data.len();
        let k = (n / 10).max(1);
        data.y[..k].iter().chain(&data.y[n - k..]).copied().collect()
    };
    let level = tail.iter().sum::<f64>() / tail.len() as f64;
    let (bg_init, bg_fixed) = match options.background {
        BackgroundMode::Free => (0.05, false),
        BackgroundMode::Fixed(b) => (b, true),
    };
    if !(0.0..1.0).contains(&bg_init) {
        return Err(Error::Config(format!("background fraction {bg_init} outside [0, 1)")));
    }

    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for &eta0 in &[0.6, 1.5] {
        for &mu0 in &[0.3, 1.0, 2.0, 3.5, 5.5, 8.0, 12.0] {
            let specs = [
                ParamSpec::new("eta", "1/ns", eta0).bounded(1e-3, 100.0),
                ParamSpec::new("mu", "rad/ns", mu0).bounded(0.0, 200.0),
                ParamSpec::new("amplitude", "", level.max(1e-12)).bounded(0.0, f64::INFINITY),
                ParamSpec::new("background", "", bg_init).bounded(0.0, 1.0).fixed(bg_fixed),
                ParamSpec::new("irf_sigma", "ns", options.irf_sigma.max(if options.free_irf { 0.02 } else { 0.0 }))
                    .bounded(0.0, MAX_FREE_IRF_SIGMA.max(options.irf_sigma))
                    .fixed(!options.free_irf),
            ];
            match least_squares("g2_hbt", model, &data, &specs, &LmOptions::default()) {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|b| fit.residual_sum < b.residual_sum) {
                        best = Some(fit);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    let mut fit = match (best, last_err) {
        (Some(f), _) => f,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start is attempted"),
    };

    fit.curves.insert(
        "model".into(),
        Curve {
            x: data.x.clone(),
            y: model(&fit.values(), &data.x),
        },
    );
    let (_, coarse) = binned_convolved(&grid, fit.values()[SIGMA], |_| 0.0);
    if coarse {
        fit.flag(FitFlag::CoarseIrfGrid);
    }
    if hist.normalization().baseline_flagged {
        fit.flag(FitFlag::BaselineFlagged);
    }
    let (mu, dmu) = (fit.values()[MU], fit.parameters[MU].uncertainty);
    if mu < 2.0 * dmu {
        fit.flag(FitFlag::MuUpperBound);
        fit.derive("mu_upper_bound", mu + 2.0 * dmu, 0.0, "rad/ns");
    }
    let (g0, dg0) = propagate(&fit, |p| 1.0 - (1.0 - p[BACKGROUND]).powi(2));
    fit.derive("g2_zero", g0, dg0, "");
    if let Some(t2) = options.t2 {
        let solve = |p: &[f64]| {
            solve_t1_rabi_with(&RabiShape { eta: p[ETA], mu: p[MU] }, t2, options.convention)
        };
        match solve(&fit.values()) {
            Ok(_) => {
                let (t1, dt1) = propagate(&fit, |p| solve(p).map_or(f64::NAN, |v| v.0));
                let (om, dom) = propagate(&fit, |p| solve(p).map_or(f64::NAN, |v| v.1));
                fit.derive("t1", t1, finite_or_zero(dt1), "ns");
                fit.derive("rabi", om, finite_or_zero(dom), "rad/ns");
            }
            Err(e) => log::warn!("no (T1, Omega) for the fitted shape with T2 = {t2}: {e}"),
        }
    }
    Ok(fit)
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}
