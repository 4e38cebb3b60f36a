use serde::{Deserialize, Serialize};

use super::lm::{least_squares, Data, LmOptions, ParamSpec};
use super::result::{FitFlag, FitResult};
use crate::error::{Error, Result};
use crate::model::{michelson_visibility, MichelsonModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MichelsonFitMode {
    /// Elastic plus inelastic decay with τ₁ fixed at infinity. A known
    /// laser-breakthrough fraction f is removed first as V → (V − f)/(1 − f).
    Resonant {
        #[serde(default)]
        laser_breakthrough: Option<f64>,
    },
    /// Envelope times fine-structure beat. The line ratio is reported as the
    /// weaker line's share (≤ ½); the beat cannot tell the lines apart.
    NonResonant,
}

/// Fits first-order visibility data (delay in ns).
pub fn fit_michelson(
    delay: &[f64],
    visibility: &[f64],
    sigma: &[f64],
    mode: MichelsonFitMode,
) -> Result<FitResult> {
    if delay.len() != visibility.len() {
        return Err(Error::Config("delay and visibility lengths differ".into()));
    }
    match mode {
        MichelsonFitMode::Resonant { laser_breakthrough } => {
            fit_resonant(delay, visibility, sigma, laser_breakthrough)
        }
        MichelsonFitMode::NonResonant => fit_non_resonant(delay, visibility, sigma),
    }
}

fn fit_resonant(delay: &[f64], v: &[f64], sigma: &[f64], breakthrough: Option<f64>) -> Result<FitResult> {
    let f = breakthrough.unwrap_or(0.0);
    if !(0.0..1.0).contains(&f) {
        return Err(Error::Config(format!("laser breakthrough fraction {f} outside [0, 1)")));
    }
    let y: Vec<f64> = v.iter().map(|&v| (v - f) / (1.0 - f)).collect();
    let s: Vec<f64> = sigma.iter().map(|&s| s / (1.0 - f)).collect();
    let data = Data::new(delay.to_vec(), y, s)?;
    let model = |p: &[f64], x: &[f64]| {
        let m = MichelsonModel::resonant(p[0].clamp(0.0, 1.0), p[1].max(1e-9));
        x.iter()
            .map(|&t| michelson_visibility(t, &m).unwrap_or(f64::NAN))
            .collect::<Vec<_>>()
    };
    let tmax = delay.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let a0 = {
        let (i, _) = delay
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .ok_or_else(|| Error::Config("no visibility points".into()))?;
        data.y[i].clamp(0.01, 0.99)
    };
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for tau0 in [0.1, 0.3, 1.0, 3.0] {
        let specs = [
            ParamSpec::new("coherent_amplitude", "", a0).bounded(0.0, 1.0),
            ParamSpec::new("tau2", "ns", tau0).bounded(1e-4, 1e4),
        ];
        match least_squares("michelson_resonant", model, &data, &specs, &LmOptions::default()) {
            Ok(fit) if best.as_ref().is_none_or(|b| fit.residual_sum < b.residual_sum) => best = Some(fit),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let mut fit = best.ok_or_else(|| last_err.expect("a start was tried"))?;
    let (a, da) = (fit.values()[0], fit.parameters[0].uncertainty);
    let tau2 = fit.values()[1];
    if 1.0 - a <= (2.0 * da).max(1e-6) {
        fit.flag(FitFlag::Tau2Unidentifiable);
    }
    if tmax < 3.0 * tau2 {
        fit.flag(FitFlag::CoherentAmplitudeUnidentifiable);
    }
    if f > 0.0 {
        fit.flag(FitFlag::BreakthroughCorrected);
        fit.derive("laser_breakthrough", f, 0.0, "");
    }
    Ok(fit)
}

fn fit_non_resonant(delay: &[f64], v: &[f64], sigma: &[f64]) -> Result<FitResult> {
    let data = Data::new(delay.to_vec(), v.to_vec(), sigma.to_vec())?;
    let model = |p: &[f64], x: &[f64]| {
        let m = MichelsonModel::NonResonant {
            coherence_time: p[0].max(1e-9),
            fss: p[1].max(0.0),
            line_ratio: p[2].clamp(0.0, 1.0),
        };
        x.iter()
            .map(|&t| michelson_visibility(t, &m).unwrap_or(f64::NAN))
            .collect::<Vec<_>>()
    };
    // 1/e point of the upper envelope starts the coherence time
    let mut order: Vec<usize> = (0..delay.len()).collect();
    order.sort_by(|&a, &b| delay[a].abs().total_cmp(&delay[b].abs()));
    let tc0 = order
        .iter()
        .find(|&&i| v[i] < (-1.0f64).exp())
        .map_or(1.0, |&i| delay[i].abs().max(1e-3));
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for k in 0..60 {
        let fss0 = 2.0 + 2.0 * k as f64;
        for tc in [tc0, 2.0 * tc0] {
            let specs = [
                ParamSpec::new("coherence_time", "ns", tc).bounded(1e-4, 1e3),
                ParamSpec::new("fss", "ueV", fss0).bounded(0.0, 500.0),
                ParamSpec::new("line_ratio", "", 0.4).bounded(0.0, 0.5),
            ];
            match least_squares("michelson_non_resonant", model, &data, &specs, &LmOptions::default()) {
                Ok(fit) if best.as_ref().is_none_or(|b| fit.residual_sum < b.residual_sum) => {
                    best = Some(fit)
                }
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| last_err.expect("a start was tried"))
}
