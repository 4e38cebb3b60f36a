use serde::{Deserialize, Serialize};

use super::lm::{least_squares, Data, LmOptions, ParamSpec};
use super::result::{FitFlag, FitResult};
use crate::error::{Error, Result};

/// One measured quantity against excitation power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    /// One-sigma errors; unit weights when absent.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
}

/// Power sweep of linewidth (µeV), count rate and background (kcts/s).
/// Any of the three may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub power: Vec<f64>,
    #[serde(default)]
    pub linewidth: Option<Series>,
    #[serde(default)]
    pub counts: Option<Series>,
    #[serde(default)]
    pub background: Option<Series>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFitOptions {
    /// Fit linewidth and counts with one saturation power.
    pub shared_p_sat: bool,
    /// Degree of the background polynomial.
    pub background_degree: usize,
}

impl Default for PowerFitOptions {
    fn default() -> Self {
        Self {
            shared_p_sat: false,
            background_degree: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFits {
    pub linewidth: Option<FitResult>,
    pub counts: Option<FitResult>,
    pub background: Option<FitResult>,
    /// Linewidth and counts with a shared P_sat.
    pub joint: Option<FitResult>,
}

/// Below this fraction of P_sat the data only see the linear regime.
const SATURATION_REACH: f64 = 0.1;

fn data_for(power: &[f64], series: &Series) -> Result<Data> {
    if series.values.len() != power.len() {
        return Err(Error::Config("series length differs from the power axis".into()));
    }
    let sigma = series.sigma.clone().unwrap_or_else(|| vec![1.0; power.len()]);
    Data::new(power.to_vec(), series.values.clone(), sigma)
}

fn flag_saturation(fit: &mut FitResult, power: &[f64]) {
    let Some(p) = fit.parameter("p_sat").cloned() else { return };
    let pmax = power.iter().fold(0.0f64, |m, &x| m.max(x));
    if pmax < SATURATION_REACH * p.value || p.uncertainty > p.value {
        fit.flag(FitFlag::SaturationUnidentifiable);
        // the data only bound P_sat from below
        fit.derive("p_sat_bound", pmax / SATURATION_REACH, 0.0, &p.unit);
    }
}

/// Power-broadening, saturation and background fits.
pub fn fit_power_laws(sweep: &PowerSweep, options: &PowerFitOptions) -> Result<PowerFits> {
    let power = &sweep.power;
    if power.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Config("powers must be non-negative".into()));
    }
    let pmax = power.iter().fold(0.0f64, |m, &x| m.max(x));
    if pmax <= 0.0 {
        return Err(Error::Config("power axis has no positive entry".into()));
    }
    let lm = LmOptions::default();
    let p_sat0 = 0.5 * pmax;

    let linewidth_model = |p: &[f64], x: &[f64]| -> Vec<f64> {
        x.iter().map(|&x| p[0] * (1.0 + x / p[1]).sqrt()).collect()
    };
    let counts_model = |p: &[f64], x: &[f64]| -> Vec<f64> {
        x.iter().map(|&x| p[0] * (x / p[1]) / (1.0 + x / p[1])).collect()
    };

    let linewidth = match &sweep.linewidth {
        Some(s) => {
            let data = data_for(power, s)?;
            let g0 = s.values.iter().copied().fold(f64::INFINITY, f64::min).max(1e-9);
            let specs = [
                ParamSpec::new("gamma0", "ueV", g0).bounded(0.0, f64::INFINITY),
                ParamSpec::new("p_sat", "power", p_sat0).bounded(0.0, f64::INFINITY),
            ];
            let mut fit = least_squares("power_linewidth", linewidth_model, &data, &specs, &lm)?;
            flag_saturation(&mut fit, power);
            Some(fit)
        }
        None => None,
    };
    let counts = match &sweep.counts {
        Some(s) => {
            let data = data_for(power, s)?;
            let i0 = s.values.iter().copied().fold(0.0f64, f64::max).max(1e-9) * 1.5;
            let specs = [
                ParamSpec::new("i_sat", "kcts/s", i0).bounded(0.0, f64::INFINITY),
                ParamSpec::new("p_sat", "power", p_sat0).bounded(0.0, f64::INFINITY),
            ];
            let mut fit = least_squares("power_counts", counts_model, &data, &specs, &lm)?;
            flag_saturation(&mut fit, power);
            Some(fit)
        }
        None => None,
    };
    let background = match &sweep.background {
        Some(s) => {
            let data = data_for(power, s)?;
            let specs: Vec<ParamSpec> = (0..=options.background_degree)
                .map(|k| ParamSpec::new(&format!("c{k}"), "kcts/s", 0.0))
                .collect();
            Some(least_squares(
                "power_background",
                |p, x| x.iter().map(|&x| crate::model::polynomial_eval(p, x)).collect(),
                &data,
                &specs,
                &lm,
            )?)
        }
        None => None,
    };
    let joint = match (&sweep.linewidth, &sweep.counts, options.shared_p_sat) {
        (Some(lw), Some(ct), true) => {
            let n = power.len();
            let a = data_for(power, lw)?;
            let b = data_for(power, ct)?;
            // x encodes the series: power for linewidth, −1 − power for counts
            let x: Vec<f64> = power.iter().copied().chain(power.iter().map(|p| -1.0 - p)).collect();
            let data = Data::new(x, [a.y, b.y].concat(), [a.sigma, b.sigma].concat())?;
            let init = |f: &Option<FitResult>, name: &str, default: f64| {
                f.as_ref().and_then(|f| f.value(name)).unwrap_or(default)
            };
            let specs = [
                ParamSpec::new("gamma0", "ueV", init(&linewidth, "gamma0", 1.0)).bounded(0.0, f64::INFINITY),
                ParamSpec::new("i_sat", "kcts/s", init(&counts, "i_sat", 1.0)).bounded(0.0, f64::INFINITY),
                ParamSpec::new("p_sat", "power", init(&counts, "p_sat", p_sat0)).bounded(0.0, f64::INFINITY),
            ];
            let mut fit = least_squares(
                "power_joint",
                |p, x| {
                    x.iter()
                        .map(|&x| {
                            if x >= 0.0 {
                                p[0] * (1.0 + x / p[2]).sqrt()
                            } else {
                                let s = (-1.0 - x) / p[2];
                                p[1] * s / (1.0 + s)
                            }
                        })
                        .collect()
                },
                &data,
                &specs,
                &lm,
            )?;
            debug_assert_eq!(fit.points, 2 * n);
            flag_saturation(&mut fit, power);
            Some(fit)
        }
        _ => None,
    };
    Ok(PowerFits {
        linewidth,
        counts,
        background,
        joint,
    })
}

/// How the coherent-fraction curve 1/(1 + Ω²/γ) is parametrised when the
/// drive axis is a power P ∝ Ω².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "gamma", rename_all = "snake_case")]
pub enum CoherentFractionFit {
    /// Fit γ/k with Ω² = k·P.
    GammaOverK,
    /// γ is known; fit the scale k.
    KnownGamma(f64),
}

/// Lack-of-fit p-value below which the model is flagged.
const LACK_OF_FIT_P: f64 = 0.01;

/// Fits coherent amplitudes A(P) to 1/(1 + k·P/γ). The zero-drive value 1 is
/// built into the model.
pub fn fit_coherent_fraction(
    drive: &[f64],
    amplitude: &[f64],
    sigma: &[f64],
    mode: CoherentFractionFit,
) -> Result<FitResult> {
    if let Some(i) = amplitude.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Data {
            index: i,
            message: format!("coherent amplitude {} outside [0, 1]", amplitude[i]),
        });
    }
    let data = Data::new(drive.to_vec(), amplitude.to_vec(), sigma.to_vec())?;
    // start from the drive at which A crosses one half
    let half = drive
        .iter()
        .zip(amplitude)
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .map_or(1.0, |(&d, &a)| if a > 0.0 && a < 1.0 { d * a / (1.0 - a) } else { d.max(1e-9) });
    let mut fit = match mode {
        CoherentFractionFit::GammaOverK => least_squares(
            "coherent_fraction",
            |p, x| x.iter().map(|&x| 1.0 / (1.0 + x / p[0])).collect(),
            &data,
            &[ParamSpec::new("gamma_over_k", "power", half.max(1e-12)).bounded(0.0, f64::INFINITY)],
            &LmOptions::default(),
        )?,
        CoherentFractionFit::KnownGamma(gamma) => {
            if !(gamma > 0.0) {
                return Err(Error::Config("gamma must be positive".into()));
            }
            least_squares(
                "coherent_fraction",
                move |p, x| x.iter().map(|&x| 1.0 / (1.0 + p[0] * x / gamma)).collect(),
                &data,
                &[ParamSpec::new("k", "1/power", gamma / half.max(1e-12)).bounded(0.0, f64::INFINITY)],
                &LmOptions::default(),
            )?
        }
    };
    if fit.lack_of_fit_p_value() < LACK_OF_FIT_P {
        fit.flag(FitFlag::LackOfFit);
    }
    Ok(fit)
}
