use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::binned::{binned_convolved, histogram_data, BinGrid};
use super::lm::{least_squares, propagate, Data, LmOptions, ParamSpec};
use super::result::{Curve, FitFlag, FitResult};
use crate::correlator::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::model::{
    copol_normalization, HomCorrelationModel, Polarization, RabiShape, ScatteringMix, IDEAL_DIP_DEPTH,
};
use crate::par::map_indexed;
use crate::simulate::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub samples: usize,
    pub seed: u64,
}

/// Known quantities and fit choices for [`fit_hom_joint`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomFitOptions {
    /// Coherence time T₂ from an independent measurement, ns.
    pub t2: f64,
    /// Gaussian IRF σ, ns.
    pub irf_sigma: f64,
    /// Laser coherence time, ns; `None` means effectively infinite.
    #[serde(default)]
    pub laser_coherence_time: Option<f64>,
    pub transmission_short: f64,
    /// Long-arm transmission including any fibre loss.
    pub transmission_long: f64,
    /// Arm delay (start value, or the fixed value), ns.
    pub delay: f64,
    pub fix_delay: bool,
    /// Hold |α|² at this value (e.g. from a short-delay run).
    #[serde(default)]
    pub inelastic_fraction: Option<f64>,
    /// Only bins with |τ| ≤ this many ns enter the fit.
    #[serde(default)]
    pub fit_window: Option<f64>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapOptions>,
}

impl HomFitOptions {
    /// Balanced interferometer with the given delay and known T₂.
    pub fn balanced(delay: f64, t2: f64) -> Self {
        Self {
            t2,
            irf_sigma: 0.0,
            laser_coherence_time: None,
            transmission_short: 1.0,
            transmission_long: 1.0,
            delay,
            fix_delay: false,
            inelastic_fraction: None,
            fit_window: None,
            bootstrap: None,
        }
    }
}

const ETA: usize = 0;
const MU: usize = 1;
const DELAY: usize = 2;
const INELASTIC: usize = 3;
const OVERLAP: usize = 4;
const BACKGROUND: usize = 5;
const SCALE_CO: usize = 6;
const SCALE_CROSS: usize = 7;

struct JointModel {
    co: BinGrid,
    cross: BinGrid,
    options: HomFitOptions,
}

impl JointModel {
    fn correlation(&self, p: &[f64]) -> HomCorrelationModel {
        let inv_t1 = (2.0 * p[ETA] - 1.0 / self.options.t2).max(1e-6);
        let mix = ScatteringMix::new(
            p[INELASTIC].clamp(0.0, 1.0),
            self.options.laser_coherence_time.unwrap_or(f64::INFINITY),
        )
        .expect("clamped fraction");
        HomCorrelationModel {
            shape: RabiShape {
                eta: p[ETA],
                mu: p[MU].max(0.0),
            },
            inelastic_time: 1.0 / inv_t1,
            mix,
            delay: p[DELAY],
            transmission_short: self.options.transmission_short,
            transmission_long: self.options.transmission_long,
            overlap: p[OVERLAP].clamp(0.0, 1.0),
        }
    }

    /// Background-included, IRF-free correlation.
    fn level(&self, p: &[f64], tau: f64, pol: Polarization) -> f64 {
        let s2 = (1.0 - p[BACKGROUND]).powi(2);
        s2 * self.correlation(p).g2(tau, pol) + 1.0 - s2
    }

    fn histogram(&self, p: &[f64], pol: Polarization) -> Vec<f64> {
        let m = self.correlation(p);
        let (grid, scale) = match pol {
            Polarization::Co => (&self.co, p[SCALE_CO]),
            Polarization::Cross => (&self.cross, p[SCALE_CROSS]),
        };
        let s2 = (1.0 - p[BACKGROUND]).powi(2);
        let (g, _) = binned_convolved(grid, self.options.irf_sigma, |t| m.g2(t, pol));
        g.into_iter().map(|g| scale * (s2 * g + 1.0 - s2)).collect()
    }

    fn both(&self, p: &[f64]) -> Vec<f64> {
        let mut v = self.histogram(p, Polarization::Co);
        v.extend(self.histogram(p, Polarization::Cross));
        v
    }

    /// Side-dip depth relative to the neighbouring plateau.
    fn dip_depth(&self, p: &[f64], pol: Polarization) -> f64 {
        let d = p[DELAY];
        let reach = 8.0 / p[ETA];
        let left = (d - reach).max(0.5 * d);
        let plateau = 0.5 * (self.level(p, left, pol) + self.level(p, d + reach, pol));
        1.0 - self.level(p, d, pol) / plateau
    }

    fn visibility_grid(&self, p: &[f64]) -> Vec<f64> {
        let end = self.co.start + self.co.width * self.co.bins as f64;
        let half = (0.5 * p[DELAY]).min(self.co.start.abs().max(end.abs()));
        (0..=200).map(|k| -half + half * k as f64 / 100.0).collect()
    }

    fn visibility(&self, p: &[f64], tau: &[f64]) -> Vec<f64> {
        let m = self.correlation(p);
        tau.iter()
            .map(|&t| {
                let cross = m.g2(t, Polarization::Cross);
                if cross > 0.0 {
                    1.0 - m.g2(t, Polarization::Co) / cross
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn v_max(&self, p: &[f64]) -> f64 {
        let tau = self.visibility_grid(p);
        self.visibility(p, &tau).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn edge_level(y: &[f64]) -> f64 {
    let k = (y.len() / 10).max(1);
    let tail: Vec<f64> = y[..k].iter().chain(&y[y.len() - k..]).copied().collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Simultaneous fit of co- and cross-polarised HOM histograms sharing the
/// emitter shape (η, μ), arm delay and background.
///
/// Each histogram carries its own scale because the Poisson baseline of the
/// co-polarised data is depleted by interference. The visibility
/// V(τ) = 1 − g²_co/g²_cross is evaluated from the deconvolved,
/// background-free models; its maximum is `v_max`. Side-dip depths D and
/// D_cross come from the fitted, background-included models and feed the
/// co-polarisation normalization.
pub fn fit_hom_joint(
    co: &CorrelationHistogram,
    cross: &CorrelationHistogram,
    options: &HomFitOptions,
) -> Result<FitResult> {
    if co.bin_width() != cross.bin_width() {
        return Err(Error::Config("co and cross histograms must share their binning".into()));
    }
    if !(options.t2 > 0.0) || options.irf_sigma < 0.0 || !(options.delay > 0.0) {
        return Err(Error::Config("T2 and delay must be positive, IRF sigma non-negative".into()));
    }
    let (co_grid, co_y, co_s) = histogram_data(co, options.fit_window)?;
    let (cross_grid, cross_y, cross_s) = histogram_data(cross, options.fit_window)?;
    let model = JointModel {
        co: co_grid,
        cross: cross_grid,
        options: *options,
    };
    let n_co = co_y.len();
    let x: Vec<f64> = (0..n_co + cross_y.len()).map(|i| i as f64).collect();
    let data = Data::new(x, [co_y.clone(), cross_y.clone()].concat(), [co_s, cross_s].concat())?;
    let lm = LmOptions::default();
    let eta_floor = 0.5 / options.t2 + 1e-6;

    // Cross-polarised data alone pin the shape, delay and background.
    let cross_data = Data::new(
        (0..cross_y.len()).map(|i| i as f64).collect(),
        cross_y.clone(),
        data.sigma[n_co..].to_vec(),
    )?;
    let cross_model = |p: &[f64], _: &[f64]| model.histogram(p, Polarization::Cross);
    let x_fixed = options.inelastic_fraction;
    let mut seed: Option<FitResult> = None;
    for &eta0 in &[0.6f64, 1.5] {
        for &mu0 in &[0.5, 1.0, 2.0, 3.5, 5.5, 8.0] {
            let specs = specs(
                [eta0.max(eta_floor * 1.01), mu0, options.delay, x_fixed.unwrap_or(0.5), 0.8, 0.02, edge_level(&co_y), edge_level(&cross_y)],
                options,
                eta_floor,
                true,
            );
            if let Ok(fit) = least_squares("hom_cross", cross_model, &cross_data, &specs, &lm) {
                if seed.as_ref().is_none_or(|b| fit.residual_sum < b.residual_sum) {
                    seed = Some(fit);
                }
            }
        }
    }
    let seed = seed.ok_or_else(|| Error::Fit {
        model: "hom_joint".into(),
        message: "no start converged on the cross-polarised data".into(),
        iterations: 0,
        best: Vec::new(),
    })?;

    let joint = |p: &[f64], _: &[f64]| model.both(p);
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    let x_starts: &[f64] = if x_fixed.is_some() { &[f64::NAN] } else { &[0.3, 0.8] };
    for &x0 in x_starts {
        for o0 in [0.5, 0.9] {
            let mut init = seed.values();
            init[INELASTIC] = x_fixed.unwrap_or(x0);
            init[OVERLAP] = o0;
            init[SCALE_CO] = edge_level(&co_y);
            match least_squares("hom_joint", joint, &data, &specs(init.try_into().expect("8 parameters"), options, eta_floor, false), &lm) {
                Ok(fit) if best.as_ref().is_none_or(|b| fit.residual_sum < b.residual_sum) => best = Some(fit),
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
    }
    let mut fit = match (best, last_err) {
        (Some(f), _) => f,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start is attempted"),
    };
    annotate(&mut fit, &model, co, cross);

    if let Some(b) = options.bootstrap {
        let spread = bootstrap_v_max(&fit, &model, &data, n_co, co, cross, options, eta_floor, b);
        fit.derive("v_max_bootstrap", fit.value("v_max").unwrap_or(f64::NAN), spread, "");
    }
    Ok(fit)
}

fn specs(init: [f64; 8], options: &HomFitOptions, eta_floor: f64, cross_only: bool) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new("eta", "1/ns", init[ETA]).bounded(eta_floor, 100.0),
        ParamSpec::new("mu", "rad/ns", init[MU]).bounded(0.0, 200.0),
        ParamSpec::new("delay", "ns", init[DELAY])
            .bounded(0.5 * options.delay, 1.5 * options.delay)
            .fixed(options.fix_delay),
        ParamSpec::new("inelastic_fraction", "", init[INELASTIC])
            .bounded(0.0, 1.0)
            .fixed(cross_only || options.inelastic_fraction.is_some()),
        ParamSpec::new("overlap", "", init[OVERLAP]).bounded(0.0, 1.0).fixed(cross_only),
        ParamSpec::new("background", "", init[BACKGROUND]).bounded(0.0, 1.0),
        ParamSpec::new("scale_co", "", init[SCALE_CO].max(1e-9))
            .bounded(0.0, f64::INFINITY)
            .fixed(cross_only),
        ParamSpec::new("scale_cross", "", init[SCALE_CROSS].max(1e-9)).bounded(0.0, f64::INFINITY),
    ]
}

fn annotate(fit: &mut FitResult, model: &JointModel, co: &CorrelationHistogram, cross: &CorrelationHistogram) {
    if co.normalization().baseline_flagged || cross.normalization().baseline_flagged {
        fit.flag(FitFlag::BaselineFlagged);
    }
    let p = fit.values();
    let inv_t1 = 2.0 * p[ETA] - 1.0 / model.options.t2;
    let (t1, dt1) = propagate(fit, |q| 1.0 / (2.0 * q[ETA] - 1.0 / model.options.t2));
    if inv_t1 > 0.0 {
        fit.derive("t1", t1, dt1, "ns");
    }
    let (g0, dg0) = propagate(fit, |q| model.level(q, 0.0, Polarization::Cross));
    fit.derive("g2_cross_zero", g0, dg0, "");

    let (d, dd) = propagate(fit, |q| model.dip_depth(q, Polarization::Co));
    let (dc, ddc) = propagate(fit, |q| model.dip_depth(q, Polarization::Cross));
    fit.derive("d", d, dd, "");
    fit.derive("d_cross", dc, ddc, "");
    if d > dc + 2.0 * (dd * dd + ddc * ddc).sqrt() {
        fit.flag(FitFlag::InconsistentDipDepths);
    } else {
        let norm = |q: &[f64]| {
            let d = model.dip_depth(q, Polarization::Co);
            let dc = model.dip_depth(q, Polarization::Cross).min(IDEAL_DIP_DEPTH);
            copol_normalization(d.min(dc), dc)
        };
        match norm(&p) {
            Ok(_) => {
                let (x, dx) = propagate(fit, |q| norm(q).map_or(f64::NAN, |n| n.inelastic_fraction));
                let (n, dn) = propagate(fit, |q| norm(q).map_or(f64::NAN, |n| n.factor));
                fit.derive("inelastic_fraction_from_dips", x, finite(dx), "");
                fit.derive("normalization_factor", n, finite(dn), "");
            }
            Err(e) => log::warn!("co-polarised normalization unavailable: {e}"),
        }
    }

    for (name, grid, pol) in [
        ("model_co", &model.co, Polarization::Co),
        ("model_cross", &model.cross, Polarization::Cross),
    ] {
        fit.curves.insert(
            name.into(),
            Curve {
                x: grid.centers(),
                y: model.histogram(&p, pol),
            },
        );
    }
    let tau = model.visibility_grid(&p);
    let v = model.visibility(&p, &tau);
    fit.curves.insert("visibility".into(), Curve { x: tau, y: v });
    let (vmax, dvmax) = propagate(fit, |q| model.v_max(q));
    fit.derive("v_max", vmax, dvmax, "");
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Parametric bootstrap: Poisson-resample both histograms from the fitted
/// model, refit from the optimum and return the spread of V_max.
#[allow(clippy::too_many_arguments)]
fn bootstrap_v_max(
    fit: &FitResult,
    model: &JointModel,
    data: &Data,
    n_co: usize,
    co: &CorrelationHistogram,
    cross: &CorrelationHistogram,
    options: &HomFitOptions,
    eta_floor: f64,
    b: BootstrapOptions,
) -> f64 {
    let best = fit.values();
    let expected = model.both(&best);
    let scales = (co.normalization().scale, cross.normalization().scale);
    let specs = specs(best.clone().try_into().expect("8 parameters"), options, eta_floor, false);
    let samples: Vec<f64> = map_indexed(b.samples, |k| {
        let mut rng = crate::simulate::rng(derive_seed(b.seed, k as u64));
        let (y, sigma): (Vec<f64>, Vec<f64>) = expected
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let scale = if i < n_co { scales.0 } else { scales.1 };
                let mean = (m / scale).max(0.0);
                let c = if mean > 0.0 {
                    Poisson::new(mean).map_or(0.0, |p| p.sample(&mut rng))
                } else {
                    0.0
                };
                (c * scale, c.max(1.0).sqrt() * scale)
            })
            .unzip();
        let Ok(resampled) = Data::new(data.x.clone(), y, sigma) else {
            return f64::NAN;
        };
        least_squares("hom_joint", |p, _| model.both(p), &resampled, &specs, &LmOptions::default())
            .map_or(f64::NAN, |f| model.v_max(&f.values()))
    });
    let ok: Vec<f64> = samples.into_iter().filter(|v| v.is_finite()).collect();
    if ok.len() < 2 {
        return 0.0;
    }
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
}
